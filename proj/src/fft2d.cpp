#include "slabwave/fft2d.hpp"

#include <fftw3.h>

#include <cstring>
#include <mutex>
#include <stdexcept>

namespace slabwave::detail {

namespace {

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

int next_fast_size(int m) {
    for (int p = m;; ++p) {
        int q = p;
        while (q % 2 == 0) q /= 2;
        while (q % 3 == 0) q /= 3;
        while (q % 5 == 0) q /= 5;
        if (q == 1) return p;
    }
}

} // namespace

struct ConvolutionPlan::Impl {
    fftw_plan fwd = nullptr;
    fftw_plan bwd = nullptr;
    fftw_complex* work = nullptr;  // planning buffer
    std::vector<Cplx> kernel_fft;
};

ConvolutionPlan::ConvolutionPlan(int n) : n_(n), impl_(std::make_unique<Impl>()) {
    if (n < 1) throw std::invalid_argument("ConvolutionPlan: n must be >= 1");
    pad_ = next_fast_size(3 * n - 2);
    const size_t total = static_cast<size_t>(pad_) * pad_;
    impl_->work = fftw_alloc_complex(total);
    std::lock_guard<std::mutex> lock(planner_mutex());
    impl_->fwd = fftw_plan_dft_2d(pad_, pad_, impl_->work, impl_->work, FFTW_FORWARD, FFTW_ESTIMATE);
    impl_->bwd = fftw_plan_dft_2d(pad_, pad_, impl_->work, impl_->work, FFTW_BACKWARD, FFTW_ESTIMATE);
}

ConvolutionPlan::~ConvolutionPlan() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    if (impl_->fwd) fftw_destroy_plan(impl_->fwd);
    if (impl_->bwd) fftw_destroy_plan(impl_->bwd);
    if (impl_->work) fftw_free(impl_->work);
}

void ConvolutionPlan::set_kernel(const std::vector<Cplx>& kernel_diff) {
    const int kd = 2 * n_ - 1;
    if (static_cast<int>(kernel_diff.size()) != kd * kd)
        throw std::invalid_argument("ConvolutionPlan: kernel size mismatch");
    const size_t total = static_cast<size_t>(pad_) * pad_;
    fftw_complex* buf = fftw_alloc_complex(total);
    std::memset(buf, 0, total * sizeof(fftw_complex));
    for (int a = 0; a < kd; ++a) {
        for (int b = 0; b < kd; ++b) {
            const Cplx v = kernel_diff[static_cast<size_t>(a) * kd + b];
            buf[static_cast<size_t>(a) * pad_ + b][0] = v.real();
            buf[static_cast<size_t>(a) * pad_ + b][1] = v.imag();
        }
    }
    fftw_execute_dft(impl_->fwd, buf, buf);
    impl_->kernel_fft.resize(total);
    for (size_t i = 0; i < total; ++i) impl_->kernel_fft[i] = Cplx(buf[i][0], buf[i][1]);
    fftw_free(buf);
}

std::vector<Cplx> ConvolutionPlan::apply(const std::vector<Cplx>& src) const {
    if (static_cast<int>(src.size()) != n_ * n_)
        throw std::invalid_argument("ConvolutionPlan: source size mismatch");
    if (impl_->kernel_fft.empty())
        throw std::logic_error("ConvolutionPlan: set_kernel not called");
    const size_t total = static_cast<size_t>(pad_) * pad_;
    fftw_complex* buf = fftw_alloc_complex(total);
    std::memset(buf, 0, total * sizeof(fftw_complex));
    for (int a = 0; a < n_; ++a) {
        for (int b = 0; b < n_; ++b) {
            const Cplx v = src[static_cast<size_t>(a) * n_ + b];
            buf[static_cast<size_t>(a) * pad_ + b][0] = v.real();
            buf[static_cast<size_t>(a) * pad_ + b][1] = v.imag();
        }
    }
    fftw_execute_dft(impl_->fwd, buf, buf);
    const double scale = 1.0 / (static_cast<double>(pad_) * pad_);
    for (size_t i = 0; i < total; ++i) {
        const Cplx v = Cplx(buf[i][0], buf[i][1]) * impl_->kernel_fft[i] * scale;
        buf[i][0] = v.real();
        buf[i][1] = v.imag();
    }
    fftw_execute_dft(impl_->bwd, buf, buf);
    std::vector<Cplx> out(static_cast<size_t>(n_) * n_);
    for (int a = 0; a < n_; ++a) {
        for (int b = 0; b < n_; ++b) {
            const size_t ia = static_cast<size_t>(a + n_ - 1) * pad_ + (b + n_ - 1);
            out[static_cast<size_t>(a) * n_ + b] = Cplx(buf[ia][0], buf[ia][1]);
        }
    }
    fftw_free(buf);
    return out;
}

std::vector<Cplx> convolve2d(const std::vector<Cplx>& kernel_diff, int n,
                             const std::vector<Cplx>& src) {
    ConvolutionPlan plan(n);
    plan.set_kernel(kernel_diff);
    return plan.apply(src);
}

} // namespace slabwave::detail
