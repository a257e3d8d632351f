#pragma once

#include <complex>
#include <memory>
#include <vector>

namespace slabwave::detail {

using Cplx = std::complex<double>;

/// Linear 2D convolution machinery for an n x n source against a
/// (2n-1) x (2n-1) difference-lattice kernel:
///   out[i] = sum_j K[i - j + (n-1)] src[j]   (per axis).
/// Backed by FFTW with zero-padding to a 5-smooth size; the kernel
/// transform is cached so repeated applications cost two transforms.
class ConvolutionPlan {
public:
    explicit ConvolutionPlan(int n);
    ~ConvolutionPlan();
    ConvolutionPlan(const ConvolutionPlan&) = delete;
    ConvolutionPlan& operator=(const ConvolutionPlan&) = delete;

    void set_kernel(const std::vector<Cplx>& kernel_diff);
    std::vector<Cplx> apply(const std::vector<Cplx>& src) const;

    int size() const { return n_; }

private:
    int n_ = 0;
    int pad_ = 0;
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// One-shot convenience wrapper.
std::vector<Cplx> convolve2d(const std::vector<Cplx>& kernel_diff, int n,
                             const std::vector<Cplx>& src);

} // namespace slabwave::detail
