#include "slabwave/specfun.hpp"

#include <mpfr.h>

#include <cmath>
#include <vector>

#include "slabwave/errors.hpp"
#include "slabwave/quadrature.hpp"

namespace slabwave::specfun {

namespace {

constexpr double kEulerGamma = 0.57721566490153286060651209008240243104;

// Series/asymptotic switch. Below this radius the ascending series is
// summed (in double precision when cancellation is mild, in MPFR
// otherwise); beyond it the Hankel asymptotic expansion converges past
// 1e-12 relative. Validated by the overlap tests in the unit suite.
constexpr double kSeriesRadius = 14.0;
constexpr double kPlainSeriesRadius = 12.0;
constexpr double kPlainSeriesImMax = 0.5;

struct J0Y0 {
    Cplx j0;
    Cplx y0;
};

// Ascending series for J0 and Y0 (principal log), double precision.
J0Y0 j0y0_series_double(Cplx z) {
    const Cplx w = -0.25 * z * z;
    Cplx term(1.0, 0.0);
    Cplx j0(1.0, 0.0);
    Cplx s(0.0, 0.0); // sum of term_m * H_m; Y0 series carries -s
    double harmonic = 0.0;
    for (int m = 1; m <= 400; ++m) {
        term *= w / static_cast<double>(m * m);
        j0 += term;
        harmonic += 1.0 / m;
        s += term * harmonic;
        if (m > 6 && std::abs(term) < 1e-18 * (1.0 + std::abs(j0))) break;
    }
    const Cplx y0 = (2.0 / M_PI) * ((std::log(0.5 * z) + kEulerGamma) * j0 - s);
    return {j0, y0};
}

// RAII wrapper for a single mpfr value.
class Mp {
public:
    explicit Mp(mpfr_prec_t p) { mpfr_init2(v_, p); }
    ~Mp() { mpfr_clear(v_); }
    Mp(const Mp&) = delete;
    Mp& operator=(const Mp&) = delete;
    mpfr_t& get() { return v_; }

private:
    mpfr_t v_;
};

// H0^(1) via the ascending series summed in MPFR. Used where the
// J0 + iY0 combination cancels exponentially (Im z large) or where the
// alternating series itself sheds digits near the switch radius.
Cplx h0_series_mpfr(Cplx z) {
    const mpfr_prec_t prec =
        static_cast<mpfr_prec_t>(128 + 3.0 * std::max(0.0, z.imag()));
    const mpfr_rnd_t R = MPFR_RNDN;

    Mp wr(prec), wi(prec), tr(prec), ti(prec), j0r(prec), j0i(prec);
    Mp sr(prec), si(prec), harm(prec), t1(prec), t2(prec);

    // w = -z^2/4
    mpfr_set_d(t1.get(), z.real(), R);
    mpfr_set_d(t2.get(), z.imag(), R);
    mpfr_sqr(wr.get(), t1.get(), R);
    mpfr_sqr(wi.get(), t2.get(), R);
    mpfr_sub(wr.get(), wi.get(), wr.get(), R); // -(re^2 - im^2)
    mpfr_div_ui(wr.get(), wr.get(), 4, R);
    mpfr_mul(wi.get(), t1.get(), t2.get(), R);
    mpfr_mul_si(wi.get(), wi.get(), -2, R);
    mpfr_div_ui(wi.get(), wi.get(), 4, R);

    mpfr_set_ui(tr.get(), 1, R);
    mpfr_set_ui(ti.get(), 0, R);
    mpfr_set_ui(j0r.get(), 1, R);
    mpfr_set_ui(j0i.get(), 0, R);
    mpfr_set_ui(sr.get(), 0, R);
    mpfr_set_ui(si.get(), 0, R);
    mpfr_set_ui(harm.get(), 0, R);

    Mp nr(prec), ni(prec);
    for (unsigned m = 1; m <= 600; ++m) {
        // term *= w / m^2
        mpfr_mul(nr.get(), tr.get(), wr.get(), R);
        mpfr_mul(t1.get(), ti.get(), wi.get(), R);
        mpfr_sub(nr.get(), nr.get(), t1.get(), R);
        mpfr_mul(ni.get(), tr.get(), wi.get(), R);
        mpfr_mul(t1.get(), ti.get(), wr.get(), R);
        mpfr_add(ni.get(), ni.get(), t1.get(), R);
        mpfr_div_ui(nr.get(), nr.get(), m * m, R);
        mpfr_div_ui(ni.get(), ni.get(), m * m, R);
        mpfr_swap(tr.get(), nr.get());
        mpfr_swap(ti.get(), ni.get());

        mpfr_add(j0r.get(), j0r.get(), tr.get(), R);
        mpfr_add(j0i.get(), j0i.get(), ti.get(), R);

        mpfr_set_ui(t1.get(), 1, R);
        mpfr_div_ui(t1.get(), t1.get(), m, R);
        mpfr_add(harm.get(), harm.get(), t1.get(), R);

        mpfr_mul(t1.get(), tr.get(), harm.get(), R);
        mpfr_add(sr.get(), sr.get(), t1.get(), R);
        mpfr_mul(t1.get(), ti.get(), harm.get(), R);
        mpfr_add(si.get(), si.get(), t1.get(), R);

        if (m > 8) {
            const double tmag = std::abs(mpfr_get_d(tr.get(), R)) +
                                std::abs(mpfr_get_d(ti.get(), R));
            const double jmag = std::abs(mpfr_get_d(j0r.get(), R)) +
                                std::abs(mpfr_get_d(j0i.get(), R));
            if (tmag < 1e-36 * (1.0 + jmag)) break;
        }
    }

    // g = log(z/2) + gamma  (principal log)
    Mp gr(prec), gi(prec);
    mpfr_set_d(t1.get(), z.real(), R);
    mpfr_set_d(t2.get(), z.imag(), R);
    mpfr_sqr(gr.get(), t1.get(), R);
    mpfr_sqr(gi.get(), t2.get(), R);
    mpfr_add(gr.get(), gr.get(), gi.get(), R);
    mpfr_log(gr.get(), gr.get(), R);
    mpfr_div_ui(gr.get(), gr.get(), 2, R); // log|z|
    mpfr_const_log2(t1.get(), R);
    mpfr_sub(gr.get(), gr.get(), t1.get(), R); // log(|z|/2)
    mpfr_const_euler(t1.get(), R);
    mpfr_add(gr.get(), gr.get(), t1.get(), R);
    mpfr_set_d(t1.get(), z.real(), R);
    mpfr_set_d(t2.get(), z.imag(), R);
    mpfr_atan2(gi.get(), t2.get(), t1.get(), R); // arg z

    // y0 = (2/pi) * (g*j0 - s)
    Mp y0r(prec), y0i(prec), pi(prec);
    mpfr_mul(y0r.get(), gr.get(), j0r.get(), R);
    mpfr_mul(t1.get(), gi.get(), j0i.get(), R);
    mpfr_sub(y0r.get(), y0r.get(), t1.get(), R);
    mpfr_sub(y0r.get(), y0r.get(), sr.get(), R);
    mpfr_mul(y0i.get(), gr.get(), j0i.get(), R);
    mpfr_mul(t1.get(), gi.get(), j0r.get(), R);
    mpfr_add(y0i.get(), y0i.get(), t1.get(), R);
    mpfr_sub(y0i.get(), y0i.get(), si.get(), R);
    mpfr_const_pi(pi.get(), R);
    mpfr_div(y0r.get(), y0r.get(), pi.get(), R);
    mpfr_mul_ui(y0r.get(), y0r.get(), 2, R);
    mpfr_div(y0i.get(), y0i.get(), pi.get(), R);
    mpfr_mul_ui(y0i.get(), y0i.get(), 2, R);

    // h0 = j0 + i*y0
    mpfr_sub(t1.get(), j0r.get(), y0i.get(), R);
    mpfr_add(t2.get(), j0i.get(), y0r.get(), R);
    return {mpfr_get_d(t1.get(), R), mpfr_get_d(t2.get(), R)};
}

// Coefficients c_k = ((2k-1)!!)^2 / (k! 8^k) of the Hankel expansion.
// Summation truncates at the smallest term.
Cplx h0_asymptotic(Cplx z) {
    Cplx sum(1.0, 0.0);
    double ck = 1.0;
    double best = 1.0;
    Cplx zpow(1.0, 0.0);
    const Cplx iz_inv = 1.0 / z;
    for (int k = 1; k <= 60; ++k) {
        ck *= static_cast<double>((2 * k - 1) * (2 * k - 1)) / (8.0 * k);
        zpow *= Cplx(0.0, -1.0) * iz_inv;
        const Cplx t = ck * zpow;
        const double mag = std::abs(t);
        if (mag > best) break;
        best = mag;
        sum += t;
        if (mag < 1e-18) break;
    }
    return std::sqrt(2.0 / (M_PI * z)) * std::exp(Cplx(0.0, 1.0) * z - Cplx(0.0, M_PI / 4.0)) * sum;
}

// J0 for |z| large: half sum of both Hankel expansions. No cancellation:
// away from the real axis one exponential dominates, on it both are O(1).
Cplx j0_asymptotic(Cplx z) {
    Cplx s1(1.0, 0.0), s2(1.0, 0.0);
    double ck = 1.0;
    double best = 1.0;
    Cplx p1(1.0, 0.0), p2(1.0, 0.0);
    const Cplx z_inv = 1.0 / z;
    for (int k = 1; k <= 60; ++k) {
        ck *= static_cast<double>((2 * k - 1) * (2 * k - 1)) / (8.0 * k);
        p1 *= Cplx(0.0, -1.0) * z_inv;
        p2 *= Cplx(0.0, 1.0) * z_inv;
        const double mag = std::abs(p1) * ck;
        if (mag > best) break;
        best = mag;
        s1 += ck * p1;
        s2 += ck * p2;
        if (mag < 1e-18) break;
    }
    const Cplx pref = std::sqrt(2.0 / (M_PI * z));
    const Cplx phase = Cplx(0.0, 1.0) * z - Cplx(0.0, M_PI / 4.0);
    return 0.5 * pref * (std::exp(phase) * s1 + std::exp(-phase) * s2);
}

Cplx kernel_integral_raw(Cplx z, double tol) {
    // G ~ C e^{iz} \int_0^inf e^{-t} t^{-1/2} (t/2 - iz)^{-1/2} dt,
    // substituted t = e^s - 1 and integrated by tanh-sinh on (0, smax].
    const double smax = std::log(82.0); // e^{-t} < 1e-35 beyond
    auto f = [z](double s) -> Cplx {
        const double t = std::expm1(s);
        return std::exp(-t) * std::exp(s) / std::sqrt(t) *
               std::pow(Cplx(0.5 * t, 0.0) - Cplx(0.0, 1.0) * z, -0.5);
    };
    const QuadratureResult q = tanh_sinh(f, 0.0, smax, tol, 13);
    return std::exp(Cplx(0.0, 1.0) * z) * q.value;
}

const Cplx& integral_rep_calibration() {
    static const Cplx c = [] {
        const Cplx g = free_kernel_2d(Cplx(1.0, 0.0), 1.0);
        const Cplx raw = kernel_integral_raw(Cplx(1.0, 0.0), 1e-13);
        return g / raw;
    }();
    return c;
}

} // namespace

Cplx hankel0_first(Cplx z) {
    if (z == Cplx(0.0, 0.0)) {
        throw domain_error("hankel0_first: z = 0 is a logarithmic singularity");
    }
    const double az = std::abs(z);
    if (az <= kSeriesRadius) {
        if (az <= kPlainSeriesRadius && z.imag() <= kPlainSeriesImMax) {
            const J0Y0 v = j0y0_series_double(z);
            return v.j0 + Cplx(0.0, 1.0) * v.y0;
        }
        return h0_series_mpfr(z);
    }
    if (std::arg(z) > -M_PI / 2.0) {
        return h0_asymptotic(z);
    }
    // Lower-left quadrant: H0(z) = H0(-z) + 2 J0(-z) with -z in the
    // upper-right quadrant, where J0 carries the growing exponential.
    const Cplx w = -z;
    return h0_asymptotic(w) + 2.0 * j0_asymptotic(w);
}

Cplx free_kernel_2d(Cplx lambda, double r) {
    if (!(r > 0.0)) {
        throw domain_error("free_kernel_2d: separation r must be positive");
    }
    if (lambda == Cplx(0.0, 0.0)) {
        throw threshold_error("free_kernel_2d: lambda = 0 (resonance at origin)");
    }
    return Cplx(0.0, 0.25) * hankel0_first(lambda * r);
}

Cplx kernel_integral_rep(Cplx lambda, double r, double tol) {
    if (!(r > 0.0)) {
        throw domain_error("kernel_integral_rep: separation r must be positive");
    }
    if (lambda == Cplx(0.0, 0.0)) {
        throw threshold_error("kernel_integral_rep: lambda = 0 (resonance at origin)");
    }
    if (!(tol > 0.0)) {
        throw domain_error("kernel_integral_rep: tol must be positive");
    }
    return integral_rep_calibration() * kernel_integral_raw(lambda * r, tol);
}

KernelEval evaluate_kernel(Cplx lambda, double r, KernelPath path, double tol) {
    KernelEval e;
    e.lambda = lambda;
    e.r = r;
    e.path = path;
    const Cplx z = lambda * r;
    e.near_branch_cut = (z.real() < 0.0 && std::abs(z.imag()) < 0.05);
    const double az = std::abs(z);
    e.accuracy_loss = (az < 1e-6 || az > 1e4);
    e.value = (path == KernelPath::series) ? free_kernel_2d(lambda, r)
                                           : kernel_integral_rep(lambda, r, tol);
    return e;
}

} // namespace slabwave::specfun
