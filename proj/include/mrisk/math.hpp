#pragma once

// Small numeric kernel: standard normal pdf/cdf, inverse normal cdf,
// Black formulas on (forward, total variance). Nothing here depends on the
// rest of the library.

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mrisk {

inline double norm_pdf(double x) {
    static const double inv_sqrt_2pi = 0.3989422804014326779;
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline double norm_cdf(double x) {
    static const double inv_sqrt_2 = 0.7071067811865475244;
    return 0.5 * std::erfc(-x * inv_sqrt_2);
}

// Inverse standard normal cdf: rational approximation (Acklam's
// coefficients) polished with one Newton step against erfc, giving close to
// full double precision. Deterministic: consumes exactly one uniform.
inline double norm_inv_cdf(double u) {
    if (!(u > 0.0 && u < 1.0))
        throw std::domain_error("norm_inv_cdf: argument must lie in (0,1)");

    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};

    const double plow = 0.02425;
    double x;
    if (u < plow) {
        double q = std::sqrt(-2.0 * std::log(u));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (u <= 1.0 - plow) {
        double q = u - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log1p(-u));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // One Newton step: x -= (Phi(x) - u) / phi(x).
    double e = norm_cdf(x) - u;
    double p = norm_pdf(x);
    if (p > 0.0) x -= e / p;
    return x;
}

// Undiscounted Black call on forward F, strike K, total variance w = sigma^2 T.
inline double black_call_undisc(double fwd, double strike, double total_var) {
    if (fwd <= 0.0 || strike <= 0.0)
        throw std::domain_error("black_call_undisc: forward and strike must be positive");
    if (total_var <= 0.0) return fwd > strike ? fwd - strike : 0.0;
    double s = std::sqrt(total_var);
    double d1 = std::log(fwd / strike) / s + 0.5 * s;
    double d2 = d1 - s;
    return fwd * norm_cdf(d1) - strike * norm_cdf(d2);
}

inline double black_put_undisc(double fwd, double strike, double total_var) {
    // Put-call parity on forwards.
    return black_call_undisc(fwd, strike, total_var) - fwd + strike;
}

// Cash-or-nothing (pays 1 when S_T < K) on forward terms, undiscounted.
inline double black_digital_put_undisc(double fwd, double strike, double total_var) {
    if (fwd <= 0.0 || strike <= 0.0)
        throw std::domain_error("black_digital_put_undisc: forward and strike must be positive");
    if (total_var <= 0.0) return fwd < strike ? 1.0 : 0.0;
    double s = std::sqrt(total_var);
    double d2 = std::log(fwd / strike) / s - 0.5 * s;
    return norm_cdf(-d2);
}

} // namespace mrisk
