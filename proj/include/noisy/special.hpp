#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "noisy/core.hpp"

namespace noisy::special {

namespace detail {

// Continued fraction for the incomplete beta function, modified Lentz method.
inline double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 20000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h;
    }
    return h;
}

// x^a (1-x)^b / B(a, b), with 1 - x passed in separately to avoid cancellation.
inline double beta_prefactor(double a, double b, double x, double y) {
    return std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                    b * std::log(y));
}

// Returns {I_x(a, b), 1 - I_x(a, b)} where y = 1 - x.
inline std::pair<double, double> incomplete_beta_pair(double a, double b, double x, double y) {
    if (x <= 0.0) return {0.0, 1.0};
    if (y <= 0.0) return {1.0, 0.0};
    const double front = beta_prefactor(a, b, x, y);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        const double lower = front * beta_continued_fraction(a, b, x) / a;
        return {lower, 1.0 - lower};
    }
    const double upper = front * beta_continued_fraction(b, a, y) / b;
    return {1.0 - upper, upper};
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
inline double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw Error(Errc::InvalidArgument, "beta shape parameters must be positive");
    if (std::isnan(x)) return std::numeric_limits<double>::quiet_NaN();
    return detail::incomplete_beta_pair(a, b, x, 1.0 - x).first;
}

/// Complement 1 - I_x(a, b), evaluated without cancellation in the upper tail.
inline double incomplete_beta_complement(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw Error(Errc::InvalidArgument, "beta shape parameters must be positive");
    if (std::isnan(x)) return std::numeric_limits<double>::quiet_NaN();
    return detail::incomplete_beta_pair(a, b, x, 1.0 - x).second;
}

/// P(F <= x) for an F(d1, d2) variate.
inline double f_distribution_cdf(double x, double d1, double d2) {
    if (!(d1 > 0.0) || !(d2 > 0.0)) throw Error(Errc::InvalidArgument, "degrees of freedom must be positive");
    if (std::isinf(x) && x > 0.0) return 1.0;
    if (!(x > 0.0)) return 0.0;
    const double denom = d1 * x + d2;
    return detail::incomplete_beta_pair(d1 / 2.0, d2 / 2.0, d1 * x / denom, d2 / denom).first;
}

/// P(F > x); use this for p-values so tiny tails keep their precision.
inline double f_distribution_sf(double x, double d1, double d2) {
    if (!(d1 > 0.0) || !(d2 > 0.0)) throw Error(Errc::InvalidArgument, "degrees of freedom must be positive");
    if (std::isinf(x) && x > 0.0) return 0.0;
    if (!(x > 0.0)) return 1.0;
    const double denom = d1 * x + d2;
    return detail::incomplete_beta_pair(d1 / 2.0, d2 / 2.0, d1 * x / denom, d2 / denom).second;
}

}  // namespace noisy::special
