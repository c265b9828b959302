#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "noisy/core.hpp"
#include "noisy/linalg.hpp"

namespace noisy::stationarity {

/// Coarse p-value reported by the ADF test.
enum class PBand { Below001, Below005, Below010, AtLeast010 };

inline std::string_view to_string(PBand b) {
    switch (b) {
        case PBand::Below001: return "<0.01";
        case PBand::Below005: return "<0.05";
        case PBand::Below010: return "<0.10";
        case PBand::AtLeast010: return ">=0.10";
    }
    return "?";
}

struct AdfResult {
    double statistic = 0.0;
    std::size_t chosen_lag = 0;
    std::size_t max_lag = 0;
    std::size_t nobs = 0;  ///< rows in the final regression
    PBand p_band = PBand::AtLeast010;
    bool stationary = false;
    double critical_value = 0.0;  ///< at the configured alpha
};

struct CriticalValues {
    double pct1;
    double pct5;
    double pct10;
};

namespace detail {

struct CriticalRow {
    double n;
    CriticalValues cv;
};

// Constant-only Dickey-Fuller critical values (MacKinnon response surface),
// tabulated at finite n; the last entry is the asymptotic row.
inline constexpr std::array<CriticalRow, 5> kFiniteRows = {{
    {25.0, {-3.72386, -2.98649, -2.63280}},
    {50.0, {-3.56849, -2.92136, -2.59866}},
    {100.0, {-3.49750, -2.89091, -2.58243}},
    {250.0, {-3.45678, -2.87317, -2.57297}},
    {500.0, {-3.44350, -2.86734, -2.56986}},
}};
inline constexpr CriticalValues kAsymptotic = {-3.43035, -2.86154, -2.56677};

inline double lerp(double a, double b, double t) { return a + (b - a) * t; }

inline CriticalValues lerp(const CriticalValues& a, const CriticalValues& b, double t) {
    return {lerp(a.pct1, b.pct1, t), lerp(a.pct5, b.pct5, t), lerp(a.pct10, b.pct10, t)};
}

}  // namespace detail

/// Critical values for sample size n: linear in n inside the table, linear in
/// 1/n between the n = 500 row and the asymptote.
inline CriticalValues critical_values(std::size_t nobs) {
    const auto n = static_cast<double>(nobs);
    const auto& rows = detail::kFiniteRows;
    if (n <= rows.front().n) return rows.front().cv;
    if (n >= rows.back().n) {
        const double t = 1.0 - rows.back().n / n;
        return detail::lerp(rows.back().cv, detail::kAsymptotic, t);
    }
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (n <= rows[i].n) {
            const double t = (n - rows[i - 1].n) / (rows[i].n - rows[i - 1].n);
            return detail::lerp(rows[i - 1].cv, rows[i].cv, t);
        }
    }
    return rows.back().cv;
}

inline double critical_value_at(const CriticalValues& cv, double alpha) {
    if (std::abs(alpha - 0.01) < 1e-12) return cv.pct1;
    if (std::abs(alpha - 0.05) < 1e-12) return cv.pct5;
    if (std::abs(alpha - 0.10) < 1e-12) return cv.pct10;
    throw Error(Errc::InvalidArgument, "ADF alpha must be one of 0.01, 0.05, 0.10");
}

/// Schwert rule floor(12 * (n / 100)^(1/4)).
inline std::size_t schwert_max_lag(std::size_t n) {
    return static_cast<std::size_t>(std::floor(12.0 * std::pow(static_cast<double>(n) / 100.0, 0.25)));
}

struct AdfOptions {
    std::optional<std::size_t> max_lag;  ///< Schwert rule when empty
    double alpha = 0.05;
    /// Skip AIC search and use this many lagged differences.
    std::optional<std::size_t> fixed_lag;
};

namespace detail {

// Rows regress dy[t] on [1, y[t], dy[t-1], ..., dy[t-lags]] for t in [first, dy.size()).
inline void fill_adf_design(std::span<const double> y, std::span<const double> dy, std::size_t lags,
                            std::size_t first, Eigen::MatrixXd& x, Eigen::VectorXd& target) {
    const auto rows = static_cast<Eigen::Index>(dy.size() - first);
    x.resize(rows, static_cast<Eigen::Index>(lags + 2));
    target.resize(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const std::size_t t = first + static_cast<std::size_t>(r);
        target(r) = dy[t];
        x(r, 0) = 1.0;
        x(r, 1) = y[t];
        for (std::size_t i = 1; i <= lags; ++i) x(r, static_cast<Eigen::Index>(i + 1)) = dy[t - i];
    }
}

}  // namespace detail

/// Augmented Dickey-Fuller test with a constant and no trend. The lag order is
/// chosen by AIC on a common sample trimmed to max_lag; the statistic comes from
/// refitting the chosen order on all rows it can use.
inline AdfResult adf_test(std::span<const double> values, const AdfOptions& opts = {}) {
    const std::size_t n = values.size();
    if (n < 3) throw Error(Errc::InsufficientSamples, "ADF needs more samples");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (*hi - *lo <= 1e-12 * std::max(1.0, std::abs(*hi)))
        throw Error(Errc::ConstantSeries, "ADF input is constant");

    const std::size_t max_lag = opts.max_lag.value_or(schwert_max_lag(n));
    if (n < max_lag + 10) throw Error(Errc::InsufficientSamples, "ADF needs n >= max_lag + 10");
    critical_value_at(detail::kAsymptotic, opts.alpha);  // rejects unsupported alphas up front

    std::vector<double> dy(n - 1);
    for (std::size_t i = 1; i < n; ++i) dy[i - 1] = values[i] - values[i - 1];

    Eigen::MatrixXd x;
    Eigen::VectorXd target;
    std::size_t lag = 0;
    if (opts.fixed_lag) {
        lag = *opts.fixed_lag;
        if (lag > max_lag) throw Error(Errc::InvalidArgument, "fixed lag exceeds max_lag");
    } else {
        detail::fill_adf_design(values, dy, max_lag, max_lag, x, target);
        const auto rss = linalg::nested_rss(x, target);
        const auto n_eff = static_cast<double>(target.size());
        double best = 0.0;
        for (std::size_t k = 0; k <= max_lag; ++k) {
            const double aic = n_eff * std::log(rss[k + 1] / n_eff) + 2.0 * static_cast<double>(k + 2);
            if (k == 0 || aic < best) {
                best = aic;
                lag = k;
            }
        }
    }

    detail::fill_adf_design(values, dy, lag, lag, x, target);
    const auto fit = linalg::ols(x, target, /*with_stderr=*/true);

    AdfResult res;
    res.statistic = fit.t_value(1);
    res.chosen_lag = lag;
    res.max_lag = max_lag;
    res.nobs = fit.nobs;
    const auto cv = critical_values(fit.nobs);
    if (res.statistic < cv.pct1) res.p_band = PBand::Below001;
    else if (res.statistic < cv.pct5) res.p_band = PBand::Below005;
    else if (res.statistic < cv.pct10) res.p_band = PBand::Below010;
    else res.p_band = PBand::AtLeast010;
    res.critical_value = critical_value_at(cv, opts.alpha);
    res.stationary = res.statistic < res.critical_value;
    return res;
}

/// d-th order differences.
inline std::vector<double> difference(std::span<const double> v, int order) {
    std::vector<double> out(v.begin(), v.end());
    for (int k = 0; k < order; ++k) {
        if (out.size() < 2) return {};
        for (std::size_t i = 0; i + 1 < out.size(); ++i) out[i] = out[i + 1] - out[i];
        out.pop_back();
    }
    return out;
}

struct StationarizedSeries {
    SeriesKey key;
    PhaseLabel phase{};
    std::vector<double> source;  ///< undifferenced phase slice
    std::vector<double> values;
    int difference_order = 0;
    AdfResult adf;  ///< result for the returned order
    bool non_stationary_after_max_diff = false;
};

inline constexpr int kMaxDifferenceOrder = 2;

/// Differences until the ADF test rejects a unit root, up to second order.
inline StationarizedSeries stationarize(std::span<const double> values, const AdfOptions& opts = {}) {
    StationarizedSeries out;
    out.source.assign(values.begin(), values.end());
    std::vector<double> current = out.source;
    for (int order = 0; order <= kMaxDifferenceOrder; ++order) {
        AdfOptions o = opts;
        if (o.max_lag && current.size() < *o.max_lag + 10) o.max_lag.reset();
        out.adf = adf_test(current, o);
        out.difference_order = order;
        if (out.adf.stationary) {
            out.values = std::move(current);
            return out;
        }
        if (order < kMaxDifferenceOrder) current = difference(current, 1);
    }
    out.values = std::move(current);
    out.non_stationary_after_max_diff = true;
    return out;
}

inline StationarizedSeries stationarize(const MetricSeries& series, PhaseLabel phase,
                                        const AdfOptions& opts = {}, std::size_t leading_trim = 0) {
    auto out = stationarize(phase_values(series, phase, leading_trim), opts);
    out.key = series.key();
    out.phase = phase;
    return out;
}

}  // namespace noisy::stationarity
