#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "noisy/core.hpp"

namespace noisy::stats {

inline constexpr double kDefaultEpsilon = 1e-9;

// ---------------------------------------------------------------------------
// Impact quantification
// ---------------------------------------------------------------------------

struct PhaseStats {
    double mean = 0.0;
    double stddev = 0.0;  ///< sample standard deviation (n - 1 denominator)
    std::size_t n = 0;
};

inline double mean(std::span<const double> v) {
    if (v.empty()) throw Error(Errc::EmptyInput, "mean of empty range");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sample_stddev(std::span<const double> v) {
    if (v.size() < 2) throw Error(Errc::TooFewSamples, "standard deviation needs n >= 2");
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline PhaseStats phase_stats(std::span<const double> values) {
    if (values.size() < 2)
        throw Error(Errc::TooFewSamples, "phase statistics need at least two samples");
    return {mean(values), sample_stddev(values), values.size()};
}

inline PhaseStats phase_stats(const MetricSeries& series, PhaseLabel phase,
                              std::size_t leading_trim = 0) {
    const auto v = phase_values(series, phase, leading_trim);
    return phase_stats(v);
}

/// 100 * (noise - baseline) / baseline, on phase means.
inline double pct_change(const PhaseStats& baseline, const PhaseStats& noise,
                         double epsilon = kDefaultEpsilon) {
    if (std::abs(baseline.mean) <= epsilon)
        throw Error(Errc::DegenerateBaseline, "baseline mean is ~0");
    return 100.0 * (noise.mean - baseline.mean) / baseline.mean;
}

/// Standardized mean difference with the pooled deviation sqrt((sb^2 + sn^2) / 2).
inline double cohens_d(const PhaseStats& baseline, const PhaseStats& noise) {
    const double pooled =
        std::sqrt((baseline.stddev * baseline.stddev + noise.stddev * noise.stddev) / 2.0);
    if (!(pooled > 0.0)) throw Error(Errc::ZeroVariance, "both phases have zero variance");
    return (noise.mean - baseline.mean) / pooled;
}

/// 100 * sample-std / |mean|. Absolute mean keeps CV positive for negative impacts.
inline double coefficient_of_variation(std::span<const double> values,
                                       double epsilon = kDefaultEpsilon) {
    if (values.size() < 2) throw Error(Errc::TooFewSamples, "CV needs n >= 2");
    const double m = mean(values);
    if (std::abs(m) <= epsilon) throw Error(Errc::DegenerateMean, "mean is ~0");
    return 100.0 * sample_stddev(values) / std::abs(m);
}

struct ImpactRecord {
    SeriesKey key;
    PhaseLabel phase{};
    PhaseStats baseline;
    PhaseStats noise;
    double pct_change = 0.0;
    /// Absent when both phases are constant.
    std::optional<double> cohens_d;
};

inline ImpactRecord impact(const MetricSeries& series, PhaseLabel phase,
                           PhaseLabel reference = PhaseLabel::Baseline,
                           std::size_t leading_trim = 0) {
    ImpactRecord rec;
    rec.key = series.key();
    rec.phase = phase;
    rec.baseline = phase_stats(series, reference, leading_trim);
    rec.noise = phase_stats(series, phase, leading_trim);
    rec.pct_change = pct_change(rec.baseline, rec.noise);
    try {
        rec.cohens_d = cohens_d(rec.baseline, rec.noise);
    } catch (const Error& e) {
        if (e.code() != Errc::ZeroVariance) throw;
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Distributional analysis
// ---------------------------------------------------------------------------

/// Right-continuous empirical CDF.
class EcdfCurve {
public:
    explicit EcdfCurve(std::span<const double> values) : sorted_(values.begin(), values.end()) {
        if (sorted_.empty()) throw Error(Errc::EmptyInput, "ECDF of an empty sample");
        for (double v : sorted_)
            if (!std::isfinite(v)) throw Error(Errc::InvalidArgument, "ECDF input must be finite");
        std::sort(sorted_.begin(), sorted_.end());
    }

    [[nodiscard]] double operator()(double x) const {
        const auto count = std::upper_bound(sorted_.begin(), sorted_.end(), x) - sorted_.begin();
        return static_cast<double>(count) / static_cast<double>(sorted_.size());
    }

    /// Nearest-rank quantile: the smallest sample with F(x) >= p.
    [[nodiscard]] double quantile(double p) const {
        if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::InvalidArgument, "quantile level outside [0, 1]");
        const auto n = static_cast<double>(sorted_.size());
        auto rank = static_cast<std::size_t>(std::ceil(p * n - 1e-12));
        rank = std::clamp<std::size_t>(rank, 1, sorted_.size());
        return sorted_[rank - 1];
    }

    [[nodiscard]] double median() const { return quantile(0.5); }
    [[nodiscard]] const std::vector<double>& sorted_values() const noexcept { return sorted_; }
    [[nodiscard]] std::size_t size() const noexcept { return sorted_.size(); }

    /// Step corners (x, F(x)) at each distinct sample value, for plotting.
    [[nodiscard]] std::vector<std::pair<double, double>> points() const {
        std::vector<std::pair<double, double>> out;
        const auto n = static_cast<double>(sorted_.size());
        for (std::size_t i = 0; i < sorted_.size(); ++i) {
            if (i + 1 < sorted_.size() && sorted_[i + 1] == sorted_[i]) continue;
            out.emplace_back(sorted_[i], static_cast<double>(i + 1) / n);
        }
        return out;
    }

private:
    std::vector<double> sorted_;
};

inline EcdfCurve ecdf(std::span<const double> values) { return EcdfCurve(values); }

struct SignatureFeatures {
    double median_shift = 0.0;    ///< percent
    double tail_flatness = 1.0;   ///< degraded P95 / baseline P95
    double step_height = 0.0;     ///< centre of the densest histogram bin of the degraded sample
    double step_sharpness = 0.0;  ///< probability mass in that bin
};

inline constexpr std::size_t kStepBins = 100;

inline SignatureFeatures signature_features(const EcdfCurve& baseline, const EcdfCurve& degraded,
                                            double epsilon = kDefaultEpsilon) {
    const double mb = baseline.median();
    if (mb <= epsilon) throw Error(Errc::DegenerateBaseline, "baseline median <= epsilon");
    const double p95b = baseline.quantile(0.95);
    if (p95b <= epsilon) throw Error(Errc::DegenerateBaseline, "baseline P95 <= epsilon");

    SignatureFeatures f;
    f.median_shift = 100.0 * (degraded.median() - mb) / mb;
    f.tail_flatness = degraded.quantile(0.95) / p95b;

    const auto& v = degraded.sorted_values();
    const double lo = v.front();
    const double width = (v.back() - lo) / static_cast<double>(kStepBins);
    if (!(width > 0.0)) {
        f.step_height = lo;
        f.step_sharpness = 1.0;
        return f;
    }
    std::vector<std::size_t> counts(kStepBins, 0);
    for (double x : v) {
        auto bin = static_cast<std::size_t>((x - lo) / width);
        ++counts[std::min(bin, kStepBins - 1)];
    }
    const auto best = static_cast<std::size_t>(
        std::max_element(counts.begin(), counts.end()) - counts.begin());
    f.step_height = lo + (static_cast<double>(best) + 0.5) * width;
    f.step_sharpness = static_cast<double>(counts[best]) / static_cast<double>(v.size());
    return f;
}

enum class SignatureClass { UniformShift, TailFlattening, StepSaturation, NoDegradation };

inline std::string_view to_string(SignatureClass c) {
    switch (c) {
        case SignatureClass::UniformShift: return "UniformShift";
        case SignatureClass::TailFlattening: return "TailFlattening";
        case SignatureClass::StepSaturation: return "StepSaturation";
        case SignatureClass::NoDegradation: return "NoDegradation";
    }
    return "?";
}

struct SignatureThresholds {
    double step_sharpness = 0.35;
    double tail_flatness = 0.6;
    double tail_median_limit = 40.0;  ///< |median shift| must stay below this for TailFlattening
    double shift = -15.0;
};

/// Rules are checked in order: step, tail, shift.
inline SignatureClass signature_classify(const SignatureFeatures& f,
                                         const SignatureThresholds& t = {}) {
    if (f.step_sharpness >= t.step_sharpness) return SignatureClass::StepSaturation;
    if (f.tail_flatness <= t.tail_flatness && std::abs(f.median_shift) < t.tail_median_limit)
        return SignatureClass::TailFlattening;
    if (f.median_shift <= t.shift) return SignatureClass::UniformShift;
    return SignatureClass::NoDegradation;
}

// ---------------------------------------------------------------------------
// Coupling index
// ---------------------------------------------------------------------------

inline std::vector<double> first_difference(std::span<const double> v) {
    std::vector<double> d;
    if (v.size() < 2) return d;
    d.reserve(v.size() - 1);
    for (std::size_t i = 1; i < v.size(); ++i) d.push_back(v[i] - v[i - 1]);
    return d;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2)
        throw Error(Errc::InvalidArgument, "correlation needs two equal-length samples");
    const double ma = mean(a);
    const double mb = mean(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (!(saa > 0.0) || !(sbb > 0.0)) throw Error(Errc::ConstantSeries, "zero-variance input");
    return sab / std::sqrt(saa * sbb);
}

/// |corr| of the first differences; lies in [0, 1].
inline double coupling_value(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error(Errc::InvalidArgument, "slices are not index-aligned");
    if (a.size() < 3) throw Error(Errc::TooFewSamples, "coupling index needs n >= 3");
    const auto da = first_difference(a);
    const auto db = first_difference(b);
    return std::clamp(std::abs(pearson(da, db)), 0.0, 1.0);
}

struct CouplingIndex {
    TenantId tenant_a;
    TenantId tenant_b;
    MetricKind metric{};
    PhaseLabel phase{};
    double value = 0.0;
};

inline CouplingIndex coupling_index(const MetricSeries& a, const MetricSeries& b, PhaseLabel phase,
                                    std::size_t leading_trim = 0) {
    if (a.metric() != b.metric())
        throw Error(Errc::InvalidArgument, "coupling index compares one metric across tenants");
    const auto va = phase_values(a, phase, leading_trim);
    const auto vb = phase_values(b, phase, leading_trim);
    return {a.tenant(), b.tenant(), a.metric(), phase, coupling_value(va, vb)};
}

}  // namespace noisy::stats
