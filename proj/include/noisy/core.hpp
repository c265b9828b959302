#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <limits>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace noisy {

/// Failure classes raised by the library. Every throw site uses noisy::Error.
enum class Errc {
    InvalidArgument,
    InvalidSeries,
    PhaseAbsent,
    NonContiguousPhase,
    EmptyIntersection,
    MalformedRow,
    UnknownMetricKind,
    NonUniformTimestep,
    MissingSeries,
    UnmappableSeries,
    TooFewSamples,
    DegenerateBaseline,
    ZeroVariance,
    DegenerateMean,
    EmptyInput,
    ConstantSeries,
    SingularRegression,
    InsufficientSamples,
    EmptyBaselineGraph,
    InfeasibleImpact,
    Io,
};

inline std::string_view to_string(Errc code) {
    switch (code) {
        case Errc::InvalidArgument: return "InvalidArgument";
        case Errc::InvalidSeries: return "InvalidSeries";
        case Errc::PhaseAbsent: return "PhaseAbsent";
        case Errc::NonContiguousPhase: return "NonContiguousPhase";
        case Errc::EmptyIntersection: return "EmptyIntersection";
        case Errc::MalformedRow: return "MalformedRow";
        case Errc::UnknownMetricKind: return "UnknownMetricKind";
        case Errc::NonUniformTimestep: return "NonUniformTimestep";
        case Errc::MissingSeries: return "MissingSeries";
        case Errc::UnmappableSeries: return "UnmappableSeries";
        case Errc::TooFewSamples: return "TooFewSamples";
        case Errc::DegenerateBaseline: return "DegenerateBaseline";
        case Errc::ZeroVariance: return "ZeroVariance";
        case Errc::DegenerateMean: return "DegenerateMean";
        case Errc::EmptyInput: return "EmptyInput";
        case Errc::ConstantSeries: return "ConstantSeries";
        case Errc::SingularRegression: return "SingularRegression";
        case Errc::InsufficientSamples: return "InsufficientSamples";
        case Errc::EmptyBaselineGraph: return "EmptyBaselineGraph";
        case Errc::InfeasibleImpact: return "InfeasibleImpact";
        case Errc::Io: return "Io";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

    [[nodiscard]] Errc code() const noexcept { return code_; }
    /// Message without the error-class prefix.
    [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

private:
    Errc code_;
    std::string detail_;
};

// ---------------------------------------------------------------------------
// Identifiers
// ---------------------------------------------------------------------------

struct TenantId {
    std::string name;

    TenantId() = default;
    explicit TenantId(std::string n) : name(std::move(n)) {
        if (name.empty()) throw Error(Errc::InvalidArgument, "tenant id must be non-empty");
    }

    auto operator<=>(const TenantId&) const = default;
};

enum class MetricKind { CpuUsage, MemoryWorkingSet, DiskIoBytes, NetworkThroughput };

inline constexpr std::array<MetricKind, 4> kAllMetrics = {
    MetricKind::CpuUsage, MetricKind::MemoryWorkingSet, MetricKind::DiskIoBytes,
    MetricKind::NetworkThroughput};

/// Short code used in the CSV interchange format.
inline std::string_view metric_code(MetricKind m) {
    switch (m) {
        case MetricKind::CpuUsage: return "cpu";
        case MetricKind::MemoryWorkingSet: return "mem";
        case MetricKind::DiskIoBytes: return "dsk";
        case MetricKind::NetworkThroughput: return "ntk";
    }
    return "?";
}

inline std::optional<MetricKind> parse_metric_code(std::string_view code) {
    for (auto m : kAllMetrics)
        if (metric_code(m) == code) return m;
    return std::nullopt;
}

enum class PhaseLabel {
    Baseline,
    CpuNoise,
    MemoryNoise,
    NetworkNoise,
    DiskNoise,
    CombinedNoise,
    Recovery
};

inline constexpr std::array<PhaseLabel, 7> kAllPhases = {
    PhaseLabel::Baseline,     PhaseLabel::CpuNoise,  PhaseLabel::MemoryNoise,
    PhaseLabel::NetworkNoise, PhaseLabel::DiskNoise, PhaseLabel::CombinedNoise,
    PhaseLabel::Recovery};

inline std::string_view phase_name(PhaseLabel p) {
    switch (p) {
        case PhaseLabel::Baseline: return "Baseline";
        case PhaseLabel::CpuNoise: return "CpuNoise";
        case PhaseLabel::MemoryNoise: return "MemoryNoise";
        case PhaseLabel::NetworkNoise: return "NetworkNoise";
        case PhaseLabel::DiskNoise: return "DiskNoise";
        case PhaseLabel::CombinedNoise: return "CombinedNoise";
        case PhaseLabel::Recovery: return "Recovery";
    }
    return "?";
}

inline std::optional<PhaseLabel> parse_phase_name(std::string_view name) {
    for (auto p : kAllPhases)
        if (phase_name(p) == name) return p;
    return std::nullopt;
}

/// A graph node: one tenant's metric.
struct SeriesKey {
    TenantId tenant;
    MetricKind metric{};

    auto operator<=>(const SeriesKey&) const = default;
};

inline std::string to_string(const SeriesKey& k) {
    return k.tenant.name + "/" + std::string(metric_code(k.metric));
}

// ---------------------------------------------------------------------------
// MetricSeries
// ---------------------------------------------------------------------------

/// One tenant x metric trace sampled on a uniform grid with per-sample phase labels.
class MetricSeries {
public:
    static constexpr double kStepTolerance = 1e-6;

    MetricSeries(TenantId tenant, MetricKind metric, std::vector<double> timestamps,
                 std::vector<double> values, std::vector<PhaseLabel> phases)
        : tenant_(std::move(tenant)),
          metric_(metric),
          timestamps_(std::move(timestamps)),
          values_(std::move(values)),
          phases_(std::move(phases)) {
        validate();
    }

    [[nodiscard]] const TenantId& tenant() const noexcept { return tenant_; }
    [[nodiscard]] MetricKind metric() const noexcept { return metric_; }
    [[nodiscard]] SeriesKey key() const { return {tenant_, metric_}; }
    [[nodiscard]] const std::vector<double>& timestamps() const noexcept { return timestamps_; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }
    [[nodiscard]] const std::vector<PhaseLabel>& phases() const noexcept { return phases_; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    /// Sampling step in seconds; 0 for a single-sample series.
    [[nodiscard]] double step() const noexcept { return step_; }

    bool operator==(const MetricSeries&) const = default;

private:
    void validate() {
        const auto n = values_.size();
        if (n == 0) throw Error(Errc::InvalidSeries, "series must contain at least one sample");
        if (timestamps_.size() != n || phases_.size() != n)
            throw Error(Errc::InvalidSeries, "timestamps, values and phases differ in length");
        for (double v : values_)
            if (!std::isfinite(v)) throw Error(Errc::InvalidSeries, "non-finite value");
        if (n >= 2) {
            step_ = timestamps_[1] - timestamps_[0];
            if (!(step_ > 0.0))
                throw Error(Errc::NonUniformTimestep, "timestamps must be strictly increasing");
            for (std::size_t i = 2; i < n; ++i) {
                const double d = timestamps_[i] - timestamps_[i - 1];
                if (std::abs(d - step_) > kStepTolerance * std::max(1.0, step_))
                    throw Error(Errc::NonUniformTimestep,
                                "gap at index " + std::to_string(i) + " for " +
                                    to_string(SeriesKey{tenant_, metric_}));
            }
        }
    }

    TenantId tenant_;
    MetricKind metric_;
    std::vector<double> timestamps_;
    std::vector<double> values_;
    std::vector<PhaseLabel> phases_;
    double step_ = 0.0;
};

// ---------------------------------------------------------------------------
// Phase schedule and rounds
// ---------------------------------------------------------------------------

struct PhaseSpan {
    PhaseLabel label{};
    double duration_s = 0.0;

    bool operator==(const PhaseSpan&) const = default;
};

class PhaseSchedule {
public:
    PhaseSchedule() = default;
    explicit PhaseSchedule(std::vector<PhaseSpan> spans) : spans_(std::move(spans)) {
        std::set<PhaseLabel> seen;
        for (const auto& s : spans_) {
            if (!(s.duration_s > 0.0))
                throw Error(Errc::InvalidArgument, "phase durations must be positive");
            if (!seen.insert(s.label).second)
                throw Error(Errc::InvalidArgument, "phase labels must be unique");
        }
    }

    /// Seven phases of 1000 s each, in experiment order.
    static PhaseSchedule standard(double phase_seconds = 1000.0) {
        std::vector<PhaseSpan> spans;
        for (auto p : kAllPhases) spans.push_back({p, phase_seconds});
        return PhaseSchedule(std::move(spans));
    }

    [[nodiscard]] const std::vector<PhaseSpan>& spans() const noexcept { return spans_; }
    [[nodiscard]] double total_seconds() const {
        double t = 0.0;
        for (const auto& s : spans_) t += s.duration_s;
        return t;
    }

    /// Phase covering `offset_s` seconds after the first sample; nullopt past the end.
    [[nodiscard]] std::optional<PhaseLabel> phase_at(double offset_s) const {
        double start = 0.0;
        for (const auto& s : spans_) {
            // Tolerance keeps a sample that lands on a boundary in the later phase.
            if (offset_s < start + s.duration_s - 1e-9) return s.label;
            start += s.duration_s;
        }
        return std::nullopt;
    }

    bool operator==(const PhaseSchedule&) const = default;

private:
    std::vector<PhaseSpan> spans_;
};

/// One experiment repetition: every (tenant, metric) series on a shared time grid.
class ExperimentRound {
public:
    ExperimentRound(int round_id, std::vector<MetricSeries> series, PhaseSchedule schedule)
        : round_id_(round_id), series_(std::move(series)), schedule_(std::move(schedule)) {
        if (round_id_ < 1) throw Error(Errc::InvalidArgument, "round_id must be >= 1");
        if (series_.empty()) throw Error(Errc::InvalidArgument, "round has no series");
        std::sort(series_.begin(), series_.end(),
                  [](const MetricSeries& a, const MetricSeries& b) { return a.key() < b.key(); });
        for (std::size_t i = 0; i < series_.size(); ++i) {
            if (i > 0 && series_[i].key() == series_[i - 1].key())
                throw Error(Errc::InvalidArgument,
                            "duplicate series " + to_string(series_[i].key()));
            if (series_[i].timestamps() != series_[0].timestamps() ||
                series_[i].phases() != series_[0].phases())
                throw Error(Errc::InvalidSeries, "series " + to_string(series_[i].key()) +
                                                     " is not aligned with the round grid");
        }
    }

    [[nodiscard]] int round_id() const noexcept { return round_id_; }
    [[nodiscard]] const std::vector<MetricSeries>& series() const noexcept { return series_; }
    [[nodiscard]] const PhaseSchedule& schedule() const noexcept { return schedule_; }

    [[nodiscard]] const MetricSeries* find(const SeriesKey& key) const {
        auto it = std::lower_bound(series_.begin(), series_.end(), key,
                                   [](const MetricSeries& s, const SeriesKey& k) { return s.key() < k; });
        return (it != series_.end() && it->key() == key) ? &*it : nullptr;
    }

    [[nodiscard]] const MetricSeries& at(const SeriesKey& key) const {
        if (const auto* s = find(key)) return *s;
        throw Error(Errc::MissingSeries, to_string(key));
    }

    [[nodiscard]] std::vector<TenantId> tenants() const {
        std::vector<TenantId> out;
        for (const auto& s : series_)
            if (out.empty() || out.back() != s.tenant()) out.push_back(s.tenant());
        return out;
    }

    /// Phases present in the round, in order of first appearance.
    [[nodiscard]] std::vector<PhaseLabel> phases_present() const {
        std::vector<PhaseLabel> out;
        for (auto p : series_.front().phases())
            if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
        return out;
    }

    bool operator==(const ExperimentRound&) const = default;

private:
    int round_id_;
    std::vector<MetricSeries> series_;
    PhaseSchedule schedule_;
};

// ---------------------------------------------------------------------------
// Phase slicing and alignment
// ---------------------------------------------------------------------------

struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;  // exclusive
    [[nodiscard]] std::size_t size() const noexcept { return end - begin; }
};

/// Index range of the single contiguous run labelled `phase`.
inline IndexRange phase_range(std::span<const PhaseLabel> phases, PhaseLabel phase) {
    std::optional<IndexRange> run;
    for (std::size_t i = 0; i < phases.size(); ++i) {
        if (phases[i] != phase) continue;
        if (!run) {
            run = IndexRange{i, i + 1};
        } else if (run->end == i) {
            run->end = i + 1;
        } else {
            throw Error(Errc::NonContiguousPhase,
                        std::string(phase_name(phase)) + " appears in disjoint runs");
        }
    }
    if (!run) throw Error(Errc::PhaseAbsent, std::string(phase_name(phase)));
    return *run;
}

/// Contiguous samples labelled `phase`, optionally dropping `leading_trim` samples
/// at the start of the run (settling time after a phase switch).
inline MetricSeries slice_phase(const MetricSeries& series, PhaseLabel phase,
                                std::size_t leading_trim = 0) {
    auto r = phase_range(series.phases(), phase);
    if (leading_trim >= r.size())
        throw Error(Errc::TooFewSamples, "trim removes the whole " +
                                             std::string(phase_name(phase)) + " phase");
    r.begin += leading_trim;
    auto sub = [&](const auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        return std::vector<T>(v.begin() + static_cast<std::ptrdiff_t>(r.begin),
                              v.begin() + static_cast<std::ptrdiff_t>(r.end));
    };
    return MetricSeries(series.tenant(), series.metric(), sub(series.timestamps()),
                        sub(series.values()), sub(series.phases()));
}

/// Phase values only; the common fast path for statistics.
inline std::vector<double> phase_values(const MetricSeries& series, PhaseLabel phase,
                                        std::size_t leading_trim = 0) {
    auto r = phase_range(series.phases(), phase);
    if (leading_trim >= r.size())
        throw Error(Errc::TooFewSamples, "trim removes the whole phase");
    r.begin += leading_trim;
    const auto& v = series.values();
    return {v.begin() + static_cast<std::ptrdiff_t>(r.begin),
            v.begin() + static_cast<std::ptrdiff_t>(r.end)};
}

/// Joins consecutive pieces of the same tenant/metric. Pieces must already be
/// on one uniform grid.
inline MetricSeries concatenate(std::span<const MetricSeries> pieces) {
    if (pieces.empty()) throw Error(Errc::EmptyInput, "nothing to concatenate");
    std::vector<double> ts, vs;
    std::vector<PhaseLabel> ps;
    for (const auto& p : pieces) {
        if (p.key() != pieces.front().key())
            throw Error(Errc::InvalidArgument, "pieces belong to different series");
        ts.insert(ts.end(), p.timestamps().begin(), p.timestamps().end());
        vs.insert(vs.end(), p.values().begin(), p.values().end());
        ps.insert(ps.end(), p.phases().begin(), p.phases().end());
    }
    return MetricSeries(pieces.front().tenant(), pieces.front().metric(), std::move(ts),
                        std::move(vs), std::move(ps));
}

/// Truncates every phase of every round to the shortest per-phase sample count
/// across rounds. Samples are re-stamped onto a contiguous grid starting at each
/// round's first timestamp so the uniform-step invariant survives the truncation.
inline std::vector<ExperimentRound> align(std::span<const ExperimentRound> rounds) {
    if (rounds.empty()) return {};

    std::vector<PhaseLabel> order = rounds.front().phases_present();
    std::map<PhaseLabel, std::size_t> common;
    for (auto p : order) common[p] = std::numeric_limits<std::size_t>::max();

    for (const auto& r : rounds) {
        const auto& labels = r.series().front().phases();
        auto present = r.phases_present();
        for (auto p : present)
            if (!common.contains(p))
                throw Error(Errc::EmptyIntersection, std::string(phase_name(p)) +
                                                         " not present in round " +
                                                         std::to_string(rounds.front().round_id()));
        for (auto& [p, count] : common) {
            if (std::find(present.begin(), present.end(), p) == present.end())
                throw Error(Errc::EmptyIntersection, std::string(phase_name(p)) +
                                                         " missing from round " +
                                                         std::to_string(r.round_id()));
            count = std::min(count, phase_range(labels, p).size());
        }
    }

    std::vector<ExperimentRound> out;
    out.reserve(rounds.size());
    for (const auto& r : rounds) {
        const auto& labels = r.series().front().phases();
        std::vector<std::size_t> keep;
        // Phase order follows this round's labelling.
        for (auto p : r.phases_present()) {
            auto range = phase_range(labels, p);
            for (std::size_t i = 0; i < common.at(p); ++i) keep.push_back(range.begin + i);
        }
        const double t0 = r.series().front().timestamps().front();
        const double step = r.series().front().step();
        std::vector<MetricSeries> series;
        for (const auto& s : r.series()) {
            std::vector<double> ts, vs;
            std::vector<PhaseLabel> ps;
            ts.reserve(keep.size());
            for (std::size_t j = 0; j < keep.size(); ++j) {
                ts.push_back(t0 + static_cast<double>(j) * step);
                vs.push_back(s.values()[keep[j]]);
                ps.push_back(s.phases()[keep[j]]);
            }
            if (keep.size() == s.size()) ts = s.timestamps();
            series.emplace_back(s.tenant(), s.metric(), std::move(ts), std::move(vs),
                                std::move(ps));
        }
        out.emplace_back(r.round_id(), std::move(series), r.schedule());
    }
    return out;
}

}  // namespace noisy
