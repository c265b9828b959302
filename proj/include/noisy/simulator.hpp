#pragma once

// Synthetic multi-tenant traces with an explicit, injected causal structure.
//
// Every series follows a stationary AR(1) around its level mu0. Injected links
// add gain * (x[t - lag] - mu0_x) into the target's recursion while their phase
// is active. Two non-linear link kinds shape the victim's distribution instead:
// a two-state switch (contended level while the aggressor is high) and a stall
// with a soft capacity cap. Background links are active in every phase.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "noisy/core.hpp"
#include "noisy/ingest.hpp"

namespace noisy::sim {

enum class OutputShape {
    Linear,
    /// y = mu0 * exp(s * u - s^2 var(u) / 2): the AR(1) runs on a latent u and
    /// the output keeps mean mu0 at baseline. `log_sd` is s.
    LogNormal,
};

struct SeriesModel {
    SeriesKey key;
    double mu0 = 0.0;
    double phi = 0.0;
    double sigma = 0.0;  ///< innovation std; 0 gives a flat series
    OutputShape shape = OutputShape::Linear;
    double log_sd = 0.0;
};

/// A series driven to `level` with innovation std `sigma` during `phase`
/// (the stressor tenant's own load).
struct Activation {
    PhaseLabel phase{};
    SeriesKey series;
    double level = 0.0;
    double sigma = 0.0;
};

enum class LinkKind { Linear, Switching, Stall };

struct InjectedLink {
    PhaseLabel phase{};
    SeriesKey source;
    SeriesKey target;
    std::size_t lag = 1;
    /// Linear: coupling coefficient. Switching: contended output level.
    /// Stall: soft capacity cap. Filled in by calibration when a target is set.
    double gain = 0.0;
    std::optional<double> target_pct_impact;
    LinkKind kind = LinkKind::Linear;
    bool primary = false;
    /// Switching and Stall: act when the aggressor's z-score exceeds this.
    double threshold = 0.0;
    /// Stall: output multiplied by exp(-stall_rate * (z - threshold)) above threshold.
    double stall_rate = 0.0;
    /// Stall: multiplicative backlog factor applied before stalling and capping.
    double backlog = 1.0;
};

struct BackgroundLink {
    SeriesKey source;
    SeriesKey target;
    std::size_t lag = 1;
    double gain = 0.0;
};

struct GroundTruthSpec {
    std::vector<SeriesModel> series;
    std::vector<Activation> activations;
    std::vector<InjectedLink> links;
    std::vector<BackgroundLink> background;
    std::size_t ramp_samples = 5;
    /// Set once gains have been solved; calibrated specs are used verbatim.
    bool calibrated = false;

    [[nodiscard]] std::vector<InjectedLink> links_in(PhaseLabel p) const {
        std::vector<InjectedLink> out;
        for (const auto& l : links)
            if (l.phase == p) out.push_back(l);
        return out;
    }
};

struct SimConfig {
    int rounds = 10;
    std::size_t samples_per_phase = 500;
    double timestep_s = 2.0;
    std::uint64_t seed = 42;
    GroundTruthSpec truth;

    [[nodiscard]] PhaseSchedule schedule() const {
        return PhaseSchedule::standard(static_cast<double>(samples_per_phase) * timestep_s);
    }
};

struct SimulationResult {
    std::vector<ExperimentRound> rounds;
    GroundTruthSpec truth;  ///< calibrated
};

inline std::string_view to_string(LinkKind k) {
    switch (k) {
        case LinkKind::Linear: return "linear";
        case LinkKind::Switching: return "switching";
        case LinkKind::Stall: return "stall";
    }
    return "?";
}

inline std::string_view to_string(OutputShape s) {
    return s == OutputShape::Linear ? "linear" : "lognormal";
}

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Marsaglia polar method on raw mt19937_64 output. std::normal_distribution is
// implementation-defined, which would make traces differ between standard libraries.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : eng_(seed) {}

    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

private:
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

inline constexpr std::uint64_t kCalibrationDomain = 0xC0FFEE5EEDULL;

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t round, const SeriesKey& key) {
    return splitmix64(splitmix64(seed ^ splitmix64(round)) ^ fnv1a64(to_string(key)));
}

// E[max(X, 0)] for X ~ Normal(m, s).
inline double clamped_normal_mean(double m, double s) {
    if (!(s > 0.0)) return std::max(m, 0.0);
    const double z = m / s;
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    return m * cdf + s * pdf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

inline void validate(const SimConfig& cfg) {
    auto bad = [](const std::string& why) { return Error(Errc::InvalidArgument, why); };
    if (cfg.rounds < 1) throw bad("rounds must be >= 1");
    if (cfg.samples_per_phase < 50) throw bad("samples per phase must be >= 50");
    if (!(cfg.timestep_s > 0.0)) throw bad("timestep must be positive");
    const auto& gt = cfg.truth;
    if (gt.series.empty()) throw bad("no series");
    if (gt.ramp_samples < 1) throw bad("ramp_samples must be >= 1");

    std::set<SeriesKey> keys;
    for (const auto& s : gt.series) {
        if (!keys.insert(s.key).second) throw bad("duplicate series " + to_string(s.key));
        if (!(std::abs(s.phi) < 1.0)) throw bad(to_string(s.key) + ": |phi| must be < 1");
        if (!(s.sigma >= 0.0) || !std::isfinite(s.mu0)) throw bad(to_string(s.key) + ": bad level or sigma");
        if (s.shape == OutputShape::LogNormal && (!(s.log_sd > 0.0) || !(s.mu0 > 0.0) || !(s.sigma > 0.0)))
            throw bad(to_string(s.key) + ": log-normal output needs mu0, sigma, log_sd > 0");
    }
    auto known = [&](const SeriesKey& k) {
        if (!keys.contains(k)) throw bad("unknown series " + to_string(k));
    };
    std::set<std::pair<PhaseLabel, SeriesKey>> active;
    for (const auto& a : gt.activations) {
        known(a.series);
        if (!(a.sigma >= 0.0)) throw bad("activation sigma must be >= 0");
        if (!active.insert({a.phase, a.series}).second) throw bad("duplicate activation");
        for (const auto& s : gt.series)
            if (s.key == a.series && s.shape != OutputShape::Linear)
                throw bad("activations apply to linear-output series only");
    }
    std::set<std::pair<PhaseLabel, SeriesKey>> shaped;
    for (const auto& l : gt.links) {
        known(l.source);
        known(l.target);
        if (l.source == l.target) throw bad("self link on " + to_string(l.source));
        if (l.lag < 1) throw bad("link lags must be >= 1");
        if (l.kind != LinkKind::Linear && !shaped.insert({l.phase, l.target}).second)
            throw bad("at most one switching/stall link per target and phase");
        if (l.kind == LinkKind::Stall && !(l.stall_rate >= 0.0 && l.backlog > 0.0))
            throw bad("stall links need stall_rate >= 0 and backlog > 0");
        if (!l.target_pct_impact && l.kind != LinkKind::Linear && !gt.calibrated && !(l.gain > 0.0))
            throw bad("switching/stall links need a target impact or a positive level");
    }
    for (const auto& b : gt.background) {
        known(b.source);
        known(b.target);
        if (b.source == b.target || b.lag < 1) throw bad("invalid background link");
    }
}

// ---------------------------------------------------------------------------
// Generation engine
// ---------------------------------------------------------------------------

namespace detail {

struct Input {
    std::size_t src;
    std::size_t lag;
    double gain;
};

struct Shaper {
    LinkKind kind;
    std::size_t src;
    std::size_t lag;
    double level;  // switching: contended level; stall: cap
    double threshold;
    double rate;
    double backlog;
    double z_mean;  // aggressor centring for the z-score
    double z_sd;
};

struct PhasePlan {
    std::vector<std::vector<Input>> inputs;  // per target
    std::vector<std::optional<Shaper>> shapers;
    std::vector<std::optional<Activation>> activation;
};

class Engine {
public:
    explicit Engine(const GroundTruthSpec& gt) : gt_(gt) {
        for (std::size_t i = 0; i < gt.series.size(); ++i) index_[gt.series[i].key] = i;
        for (auto p : kAllPhases) plans_[p] = plan(p);
    }

    [[nodiscard]] std::size_t size() const { return gt_.series.size(); }
    [[nodiscard]] std::size_t index(const SeriesKey& k) const { return index_.at(k); }
    [[nodiscard]] const GroundTruthSpec& truth() const { return gt_; }

    struct State {
        std::vector<NormalStream> rng;
        std::vector<double> dev;
        std::vector<std::vector<double>> out;
    };

    [[nodiscard]] State start(std::uint64_t seed, std::uint64_t round, std::size_t reserve) const {
        State st;
        for (const auto& s : gt_.series) {
            st.rng.emplace_back(stream_seed(seed, round, s.key));
            const double stationary = s.sigma / std::sqrt(1.0 - s.phi * s.phi);
            st.dev.push_back(stationary * st.rng.back()());
            st.out.emplace_back().reserve(reserve);
        }
        return st;
    }

    /// Appends `n` samples of `phase` to every series.
    void run(PhaseLabel phase, std::size_t n, State& st) const {
        const auto& plan = plans_.at(phase);
        const std::size_t m = size();
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t t = st.out[0].size();
            for (std::size_t j = 0; j < m; ++j) {
                const auto& s = gt_.series[j];
                const double e1 = st.rng[j]();
                const double e2 = st.rng[j]();

                double level = s.mu0;
                double sigma = s.sigma;
                if (const auto& a = plan.activation[j]) {
                    const double frac = std::min(1.0, static_cast<double>(i + 1) /
                                                          static_cast<double>(gt_.ramp_samples));
                    level = s.mu0 + (a->level - s.mu0) * frac;
                    sigma = a->sigma;
                }
                double drive = 0.0;
                for (const auto& in : plan.inputs[j])
                    if (t >= in.lag) drive += in.gain * (st.out[in.src][t - in.lag] - gt_.series[in.src].mu0);
                st.dev[j] = s.phi * st.dev[j] + drive + sigma * e1;

                double y;
                if (s.shape == OutputShape::Linear) {
                    y = level + st.dev[j];
                } else {
                    const double var0 = s.sigma * s.sigma / (1.0 - s.phi * s.phi);
                    y = s.mu0 * std::exp(s.log_sd * st.dev[j] - 0.5 * s.log_sd * s.log_sd * var0);
                }

                if (const auto& sh = plan.shapers[j]) {
                    double z = 0.0;
                    if (t >= sh->lag && sh->z_sd > 0.0) z = (st.out[sh->src][t - sh->lag] - sh->z_mean) / sh->z_sd;
                    if (sh->kind == LinkKind::Switching) {
                        if (z > sh->threshold) y = sh->level * (1.0 + 1e-4 * e2);
                    } else {
                        y *= sh->backlog;
                        if (z > sh->threshold) y *= std::exp(-sh->rate * (z - sh->threshold));
                        if (sh->level > 0.0) y /= std::pow(1.0 + std::pow(y / sh->level, 4.0), 0.25);
                    }
                }
                st.out[j].push_back(std::max(0.0, y));
            }
        }
    }

private:
    PhasePlan plan(PhaseLabel p) const {
        const std::size_t m = gt_.series.size();
        PhasePlan plan;
        plan.inputs.resize(m);
        plan.shapers.resize(m);
        plan.activation.resize(m);
        for (const auto& a : gt_.activations)
            if (a.phase == p) plan.activation[index_.at(a.series)] = a;
        for (const auto& b : gt_.background)
            plan.inputs[index_.at(b.target)].push_back({index_.at(b.source), b.lag, b.gain});
        for (const auto& l : gt_.links) {
            if (l.phase != p) continue;
            const auto src = index_.at(l.source);
            const auto dst = index_.at(l.target);
            if (l.kind == LinkKind::Linear) {
                plan.inputs[dst].push_back({src, l.lag, l.gain});
                continue;
            }
            const auto& ss = gt_.series[src];
            double zm = ss.mu0;
            double zs = ss.sigma / std::sqrt(1.0 - ss.phi * ss.phi);
            if (const auto& a = plan.activation[src]) {
                zm = a->level;
                zs = a->sigma / std::sqrt(1.0 - ss.phi * ss.phi);
            }
            plan.shapers[dst] = Shaper{l.kind, src, l.lag, l.gain, l.threshold, l.stall_rate, l.backlog, zm, zs};
        }
        return plan;
    }

    GroundTruthSpec gt_;
    std::map<SeriesKey, std::size_t> index_;
    std::map<PhaseLabel, PhasePlan> plans_;
};

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

inline constexpr std::size_t kCalibrationBlocks = 200;

// The part of a spec that can influence `target`: the target plus everything
// feeding it, transitively, in `phase`. Streams are keyed by series, so the
// reduced spec reproduces the full spec's values for these series exactly.
inline GroundTruthSpec ancestors(const GroundTruthSpec& gt, PhaseLabel phase, const SeriesKey& target) {
    std::set<SeriesKey> keep{target};
    for (bool grew = true; grew;) {
        grew = false;
        for (const auto& l : gt.links)
            if (l.phase == phase && keep.contains(l.target)) grew |= keep.insert(l.source).second;
        for (const auto& b : gt.background)
            if (keep.contains(b.target)) grew |= keep.insert(b.source).second;
    }
    GroundTruthSpec out;
    out.ramp_samples = gt.ramp_samples;
    for (const auto& s : gt.series)
        if (keep.contains(s.key)) out.series.push_back(s);
    for (const auto& a : gt.activations)
        if (keep.contains(a.series)) out.activations.push_back(a);
    for (const auto& l : gt.links)
        if (keep.contains(l.target)) out.links.push_back(l);
    for (const auto& b : gt.background)
        if (keep.contains(b.target)) out.background.push_back(b);
    return out;
}

// Monte-Carlo mean of every series in `phase`, over independent blocks that
// each start fresh and last one phase. Common random numbers across calls make
// this a deterministic, smooth function of the spec.
inline std::vector<double> phase_means(const GroundTruthSpec& gt, PhaseLabel phase, std::size_t n,
                                       std::uint64_t seed) {
    const Engine eng(gt);
    std::vector<double> sum(eng.size(), 0.0);
    for (std::size_t b = 0; b < kCalibrationBlocks; ++b) {
        auto st = eng.start(seed ^ kCalibrationDomain, b + 1, n);
        eng.run(phase, n, st);
        for (std::size_t j = 0; j < eng.size(); ++j)
            for (double v : st.out[j]) sum[j] += v;
    }
    for (auto& s : sum) s /= static_cast<double>(kCalibrationBlocks * n);
    return sum;
}

struct Calibrator {
    GroundTruthSpec gt;
    std::size_t n;
    std::uint64_t seed;
    std::vector<double> baseline;

    Calibrator(GroundTruthSpec g, std::size_t samples, std::uint64_t s)
        : gt(std::move(g)), n(samples), seed(s) {
        baseline = phase_means(gt, PhaseLabel::Baseline, n, seed);
    }

    std::size_t idx(const SeriesKey& k) const {
        for (std::size_t i = 0; i < gt.series.size(); ++i)
            if (gt.series[i].key == k) return i;
        throw Error(Errc::InvalidArgument, "unknown series " + to_string(k));
    }

    double realized_pct(PhaseLabel p, const SeriesKey& target) {
        const auto j = idx(target);
        const auto sub = ancestors(gt, p, target);
        std::size_t k = 0;
        while (sub.series[k].key != target) ++k;
        const double got = phase_means(sub, p, n, seed)[k];
        if (std::abs(baseline[j]) < 1e-12) throw Error(Errc::InfeasibleImpact, to_string(target) + ": zero baseline");
        return 100.0 * (got / baseline[j] - 1.0);
    }

    // Mean excursion of a source above its idle level during phase p.
    double excursion(PhaseLabel p, const SeriesKey& src) const {
        const auto& s = gt.series[idx(src)];
        for (const auto& a : gt.activations)
            if (a.phase == p && a.series == src) {
                const double sd = a.sigma / std::sqrt(1.0 - s.phi * s.phi);
                return clamped_normal_mean(a.level, sd) - s.mu0;
            }
        return 0.0;
    }

    double source_variance(PhaseLabel p, const SeriesKey& src) const {
        const auto& s = gt.series[idx(src)];
        double sigma = s.sigma;
        for (const auto& a : gt.activations)
            if (a.phase == p && a.series == src) sigma = a.sigma;
        return sigma * sigma / (1.0 - s.phi * s.phi);
    }

    // Solves f(x) = target on [lo, hi] for monotone f (Illinois false position).
    static double solve(const std::function<double(double)>& f, double lo, double hi, double target) {
        double flo = f(lo) - target;
        double fhi = f(hi) - target;
        if (flo * fhi > 0.0) return std::abs(flo) < std::abs(fhi) ? lo : hi;
        int side = 0;
        double x = lo;
        for (int it = 0; it < 60; ++it) {
            x = (lo * fhi - hi * flo) / (fhi - flo);
            const double fx = f(x) - target;
            if (std::abs(fx) < 1e-3) break;
            if (fx * fhi > 0.0) {
                hi = x;
                fhi = fx;
                if (side == -1) flo /= 2.0;
                side = -1;
            } else {
                lo = x;
                flo = fx;
                if (side == 1) fhi /= 2.0;
                side = 1;
            }
        }
        return x;
    }

    std::vector<std::size_t> group(PhaseLabel p, const SeriesKey& target, bool linear) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < gt.links.size(); ++i) {
            const auto& l = gt.links[i];
            if (l.phase == p && l.target == target && l.target_pct_impact &&
                (l.kind == LinkKind::Linear) == linear)
                out.push_back(i);
        }
        return out;
    }

    void calibrate_linear(PhaseLabel p, const SeriesKey& target) {
        const auto members = group(p, target, true);
        if (members.empty()) return;
        const auto& ts = gt.series[idx(target)];
        double total = 0.0;
        for (auto i : members) {
            auto& l = gt.links[i];
            const double pct = *l.target_pct_impact;
            total += pct;
            const double dx = excursion(p, l.source);
            if (std::abs(dx) < 1e-12)
                throw Error(Errc::InfeasibleImpact, to_string(l.source) + " has no mean excursion in " +
                                                        std::string(phase_name(p)) + "; max achievable 0%");
            if (ts.shape == OutputShape::Linear) {
                if (pct <= -100.0)
                    throw Error(Errc::InfeasibleImpact, to_string(target) +
                                                            ": a mean cannot fall by 100% or more; max achievable > -100%");
                l.gain = (pct / 100.0) * ts.mu0 * (1.0 - ts.phi) / dx;
            } else {
                // Latent-scale first guess; refined below.
                l.gain = std::log1p(pct / 100.0) * (1.0 - ts.phi) / (ts.log_sd * dx);
            }
        }

        std::vector<double> base;
        for (auto i : members) base.push_back(gt.links[i].gain);
        auto set_scale = [&](double m) {
            for (std::size_t k = 0; k < members.size(); ++k) gt.links[members[k]].gain = base[k] * m;
        };

        if (ts.shape == OutputShape::Linear) {
            // One simulate-and-rescale pass.
            const double got = realized_pct(p, target);
            if (std::abs(got) > 1e-9 && got * total > 0.0) set_scale(total / got);
            return;
        }

        // Log-normal output: the mean responds to both the latent shift and the
        // variance the aggressor injects, so the scale is solved numerically.
        const double s = ts.log_sd;
        double b = 0.0, a = 0.0;
        for (std::size_t k = 0; k < members.size(); ++k) {
            const auto& l = gt.links[members[k]];
            b += s * base[k] * excursion(p, l.source) / (1.0 - ts.phi);
            a += 0.5 * s * s * base[k] * base[k] * source_variance(p, l.source) / (1.0 - ts.phi * ts.phi);
        }
        const double target_log = std::log1p(total / 100.0);
        double hi = 4.0;
        if (b < 0.0 && a > 0.0) {
            const double m_star = -b / (2.0 * a);  // scale that minimises the mean
            const double best = std::expm1(b * m_star + a * m_star * m_star) * 100.0;
            if (target_log < b * m_star + a * m_star * m_star)
                throw Error(Errc::InfeasibleImpact, to_string(target) + ": max achievable " +
                                                        std::to_string(best) + "%");
            hi = m_star;
        }
        const double m = solve([&](double x) { set_scale(x); return realized_pct(p, target); }, 0.0, hi, total);
        set_scale(m);
    }

    void calibrate_shaper(std::size_t i) {
        auto& l = gt.links[i];
        if (!l.target_pct_impact) return;
        const double pct = *l.target_pct_impact;
        const auto& ts = gt.series[idx(l.target)];
        const double scale = std::max(ts.mu0, 1e-9);
        if (l.kind == LinkKind::Switching) {
            // Mean is affine in the contended level.
            l.gain = 0.0;
            const double p0 = realized_pct(l.phase, l.target);
            l.gain = scale;
            const double p1 = realized_pct(l.phase, l.target);
            const double level = scale * (pct - p0) / (p1 - p0);
            if (!(level >= 0.0) || !std::isfinite(level))
                throw Error(Errc::InfeasibleImpact, to_string(l.target) + ": max achievable " +
                                                        std::to_string(p0) + "%");
            l.gain = level;
            return;
        }
        // Stall: the cap is solved on a log scale; an infinite cap leaves only the stall.
        l.gain = 0.0;
        const double uncapped = realized_pct(l.phase, l.target);
        if (pct >= uncapped)
            throw Error(Errc::InfeasibleImpact, to_string(l.target) + ": a cap cannot raise the mean; max achievable " +
                                                    std::to_string(uncapped) + "%");
        auto f = [&](double logc) {
            l.gain = scale * std::exp(logc);
            return realized_pct(l.phase, l.target);
        };
        const double logc = solve(f, std::log(1e-4), std::log(1e3), pct);
        l.gain = scale * std::exp(logc);
    }
};

}  // namespace detail

/// Solves every link's gain (or level/cap) for its target impact. Linear
/// targets use the closed form plus one Monte-Carlo rescale; log-normal and
/// shaped targets are solved numerically on common random numbers.
inline GroundTruthSpec calibrate(const SimConfig& cfg) {
    validate(cfg);
    if (cfg.truth.calibrated) return cfg.truth;
    detail::Calibrator cal(cfg.truth, cfg.samples_per_phase, cfg.seed);

    std::set<std::pair<PhaseLabel, SeriesKey>> linear_groups;
    for (const auto& l : cal.gt.links)
        if (l.kind == LinkKind::Linear && l.target_pct_impact) linear_groups.insert({l.phase, l.target});
    for (const auto& [p, target] : linear_groups) cal.calibrate_linear(p, target);
    for (std::size_t i = 0; i < cal.gt.links.size(); ++i)
        if (cal.gt.links[i].kind != LinkKind::Linear) cal.calibrate_shaper(i);

    cal.gt.calibrated = true;
    return cal.gt;
}

/// One round on the configured schedule from an already calibrated spec.
inline ExperimentRound generate_round(const SimConfig& cfg, const GroundTruthSpec& gt, int round_id) {
    const detail::Engine eng(gt);
    const auto n = cfg.samples_per_phase;
    auto st = eng.start(cfg.seed, static_cast<std::uint64_t>(round_id), n * kAllPhases.size());
    std::vector<double> ts;
    std::vector<PhaseLabel> ps;
    for (auto p : kAllPhases) {
        eng.run(p, n, st);
        for (std::size_t i = 0; i < n; ++i) {
            ts.push_back(static_cast<double>(ts.size()) * cfg.timestep_s);
            ps.push_back(p);
        }
    }
    std::vector<MetricSeries> series;
    for (std::size_t j = 0; j < gt.series.size(); ++j)
        series.emplace_back(gt.series[j].key.tenant, gt.series[j].key.metric, ts, std::move(st.out[j]), ps);
    return ExperimentRound(round_id, std::move(series), cfg.schedule());
}

/// Calibrates (unless already calibrated) and generates `cfg.rounds` rounds.
/// Output is a pure function of the config.
inline SimulationResult simulate(const SimConfig& cfg) {
    SimulationResult res;
    res.truth = calibrate(cfg);
    for (int r = 1; r <= cfg.rounds; ++r) res.rounds.push_back(generate_round(cfg, res.truth, r));
    return res;
}

// ---------------------------------------------------------------------------
// Default profile
// ---------------------------------------------------------------------------

inline SimConfig default_profile() {
    SimConfig cfg;
    auto& gt = cfg.truth;
    auto key = [](const char* tenant, MetricKind m) { return SeriesKey{TenantId(tenant), m}; };
    using M = MetricKind;
    using P = PhaseLabel;

    // Victims: AR(1) with phi 0.5 and 2% innovation noise, unless noted.
    auto victim = [&](const char* tenant, M m, double mu0) {
        gt.series.push_back({key(tenant, m), mu0, 0.5, 0.02 * mu0});
    };
    // White-noise victims; they drive the cascade links in CombinedNoise.
    auto white = [&](const char* tenant, M m, double mu0) {
        gt.series.push_back({key(tenant, m), mu0, 0.0, 0.05 * mu0});
    };
    victim("tenant-cpu", M::CpuUsage, 40.0);
    victim("tenant-cpu", M::MemoryWorkingSet, 600.0);
    victim("tenant-cpu", M::DiskIoBytes, 20.0);
    victim("tenant-cpu", M::NetworkThroughput, 50.0);
    victim("tenant-mem", M::CpuUsage, 35.0);
    victim("tenant-mem", M::MemoryWorkingSet, 1500.0);
    victim("tenant-mem", M::DiskIoBytes, 10.0);
    white("tenant-mem", M::NetworkThroughput, 30.0);
    victim("tenant-dsk", M::CpuUsage, 25.0);
    victim("tenant-dsk", M::MemoryWorkingSet, 500.0);
    // Bursty disk throughput: log-normal output over an AR(0.3) latent.
    gt.series.push_back({key("tenant-dsk", M::DiskIoBytes), 120.0, 0.3, std::sqrt(1.0 - 0.09),
                         OutputShape::LogNormal, 0.8});
    white("tenant-dsk", M::NetworkThroughput, 40.0);
    victim("tenant-ntk", M::CpuUsage, 30.0);
    white("tenant-ntk", M::MemoryWorkingSet, 400.0);
    victim("tenant-ntk", M::DiskIoBytes, 8.0);
    victim("tenant-ntk", M::NetworkThroughput, 450.0);
    // The stressor tenant is idle (flat) outside its phases.
    gt.series.push_back({key("tenant-nsy", M::CpuUsage), 0.0, 0.0, 0.0});
    gt.series.push_back({key("tenant-nsy", M::MemoryWorkingSet), 64.0, 0.0, 0.0});
    gt.series.push_back({key("tenant-nsy", M::DiskIoBytes), 0.0, 0.0, 0.0});
    gt.series.push_back({key("tenant-nsy", M::NetworkThroughput), 0.0, 0.0, 0.0});

    const std::map<M, std::pair<double, double>> load = {
        {M::CpuUsage, {180.0, 72.0}},
        {M::MemoryWorkingSet, {2048.0, 760.0}},
        {M::DiskIoBytes, {300.0, 120.0}},
        {M::NetworkThroughput, {900.0, 360.0}},
    };
    const std::map<P, std::vector<M>> active = {
        {P::CpuNoise, {M::CpuUsage}},
        {P::MemoryNoise, {M::MemoryWorkingSet}},
        {P::NetworkNoise, {M::NetworkThroughput}},
        {P::DiskNoise, {M::DiskIoBytes}},
        {P::CombinedNoise, {M::CpuUsage, M::MemoryWorkingSet, M::DiskIoBytes, M::NetworkThroughput}},
    };
    for (const auto& [phase, metrics] : active)
        for (auto m : metrics)
            gt.activations.push_back({phase, key("tenant-nsy", m), load.at(m).first, load.at(m).second});

    // Each stressor metric uses a single lag for all of its links, so victims
    // sharing a driver carry no information about each other. Lag 1 keeps the
    // links visible to a lag order chosen from the target's own dynamics.
    const std::map<M, std::size_t> lag = {
        {M::CpuUsage, 1}, {M::MemoryWorkingSet, 1}, {M::DiskIoBytes, 1}, {M::NetworkThroughput, 1}};
    auto nsy = [&](P phase, M from, const char* tenant, M to, double pct, bool primary = false) {
        InjectedLink l;
        l.phase = phase;
        l.source = key("tenant-nsy", from);
        l.target = key(tenant, to);
        l.lag = lag.at(from);
        l.target_pct_impact = pct;
        l.primary = primary;
        gt.links.push_back(l);
        return &gt.links.back();
    };

    nsy(P::CpuNoise, M::CpuUsage, "tenant-cpu", M::CpuUsage, -32.6);
    nsy(P::CpuNoise, M::CpuUsage, "tenant-mem", M::CpuUsage, -30.0);
    nsy(P::MemoryNoise, M::MemoryWorkingSet, "tenant-mem", M::MemoryWorkingSet, -18.0);
    {
        auto* l = nsy(P::NetworkNoise, M::NetworkThroughput, "tenant-ntk", M::NetworkThroughput, -18.0);
        l->kind = LinkKind::Switching;
        l->threshold = 0.0;
    }
    {
        auto* l = nsy(P::DiskNoise, M::DiskIoBytes, "tenant-dsk", M::DiskIoBytes, -65.54, true);
        l->kind = LinkKind::Stall;
        l->threshold = 0.5;
        l->stall_rate = 16.0;
        l->backlog = std::exp(0.8 * 0.3);
    }

    nsy(P::CombinedNoise, M::CpuUsage, "tenant-cpu", M::CpuUsage, -56.37, true);
    nsy(P::CombinedNoise, M::CpuUsage, "tenant-mem", M::CpuUsage, -56.41, true);
    nsy(P::CombinedNoise, M::CpuUsage, "tenant-ntk", M::CpuUsage, -12.0);
    nsy(P::CombinedNoise, M::DiskIoBytes, "tenant-dsk", M::DiskIoBytes, -67.58, true);
    nsy(P::CombinedNoise, M::DiskIoBytes, "tenant-cpu", M::DiskIoBytes, 20.01, true);
    nsy(P::CombinedNoise, M::DiskIoBytes, "tenant-mem", M::DiskIoBytes, -15.0);
    nsy(P::CombinedNoise, M::DiskIoBytes, "tenant-ntk", M::DiskIoBytes, -8.0);
    nsy(P::CombinedNoise, M::NetworkThroughput, "tenant-ntk", M::NetworkThroughput, -6.68, true);
    nsy(P::CombinedNoise, M::NetworkThroughput, "tenant-cpu", M::NetworkThroughput, -10.0);
    nsy(P::CombinedNoise, M::MemoryWorkingSet, "tenant-mem", M::MemoryWorkingSet, -20.0);
    nsy(P::CombinedNoise, M::MemoryWorkingSet, "tenant-dsk", M::MemoryWorkingSet, -10.0);
    nsy(P::CombinedNoise, M::MemoryWorkingSet, "tenant-cpu", M::MemoryWorkingSet, -8.0);

    // Victim-to-victim cascades under combined contention. Coefficients put the
    // injected term at 0.6 of the target's own innovation std.
    auto cascade = [&](const char* st, M sm, const char* tt, M tm) {
        const auto& src = *std::find_if(gt.series.begin(), gt.series.end(),
                                        [&](const SeriesModel& s) { return s.key == key(st, sm); });
        const auto& dst = *std::find_if(gt.series.begin(), gt.series.end(),
                                        [&](const SeriesModel& s) { return s.key == key(tt, tm); });
        InjectedLink l;
        l.phase = P::CombinedNoise;
        l.source = src.key;
        l.target = dst.key;
        l.lag = 1;
        l.gain = 0.6 * dst.sigma / src.sigma;
        gt.links.push_back(l);
    };
    cascade("tenant-mem", M::NetworkThroughput, "tenant-cpu", M::NetworkThroughput);
    cascade("tenant-mem", M::NetworkThroughput, "tenant-dsk", M::CpuUsage);
    cascade("tenant-dsk", M::NetworkThroughput, "tenant-cpu", M::MemoryWorkingSet);
    cascade("tenant-dsk", M::NetworkThroughput, "tenant-ntk", M::CpuUsage);
    cascade("tenant-ntk", M::MemoryWorkingSet, "tenant-dsk", M::MemoryWorkingSet);
    cascade("tenant-ntk", M::MemoryWorkingSet, "tenant-mem", M::DiskIoBytes);

    // One weak always-on dependency between victims.
    gt.background.push_back({key("tenant-dsk", M::NetworkThroughput), key("tenant-mem", M::MemoryWorkingSet), 1,
                             0.3 * (0.02 * 1500.0) / (0.05 * 40.0)});
    return cfg;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline constexpr int kGroundTruthFormatVersion = 1;

namespace detail {

inline nlohmann::json key_json(const SeriesKey& k) {
    return {{"tenant", k.tenant.name}, {"metric", std::string(metric_code(k.metric))}};
}

inline SeriesKey key_from(const nlohmann::json& j) {
    const auto code = j.at("metric").get<std::string>();
    const auto m = parse_metric_code(code);
    if (!m) throw Error(Errc::UnknownMetricKind, "metric '" + code + "'");
    return {TenantId(j.at("tenant").get<std::string>()), *m};
}

inline PhaseLabel phase_from(const std::string& name) {
    const auto p = parse_phase_name(name);
    if (!p) throw Error(Errc::InvalidArgument, "unknown phase '" + name + "'");
    return *p;
}

inline nlohmann::json link_json(const InjectedLink& l) {
    nlohmann::json j = {{"source", key_json(l.source)},
                        {"target", key_json(l.target)},
                        {"lag", l.lag},
                        {"gain", l.gain},
                        {"target_pct_impact", nullptr},
                        {"kind", std::string(to_string(l.kind))},
                        {"primary", l.primary}};
    if (l.target_pct_impact) j["target_pct_impact"] = *l.target_pct_impact;
    if (l.kind != LinkKind::Linear) j["threshold"] = l.threshold;
    if (l.kind == LinkKind::Stall) {
        j["stall_rate"] = l.stall_rate;
        j["backlog"] = l.backlog;
    }
    return j;
}

}  // namespace detail

/// Serializes a config; after calibration this is the ground-truth file.
inline nlohmann::json to_json(const SimConfig& cfg) {
    using nlohmann::json;
    const auto& gt = cfg.truth;
    json series = json::array();
    for (const auto& s : gt.series) {
        json j = detail::key_json(s.key);
        j["mu0"] = s.mu0;
        j["phi"] = s.phi;
        j["sigma"] = s.sigma;
        j["shape"] = std::string(to_string(s.shape));
        if (s.shape == OutputShape::LogNormal) j["log_sd"] = s.log_sd;
        series.push_back(j);
    }
    json acts = json::array();
    for (const auto& a : gt.activations) {
        json j = detail::key_json(a.series);
        j["phase"] = std::string(phase_name(a.phase));
        j["level"] = a.level;
        j["sigma"] = a.sigma;
        acts.push_back(j);
    }
    json injected = json::object();
    for (auto p : kAllPhases) {
        json arr = json::array();
        for (const auto& l : gt.links)
            if (l.phase == p) arr.push_back(detail::link_json(l));
        injected[std::string(phase_name(p))] = arr;
    }
    json background = json::array();
    for (const auto& b : gt.background)
        background.push_back({{"source", detail::key_json(b.source)},
                              {"target", detail::key_json(b.target)},
                              {"lag", b.lag},
                              {"gain", b.gain}});
    return {{"format_version", kGroundTruthFormatVersion},
            {"rounds", cfg.rounds},
            {"samples_per_phase", cfg.samples_per_phase},
            {"timestep_s", cfg.timestep_s},
            {"seed", cfg.seed},
            {"calibrated", gt.calibrated},
            {"ramp_samples", gt.ramp_samples},
            {"series", series},
            {"activations", acts},
            {"injected", injected},
            {"background", background}};
}

inline SimConfig config_from_json(const nlohmann::json& j) {
    SimConfig cfg;
    try {
        if (j.value("format_version", kGroundTruthFormatVersion) != kGroundTruthFormatVersion)
            throw Error(Errc::InvalidArgument, "unsupported format_version");
        cfg.rounds = j.value("rounds", cfg.rounds);
        cfg.samples_per_phase = j.value("samples_per_phase", cfg.samples_per_phase);
        cfg.timestep_s = j.value("timestep_s", cfg.timestep_s);
        cfg.seed = j.value("seed", cfg.seed);
        auto& gt = cfg.truth;
        gt.calibrated = j.value("calibrated", false);
        gt.ramp_samples = j.value("ramp_samples", gt.ramp_samples);
        for (const auto& s : j.at("series")) {
            SeriesModel m{detail::key_from(s), s.at("mu0").get<double>(), s.value("phi", 0.0),
                          s.value("sigma", 0.0)};
            const auto shape = s.value("shape", std::string("linear"));
            if (shape == "lognormal") {
                m.shape = OutputShape::LogNormal;
                m.log_sd = s.at("log_sd").get<double>();
            } else if (shape != "linear") {
                throw Error(Errc::InvalidArgument, "unknown shape '" + shape + "'");
            }
            gt.series.push_back(m);
        }
        for (const auto& a : j.value("activations", nlohmann::json::array()))
            gt.activations.push_back({detail::phase_from(a.at("phase").get<std::string>()), detail::key_from(a),
                                      a.at("level").get<double>(), a.value("sigma", 0.0)});
        const auto injected = j.value("injected", nlohmann::json::object());
        for (const auto& el : injected.items()) (void)detail::phase_from(el.key());  // reject unknown names
        for (auto phase : kAllPhases) {
            const auto it = injected.find(std::string(phase_name(phase)));
            if (it == injected.end()) continue;
            for (const auto& lj : *it) {
                InjectedLink l;
                l.phase = phase;
                l.source = detail::key_from(lj.at("source"));
                l.target = detail::key_from(lj.at("target"));
                l.lag = lj.value("lag", std::size_t{1});
                l.gain = lj.value("gain", 0.0);
                if (lj.contains("target_pct_impact") && !lj["target_pct_impact"].is_null())
                    l.target_pct_impact = lj["target_pct_impact"].get<double>();
                const auto kind = lj.value("kind", std::string("linear"));
                if (kind == "switching") l.kind = LinkKind::Switching;
                else if (kind == "stall") l.kind = LinkKind::Stall;
                else if (kind != "linear") throw Error(Errc::InvalidArgument, "unknown link kind '" + kind + "'");
                l.primary = lj.value("primary", false);
                l.threshold = lj.value("threshold", 0.0);
                l.stall_rate = lj.value("stall_rate", 0.0);
                l.backlog = lj.value("backlog", 1.0);
                gt.links.push_back(l);
            }
        }
        for (const auto& b : j.value("background", nlohmann::json::array()))
            gt.background.push_back({detail::key_from(b.at("source")), detail::key_from(b.at("target")),
                                     b.value("lag", std::size_t{1}), b.at("gain").get<double>()});
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidArgument, std::string("profile: ") + e.what());
    }
    validate(cfg);
    return cfg;
}

inline void write_ground_truth(const SimConfig& cfg, const std::filesystem::path& path) {
    ingest::atomic_write(path, to_json(cfg).dump(2) + "\n");
}

inline SimConfig read_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot open " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(Errc::MalformedRow, path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

}  // namespace noisy::sim
