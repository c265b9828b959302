#pragma once

#include <algorithm>
#include <cstddef>
#include <future>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "noisy/causality.hpp"
#include "noisy/core.hpp"
#include "noisy/stats.hpp"

namespace noisy::pipeline {

struct AnalysisOptions {
    double alpha = causality::kDefaultAlpha;
    std::size_t max_lag = causality::kDefaultMaxLag;
    double adf_alpha = 0.05;
    std::size_t leading_trim = 0;
    bool benjamini_hochberg = false;
    /// Rounds analysed at once; 0 picks the hardware concurrency.
    unsigned threads = 0;
};

struct SignatureRecord {
    SeriesKey key;
    PhaseLabel phase{};
    stats::SignatureFeatures features;
    stats::SignatureClass label{};
};

/// Something that could not be computed, with the error code that stopped it.
struct Skip {
    SeriesKey key;
    PhaseLabel phase{};
    std::string what;
    std::string reason;
};

struct RoundAnalysis {
    int round_id = 0;
    std::vector<PhaseLabel> phases;  ///< present in the round, schedule order
    std::vector<stats::ImpactRecord> impacts;
    std::vector<SignatureRecord> signatures;
    std::vector<stats::CouplingIndex> coupling;
    std::vector<causality::CausalGraph> graphs;  ///< one per phase in `phases`
    std::vector<Skip> skipped;

    [[nodiscard]] const causality::CausalGraph* graph(PhaseLabel p) const {
        for (const auto& g : graphs)
            if (g.phase == p) return &g;
        return nullptr;
    }
};

/// Stages 1 to 3 on one round: impacts, distribution signatures, coupling,
/// and the per-phase causal graphs.
inline RoundAnalysis analyze_round(const ExperimentRound& round, const AnalysisOptions& opts = {}) {
    RoundAnalysis ra;
    ra.round_id = round.round_id();
    ra.phases = round.phases_present();
    const bool has_baseline =
        std::find(ra.phases.begin(), ra.phases.end(), PhaseLabel::Baseline) != ra.phases.end();

    for (const auto& s : round.series()) {
        if (!has_baseline) break;
        std::optional<stats::EcdfCurve> base;
        try {
            base.emplace(phase_values(s, PhaseLabel::Baseline, opts.leading_trim));
        } catch (const Error&) {
        }
        for (auto p : ra.phases) {
            if (p == PhaseLabel::Baseline) continue;
            try {
                ra.impacts.push_back(stats::impact(s, p, PhaseLabel::Baseline, opts.leading_trim));
            } catch (const Error& e) {
                ra.skipped.push_back({s.key(), p, "impact", std::string(to_string(e.code()))});
            }
            try {
                if (!base) throw Error(Errc::EmptyInput, "no baseline sample");
                const stats::EcdfCurve deg(phase_values(s, p, opts.leading_trim));
                const auto f = stats::signature_features(*base, deg);
                ra.signatures.push_back({s.key(), p, f, stats::signature_classify(f)});
            } catch (const Error& e) {
                ra.skipped.push_back({s.key(), p, "signature", std::string(to_string(e.code()))});
            }
        }
    }

    // Coupling compares one metric across tenants; pairs in series order.
    const auto& ss = round.series();
    for (auto p : ra.phases)
        for (std::size_t i = 0; i < ss.size(); ++i)
            for (std::size_t j = i + 1; j < ss.size(); ++j) {
                if (ss[i].metric() != ss[j].metric() || ss[i].tenant() == ss[j].tenant()) continue;
                try {
                    ra.coupling.push_back(stats::coupling_index(ss[i], ss[j], p, opts.leading_trim));
                } catch (const Error& e) {
                    ra.skipped.push_back({ss[i].key(), p, "coupling with " + to_string(ss[j].key()),
                                          std::string(to_string(e.code()))});
                }
            }

    causality::GraphOptions go;
    go.alpha = opts.alpha;
    go.max_lag = opts.max_lag;
    go.adf_alpha = opts.adf_alpha;
    go.leading_trim = opts.leading_trim;
    go.benjamini_hochberg = opts.benjamini_hochberg;
    for (auto p : ra.phases) ra.graphs.push_back(causality::build_graph(round, p, go));
    return ra;
}

// ---------------------------------------------------------------------------
// Cross-round reduction
// ---------------------------------------------------------------------------

struct ImpactSummary {
    SeriesKey key;
    PhaseLabel phase{};
    std::size_t rounds = 0;
    double mean_pct = 0.0;
    std::optional<double> mean_d;  ///< absent unless d exists in every round
    std::optional<double> cv;      ///< absent with fewer than 2 rounds or a ~0 mean
};

struct PhaseSummary {
    PhaseLabel phase{};
    std::vector<std::size_t> link_counts;  ///< per round, in round order
    /// Percent change against the same round's Baseline; absent when that is empty.
    std::vector<std::optional<double>> density_delta_pct;
    std::vector<std::optional<TenantId>> hubs;
    std::vector<causality::ReplicationRecord> replication;
};

struct Analysis {
    AnalysisOptions options;
    std::vector<RoundAnalysis> rounds;
    std::vector<ImpactSummary> impacts;
    std::vector<PhaseSummary> phases;
    /// Fewer than two rounds: CV and replication are not reported.
    bool insufficient_rounds = false;
};

inline std::vector<ImpactSummary> summarize_impacts(const std::vector<RoundAnalysis>& rounds) {
    struct Acc {
        std::vector<double> pct;
        std::vector<double> d;
    };
    std::map<std::pair<SeriesKey, PhaseLabel>, Acc> acc;
    for (const auto& r : rounds)
        for (const auto& rec : r.impacts) {
            auto& a = acc[{rec.key, rec.phase}];
            a.pct.push_back(rec.pct_change);
            if (rec.cohens_d) a.d.push_back(*rec.cohens_d);
        }
    std::vector<ImpactSummary> out;
    for (const auto& [k, a] : acc) {
        ImpactSummary s{k.first, k.second, a.pct.size(), stats::mean(a.pct), std::nullopt, std::nullopt};
        if (a.d.size() == a.pct.size()) s.mean_d = stats::mean(a.d);
        if (a.pct.size() >= 2) {
            try {
                s.cv = stats::coefficient_of_variation(a.pct);
            } catch (const Error&) {
            }
        }
        out.push_back(s);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.phase != b.phase) return a.phase < b.phase;
        return a.key < b.key;
    });
    return out;
}

inline Analysis reduce(std::vector<RoundAnalysis> rounds, const AnalysisOptions& opts) {
    Analysis an;
    an.options = opts;
    an.rounds = std::move(rounds);
    an.insufficient_rounds = an.rounds.size() < 2;
    an.impacts = summarize_impacts(an.rounds);

    for (auto p : kAllPhases) {
        PhaseSummary ps;
        ps.phase = p;
        std::vector<causality::CausalGraph> graphs;
        for (const auto& r : an.rounds) {
            const auto* g = r.graph(p);
            if (!g) continue;
            ps.link_counts.push_back(g->link_count());
            ps.hubs.push_back(g->hub());
            std::optional<double> delta;
            if (const auto* b = r.graph(PhaseLabel::Baseline); b && b->link_count() > 0)
                delta = causality::graph_density_delta(*b, *g);
            ps.density_delta_pct.push_back(delta);
            graphs.push_back(*g);
        }
        if (ps.link_counts.empty()) continue;
        if (graphs.size() >= 2) ps.replication = causality::replication(graphs, p);
        an.phases.push_back(std::move(ps));
    }
    return an;
}

/// Analyses every round (concurrently) and reduces across rounds.
inline Analysis analyze(const std::vector<ExperimentRound>& rounds, const AnalysisOptions& opts = {}) {
    if (rounds.empty()) throw Error(Errc::InvalidArgument, "no rounds to analyse");
    unsigned workers = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
    std::vector<RoundAnalysis> results(rounds.size());
    for (std::size_t start = 0; start < rounds.size(); start += workers) {
        std::vector<std::future<RoundAnalysis>> batch;
        for (std::size_t i = start; i < std::min(rounds.size(), start + workers); ++i)
            batch.push_back(std::async(std::launch::async, [&, i] { return analyze_round(rounds[i], opts); }));
        for (std::size_t k = 0; k < batch.size(); ++k) results[start + k] = batch[k].get();
    }
    return reduce(std::move(results), opts);
}

}  // namespace noisy::pipeline
