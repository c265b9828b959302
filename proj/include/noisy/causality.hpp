#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "noisy/core.hpp"
#include "noisy/linalg.hpp"
#include "noisy/special.hpp"
#include "noisy/stationarity.hpp"
#include "noisy/stats.hpp"

namespace noisy::causality {

inline constexpr std::size_t kDefaultMaxLag = 10;
inline constexpr double kDefaultAlpha = 0.05;
/// Reverse p above this counts as "clearly not significant" for the asymmetry flag.
inline constexpr double kAsymmetryReverseP = 0.10;

struct GrangerResult {
    SeriesKey source;
    SeriesKey target;
    PhaseLabel phase{};
    std::size_t lag = 0;
    double f_statistic = 0.0;
    double p_value = 1.0;
    std::size_t n_effective = 0;
    std::size_t df_num = 0;
    std::size_t df_den = 0;
    double rss_restricted = 0.0;
    double rss_unrestricted = 0.0;
};

/// F-test that q lags of x improve an AR(q)-with-constant model of y.
/// Uses rows t = q..n-1.
inline GrangerResult granger_f_test(std::span<const double> x, std::span<const double> y,
                                    std::size_t q) {
    if (x.size() != y.size()) throw Error(Errc::InvalidArgument, "x and y are not index-aligned");
    if (q == 0) throw Error(Errc::InvalidArgument, "lag must be >= 1");
    const std::size_t n = y.size();
    if (n <= 3 * q + 1) throw Error(Errc::InsufficientSamples, "too few samples for lag " + std::to_string(q));

    const auto rows = static_cast<Eigen::Index>(n - q);
    const auto cols = static_cast<Eigen::Index>(2 * q + 1);
    Eigen::MatrixXd design(rows, cols);
    Eigen::VectorXd target(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const std::size_t t = q + static_cast<std::size_t>(r);
        target(r) = y[t];
        design(r, 0) = 1.0;
        for (std::size_t i = 1; i <= q; ++i) {
            design(r, static_cast<Eigen::Index>(i)) = y[t - i];
            design(r, static_cast<Eigen::Index>(q + i)) = x[t - i];
        }
    }
    const auto rss = linalg::nested_rss(design, target);

    GrangerResult g;
    g.lag = q;
    g.n_effective = static_cast<std::size_t>(rows);
    g.df_num = q;
    g.df_den = g.n_effective - 2 * q - 1;
    g.rss_restricted = rss[q];
    g.rss_unrestricted = rss[2 * q];
    if (!(g.rss_unrestricted > 0.0))
        throw Error(Errc::SingularRegression, "unrestricted model fits exactly");
    const double num = std::max(0.0, g.rss_restricted - g.rss_unrestricted) / static_cast<double>(q);
    g.f_statistic = num / (g.rss_unrestricted / static_cast<double>(g.df_den));
    g.p_value = special::f_distribution_sf(g.f_statistic, static_cast<double>(g.df_num),
                                           static_cast<double>(g.df_den));
    return g;
}

/// AIC-selected lag order in 1..max_lag, scored on the restricted (own-history)
/// model over a common sample trimmed to max_lag. Ties go to the smaller lag.
/// Scoring the restricted model keeps the choice independent of x, so the
/// F-test keeps its nominal size.
inline std::size_t select_granger_lag(std::span<const double> y, std::size_t max_lag) {
    const std::size_t n = y.size();
    const auto rows = static_cast<Eigen::Index>(n - max_lag);
    Eigen::MatrixXd design(rows, static_cast<Eigen::Index>(max_lag + 1));
    Eigen::VectorXd target(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const std::size_t t = max_lag + static_cast<std::size_t>(r);
        target(r) = y[t];
        design(r, 0) = 1.0;
        for (std::size_t i = 1; i <= max_lag; ++i) design(r, static_cast<Eigen::Index>(i)) = y[t - i];
    }
    const auto rss = linalg::nested_rss(design, target);
    const auto n_sel = static_cast<double>(rows);
    std::size_t best_q = 1;
    double best = 0.0;
    for (std::size_t q = 1; q <= max_lag; ++q) {
        const double aic = n_sel * std::log(rss[q] / n_sel) + 2.0 * static_cast<double>(q + 1);
        if (q == 1 || aic < best) {
            best = aic;
            best_q = q;
        }
    }
    return best_q;
}

/// Does x Granger-cause y? Lag chosen by AIC, then tested on its own sample.
inline GrangerResult granger_test(std::span<const double> x, std::span<const double> y,
                                  std::size_t max_lag = kDefaultMaxLag) {
    if (x.size() != y.size()) throw Error(Errc::InvalidArgument, "x and y are not index-aligned");
    if (max_lag == 0) throw Error(Errc::InvalidArgument, "max_lag must be >= 1");
    if (y.size() < 4 * max_lag + 20)
        throw Error(Errc::InsufficientSamples, "need n >= 4 * max_lag + 20");
    return granger_f_test(x, y, select_granger_lag(y, max_lag));
}

struct BidirectionalResult {
    GrangerResult forward;  ///< a -> b
    GrangerResult reverse;  ///< b -> a
    bool asymmetric = false;
};

inline bool is_asymmetric(const GrangerResult& forward, const GrangerResult& reverse,
                          double alpha = kDefaultAlpha) {
    return forward.p_value < alpha && reverse.p_value > kAsymmetryReverseP;
}

/// Brings two stationarized slices to the higher of their difference orders.
inline std::pair<std::vector<double>, std::vector<double>> common_order(
    const stationarity::StationarizedSeries& a, const stationarity::StationarizedSeries& b) {
    const int order = std::max(a.difference_order, b.difference_order);
    return {stationarity::difference(a.source, order), stationarity::difference(b.source, order)};
}

inline BidirectionalResult bidirectional_test(const stationarity::StationarizedSeries& a,
                                              const stationarity::StationarizedSeries& b,
                                              std::size_t max_lag = kDefaultMaxLag,
                                              double alpha = kDefaultAlpha) {
    auto [va, vb] = common_order(a, b);
    BidirectionalResult out;
    out.forward = granger_test(va, vb, max_lag);
    out.forward.source = a.key;
    out.forward.target = b.key;
    out.forward.phase = a.phase;
    out.reverse = granger_test(vb, va, max_lag);
    out.reverse.source = b.key;
    out.reverse.target = a.key;
    out.reverse.phase = a.phase;
    out.asymmetric = is_asymmetric(out.forward, out.reverse, alpha);
    return out;
}

// ---------------------------------------------------------------------------
// Causal graphs
// ---------------------------------------------------------------------------

struct GraphOptions {
    double alpha = kDefaultAlpha;
    std::size_t max_lag = kDefaultMaxLag;
    double adf_alpha = 0.05;
    std::size_t leading_trim = 0;
    /// Benjamini-Hochberg over all directed tests of the phase.
    bool benjamini_hochberg = false;
};

struct SeriesDiagnostic {
    SeriesKey key;
    PhaseLabel phase{};
    std::optional<stationarity::AdfResult> adf;
    int difference_order = 0;
    bool excluded = false;
    std::string reason;
};

struct CausalGraph {
    PhaseLabel phase{};
    std::vector<SeriesKey> nodes;
    /// Significant directed results, sorted by (source, target).
    std::vector<GrangerResult> links;
    /// Every directed test that ran, sorted by (source, target).
    std::vector<GrangerResult> tests;
    std::map<TenantId, std::size_t> out_degree;
    std::map<TenantId, std::size_t> in_degree;
    std::vector<SeriesDiagnostic> diagnostics;
    std::size_t skipped_pairs = 0;

    [[nodiscard]] std::size_t link_count() const noexcept { return links.size(); }

    [[nodiscard]] const GrangerResult* find_test(const SeriesKey& src, const SeriesKey& dst) const {
        for (const auto& t : tests)
            if (t.source == src && t.target == dst) return &t;
        return nullptr;
    }

    [[nodiscard]] bool has_link(const SeriesKey& src, const SeriesKey& dst) const {
        for (const auto& l : links)
            if (l.source == src && l.target == dst) return true;
        return false;
    }

    [[nodiscard]] std::size_t cross_tenant_link_count() const {
        return static_cast<std::size_t>(std::count_if(links.begin(), links.end(), [](const auto& l) {
            return l.source.tenant != l.target.tenant;
        }));
    }

    /// Tenant with the strictly largest out-degree, if any.
    [[nodiscard]] std::optional<TenantId> hub() const {
        std::optional<TenantId> best;
        std::size_t best_deg = 0;
        bool tie = false;
        for (const auto& [tenant, deg] : out_degree) {
            if (!best || deg > best_deg) {
                best = tenant;
                best_deg = deg;
                tie = false;
            } else if (deg == best_deg) {
                tie = true;
            }
        }
        if (tie || best_deg == 0) return std::nullopt;
        return best;
    }
};

/// Adjusted significance flags for Benjamini-Hochberg at level alpha.
inline std::vector<bool> benjamini_hochberg(std::span<const double> p_values, double alpha) {
    const std::size_t m = p_values.size();
    std::vector<std::size_t> order(m);
    for (std::size_t i = 0; i < m; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
    std::size_t cutoff = 0;
    for (std::size_t k = 1; k <= m; ++k)
        if (p_values[order[k - 1]] <= alpha * static_cast<double>(k) / static_cast<double>(m)) cutoff = k;
    std::vector<bool> out(m, false);
    for (std::size_t k = 0; k < cutoff; ++k) out[order[k]] = true;
    return out;
}

inline bool canonical_less(const GrangerResult& a, const GrangerResult& b) {
    if (a.source != b.source) return a.source < b.source;
    return a.target < b.target;
}

/// Pairwise bidirectional Granger tests over every (tenant, metric) node pair of one phase.
inline CausalGraph build_graph(const ExperimentRound& round, PhaseLabel phase,
                               const GraphOptions& opts = {}) {
    CausalGraph g;
    g.phase = phase;

    std::vector<stationarity::StationarizedSeries> eligible;
    stationarity::AdfOptions adf_opts;
    adf_opts.alpha = opts.adf_alpha;
    for (const auto& s : round.series()) {
        g.nodes.push_back(s.key());
        SeriesDiagnostic d{s.key(), phase, std::nullopt, 0, false, {}};
        try {
            auto st = stationarity::stationarize(s, phase, adf_opts, opts.leading_trim);
            d.adf = st.adf;
            d.difference_order = st.difference_order;
            if (st.non_stationary_after_max_diff) {
                d.excluded = true;
                d.reason = "NonStationaryAfterMaxDiff";
            } else {
                eligible.push_back(std::move(st));
            }
        } catch (const Error& e) {
            d.excluded = true;
            d.reason = std::string(to_string(e.code()));
        }
        g.diagnostics.push_back(std::move(d));
    }
    for (const auto& s : round.series()) {
        g.out_degree[s.tenant()];
        g.in_degree[s.tenant()];
    }

    for (std::size_t i = 0; i < eligible.size(); ++i) {
        for (std::size_t j = i + 1; j < eligible.size(); ++j) {
            try {
                auto r = bidirectional_test(eligible[i], eligible[j], opts.max_lag, opts.alpha);
                g.tests.push_back(r.forward);
                g.tests.push_back(r.reverse);
            } catch (const Error&) {
                ++g.skipped_pairs;
            }
        }
    }
    std::sort(g.tests.begin(), g.tests.end(), canonical_less);

    std::vector<bool> significant(g.tests.size());
    if (opts.benjamini_hochberg) {
        std::vector<double> p;
        for (const auto& t : g.tests) p.push_back(t.p_value);
        significant = benjamini_hochberg(p, opts.alpha);
    } else {
        for (std::size_t k = 0; k < g.tests.size(); ++k) significant[k] = g.tests[k].p_value < opts.alpha;
    }
    for (std::size_t k = 0; k < g.tests.size(); ++k) {
        if (!significant[k]) continue;
        const auto& t = g.tests[k];
        g.links.push_back(t);
        ++g.out_degree[t.source.tenant];
        ++g.in_degree[t.target.tenant];
    }
    return g;
}

/// Percent change in link count relative to the baseline graph.
inline double graph_density_delta(std::size_t baseline_links, std::size_t noise_links) {
    if (baseline_links == 0) throw Error(Errc::EmptyBaselineGraph, "baseline graph has no links");
    return 100.0 * (static_cast<double>(noise_links) - static_cast<double>(baseline_links)) /
           static_cast<double>(baseline_links);
}

inline double graph_density_delta(const CausalGraph& baseline, const CausalGraph& noise) {
    return graph_density_delta(baseline.link_count(), noise.link_count());
}

// ---------------------------------------------------------------------------
// Cross-round replication
// ---------------------------------------------------------------------------

struct ReplicationRecord {
    SeriesKey source;
    SeriesKey target;
    PhaseLabel phase{};
    std::size_t rounds_significant = 0;
    std::size_t rounds_total = 0;
    double mean_p = 0.0;
    double std_p = 0.0;  ///< sample std over rounds where the pair was tested

    [[nodiscard]] std::string frequency() const {
        return std::to_string(rounds_significant) + "/" + std::to_string(rounds_total);
    }
};

/// Replication counts for every directed pair that was significant in at least one round.
inline std::vector<ReplicationRecord> replication(std::span<const CausalGraph> graphs, PhaseLabel phase) {
    if (graphs.size() < 2) throw Error(Errc::InvalidArgument, "replication needs >= 2 rounds");
    std::map<std::pair<SeriesKey, SeriesKey>, ReplicationRecord> acc;
    for (const auto& g : graphs) {
        if (g.phase != phase) continue;
        for (const auto& l : g.links) {
            auto& rec = acc[{l.source, l.target}];
            rec.source = l.source;
            rec.target = l.target;
            rec.phase = phase;
            ++rec.rounds_significant;
        }
    }
    std::vector<ReplicationRecord> out;
    for (auto& [pair, rec] : acc) {
        std::vector<double> ps;
        for (const auto& g : graphs) {
            if (g.phase != phase) continue;
            if (const auto* t = g.find_test(pair.first, pair.second)) ps.push_back(t->p_value);
        }
        rec.rounds_total = static_cast<std::size_t>(
            std::count_if(graphs.begin(), graphs.end(), [&](const auto& g) { return g.phase == phase; }));
        rec.mean_p = stats::mean(ps);
        rec.std_p = ps.size() >= 2 ? stats::sample_stddev(ps) : 0.0;
        out.push_back(rec);
    }
    return out;
}

}  // namespace noisy::causality
