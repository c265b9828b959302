#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "noisy/ingest.hpp"
#include "noisy/pipeline.hpp"

namespace noisy::report {

inline constexpr std::string_view kSummarySchema = "noisy-summary";
inline constexpr int kSummarySchemaVersion = 1;

inline constexpr std::string_view kImpactHeader = "tenant,metric,phase,pct_change,cohens_d,cv";
inline constexpr std::string_view kAdfHeader = "tenant,metric,phase,adf_stat,lag,difference_order,stationary";
inline constexpr std::string_view kEdgeHeader = "src_tenant,src_metric,dst_tenant,dst_metric,phase,lag,F,p";

using ingest::format_double;

inline std::string round_dir_name(int round_id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "round-%02d", round_id);
    return buf;
}

inline std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

inline std::string key_cols(const SeriesKey& k) { return k.tenant.name + "," + std::string(metric_code(k.metric)); }

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

/// Per-round impacts; the cv column is blank because CV is a cross-round quantity.
inline std::string impact_csv(const pipeline::RoundAnalysis& r) {
    std::string out(kImpactHeader);
    out += '\n';
    for (const auto& rec : r.impacts)
        out += key_cols(rec.key) + "," + std::string(phase_name(rec.phase)) + "," + format_double(rec.pct_change) +
               "," + opt(rec.cohens_d) + ",\n";
    return out;
}

/// Cross-round impacts: mean pct_change, mean d and CV over rounds.
inline std::string impact_csv(const std::vector<pipeline::ImpactSummary>& rows) {
    std::string out(kImpactHeader);
    out += '\n';
    for (const auto& s : rows)
        out += key_cols(s.key) + "," + std::string(phase_name(s.phase)) + "," + format_double(s.mean_pct) + "," +
               opt(s.mean_d) + "," + opt(s.cv) + "\n";
    return out;
}

inline std::string adf_csv(const pipeline::RoundAnalysis& r) {
    std::string out(kAdfHeader);
    out += '\n';
    for (const auto& g : r.graphs)
        for (const auto& d : g.diagnostics) {
            out += key_cols(d.key) + "," + std::string(phase_name(d.phase)) + ",";
            if (d.adf)
                out += format_double(d.adf->statistic) + "," + std::to_string(d.adf->chosen_lag) + "," +
                       std::to_string(d.difference_order) + "," + (d.excluded ? "false" : "true");
            else
                out += ",,," + std::string("false");
            out += '\n';
        }
    return out;
}

inline std::string edge_row(const causality::GrangerResult& t) {
    return key_cols(t.source) + "," + key_cols(t.target) + "," + std::string(phase_name(t.phase)) + "," +
           std::to_string(t.lag) + "," + format_double(t.f_statistic) + "," + format_double(t.p_value) + "\n";
}

/// Significant links of every phase.
inline std::string edges_csv(const pipeline::RoundAnalysis& r) {
    std::string out(kEdgeHeader);
    out += '\n';
    for (const auto& g : r.graphs)
        for (const auto& l : g.links) out += edge_row(l);
    return out;
}

/// Every directed test that ran, significant or not, in the edge-list layout.
inline std::string tests_csv(const pipeline::RoundAnalysis& r) {
    std::string out(kEdgeHeader);
    out += '\n';
    for (const auto& g : r.graphs)
        for (const auto& t : g.tests) out += edge_row(t);
    return out;
}

/// Square matrix of -log10(p) for significant links (0 elsewhere); rows are sources.
inline std::string adjacency_csv(const causality::CausalGraph& g) {
    std::string out = "source";
    for (const auto& n : g.nodes) out += "," + to_string(n);
    out += '\n';
    for (const auto& src : g.nodes) {
        out += to_string(src);
        for (const auto& dst : g.nodes) {
            double w = 0.0;
            for (const auto& l : g.links)
                if (l.source == src && l.target == dst) w = -std::log10(std::max(l.p_value, 1e-300));
            out += "," + format_double(w);
        }
        out += '\n';
    }
    return out;
}

inline nlohmann::json key_json(const SeriesKey& k) {
    return {{"tenant", k.tenant.name}, {"metric", std::string(metric_code(k.metric))}};
}

inline nlohmann::json graph_json(const causality::CausalGraph& g) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : g.nodes) nodes.push_back(key_json(n));
    nlohmann::json links = nlohmann::json::array();
    for (const auto& l : g.links)
        links.push_back({{"source", key_json(l.source)},
                         {"target", key_json(l.target)},
                         {"lag", l.lag},
                         {"F", l.f_statistic},
                         {"p", l.p_value}});
    nlohmann::json excluded = nlohmann::json::array();
    for (const auto& d : g.diagnostics)
        if (d.excluded) excluded.push_back({{"node", key_json(d.key)}, {"reason", d.reason}});
    nlohmann::json out_degree = nlohmann::json::object();
    for (const auto& [t, deg] : g.out_degree) out_degree[t.name] = deg;
    const auto hub = g.hub();
    return {{"phase", std::string(phase_name(g.phase))},
            {"nodes", nodes},
            {"links", links},
            {"link_count", g.link_count()},
            {"excluded", excluded},
            {"out_degree", out_degree},
            {"hub", hub ? nlohmann::json(hub->name) : nlohmann::json(nullptr)},
            {"skipped_pairs", g.skipped_pairs}};
}

inline std::string signatures_csv(const pipeline::RoundAnalysis& r) {
    std::string out = "tenant,metric,phase,median_shift,tail_flatness,step_height,step_sharpness,class\n";
    for (const auto& s : r.signatures)
        out += key_cols(s.key) + "," + std::string(phase_name(s.phase)) + "," +
               format_double(s.features.median_shift) + "," + format_double(s.features.tail_flatness) + "," +
               format_double(s.features.step_height) + "," + format_double(s.features.step_sharpness) + "," +
               std::string(stats::to_string(s.label)) + "\n";
    return out;
}

inline std::string coupling_csv(const pipeline::RoundAnalysis& r) {
    std::string out = "tenant_a,tenant_b,metric,phase,value\n";
    for (const auto& c : r.coupling)
        out += c.tenant_a.name + "," + c.tenant_b.name + "," + std::string(metric_code(c.metric)) + "," +
               std::string(phase_name(c.phase)) + "," + format_double(c.value) + "\n";
    return out;
}

inline std::string replication_csv(const std::vector<pipeline::PhaseSummary>& phases) {
    std::string out = "src_tenant,src_metric,dst_tenant,dst_metric,phase,rounds_significant,rounds_total,mean_p,std_p\n";
    for (const auto& ps : phases)
        for (const auto& r : ps.replication)
            out += key_cols(r.source) + "," + key_cols(r.target) + "," + std::string(phase_name(r.phase)) + "," +
                   std::to_string(r.rounds_significant) + "," + std::to_string(r.rounds_total) + "," +
                   format_double(r.mean_p) + "," + format_double(r.std_p) + "\n";
    return out;
}

/// Two-column (value, cdf) step corners.
inline std::string ecdf_csv(const stats::EcdfCurve& c) {
    std::string out = "value,cdf\n";
    for (const auto& [x, f] : c.points()) out += format_double(x) + "," + format_double(f) + "\n";
    return out;
}

inline nlohmann::json impacts_json(const pipeline::Analysis& an) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : an.impacts) {
        nlohmann::json row = {{"tenant", s.key.tenant.name},
                              {"metric", std::string(metric_code(s.key.metric))},
                              {"phase", std::string(phase_name(s.phase))},
                              {"rounds", s.rounds},
                              {"mean_pct_change", s.mean_pct}};
        if (s.mean_d) row["mean_cohens_d"] = *s.mean_d;
        if (s.cv) row["cv"] = *s.cv;
        nlohmann::json per_round = nlohmann::json::array();
        for (const auto& r : an.rounds)
            for (const auto& rec : r.impacts)
                if (rec.key == s.key && rec.phase == s.phase) {
                    nlohmann::json pr = {{"round", r.round_id}, {"pct_change", rec.pct_change}};
                    if (rec.cohens_d) pr["cohens_d"] = *rec.cohens_d;
                    per_round.push_back(pr);
                }
        row["per_round"] = per_round;
        arr.push_back(row);
    }
    return arr;
}

// ---------------------------------------------------------------------------
// Summary
// ---------------------------------------------------------------------------

inline nlohmann::json summary_json(const pipeline::Analysis& an, const std::vector<std::string>& warnings) {
    const auto& o = an.options;
    nlohmann::json rounds = nlohmann::json::array();
    for (const auto& r : an.rounds) rounds.push_back(r.round_id);

    nlohmann::json phases = nlohmann::json::array();
    for (const auto& ps : an.phases) {
        nlohmann::json deltas = nlohmann::json::array();
        nlohmann::json hubs = nlohmann::json::array();
        double delta_sum = 0.0;
        std::size_t delta_n = 0;
        for (const auto& d : ps.density_delta_pct) {
            deltas.push_back(d ? nlohmann::json(*d) : nlohmann::json(nullptr));
            if (d) {
                delta_sum += *d;
                ++delta_n;
            }
        }
        for (const auto& h : ps.hubs) hubs.push_back(h ? nlohmann::json(h->name) : nlohmann::json(nullptr));
        double count_sum = 0.0;
        for (auto c : ps.link_counts) count_sum += static_cast<double>(c);
        phases.push_back({{"phase", std::string(phase_name(ps.phase))},
                          {"link_counts", ps.link_counts},
                          {"mean_link_count", count_sum / static_cast<double>(ps.link_counts.size())},
                          {"density_delta_pct", deltas},
                          {"mean_density_delta_pct",
                           delta_n ? nlohmann::json(delta_sum / static_cast<double>(delta_n)) : nlohmann::json(nullptr)},
                          {"hubs", hubs}});
    }

    std::map<std::pair<SeriesKey, PhaseLabel>, std::map<std::string, int>> sig;
    for (const auto& r : an.rounds)
        for (const auto& s : r.signatures) ++sig[{s.key, s.phase}][std::string(stats::to_string(s.label))];
    nlohmann::json signatures = nlohmann::json::array();
    for (const auto& [k, counts] : sig) {
        std::string majority;
        int best = -1;
        for (const auto& [label, n] : counts)
            if (n > best) {
                best = n;
                majority = label;
            }
        signatures.push_back({{"tenant", k.first.tenant.name},
                              {"metric", std::string(metric_code(k.first.metric))},
                              {"phase", std::string(phase_name(k.second))},
                              {"counts", counts},
                              {"majority", majority}});
    }

    return {{"schema", std::string(kSummarySchema)},
            {"schema_version", kSummarySchemaVersion},
            {"options",
             {{"alpha", o.alpha},
              {"max_lag", o.max_lag},
              {"adf_alpha", o.adf_alpha},
              {"leading_trim", o.leading_trim},
              {"benjamini_hochberg", o.benjamini_hochberg}}},
            {"rounds", rounds},
            {"insufficient_rounds", an.insufficient_rounds},
            {"warnings", warnings},
            {"phases", phases},
            {"impacts", impacts_json(an)},
            {"signatures", signatures}};
}

/// Writes the full analysis under `dir` and returns the written paths,
/// relative to `dir`, in the order written.
inline std::vector<std::string> write_analysis(const pipeline::Analysis& an,
                                               const std::vector<ExperimentRound>& rounds,
                                               const std::filesystem::path& dir,
                                               const std::vector<std::string>& warnings) {
    namespace fs = std::filesystem;
    std::vector<std::string> written;
    auto mkdir = [](const fs::path& p) {
        std::error_code ec;
        fs::create_directories(p, ec);
        if (ec || !fs::is_directory(p)) throw Error(Errc::Io, "cannot create directory " + p.string());
    };
    auto put = [&](const fs::path& rel, std::string_view content) {
        ingest::atomic_write(dir / rel, content);
        written.push_back(rel.generic_string());
    };
    mkdir(dir);

    for (std::size_t i = 0; i < an.rounds.size(); ++i) {
        const auto& r = an.rounds[i];
        const fs::path rd = round_dir_name(r.round_id);
        mkdir(dir / rd / "ecdf");
        put(rd / "impact.csv", impact_csv(r));
        put(rd / "adf.csv", adf_csv(r));
        put(rd / "edges.csv", edges_csv(r));
        put(rd / "tests.csv", tests_csv(r));
        put(rd / "signatures.csv", signatures_csv(r));
        put(rd / "coupling.csv", coupling_csv(r));
        for (const auto& g : r.graphs) {
            const std::string ph(phase_name(g.phase));
            put(rd / ("graph-" + ph + ".json"), graph_json(g).dump(2) + "\n");
            put(rd / ("adjacency-" + ph + ".csv"), adjacency_csv(g));
        }
        for (const auto& s : rounds[i].series())
            for (auto p : r.phases) {
                const auto v = phase_values(s, p, an.options.leading_trim);
                if (v.empty()) continue;
                put(rd / "ecdf" / (s.tenant().name + "_" + std::string(metric_code(s.metric())) + "_" +
                                   std::string(phase_name(p)) + ".csv"),
                    ecdf_csv(stats::EcdfCurve(v)));
            }
    }
    put("impact.csv", impact_csv(an.impacts));
    put("impact.json", impacts_json(an).dump(2) + "\n");
    if (!an.insufficient_rounds) put("replication.csv", replication_csv(an.phases));
    put("summary.json", summary_json(an, warnings).dump(2) + "\n");
    return written;
}

}  // namespace noisy::report
