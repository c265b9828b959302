#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "noisy/ingest.hpp"
#include "noisy/pipeline.hpp"
#include "noisy/report.hpp"
#include "noisy/simulator.hpp"

namespace noisy::verify {

/// One directed Granger test as recorded in a round's test table.
struct Test {
    SeriesKey source;
    SeriesKey target;
    PhaseLabel phase{};
    double p = 1.0;
    bool significant = false;
};

struct RoundTests {
    int round_id = 0;
    std::vector<Test> tests;
};

struct Thresholds {
    double min_tpr = 0.90;
    double max_fpr = 0.10;
    double forward_alpha = 0.05;  ///< forward significance for the asymmetry table
    double reverse_p = causality::kAsymmetryReverseP;
    std::size_t min_forward_rounds = 9;  ///< out of 10, scaled to the round count
    std::size_t min_reverse_rounds = 8;
    double min_density_ratio = 1.5;
};

struct PhaseRates {
    PhaseLabel phase{};
    std::size_t injected = 0;  ///< injected (link, round) instances
    std::size_t detected = 0;
    std::size_t negatives = 0;  ///< non-injected directed tests
    std::size_t false_positives = 0;
    [[nodiscard]] std::optional<double> tpr() const {
        if (!injected) return std::nullopt;
        return static_cast<double>(detected) / static_cast<double>(injected);
    }
    [[nodiscard]] std::optional<double> fpr() const {
        if (!negatives) return std::nullopt;
        return static_cast<double>(false_positives) / static_cast<double>(negatives);
    }
};

struct AsymmetryRow {
    PhaseLabel phase{};
    SeriesKey source;
    SeriesKey target;
    bool from_stressor = false;
    std::size_t forward_significant = 0;
    std::size_t reverse_clear = 0;  ///< reverse p above the reverse threshold
    std::size_t rounds = 0;
};

struct RoundGraphCheck {
    int round_id = 0;
    std::size_t baseline_links = 0;
    std::size_t combined_links = 0;
    std::optional<TenantId> hub;
};

struct Report {
    std::vector<PhaseRates> phases;
    std::vector<AsymmetryRow> asymmetry;
    std::vector<RoundGraphCheck> graphs;
    std::set<TenantId> stressors;
    bool recovery_ok = true;
    bool asymmetry_ok = true;
    bool density_ok = true;
    bool hub_ok = true;
};

inline std::vector<RoundTests> from_analysis(const pipeline::Analysis& an) {
    std::vector<RoundTests> out;
    for (const auto& r : an.rounds) {
        RoundTests rt{r.round_id, {}};
        for (const auto& g : r.graphs)
            for (const auto& t : g.tests)
                rt.tests.push_back({t.source, t.target, t.phase, t.p_value, g.has_link(t.source, t.target)});
        out.push_back(std::move(rt));
    }
    return out;
}

namespace detail {

inline std::vector<Test> read_edge_table(const std::filesystem::path& path) {
    const auto text = ingest::read_file(path);
    std::vector<Test> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string_view line(text.data() + pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line_no == 1) {
            if (line != report::kEdgeHeader) throw Error(Errc::MalformedRow, path.string() + ":1: bad header");
            continue;
        }
        if (line.empty()) continue;
        const auto f = ingest::detail::split(line, ',');
        auto bad = [&] { return Error(Errc::MalformedRow, path.string() + ":" + std::to_string(line_no) + ": bad row"); };
        if (f.size() != 8) throw bad();
        const auto m1 = parse_metric_code(f[1]);
        const auto m2 = parse_metric_code(f[3]);
        const auto ph = parse_phase_name(f[4]);
        const auto p = ingest::detail::parse_double(f[7]);
        if (!m1 || !m2 || !ph || !p || f[0].empty() || f[2].empty()) throw bad();
        out.push_back({{TenantId(std::string(f[0])), *m1}, {TenantId(std::string(f[2])), *m2}, *ph, *p, false});
    }
    return out;
}

}  // namespace detail

/// Reads `round-*/tests.csv` and `round-*/edges.csv` written by the analysis.
inline std::vector<RoundTests> read_analysis_dir(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw Error(Errc::Io, "not a directory: " + dir.string());
    std::vector<std::pair<int, fs::path>> dirs;
    for (const auto& e : fs::directory_iterator(dir, ec)) {
        const auto name = e.path().filename().string();
        if (!e.is_directory() || name.rfind("round-", 0) != 0) continue;
        try {
            dirs.emplace_back(std::stoi(name.substr(6)), e.path());
        } catch (const std::exception&) {
        }
    }
    if (ec) throw Error(Errc::Io, "cannot list " + dir.string());
    std::sort(dirs.begin(), dirs.end());
    std::vector<RoundTests> out;
    for (const auto& [id, path] : dirs) {
        RoundTests rt{id, detail::read_edge_table(path / "tests.csv")};
        std::set<std::tuple<PhaseLabel, SeriesKey, SeriesKey>> sig;
        for (const auto& e : detail::read_edge_table(path / "edges.csv")) sig.insert({e.phase, e.source, e.target});
        for (auto& t : rt.tests) t.significant = sig.contains({t.phase, t.source, t.target});
        out.push_back(std::move(rt));
    }
    return out;
}

/// Scales an "n out of 10" requirement to the available round count (ceil).
inline std::size_t scaled(std::size_t of_ten, std::size_t rounds) { return (of_ten * rounds + 9) / 10; }

inline Report evaluate(const std::vector<RoundTests>& rounds, const sim::GroundTruthSpec& truth,
                       const Thresholds& th = {}) {
    Report rep;
    for (const auto& a : truth.activations) rep.stressors.insert(a.series.tenant);

    using Pair = std::pair<SeriesKey, SeriesKey>;
    std::set<Pair> background;
    for (const auto& b : truth.background) background.insert({b.source, b.target});

    for (auto p : kAllPhases) {
        std::set<Pair> injected;
        for (const auto& l : truth.links_in(p)) injected.insert({l.source, l.target});
        PhaseRates pr{p};
        bool seen = false;
        std::map<Pair, AsymmetryRow> asym;
        for (const auto& l : truth.links_in(p))
            asym[{l.source, l.target}] = {p, l.source, l.target, rep.stressors.contains(l.source.tenant), 0, 0, 0};

        for (const auto& r : rounds) {
            std::map<Pair, const Test*> by_pair;
            for (const auto& t : r.tests)
                if (t.phase == p) by_pair[{t.source, t.target}] = &t;
            if (by_pair.empty()) continue;
            seen = true;
            for (const auto& pair : injected) {
                ++pr.injected;
                auto& row = asym[pair];
                ++row.rounds;
                const auto fwd = by_pair.find(pair);
                if (fwd != by_pair.end() && fwd->second->significant) ++pr.detected;
                if (fwd != by_pair.end() && fwd->second->p < th.forward_alpha) ++row.forward_significant;
                const auto rev = by_pair.find({pair.second, pair.first});
                if (rev != by_pair.end() && rev->second->p > th.reverse_p) ++row.reverse_clear;
            }
            for (const auto& [pair, t] : by_pair) {
                if (injected.contains(pair) || background.contains(pair)) continue;
                ++pr.negatives;
                if (t->significant) ++pr.false_positives;
            }
        }
        if (!seen) continue;
        if (const auto tpr = pr.tpr(); tpr && *tpr < th.min_tpr) rep.recovery_ok = false;
        if (const auto fpr = pr.fpr(); fpr && *fpr > th.max_fpr) rep.recovery_ok = false;
        rep.phases.push_back(pr);
        for (auto& [pair, row] : asym) {
            if (row.from_stressor || rep.stressors.empty()) {
                if (row.forward_significant < scaled(th.min_forward_rounds, row.rounds) ||
                    row.reverse_clear < scaled(th.min_reverse_rounds, row.rounds))
                    rep.asymmetry_ok = false;
            }
            rep.asymmetry.push_back(row);
        }
    }

    for (const auto& r : rounds) {
        RoundGraphCheck g{r.round_id, 0, 0, std::nullopt};
        std::map<TenantId, std::size_t> out_degree;
        bool has_base = false, has_comb = false;
        for (const auto& t : r.tests) {
            has_base |= t.phase == PhaseLabel::Baseline;
            has_comb |= t.phase == PhaseLabel::CombinedNoise;
            if (!t.significant) continue;
            if (t.phase == PhaseLabel::Baseline) ++g.baseline_links;
            if (t.phase == PhaseLabel::CombinedNoise) {
                ++g.combined_links;
                ++out_degree[t.source.tenant];
            }
        }
        if (!has_base || !has_comb) continue;
        std::size_t best = 0;
        bool tie = false;
        for (const auto& [tenant, deg] : out_degree) {
            if (deg > best) {
                best = deg;
                g.hub = tenant;
                tie = false;
            } else if (deg == best) {
                tie = true;
            }
        }
        if (tie) g.hub.reset();
        if (static_cast<double>(g.combined_links) < th.min_density_ratio * static_cast<double>(g.baseline_links))
            rep.density_ok = false;
        if (!g.hub || !rep.stressors.contains(*g.hub) || rep.stressors.size() != 1) rep.hub_ok = false;
        rep.graphs.push_back(g);
    }
    if (rep.graphs.empty()) rep.density_ok = rep.hub_ok = false;
    return rep;
}

}  // namespace noisy::verify
