// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "noisy/causality.hpp"
#include "noisy/pipeline.hpp"
#include "noisy/report.hpp"
#include "noisy/simulator.hpp"
#include "noisy/special.hpp"
#include "noisy/stationarity.hpp"
#include "noisy/stats.hpp"
#include "noisy/verify.hpp"
#include "test_support.hpp"

using namespace noisy;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = true;
    std::ostringstream detail;
    void require(bool ok, const std::string& why) {
        if (!ok) {
            if (pass) detail << " | ";
            else detail << "; ";
            detail << why;
        }
        pass = pass && ok;
    }
};

int failures = 0;

void report_line(int id, const char* name, Outcome& o, const std::string& summary) {
    std::printf("[%s] %2d %-28s %s%s\n", o.pass ? "PASS" : "FAIL", id, name, summary.c_str(), o.detail.str().c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---------------------------------------------------------------------------

void granger_oracle() {
    Outcome o;
    const auto cases = testing::load_fixture("granger_reference.json");
    double max_rel = 0, max_p = 0;
    const auto t0 = Clock::now();
    for (const auto& c : cases) {
        const auto x = c["x"].get<std::vector<double>>();
        const auto y = c["y"].get<std::vector<double>>();
        const auto g = causality::granger_f_test(x, y, c["lag"].get<std::size_t>());
        const double f_ref = c["f_statistic"];
        max_rel = std::max(max_rel, std::abs(g.f_statistic - f_ref) / std::abs(f_ref));
        max_p = std::max(max_p, std::abs(g.p_value - c["p_value"].get<double>()));
    }
    const double dt = seconds_since(t0);
    o.require(cases.size() == 20, "expected 20 fixtures");
    o.require(max_rel <= 1e-8, "F relative error");
    o.require(max_p <= 1e-10, "p absolute error");
    o.require(dt < 5.0, "runtime");
    report_line(1, "granger oracle", o,
                fmt("n=%zu maxrelF=%.2e maxabsP=%.2e %.3fs", cases.size(), max_rel, max_p, dt));
}

void adf_oracle() {
    Outcome o;
    const auto cases = testing::load_fixture("adf_reference.json");
    double max_err = 0;
    std::size_t verdict_mismatch = 0;
    const auto t0 = Clock::now();
    for (const auto& c : cases) {
        const auto v = c["values"].get<std::vector<double>>();
        stationarity::AdfOptions opt;
        opt.max_lag = c["max_lag"].get<std::size_t>();
        const auto r = stationarity::adf_test(v, opt);
        max_err = std::max(max_err, std::abs(r.statistic - c["statistic"].get<double>()));
        if (r.stationary != c["stationary_5pct"].get<bool>()) ++verdict_mismatch;
    }
    const double dt = seconds_since(t0);
    o.require(cases.size() == 10, "expected 10 fixtures");
    o.require(max_err <= 1e-6, "statistic error");
    o.require(verdict_mismatch == 0, "verdict mismatch");
    o.require(dt < 2.0, "runtime");
    report_line(2, "adf oracle", o,
                fmt("n=%zu maxabs=%.2e verdict_mismatch=%zu %.3fs", cases.size(), max_err, verdict_mismatch, dt));
}

void f_cdf() {
    Outcome o;
    double closed = 0;
    for (int i = 1; i <= 100; ++i) {
        const double x = 0.1 * i;
        const double ref = 2.0 / std::numbers::pi * std::atan(std::sqrt(x));
        closed = std::max(closed, std::abs(special::f_distribution_cdf(x, 1, 1) - ref));
    }
    double frozen = 0, max_d1 = 0, max_d2 = 0;
    const auto cases = testing::load_fixture("fcdf_reference.json");
    for (const auto& c : cases) {
        const double x = c["x"], d1 = c["d1"], d2 = c["d2"];
        frozen = std::max(frozen, std::abs(special::f_distribution_cdf(x, d1, d2) - c["cdf"].get<double>()));
        max_d1 = std::max(max_d1, d1);
        max_d2 = std::max(max_d2, d2);
    }
    o.require(closed <= 1e-10, "closed form");
    o.require(frozen <= 1e-10, "frozen values");
    o.require(max_d1 >= 10 && max_d2 >= 500, "reference grid does not reach (10,500)");
    report_line(3, "f-distribution cdf", o,
                fmt("arctan=%.2e frozen=%.2e (n=%zu, df up to %g,%g)", closed, frozen, cases.size(), max_d1, max_d2));
}

// ---------------------------------------------------------------------------
// Default-profile run shared by criteria 4 to 10.

struct DefaultRun {
    sim::SimulationResult sim;
    pipeline::Analysis analysis;
    verify::Report report;
    double seconds = 0;
};

DefaultRun run_default_profile() {
    DefaultRun run;
    const auto t0 = Clock::now();
    auto cfg = sim::default_profile();
    cfg.rounds = 10;
    cfg.seed = 42;
    run.sim = sim::simulate(cfg);
    run.analysis = pipeline::analyze(run.sim.rounds);
    // Round-trip through the written tables, as the command-line verify does.
    const auto dir = std::filesystem::temp_directory_path() / "noisy_acceptance";
    std::filesystem::remove_all(dir);
    report::write_analysis(run.analysis, run.sim.rounds, dir, {});
    run.report = verify::evaluate(verify::read_analysis_dir(dir), run.sim.truth);
    run.seconds = seconds_since(t0);
    std::filesystem::remove_all(dir);
    return run;
}

void recovery(const DefaultRun& run) {
    Outcome o;
    std::string rates;
    for (const auto& p : run.report.phases) {
        const auto tpr = p.tpr();
        const auto fpr = p.fpr();
        rates += " " + std::string(phase_name(p.phase)) + "=";
        rates += tpr ? fmt("%.2f", *tpr) : std::string("-");
        rates += fpr ? fmt("/%.3f", *fpr) : std::string("/-");
        if (tpr) o.require(*tpr >= 0.90, std::string(phase_name(p.phase)) + " TPR");
        if (fpr) o.require(*fpr <= 0.10, std::string(phase_name(p.phase)) + " FPR");
    }
    o.require(run.seconds < 60.0, "runtime");
    report_line(4, "ground-truth recovery", o, fmt("%.1fs TPR/FPR:", run.seconds) + rates);
}

void asymmetry(const DefaultRun& run) {
    Outcome o;
    std::size_t rows = 0, min_fwd = 10, min_rev = 10;
    for (const auto& r : run.report.asymmetry) {
        if (!r.from_stressor) continue;
        ++rows;
        min_fwd = std::min(min_fwd, r.forward_significant);
        min_rev = std::min(min_rev, r.reverse_clear);
        if (r.forward_significant < 9)
            o.require(false, to_string(r.source) + "->" + to_string(r.target) + " " +
                                 std::string(phase_name(r.phase)) + fmt(" forward %zu/10", r.forward_significant));
        if (r.reverse_clear < 8)
            o.require(false, to_string(r.source) + "->" + to_string(r.target) + " " +
                                 std::string(phase_name(r.phase)) + fmt(" reverse clear %zu/10", r.reverse_clear));
    }
    o.require(rows > 0, "no stressor links");
    report_line(5, "asymmetry", o, fmt("links=%zu min forward=%zu/10 min reverse clear=%zu/10", rows, min_fwd, min_rev));
}

void density(const DefaultRun& run) {
    Outcome o;
    double min_ratio = 1e300;
    for (const auto& g : run.report.graphs) {
        const double ratio = g.baseline_links ? static_cast<double>(g.combined_links) / g.baseline_links : 1e300;
        min_ratio = std::min(min_ratio, ratio);
        o.require(static_cast<double>(g.combined_links) >= 1.5 * static_cast<double>(g.baseline_links),
                  fmt("round %d %zu vs %zu", g.round_id, g.combined_links, g.baseline_links));
    }
    o.require(run.report.graphs.size() == 10, "expected 10 rounds");
    report_line(6, "density surge", o, fmt("rounds=%zu min Combined/Baseline=%.2f", run.report.graphs.size(), min_ratio));
}

void hub(const DefaultRun& run) {
    Outcome o;
    std::size_t ok = 0;
    for (const auto& g : run.report.graphs)
        if (g.hub && g.hub->name == "tenant-nsy") ++ok;
    o.require(ok == 10 && run.report.graphs.size() == 10, "hub not tenant-nsy in every round");
    report_line(7, "hub dominance", o, fmt("tenant-nsy strict hub in %zu/%zu rounds", ok, run.report.graphs.size()));
}

void calibration(const DefaultRun& run) {
    Outcome o;
    double worst_pp = 0, min_d = 1e300;
    std::size_t n = 0;
    for (const auto& l : run.sim.truth.links) {
        if (!l.primary || !l.target_pct_impact) continue;
        std::vector<double> pct, d;
        for (const auto& r : run.sim.rounds) {
            const auto rec = stats::impact(r.at(l.target), l.phase);
            pct.push_back(rec.pct_change);
            d.push_back(rec.cohens_d ? *rec.cohens_d : 0.0);
        }
        const double err = std::abs(stats::mean(pct) - *l.target_pct_impact);
        const double mean_d = std::abs(stats::mean(d));
        worst_pp = std::max(worst_pp, err);
        min_d = std::min(min_d, mean_d);
        ++n;
        const auto label = to_string(l.target) + " " + std::string(phase_name(l.phase));
        o.require(err <= 2.0, label + fmt(" off by %.2f pp", err));
        o.require(mean_d > 0.8, label + fmt(" |d|=%.2f", mean_d));
    }
    o.require(n > 0, "no primary targets");
    report_line(8, "impact calibration", o,
                fmt("targets=%zu worst=%.2f pp min mean|d|=%.2f", n, worst_pp, min_d));
}

void reproducibility(const DefaultRun& run) {
    Outcome o;
    double worst = 0;
    std::size_t n = 0;
    for (const auto& l : run.sim.truth.links) {
        if (!l.primary) continue;
        for (const auto& s : run.analysis.impacts) {
            if (s.key != l.target || s.phase != l.phase) continue;
            ++n;
            const auto label = to_string(l.target) + " " + std::string(phase_name(l.phase));
            if (!s.cv) {
                o.require(false, label + " has no CV");
                continue;
            }
            worst = std::max(worst, *s.cv);
            o.require(*s.cv < 10.0, label + fmt(" CV %.2f%%", *s.cv));
        }
    }
    o.require(n > 0, "no primary impacts");
    report_line(9, "reproducibility cv", o, fmt("impacts=%zu worst CV=%.2f%%", n, worst));
}

void signatures(const DefaultRun& run) {
    Outcome o;
    using SC = stats::SignatureClass;
    struct Expect {
        const char* tenant;
        MetricKind metric;
        PhaseLabel phase;
        SC label;
    };
    const Expect expected[] = {
        {"tenant-cpu", MetricKind::CpuUsage, PhaseLabel::CpuNoise, SC::UniformShift},
        {"tenant-mem", MetricKind::CpuUsage, PhaseLabel::CpuNoise, SC::UniformShift},
        {"tenant-dsk", MetricKind::DiskIoBytes, PhaseLabel::DiskNoise, SC::TailFlattening},
        {"tenant-ntk", MetricKind::NetworkThroughput, PhaseLabel::NetworkNoise, SC::StepSaturation},
    };
    std::string counts;
    for (const auto& e : expected) {
        const SeriesKey key{TenantId(e.tenant), e.metric};
        std::size_t hits = 0;
        for (const auto& r : run.analysis.rounds)
            for (const auto& s : r.signatures)
                if (s.key == key && s.phase == e.phase && s.label == e.label) ++hits;
        counts += " " + to_string(key) + "=" + std::to_string(hits) + "/10";
        o.require(hits >= 9, to_string(key) + " below 9/10");
    }
    report_line(10, "signature classification", o, "rounds" + counts);
}

// ---------------------------------------------------------------------------
// Invariant properties. Each returns the number of cases run and records any
// violation in the outcome.

std::vector<double> noise(std::size_t n, std::uint64_t seed, double sd = 1.0) {
    return testing::white_noise(n, seed, sd);
}

std::size_t ecdf_monotone(Outcome& o, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> len(1, 200), val(0, 40);
    const std::size_t cases = 150;
    for (std::size_t k = 0; k < cases; ++k) {
        std::vector<double> v(static_cast<std::size_t>(len(rng)));
        for (auto& x : v) x = val(rng) * 0.25;
        const auto f = stats::ecdf(v);
        double prev = 0.0;
        bool ok = f(-1e300) == 0.0 && f(1e300) == 1.0;
        for (double x = -1.0; x <= 11.0; x += 0.125) {
            ok = ok && f(x) >= prev && f(x) <= 1.0;
            prev = f(x);
        }
        o.require(ok, fmt("ecdf case %zu", k));
    }
    return cases;
}

std::size_t cohens_d_affine(Outcome& o, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-5, 5), s(0.1, 3), a(0.01, 100);
    const std::size_t cases = 150;
    for (std::size_t k = 0; k < cases; ++k) {
        auto x = noise(50, 10 + k, s(rng));
        auto y = noise(60, 900 + k, s(rng));
        const double base = 10 + u(rng), shift = u(rng);
        for (auto& v : x) v += base;
        for (auto& v : y) v += base + shift;
        const double d = stats::cohens_d(stats::phase_stats(x), stats::phase_stats(y));
        const double alpha = a(rng), beta = 10 * u(rng);
        for (auto& v : x) v = alpha * v + beta;
        for (auto& v : y) v = alpha * v + beta;
        const double d2 = stats::cohens_d(stats::phase_stats(x), stats::phase_stats(y));
        o.require(std::abs(d - d2) <= 1e-9 * std::max(1.0, std::abs(d)), fmt("cohen d case %zu", k));
    }
    return cases;
}

// Granger F under affine maps of either series, plus RSS nesting (F >= 0).
std::size_t granger_affine_nesting(Outcome& o, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> scale(0.05, 20.0), shift(-50.0, 50.0);
    const std::size_t cases = 120;
    for (std::size_t k = 0; k < cases; ++k) {
        const std::size_t n = 150 + k;
        const auto x = noise(n, 500 + k);
        const auto e = noise(n, 9000 + k);
        std::vector<double> y(n);
        const double coef = 0.1 * static_cast<double>(k % 7);
        y[0] = e[0];
        for (std::size_t t = 1; t < n; ++t) y[t] = coef * x[t - 1] + e[t];
        auto x2 = x, y2 = y;
        const double ax = (k % 2 ? -1 : 1) * scale(rng), bx = shift(rng);
        const double ay = (k % 3 ? 1 : -1) * scale(rng), by = shift(rng);
        for (auto& v : x2) v = ax * v + bx;
        for (auto& v : y2) v = ay * v + by;
        const auto g1 = causality::granger_test(x, y, 5);
        const auto g2 = causality::granger_test(x2, y2, 5);
        o.require(g1.lag == g2.lag &&
                      std::abs(g1.f_statistic - g2.f_statistic) <= 1e-9 * std::max(1.0, g1.f_statistic),
                  fmt("granger affine case %zu", k));
        o.require(g1.rss_unrestricted <= g1.rss_restricted && g1.f_statistic >= 0.0,
                  fmt("rss nesting case %zu", k));
    }
    return cases;
}

std::size_t coupling_symmetric(Outcome& o, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> mix(-2, 2);
    const std::size_t cases = 150;
    for (std::size_t k = 0; k < cases; ++k) {
        const auto a = noise(100, 3 * k + 1);
        auto b = noise(100, 3 * k + 2);
        const double w = mix(rng);
        for (std::size_t i = 0; i < b.size(); ++i) b[i] += w * a[i];
        const double ab = stats::coupling_value(a, b), ba = stats::coupling_value(b, a);
        o.require(std::abs(ab - ba) <= 1e-12 && ab >= 0.0 && ab <= 1.0, fmt("coupling case %zu", k));
    }
    return cases;
}

bool same_bits(const ExperimentRound& a, const ExperimentRound& b) {
    if (a.series().size() != b.series().size()) return false;
    for (std::size_t i = 0; i < a.series().size(); ++i) {
        const auto& x = a.series()[i].values();
        const auto& y = b.series()[i].values();
        if (x.size() != y.size() || std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0) return false;
    }
    return true;
}

std::size_t simulator_determinism(Outcome& o, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t cases = 110;
    for (std::size_t c = 0; c < cases; ++c) {
        sim::SimConfig cfg;
        cfg.rounds = 1;
        cfg.samples_per_phase = 60;
        cfg.seed = rng();
        auto& gt = cfg.truth;
        const SeriesKey src{TenantId("s"), MetricKind::CpuUsage};
        const SeriesKey dst{TenantId("v"), MetricKind::CpuUsage};
        gt.series = {{src, 10.0 * u(rng), 0.9 * u(rng), 0.1 + u(rng)},
                     {dst, 20.0 + 50.0 * u(rng), 0.9 * u(rng), 0.1 + u(rng)}};
        gt.activations = {{PhaseLabel::CombinedNoise, src, 30.0, 5.0}};
        sim::InjectedLink l;
        l.phase = PhaseLabel::CombinedNoise;
        l.source = src;
        l.target = dst;
        l.lag = 1 + static_cast<std::size_t>(3 * u(rng));
        l.gain = u(rng) - 0.5;
        gt.links = {l};
        gt.calibrated = true;
        o.require(same_bits(sim::generate_round(cfg, gt, 1), sim::generate_round(cfg, gt, 1)),
                  fmt("determinism case %zu", c));
    }
    return cases;
}

void invariants(const DefaultRun& run) {
    Outcome o;
    std::mt19937_64 rng(20240611);
    std::string counts;
    const std::pair<const char*, std::function<std::size_t(Outcome&, std::mt19937_64&)>> suites[] = {
        {"ecdf", ecdf_monotone},
        {"cohen-d", cohens_d_affine},
        {"granger", granger_affine_nesting},
        {"coupling", coupling_symmetric},
        {"determinism", simulator_determinism},
    };
    for (const auto& [name, fn] : suites) {
        const auto n = fn(o, rng);
        o.require(n >= 100, std::string(name) + " ran fewer than 100 cases");
        counts += fmt(" %s=%zu", name, n);
    }
    // Full-profile rerun must also be bit-identical.
    auto cfg = sim::default_profile();
    cfg.rounds = 10;
    cfg.seed = 42;
    const auto again = sim::simulate(cfg);
    bool same = again.rounds.size() == run.sim.rounds.size();
    for (std::size_t i = 0; same && i < again.rounds.size(); ++i) same = same_bits(again.rounds[i], run.sim.rounds[i]);
    o.require(same, "default profile rerun differs");
    report_line(11, "invariant suite", o, "cases:" + counts + " profile-rerun=" + (same ? "identical" : "differs"));
}

}  // namespace

int main() {
    try {
        granger_oracle();
        adf_oracle();
        f_cdf();
        const auto run = run_default_profile();
        recovery(run);
        asymmetry(run);
        density(run);
        hub(run);
        calibration(run);
        reproducibility(run);
        signatures(run);
        invariants(run);
    } catch (const std::exception& e) {
        std::printf("[FAIL] aborted: %s\n", e.what());
        return 1;
    }
    std::printf("%d of 11 criteria failed\n", failures);
    return failures ? 1 : 0;
}
