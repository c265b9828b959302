// noisy: simulate multi-tenant traces, analyse them, and check recovered
// causal links against the simulator's ground truth.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "noisy/ingest.hpp"
#include "noisy/pipeline.hpp"
#include "noisy/report.hpp"
#include "noisy/simulator.hpp"
#include "noisy/verify.hpp"

#ifndef NOISY_VERSION
#define NOISY_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace noisy;

namespace {

enum Exit : int {
    kOk = 0,
    kFailed = 1,
    kBadFlags = 2,
    kIo = 3,
    kParse = 4,
    kNoRounds = 5,
    kNoTruth = 6,
};

struct Fail {
    int code;
    std::string message;
};

int input_error_code(const Error& e) { return e.code() == Errc::Io ? kIo : kParse; }

fs::path default_out(const char* leaf) {
    if (const char* env = std::getenv("NOISY_OUT_DIR"); env && *env) return fs::path(env) / leaf;
    return leaf;
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Reproducible builds convention: honour SOURCE_DATE_EPOCH, otherwise the
// epoch itself, so identical runs produce identical manifests.
std::string manifest_timestamp() {
    std::time_t t = 0;
    if (const char* env = std::getenv("SOURCE_DATE_EPOCH"); env && *env) {
        try {
            t = static_cast<std::time_t>(std::stoll(env));
        } catch (const std::exception&) {
            t = 0;
        }
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_manifest(const fs::path& dir, const std::string& command, const std::string& canonical_config,
                    std::optional<std::uint64_t> seed, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
    nlohmann::json m = {{"command", command},
                        {"config_hash", hex64(sim::detail::fnv1a64(canonical_config))},
                        {"seed", seed ? nlohmann::json(*seed) : nlohmann::json(nullptr)},
                        {"inputs", inputs},
                        {"outputs", outputs},
                        {"tool_version", NOISY_VERSION},
                        {"timestamp", manifest_timestamp()}};
    ingest::atomic_write(dir / "manifest.json", m.dump(2) + "\n");
}

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw Fail{kIo, "cannot create output directory " + dir.string()};
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::optional<int> rounds;
    std::optional<std::uint64_t> seed;
    std::string profile = "paper";
    fs::path out;
};

int cmd_simulate(const SimulateArgs& a) {
    sim::SimConfig cfg;
    if (a.profile == "paper") {
        cfg = sim::default_profile();
    } else if (a.profile.rfind("custom:", 0) == 0) {
        const fs::path file = a.profile.substr(7);
        try {
            cfg = sim::read_config(file);
        } catch (const Error& e) {
            throw Fail{input_error_code(e), e.what()};
        }
    } else {
        throw Fail{kBadFlags, "--profile must be 'paper' or 'custom:<file>'"};
    }
    if (a.rounds) cfg.rounds = *a.rounds;
    if (a.seed) cfg.seed = *a.seed;

    sim::SimulationResult res;
    try {
        res = sim::simulate(cfg);
    } catch (const Error& e) {
        if (e.code() == Errc::InvalidArgument && a.profile == "paper") throw Fail{kBadFlags, e.what()};
        throw Fail{kParse, e.what()};
    }

    make_dir(a.out);
    std::vector<std::string> outputs;
    for (const auto& r : res.rounds) {
        const auto name = report::round_dir_name(r.round_id()) + ".csv";
        ingest::write_csv(r, a.out / name);
        outputs.push_back(name);
    }
    auto truth_cfg = cfg;
    truth_cfg.truth = res.truth;
    sim::write_ground_truth(truth_cfg, a.out / "ground_truth.json");
    outputs.push_back("ground_truth.json");
    write_manifest(a.out, "simulate", sim::to_json(cfg).dump(), cfg.seed,
                   a.profile == "paper" ? std::vector<std::string>{} : std::vector<std::string>{a.profile.substr(7)},
                   outputs);
    std::cout << "wrote " << res.rounds.size() << " rounds to " << a.out.string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

struct AnalyzeArgs {
    std::vector<std::string> inputs;
    double alpha = causality::kDefaultAlpha;
    std::size_t max_lag = causality::kDefaultMaxLag;
    std::size_t trim = 0;
    bool bh = false;
    unsigned threads = 0;
    double phase_seconds = 1000.0;
    fs::path out;
};

bool is_trace_file(const fs::path& p) {
    const auto name = p.filename().string();
    if (name == "ground_truth.json" || name == "manifest.json") return false;
    const auto ext = p.extension().string();
    return ext == ".csv" || ext == ".json";
}

std::vector<fs::path> collect_inputs(const std::vector<std::string>& args) {
    std::vector<fs::path> files;
    for (const auto& a : args) {
        const fs::path p(a);
        std::error_code ec;
        if (fs::is_directory(p, ec)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::directory_iterator(p, ec))
                if (e.is_regular_file() && is_trace_file(e.path())) found.push_back(e.path());
            if (ec) throw Fail{kIo, "cannot list " + p.string()};
            std::sort(found.begin(), found.end());
            files.insert(files.end(), found.begin(), found.end());
        } else if (fs::is_regular_file(p, ec)) {
            files.push_back(p);
        } else {
            throw Fail{kIo, "no such input: " + a};
        }
    }
    return files;
}

// Round id from a trailing number in the file stem ("round-07.csv" -> 7).
std::optional<int> round_id_from_name(const fs::path& p) {
    static const std::regex trailing(R"((\d+)$)");
    std::smatch m;
    const auto stem = p.stem().string();
    if (!std::regex_search(stem, m, trailing)) return std::nullopt;
    try {
        return std::stoi(m[1].str());
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

int cmd_analyze(const AnalyzeArgs& a) {
    std::vector<std::string> warnings;
    auto warn = [&](const std::string& w) {
        std::cerr << "warning: " << w << "\n";
        warnings.push_back(w);
    };
    if (a.alpha > 0.10) warn("alpha " + ingest::format_double(a.alpha) + " is unusually permissive");
    if (a.alpha < 1e-4) warn("alpha " + ingest::format_double(a.alpha) + " is very strict; expect lost links");

    const auto files = collect_inputs(a.inputs);
    const auto schedule = PhaseSchedule::standard(a.phase_seconds);
    std::vector<ExperimentRound> rounds;
    std::set<int> ids;
    std::vector<std::string> input_names;
    std::string hash_material;
    for (std::size_t i = 0; i < files.size(); ++i) {
        const auto& f = files[i];
        int id = round_id_from_name(f).value_or(static_cast<int>(i) + 1);
        if (ids.contains(id)) id = *ids.rbegin() + 1;
        std::optional<ExperimentRound> round;
        try {
            if (ingest::detect_format(f) == ingest::TraceFileFormat::LongCsv) {
                round = ingest::parse_csv(f, schedule, id);
            } else {
                auto imp = ingest::parse_prometheus_matrix(f, ingest::MappingRules::cadvisor(), schedule, id);
                if (imp.counter_resets) warn(f.string() + ": clamped " + std::to_string(imp.counter_resets) + " counter resets");
                round = std::move(imp.round);
            }
            hash_material += f.generic_string() + ":" + hex64(sim::detail::fnv1a64(ingest::read_file(f))) + ";";
        } catch (const Error& e) {
            throw Fail{input_error_code(e), e.what()};
        }
        const auto phases = round->phases_present();
        const bool baseline = std::find(phases.begin(), phases.end(), PhaseLabel::Baseline) != phases.end();
        if (!baseline || phases.size() < 2) {
            warn(f.string() + ": skipped, needs a Baseline phase and at least one other phase");
            continue;
        }
        ids.insert(id);
        input_names.push_back(f.generic_string());
        rounds.push_back(std::move(*round));
    }
    if (rounds.empty()) throw Fail{kNoRounds, "no valid rounds to analyse"};
    if (rounds.size() < 2) warn("insufficient rounds: CV and replication need at least 2");

    pipeline::AnalysisOptions opts;
    opts.alpha = a.alpha;
    opts.max_lag = a.max_lag;
    opts.leading_trim = a.trim;
    opts.benjamini_hochberg = a.bh;
    opts.threads = a.threads;
    const auto an = pipeline::analyze(rounds, opts);

    make_dir(a.out);
    std::vector<std::string> outputs;
    try {
        outputs = report::write_analysis(an, rounds, a.out, warnings);
    } catch (const Error& e) {
        throw Fail{kIo, e.what()};
    }
    const nlohmann::json canonical = {{"alpha", a.alpha},          {"max_lag", a.max_lag},
                                      {"trim", a.trim},            {"bh", a.bh},
                                      {"phase_seconds", a.phase_seconds}, {"inputs", hash_material}};
    write_manifest(a.out, "analyze", canonical.dump(), std::nullopt, input_names, outputs);

    for (const auto& ps : an.phases) {
        std::cout << phase_name(ps.phase) << ": links";
        for (auto c : ps.link_counts) std::cout << " " << c;
        std::cout << "\n";
    }
    std::cout << "analysed " << rounds.size() << " rounds into " << a.out.string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct VerifyArgs {
    fs::path analysis;
    std::optional<fs::path> truth;
    bool strict = false;
};

// The truth file next to the analysed traces, found via the analysis manifest.
std::optional<fs::path> find_truth(const fs::path& analysis) {
    if (fs::exists(analysis / "ground_truth.json")) return analysis / "ground_truth.json";
    try {
        const auto m = nlohmann::json::parse(ingest::read_file(analysis / "manifest.json"));
        for (const auto& in : m.at("inputs")) {
            const auto cand = fs::path(in.get<std::string>()).parent_path() / "ground_truth.json";
            if (fs::exists(cand)) return cand;
        }
    } catch (const std::exception&) {
    }
    return std::nullopt;
}

std::string rate(const std::optional<double>& v) {
    if (!v) return "   -  ";
    char buf[16];
    std::snprintf(buf, sizeof buf, "%6.3f", *v);
    return buf;
}

int cmd_verify(const VerifyArgs& a) {
    const auto truth_path = a.truth ? std::optional<fs::path>(*a.truth) : find_truth(a.analysis);
    if (!truth_path || !fs::exists(*truth_path)) throw Fail{kNoTruth, "ground truth not found"};
    sim::SimConfig truth;
    try {
        truth = sim::read_config(*truth_path);
    } catch (const Error& e) {
        throw Fail{input_error_code(e), e.what()};
    }
    std::vector<verify::RoundTests> rounds;
    try {
        rounds = verify::read_analysis_dir(a.analysis);
    } catch (const Error& e) {
        throw Fail{input_error_code(e), e.what()};
    }
    if (rounds.empty()) throw Fail{kNoRounds, "no analysed rounds under " + a.analysis.string()};

    const auto rep = verify::evaluate(rounds, truth.truth);
    std::printf("%-14s %9s %9s %6s %10s %6s %6s\n", "phase", "injected", "detected", "TPR", "negatives", "FP", "FPR");
    for (const auto& p : rep.phases)
        std::printf("%-14s %9zu %9zu %s %10zu %6zu %s\n", std::string(phase_name(p.phase)).c_str(), p.injected,
                    p.detected, rate(p.tpr()).c_str(), p.negatives, p.false_positives, rate(p.fpr()).c_str());
    std::printf("\nasymmetry (forward p<0.05, reverse p>0.10)\n");
    for (const auto& r : rep.asymmetry)
        std::printf("%-14s %-18s -> %-18s fwd %zu/%zu rev %zu/%zu%s\n", std::string(phase_name(r.phase)).c_str(),
                    to_string(r.source).c_str(), to_string(r.target).c_str(), r.forward_significant, r.rounds,
                    r.reverse_clear, r.rounds, r.from_stressor ? "" : "  (not from stressor)");
    std::printf("\nround  baseline  combined  ratio  hub\n");
    for (const auto& g : rep.graphs) {
        const double ratio = g.baseline_links ? static_cast<double>(g.combined_links) / g.baseline_links : 0.0;
        std::printf("%5d %9zu %9zu %6.2f  %s\n", g.round_id, g.baseline_links, g.combined_links, ratio,
                    g.hub ? g.hub->name.c_str() : "-");
    }
    auto verdict = [](bool ok) { return ok ? "pass" : "FAIL"; };
    std::printf("\nrecovery %s, asymmetry %s, density %s, hub %s\n", verdict(rep.recovery_ok),
                verdict(rep.asymmetry_ok), verdict(rep.density_ok), verdict(rep.hub_ok));
    bool ok = rep.recovery_ok;
    if (a.strict) ok = ok && rep.asymmetry_ok && rep.density_ok && rep.hub_ok;
    return ok ? kOk : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Noisy-neighbor trace simulation and causal analysis"};
    app.set_version_flag("--version", NOISY_VERSION);
    app.require_subcommand(1);

    SimulateArgs sa;
    sa.out = default_out("runs");
    auto* sim_cmd = app.add_subcommand("simulate", "Generate synthetic rounds with known causal links");
    sim_cmd->add_option("--rounds", sa.rounds, "Number of rounds")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--seed", sa.seed, "Master seed");
    sim_cmd->add_option("--profile", sa.profile, "paper | custom:<file>")->capture_default_str();
    sim_cmd->add_option("--out", sa.out, "Output directory (default $NOISY_OUT_DIR/runs)")->capture_default_str();

    AnalyzeArgs aa;
    aa.out = default_out("analysis");
    auto* an_cmd = app.add_subcommand("analyze", "Impact, stationarity, causal graphs and cross-round summary");
    an_cmd->add_option("--input", aa.inputs, "Round files or directories")->required();
    an_cmd->add_option("--alpha", aa.alpha, "Granger significance level")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    an_cmd->add_option("--max-lag", aa.max_lag, "Largest Granger lag considered")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    an_cmd->add_option("--trim", aa.trim, "Samples dropped at the start of each phase")->capture_default_str();
    an_cmd->add_flag("--bh", aa.bh, "Benjamini-Hochberg correction across each phase's tests");
    an_cmd->add_option("--threads", aa.threads, "Rounds analysed concurrently (0 = all cores)");
    an_cmd->add_option("--phase-seconds", aa.phase_seconds, "Phase length for inputs without a phase column")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    an_cmd->add_option("--out", aa.out, "Output directory (default $NOISY_OUT_DIR/analysis)")->capture_default_str();

    VerifyArgs va;
    auto* ver_cmd = app.add_subcommand("verify", "Score an analysis against the simulator's ground truth");
    ver_cmd->add_option("--analysis", va.analysis, "Directory written by analyze")->required();
    ver_cmd->add_option("--truth", va.truth, "ground_truth.json (default: found via the analysis manifest)");
    ver_cmd->add_flag("--strict", va.strict, "Also require asymmetry, density and hub checks to pass");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kBadFlags;
    }

    try {
        if (*sim_cmd) return cmd_simulate(sa);
        if (*an_cmd) {
            if (!(aa.alpha > 0.0 && aa.alpha < 1.0)) throw Fail{kBadFlags, "--alpha must be in (0, 1)"};
            return cmd_analyze(aa);
        }
        if (*ver_cmd) return cmd_verify(va);
    } catch (const Fail& f) {
        std::cerr << "error: " << f.message << "\n";
        return f.code;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == Errc::Io ? kIo : kFailed;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailed;
    }
    return kBadFlags;
}
