#pragma once

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "noisy/core.hpp"

namespace noisy::ingest {

enum class TraceFileFormat { LongCsv, PrometheusMatrixJson };

/// By extension: `.json` is a Prometheus export, anything else is LongCsv.
inline TraceFileFormat detect_format(const std::filesystem::path& path) {
    return path.extension() == ".json" ? TraceFileFormat::PrometheusMatrixJson
                                       : TraceFileFormat::LongCsv;
}

inline constexpr std::string_view kCsvHeader = "timestamp_s,tenant,metric,value,phase";
inline constexpr std::string_view kCsvHeaderNoPhase = "timestamp_s,tenant,metric,value";

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw Error(Errc::Io, "cannot read " + path.string());
    return ss.str();
}

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace detail {

inline std::optional<double> parse_double(std::string_view s) {
    double v = 0.0;
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

struct Sample {
    double t;
    double value;
    std::optional<PhaseLabel> phase;
    std::size_t line;
};

// Builds a round from per-series samples. Every tenant must carry every metric
// seen in the input, and phases missing from the input come from the schedule.
inline ExperimentRound assemble(std::map<SeriesKey, std::vector<Sample>> groups,
                                const PhaseSchedule& schedule, int round_id, double t_origin,
                                const std::string& source) {
    if (groups.empty()) throw Error(Errc::MalformedRow, source + ":1: no data rows");

    std::set<TenantId> tenants;
    std::set<MetricKind> metrics;
    for (const auto& [key, rows] : groups) {
        tenants.insert(key.tenant);
        metrics.insert(key.metric);
    }
    for (const auto& t : tenants)
        for (auto m : metrics)
            if (!groups.contains(SeriesKey{t, m}))
                throw Error(Errc::MissingSeries,
                            source + ": no rows for " + to_string(SeriesKey{t, m}));

    std::vector<MetricSeries> series;
    for (auto& [key, rows] : groups) {
        std::stable_sort(rows.begin(), rows.end(),
                         [](const Sample& a, const Sample& b) { return a.t < b.t; });
        std::vector<double> ts, vs;
        std::vector<PhaseLabel> ps;
        ts.reserve(rows.size());
        vs.reserve(rows.size());
        ps.reserve(rows.size());
        for (const auto& r : rows) {
            auto phase = r.phase;
            if (!phase) phase = schedule.phase_at(r.t - t_origin);
            if (!phase)
                throw Error(Errc::MalformedRow, source + ":" + std::to_string(r.line) +
                                                    ": timestamp lies past the phase schedule");
            ts.push_back(r.t);
            vs.push_back(r.value);
            ps.push_back(*phase);
        }
        try {
            series.emplace_back(key.tenant, key.metric, std::move(ts), std::move(vs), std::move(ps));
        } catch (const Error& e) {
            throw Error(e.code(), source + ": " + e.detail());
        }
    }
    try {
        return ExperimentRound(round_id, std::move(series), schedule);
    } catch (const Error& e) {
        throw Error(e.code(), source + ": " + e.detail());
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// LongCsv
// ---------------------------------------------------------------------------

/// Parses LongCsv text. `source` only labels error messages.
inline ExperimentRound parse_csv_text(std::string_view text, const PhaseSchedule& schedule,
                                      int round_id = 1, const std::string& source = "<csv>") {
    auto malformed = [&](std::size_t line, const std::string& why) {
        return Error(Errc::MalformedRow, source + ":" + std::to_string(line) + ": " + why);
    };

    std::vector<std::string_view> lines = detail::split(text, '\n');
    for (auto& l : lines)
        if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty()) throw malformed(1, "missing header");

    std::string_view header = lines.front();
    if (header.size() >= 3 && header.substr(0, 3) == "\xEF\xBB\xBF") header.remove_prefix(3);
    bool with_phase = false;
    if (header == kCsvHeader) with_phase = true;
    else if (header != kCsvHeaderNoPhase)
        throw malformed(1, "header must be '" + std::string(kCsvHeader) + "' (phase optional)");
    const std::size_t ncols = with_phase ? 5 : 4;

    std::map<SeriesKey, std::vector<detail::Sample>> groups;
    std::optional<double> t_origin;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t lineno = i + 1;
        if (lines[i].empty()) throw malformed(lineno, "blank line");
        const auto fields = detail::split(lines[i], ',');
        if (fields.size() != ncols)
            throw malformed(lineno, "expected " + std::to_string(ncols) + " fields, got " +
                                        std::to_string(fields.size()));
        const auto t = detail::parse_double(fields[0]);
        if (!t || !std::isfinite(*t)) throw malformed(lineno, "bad timestamp");
        if (fields[1].empty()) throw malformed(lineno, "empty tenant");
        const auto metric = parse_metric_code(fields[2]);
        if (!metric)
            throw Error(Errc::UnknownMetricKind, source + ":" + std::to_string(lineno) +
                                                     ": metric '" + std::string(fields[2]) + "'");
        const auto v = detail::parse_double(fields[3]);
        if (!v || !std::isfinite(*v)) throw malformed(lineno, "bad value");
        std::optional<PhaseLabel> phase;
        if (with_phase) {
            phase = parse_phase_name(fields[4]);
            if (!phase) throw malformed(lineno, "unknown phase '" + std::string(fields[4]) + "'");
        }
        t_origin = t_origin ? std::min(*t_origin, *t) : *t;
        groups[SeriesKey{TenantId(std::string(fields[1])), *metric}].push_back(
            {*t, *v, phase, lineno});
    }
    return detail::assemble(std::move(groups), schedule, round_id, t_origin.value_or(0.0), source);
}

inline ExperimentRound parse_csv(const std::filesystem::path& path, const PhaseSchedule& schedule,
                                 int round_id = 1) {
    return parse_csv_text(read_file(path), schedule, round_id, path.string());
}

/// LongCsv with the phase column; values use shortest round-trip formatting.
inline std::string to_csv(const ExperimentRound& round) {
    std::string out(kCsvHeader);
    out += '\n';
    for (const auto& s : round.series()) {
        const std::string prefix =
            "," + s.tenant().name + "," + std::string(metric_code(s.metric())) + ",";
        for (std::size_t i = 0; i < s.size(); ++i) {
            out += format_double(s.timestamps()[i]);
            out += prefix;
            out += format_double(s.values()[i]);
            out += ',';
            out += phase_name(s.phases()[i]);
            out += '\n';
        }
    }
    return out;
}

/// Writes through a sibling temporary and renames it into place, so readers
/// never see a partial file.
inline void atomic_write(const std::filesystem::path& path, std::string_view content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(Errc::Io, "cannot write " + path.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out.flush()) throw Error(Errc::Io, "write failed for " + path.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(Errc::Io, "cannot move " + tmp.string() + " into place");
    }
}

inline void write_csv(const ExperimentRound& round, const std::filesystem::path& path) {
    atomic_write(path, to_csv(round));
}

// ---------------------------------------------------------------------------
// Prometheus range-query export
// ---------------------------------------------------------------------------

enum class SampleKind { Counter, Gauge };

struct MappingRule {
    std::string metric_name;
    MetricKind kind{};
    SampleKind sample_kind = SampleKind::Gauge;
};

/// Maps matrix entries to (tenant, metric). Entries that map to the same pair
/// are summed after rate conversion (e.g. fs reads + writes).
struct MappingRules {
    std::string tenant_label = "namespace";
    std::vector<MappingRule> rules;
    /// Label value -> tenant. Empty means the label value is the tenant name.
    std::map<std::string, TenantId> tenants;
    /// Drop entries no rule matches instead of failing.
    bool skip_unmappable = false;

    /// cAdvisor container metrics keyed by namespace.
    static MappingRules cadvisor() {
        MappingRules m;
        m.rules = {
            {"container_cpu_usage_seconds_total", MetricKind::CpuUsage, SampleKind::Counter},
            {"container_memory_working_set_bytes", MetricKind::MemoryWorkingSet, SampleKind::Gauge},
            {"container_fs_reads_bytes_total", MetricKind::DiskIoBytes, SampleKind::Counter},
            {"container_fs_writes_bytes_total", MetricKind::DiskIoBytes, SampleKind::Counter},
            {"container_network_receive_bytes_total", MetricKind::NetworkThroughput, SampleKind::Counter},
            {"container_network_transmit_bytes_total", MetricKind::NetworkThroughput, SampleKind::Counter},
        };
        return m;
    }
};

struct PrometheusImport {
    ExperimentRound round;
    /// Negative counter steps clamped to a zero rate.
    std::size_t counter_resets = 0;
};

struct RateSeries {
    std::vector<double> t;
    std::vector<double> v;
    std::size_t resets = 0;
};

/// First difference over the timestep; a negative step (counter reset) becomes 0.
inline RateSeries counter_to_rate(std::span<const double> t, std::span<const double> v) {
    if (t.size() != v.size()) throw Error(Errc::InvalidArgument, "length mismatch");
    RateSeries out;
    for (std::size_t i = 1; i < t.size(); ++i) {
        const double dt = t[i] - t[i - 1];
        if (!(dt > 0.0)) throw Error(Errc::NonUniformTimestep, "timestamps must increase");
        double d = v[i] - v[i - 1];
        if (d < 0.0) {
            d = 0.0;
            ++out.resets;
        }
        out.t.push_back(t[i]);
        out.v.push_back(d / dt);
    }
    return out;
}

inline PrometheusImport parse_prometheus_matrix_text(std::string_view text, const MappingRules& mapping,
                                                     const PhaseSchedule& schedule, int round_id = 1,
                                                     const std::string& source = "<json>") {
    using nlohmann::json;
    auto malformed = [&](const std::string& where, const std::string& why) {
        return Error(Errc::MalformedRow, source + ": " + where + ": " + why);
    };

    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(Errc::MalformedRow, source + ": byte " + std::to_string(e.byte) + ": " + e.what());
    }
    if (doc.contains("status") && doc["status"] != "success")
        throw malformed("status", "query did not succeed");
    if (!doc.contains("data") || !doc["data"].is_object())
        throw malformed("data", "missing data object");
    const auto& data = doc["data"];
    if (data.value("resultType", "") != "matrix") throw malformed("data.resultType", "must be \"matrix\"");
    if (!data.contains("result") || !data["result"].is_array())
        throw malformed("data.result", "must be an array");

    struct Acc {
        std::vector<double> t;
        std::vector<double> v;
    };
    std::map<SeriesKey, Acc> merged;
    std::size_t resets = 0;
    std::optional<double> t_origin;

    const auto& result = data["result"];
    for (std::size_t i = 0; i < result.size(); ++i) {
        const std::string where = "result[" + std::to_string(i) + "]";
        const auto& entry = result[i];
        if (!entry.is_object() || !entry.contains("metric") || !entry.contains("values"))
            throw malformed(where, "needs 'metric' and 'values'");
        const auto& labels = entry["metric"];
        const std::string name = labels.value("__name__", "");
        const std::string tenant_value = labels.value(mapping.tenant_label, "");

        const auto rule = std::find_if(mapping.rules.begin(), mapping.rules.end(),
                                       [&](const MappingRule& r) { return r.metric_name == name; });
        std::optional<TenantId> tenant;
        if (!tenant_value.empty()) {
            if (mapping.tenants.empty()) tenant = TenantId(tenant_value);
            else if (auto it = mapping.tenants.find(tenant_value); it != mapping.tenants.end())
                tenant = it->second;
        }
        if (rule == mapping.rules.end() || !tenant) {
            if (mapping.skip_unmappable) continue;
            throw Error(Errc::UnmappableSeries, source + ": " + where + ": metric '" + name + "' " +
                                                    mapping.tenant_label + "='" + tenant_value + "'");
        }

        std::vector<double> ts, vs;
        const auto& values = entry["values"];
        if (!values.is_array()) throw malformed(where + ".values", "must be an array");
        for (std::size_t j = 0; j < values.size(); ++j) {
            const auto& pair = values[j];
            const std::string at = where + ".values[" + std::to_string(j) + "]";
            if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_string())
                throw malformed(at, "expected [unix_seconds, \"value\"]");
            const auto v = detail::parse_double(pair[1].get_ref<const std::string&>());
            if (!v || !std::isfinite(*v)) throw malformed(at, "non-numeric sample");
            ts.push_back(pair[0].get<double>());
            vs.push_back(*v);
        }
        if (ts.empty()) throw malformed(where, "no samples");
        t_origin = t_origin ? std::min(*t_origin, ts.front()) : ts.front();

        if (rule->sample_kind == SampleKind::Counter) {
            auto rate = counter_to_rate(ts, vs);
            resets += rate.resets;
            ts = std::move(rate.t);
            vs = std::move(rate.v);
        }
        auto& acc = merged[SeriesKey{*tenant, rule->kind}];
        if (acc.t.empty()) {
            acc.t = std::move(ts);
            acc.v = std::move(vs);
        } else {
            if (acc.t != ts) throw malformed(where, "grid differs from a series it is summed with");
            for (std::size_t j = 0; j < vs.size(); ++j) acc.v[j] += vs[j];
        }
    }

    // Counters lose their first sample to differencing; cut everything to the shared window.
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (const auto& [key, acc] : merged) {
        if (acc.t.empty()) continue;
        lo = std::max(lo, acc.t.front());
        hi = std::min(hi, acc.t.back());
    }
    std::map<SeriesKey, std::vector<detail::Sample>> groups;
    for (const auto& [key, acc] : merged) {
        auto& rows = groups[key];
        for (std::size_t j = 0; j < acc.t.size(); ++j)
            if (acc.t[j] >= lo && acc.t[j] <= hi) rows.push_back({acc.t[j], acc.v[j], std::nullopt, 0});
        if (rows.empty()) throw Error(Errc::MissingSeries, source + ": " + to_string(key) + " has no overlapping samples");
    }
    return {detail::assemble(std::move(groups), schedule, round_id, t_origin.value_or(0.0), source),
            resets};
}

inline PrometheusImport parse_prometheus_matrix(const std::filesystem::path& path,
                                                const MappingRules& mapping,
                                                const PhaseSchedule& schedule, int round_id = 1) {
    return parse_prometheus_matrix_text(read_file(path), mapping, schedule, round_id, path.string());
}

}  // namespace noisy::ingest
