#include <gtest/gtest.h>

#include <random>

#include "noisy/causality.hpp"
#include "test_support.hpp"

using namespace noisy;
using namespace noisy::causality;
using noisy::testing::white_noise;

namespace {

// y_t = coef * x_{t-1} + e_t with x white.
std::pair<std::vector<double>, std::vector<double>> lagged_pair(std::size_t n, std::uint64_t seed,
                                                                double coef = 0.8) {
    auto x = white_noise(n, seed);
    auto e = white_noise(n, seed + 7919);
    std::vector<double> y(n);
    y[0] = e[0];
    for (std::size_t t = 1; t < n; ++t) y[t] = coef * x[t - 1] + e[t];
    return {x, y};
}

stationarity::StationarizedSeries as_stationary(std::vector<double> v, std::string tenant,
                                                MetricKind m = MetricKind::CpuUsage) {
    auto s = stationarity::stationarize(v);
    s.key = {TenantId(std::move(tenant)), m};
    return s;
}

}  // namespace

TEST(Granger, MatchesFrozenReference) {
    for (const auto& c : noisy::testing::load_fixture("granger_reference.json")) {
        const auto x = c["x"].get<std::vector<double>>();
        const auto y = c["y"].get<std::vector<double>>();
        const auto g = granger_f_test(x, y, c["lag"].get<std::size_t>());
        SCOPED_TRACE(c["name"].get<std::string>());
        const double f_ref = c["f_statistic"];
        EXPECT_NEAR(g.f_statistic, f_ref, 1e-8 * std::abs(f_ref));
        EXPECT_NEAR(g.p_value, c["p_value"].get<double>(), 1e-10);
        EXPECT_EQ(g.df_den, c["df_den"].get<std::size_t>());
    }
}

TEST(Granger, DetectsOneStepLag) {
    auto [x, y] = lagged_pair(500, 3);
    const auto g = granger_test(x, y, 10);
    EXPECT_EQ(g.lag, 1u);
    EXPECT_LT(g.p_value, 0.001);
}

TEST(Granger, IdenticalSeriesAreSingular) {
    auto x = white_noise(300, 4);
    try {
        granger_test(x, x, 5);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::SingularRegression);
    }
}

TEST(Granger, InsufficientSamples) {
    auto x = white_noise(50, 4), y = white_noise(50, 5);
    EXPECT_THROW(granger_test(x, y, 10), Error);
}

TEST(Granger, SizeUnderIndependence) {
    int rejections = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        auto x = white_noise(500, 10000 + seed), y = white_noise(500, 20000 + seed);
        if (granger_test(x, y, 10).p_value < 0.05) ++rejections;
    }
    EXPECT_NEAR(rejections / 200.0, 0.05, 0.02 + 1e-12);
}

TEST(Granger, AffineInvarianceAndNesting) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> scale(0.05, 20.0), shift(-50.0, 50.0);
    for (int k = 0; k < 100; ++k) {
        auto [x, y] = lagged_pair(200 + k, 500 + k, 0.1 * (k % 7));
        auto x2 = x, y2 = y;
        const double ax = (k % 2 ? -1 : 1) * scale(rng), bx = shift(rng);
        const double ay = (k % 3 ? 1 : -1) * scale(rng), by = shift(rng);
        for (auto& v : x2) v = ax * v + bx;
        for (auto& v : y2) v = ay * v + by;
        const auto g1 = granger_test(x, y, 5), g2 = granger_test(x2, y2, 5);
        ASSERT_EQ(g1.lag, g2.lag);
        EXPECT_NEAR(g1.f_statistic, g2.f_statistic, 1e-9 * std::max(1.0, g1.f_statistic));
        EXPECT_LE(g1.rss_unrestricted, g1.rss_restricted);
        EXPECT_GE(g1.f_statistic, 0.0);
        EXPECT_GE(g1.p_value, 0.0);
        EXPECT_LE(g1.p_value, 1.0);
    }
}

TEST(Granger, PValueMonotoneInF) {
    double prev = 1.0;
    for (int i = 1; i < 200; ++i) {
        const double p = special::f_distribution_sf(0.05 * i, 3, 400);
        EXPECT_LE(p, prev);
        prev = p;
    }
}

TEST(Bidirectional, OneWayInfluenceIsAsymmetric) {
    auto [x, y] = lagged_pair(500, 8);
    const auto r = bidirectional_test(as_stationary(x, "a"), as_stationary(y, "b"));
    EXPECT_LT(r.forward.p_value, 0.05);
    EXPECT_TRUE(r.asymmetric);
    EXPECT_EQ(r.forward.source.tenant.name, "a");
    EXPECT_EQ(r.reverse.source.tenant.name, "b");
}

TEST(Bidirectional, MutualCouplingIsNotAsymmetric) {
    auto ex = white_noise(500, 21), ey = white_noise(500, 22);
    std::vector<double> x(500, 0.0), y(500, 0.0);
    for (std::size_t t = 1; t < 500; ++t) {
        x[t] = 0.3 * x[t - 1] + 0.5 * y[t - 1] + ex[t];
        y[t] = 0.3 * y[t - 1] + 0.5 * x[t - 1] + ey[t];
    }
    const auto r = bidirectional_test(as_stationary(x, "a"), as_stationary(y, "b"));
    EXPECT_LT(r.forward.p_value, 0.05);
    EXPECT_LT(r.reverse.p_value, 0.05);
    EXPECT_FALSE(r.asymmetric);
}

TEST(Bidirectional, IndependentPairMostlyNotFlagged) {
    int flagged = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto x = white_noise(400, 300 + seed), y = white_noise(400, 600 + seed);
        if (bidirectional_test(as_stationary(x, "a"), as_stationary(y, "b")).asymmetric) ++flagged;
    }
    EXPECT_LE(flagged, 8);
}

TEST(Bidirectional, MixedOrdersUseHigherOrder) {
    auto x = white_noise(400, 1);
    auto walk = noisy::testing::cumsum(white_noise(400, 3));
    auto a = as_stationary(x, "a"), b = as_stationary(walk, "b");
    ASSERT_EQ(a.difference_order, 0);
    ASSERT_EQ(b.difference_order, 1);
    auto [va, vb] = common_order(a, b);
    EXPECT_EQ(va.size(), 399u);
    EXPECT_EQ(vb.size(), 399u);
}

TEST(Density, DeltaExamples) {
    EXPECT_DOUBLE_EQ(graph_density_delta(20, 35), 75.0);
    EXPECT_DOUBLE_EQ(graph_density_delta(20, 25), 25.0);
    EXPECT_DOUBLE_EQ(graph_density_delta(20, 20), 0.0);
    EXPECT_THROW(graph_density_delta(0, 3), Error);
}

TEST(BenjaminiHochberg, StepUp) {
    const std::vector<double> p{0.001, 0.04, 0.03, 0.5, 0.2};
    const auto sig = benjamini_hochberg(p, 0.05);
    EXPECT_EQ(sig, (std::vector<bool>{true, false, false, false, false}));
    const std::vector<double> q{0.01, 0.02, 0.03};
    EXPECT_EQ(benjamini_hochberg(q, 0.05), (std::vector<bool>{true, true, true}));
}

namespace {

CausalGraph graph_with(PhaseLabel phase, std::vector<std::pair<std::string, double>> tests) {
    CausalGraph g;
    g.phase = phase;
    for (auto& [name, p] : tests) {
        GrangerResult r;
        r.source = {TenantId("tenant-nsy"), MetricKind::CpuUsage};
        r.target = {TenantId(name), MetricKind::CpuUsage};
        r.phase = phase;
        r.p_value = p;
        g.tests.push_back(r);
        if (p < 0.05) g.links.push_back(r);
    }
    return g;
}

}  // namespace

TEST(Replication, CountsRounds) {
    std::vector<CausalGraph> graphs;
    for (int r = 0; r < 10; ++r)
        graphs.push_back(graph_with(PhaseLabel::CombinedNoise,
                                    {{"tenant-cpu", 0.003}, {"tenant-mem", r < 8 ? 0.01 : 0.2}, {"tenant-ntk", 0.6}}));
    const auto recs = replication(graphs, PhaseLabel::CombinedNoise);
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs[0].target.tenant.name, "tenant-cpu");
    EXPECT_EQ(recs[0].frequency(), "10/10");
    EXPECT_NEAR(recs[0].mean_p, 0.003, 1e-15);
    EXPECT_EQ(recs[1].frequency(), "8/10");
    EXPECT_NEAR(recs[1].mean_p, (8 * 0.01 + 2 * 0.2) / 10, 1e-15);
}

TEST(Replication, NeedsTwoRounds) {
    std::vector<CausalGraph> one{graph_with(PhaseLabel::Baseline, {})};
    EXPECT_THROW(replication(one, PhaseLabel::Baseline), Error);
}

namespace {

ExperimentRound make_round(const std::vector<std::pair<SeriesKey, std::vector<double>>>& data) {
    const std::size_t n = data.front().second.size();
    std::vector<double> ts(n);
    for (std::size_t i = 0; i < n; ++i) ts[i] = 2.0 * static_cast<double>(i);
    std::vector<PhaseLabel> ph(n, PhaseLabel::Baseline);
    std::vector<MetricSeries> series;
    for (const auto& [k, v] : data) series.emplace_back(k.tenant, k.metric, ts, v, ph);
    return ExperimentRound(1, std::move(series), PhaseSchedule({{PhaseLabel::Baseline, 2.0 * n}}));
}

}  // namespace

TEST(BuildGraph, HubAndDeterminism) {
    const std::size_t n = 500;
    auto src = white_noise(n, 77);
    std::vector<std::pair<SeriesKey, std::vector<double>>> data;
    data.push_back({{TenantId("tenant-nsy"), MetricKind::CpuUsage}, src});
    for (int v = 0; v < 3; ++v) {
        auto e = white_noise(n, 100 + v);
        std::vector<double> y(n);
        y[0] = 10 + e[0];
        for (std::size_t t = 1; t < n; ++t) y[t] = 10 + 0.4 * (y[t - 1] - 10) - 0.7 * src[t - 1] + e[t];
        data.push_back({{TenantId("victim-" + std::to_string(v)), MetricKind::CpuUsage}, y});
    }
    const auto round = make_round(data);
    const auto g = build_graph(round, PhaseLabel::Baseline);
    EXPECT_EQ(g.tests.size(), 12u);
    for (int v = 0; v < 3; ++v)
        EXPECT_TRUE(g.has_link({TenantId("tenant-nsy"), MetricKind::CpuUsage},
                               {TenantId("victim-" + std::to_string(v)), MetricKind::CpuUsage}));
    ASSERT_TRUE(g.hub().has_value());
    EXPECT_EQ(g.hub()->name, "tenant-nsy");
    EXPECT_GE(g.out_degree.at(TenantId("tenant-nsy")), 3u);
    EXPECT_TRUE(std::is_sorted(g.links.begin(), g.links.end(), canonical_less));

    const auto g2 = build_graph(round, PhaseLabel::Baseline);
    ASSERT_EQ(g.tests.size(), g2.tests.size());
    for (std::size_t i = 0; i < g.tests.size(); ++i) EXPECT_EQ(g.tests[i].f_statistic, g2.tests[i].f_statistic);
}

TEST(BuildGraph, SingleTenantHasNoCrossTenantLinks) {
    std::vector<std::pair<SeriesKey, std::vector<double>>> data;
    for (auto m : kAllMetrics) data.push_back({{TenantId("solo"), m}, white_noise(300, static_cast<int>(m) + 1)});
    const auto g = build_graph(make_round(data), PhaseLabel::Baseline);
    EXPECT_EQ(g.cross_tenant_link_count(), 0u);
    for (const auto& t : g.tests) EXPECT_NE(t.source, t.target);
}

TEST(BuildGraph, ConstantSeriesExcluded) {
    std::vector<std::pair<SeriesKey, std::vector<double>>> data;
    data.push_back({{TenantId("a"), MetricKind::CpuUsage}, white_noise(300, 1)});
    data.push_back({{TenantId("b"), MetricKind::CpuUsage}, std::vector<double>(300, 3.0)});
    data.push_back({{TenantId("c"), MetricKind::CpuUsage}, white_noise(300, 2)});
    const auto g = build_graph(make_round(data), PhaseLabel::Baseline);
    EXPECT_EQ(g.tests.size(), 2u);
    EXPECT_TRUE(g.diagnostics[1].excluded);
    EXPECT_EQ(g.diagnostics[1].reason, "ConstantSeries");
}
