#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <tuple>

#include "stlf/pcmci.hpp"
#include "stlf/scm.hpp"
#include "support/fixtures.hpp"

using namespace stlf;

namespace {

std::set<std::tuple<std::string, int, std::string>> link_set(const LaggedGraph& g) {
    std::set<std::tuple<std::string, int, std::string>> out;
    for (const auto& l : g.links) out.insert({l.source, l.lag, l.target});
    return out;
}

bool has_candidate(const ParentSets& ps, const Panel& p, const std::string& target,
                   const std::string& source, int lag) {
    const auto ti = static_cast<std::size_t>(p.require(target));
    for (const auto& c : ps[ti])
        if (p.names()[static_cast<std::size_t>(c.ref.var)] == source && c.ref.lag == lag)
            return true;
    return false;
}

} // namespace

TEST_CASE("independent white noise yields empty candidate sets most of the time", "[pcmci]") {
    PcmciConfig cfg;
    int empty = 0;
    const int runs = 50;
    for (int s = 0; s < runs; ++s) {
        ScmSpec spec({"a", "b"}, {}, {});
        const Panel p = simulate(spec, 400, 900 + s);
        const ParentSets ps = pc1_condition_selection(p, cfg);
        empty += (ps[0].empty() && ps[1].empty());
    }
    CHECK(empty >= static_cast<int>(0.8 * runs));
}

TEST_CASE("ar(1) candidate set contains the self lag", "[pcmci]") {
    ScmSpec spec({"x", "noise"}, {{"x", 1, "x", 0.8}}, {});
    const Panel p = simulate(spec, 1000, 11);
    const ParentSets ps = pc1_condition_selection(p, PcmciConfig{});
    CHECK(has_candidate(ps, p, "x", "x", 1));
}

TEST_CASE("chain indirection is pruned in the PC phase", "[pcmci]") {
    const ScmFixture base = standard_fixture("chain3", 0, 10);
    PcmciConfig cfg;
    int excluded = 0, direct_kept = 0;
    for (int s = 0; s < 20; ++s) {
        const Panel p = simulate(base.spec, 2000, 40 + s);
        const ParentSets ps = pc1_condition_selection(p, cfg);
        excluded += !has_candidate(ps, p, "load", "w", 2);
        direct_kept += has_candidate(ps, p, "load", "v", 1);
    }
    CHECK(excluded >= 18);
    CHECK(direct_kept == 20);
}

TEST_CASE("mci with empty parent sets equals the plain lagged test", "[pcmci]") {
    ScmSpec spec({"a", "b"}, {{"a", 1, "b", 0.5}}, {});
    const Panel p = simulate(spec, 800, 5);
    PcmciConfig cfg;
    ParentSets empty(p.cols());
    const CiResult mci = mci_test(p, LagVar{p.find("a"), 1}, p.find("b"), empty, cfg);

    // same test assembled by hand on the shared effective range
    const std::size_t start = static_cast<std::size_t>(2 * cfg.tau_max);
    const std::size_t n = p.rows() - start;
    Eigen::VectorXd x(static_cast<Eigen::Index>(n)), y(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        x(static_cast<Eigen::Index>(i)) = p.value(start + i - 1, 0);
        y(static_cast<Eigen::Index>(i)) = p.value(start + i, 1);
    }
    const CiResult plain = parcorr_test(x, y, Eigen::MatrixXd(static_cast<Eigen::Index>(n), 0));
    CHECK(mci.statistic == plain.statistic);
    CHECK(mci.p_value == plain.p_value);
}

TEST_CASE("mci prunes the chain link and keeps the direct one", "[pcmci]") {
    const ScmFixture base = standard_fixture("chain3", 0, 10);
    PcmciConfig cfg;
    int pruned = 0, direct = 0;
    for (int s = 0; s < 20; ++s) {
        const Panel p = simulate(base.spec, 2000, 70 + s);
        const ParentSets ps = pc1_condition_selection(p, cfg);
        pruned += (mci_test(p, LagVar{p.find("w"), 2}, p.find("load"), ps, cfg).p_value >
                   cfg.mci_alpha);
        direct += (mci_test(p, LagVar{p.find("v"), 1}, p.find("load"), ps, cfg).p_value < 1e-4);
    }
    CHECK(pruned >= 18);
    CHECK(direct == 20);
}

TEST_CASE("run_pcmci recovers the chain", "[pcmci]") {
    const ScmFixture fx = standard_fixture("chain3", 13, 2000);
    const LaggedGraph g = run_pcmci(fx.panel, PcmciConfig{});
    const auto links = link_set(g);
    for (const auto& l : fx.spec.links())
        CHECK(links.count({l.source, l.lag, l.target}) == 1);
    CHECK(causal_feature_set(g, "load") == std::set<std::string>{"v"});
}

TEST_CASE("single-variable panel yields only self links", "[pcmci]") {
    ScmSpec spec({"x"}, {{"x", 1, "x", 0.7}}, {});
    const Panel p = simulate(spec, 600, 3);
    const LaggedGraph g = run_pcmci(p, PcmciConfig{});
    for (const auto& l : g.links) {
        CHECK(l.source == "x");
        CHECK(l.target == "x");
    }
    CHECK(!g.links.empty());
}

TEST_CASE("discovery is deterministic byte-for-byte", "[pcmci]") {
    const ScmFixture fx = standard_fixture("mediation8", 17, 800);
    const LaggedGraph a = run_pcmci(fx.panel, PcmciConfig{});
    const LaggedGraph b = run_pcmci(fx.panel, PcmciConfig{});
    CHECK(a.to_json().dump() == b.to_json().dump());
}

TEST_CASE("phase 2 never adds links beyond the PC candidates", "[pcmci]") {
    const ScmFixture fx = standard_fixture("mediation8", 19, 1200);
    PcmciConfig cfg;
    const ParentSets ps = pc1_condition_selection(fx.panel, cfg);
    const LaggedGraph g = run_pcmci(fx.panel, cfg);
    for (const auto& l : g.links) {
        CHECK(has_candidate(ps, fx.panel, l.target, l.source, l.lag));
        CHECK(l.p_value <= cfg.mci_alpha);
        CHECK(l.lag >= cfg.tau_min);
        CHECK(l.lag <= cfg.tau_max);
    }
}

TEST_CASE("capped conditioning at a single lag reduces to pairwise tests", "[pcmci]") {
    const ScmFixture fx = standard_fixture("chain3", 23, 900);
    PcmciConfig cfg;
    cfg.max_cond_dim = 0;
    cfg.tau_min = cfg.tau_max = 2;
    const LaggedGraph g = run_pcmci(fx.panel, cfg);

    // plain pairwise lagged tests on the same effective sample range
    const std::size_t start = static_cast<std::size_t>(2 * cfg.tau_max);
    const std::size_t n = fx.panel.rows() - start;
    std::set<std::tuple<std::string, int, std::string>> expect;
    for (std::size_t src = 0; src < fx.panel.cols(); ++src)
        for (std::size_t dst = 0; dst < fx.panel.cols(); ++dst) {
            Eigen::VectorXd x(static_cast<Eigen::Index>(n)), y(static_cast<Eigen::Index>(n));
            for (std::size_t i = 0; i < n; ++i) {
                x(static_cast<Eigen::Index>(i)) = fx.panel.value(start + i - 2, src);
                y(static_cast<Eigen::Index>(i)) = fx.panel.value(start + i, dst);
            }
            const CiResult r =
                parcorr_test(x, y, Eigen::MatrixXd(static_cast<Eigen::Index>(n), 0));
            if (r.p_value <= cfg.mci_alpha)
                expect.insert({fx.panel.names()[src], 2, fx.panel.names()[dst]});
        }
    CHECK(link_set(g) == expect);
}

TEST_CASE("variable order does not change link decisions", "[pcmci]") {
    const ScmFixture fx = standard_fixture("mediation8", 29, 700);
    const auto base = link_set(run_pcmci(fx.panel, PcmciConfig{}));
    Rng rng(31);
    std::vector<std::string> names = fx.panel.names();
    for (int perm = 0; perm < 5; ++perm) {
        rng.shuffle(names);
        const Panel shuffled = fx.panel.select_columns(names);
        CHECK(link_set(run_pcmci(shuffled, PcmciConfig{})) == base);
    }
}

TEST_CASE("causal_feature_set projects sources into the target", "[pcmci]") {
    LaggedGraph g;
    g.variables = {"t2m", "tp", "load"};
    SECTION("empty graph") {
        CHECK(causal_feature_set(g, "load").empty());
    }
    SECTION("multiple lags collapse to one variable") {
        g.links = {{"t2m", 1, "load", 0.5, 0.001},
                   {"t2m", 3, "load", 0.3, 0.002},
                   {"tp", 2, "load", 0.2, 0.01}};
        CHECK(causal_feature_set(g, "load") == std::set<std::string>{"t2m", "tp"});
    }
    SECTION("own lags are reported separately") {
        g.links = {{"load", 1, "load", 0.9, 1e-9}, {"load", 3, "load", 0.2, 1e-3},
                   {"t2m", 1, "load", 0.5, 1e-4}};
        CHECK(causal_feature_set(g, "load") == std::set<std::string>{"t2m"});
        CHECK(causal_ar_lags(g, "load") == std::vector<int>{1, 3});
    }
    SECTION("unknown target") {
        CHECK_THROWS_AS(causal_feature_set(g, "prices"), DataError);
    }
}

TEST_CASE("reported selection shape on reanalysis-style series", "[pcmci]") {
    const Panel p = simulate(fixtures::era5_shape_spec(), 4000, 0);
    const LaggedGraph g = run_pcmci(p, PcmciConfig{});
    CHECK(causal_feature_set(g, "load") == std::set<std::string>{"skt", "t2m", "tp"});
}

TEST_CASE("graph JSON round-trips and is sorted", "[pcmci]") {
    const ScmFixture fx = standard_fixture("chain3", 37, 600);
    const LaggedGraph g = run_pcmci(fx.panel, PcmciConfig{});
    const LaggedGraph back = LaggedGraph::from_json(g.to_json());
    CHECK(back.to_json() == g.to_json());
    for (std::size_t i = 1; i < g.links.size(); ++i) {
        const auto& a = g.links[i - 1];
        const auto& b = g.links[i];
        CHECK(std::tie(a.source, a.lag, a.target) <= std::tie(b.source, b.lag, b.target));
    }
}

TEST_CASE("constant variable is reported by name", "[pcmci]") {
    Eigen::MatrixXd d(300, 2);
    Rng rng(41);
    for (Eigen::Index i = 0; i < 300; ++i) {
        d(i, 0) = rng.normal();
        d(i, 1) = 3.0;
    }
    BoolArray m(300, 2);
    m.setConstant(true);
    const Panel p("r", 0, d, m, {"ok", "flatline"},
                  {ColumnKind::weather, ColumnKind::weather});
    CHECK_THROWS_WITH(run_pcmci(p, PcmciConfig{}),
                      Catch::Matchers::ContainsSubstring("flatline"));
}

TEST_CASE("consensus merge keeps majority links", "[pcmci]") {
    LaggedGraph a, b, c;
    for (auto* g : {&a, &b, &c}) g->variables = {"x", "y"};
    a.links = {{"x", 1, "y", 0.5, 0.01}};
    b.links = {{"x", 1, "y", 0.7, 0.02}, {"y", 1, "x", 0.3, 0.04}};
    c.links = {{"x", 1, "y", 0.6, 0.03}};
    const LaggedGraph merged = consensus_graph({a, b, c});
    REQUIRE(merged.links.size() == 1);
    CHECK(merged.links[0].source == "x");
    CHECK_THAT(merged.links[0].statistic, Catch::Matchers::WithinAbs(0.6, 1e-12));
}

TEST_CASE("deterministic calendar-like columns do not break discovery", "[pcmci]") {
    // a pure sinusoid's lags are exactly collinear; the tolerant conditioning
    // path must absorb that
    const std::size_t n = 600;
    Eigen::MatrixXd d(n, 3);
    Rng rng(43);
    constexpr double two_pi = 6.283185307179586476925286766559;
    double prev = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto t = static_cast<Eigen::Index>(i);
        prev = 0.7 * prev + rng.normal();
        d(t, 0) = prev;
        d(t, 1) = std::sin(two_pi * i / 24.0);
        d(t, 2) = std::cos(two_pi * i / 24.0);
    }
    BoolArray m(n, 3);
    m.setConstant(true);
    const Panel p("r", 0, d, m, {"load", "hour_sin", "hour_cos"},
                  {ColumnKind::load, ColumnKind::calendar, ColumnKind::calendar});
    const LaggedGraph g = run_pcmci(p, PcmciConfig{});
    const auto cs = causal_feature_set(g, "load", {"hour_sin", "hour_cos"});
    CHECK(cs.empty());
}
