#include <catch2/catch_amalgamated.hpp>

#include <complex>

#include "stlf/scm.hpp"
#include "support/oracles.hpp"

using namespace stlf;

TEST_CASE("zero-coefficient model produces iid columns with the right spread", "[scm]") {
    ScmSpec spec({"a", "b"}, {}, {{"a", 2.0}, {"b", 0.5}});
    const Panel p = simulate(spec, 5000, 7);
    for (const auto& [name, want] : {std::pair{"a", 2.0}, {"b", 0.5}}) {
        const Eigen::VectorXd col = p.data().col(p.require(name));
        const double mu = col.mean();
        const double sd = std::sqrt((col.array() - mu).square().mean());
        CHECK_THAT(sd, Catch::Matchers::WithinRel(want, 0.05));
    }
}

TEST_CASE("ar(1) lag-1 sample autocorrelation matches theory", "[scm]") {
    ScmSpec spec({"x"}, {{"x", 1, "x", 0.9}}, {{"x", 1.0}});
    const Panel p = simulate(spec, 5000, 3);
    const Eigen::VectorXd x = p.data().col(0);
    const Eigen::Index n = x.size();
    const double mu = x.mean();
    double num = 0, den = 0;
    for (Eigen::Index t = 0; t < n; ++t) {
        den += (x(t) - mu) * (x(t) - mu);
        if (t > 0) num += (x(t) - mu) * (x(t - 1) - mu);
    }
    CHECK_THAT(num / den, Catch::Matchers::WithinAbs(0.9, 0.03));
}

TEST_CASE("same seed reproduces the panel exactly", "[scm]") {
    const ScmFixture a = standard_fixture("chain3", 42, 500);
    const ScmFixture b = standard_fixture("chain3", 42, 500);
    CHECK(a.panel.data() == b.panel.data());
    const ScmFixture c = standard_fixture("chain3", 43, 500);
    CHECK(a.panel.data() != c.panel.data());
}

TEST_CASE("true_parents reads the spec structure", "[scm]") {
    const ScmFixture fx = standard_fixture("chain3", 1, 100);
    CHECK(true_parents(fx.spec, "load") == std::set<std::string>{"v"});
    CHECK(true_parents(fx.spec, "w") == std::set<std::string>{});
    CHECK_THROWS_AS(true_parents(fx.spec, "nonexistent"), DataError);

    ScmSpec empty({"a", "b"}, {}, {});
    CHECK(true_parents(empty, "a").empty());
    CHECK(true_links(empty).empty());
}

TEST_CASE("mediation chain exposes only the direct parent", "[scm]") {
    // cloud -> radiation -> temperature -> load, with only temperature direct
    ScmSpec spec({"cloud", "radiation", "temperature", "load"},
                 {
                     {"cloud", 1, "cloud", 0.7},
                     {"cloud", 1, "radiation", 0.6},
                     {"radiation", 1, "radiation", 0.5},
                     {"radiation", 1, "temperature", 0.6},
                     {"temperature", 1, "temperature", 0.5},
                     {"temperature", 1, "load", 0.6},
                     {"load", 1, "load", 0.5},
                 },
                 {});
    CHECK(true_parents(spec, "load") == std::set<std::string>{"temperature"});
    CHECK(mediated_sources(spec, "load") == std::set<std::string>{"cloud", "radiation"});
}

TEST_CASE("standard fixtures have their documented shapes", "[scm]") {
    SECTION("mediation8") {
        const ScmFixture fx = standard_fixture("mediation8", 5, 300);
        CHECK(fx.panel.cols() == 9);
        CHECK(fx.panel.rows() == 300);
        CHECK(true_parents(fx.spec, "load") == std::set<std::string>{"temp_air", "precip"});
        // every coefficient in the fixture is at least 0.3 in magnitude
        for (const auto& l : fx.spec.links()) CHECK(std::abs(l.coeff) >= 0.3);
        CHECK(fx.panel.kind(fx.panel.require("load")) == ColumnKind::load);
    }
    SECTION("independent6") {
        const ScmFixture fx = standard_fixture("independent6", 5, 100);
        CHECK(fx.panel.cols() == 6);
        CHECK(true_links(fx.spec).empty());
    }
    SECTION("unknown fixture name") {
        CHECK_THROWS_AS(standard_fixture("nope", 1, 10), DataError);
    }
}

TEST_CASE("contemporaneous links are rejected", "[scm]") {
    CHECK_THROWS_AS(ScmSpec({"a", "b"}, {{"a", 0, "b", 0.5}}, {}), DataError);
}

TEST_CASE("non-stationary specs are rejected at construction", "[scm]") {
    CHECK_THROWS_AS(ScmSpec({"x"}, {{"x", 1, "x", 1.05}}, {}), NumericError);
    CHECK_THROWS_AS(ScmSpec({"x", "y"},
                            {{"x", 1, "y", 0.9}, {"y", 1, "x", 1.2}}, {}),
                    NumericError);
    // a cross-variable DAG with sub-unit self lags is always stationary
    CHECK_NOTHROW(ScmSpec({"x", "y"}, {{"x", 1, "x", 0.95}, {"x", 1, "y", 5.0},
                                       {"y", 1, "y", 0.5}}, {}));
}

TEST_CASE("seasonal forcing shows up at the configured period", "[scm]") {
    ScmSpec spec({"x"}, {{"x", 1, "x", 0.3}}, {{"x", 0.5}},
                 {{"x", ScmSeasonal{2.0, 24.0}}});
    const Panel p = simulate(spec, 4800, 9);
    // regress onto the daily sine/cosine pair and recover the amplitude
    const Eigen::VectorXd x = p.data().col(0);
    double ss = 0, sc = 0;
    constexpr double two_pi = 6.283185307179586476925286766559;
    for (Eigen::Index t = 0; t < x.size(); ++t) {
        ss += x(t) * std::sin(two_pi * t / 24.0);
        sc += x(t) * std::cos(two_pi * t / 24.0);
    }
    ss *= 2.0 / x.size();
    sc *= 2.0 / x.size();
    // the AR filter scales and phase-shifts the sinusoid; compare against the
    // filtered amplitude |1/(1 - 0.3 e^{-i w})|
    const std::complex<double> denom =
        1.0 - 0.3 * std::exp(std::complex<double>(0, -two_pi / 24.0));
    const double want = 2.0 / std::abs(denom);
    CHECK_THAT(std::sqrt(ss * ss + sc * sc), Catch::Matchers::WithinRel(want, 0.05));
}

TEST_CASE("sample covariances match the Lyapunov solution", "[scm]") {
    const ScmFixture fx = standard_fixture("chain3", 2, 10000);
    const Eigen::MatrixXd cov_true = oracles::scm_stationary_cov(fx.spec);
    const Eigen::MatrixXd& d = fx.panel.data();
    const Eigen::Index n = d.rows();
    Eigen::RowVectorXd mu = d.colwise().mean();
    Eigen::MatrixXd centered = d.rowwise() - mu;
    const Eigen::MatrixXd cov_hat = centered.transpose() * centered / static_cast<double>(n);
    for (Eigen::Index i = 0; i < 3; ++i)
        for (Eigen::Index j = 0; j < 3; ++j)
            CHECK_THAT(cov_hat(i, j),
                       Catch::Matchers::WithinAbs(cov_true(i, j),
                                                  0.1 * std::abs(cov_true(i, i)) + 0.02));
}

TEST_CASE("spec JSON round-trips", "[scm]") {
    const ScmFixture fx = standard_fixture("mediation8", 1, 10);
    const ScmSpec back = ScmSpec::from_json(fx.spec.to_json());
    CHECK(back.variables() == fx.spec.variables());
    CHECK(back.links().size() == fx.spec.links().size());
    CHECK(back.burn_in() == fx.spec.burn_in());
    CHECK(back.to_json() == fx.spec.to_json());
}

TEST_CASE("burn-in is discarded", "[scm]") {
    ScmSpec spec({"x"}, {{"x", 1, "x", 0.99}}, {{"x", 1.0}}, {}, 500);
    // with a long burn-in the process starts near its stationary spread, not 0
    const Panel p = simulate(spec, 400, 5);
    const Eigen::VectorXd head = p.data().col(0).head(50);
    const double sd = std::sqrt((head.array() - head.mean()).square().mean());
    CHECK(sd > 1.5); // stationary sd is ~7; unburned start would hug zero
}
