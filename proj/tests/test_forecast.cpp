#include <catch2/catch_amalgamated.hpp>

#include "stlf/forecast.hpp"
#include "stlf/rng.hpp"
#include "support/oracles.hpp"

using namespace stlf;

namespace {

Panel synthetic_panel(std::size_t n, std::size_t extra_cols, std::uint64_t seed,
                      double period = 0.0) {
    Rng rng(seed);
    Eigen::MatrixXd d(n, 1 + extra_cols);
    constexpr double two_pi = 6.283185307179586476925286766559;
    for (std::size_t i = 0; i < n; ++i) {
        const auto t = static_cast<Eigen::Index>(i);
        d(t, 0) = period > 0 ? std::sin(two_pi * i / period) : rng.normal();
        for (std::size_t j = 0; j < extra_cols; ++j) d(t, 1 + j) = rng.normal();
    }
    BoolArray m(n, 1 + extra_cols);
    m.setConstant(true);
    std::vector<std::string> names{"load"};
    std::vector<ColumnKind> kinds{ColumnKind::load};
    for (std::size_t j = 0; j < extra_cols; ++j) {
        names.push_back("w" + std::to_string(j));
        kinds.push_back(ColumnKind::weather);
    }
    return Panel("r", 0, d, m, names, kinds);
}

WindowConfig wcfg(int lookback, int horizon, std::vector<std::string> features,
                  std::string target = "load") {
    WindowConfig c;
    c.lookback = lookback;
    c.horizon = horizon;
    c.features = std::move(features);
    c.target = std::move(target);
    return c;
}

} // namespace

TEST_CASE("window counts at the range boundary", "[forecast]") {
    const Panel p = synthetic_panel(300, 0, 1);
    const WindowConfig c = wcfg(10, 5, {"load"});
    CHECK(make_windows(p, c, 0, 15).size() == 1);
    CHECK(make_windows(p, c, 0, 16).size() == 2);
    CHECK_THROWS_AS(make_windows(p, c, 0, 14), DataError);
}

TEST_CASE("windows containing masked cells are dropped, matching enumeration", "[forecast]") {
    const std::size_t n = 120;
    Panel base = synthetic_panel(n, 1, 2);
    Eigen::MatrixXd d = base.data();
    BoolArray m = base.observed();
    const WindowConfig c = wcfg(10, 4, {"load", "w0"});
    // mask one target hour at position lookback+2 and one feature hour later
    m(12, 0) = false;
    m(60, 1) = false;
    const Panel p("r", 0, d, m, base.names(), base.kinds());
    const auto windows = make_windows(p, c, 0, n);

    // brute-force enumeration of valid window starts
    std::size_t expect = 0;
    std::vector<std::int64_t> starts;
    for (std::size_t s = 0; s + 14 <= n; ++s) {
        bool ok = true;
        for (std::size_t t = s; t < s + 10 && ok; ++t)
            if (!p.is_observed(t, 0) || !p.is_observed(t, 1)) ok = false;
        for (std::size_t t = s + 10; t < s + 14 && ok; ++t)
            if (!p.is_observed(t, 0)) ok = false;
        if (ok) {
            ++expect;
            starts.push_back(p.timestamp(s + 9));
        }
    }
    REQUIRE(windows.size() == expect);
    for (std::size_t i = 0; i < windows.size(); ++i)
        CHECK(windows[i].origin_hour == starts[i]);
}

TEST_CASE("window contents are chronological slices", "[forecast]") {
    const Panel p = synthetic_panel(50, 1, 3);
    const WindowConfig c = wcfg(6, 3, {"load", "w0"});
    const auto windows = make_windows(p, c, 5, 20);
    REQUIRE_FALSE(windows.empty());
    const WindowSample& w = windows.front();
    for (int t = 0; t < 6; ++t) {
        CHECK(w.x(t, 0) == p.value(5 + t, 0));
        CHECK(w.x(t, 1) == p.value(5 + t, 1));
    }
    for (int h = 0; h < 3; ++h) CHECK(w.y(h) == p.value(11 + h, 0));
}

TEST_CASE("seasonal naive is exact on a periodic series", "[forecast]") {
    const Panel p = synthetic_panel(600, 0, 4, 168.0);
    const WindowConfig c = wcfg(168, 24, {"load"});
    SeasonalNaive model(c);
    const auto windows = make_windows(p, c, 0, 600);
    for (const auto& w : windows) {
        const Eigen::VectorXd pred = model.predict(w);
        CHECK((pred - w.y).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("seasonal naive on a constant series predicts the constant", "[forecast]") {
    Eigen::MatrixXd d(400, 1);
    d.setConstant(7.5);
    BoolArray m(400, 1);
    m.setConstant(true);
    const Panel p("r", 0, d, m, {"load"}, {ColumnKind::load});
    const WindowConfig c = wcfg(168, 24, {"load"});
    SeasonalNaive model(c);
    const auto windows = make_windows(p, c, 0, 400);
    CHECK(model.predict(windows.front()).minCoeff() == 7.5);
    CHECK(model.predict(windows.front()).maxCoeff() == 7.5);
}

TEST_CASE("seasonal naive reads the first day of the weekly lookback", "[forecast]") {
    const Panel p = synthetic_panel(300, 0, 5);
    const WindowConfig c = wcfg(168, 24, {"load"});
    SeasonalNaive model(c);
    const auto windows = make_windows(p, c, 0, 192);
    REQUIRE(windows.size() == 1);
    const Eigen::VectorXd pred = model.predict(windows.front());
    for (int h = 0; h < 24; ++h) CHECK(pred(h) == windows.front().x(h, 0));
}

TEST_CASE("seasonal naive configuration errors", "[forecast]") {
    CHECK_THROWS_AS(SeasonalNaive(wcfg(100, 24, {"load"})), DataError);   // short lookback
    CHECK_THROWS_AS(SeasonalNaive(wcfg(168, 24, {"w0"}, "load")), DataError); // target absent
}

TEST_CASE("ridge fits a realizable linear target to numerical precision", "[forecast]") {
    Rng rng(6);
    std::vector<WindowSample> train;
    for (int i = 0; i < 60; ++i) {
        WindowSample w;
        w.x.resize(4, 2);
        for (Eigen::Index a = 0; a < 4; ++a)
            for (Eigen::Index b = 0; b < 2; ++b) w.x(a, b) = rng.normal();
        w.y.resize(3);
        for (Eigen::Index h = 0; h < 3; ++h)
            w.y(h) = 2.0 * w.x(0, 0) - 1.5 * w.x(3, 1) + 0.25 * (h + 1);
        train.push_back(w);
    }
    RidgeForecaster model(1e-8);
    model.fit(train, {});
    double worst = 0;
    for (const auto& w : train)
        worst = std::max(worst, (model.predict(w) - w.y).cwiseAbs().maxCoeff());
    CHECK(worst < 1e-6);
}

TEST_CASE("ridge shrinks to the training mean as lambda grows", "[forecast]") {
    Rng rng(7);
    std::vector<WindowSample> train;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
    for (int i = 0; i < 40; ++i) {
        WindowSample w;
        w.x.resize(3, 1);
        for (Eigen::Index a = 0; a < 3; ++a) w.x(a, 0) = rng.normal();
        w.y.resize(2);
        w.y << rng.normal(5.0, 1.0), rng.normal(-2.0, 1.0);
        mean += w.y;
        train.push_back(w);
    }
    mean /= 40.0;
    RidgeForecaster model(1e12);
    model.fit(train, {});
    const Eigen::VectorXd pred = model.predict(train.front());
    CHECK_THAT(pred(0), Catch::Matchers::WithinAbs(mean(0), 1e-6));
    CHECK_THAT(pred(1), Catch::Matchers::WithinAbs(mean(1), 1e-6));
}

TEST_CASE("ridge coefficients match an independent solver", "[forecast]") {
    Rng rng(8);
    std::vector<WindowSample> train;
    const int n = 50, L = 5, F = 3, H = 2;
    for (int i = 0; i < n; ++i) {
        WindowSample w;
        w.x.resize(L, F);
        for (Eigen::Index a = 0; a < L; ++a)
            for (Eigen::Index b = 0; b < F; ++b) w.x(a, b) = rng.normal();
        w.y.resize(H);
        for (Eigen::Index h = 0; h < H; ++h) w.y(h) = rng.normal();
        train.push_back(w);
    }
    const double lambda = 1.0;
    RidgeForecaster model(lambda);
    model.fit(train, {});

    // independent route: explicit normal equations + Gauss-Jordan elimination
    const int dim = L * F + 1;
    Eigen::MatrixXd phi(n, dim), y(n, H);
    for (int i = 0; i < n; ++i) {
        phi(i, 0) = 1.0;
        int k = 1;
        for (Eigen::Index a = 0; a < L; ++a)
            for (Eigen::Index b = 0; b < F; ++b) phi(i, k++) = train[i].x(a, b);
        y.row(i) = train[i].y;
    }
    Eigen::MatrixXd gram = phi.transpose() * phi;
    for (int j = 1; j < dim; ++j) gram(j, j) += lambda;
    const Eigen::MatrixXd expect = oracles::gauss_jordan_solve(gram, phi.transpose() * y);
    CHECK((model.coefficients() - expect).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("ridge normal-equation residual is tiny at the solution", "[forecast]") {
    Rng rng(9);
    std::vector<WindowSample> train;
    for (int i = 0; i < 30; ++i) {
        WindowSample w;
        w.x.resize(4, 2);
        for (Eigen::Index a = 0; a < 4; ++a)
            for (Eigen::Index b = 0; b < 2; ++b) w.x(a, b) = rng.normal();
        w.y.resize(2);
        w.y << rng.normal(), rng.normal();
        train.push_back(w);
    }
    const double lambda = 2.0;
    RidgeForecaster model(lambda);
    model.fit(train, {});
    Eigen::MatrixXd phi(30, 9), y(30, 2);
    for (int i = 0; i < 30; ++i) {
        phi(i, 0) = 1.0;
        int k = 1;
        for (Eigen::Index a = 0; a < 4; ++a)
            for (Eigen::Index b = 0; b < 2; ++b) phi(i, k++) = train[i].x(a, b);
        y.row(i) = train[i].y;
    }
    Eigen::MatrixXd grad = phi.transpose() * (phi * model.coefficients() - y);
    grad.bottomRows(8) += lambda * model.coefficients().bottomRows(8);
    CHECK(grad.norm() < 1e-6);
}

TEST_CASE("ridge without regularization rejects a singular system", "[forecast]") {
    // duplicated feature column makes the gram matrix singular
    Rng rng(10);
    std::vector<WindowSample> train;
    for (int i = 0; i < 20; ++i) {
        WindowSample w;
        w.x.resize(2, 2);
        const double v1 = rng.normal(), v2 = rng.normal();
        w.x << v1, v1, v2, v2;
        w.y.resize(1);
        w.y << rng.normal();
        train.push_back(w);
    }
    RidgeForecaster model(0.0);
    CHECK_THROWS_WITH(model.fit(train, {}), Catch::Matchers::ContainsSubstring("lambda"));
}

TEST_CASE("predict never reads the horizon target", "[forecast]") {
    const Panel p = synthetic_panel(700, 1, 11);
    const WindowConfig c = wcfg(168, 24, {"load", "w0"});
    const auto windows = make_windows(p, c, 0, 700);
    const std::vector<WindowSample> train(windows.begin(), windows.begin() + 100);

    SeasonalNaive naive(c);
    RidgeForecaster ridge(1.0);
    ridge.fit(train, {});
    for (Forecaster* model : std::initializer_list<Forecaster*>{&naive, &ridge}) {
        WindowSample probe = windows.back();
        const Eigen::VectorXd before = model->predict(probe);
        probe.y.setConstant(1e9); // poison
        const Eigen::VectorXd after = model->predict(probe);
        CHECK(before == after);
    }
}
