#include <catch2/catch_amalgamated.hpp>

#include "stlf/gru.hpp"
#include "stlf/rng.hpp"

using namespace stlf;

namespace {

std::vector<Eigen::MatrixXd> random_inputs(int steps, int dim, int batch, Rng& rng) {
    std::vector<Eigen::MatrixXd> inputs(static_cast<std::size_t>(steps));
    for (auto& m : inputs) {
        m.resize(dim, batch);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    }
    return inputs;
}

// Simple learnable task: predict a linear readout of the last input step.
std::vector<WindowSample> linear_task(int count, int steps, int dim, int horizon,
                                      std::uint64_t seed) {
    Rng rng(seed);
    std::vector<WindowSample> out;
    for (int i = 0; i < count; ++i) {
        WindowSample w;
        w.x.resize(steps, dim);
        for (Eigen::Index a = 0; a < w.x.size(); ++a) w.x.data()[a] = rng.normal();
        w.y.resize(horizon);
        for (int h = 0; h < horizon; ++h)
            w.y(h) = 0.8 * w.x(steps - 1, 0) - 0.5 * w.x(steps - 1, dim - 1);
        out.push_back(std::move(w));
    }
    return out;
}

} // namespace

TEST_CASE("analytic gradients match central finite differences", "[gru]") {
    GruConfig gc;
    gc.hidden = 4;
    gc.layers = 1;
    GruNet net(3, 2, gc, 12345);
    Rng rng(99);
    const auto inputs = random_inputs(8, 3, 2, rng);
    Eigen::MatrixXd y(2, 2);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.normal();

    const auto cache = net.forward(inputs);
    auto grads = net.backward(cache, y);
    auto params = net.parameters();
    auto gptrs = grads.all();

    const double h = 1e-5;
    double max_rel = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        for (Eigen::Index k = 0; k < params[pi]->size(); ++k) {
            double& slot = params[pi]->data()[k];
            const double orig = slot;
            slot = orig + h;
            const double lp = GruNet::loss(net.forward(inputs), y);
            slot = orig - h;
            const double lm = GruNet::loss(net.forward(inputs), y);
            slot = orig;
            const double fd = (lp - lm) / (2.0 * h);
            const double an = gptrs[pi]->data()[k];
            max_rel = std::max(max_rel,
                               std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
        }
    }
    CHECK(max_rel < 1e-4);
}

TEST_CASE("gradients stay exact through stacked layers and dropout masks", "[gru]") {
    GruConfig gc;
    gc.hidden = 3;
    gc.layers = 2;
    GruNet net(3, 2, gc, 777);
    Rng rng(5);
    const auto inputs = random_inputs(6, 3, 2, rng);
    Eigen::MatrixXd y(2, 2);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.normal();
    std::vector<std::vector<Eigen::MatrixXd>> masks(1);
    masks[0].assign(6, Eigen::MatrixXd());
    for (auto& m : masks[0]) {
        m.resize(3, 2);
        for (Eigen::Index i = 0; i < m.size(); ++i)
            m.data()[i] = rng.uniform01() < 0.8 ? 1.25 : 0.0;
    }

    const auto cache = net.forward(inputs, &masks);
    auto grads = net.backward(cache, y);
    auto params = net.parameters();
    auto gptrs = grads.all();
    const double h = 1e-5;
    double max_rel = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi)
        for (Eigen::Index k = 0; k < params[pi]->size(); ++k) {
            double& slot = params[pi]->data()[k];
            const double orig = slot;
            slot = orig + h;
            const double lp = GruNet::loss(net.forward(inputs, &masks), y);
            slot = orig - h;
            const double lm = GruNet::loss(net.forward(inputs, &masks), y);
            slot = orig;
            const double fd = (lp - lm) / (2.0 * h);
            max_rel = std::max(max_rel, std::abs(fd - gptrs[pi]->data()[k]) /
                                            std::max({std::abs(fd),
                                                      std::abs(gptrs[pi]->data()[k]), 1e-6}));
        }
    CHECK(max_rel < 1e-4);
}

TEST_CASE("constant target converges quickly", "[gru]") {
    std::vector<WindowSample> train, val;
    Rng rng(3);
    for (int i = 0; i < 64; ++i) {
        WindowSample w;
        w.x.resize(8, 2);
        for (Eigen::Index a = 0; a < w.x.size(); ++a) w.x.data()[a] = rng.normal();
        w.y = Eigen::VectorXd::Constant(2, 0.7);
        (i < 48 ? train : val).push_back(std::move(w));
    }
    GruConfig gc;
    gc.hidden = 8;
    gc.layers = 1;
    TrainConfig tc;
    tc.learning_rate = 1e-2;
    tc.max_epochs = 50;
    tc.patience = 49;
    tc.dropout = 0.0;
    tc.seed = 7;
    GruForecaster model(gc, tc);
    model.fit(train, val);
    CHECK(model.history().best_val_mae < 0.05);
    CHECK(model.history().epochs_run <= 50);
}

TEST_CASE("early stopping halts on a stalled validation metric and restores the best",
          "[gru]") {
    // pure-noise target with a tiny learning rate: no epoch can improve by
    // min_delta, so training stops right after the patience budget
    std::vector<WindowSample> train, val;
    Rng rng(4);
    for (int i = 0; i < 40; ++i) {
        WindowSample w;
        w.x.resize(6, 2);
        for (Eigen::Index a = 0; a < w.x.size(); ++a) w.x.data()[a] = rng.normal();
        w.y.resize(2);
        w.y << rng.normal(), rng.normal();
        (i < 30 ? train : val).push_back(std::move(w));
    }
    GruConfig gc;
    gc.hidden = 4;
    gc.layers = 1;
    TrainConfig tc;
    tc.learning_rate = 1e-12;
    tc.max_epochs = 200;
    tc.patience = 20;
    tc.dropout = 0.0;
    tc.seed = 1;
    GruForecaster model(gc, tc);
    model.fit(train, val);
    const GruFitHistory& h = model.history();
    CHECK(h.epochs_run == h.best_epoch + 1 + tc.patience + 1);
    CHECK(h.best_val_mae == *std::min_element(h.val_mae.begin(), h.val_mae.end()));
    // restored weights reproduce the best epoch's validation MAE
    CHECK_THAT(model.evaluate_mae(val), Catch::Matchers::WithinAbs(h.best_val_mae, 1e-12));
}

TEST_CASE("training is deterministic given the seed", "[gru]") {
    const auto train = linear_task(50, 6, 3, 2, 11);
    const auto val = linear_task(10, 6, 3, 2, 12);
    GruConfig gc;
    gc.hidden = 6;
    gc.layers = 2;
    TrainConfig tc;
    tc.learning_rate = 1e-3;
    tc.max_epochs = 8;
    tc.patience = 7;
    tc.seed = 21;
    GruForecaster a(gc, tc), b(gc, tc);
    a.fit(train, val);
    b.fit(train, val);
    CHECK(a.weights_json().dump() == b.weights_json().dump());

    TrainConfig tc2 = tc;
    tc2.seed = 22;
    GruForecaster c(gc, tc2);
    c.fit(train, val);
    CHECK(a.weights_json().dump() != c.weights_json().dump());
}

TEST_CASE("prediction shape is always the horizon and gates stay in (0,1)", "[gru]") {
    GruConfig gc;
    gc.hidden = 5;
    gc.layers = 2;
    GruNet net(4, 7, gc, 3);
    Rng rng(6);
    const auto inputs = random_inputs(10, 4, 3, rng);
    const auto cache = net.forward(inputs);
    CHECK(cache.y_hat.rows() == 7);
    CHECK(cache.y_hat.cols() == 3);
    for (const auto& layer : cache.steps)
        for (const auto& step : layer) {
            CHECK(step.z.minCoeff() > 0.0);
            CHECK(step.z.maxCoeff() < 1.0);
            CHECK(step.r.minCoeff() > 0.0);
            CHECK(step.r.maxCoeff() < 1.0);
        }

    WindowSample w;
    w.x.resize(10, 4);
    for (Eigen::Index i = 0; i < w.x.size(); ++i) w.x.data()[i] = rng.normal();
    w.y = Eigen::VectorXd::Zero(7);
    CHECK(net.predict(w).size() == 7);
}

TEST_CASE("gru prediction ignores the sample target", "[gru]") {
    const auto train = linear_task(40, 6, 3, 2, 31);
    const auto val = linear_task(8, 6, 3, 2, 32);
    GruConfig gc;
    gc.hidden = 4;
    gc.layers = 1;
    TrainConfig tc;
    tc.max_epochs = 3;
    tc.patience = 2;
    tc.seed = 5;
    GruForecaster model(gc, tc);
    model.fit(train, val);
    WindowSample probe = val.front();
    const Eigen::VectorXd before = model.predict(probe);
    probe.y.setConstant(-4444.0);
    CHECK(model.predict(probe) == before);
}

TEST_CASE("training diverges loudly on an exploding objective", "[gru]") {
    // absurd learning rate drives the loss to non-finite values
    const auto train = linear_task(30, 5, 2, 2, 41);
    const auto val = linear_task(5, 5, 2, 2, 42);
    GruConfig gc;
    gc.hidden = 4;
    gc.layers = 1;
    TrainConfig tc;
    tc.learning_rate = 1e60;
    tc.max_epochs = 50;
    tc.patience = 10;
    tc.seed = 2;
    GruForecaster model(gc, tc);
    try {
        model.fit(train, val);
        // adam's normalized steps can keep the loss finite; acceptable
    } catch (const NumericError& e) {
        CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("epoch"));
    }
}

TEST_CASE("weight checkpoints carry a version and the config header", "[gru]") {
    const auto train = linear_task(20, 4, 2, 2, 51);
    GruConfig gc;
    gc.hidden = 3;
    gc.layers = 1;
    TrainConfig tc;
    tc.max_epochs = 2;
    tc.patience = 1;
    tc.seed = 9;
    GruForecaster model(gc, tc);
    model.fit(train, train);
    const nlohmann::json j = model.weights_json();
    CHECK(j.at("format") == "gru-weights-v1");
    CHECK(j.at("config").at("hidden") == 3);
    CHECK(j.at("layers").size() == 1);
}
