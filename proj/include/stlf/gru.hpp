#pragma once

#include <Eigen/Dense>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stlf/error.hpp"
#include "stlf/forecast.hpp"
#include "stlf/rng.hpp"

namespace stlf {

struct TrainConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch_size = 64;
    int max_epochs = 500;
    int patience = 20;       // epochs without val-MAE improvement before halting
    double min_delta = 1e-4; // improvement below this does not reset patience
    double dropout = 0.1;    // between stacked layers only
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate > 0.0) || !(beta1 > 0.0 && beta1 < 1.0) ||
            !(beta2 > 0.0 && beta2 < 1.0) || !(adam_eps > 0.0))
            throw DataError("TrainConfig: bad optimizer parameters");
        if (batch_size < 1 || max_epochs < 1 || patience < 0 || min_delta < 0.0)
            throw DataError("TrainConfig: bad schedule parameters");
        if (patience >= max_epochs)
            throw DataError("TrainConfig: patience must be < max_epochs");
        if (dropout < 0.0 || dropout >= 1.0)
            throw DataError("TrainConfig: dropout must lie in [0, 1)");
    }
};

struct GruConfig {
    int hidden = 64;
    int layers = 4;

    void validate() const {
        if (hidden < 1 || layers < 1)
            throw DataError("GruConfig: hidden and layers must be >= 1");
    }
};

namespace detail {

inline Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& a) {
    return (1.0 / (1.0 + (-a.array()).exp())).matrix();
}

struct GruLayerParams {
    // Gate order everywhere: update (z), reset (r), candidate (n).
    Eigen::MatrixXd wz, wr, wn; // hidden x input
    Eigen::MatrixXd uz, ur, un; // hidden x hidden
    Eigen::MatrixXd bz, br, bn; // hidden x 1
    Eigen::MatrixXd cn;         // hidden x 1, hidden-side candidate bias

    std::vector<Eigen::MatrixXd*> all() {
        return {&wz, &wr, &wn, &uz, &ur, &un, &bz, &br, &bn, &cn};
    }
    std::vector<const Eigen::MatrixXd*> all() const {
        return {&wz, &wr, &wn, &uz, &ur, &un, &bz, &br, &bn, &cn};
    }
};

struct GruStepCache {
    Eigen::MatrixXd x, h_prev, z, r, hc, n, h; // all hidden x batch except x
};

inline Eigen::MatrixXd orthogonal(int n, Rng& rng) {
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) a(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < n; ++j)
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    return q;
}

inline Eigen::MatrixXd uniform_fan_in(int rows, int cols, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
    return m;
}

} // namespace detail

// Stacked GRU over the lookback steps with a linear head on the final hidden
// state. Double precision throughout; forward/backward are exposed so the
// analytic gradients can be checked against finite differences.
class GruNet {
public:
    GruNet(int input_dim, int horizon, const GruConfig& cfg, std::uint64_t init_seed)
        : input_dim_(input_dim), horizon_(horizon), cfg_(cfg) {
        cfg_.validate();
        Rng rng(init_seed);
        layers_.resize(static_cast<std::size_t>(cfg_.layers));
        for (int l = 0; l < cfg_.layers; ++l) {
            const int in = l == 0 ? input_dim_ : cfg_.hidden;
            auto& p = layers_[static_cast<std::size_t>(l)];
            p.wz = detail::uniform_fan_in(cfg_.hidden, in, rng);
            p.wr = detail::uniform_fan_in(cfg_.hidden, in, rng);
            p.wn = detail::uniform_fan_in(cfg_.hidden, in, rng);
            p.uz = detail::orthogonal(cfg_.hidden, rng);
            p.ur = detail::orthogonal(cfg_.hidden, rng);
            p.un = detail::orthogonal(cfg_.hidden, rng);
            p.bz = Eigen::MatrixXd::Zero(cfg_.hidden, 1);
            p.br = Eigen::MatrixXd::Zero(cfg_.hidden, 1);
            p.bn = Eigen::MatrixXd::Zero(cfg_.hidden, 1);
            p.cn = Eigen::MatrixXd::Zero(cfg_.hidden, 1);
        }
        w_out_ = detail::uniform_fan_in(horizon_, cfg_.hidden, rng);
        b_out_ = Eigen::MatrixXd::Zero(horizon_, 1);
    }

    int input_dim() const { return input_dim_; }
    int horizon() const { return horizon_; }
    const GruConfig& config() const { return cfg_; }

    std::vector<Eigen::MatrixXd*> parameters() {
        std::vector<Eigen::MatrixXd*> out;
        for (auto& l : layers_)
            for (auto* m : l.all()) out.push_back(m);
        out.push_back(&w_out_);
        out.push_back(&b_out_);
        return out;
    }

    struct Cache {
        // steps[layer][t]; drop_mask[layer-1][t] scaled by 1/(1-p)
        std::vector<std::vector<detail::GruStepCache>> steps;
        std::vector<std::vector<Eigen::MatrixXd>> drop_mask;
        Eigen::MatrixXd h_final; // hidden x batch, top layer
        Eigen::MatrixXd y_hat;   // horizon x batch
    };

    // inputs[t] is input_dim x batch. Dropout masks (already inverted-scaled)
    // apply between stacked layers when supplied.
    Cache forward(const std::vector<Eigen::MatrixXd>& inputs,
                  const std::vector<std::vector<Eigen::MatrixXd>>* dropout = nullptr) const {
        const std::size_t steps = inputs.size();
        const Eigen::Index batch = inputs[0].cols();
        Cache c;
        c.steps.resize(layers_.size());
        if (dropout) c.drop_mask = *dropout;

        std::vector<Eigen::MatrixXd> layer_in = inputs;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const auto& p = layers_[l];
            c.steps[l].resize(steps);
            Eigen::MatrixXd h = Eigen::MatrixXd::Zero(cfg_.hidden, batch);
            for (std::size_t t = 0; t < steps; ++t) {
                Eigen::MatrixXd x = layer_in[t];
                if (l > 0 && dropout) x = x.cwiseProduct(c.drop_mask[l - 1][t]);
                auto& s = c.steps[l][t];
                s.x = x;
                s.h_prev = h;
                s.z = detail::sigmoid((p.wz * x + p.uz * h).colwise() +
                                      Eigen::VectorXd(p.bz.col(0)));
                s.r = detail::sigmoid((p.wr * x + p.ur * h).colwise() +
                                      Eigen::VectorXd(p.br.col(0)));
                s.hc = (p.un * h).colwise() + Eigen::VectorXd(p.cn.col(0));
                Eigen::MatrixXd an = ((p.wn * x).colwise() + Eigen::VectorXd(p.bn.col(0))) +
                                     s.r.cwiseProduct(s.hc);
                s.n = an.array().tanh().matrix();
                h = (1.0 - s.z.array()).matrix().cwiseProduct(s.n) + s.z.cwiseProduct(s.h_prev);
                s.h = h;
                layer_in[t] = h;
            }
        }
        c.h_final = c.steps.back().back().h;
        c.y_hat = (w_out_ * c.h_final).colwise() + Eigen::VectorXd(b_out_.col(0));
        return c;
    }

    // Mean squared error over horizon x batch.
    static double loss(const Cache& c, const Eigen::MatrixXd& y) {
        return (c.y_hat - y).array().square().mean();
    }

    struct Gradients {
        std::vector<detail::GruLayerParams> layers;
        Eigen::MatrixXd w_out, b_out;

        std::vector<Eigen::MatrixXd*> all() {
            std::vector<Eigen::MatrixXd*> out;
            for (auto& l : layers)
                for (auto* m : l.all()) out.push_back(m);
            out.push_back(&w_out);
            out.push_back(&b_out);
            return out;
        }
    };

    Gradients backward(const Cache& c, const Eigen::MatrixXd& y) const {
        const std::size_t steps = c.steps[0].size();
        const Eigen::Index batch = y.cols();
        const double denom = static_cast<double>(horizon_) * static_cast<double>(batch);

        Gradients g;
        g.layers.resize(layers_.size());
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const auto& p = layers_[l];
            auto& gl = g.layers[l];
            gl.wz = Eigen::MatrixXd::Zero(p.wz.rows(), p.wz.cols());
            gl.wr = Eigen::MatrixXd::Zero(p.wr.rows(), p.wr.cols());
            gl.wn = Eigen::MatrixXd::Zero(p.wn.rows(), p.wn.cols());
            gl.uz = Eigen::MatrixXd::Zero(p.uz.rows(), p.uz.cols());
            gl.ur = Eigen::MatrixXd::Zero(p.ur.rows(), p.ur.cols());
            gl.un = Eigen::MatrixXd::Zero(p.un.rows(), p.un.cols());
            gl.bz = Eigen::MatrixXd::Zero(cfg_.hidden, 1);
            gl.br = Eigen::MatrixXd::Zero(cfg_.hidden, 1);
            gl.bn = Eigen::MatrixXd::Zero(cfg_.hidden, 1);
            gl.cn = Eigen::MatrixXd::Zero(cfg_.hidden, 1);
        }

        const Eigen::MatrixXd dy = 2.0 * (c.y_hat - y) / denom;
        g.w_out = dy * c.h_final.transpose();
        g.b_out = dy.rowwise().sum();

        // dh arriving at each step of the layer being processed; seeded for
        // the top layer by the head, then rebuilt from dx of the layer above.
        std::vector<Eigen::MatrixXd> dh_in(steps,
                                           Eigen::MatrixXd::Zero(cfg_.hidden, batch));
        dh_in[steps - 1] = w_out_.transpose() * dy;

        for (std::size_t li = layers_.size(); li-- > 0;) {
            const auto& p = layers_[li];
            auto& gl = g.layers[li];
            std::vector<Eigen::MatrixXd> dx(steps);
            Eigen::MatrixXd dh_next = Eigen::MatrixXd::Zero(cfg_.hidden, batch);
            for (std::size_t t = steps; t-- > 0;) {
                const auto& s = c.steps[li][t];
                const Eigen::MatrixXd dh = dh_in[t] + dh_next;

                const Eigen::MatrixXd dz = dh.cwiseProduct(s.h_prev - s.n);
                const Eigen::MatrixXd daz =
                    dz.array().cwiseProduct(s.z.array() * (1.0 - s.z.array())).matrix();
                const Eigen::MatrixXd dn =
                    dh.array().cwiseProduct(1.0 - s.z.array()).matrix();
                const Eigen::MatrixXd dan =
                    dn.array().cwiseProduct(1.0 - s.n.array().square()).matrix();
                const Eigen::MatrixXd dr = dan.cwiseProduct(s.hc);
                const Eigen::MatrixXd dar =
                    dr.array().cwiseProduct(s.r.array() * (1.0 - s.r.array())).matrix();
                const Eigen::MatrixXd dhc = dan.cwiseProduct(s.r);

                gl.wz += daz * s.x.transpose();
                gl.uz += daz * s.h_prev.transpose();
                gl.bz += daz.rowwise().sum();
                gl.wr += dar * s.x.transpose();
                gl.ur += dar * s.h_prev.transpose();
                gl.br += dar.rowwise().sum();
                gl.wn += dan * s.x.transpose();
                gl.bn += dan.rowwise().sum();
                gl.un += dhc * s.h_prev.transpose();
                gl.cn += dhc.rowwise().sum();

                dh_next = dh.cwiseProduct(s.z) + p.uz.transpose() * daz +
                          p.ur.transpose() * dar + p.un.transpose() * dhc;
                dx[t] = p.wz.transpose() * daz + p.wr.transpose() * dar +
                        p.wn.transpose() * dan;
            }
            if (li > 0) {
                for (std::size_t t = 0; t < steps; ++t) {
                    dh_in[t] = dx[t];
                    if (!c.drop_mask.empty())
                        dh_in[t] = dh_in[t].cwiseProduct(c.drop_mask[li - 1][t]);
                }
            }
        }
        return g;
    }

    Eigen::VectorXd predict(const WindowSample& sample) const {
        std::vector<Eigen::MatrixXd> inputs(static_cast<std::size_t>(sample.x.rows()));
        for (Eigen::Index t = 0; t < sample.x.rows(); ++t)
            inputs[static_cast<std::size_t>(t)] = sample.x.row(t).transpose();
        const Cache c = forward(inputs);
        return c.y_hat.col(0);
    }

    nlohmann::json to_json() const {
        auto dump = [](const Eigen::MatrixXd& m) {
            nlohmann::json rows = nlohmann::json::array();
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                nlohmann::json r = nlohmann::json::array();
                for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
                rows.push_back(r);
            }
            return rows;
        };
        nlohmann::json jl = nlohmann::json::array();
        static const char* names[] = {"wz", "wr", "wn", "uz", "ur", "un",
                                      "bz", "br", "bn", "cn"};
        for (const auto& l : layers_) {
            nlohmann::json entry;
            const auto mats = l.all();
            for (std::size_t i = 0; i < mats.size(); ++i) entry[names[i]] = dump(*mats[i]);
            jl.push_back(entry);
        }
        return {{"format", "gru-weights-v1"},
                {"config",
                 {{"hidden", cfg_.hidden},
                  {"layers", cfg_.layers},
                  {"input_dim", input_dim_},
                  {"horizon", horizon_}}},
                {"layers", jl},
                {"w_out", dump(w_out_)},
                {"b_out", dump(b_out_)}};
    }

private:
    int input_dim_;
    int horizon_;
    GruConfig cfg_;
    std::vector<detail::GruLayerParams> layers_;
    Eigen::MatrixXd w_out_; // horizon x hidden
    Eigen::MatrixXd b_out_; // horizon x 1

    friend class GruForecaster;
};

struct GruFitHistory {
    int epochs_run = 0;
    int best_epoch = -1; // zero-based
    double best_val_mae = std::numeric_limits<double>::infinity();
    std::vector<double> val_mae;
};

// Training wrapper: minibatch Adam on the L2 loss with early stopping on
// validation MAE and best-weights restoration. Deterministic given the seed:
// init, shuffling and dropout each draw from their own labelled stream and
// gradients accumulate in a fixed order.
class GruForecaster final : public Forecaster {
public:
    GruForecaster(const GruConfig& gcfg, const TrainConfig& tcfg)
        : gcfg_(gcfg), tcfg_(tcfg) {
        gcfg_.validate();
        tcfg_.validate();
    }

    void fit(const std::vector<WindowSample>& train,
             const std::vector<WindowSample>& val) override {
        if (train.empty() || val.empty())
            throw NumericError("gru: need non-empty train and validation sets");
        const int input_dim = static_cast<int>(train[0].x.cols());
        const int horizon = static_cast<int>(train[0].y.size());

        net_ = std::make_unique<GruNet>(input_dim, horizon, gcfg_,
                                        derive_seed(tcfg_.seed, "gru-init"));
        Rng shuffle_rng(derive_seed(tcfg_.seed, "gru-shuffle"));
        Rng dropout_rng(derive_seed(tcfg_.seed, "gru-dropout"));

        auto params = net_->parameters();
        std::vector<Eigen::MatrixXd> m, v;
        for (auto* p : params) {
            m.emplace_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
            v.emplace_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
        }
        std::int64_t adam_steps = 0;

        std::vector<std::size_t> order(train.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

        history_ = GruFitHistory{};
        std::vector<Eigen::MatrixXd> best;
        int stale = 0;
        for (int epoch = 0; epoch < tcfg_.max_epochs; ++epoch) {
            shuffle_rng.shuffle(order);
            for (std::size_t ofs = 0; ofs < order.size();
                 ofs += static_cast<std::size_t>(tcfg_.batch_size)) {
                const std::size_t bend =
                    std::min(order.size(), ofs + static_cast<std::size_t>(tcfg_.batch_size));
                std::vector<const WindowSample*> batch;
                for (std::size_t i = ofs; i < bend; ++i) batch.push_back(&train[order[i]]);

                std::vector<Eigen::MatrixXd> inputs;
                Eigen::MatrixXd y;
                pack(batch, inputs, y);

                std::vector<std::vector<Eigen::MatrixXd>> masks;
                const std::vector<std::vector<Eigen::MatrixXd>>* mask_ptr = nullptr;
                if (tcfg_.dropout > 0.0 && gcfg_.layers > 1) {
                    masks = make_dropout_masks(inputs.size(), y.cols(), dropout_rng);
                    mask_ptr = &masks;
                }

                const GruNet::Cache cache = net_->forward(inputs, mask_ptr);
                const double batch_loss = GruNet::loss(cache, y);
                if (!std::isfinite(batch_loss))
                    throw NumericError("gru: training diverged (non-finite loss) at epoch " +
                                       std::to_string(epoch));
                GruNet::Gradients grads = net_->backward(cache, y);
                auto gptrs = grads.all();

                ++adam_steps;
                const double bc1 = 1.0 - std::pow(tcfg_.beta1, static_cast<double>(adam_steps));
                const double bc2 = 1.0 - std::pow(tcfg_.beta2, static_cast<double>(adam_steps));
                for (std::size_t i = 0; i < params.size(); ++i) {
                    m[i] = tcfg_.beta1 * m[i] + (1.0 - tcfg_.beta1) * (*gptrs[i]);
                    v[i] = tcfg_.beta2 * v[i].array().matrix() +
                           (1.0 - tcfg_.beta2) * gptrs[i]->array().square().matrix();
                    const Eigen::ArrayXXd mhat = m[i].array() / bc1;
                    const Eigen::ArrayXXd vhat = v[i].array() / bc2;
                    params[i]->array() -=
                        tcfg_.learning_rate * mhat / (vhat.sqrt() + tcfg_.adam_eps);
                }
            }

            const double val_mae = evaluate_mae(val);
            history_.val_mae.push_back(val_mae);
            history_.epochs_run = epoch + 1;
            if (val_mae < history_.best_val_mae - tcfg_.min_delta) {
                history_.best_val_mae = val_mae;
                history_.best_epoch = epoch;
                best.clear();
                for (auto* p : params) best.push_back(*p);
                stale = 0;
            } else {
                ++stale;
                if (stale > tcfg_.patience) break;
            }
        }

        if (!best.empty()) {
            for (std::size_t i = 0; i < params.size(); ++i) *params[i] = best[i];
        }
        fitted_ = true;
    }

    Eigen::VectorXd predict(const WindowSample& sample) const override {
        if (!fitted_)
            throw NumericError("gru: predict before fit");
        return net_->predict(sample);
    }

    double evaluate_mae(const std::vector<WindowSample>& samples) const {
        double sum = 0.0;
        std::int64_t count = 0;
        for (const auto& s : samples) {
            const Eigen::VectorXd y_hat = net_->predict(s);
            sum += (y_hat - s.y).cwiseAbs().sum();
            count += s.y.size();
        }
        return sum / static_cast<double>(count);
    }

    const GruFitHistory& history() const { return history_; }
    const GruNet& net() const { return *net_; }

    std::string name() const override { return "gru"; }
    nlohmann::json weights_json() const override {
        if (!fitted_)
            throw NumericError("gru: no weights before fit");
        return net_->to_json();
    }

private:
    static void pack(const std::vector<const WindowSample*>& batch,
                     std::vector<Eigen::MatrixXd>& inputs, Eigen::MatrixXd& y) {
        const Eigen::Index steps = batch[0]->x.rows();
        const Eigen::Index fdim = batch[0]->x.cols();
        const Eigen::Index b = static_cast<Eigen::Index>(batch.size());
        inputs.assign(static_cast<std::size_t>(steps), Eigen::MatrixXd(fdim, b));
        for (Eigen::Index t = 0; t < steps; ++t)
            for (Eigen::Index i = 0; i < b; ++i)
                inputs[static_cast<std::size_t>(t)].col(i) =
                    batch[static_cast<std::size_t>(i)]->x.row(t).transpose();
        y.resize(batch[0]->y.size(), b);
        for (Eigen::Index i = 0; i < b; ++i) y.col(i) = batch[static_cast<std::size_t>(i)]->y;
    }

    std::vector<std::vector<Eigen::MatrixXd>> make_dropout_masks(std::size_t steps,
                                                                 Eigen::Index batch,
                                                                 Rng& rng) const {
        const double keep = 1.0 - tcfg_.dropout;
        std::vector<std::vector<Eigen::MatrixXd>> masks(
            static_cast<std::size_t>(gcfg_.layers - 1));
        for (auto& layer : masks) {
            layer.resize(steps);
            for (auto& m : layer) {
                m.resize(gcfg_.hidden, batch);
                for (Eigen::Index i = 0; i < m.rows(); ++i)
                    for (Eigen::Index j = 0; j < m.cols(); ++j)
                        m(i, j) = rng.uniform01() < keep ? 1.0 / keep : 0.0;
            }
        }
        return masks;
    }

    GruConfig gcfg_;
    TrainConfig tcfg_;
    std::unique_ptr<GruNet> net_;
    GruFitHistory history_;
    bool fitted_ = false;
};

} // namespace stlf
