#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stlf/error.hpp"
#include "stlf/panel.hpp"

namespace stlf {

struct WindowConfig {
    int lookback = 168; // hours
    int horizon = 24;   // hours
    std::vector<std::string> features;
    std::string target;

    void validate() const {
        if (lookback < 1 || horizon < 1)
            throw DataError("WindowConfig: lookback and horizon must be >= 1");
        if (features.empty() || target.empty())
            throw DataError("WindowConfig: features and target must be set");
    }
};

// One supervised sample: a lookback block of scaled predictors and the
// scaled target over the horizon. Rows of x are chronological.
struct WindowSample {
    Eigen::MatrixXd x; // lookback x n_features
    Eigen::VectorXd y; // horizon
    std::int64_t origin_hour = 0; // timestamp of the last lookback row
};

// Stride-1 windows fully inside [row_lo, row_hi); any window touching a
// masked cell (features over the lookback, target over the horizon) is
// dropped.
inline std::vector<WindowSample> make_windows(const Panel& panel, const WindowConfig& cfg,
                                              std::size_t row_lo = 0,
                                              std::size_t row_hi =
                                                  static_cast<std::size_t>(-1)) {
    cfg.validate();
    if (row_hi == static_cast<std::size_t>(-1)) row_hi = panel.rows();
    if (row_hi > panel.rows() || row_lo >= row_hi)
        throw DataError("make_windows: empty or out-of-range row window");
    const std::size_t span = row_hi - row_lo;
    const std::size_t need = static_cast<std::size_t>(cfg.lookback + cfg.horizon);
    if (span < need)
        throw DataError("make_windows: range of " + std::to_string(span) +
                        " rows is shorter than lookback+horizon = " + std::to_string(need));

    std::vector<std::size_t> fcols;
    for (const auto& f : cfg.features) fcols.push_back(panel.require(f));
    const std::size_t tcol = panel.require(cfg.target);

    std::vector<WindowSample> out;
    const std::size_t L = static_cast<std::size_t>(cfg.lookback);
    const std::size_t H = static_cast<std::size_t>(cfg.horizon);
    for (std::size_t s = row_lo; s + need <= row_hi; ++s) {
        bool ok = true;
        for (std::size_t t = s; t < s + L && ok; ++t)
            for (const std::size_t j : fcols)
                if (!panel.is_observed(t, j)) {
                    ok = false;
                    break;
                }
        for (std::size_t t = s + L; t < s + need && ok; ++t)
            if (!panel.is_observed(t, tcol)) ok = false;
        if (!ok) continue;

        WindowSample w;
        w.x.resize(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(fcols.size()));
        for (std::size_t t = 0; t < L; ++t)
            for (std::size_t j = 0; j < fcols.size(); ++j)
                w.x(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) =
                    panel.value(s + t, fcols[j]);
        w.y.resize(static_cast<Eigen::Index>(H));
        for (std::size_t t = 0; t < H; ++t)
            w.y(static_cast<Eigen::Index>(t)) = panel.value(s + L + t, tcol);
        w.origin_hour = panel.timestamp(s + L - 1);
        out.push_back(std::move(w));
    }
    return out;
}

// Common forecaster contract: fit on train/validation windows, then pure
// prediction. predict must never read sample.y.
class Forecaster {
public:
    virtual ~Forecaster() = default;
    virtual void fit(const std::vector<WindowSample>& train,
                     const std::vector<WindowSample>& val) = 0;
    virtual Eigen::VectorXd predict(const WindowSample& sample) const = 0;
    virtual std::string name() const = 0;
    virtual nlohmann::json weights_json() const = 0;
};

// y_hat(t+h) = y(t+h-period), read from the target column of the lookback
// block. Requires lookback >= period and horizon <= period.
class SeasonalNaive final : public Forecaster {
public:
    explicit SeasonalNaive(const WindowConfig& cfg, int period_hours = 168)
        : period_(period_hours) {
        cfg.validate();
        target_col_ = -1;
        for (std::size_t j = 0; j < cfg.features.size(); ++j)
            if (cfg.features[j] == cfg.target) target_col_ = static_cast<int>(j);
        if (target_col_ < 0)
            throw DataError("SeasonalNaive: target column must be among the features");
        if (cfg.lookback < period_)
            throw DataError("SeasonalNaive: lookback shorter than the seasonal period");
        if (cfg.horizon > period_)
            throw DataError("SeasonalNaive: horizon longer than the seasonal period");
        horizon_ = cfg.horizon;
        lookback_ = cfg.lookback;
    }

    void fit(const std::vector<WindowSample>&, const std::vector<WindowSample>&) override {}

    Eigen::VectorXd predict(const WindowSample& s) const override {
        Eigen::VectorXd out(horizon_);
        for (int h = 0; h < horizon_; ++h)
            out(h) = s.x(lookback_ - period_ + h, target_col_);
        return out;
    }

    std::string name() const override { return "naive"; }
    nlohmann::json weights_json() const override {
        return {{"model", "naive"}, {"period", period_}};
    }

private:
    int period_;
    int target_col_;
    int horizon_ = 0;
    int lookback_ = 0;
};

// Per-horizon-step ridge regression on the flattened lookback block plus an
// unpenalized intercept, solved in closed form from the normal equations.
class RidgeForecaster final : public Forecaster {
public:
    explicit RidgeForecaster(double lambda = 1.0) : lambda_(lambda) {
        if (lambda_ < 0.0)
            throw DataError("RidgeForecaster: lambda must be >= 0");
    }

    void fit(const std::vector<WindowSample>& train,
             const std::vector<WindowSample>& val) override {
        (void)val;
        if (train.size() < 2)
            throw NumericError("ridge: need at least 2 training windows");
        const Eigen::Index dim = train[0].x.size() + 1;
        const Eigen::Index horizon = train[0].y.size();
        const Eigen::Index n = static_cast<Eigen::Index>(train.size());

        Eigen::MatrixXd phi(n, dim);
        Eigen::MatrixXd y(n, horizon);
        for (Eigen::Index i = 0; i < n; ++i) {
            phi(i, 0) = 1.0;
            phi.row(i).segment(1, dim - 1) = flatten(train[static_cast<std::size_t>(i)].x);
            y.row(i) = train[static_cast<std::size_t>(i)].y;
        }

        Eigen::MatrixXd gram = phi.transpose() * phi;
        for (Eigen::Index j = 1; j < dim; ++j) gram(j, j) += lambda_;
        const Eigen::MatrixXd rhs = phi.transpose() * y;
        weights_ = gram.ldlt().solve(rhs);

        // A singular system shows up as a non-solution of the normal
        // equations; closed form has no remedy other than regularizing.
        const double resid = (gram * weights_ - rhs).cwiseAbs().maxCoeff();
        const double scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
        if (!std::isfinite(resid) || resid > 1e-6 * scale)
            throw NumericError("ridge: normal equations are singular; use lambda > 0");
        fitted_ = true;
    }

    Eigen::VectorXd predict(const WindowSample& s) const override {
        if (!fitted_)
            throw NumericError("ridge: predict before fit");
        Eigen::RowVectorXd row(weights_.rows());
        row(0) = 1.0;
        row.segment(1, weights_.rows() - 1) = flatten(s.x);
        return (row * weights_).transpose();
    }

    // (1 + lookback*n_features) x horizon, intercept first.
    const Eigen::MatrixXd& coefficients() const { return weights_; }
    double lambda() const { return lambda_; }

    std::string name() const override { return "ridge"; }

    nlohmann::json weights_json() const override {
        nlohmann::json w = nlohmann::json::array();
        for (Eigen::Index i = 0; i < weights_.rows(); ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (Eigen::Index j = 0; j < weights_.cols(); ++j) row.push_back(weights_(i, j));
            w.push_back(row);
        }
        return {{"model", "ridge"}, {"lambda", lambda_}, {"coefficients", w}};
    }

private:
    static Eigen::RowVectorXd flatten(const Eigen::MatrixXd& x) {
        Eigen::RowVectorXd out(x.size());
        Eigen::Index k = 0;
        for (Eigen::Index t = 0; t < x.rows(); ++t)
            for (Eigen::Index j = 0; j < x.cols(); ++j) out(k++) = x(t, j);
        return out;
    }

    double lambda_;
    Eigen::MatrixXd weights_;
    bool fitted_ = false;
};

} // namespace stlf
