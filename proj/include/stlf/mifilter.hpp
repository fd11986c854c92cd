#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stlf/assoc.hpp"
#include "stlf/error.hpp"
#include "stlf/panel.hpp"

namespace stlf {

struct MiFilterConfig {
    double mi_thres = 0.025; // nats
    double rho_max = 0.8;
    int knn_k = 3;
    // When > 0, a candidate's score is the maximum MI over alignments
    // y_t ~ x_{t-tau}, tau in [0, lag_max], instead of the contemporaneous
    // MI alone.
    int lag_max = 0;

    void validate() const {
        if (mi_thres < 0.0)
            throw DataError("MiFilterConfig: mi_thres must be >= 0");
        if (!(rho_max > 0.0 && rho_max < 1.0))
            throw DataError("MiFilterConfig: rho_max must lie in (0, 1)");
        if (knn_k < 1)
            throw DataError("MiFilterConfig: knn_k must be >= 1");
        if (lag_max < 0)
            throw DataError("MiFilterConfig: lag_max must be >= 0");
    }
};

struct MiScore {
    std::string name;
    double mi;
};

namespace detail {

// Rows in [lo, hi) where both columns are observed, aligned as
// (x at t - lag, y at t).
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> paired_complete(
    const Panel& panel, std::size_t xcol, std::size_t ycol, int lag, std::size_t lo,
    std::size_t hi) {
    std::vector<double> xs, ys;
    for (std::size_t t = lo + static_cast<std::size_t>(lag); t < hi; ++t) {
        const std::size_t tx = t - static_cast<std::size_t>(lag);
        if (!panel.is_observed(tx, xcol) || !panel.is_observed(t, ycol)) continue;
        xs.push_back(panel.value(tx, xcol));
        ys.push_back(panel.value(t, ycol));
    }
    Eigen::VectorXd x = Eigen::Map<Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
    Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
    return {std::move(x), std::move(y)};
}

} // namespace detail

// KSG mutual information of every candidate against the target, sorted
// descending with name as the tie-break, so the ranking does not depend on
// the candidate-list order.
inline std::vector<MiScore> mi_rank(const Panel& panel, const std::string& target,
                                    const std::vector<std::string>& candidates,
                                    const MiFilterConfig& cfg, std::size_t row_lo = 0,
                                    std::size_t row_hi = static_cast<std::size_t>(-1)) {
    cfg.validate();
    if (row_hi == static_cast<std::size_t>(-1)) row_hi = panel.rows();
    const std::size_t ycol = panel.require(target);
    std::vector<MiScore> scores;
    for (const auto& cand : candidates) {
        const std::size_t xcol = panel.require(cand);
        double best = -1.0;
        for (int lag = 0; lag <= cfg.lag_max; ++lag) {
            auto [x, y] = detail::paired_complete(panel, xcol, ycol, lag, row_lo, row_hi);
            best = std::max(best, knn_mutual_information(x, y, cfg.knn_k));
        }
        scores.push_back(MiScore{cand, best});
    }
    std::sort(scores.begin(), scores.end(), [](const MiScore& a, const MiScore& b) {
        if (a.mi != b.mi) return a.mi > b.mi;
        return a.name < b.name;
    });
    return scores;
}

// Greedy pass in MI-descending order: a candidate is kept iff its absolute
// Pearson correlation with every already-kept feature stays within rho_max.
inline std::vector<std::string> redundancy_screen(const std::vector<MiScore>& scored,
                                                  const Panel& panel,
                                                  const MiFilterConfig& cfg,
                                                  std::size_t row_lo = 0,
                                                  std::size_t row_hi =
                                                      static_cast<std::size_t>(-1)) {
    cfg.validate();
    if (row_hi == static_cast<std::size_t>(-1)) row_hi = panel.rows();
    std::vector<std::string> kept;
    for (const auto& s : scored) {
        const std::size_t xcol = panel.require(s.name);
        bool ok = true;
        for (const auto& k : kept) {
            auto [x, y] =
                detail::paired_complete(panel, xcol, panel.require(k), 0, row_lo, row_hi);
            if (std::abs(pearson(x, y)) > cfg.rho_max) {
                ok = false;
                break;
            }
        }
        if (ok) kept.push_back(s.name);
    }
    return kept;
}

// MI threshold then redundancy screen; the non-causal selection baseline.
inline std::vector<std::string> select_noncausal(const Panel& panel, const std::string& target,
                                                 const std::vector<std::string>& candidates,
                                                 const MiFilterConfig& cfg,
                                                 std::size_t row_lo = 0,
                                                 std::size_t row_hi =
                                                     static_cast<std::size_t>(-1)) {
    std::vector<MiScore> scored = mi_rank(panel, target, candidates, cfg, row_lo, row_hi);
    scored.erase(std::remove_if(scored.begin(), scored.end(),
                                [&](const MiScore& s) { return !(s.mi > cfg.mi_thres); }),
                 scored.end());
    return redundancy_screen(scored, panel, cfg, row_lo, row_hi);
}

inline nlohmann::json mi_selection_to_json(const std::string& target,
                                           const std::vector<MiScore>& scores,
                                           const std::vector<std::string>& kept,
                                           const MiFilterConfig& cfg) {
    nlohmann::json jscores = nlohmann::json::object();
    for (const auto& s : scores) jscores[s.name] = s.mi;
    return {{"method", "mi_filter"},
            {"target", target},
            {"kept", kept},
            {"scores", jscores},
            {"config",
             {{"mi_thres", cfg.mi_thres},
              {"rho_max", cfg.rho_max},
              {"knn_k", cfg.knn_k},
              {"lag_max", cfg.lag_max}}}};
}

} // namespace stlf
