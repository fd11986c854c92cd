#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "stlf/assoc.hpp"
#include "stlf/error.hpp"
#include "stlf/panel.hpp"

namespace stlf {

struct PcmciConfig {
    int tau_max = 5;
    int tau_min = 1;
    double pc_alpha = 0.05;
    double mci_alpha = 0.05;
    int max_cond_dim = -1;     // < 0: unlimited
    bool bh_correction = false; // Benjamini-Hochberg on MCI p-values

    void validate() const {
        if (tau_min < 1 || tau_min > tau_max)
            throw DataError("PcmciConfig: need 1 <= tau_min <= tau_max");
        if (!(pc_alpha > 0.0 && pc_alpha < 1.0) || !(mci_alpha > 0.0 && mci_alpha < 1.0))
            throw DataError("PcmciConfig: alphas must lie in (0, 1)");
    }
};

struct LaggedLink {
    std::string source;
    int lag;
    std::string target;
    double statistic;
    double p_value;
};

// A lagged variable reference: column index at lag tau.
struct LagVar {
    int var;
    int lag;
    auto operator<=>(const LagVar&) const = default;
};

// Candidate parent with the statistic/p-value of its most recent test.
struct CandidateParent {
    LagVar ref;
    double statistic = 0.0;
    double p_value = 1.0;
};

using ParentSets = std::vector<std::vector<CandidateParent>>; // per target variable

struct LaggedGraph {
    std::vector<std::string> variables;
    int tau_max = 5;
    int tau_min = 1;
    std::vector<LaggedLink> links; // sorted by (source, lag, target)

    std::vector<std::pair<std::string, int>> parents_of(const std::string& target) const {
        std::vector<std::pair<std::string, int>> out;
        for (const auto& l : links)
            if (l.target == target) out.emplace_back(l.source, l.lag);
        return out;
    }

    void sort_links() {
        std::sort(links.begin(), links.end(), [](const LaggedLink& a, const LaggedLink& b) {
            return std::tie(a.source, a.lag, a.target) < std::tie(b.source, b.lag, b.target);
        });
    }

    nlohmann::json to_json() const {
        nlohmann::json jl = nlohmann::json::array();
        for (const auto& l : links)
            jl.push_back({{"src", l.source},
                          {"lag", l.lag},
                          {"dst", l.target},
                          {"stat", l.statistic},
                          {"pval", l.p_value}});
        return {{"variables", variables}, {"tau_max", tau_max}, {"links", jl}};
    }

    static LaggedGraph from_json(const nlohmann::json& j) {
        LaggedGraph g;
        g.variables = j.at("variables").get<std::vector<std::string>>();
        g.tau_max = j.at("tau_max").get<int>();
        for (const auto& l : j.at("links"))
            g.links.push_back(LaggedLink{l.at("src").get<std::string>(), l.at("lag").get<int>(),
                                         l.at("dst").get<std::string>(),
                                         l.at("stat").get<double>(),
                                         l.at("pval").get<double>()});
        g.sort_links();
        return g;
    }
};

namespace detail {

// Lagged-regression workspace over one panel range. Valid sample rows are
// those where every variable is observed at every lag in [0, 2*tau_max]; the
// uniform cut-off keeps the sample set identical for every test of both
// phases, including MCI conditions shifted up to 2*tau_max.
class LaggedDesign {
public:
    LaggedDesign(const Panel& panel, const PcmciConfig& cfg, std::size_t row_lo,
                 std::size_t row_hi)
        : data_(panel.data()) {
        cfg.validate();
        max_lag_ = 2 * cfg.tau_max;
        if (row_hi > panel.rows() || row_lo >= row_hi)
            throw DataError("pcmci: empty or out-of-range analysis window");
        for (std::size_t t = row_lo + static_cast<std::size_t>(max_lag_); t < row_hi; ++t) {
            bool ok = true;
            for (int lag = 0; lag <= max_lag_ && ok; ++lag)
                for (std::size_t j = 0; j < panel.cols(); ++j)
                    if (!panel.is_observed(t - static_cast<std::size_t>(lag), j)) {
                        ok = false;
                        break;
                    }
            if (ok) rows_.push_back(t);
        }
        if (rows_.size() < 50)
            throw NumericError("pcmci: fewer than 50 effective samples (" +
                               std::to_string(rows_.size()) + ")");
        for (std::size_t j = 0; j < panel.cols(); ++j) {
            bool constant = true;
            const double v0 = data_(static_cast<Eigen::Index>(rows_.front()),
                                    static_cast<Eigen::Index>(j));
            for (const std::size_t t : rows_)
                if (data_(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) != v0) {
                    constant = false;
                    break;
                }
            if (constant)
                throw NumericError("pcmci: variable '" + panel.names()[j] +
                                   "' is constant on the analysis range");
        }
    }

    std::size_t n() const { return rows_.size(); }

    Eigen::VectorXd column(const LagVar& v) const {
        Eigen::VectorXd out(static_cast<Eigen::Index>(rows_.size()));
        for (std::size_t i = 0; i < rows_.size(); ++i)
            out(static_cast<Eigen::Index>(i)) =
                data_(static_cast<Eigen::Index>(rows_[i] - static_cast<std::size_t>(v.lag)),
                      static_cast<Eigen::Index>(v.var));
        return out;
    }

    Eigen::MatrixXd columns(const std::vector<LagVar>& vs) const {
        Eigen::MatrixXd out(static_cast<Eigen::Index>(rows_.size()),
                            static_cast<Eigen::Index>(vs.size()));
        for (std::size_t c = 0; c < vs.size(); ++c)
            out.col(static_cast<Eigen::Index>(c)) = column(vs[c]);
        return out;
    }

    // Conditional-independence test of (source at lag) against (target at
    // lag 0) given realized conditioning columns. Collinear or deterministic
    // conditions are tolerated: dependent columns are dropped and a fully
    // explained variable reports independence.
    CiResult test(const LagVar& src, int target, const std::vector<LagVar>& conds) const {
        const Eigen::VectorXd x = column(src);
        const Eigen::VectorXd y = column(LagVar{target, 0});
        const Eigen::MatrixXd z = columns(conds);
        ParcorrOptions opts;
        opts.tolerant = true;
        return parcorr_impl(x, y, z, opts);
    }

private:
    const Eigen::MatrixXd& data_;
    std::vector<std::size_t> rows_;
    int max_lag_;
};

inline bool stronger(const CandidateParent& a, const CandidateParent& b,
                     const std::vector<std::string>& names) {
    const double sa = std::abs(a.statistic), sb = std::abs(b.statistic);
    if (sa != sb) return sa > sb;
    return std::tie(names[static_cast<std::size_t>(a.ref.var)], a.ref.lag) <
           std::tie(names[static_cast<std::size_t>(b.ref.var)], b.ref.lag);
}

} // namespace detail

// Phase 1: iterative condition selection. Every lagged variable starts as a
// candidate parent of every target; at conditioning dimension q each
// candidate is tested against the target given the q strongest other
// candidates (ranked by the previous sweep), and failing candidates are
// removed at the end of the sweep. Sweeps continue with growing q until the
// conditioning dimension is exhausted, so every surviving candidate has been
// tested against the deepest condition set its rivals can supply.
inline ParentSets pc1_condition_selection(const Panel& panel, const PcmciConfig& cfg,
                                          std::size_t row_lo = 0,
                                          std::size_t row_hi = static_cast<std::size_t>(-1)) {
    cfg.validate();
    if (row_hi == static_cast<std::size_t>(-1)) row_hi = panel.rows();
    const detail::LaggedDesign design(panel, cfg, row_lo, row_hi);
    const int nvar = static_cast<int>(panel.cols());

    ParentSets result(panel.cols());
    for (int target = 0; target < nvar; ++target) {
        std::vector<CandidateParent> cands;
        for (int v = 0; v < nvar; ++v)
            for (int lag = cfg.tau_min; lag <= cfg.tau_max; ++lag)
                cands.push_back(CandidateParent{LagVar{v, lag}});

        const int q_cap = cfg.max_cond_dim >= 0 ? cfg.max_cond_dim
                                                : static_cast<int>(cands.size());
        for (int q = 0; q <= q_cap; ++q) {
            if (static_cast<int>(cands.size()) - 1 < q) break;
            std::sort(cands.begin(), cands.end(),
                      [&](const CandidateParent& a, const CandidateParent& b) {
                          return detail::stronger(a, b, panel.names());
                      });
            std::vector<bool> keep(cands.size(), true);
            for (std::size_t ci = 0; ci < cands.size(); ++ci) {
                std::vector<LagVar> conds;
                for (std::size_t cj = 0; cj < cands.size() && static_cast<int>(conds.size()) < q;
                     ++cj)
                    if (cj != ci) conds.push_back(cands[cj].ref);
                const CiResult res = design.test(cands[ci].ref, target, conds);
                cands[ci].statistic = res.statistic;
                cands[ci].p_value = res.p_value;
                if (res.p_value > cfg.pc_alpha) keep[ci] = false;
            }
            std::vector<CandidateParent> next;
            for (std::size_t ci = 0; ci < cands.size(); ++ci)
                if (keep[ci]) next.push_back(cands[ci]);
            cands.swap(next);
            if (cands.empty()) break;
        }
        std::sort(cands.begin(), cands.end(),
                  [&](const CandidateParent& a, const CandidateParent& b) {
                      return detail::stronger(a, b, panel.names());
                  });
        result[static_cast<std::size_t>(target)] = std::move(cands);
    }
    return result;
}

namespace detail {

// Realized conditioning set for the MCI test of (src, tau) -> target:
// parents of the target (minus the tested link) at their own lags, plus
// parents of the source shifted by tau. Duplicates collapse; the cap keeps
// only the strongest entries of each side.
inline std::vector<LagVar> mci_conditions(const LagVar& link, int target,
                                          const ParentSets& parents, int max_cond_dim) {
    std::set<LagVar> conds;
    int taken = 0;
    for (const auto& p : parents[static_cast<std::size_t>(target)]) {
        if (p.ref == link) continue;
        if (max_cond_dim >= 0 && taken >= max_cond_dim) break;
        conds.insert(p.ref);
        ++taken;
    }
    taken = 0;
    for (const auto& p : parents[static_cast<std::size_t>(link.var)]) {
        if (max_cond_dim >= 0 && taken >= max_cond_dim) break;
        const LagVar shifted{p.ref.var, p.ref.lag + link.lag};
        if (shifted != link) conds.insert(shifted);
        ++taken;
    }
    return {conds.begin(), conds.end()};
}

} // namespace detail

// Phase 2 single test: dependence of target on (source, lag) given the
// candidate parents of both endpoints.
inline CiResult mci_test(const Panel& panel, const LagVar& source, int target,
                         const ParentSets& parents, const PcmciConfig& cfg,
                         std::size_t row_lo = 0,
                         std::size_t row_hi = static_cast<std::size_t>(-1)) {
    cfg.validate();
    if (row_hi == static_cast<std::size_t>(-1)) row_hi = panel.rows();
    const detail::LaggedDesign design(panel, cfg, row_lo, row_hi);
    const std::vector<LagVar> conds =
        detail::mci_conditions(source, target, parents, cfg.max_cond_dim);
    return design.test(source, target, conds);
}

// Full two-phase discovery. The result contains exactly the PC-phase
// candidates that survive their MCI test at mci_alpha; phase 2 never adds
// links.
inline LaggedGraph run_pcmci(const Panel& panel, const PcmciConfig& cfg,
                             std::size_t row_lo = 0,
                             std::size_t row_hi = static_cast<std::size_t>(-1)) {
    cfg.validate();
    if (row_hi == static_cast<std::size_t>(-1)) row_hi = panel.rows();
    const ParentSets parents = pc1_condition_selection(panel, cfg, row_lo, row_hi);
    const detail::LaggedDesign design(panel, cfg, row_lo, row_hi);

    struct Tested {
        LaggedLink link;
        double p;
    };
    std::vector<Tested> tested;
    for (int target = 0; target < static_cast<int>(panel.cols()); ++target) {
        for (const auto& cand : parents[static_cast<std::size_t>(target)]) {
            const std::vector<LagVar> conds =
                detail::mci_conditions(cand.ref, target, parents, cfg.max_cond_dim);
            const CiResult res = design.test(cand.ref, target, conds);
            tested.push_back(
                Tested{LaggedLink{panel.names()[static_cast<std::size_t>(cand.ref.var)],
                                  cand.ref.lag, panel.names()[static_cast<std::size_t>(target)],
                                  res.statistic, res.p_value},
                       res.p_value});
        }
    }

    std::vector<bool> keep(tested.size(), false);
    if (cfg.bh_correction && !tested.empty()) {
        std::vector<std::size_t> order(tested.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return tested[a].p < tested[b].p; });
        const double m = static_cast<double>(tested.size());
        std::size_t cutoff = 0; // number of smallest p-values accepted
        for (std::size_t r = 0; r < order.size(); ++r)
            if (tested[order[r]].p <= (static_cast<double>(r + 1) / m) * cfg.mci_alpha)
                cutoff = r + 1;
        for (std::size_t r = 0; r < cutoff; ++r) keep[order[r]] = true;
    } else {
        for (std::size_t i = 0; i < tested.size(); ++i)
            keep[i] = tested[i].p <= cfg.mci_alpha;
    }

    LaggedGraph graph;
    graph.variables = panel.names();
    graph.tau_max = cfg.tau_max;
    graph.tau_min = cfg.tau_min;
    for (std::size_t i = 0; i < tested.size(); ++i)
        if (keep[i]) graph.links.push_back(tested[i].link);
    graph.sort_links();
    return graph;
}

// Exogenous causal feature set: source variables with at least one link into
// the target. The target's own autoregressive lags are reported separately
// via causal_ar_lags, and any name in `exclude` (e.g. calendar encodings,
// which are always kept by the downstream feature regimes) is dropped.
inline std::set<std::string> causal_feature_set(const LaggedGraph& graph,
                                                const std::string& target,
                                                const std::set<std::string>& exclude = {}) {
    if (std::find(graph.variables.begin(), graph.variables.end(), target) ==
        graph.variables.end())
        throw DataError("causal_feature_set: unknown target '" + target + "'");
    std::set<std::string> out;
    for (const auto& l : graph.links)
        if (l.target == target && l.source != target && !exclude.count(l.source))
            out.insert(l.source);
    return out;
}

inline std::vector<int> causal_ar_lags(const LaggedGraph& graph, const std::string& target) {
    std::vector<int> lags;
    for (const auto& l : graph.links)
        if (l.target == target && l.source == target) lags.push_back(l.lag);
    std::sort(lags.begin(), lags.end());
    return lags;
}

// Majority-vote merge of per-panel graphs: a link survives when it appears
// in more than half of the inputs; statistic and p-value are averaged over
// the graphs that contain it.
inline LaggedGraph consensus_graph(const std::vector<LaggedGraph>& graphs) {
    if (graphs.empty())
        throw DataError("consensus_graph: no graphs");
    for (const auto& g : graphs)
        if (g.variables != graphs.front().variables)
            throw DataError("consensus_graph: graphs disagree on variables");
    std::map<std::tuple<std::string, int, std::string>, std::vector<const LaggedLink*>> votes;
    for (const auto& g : graphs)
        for (const auto& l : g.links) votes[{l.source, l.lag, l.target}].push_back(&l);

    LaggedGraph out;
    out.variables = graphs.front().variables;
    out.tau_max = graphs.front().tau_max;
    out.tau_min = graphs.front().tau_min;
    const std::size_t need = graphs.size() / 2 + 1;
    for (const auto& [key, ls] : votes) {
        if (ls.size() < need) continue;
        double stat = 0.0, p = 0.0;
        for (const auto* l : ls) {
            stat += l->statistic;
            p += l->p_value;
        }
        out.links.push_back(LaggedLink{std::get<0>(key), std::get<1>(key), std::get<2>(key),
                                       stat / static_cast<double>(ls.size()),
                                       p / static_cast<double>(ls.size())});
    }
    out.sort_links();
    return out;
}

} // namespace stlf
