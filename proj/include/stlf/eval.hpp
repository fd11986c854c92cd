#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "stlf/csv.hpp"
#include "stlf/error.hpp"
#include "stlf/forecast.hpp"
#include "stlf/gru.hpp"
#include "stlf/mifilter.hpp"
#include "stlf/panel.hpp"
#include "stlf/pcmci.hpp"
#include "stlf/rng.hpp"

namespace stlf {

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

inline double mae(const Eigen::VectorXd& pred, const Eigen::VectorXd& actual) {
    if (pred.size() != actual.size() || pred.size() == 0)
        throw DataError("mae: length mismatch or empty input");
    return (pred - actual).cwiseAbs().mean();
}

// Percent; entries with |actual| < eps are skipped. Returns NaN when nothing
// remains.
inline double mape(const Eigen::VectorXd& pred, const Eigen::VectorXd& actual,
                   double eps = 1e-6) {
    if (pred.size() != actual.size() || pred.size() == 0)
        throw DataError("mape: length mismatch or empty input");
    double sum = 0.0;
    Eigen::Index n = 0;
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
        if (std::abs(actual(i)) < eps) continue;
        sum += std::abs((pred(i) - actual(i)) / actual(i));
        ++n;
    }
    if (n == 0) return std::numeric_limits<double>::quiet_NaN();
    return 100.0 * sum / static_cast<double>(n);
}

// Relative error reduction (%) from the second-best score to the best.
inline double error_reduction_percent(double best, double second) {
    if (!(second > 0.0))
        throw NumericError("error_reduction_percent: second-best must be positive");
    return 100.0 * (second - best) / second;
}

// ---------------------------------------------------------------------------
// fold planning
// ---------------------------------------------------------------------------

struct FoldPlanParams {
    std::size_t train_span_hours = 2 * 8760;
    int fold_count = 6;
    double val_fraction = 0.10; // final slice of each training window
};

// Row-index ranges of one fold; train < validation < test, disjoint.
struct FoldRanges {
    std::size_t train_lo, train_hi;
    std::size_t val_lo, val_hi;
    std::size_t test_lo, test_hi;
};

struct FoldPlan {
    std::vector<FoldRanges> folds;
    std::size_t stride = 0; // test-block length
};

// Fold origins are equally spaced so the test blocks tile the span after the
// first training window; the validation slice is the final val_fraction of
// each training window.
inline FoldPlan plan_folds(std::size_t panel_rows, const FoldPlanParams& p) {
    if (p.fold_count < 1)
        throw DataError("plan_folds: fold count must be >= 1");
    if (!(p.val_fraction > 0.0 && p.val_fraction < 0.5))
        throw DataError("plan_folds: val fraction must lie in (0, 0.5)");
    const std::size_t w = p.train_span_hours;
    const std::size_t k = static_cast<std::size_t>(p.fold_count);
    if (panel_rows < w + k)
        throw DataError("plan_folds: need at least train_span + fold_count rows (" +
                        std::to_string(w + k) + "), got " + std::to_string(panel_rows));
    const std::size_t stride = (panel_rows - w) / k;

    FoldPlan plan;
    plan.stride = stride;
    const std::size_t val_len = std::max<std::size_t>(
        1, static_cast<std::size_t>(static_cast<double>(w) * p.val_fraction));
    for (std::size_t f = 0; f < k; ++f) {
        FoldRanges r;
        r.train_lo = f * stride;
        r.train_hi = r.train_lo + w - val_len;
        r.val_lo = r.train_hi;
        r.val_hi = r.train_lo + w;
        r.test_lo = r.val_hi;
        r.test_hi = r.test_lo + stride;
        if (r.test_hi > panel_rows)
            throw DataError("plan_folds: internal range overflow");
        plan.folds.push_back(r);
    }
    return plan;
}

// ---------------------------------------------------------------------------
// feature regimes
// ---------------------------------------------------------------------------

struct FeatureRegime {
    std::string name; // F0..F3
    std::vector<std::string> columns;
};

struct RegimeConfig {
    PcmciConfig pcmci;
    MiFilterConfig mi;
};

namespace detail {

inline bool column_constant(const Panel& p, std::size_t j, std::size_t lo, std::size_t hi) {
    bool seen = false;
    double v0 = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
        if (!p.is_observed(i, j)) continue;
        if (!seen) {
            v0 = p.value(i, j);
            seen = true;
        } else if (p.value(i, j) != v0) {
            return false;
        }
    }
    return true;
}

} // namespace detail

// F0 = target + calendar + premise count; F1 = F0 + all weather;
// F2 = F0 + MI-filtered weather; F3 = F0 + PCMCI-selected weather. Selection
// runs on [row_lo, row_hi) only. Nesting F0 <= F2,F3 <= F1 is asserted.
inline std::vector<FeatureRegime> resolve_regimes(const Panel& panel,
                                                  const std::string& target,
                                                  const std::vector<std::string>& wanted,
                                                  const RegimeConfig& cfg,
                                                  std::size_t row_lo = 0,
                                                  std::size_t row_hi =
                                                      static_cast<std::size_t>(-1),
                                                  LaggedGraph* graph_out = nullptr) {
    if (row_hi == static_cast<std::size_t>(-1)) row_hi = panel.rows();
    panel.require(target);

    std::vector<std::string> base;
    base.push_back(target);
    for (const auto& n : panel.names_of_kind(ColumnKind::calendar)) base.push_back(n);
    for (const auto& n : panel.names_of_kind(ColumnKind::premise)) base.push_back(n);
    const std::vector<std::string> weather = panel.names_of_kind(ColumnKind::weather);

    auto build = [&](const std::string& name,
                     const std::vector<std::string>& extra) -> FeatureRegime {
        FeatureRegime r;
        r.name = name;
        r.columns = base;
        for (const auto& w : weather)
            if (std::find(extra.begin(), extra.end(), w) != extra.end())
                r.columns.push_back(w); // keeps panel's weather order
        return r;
    };

    std::vector<FeatureRegime> out;
    for (const auto& name : wanted) {
        if (name == "F0") {
            out.push_back(build("F0", {}));
        } else if (name == "F1") {
            out.push_back(build("F1", weather));
        } else if (name == "F2") {
            const std::vector<std::string> kept =
                select_noncausal(panel, target, weather, cfg.mi, row_lo, row_hi);
            out.push_back(build("F2", kept));
        } else if (name == "F3") {
            // Discovery runs over target + weather + calendar; calendar
            // encodings act as conditioning variables only, and constant
            // columns (e.g. an all-zero holiday flag) are left out.
            std::vector<std::string> vars;
            std::set<std::string> calendar;
            vars.push_back(target);
            for (const auto& w : weather) vars.push_back(w);
            for (const auto& c : panel.names_of_kind(ColumnKind::calendar)) {
                if (detail::column_constant(panel, panel.require(c), row_lo, row_hi)) continue;
                vars.push_back(c);
                calendar.insert(c);
            }
            const Panel sub = panel.select_columns(vars);
            const std::size_t hi = std::min(row_hi, sub.rows());
            const LaggedGraph graph = run_pcmci(sub, cfg.pcmci, row_lo, hi);
            if (graph_out) *graph_out = graph;
            const std::set<std::string> causal = causal_feature_set(graph, target, calendar);
            out.push_back(build("F3", {causal.begin(), causal.end()}));
        } else {
            throw DataError("unknown feature regime '" + name + "'");
        }
    }

    // Regime nesting is structural; verify it anyway.
    const std::set<std::string> f1set(weather.begin(), weather.end());
    for (const auto& r : out)
        for (const auto& c : r.columns)
            if (std::find(base.begin(), base.end(), c) == base.end() && !f1set.count(c))
                throw NumericError("regime " + r.name + " escaped the F1 superset");
    return out;
}

// ---------------------------------------------------------------------------
// model factory
// ---------------------------------------------------------------------------

struct ModelConfig {
    GruConfig gru;
    TrainConfig train;
    double ridge_lambda = 1.0;
    int naive_period = 168;
};

inline std::unique_ptr<Forecaster> make_forecaster(const std::string& name,
                                                   const WindowConfig& wcfg,
                                                   const ModelConfig& mcfg,
                                                   std::uint64_t seed) {
    if (name == "naive") return std::make_unique<SeasonalNaive>(wcfg, mcfg.naive_period);
    if (name == "ridge") return std::make_unique<RidgeForecaster>(mcfg.ridge_lambda);
    if (name == "gru") {
        TrainConfig t = mcfg.train;
        t.seed = seed;
        return std::make_unique<GruForecaster>(mcfg.gru, t);
    }
    throw DataError("unknown model '" + name + "' (expected naive, ridge or gru)");
}

// ---------------------------------------------------------------------------
// regime comparison
// ---------------------------------------------------------------------------

struct EvalCell {
    std::string city, model, regime;
    int fold = 0;
    double mae_value = 0.0;
    double mape_value = 0.0;
    bool ok = false;
    std::string error;
};

struct CityMean {
    std::string city, model, regime;
    double mae_value = 0.0, mape_value = 0.0;
    int folds = 0;
};

struct TopCount {
    std::string model, regime;
    int top_mae = 0, top_mape = 0;
};

struct EvalReport {
    std::vector<std::string> cities, models, regimes;
    int fold_count = 0;
    std::uint64_t seed = 0;
    std::vector<EvalCell> cells;
    std::vector<CityMean> city_means;
    std::vector<TopCount> top_counts;
    nlohmann::json ood; // filled by evaluate_ood, null otherwise

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["cities"] = cities;
        j["models"] = models;
        j["regimes"] = regimes;
        j["fold_count"] = fold_count;
        j["seed"] = seed;
        nlohmann::json jc = nlohmann::json::array();
        for (const auto& c : cells) {
            nlohmann::json e = {{"city", c.city},     {"model", c.model},
                                {"regime", c.regime}, {"fold", c.fold},
                                {"status", c.ok ? "ok" : "error"}};
            if (c.ok) {
                e["mae"] = c.mae_value;
                e["mape"] = c.mape_value;
            } else {
                e["error"] = c.error;
            }
            jc.push_back(e);
        }
        j["cells"] = jc;
        nlohmann::json jm = nlohmann::json::array();
        for (const auto& m : city_means)
            jm.push_back({{"city", m.city},
                          {"model", m.model},
                          {"regime", m.regime},
                          {"mae", m.mae_value},
                          {"mape", m.mape_value},
                          {"folds", m.folds}});
        j["city_means"] = jm;
        nlohmann::json jt = nlohmann::json::array();
        for (const auto& t : top_counts)
            jt.push_back({{"model", t.model},
                          {"regime", t.regime},
                          {"top_mae", t.top_mae},
                          {"top_mape", t.top_mape}});
        j["top_counts"] = jt;
        j["ood"] = ood.is_null() ? nlohmann::json() : ood;
        return j;
    }

    void write_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out)
            throw DataError("cannot write " + path);
        write_csv_row(out, {"city", "model", "regime", "fold", "mae", "mape", "status"});
        for (const auto& c : cells)
            write_csv_row(out, {c.city, c.model, c.regime, std::to_string(c.fold),
                                c.ok ? format_double(c.mae_value) : "",
                                c.ok ? format_double(c.mape_value) : "",
                                c.ok ? "ok" : ("error: " + c.error)});
    }
};

struct EvalRequest {
    std::vector<std::string> models = {"naive", "ridge"};
    std::vector<std::string> regimes = {"F0", "F1", "F2", "F3"};
    FoldPlanParams folds;
    WindowConfig window; // features ignored; derived per regime
    RegimeConfig selection;
    ModelConfig model;
    std::uint64_t seed = 0;
    int workers = 1;
};

namespace detail {

struct FoldContext {
    ScalerParams scaler;
    Panel scaled;
    std::vector<FeatureRegime> regimes;
    std::map<std::string, std::string> regime_errors;

    FoldContext(ScalerParams sp, Panel p) : scaler(std::move(sp)), scaled(std::move(p)) {}
};

// Windows with horizons tiling [lo, hi): lookbacks may reach back before lo
// (history available at prediction time), so the window range starts
// lookback rows earlier.
inline std::vector<WindowSample> test_windows(const Panel& scaled, const WindowConfig& w,
                                              std::size_t lo, std::size_t hi) {
    const std::size_t from = lo >= static_cast<std::size_t>(w.lookback)
                                 ? lo - static_cast<std::size_t>(w.lookback)
                                 : 0;
    return make_windows(scaled, w, from, hi);
}

inline const FeatureRegime& find_regime(const std::vector<FeatureRegime>& rs,
                                        const std::string& name) {
    for (const auto& r : rs)
        if (r.name == name) return r;
    throw DataError("regime '" + name + "' not resolved");
}

inline const FeatureRegime& find_regime(const FoldContext& ctx, const std::string& name) {
    const auto it = ctx.regime_errors.find(name);
    if (it != ctx.regime_errors.end())
        throw DataError("selection failed for regime " + name + ": " + it->second);
    return find_regime(ctx.regimes, name);
}

} // namespace detail

// Cross of model x regime x fold x city. Scalers and selections are fitted
// per fold strictly inside the training range; metrics are reported in
// original units. Cells that fail to train are recorded and skipped in the
// aggregates. Deterministic for a given seed, independent of worker count.
inline EvalReport run_regime_comparison(const std::vector<Panel>& cities,
                                        const EvalRequest& req) {
    if (cities.empty())
        throw DataError("run_regime_comparison: no panels");
    EvalReport report;
    for (const auto& p : cities) report.cities.push_back(p.region());
    report.models = req.models;
    report.regimes = req.regimes;
    report.fold_count = req.folds.fold_count;
    report.seed = req.seed;

    // Per-city fold contexts (sequential; cheap next to model training).
    std::vector<FoldPlan> plans;
    std::vector<std::vector<detail::FoldContext>> contexts(cities.size());
    for (std::size_t ci = 0; ci < cities.size(); ++ci) {
        const Panel& panel = cities[ci];
        const FoldPlan plan = plan_folds(panel.rows(), req.folds);
        plans.push_back(plan);
        for (const auto& fr : plan.folds) {
            ScalerParams sp = fit_scaler(panel, fr.train_lo, fr.train_hi);
            Panel scaled = apply_scaler(panel, sp);
            detail::FoldContext ctx(std::move(sp), std::move(scaled));
            for (const auto& rg : req.regimes) {
                try {
                    std::vector<FeatureRegime> one =
                        resolve_regimes(panel, req.window.target, {rg}, req.selection,
                                        fr.train_lo, fr.train_hi);
                    ctx.regimes.push_back(std::move(one.front()));
                } catch (const std::exception& e) {
                    ctx.regime_errors[rg] = e.what();
                }
            }
            contexts[ci].push_back(std::move(ctx));
        }
    }

    struct Job {
        std::size_t city;
        int fold;
        std::string model, regime;
    };
    std::vector<Job> jobs;
    for (std::size_t ci = 0; ci < cities.size(); ++ci)
        for (int f = 0; f < req.folds.fold_count; ++f)
            for (const auto& rg : req.regimes)
                for (const auto& mdl : req.models)
                    jobs.push_back(Job{ci, f, mdl, rg});

    report.cells.resize(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t j = next.fetch_add(1);
            if (j >= jobs.size()) return;
            const Job& job = jobs[j];
            EvalCell cell;
            cell.city = cities[job.city].region();
            cell.model = job.model;
            cell.regime = job.regime;
            cell.fold = job.fold;
            try {
                const FoldRanges& fr = plans[job.city].folds[static_cast<std::size_t>(job.fold)];
                const detail::FoldContext& ctx =
                    contexts[job.city][static_cast<std::size_t>(job.fold)];
                const FeatureRegime& regime = detail::find_regime(ctx, job.regime);

                WindowConfig wcfg = req.window;
                wcfg.features = regime.columns;
                const std::vector<WindowSample> train =
                    make_windows(ctx.scaled, wcfg, fr.train_lo, fr.train_hi);
                const std::vector<WindowSample> val =
                    detail::test_windows(ctx.scaled, wcfg, fr.val_lo, fr.val_hi);
                const std::vector<WindowSample> test =
                    detail::test_windows(ctx.scaled, wcfg, fr.test_lo, fr.test_hi);
                if (test.empty())
                    throw DataError("no test windows in fold");

                const std::uint64_t cell_seed = derive_seed(
                    req.seed, cell.city + "/" + job.model + "/" + job.regime + "/fold" +
                                  std::to_string(job.fold));
                auto model = make_forecaster(job.model, wcfg, req.model, cell_seed);
                model->fit(train, val);

                const int tcol = ctx.scaler.find(req.window.target);
                const double mu = ctx.scaler.mean(tcol), sd = ctx.scaler.std(tcol);
                Eigen::VectorXd pred(static_cast<Eigen::Index>(test.size()) * wcfg.horizon);
                Eigen::VectorXd actual(pred.size());
                Eigen::Index at = 0;
                for (const auto& s : test) {
                    const Eigen::VectorXd y_hat = model->predict(s);
                    for (Eigen::Index h = 0; h < y_hat.size(); ++h, ++at) {
                        pred(at) = y_hat(h) * sd + mu;
                        actual(at) = s.y(h) * sd + mu;
                    }
                }
                cell.mae_value = mae(pred, actual);
                cell.mape_value = mape(pred, actual);
                cell.ok = true;
            } catch (const std::exception& e) {
                cell.ok = false;
                cell.error = e.what();
            }
            report.cells[j] = std::move(cell);
        }
    };

    const int n_workers = std::max(1, req.workers);
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    // Fold means per (city, model, regime).
    for (const auto& city : report.cities)
        for (const auto& mdl : req.models)
            for (const auto& rg : req.regimes) {
                CityMean m;
                m.city = city;
                m.model = mdl;
                m.regime = rg;
                for (const auto& c : report.cells)
                    if (c.ok && c.city == city && c.model == mdl && c.regime == rg) {
                        m.mae_value += c.mae_value;
                        m.mape_value += c.mape_value;
                        ++m.folds;
                    }
                if (m.folds > 0) {
                    m.mae_value /= m.folds;
                    m.mape_value /= m.folds;
                    report.city_means.push_back(m);
                }
            }

    // Per model: the number of cities where a regime attains the best score.
    // Ties award the earliest regime in the request order.
    for (const auto& mdl : req.models) {
        std::map<std::string, TopCount> counts;
        for (const auto& rg : req.regimes) counts[rg] = TopCount{mdl, rg, 0, 0};
        for (const auto& city : report.cities) {
            std::string best_mae, best_mape;
            double mae_best = std::numeric_limits<double>::infinity();
            double mape_best = std::numeric_limits<double>::infinity();
            for (const auto& rg : req.regimes)
                for (const auto& m : report.city_means)
                    if (m.city == city && m.model == mdl && m.regime == rg) {
                        if (m.mae_value < mae_best) {
                            mae_best = m.mae_value;
                            best_mae = rg;
                        }
                        if (m.mape_value < mape_best) {
                            mape_best = m.mape_value;
                            best_mape = rg;
                        }
                    }
            if (!best_mae.empty()) ++counts[best_mae].top_mae;
            if (!best_mape.empty()) ++counts[best_mape].top_mape;
        }
        for (const auto& rg : req.regimes) report.top_counts.push_back(counts[rg]);
    }
    return report;
}

// ---------------------------------------------------------------------------
// out-of-distribution weather windows
// ---------------------------------------------------------------------------

struct OodConfig {
    double q_low = 0.05;
    double q_high = 0.95;
    std::vector<std::string> flag_vars = {"t2m", "tp"};
    int window_hours = 24;
    double exceed_fraction = 0.5; // strictly more than this flags a window
    int min_separation_hours = 24;

    void validate() const {
        if (!(q_low > 0.0 && q_low < q_high && q_high < 1.0))
            throw DataError("OodConfig: need 0 < q_low < q_high < 1");
        if (flag_vars.empty())
            throw DataError("OodConfig: no flag variables");
        if (window_hours < 1 || min_separation_hours < 0)
            throw DataError("OodConfig: bad window geometry");
    }
};

struct OodWindow {
    std::size_t start_row = 0;
    std::int64_t start_hour = 0;
    std::int64_t end_hour = 0; // exclusive
    std::string trigger;       // flag variable with the most exceeding hours
    double exceed_frac = 0.0;
};

// Linear-interpolation quantile of the observed cells (the common "type 7"
// definition).
inline double quantile(std::vector<double> values, double q) {
    if (values.empty())
        throw NumericError("quantile of empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

// Thresholds come from training rows only; the held-out rows are scanned with
// stride 1 h and a window is flagged when more than exceed_fraction of its
// hours lie outside [q_low, q_high] on any flag variable. Flagged windows are
// accepted greedily left-to-right with at least min_separation_hours between
// accepted starts.
inline std::vector<OodWindow> detect_ood_windows(const Panel& panel, std::size_t train_end,
                                                 const OodConfig& cfg) {
    cfg.validate();
    if (train_end == 0 || train_end > panel.rows())
        throw DataError("detect_ood_windows: empty training range");
    std::vector<std::size_t> cols;
    for (const auto& v : cfg.flag_vars) cols.push_back(panel.require(v));

    std::vector<std::pair<double, double>> bounds;
    for (const std::size_t j : cols) {
        std::vector<double> train_vals;
        for (std::size_t i = 0; i < train_end; ++i)
            if (panel.is_observed(i, j)) train_vals.push_back(panel.value(i, j));
        if (train_vals.empty())
            throw DataError("detect_ood_windows: flag variable '" +
                            panel.names()[j] + "' has no observed training values");
        bounds.emplace_back(quantile(train_vals, cfg.q_low),
                            quantile(train_vals, cfg.q_high));
    }

    const std::size_t w = static_cast<std::size_t>(cfg.window_hours);
    std::vector<OodWindow> out;
    std::size_t next_allowed = train_end;
    if (panel.rows() < w) return out;
    for (std::size_t s = train_end; s + w <= panel.rows(); ++s) {
        if (s < next_allowed) continue;
        int exceed_any = 0;
        std::vector<int> exceed_per(cols.size(), 0);
        for (std::size_t t = s; t < s + w; ++t) {
            bool any = false;
            for (std::size_t v = 0; v < cols.size(); ++v) {
                if (!panel.is_observed(t, cols[v])) continue;
                const double x = panel.value(t, cols[v]);
                if (x < bounds[v].first || x > bounds[v].second) {
                    any = true;
                    ++exceed_per[v];
                }
            }
            if (any) ++exceed_any;
        }
        const double frac = static_cast<double>(exceed_any) / static_cast<double>(w);
        if (frac > cfg.exceed_fraction) {
            OodWindow win;
            win.start_row = s;
            win.start_hour = panel.timestamp(s);
            win.end_hour = win.start_hour + static_cast<std::int64_t>(w);
            std::size_t best = 0;
            for (std::size_t v = 1; v < cols.size(); ++v)
                if (exceed_per[v] > exceed_per[best]) best = v;
            win.trigger = cfg.flag_vars[best];
            win.exceed_frac = frac;
            out.push_back(win);
            next_allowed = s + static_cast<std::size_t>(cfg.min_separation_hours);
        }
    }
    return out;
}

inline void write_ood_windows_csv(const std::vector<OodWindow>& windows,
                                  const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write " + path);
    write_csv_row(out, {"start", "end", "trigger", "exceed_fraction"});
    for (const auto& w : windows)
        write_csv_row(out, {format_iso_hour(w.start_hour), format_iso_hour(w.end_hour),
                            w.trigger, format_double(w.exceed_frac)});
}

// Models are trained once on the full training window (train = first 90%,
// validation = final 10%) with a single selection pass, then evaluated on
// every detected OOD window whose lookback is available. Metrics are averaged
// across windows; best and second best are marked per metric with the
// relative error reduction.
inline nlohmann::json evaluate_ood(const Panel& panel, std::size_t train_end,
                                   const EvalRequest& req, const OodConfig& ood_cfg,
                                   std::vector<OodWindow>* windows_out = nullptr) {
    ood_cfg.validate();
    const std::vector<OodWindow> windows = detect_ood_windows(panel, train_end, ood_cfg);
    if (windows_out) *windows_out = windows;

    nlohmann::json j;
    j["city"] = panel.region();
    j["window_count"] = windows.size();
    nlohmann::json jw = nlohmann::json::array();
    for (const auto& w : windows)
        jw.push_back({{"start", format_iso_hour(w.start_hour)},
                      {"end", format_iso_hour(w.end_hour)},
                      {"trigger", w.trigger},
                      {"exceed_fraction", w.exceed_frac}});
    j["windows"] = jw;
    if (windows.empty()) {
        j["status"] = "no windows";
        j["results"] = nlohmann::json::array();
        return j;
    }
    j["status"] = "ok";

    if (static_cast<std::size_t>(ood_cfg.window_hours) !=
        static_cast<std::size_t>(req.window.horizon))
        throw DataError("evaluate_ood: forecast horizon must equal the OOD window length");

    const std::size_t val_len = std::max<std::size_t>(
        1, static_cast<std::size_t>(static_cast<double>(train_end) * req.folds.val_fraction));
    const std::size_t fit_hi = train_end - val_len;

    ScalerParams sp = fit_scaler(panel, 0, fit_hi);
    const Panel scaled = apply_scaler(panel, sp);
    const std::vector<FeatureRegime> regimes =
        resolve_regimes(panel, req.window.target, req.regimes, req.selection, 0, fit_hi);
    const int tcol = sp.find(req.window.target);
    const double mu = sp.mean(tcol), sd = sp.std(tcol);

    nlohmann::json results = nlohmann::json::array();
    struct Entry {
        std::string model, regime;
        double mae_v, mape_v;
    };
    std::vector<Entry> entries;
    for (const auto& mdl : req.models) {
        for (const auto& rg : req.regimes) {
            const FeatureRegime& regime = detail::find_regime(regimes, rg);
            WindowConfig wcfg = req.window;
            wcfg.features = regime.columns;
            nlohmann::json cell = {{"model", mdl}, {"regime", rg}};
            try {
                const std::vector<WindowSample> train = make_windows(scaled, wcfg, 0, fit_hi);
                const std::vector<WindowSample> val =
                    detail::test_windows(scaled, wcfg, fit_hi, train_end);
                const std::uint64_t cell_seed =
                    derive_seed(req.seed, panel.region() + "/" + mdl + "/" + rg + "/ood");
                auto model = make_forecaster(mdl, wcfg, req.model, cell_seed);
                model->fit(train, val);

                double mae_sum = 0.0, mape_sum = 0.0;
                int used = 0;
                for (const auto& w : windows) {
                    if (w.start_row < static_cast<std::size_t>(wcfg.lookback)) continue;
                    const std::size_t lo = w.start_row - static_cast<std::size_t>(wcfg.lookback);
                    const std::vector<WindowSample> ws =
                        make_windows(scaled, wcfg, lo, w.start_row + static_cast<std::size_t>(
                                                                         wcfg.horizon));
                    if (ws.empty()) continue; // masked cells inside the window
                    const Eigen::VectorXd y_hat_scaled = model->predict(ws.front());
                    Eigen::VectorXd pred(y_hat_scaled.size()), actual(y_hat_scaled.size());
                    for (Eigen::Index h = 0; h < y_hat_scaled.size(); ++h) {
                        pred(h) = y_hat_scaled(h) * sd + mu;
                        actual(h) = ws.front().y(h) * sd + mu;
                    }
                    mae_sum += mae(pred, actual);
                    mape_sum += mape(pred, actual);
                    ++used;
                }
                if (used == 0)
                    throw DataError("no usable OOD windows (lookback unavailable)");
                const Entry e{mdl, rg, mae_sum / used, mape_sum / used};
                entries.push_back(e);
                cell["mae"] = e.mae_v;
                cell["mape"] = e.mape_v;
                cell["windows_used"] = used;
                cell["status"] = "ok";
            } catch (const std::exception& ex) {
                cell["status"] = "error";
                cell["error"] = ex.what();
            }
            results.push_back(cell);
        }
    }
    j["results"] = results;

    auto rank = [&](auto metric) -> nlohmann::json {
        std::vector<Entry> sorted = entries;
        std::sort(sorted.begin(), sorted.end(),
                  [&](const Entry& a, const Entry& b) { return metric(a) < metric(b); });
        if (sorted.size() < 2) return nlohmann::json();
        return {{"best", {{"model", sorted[0].model}, {"regime", sorted[0].regime},
                          {"value", metric(sorted[0])}}},
                {"second", {{"model", sorted[1].model}, {"regime", sorted[1].regime},
                            {"value", metric(sorted[1])}}},
                {"error_reduction_percent",
                 error_reduction_percent(metric(sorted[0]), metric(sorted[1]))}};
    };
    if (entries.size() >= 2) {
        j["ranking"] = {{"mae", rank([](const Entry& e) { return e.mae_v; })},
                        {"mape", rank([](const Entry& e) { return e.mape_v; })}};
    }
    return j;
}

} // namespace stlf
