#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stlf/error.hpp"
#include "stlf/panel.hpp"
#include "stlf/rng.hpp"

namespace stlf {

struct ScmLink {
    std::string source;
    int lag; // >= 1
    std::string target;
    double coeff;
};

struct ScmSeasonal {
    double amplitude = 0.0;
    double period_hours = 24.0;
};

// Linear lagged structural causal model with Gaussian noise and optional
// deterministic sinusoidal forcing per variable. Construction checks
// stationarity (companion-matrix spectral radius < 1), so simulate() cannot
// diverge.
class ScmSpec {
public:
    ScmSpec(std::vector<std::string> variables, std::vector<ScmLink> links,
            std::map<std::string, double> noise_std,
            std::map<std::string, ScmSeasonal> seasonal = {}, int burn_in = 200)
        : variables_(std::move(variables)), links_(std::move(links)), burn_in_(burn_in) {
        if (variables_.empty())
            throw DataError("ScmSpec: no variables");
        if (burn_in_ < 0)
            throw DataError("ScmSpec: negative burn-in");
        std::set<std::string> names(variables_.begin(), variables_.end());
        if (names.size() != variables_.size())
            throw DataError("ScmSpec: duplicate variable names");

        std::set<std::tuple<std::string, int, std::string>> seen;
        for (const auto& l : links_) {
            if (l.lag < 1)
                throw DataError("ScmSpec: link " + l.source + "->" + l.target +
                                " has lag < 1; contemporaneous edges are not allowed");
            if (!names.count(l.source) || !names.count(l.target))
                throw DataError("ScmSpec: link references unknown variable");
            if (!seen.insert({l.source, l.lag, l.target}).second)
                throw DataError("ScmSpec: duplicate link " + l.source + " lag " +
                                std::to_string(l.lag) + " -> " + l.target);
        }

        noise_std_.assign(variables_.size(), 1.0);
        for (const auto& [name, sd] : noise_std) {
            if (!names.count(name))
                throw DataError("ScmSpec: noise std for unknown variable '" + name + "'");
            if (!(sd > 0.0))
                throw DataError("ScmSpec: noise std must be positive for '" + name + "'");
            noise_std_[index(name)] = sd;
        }
        seasonal_.assign(variables_.size(), ScmSeasonal{});
        for (const auto& [name, s] : seasonal) {
            if (!names.count(name))
                throw DataError("ScmSpec: seasonal term for unknown variable '" + name + "'");
            if (!(s.period_hours > 0.0))
                throw DataError("ScmSpec: seasonal period must be positive");
            seasonal_[index(name)] = s;
        }

        const double rho = spectral_radius();
        if (!(rho < 1.0))
            throw NumericError("ScmSpec is non-stationary: companion spectral radius " +
                               std::to_string(rho));
    }

    const std::vector<std::string>& variables() const { return variables_; }
    const std::vector<ScmLink>& links() const { return links_; }
    int burn_in() const { return burn_in_; }
    double noise_std(const std::string& name) const { return noise_std_[index(name)]; }

    std::size_t index(const std::string& name) const {
        for (std::size_t i = 0; i < variables_.size(); ++i)
            if (variables_[i] == name) return i;
        throw DataError("ScmSpec: unknown variable '" + name + "'");
    }

    int max_lag() const {
        int p = 1;
        for (const auto& l : links_) p = std::max(p, l.lag);
        return p;
    }

    double spectral_radius() const {
        const auto nv = static_cast<Eigen::Index>(variables_.size());
        const int p = max_lag();
        const Eigen::Index dim = nv * p;
        Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(dim, dim);
        for (const auto& l : links_) {
            const auto r = static_cast<Eigen::Index>(index(l.target));
            const auto c = static_cast<Eigen::Index>(index(l.source)) + nv * (l.lag - 1);
            comp(r, c) += l.coeff;
        }
        for (Eigen::Index i = 0; i < nv * (p - 1); ++i) comp(nv + i, i) = 1.0;
        if (links_.empty()) return 0.0;
        Eigen::EigenSolver<Eigen::MatrixXd> es(comp, /*computeEigenvectors=*/false);
        return es.eigenvalues().cwiseAbs().maxCoeff();
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["variables"] = variables_;
        nlohmann::json jl = nlohmann::json::array();
        for (const auto& l : links_)
            jl.push_back({{"source", l.source},
                          {"lag", l.lag},
                          {"target", l.target},
                          {"coeff", l.coeff}});
        j["links"] = jl;
        nlohmann::json jn;
        for (std::size_t i = 0; i < variables_.size(); ++i) jn[variables_[i]] = noise_std_[i];
        j["noise_std"] = jn;
        nlohmann::json js = nlohmann::json::object();
        for (std::size_t i = 0; i < variables_.size(); ++i)
            if (seasonal_[i].amplitude != 0.0)
                js[variables_[i]] = {{"amplitude", seasonal_[i].amplitude},
                                     {"period_hours", seasonal_[i].period_hours}};
        j["seasonal"] = js;
        j["burn_in"] = burn_in_;
        return j;
    }

    static ScmSpec from_json(const nlohmann::json& j) {
        std::vector<std::string> vars = j.at("variables").get<std::vector<std::string>>();
        std::vector<ScmLink> links;
        for (const auto& l : j.at("links"))
            links.push_back(ScmLink{l.at("source").get<std::string>(), l.at("lag").get<int>(),
                                    l.at("target").get<std::string>(),
                                    l.at("coeff").get<double>()});
        std::map<std::string, double> noise;
        if (j.contains("noise_std"))
            for (auto it = j["noise_std"].begin(); it != j["noise_std"].end(); ++it)
                noise[it.key()] = it.value().get<double>();
        std::map<std::string, ScmSeasonal> seasonal;
        if (j.contains("seasonal"))
            for (auto it = j["seasonal"].begin(); it != j["seasonal"].end(); ++it)
                seasonal[it.key()] =
                    ScmSeasonal{it.value().at("amplitude").get<double>(),
                                it.value().at("period_hours").get<double>()};
        const int burn = j.value("burn_in", 200);
        return ScmSpec(std::move(vars), std::move(links), std::move(noise),
                       std::move(seasonal), burn);
    }

    const std::vector<ScmSeasonal>& seasonal() const { return seasonal_; }

private:
    std::vector<std::string> variables_;
    std::vector<ScmLink> links_;
    std::vector<double> noise_std_;
    std::vector<ScmSeasonal> seasonal_;
    int burn_in_;
};

// Gaussian-noise linear recursion; burn-in rows are discarded and the
// seasonal phase is anchored so that output row 0 has phase 0. Deterministic
// given the seed.
inline Panel simulate(const ScmSpec& spec, std::size_t T, std::uint64_t seed) {
    if (T == 0)
        throw DataError("simulate: T must be positive");
    const std::size_t nv = spec.variables().size();
    const std::size_t total = static_cast<std::size_t>(spec.burn_in()) + T;
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(total),
                                              static_cast<Eigen::Index>(nv));

    struct Edge {
        Eigen::Index src;
        int lag;
        double coeff;
    };
    std::vector<std::vector<Edge>> into(nv);
    for (const auto& l : spec.links())
        into[spec.index(l.target)].push_back(
            Edge{static_cast<Eigen::Index>(spec.index(l.source)), l.lag, l.coeff});

    constexpr double two_pi = 6.283185307179586476925286766559;
    Rng rng(derive_seed(seed, "scm-noise"));
    for (std::size_t t = 0; t < total; ++t) {
        const auto ti = static_cast<Eigen::Index>(t);
        for (std::size_t v = 0; v < nv; ++v) {
            double val = 0.0;
            for (const auto& e : into[v])
                if (static_cast<int>(t) >= e.lag) val += e.coeff * x(ti - e.lag, e.src);
            const ScmSeasonal& s = spec.seasonal()[v];
            if (s.amplitude != 0.0) {
                const double phase = static_cast<double>(static_cast<std::int64_t>(t) -
                                                         spec.burn_in());
                val += s.amplitude * std::sin(two_pi * phase / s.period_hours);
            }
            val += spec.noise_std(spec.variables()[v]) * rng.normal();
            x(ti, static_cast<Eigen::Index>(v)) = val;
        }
    }

    Eigen::MatrixXd out = x.bottomRows(static_cast<Eigen::Index>(T));
    BoolArray obs(out.rows(), out.cols());
    obs.setConstant(true);
    std::vector<ColumnKind> kinds;
    for (const auto& name : spec.variables())
        kinds.push_back(name == "load" ? ColumnKind::load : ColumnKind::weather);
    return Panel("synthetic", hours_from_civil(2018, 1, 1, 0), std::move(out), std::move(obs),
                 spec.variables(), std::move(kinds));
}

inline std::vector<ScmLink> true_links(const ScmSpec& spec) { return spec.links(); }

// Exogenous direct parents: sources with any link into the target, the
// target's own lags excluded.
inline std::set<std::string> true_parents(const ScmSpec& spec, const std::string& target) {
    spec.index(target); // validates the name
    std::set<std::string> out;
    for (const auto& l : spec.links())
        if (l.target == target && l.source != target) out.insert(l.source);
    return out;
}

// Sources with a directed path into the target but no direct link: their
// whole influence is mediated.
inline std::set<std::string> mediated_sources(const ScmSpec& spec, const std::string& target) {
    const std::set<std::string> direct = true_parents(spec, target);
    std::set<std::string> reach = direct;
    reach.insert(target);
    bool grew = true;
    while (grew) {
        grew = false;
        for (const auto& l : spec.links())
            if (reach.count(l.target) && l.source != l.target && !reach.count(l.source)) {
                reach.insert(l.source);
                grew = true;
            }
    }
    std::set<std::string> out;
    for (const auto& v : reach)
        if (v != target && !direct.count(v)) out.insert(v);
    return out;
}

struct ScmFixture {
    ScmSpec spec;
    Panel panel;
};

// Named, versioned synthetic fixtures used by the oracle suites.
//   chain3       - w -> v -> load, AR everywhere
//   mediation8   - 8 weather-like covariates; load has exactly two exogenous
//                  direct parents (temp_air, precip); radiation/cloud/moisture
//                  influence load only through them; temp_surface and
//                  humidity are correlated non-parents
//   independent6 - 6 white-noise series, no links at all
inline ScmFixture standard_fixture(const std::string& name, std::uint64_t seed,
                                   std::size_t T = 2000) {
    if (name == "chain3") {
        ScmSpec spec({"w", "v", "load"},
                     {
                         {"w", 1, "w", 0.7},
                         {"v", 1, "v", 0.5},
                         {"w", 1, "v", 0.6},
                         {"load", 1, "load", 0.5},
                         {"v", 1, "load", 0.6},
                     },
                     {{"w", 1.0}, {"v", 1.0}, {"load", 1.0}});
        Panel p = simulate(spec, T, seed);
        return ScmFixture{std::move(spec), std::move(p)};
    }
    if (name == "mediation8") {
        // Persistent upstream drivers (cloud, moisture) push their influence
        // through radiation and precipitation chains; only temp_air and
        // precip touch load directly. temp_surface and humidity are
        // downstream correlates with no path into load.
        ScmSpec spec(
            {"cloud", "moisture", "rad_long", "rad_short", "temp_air", "temp_surface",
             "humidity", "precip", "load"},
            {
                {"cloud", 1, "cloud", 0.85},
                {"moisture", 1, "moisture", 0.85},
                {"rad_long", 1, "rad_long", 0.35},
                {"cloud", 1, "rad_long", 0.6},
                {"moisture", 1, "rad_long", 0.35},
                {"rad_short", 1, "rad_short", 0.35},
                {"cloud", 1, "rad_short", -0.7},
                {"temp_air", 1, "temp_air", 0.5},
                {"rad_short", 1, "temp_air", 0.65},
                {"temp_surface", 1, "temp_surface", 0.5},
                {"temp_air", 1, "temp_surface", 0.6},
                {"humidity", 1, "humidity", 0.5},
                {"temp_air", 1, "humidity", 0.4},
                {"moisture", 1, "humidity", 0.4},
                {"precip", 1, "precip", 0.35},
                {"moisture", 1, "precip", 0.7},
                {"load", 1, "load", 0.6},
                {"temp_air", 1, "load", 0.65},
                {"precip", 1, "load", 0.45},
            },
            {{"cloud", 1.0},
             {"moisture", 1.0},
             {"rad_long", 0.7},
             {"rad_short", 0.7},
             {"temp_air", 0.8},
             {"temp_surface", 0.7},
             {"humidity", 0.9},
             {"precip", 0.7},
             {"load", 0.9}});
        Panel p = simulate(spec, T, seed);
        return ScmFixture{std::move(spec), std::move(p)};
    }
    if (name == "independent6") {
        ScmSpec spec({"x0", "x1", "x2", "x3", "x4", "x5"}, {},
                     {{"x0", 1.0},
                      {"x1", 1.0},
                      {"x2", 1.0},
                      {"x3", 1.0},
                      {"x4", 1.0},
                      {"x5", 1.0}});
        Panel p = simulate(spec, T, seed);
        return ScmFixture{std::move(spec), std::move(p)};
    }
    throw DataError("unknown fixture '" + name +
                    "' (expected chain3, mediation8 or independent6)");
}

} // namespace stlf
