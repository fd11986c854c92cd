#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stlf/eval.hpp"

namespace stlf {

// Every tunable of the pipeline in one struct, parseable from a flat
// `key = value` file so a run is reproducible from a single artifact.
// Defaults follow the reference experiment setup.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string target = "load";
    WindowConfig window;     // lookback 168, horizon 24
    PcmciConfig pcmci;       // tau_max 5, alphas 0.05
    MiFilterConfig mi;       // threshold 0.025, rho 0.8, k 3
    TrainConfig train;       // lr 1e-4, batch 64, epochs 500, patience 20
    GruConfig gru;           // hidden 64, 4 layers
    double ridge_lambda = 1.0;
    int naive_period = 168;
    FoldPlanParams folds;    // 2-year windows, 6 folds
    OodConfig ood;           // 5th/95th on t2m,tp; 24 h windows

    static std::vector<std::string> split_list(const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto b = item.find_first_not_of(" \t");
            const auto e = item.find_last_not_of(" \t");
            if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
        }
        return out;
    }

    void set(const std::string& key, const std::string& value) {
        auto as_int = [&] { return std::stoi(value); };
        auto as_u64 = [&] { return static_cast<std::uint64_t>(std::stoull(value)); };
        auto as_double = [&] { return std::stod(value); };
        auto as_size = [&] { return static_cast<std::size_t>(std::stoull(value)); };

        try {
            if (key == "seed") seed = as_u64();
            else if (key == "target") target = value;
            else if (key == "window.lookback") window.lookback = as_int();
            else if (key == "window.horizon") window.horizon = as_int();
            else if (key == "pcmci.tau_max") pcmci.tau_max = as_int();
            else if (key == "pcmci.tau_min") pcmci.tau_min = as_int();
            else if (key == "pcmci.pc_alpha") pcmci.pc_alpha = as_double();
            else if (key == "pcmci.mci_alpha") pcmci.mci_alpha = as_double();
            else if (key == "pcmci.max_cond_dim") pcmci.max_cond_dim = as_int();
            else if (key == "pcmci.bh_correction") pcmci.bh_correction = value == "true" || value == "1";
            else if (key == "mi.threshold") mi.mi_thres = as_double();
            else if (key == "mi.rho_max") mi.rho_max = as_double();
            else if (key == "mi.knn_k") mi.knn_k = as_int();
            else if (key == "mi.lag_max") mi.lag_max = as_int();
            else if (key == "train.learning_rate") train.learning_rate = as_double();
            else if (key == "train.beta1") train.beta1 = as_double();
            else if (key == "train.beta2") train.beta2 = as_double();
            else if (key == "train.batch_size") train.batch_size = as_int();
            else if (key == "train.max_epochs") train.max_epochs = as_int();
            else if (key == "train.patience") train.patience = as_int();
            else if (key == "train.min_delta") train.min_delta = as_double();
            else if (key == "train.dropout") train.dropout = as_double();
            else if (key == "gru.hidden") gru.hidden = as_int();
            else if (key == "gru.layers") gru.layers = as_int();
            else if (key == "ridge.lambda") ridge_lambda = as_double();
            else if (key == "naive.period") naive_period = as_int();
            else if (key == "folds.train_span_hours") folds.train_span_hours = as_size();
            else if (key == "folds.count") folds.fold_count = as_int();
            else if (key == "folds.val_fraction") folds.val_fraction = as_double();
            else if (key == "ood.q_low") ood.q_low = as_double();
            else if (key == "ood.q_high") ood.q_high = as_double();
            else if (key == "ood.flag_vars") ood.flag_vars = split_list(value);
            else if (key == "ood.window_hours") ood.window_hours = as_int();
            else if (key == "ood.exceed_fraction") ood.exceed_fraction = as_double();
            else if (key == "ood.min_separation_hours") ood.min_separation_hours = as_int();
            else
                throw std::invalid_argument("unknown configuration key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw;
        } catch (const std::exception&) {
            throw std::invalid_argument("bad value '" + value + "' for configuration key '" +
                                        key + "'");
        }
    }

    // `key = value` lines; '#' starts a comment.
    void load(const std::string& path) {
        std::ifstream in(path);
        if (!in)
            throw DataError("cannot open config file: " + path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                if (line.find_first_not_of(" \t\r") != std::string::npos)
                    throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                                ": expected key = value");
                continue;
            }
            auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t\r");
                if (b == std::string::npos) return std::string();
                const auto e = s.find_last_not_of(" \t\r");
                return s.substr(b, e - b + 1);
            };
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty())
                throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                            ": empty key");
            set(key, value);
        }
    }

    EvalRequest to_eval_request(const std::vector<std::string>& models,
                                const std::vector<std::string>& regimes, int workers) const {
        EvalRequest req;
        req.models = models;
        req.regimes = regimes;
        req.folds = folds;
        req.window = window;
        req.window.target = target;
        req.selection.pcmci = pcmci;
        req.selection.mi = mi;
        req.model.gru = gru;
        req.model.train = train;
        req.model.ridge_lambda = ridge_lambda;
        req.model.naive_period = naive_period;
        req.seed = seed;
        req.workers = workers;
        return req;
    }

    nlohmann::json to_json() const {
        return {
            {"seed", seed},
            {"target", target},
            {"window", {{"lookback", window.lookback}, {"horizon", window.horizon}}},
            {"pcmci",
             {{"tau_max", pcmci.tau_max},
              {"tau_min", pcmci.tau_min},
              {"pc_alpha", pcmci.pc_alpha},
              {"mci_alpha", pcmci.mci_alpha},
              {"max_cond_dim", pcmci.max_cond_dim},
              {"bh_correction", pcmci.bh_correction}}},
            {"mi",
             {{"threshold", mi.mi_thres},
              {"rho_max", mi.rho_max},
              {"knn_k", mi.knn_k},
              {"lag_max", mi.lag_max}}},
            {"train",
             {{"learning_rate", train.learning_rate},
              {"beta1", train.beta1},
              {"beta2", train.beta2},
              {"batch_size", train.batch_size},
              {"max_epochs", train.max_epochs},
              {"patience", train.patience},
              {"min_delta", train.min_delta},
              {"dropout", train.dropout}}},
            {"gru", {{"hidden", gru.hidden}, {"layers", gru.layers}}},
            {"ridge", {{"lambda", ridge_lambda}}},
            {"naive", {{"period", naive_period}}},
            {"folds",
             {{"train_span_hours", folds.train_span_hours},
              {"count", folds.fold_count},
              {"val_fraction", folds.val_fraction}}},
            {"ood",
             {{"q_low", ood.q_low},
              {"q_high", ood.q_high},
              {"flag_vars", ood.flag_vars},
              {"window_hours", ood.window_hours},
              {"exceed_fraction", ood.exceed_fraction},
              {"min_separation_hours", ood.min_separation_hours}}},
        };
    }
};

} // namespace stlf
