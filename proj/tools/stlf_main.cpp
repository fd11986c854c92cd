// stlf: causal and non-causal feature selection for weather-driven
// short-term load forecasting, with a synthetic-benchmark evaluation
// pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "stlf/config.hpp"
#include "stlf/eval.hpp"
#include "stlf/mifilter.hpp"
#include "stlf/panel.hpp"
#include "stlf/pcmci.hpp"
#include "stlf/scm.hpp"

namespace {

struct GlobalOptions {
    std::string config_path;
    std::vector<std::string> overrides; // key=value, applied after the file
    stlf::RunConfig cfg;

    void finalize() {
        if (config_path.empty()) {
            if (const char* env = std::getenv("STLF_CONFIG")) config_path = env;
        }
        if (!config_path.empty()) cfg.load(config_path);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
    }
};

void write_json(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw stlf::DataError("cannot write " + path);
    out << j.dump(2) << '\n';
}

int cmd_ingest(const GlobalOptions& g, const std::string& load_csv,
               const std::string& weather_csv, const std::string& region,
               const std::vector<std::string>& variables, const std::string& holidays_path,
               const std::string& consumer_type, const std::string& out_prefix) {
    stlf::LoadIngestOptions opts;
    opts.consumer_type = consumer_type;
    stlf::Panel load = stlf::ingest_load_csv(load_csv, region, opts);
    stlf::Panel joined = load;
    if (!weather_csv.empty()) {
        if (variables.empty())
            throw std::invalid_argument("--vars is required when --weather is given");
        const stlf::Panel weather = stlf::ingest_weather_csv(weather_csv, region, variables);
        joined = stlf::join_align(load, weather);
    }
    std::set<std::int64_t> holidays;
    if (!holidays_path.empty()) holidays = stlf::read_holiday_file(holidays_path);
    const stlf::Panel panel = stlf::append_calendar(joined, holidays);
    stlf::write_panel(panel, out_prefix);
    std::cout << "wrote " << out_prefix << ".panel.csv (" << panel.rows() << " rows, "
              << panel.cols() << " columns)\n";
    (void)g;
    return 0;
}

int cmd_synth(const GlobalOptions& g, const std::string& fixture,
              const std::string& spec_path, std::size_t length, const std::string& out_prefix) {
    std::optional<stlf::ScmSpec> spec;
    if (!fixture.empty()) {
        const stlf::ScmFixture fx = stlf::standard_fixture(fixture, g.cfg.seed, length);
        stlf::write_panel(fx.panel, out_prefix);
        write_json(fx.spec.to_json(), out_prefix + ".scm.json");
    } else if (!spec_path.empty()) {
        std::ifstream in(spec_path);
        if (!in)
            throw stlf::DataError("cannot open spec file: " + spec_path);
        spec = stlf::ScmSpec::from_json(nlohmann::json::parse(in));
        const stlf::Panel panel = stlf::simulate(*spec, length, g.cfg.seed);
        stlf::write_panel(panel, out_prefix);
        write_json(spec->to_json(), out_prefix + ".scm.json");
    } else {
        throw std::invalid_argument("synth needs --fixture or --spec");
    }
    std::cout << "wrote " << out_prefix << ".panel.csv and " << out_prefix << ".scm.json\n";
    return 0;
}

int cmd_select(const GlobalOptions& g, const std::vector<std::string>& panel_prefixes,
               const std::string& method, const std::string& out_path,
               const std::string& graph_path) {
    if (panel_prefixes.empty())
        throw std::invalid_argument("select needs at least one --panel");
    const std::string& target = g.cfg.target;

    if (method == "mi") {
        if (panel_prefixes.size() != 1)
            throw std::invalid_argument("--method mi expects exactly one panel");
        const stlf::Panel panel = stlf::read_panel(panel_prefixes[0]);
        const std::vector<std::string> weather =
            panel.names_of_kind(stlf::ColumnKind::weather);
        const std::vector<stlf::MiScore> scores =
            stlf::mi_rank(panel, target, weather, g.cfg.mi);
        std::vector<stlf::MiScore> passing;
        for (const auto& s : scores)
            if (s.mi > g.cfg.mi.mi_thres) passing.push_back(s);
        const std::vector<std::string> kept =
            stlf::redundancy_screen(passing, panel, g.cfg.mi);
        write_json(stlf::mi_selection_to_json(target, scores, kept, g.cfg.mi), out_path);
        std::cout << "kept " << kept.size() << " of " << weather.size() << " candidates\n";
        return 0;
    }
    if (method == "causal") {
        std::vector<stlf::LaggedGraph> graphs;
        std::set<std::string> calendar;
        for (const auto& prefix : panel_prefixes) {
            const stlf::Panel panel = stlf::read_panel(prefix);
            std::vector<std::string> vars;
            vars.push_back(target);
            for (const auto& w : panel.names_of_kind(stlf::ColumnKind::weather))
                vars.push_back(w);
            for (const auto& c : panel.names_of_kind(stlf::ColumnKind::calendar)) {
                const std::size_t j = panel.require(c);
                bool constant = true;
                double v0 = 0.0;
                bool seen = false;
                for (std::size_t i = 0; i < panel.rows() && constant; ++i) {
                    if (!panel.is_observed(i, j)) continue;
                    if (!seen) {
                        v0 = panel.value(i, j);
                        seen = true;
                    } else if (panel.value(i, j) != v0) {
                        constant = false;
                    }
                }
                if (constant) continue;
                vars.push_back(c);
                calendar.insert(c);
            }
            graphs.push_back(stlf::run_pcmci(panel.select_columns(vars), g.cfg.pcmci));
        }
        const stlf::LaggedGraph graph =
            graphs.size() == 1 ? graphs.front() : stlf::consensus_graph(graphs);
        const std::set<std::string> kept = stlf::causal_feature_set(graph, target, calendar);
        const std::vector<int> ar = stlf::causal_ar_lags(graph, target);
        nlohmann::json sel = {{"method", "pcmci"},
                              {"target", target},
                              {"kept", std::vector<std::string>(kept.begin(), kept.end())},
                              {"ar_lags", ar},
                              {"panels", panel_prefixes.size()},
                              {"config",
                               {{"tau_max", g.cfg.pcmci.tau_max},
                                {"tau_min", g.cfg.pcmci.tau_min},
                                {"pc_alpha", g.cfg.pcmci.pc_alpha},
                                {"mci_alpha", g.cfg.pcmci.mci_alpha}}}};
        write_json(sel, out_path);
        if (!graph_path.empty()) write_json(graph.to_json(), graph_path);
        std::cout << "causal set: " << kept.size() << " variables, " << graph.links.size()
                  << " links\n";
        return 0;
    }
    throw std::invalid_argument("unknown method '" + method + "' (expected causal or mi)");
}

int cmd_evaluate(const GlobalOptions& g, const std::vector<std::string>& panel_prefixes,
                 const std::vector<std::string>& models, const std::vector<std::string>& regimes,
                 const std::string& out_dir, int workers) {
    std::vector<stlf::Panel> panels;
    for (const auto& prefix : panel_prefixes) panels.push_back(stlf::read_panel(prefix));
    const stlf::EvalRequest req = g.cfg.to_eval_request(models, regimes, workers);
    const stlf::EvalReport report = stlf::run_regime_comparison(panels, req);

    std::filesystem::create_directories(out_dir);
    nlohmann::json j = report.to_json();
    j["config"] = g.cfg.to_json();
    write_json(j, out_dir + "/report.json");
    report.write_csv(out_dir + "/report.csv");
    std::cout << "wrote " << out_dir << "/report.json and report.csv (" << report.cells.size()
              << " cells)\n";
    return 0;
}

int cmd_ood(const GlobalOptions& g, const std::string& panel_prefix,
            const std::string& train_end_iso, const std::vector<std::string>& models,
            const std::vector<std::string>& regimes, const std::string& out_dir) {
    const stlf::Panel panel = stlf::read_panel(panel_prefix);
    const std::int64_t end_hour = stlf::parse_iso_hour(train_end_iso);
    if (end_hour <= panel.start_hour() || end_hour > panel.timestamp(panel.rows() - 1))
        throw stlf::DataError("--train-end falls outside the panel range");
    const std::size_t train_end = static_cast<std::size_t>(end_hour - panel.start_hour());

    const stlf::EvalRequest req = g.cfg.to_eval_request(models, regimes, 1);
    std::vector<stlf::OodWindow> windows;
    const nlohmann::json report = stlf::evaluate_ood(panel, train_end, req, g.cfg.ood, &windows);

    std::filesystem::create_directories(out_dir);
    stlf::write_ood_windows_csv(windows, out_dir + "/ood_windows.csv");
    nlohmann::json j = report;
    j["config"] = g.cfg.to_json();
    write_json(j, out_dir + "/ood_report.json");
    if (windows.empty())
        std::cout << "no windows\n";
    else
        std::cout << "detected " << windows.size() << " OOD windows\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& merged_out) {
    nlohmann::json merged;
    merged["cells"] = nlohmann::json::array();
    std::set<std::string> seen;
    for (const auto& path : inputs) {
        std::ifstream in(path);
        if (!in)
            throw stlf::DataError("cannot open " + path);
        const nlohmann::json j = nlohmann::json::parse(in);
        for (const auto& cell : j.at("cells")) {
            const std::string key = cell.at("city").get<std::string>() + "/" +
                                    cell.at("model").get<std::string>() + "/" +
                                    cell.at("regime").get<std::string>() + "/" +
                                    std::to_string(cell.at("fold").get<int>());
            if (!seen.insert(key).second)
                throw stlf::DataError("duplicate report cell " + key + " in " + path);
            merged["cells"].push_back(cell);
        }
        if (j.contains("city_means"))
            for (const auto& m : j.at("city_means")) merged["city_means"].push_back(m);
        if (j.contains("top_counts"))
            for (const auto& t : j.at("top_counts")) merged["top_counts"].push_back(t);
    }

    std::printf("%-12s %-8s %-8s %10s %10s %6s\n", "city", "model", "regime", "MAE", "MAPE%",
                "folds");
    if (merged.contains("city_means"))
        for (const auto& m : merged.at("city_means"))
            std::printf("%-12s %-8s %-8s %10.4f %10.4f %6d\n",
                        m.at("city").get<std::string>().c_str(),
                        m.at("model").get<std::string>().c_str(),
                        m.at("regime").get<std::string>().c_str(), m.at("mae").get<double>(),
                        m.at("mape").get<double>(), m.at("folds").get<int>());
    if (merged.contains("top_counts")) {
        std::printf("\n%-8s %-8s %8s %8s\n", "model", "regime", "top MAE", "top MAPE");
        for (const auto& t : merged.at("top_counts"))
            std::printf("%-8s %-8s %8d %8d\n", t.at("model").get<std::string>().c_str(),
                        t.at("regime").get<std::string>().c_str(),
                        t.at("top_mae").get<int>(), t.at("top_mape").get<int>());
    }
    if (!merged_out.empty()) write_json(merged, merged_out);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Feature selection and evaluation pipeline for weather-driven "
                 "short-term load forecasting"};
    app.require_subcommand(1);

    GlobalOptions g;
    app.add_option("--config", g.config_path,
                   "key=value configuration file (or env STLF_CONFIG)");
    app.add_option("--set", g.overrides, "override a configuration key, e.g. --set seed=7");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "build a canonical panel from raw CSVs");
    std::string in_load, in_weather, in_region, in_holidays, in_type, in_out;
    std::vector<std::string> in_vars;
    ingest->add_option("--load", in_load, "load CSV")->required();
    ingest->add_option("--weather", in_weather, "weather CSV");
    ingest->add_option("--region", in_region, "region label")->required();
    ingest->add_option("--vars", in_vars, "weather variables to keep")->delimiter(',');
    ingest->add_option("--holidays", in_holidays, "holiday date list, one ISO date per line");
    ingest->add_option("--consumer-type", in_type, "restrict to one consumer type");
    ingest->add_option("--out", in_out, "output prefix")->required();

    // synth
    auto* synth = app.add_subcommand("synth", "simulate a synthetic benchmark panel");
    std::string sy_fixture, sy_spec, sy_out;
    std::size_t sy_length = 2000;
    synth->add_option("--fixture", sy_fixture, "chain3 | mediation8 | independent6");
    synth->add_option("--spec", sy_spec, "structural-model JSON");
    synth->add_option("--length", sy_length, "output length in hours");
    synth->add_option("--out", sy_out, "output prefix")->required();

    // select
    auto* select = app.add_subcommand("select", "run feature selection on a panel");
    std::vector<std::string> se_panels;
    std::string se_method, se_out, se_graph;
    select->add_option("--panel", se_panels,
                       "panel prefix; repeat for consensus (causal only)")
        ->required();
    select->add_option("--method", se_method, "causal | mi")->required();
    select->add_option("--out", se_out, "selection JSON path")->required();
    select->add_option("--out-graph", se_graph, "lagged-graph JSON path (causal)");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "regime comparison with rolling-origin CV");
    std::vector<std::string> ev_panels, ev_models{"naive", "ridge"},
        ev_regimes{"F0", "F1", "F2", "F3"};
    std::string ev_out;
    int ev_workers = static_cast<int>(std::thread::hardware_concurrency());
    evaluate->add_option("--panel", ev_panels, "panel prefix, one per city")->required();
    evaluate->add_option("--models", ev_models, "naive | ridge | gru")->delimiter(',');
    evaluate->add_option("--regimes", ev_regimes, "subset of F0,F1,F2,F3")->delimiter(',');
    evaluate->add_option("--workers", ev_workers, "parallel cell jobs");
    evaluate->add_option("--out", ev_out, "output directory")->required();

    // ood
    auto* ood = app.add_subcommand("ood", "extreme-weather window detection and evaluation");
    std::string oo_panel, oo_train_end, oo_out;
    std::vector<std::string> oo_models{"naive", "ridge"}, oo_regimes{"F0", "F1", "F2", "F3"};
    ood->add_option("--panel", oo_panel, "panel prefix")->required();
    ood->add_option("--train-end", oo_train_end, "end of training window (ISO hour)")
        ->required();
    ood->add_option("--models", oo_models, "naive | ridge | gru")->delimiter(',');
    ood->add_option("--regimes", oo_regimes, "subset of F0,F1,F2,F3")->delimiter(',');
    ood->add_option("--out", oo_out, "output directory")->required();

    // report
    auto* report = app.add_subcommand("report", "merge and pretty-print evaluation reports");
    std::vector<std::string> re_in;
    std::string re_out;
    report->add_option("--in", re_in, "report.json files")->required();
    report->add_option("--merge", re_out, "write the merged report here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e); // prints the message; 0 for --help/--version
        return rc == 0 ? 0 : 1;
    }

    try {
        g.finalize();
        if (*ingest)
            return cmd_ingest(g, in_load, in_weather, in_region, in_vars, in_holidays,
                              in_type, in_out);
        if (*synth) return cmd_synth(g, sy_fixture, sy_spec, sy_length, sy_out);
        if (*select) return cmd_select(g, se_panels, se_method, se_out, se_graph);
        if (*evaluate)
            return cmd_evaluate(g, ev_panels, ev_models, ev_regimes, ev_out, ev_workers);
        if (*ood) return cmd_ood(g, oo_panel, oo_train_end, oo_models, oo_regimes, oo_out);
        if (*report) return cmd_report(re_in, re_out);
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const stlf::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const stlf::NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
