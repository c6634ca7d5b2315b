// soda: data assimilation with windowed score-based diffusion models.
//
// Usage:
//   soda run --config lorenz_w17.cfg
//   soda sweep --config lorenz.cfg --windows 3,17
//   soda simulate --config lorenz.cfg --out data.bin --items-dir items/
//   soda train --data data.bin --w 17 --out model.bin
//   soda assimilate --model model.bin --observations items/item_000.obs.json --out post.csv
//   soda pf --observations items/item_000.obs.json --out pf.csv
//   soda evaluate --samples post.csv --observations items/item_000.obs.json --reference pf.csv
//
// Every config key is also a flag (`--train_steps 500`). Precedence: defaults,
// then the config file, then SODA_SEED, then flags.
// Exit codes: 0 ok, 1 other failure, 2 config error, 3 numeric divergence,
// 4 format error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "soda/config.hpp"
#include "soda/datastore.hpp"
#include "soda/error.hpp"
#include "soda/experiment.hpp"
#include "soda/hash.hpp"
#include "soda/metrics.hpp"
#include "soda/pf.hpp"

namespace fs = std::filesystem;
using namespace soda;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kDivergence = 3, kFormat = 4 };

const std::vector<int> kSweepWindows{3, 5, 7, 9, 17, 25, 33, 65};

// Config file plus one `--key value` flag per config key.
struct ConfigFlags {
    std::string file;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;

    void attach(CLI::App* app) {
        app->add_option("-c,--config", file, "key = value config file");
        for (const auto& key : config_keys())
            options[key.name] = app->add_option("--" + key.name, values[key.name], key.help)->group("Config keys");
    }

    ExperimentConfig build(const std::map<std::string, std::string>& extra = {}) const {
        std::vector<std::map<std::string, std::string>> layers;
        if (!file.empty()) layers.push_back(read_config_file(file));
        if (const char* env = std::getenv("SODA_SEED")) layers.push_back({{"seed", env}});
        std::map<std::string, std::string> flags = extra;
        for (const auto& [name, opt] : options)
            if (opt->count() > 0) flags[name] = values.at(name);
        layers.push_back(flags);
        return make_config(layers);
    }
};

void print_metrics(const std::vector<MetricRow>& rows) {
    write_metrics_csv(std::cout, rows);
}

int cmd_run(const ConfigFlags& flags, const std::map<std::string, std::string>& extra) {
    const ExperimentConfig cfg = flags.build(extra);
    const ExperimentReport report = run_experiment(cfg, &std::cerr);
    print_metrics(report.metrics);
    return kOk;
}

int cmd_simulate(const ConfigFlags& flags, const std::string& out, const std::string& items_dir) {
    const ExperimentConfig cfg = flags.build();
    const Dataset data = generate_dataset(cfg.manifest(), cfg.threads);
    save_dataset(data, out);
    std::cerr << "wrote " << data.size() << " trajectories to " << out << " (" << data.divergent_resamples
              << " divergent draws resampled)\n";
    if (!items_dir.empty()) {
        fs::create_directories(items_dir);
        const auto items = build_evaluation_items(data, cfg.n_items, cfg.horizon, cfg.observation_model(),
                                                  derive_seed(cfg.seed, {3}));
        for (std::size_t i = 0; i < items.size(); ++i) {
            std::ostringstream stem;
            stem << "item_" << std::setw(3) << std::setfill('0') << i;
            save_observations(items[i].observations, fs::path(items_dir) / (stem.str() + ".obs.json"));
            PosteriorSampleSet truth;
            truth.samples = {items[i].truth};
            truth.model_id = "truth";
            truth.seed = cfg.seed;
            save_results(truth, fs::path(items_dir) / (stem.str() + ".truth.csv"),
                         {{"trajectory", std::to_string(items[i].trajectory)},
                          {"offset", std::to_string(items[i].offset)}});
        }
        std::cerr << "wrote " << items.size() << " evaluation items to " << items_dir << "\n";
    }
    return kOk;
}

int cmd_train(const ConfigFlags& flags, const std::string& data_path, int w, const std::string& out) {
    const ExperimentConfig cfg = flags.build();
    const Dataset data = load_dataset(data_path);
    TrajectoryWindowSource train_src(data, data.splits.train, w);
    TrajectoryWindowSource val_src(data, data.splits.val, w);
    const TrainResult res = train(train_src, &val_src, cfg.architecture(w), cfg.train_config(w), NoiseSchedule{});
    for (const auto& p : res.loss_curve)
        std::cerr << "step " << p.step << " train " << p.train_loss
                  << (p.validation_loss ? " val " + std::to_string(*p.validation_loss) : std::string{}) << "\n";
    save_model(res.network, out);
    std::cerr << "best step " << res.best_step << "; model " << model_id(res.network) << " written to " << out << "\n";
    return kOk;
}

int cmd_assimilate(const ConfigFlags& flags, const std::string& model_path, const std::string& obs_path,
                   const std::string& out) {
    const ExperimentConfig cfg = flags.build();
    const ScoreNetwork net = load_model(model_path);
    const ObservationSeries y = load_observations(obs_path);
    PosteriorSampleSet set = assimilate(net, NoiseSchedule{}, y, cfg.assimilation_request(), cfg.seed);
    set.model_id = model_id(net);
    set.observation_id = obs_path;
    save_results(set, out, {{"config_hash", hex64(cfg.content_hash())}, {"model", model_path}});
    const auto s = summarize_parameter(set.parameter_series());
    std::cout << "parameter estimate " << s.point_estimate << " spread " << s.spread << "\n";
    return kOk;
}

int cmd_pf(const ConfigFlags& flags, const std::string& obs_path, const std::string& out) {
    ExperimentConfig cfg = flags.build();
    const ObservationSeries y = load_observations(obs_path);
    PFConfig pf = cfg.pf_config();
    pf.seed = cfg.seed;
    const auto ens = run_pf(cfg.system_spec(), cfg.parameter_prior(), y.model, y, pf, cfg.horizon);
    Rng rng(derive_seed(cfg.seed, {7}));
    PosteriorSampleSet set = ens.sample_paths(cfg.pf_samples, rng);
    set.model_id = "pf";
    set.observation_id = obs_path;
    set.seed = cfg.seed;
    save_results(set, out, {{"config_hash", hex64(cfg.content_hash())}});
    const auto s = summarize_parameter(set.parameter_series());
    std::cout << "parameter estimate " << s.point_estimate << " spread " << s.spread << "\n";
    return kOk;
}

int cmd_evaluate(const ConfigFlags& flags, const std::string& samples_path, const std::string& obs_path,
                 const std::string& reference_path, std::optional<double> truth) {
    const ExperimentConfig cfg = flags.build();
    const PosteriorSampleSet set = load_results(samples_path);
    const ObservationSeries y = load_observations(obs_path);
    const SystemSpec spec = cfg.system_spec();
    const std::string sys(to_string(cfg.system));
    std::vector<MetricRow> rows;
    auto one = [&](std::string metric, double v) { rows.push_back({sys, samples_path, std::move(metric), v, 0.0, 1}); };
    one("ELL", expected_log_likelihood(set, y));
    if (!reference_path.empty()) one("W1", wasserstein1_marginal(set, load_results(reference_path)));
    std::vector<double> residuals;
    for (const auto& s : set.samples) residuals.push_back(equation_residual(s, spec));
    rows.push_back(summarize_metric(sys, samples_path, "D_eq", residuals));
    const auto s = summarize_parameter(set.parameter_series());
    one("theta_estimate", s.point_estimate);
    one("theta_spread", s.spread);
    if (truth) one("abs_error_theta", std::abs(s.point_estimate - *truth));
    print_metrics(rows);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint state and parameter inference with windowed score-based diffusion models"};
    app.require_subcommand(1);

    ConfigFlags run_flags, sweep_flags, sim_flags, train_flags, assim_flags, pf_flags, eval_flags;

    auto* run = app.add_subcommand("run", "full pipeline: generate, train, assimilate, filter, evaluate");
    run_flags.attach(run);

    auto* sweep = app.add_subcommand("sweep", "run over window sizes (default 3,5,7,9,17,25,33,65)");
    sweep_flags.attach(sweep);

    std::string sim_out = "dataset.bin", items_dir;
    auto* sim = app.add_subcommand("simulate", "generate a dataset file");
    sim_flags.attach(sim);
    sim->add_option("-o,--out", sim_out, "dataset file")->capture_default_str();
    sim->add_option("--items-dir", items_dir, "also write evaluation observations and truths here");

    std::string train_data, train_out = "model.bin";
    int train_w = 17;
    auto* tr = app.add_subcommand("train", "train a window score network");
    train_flags.attach(tr);
    tr->add_option("-d,--data", train_data, "dataset file")->required();
    tr->add_option("-w,--w", train_w, "window size")->capture_default_str();
    tr->add_option("-o,--out", train_out, "model file")->capture_default_str();

    std::string assim_model, assim_obs, assim_out = "posterior.csv";
    auto* as = app.add_subcommand("assimilate", "sample the joint posterior for one observation file");
    assim_flags.attach(as);
    as->add_option("-m,--model", assim_model, "model file")->required();
    as->add_option("-y,--observations", assim_obs, "observation file")->required();
    as->add_option("-o,--out", assim_out, "results file")->capture_default_str();

    std::string pf_obs, pf_out = "pf.csv";
    auto* pfc = app.add_subcommand("pf", "run the reference particle filter on one observation file");
    pf_flags.attach(pfc);
    pfc->add_option("-y,--observations", pf_obs, "observation file")->required();
    pfc->add_option("-o,--out", pf_out, "results file")->capture_default_str();

    std::string eval_samples, eval_obs, eval_ref;
    std::optional<double> eval_truth;
    auto* ev = app.add_subcommand("evaluate", "score a results file");
    eval_flags.attach(ev);
    ev->add_option("-s,--samples", eval_samples, "results file")->required();
    ev->add_option("-y,--observations", eval_obs, "observation file")->required();
    ev->add_option("-r,--reference", eval_ref, "reference results file for W1");
    ev->add_option("--truth-theta", eval_truth, "true parameter value");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*run) return cmd_run(run_flags, {});
        if (*sweep) {
            std::map<std::string, std::string> extra;
            if (sweep_flags.options.at("windows")->count() == 0) {
                std::string w;
                for (int v : kSweepWindows) w += (w.empty() ? "" : ",") + std::to_string(v);
                extra["windows"] = w;
            }
            return cmd_run(sweep_flags, extra);
        }
        if (*sim) return cmd_simulate(sim_flags, sim_out, items_dir);
        if (*tr) return cmd_train(train_flags, train_data, train_w, train_out);
        if (*as) return cmd_assimilate(assim_flags, assim_model, assim_obs, assim_out);
        if (*pfc) return cmd_pf(pf_flags, pf_obs, pf_out);
        if (*ev) return cmd_evaluate(eval_flags, eval_samples, eval_obs, eval_ref, eval_truth);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const ContractViolation& e) {
        std::cerr << "invalid request: " << e.what() << "\n";
        return kConfig;
    } catch (const DivergenceError& e) {
        std::cerr << "numeric divergence: " << e.what() << "\n";
        return kDivergence;
    } catch (const DegenerateFilterError& e) {
        std::cerr << "numeric divergence: " << e.what() << "\n";
        return kDivergence;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kFormat;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}
