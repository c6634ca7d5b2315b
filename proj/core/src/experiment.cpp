#include "soda/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "soda/error.hpp"
#include "soda/hash.hpp"

namespace soda {

namespace fs = std::filesystem;
using nlohmann::json;

const MethodResult& ExperimentReport::window(int w) const {
    for (const auto& m : windows)
        if (m.w == w) return m;
    throw ContractViolation("no results for window size " + std::to_string(w));
}

namespace {

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Runs fn; library errors are re-raised with the stage name and artifact hash
// prepended, keeping their type.
template <class Fn>
auto stage(const std::string& name, std::uint64_t artifact, Fn&& fn) -> decltype(fn()) {
    const std::string ctx = "stage '" + name + "' (artifact " + hex64(artifact) + "): ";
    try {
        return fn();
    } catch (const DivergenceError& e) {
        throw DivergenceError(ctx, e);
    } catch (const DegenerateFilterError& e) {
        throw DegenerateFilterError(ctx, e);
    } catch (const CorruptFileError& e) {
        throw CorruptFileError(ctx + e.what());
    } catch (const FormatError& e) {
        throw FormatError(ctx + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(ctx + e.what());
    } catch (const WindowTooLargeError& e) {
        throw WindowTooLargeError(ctx + e.what());
    } catch (const ContractViolation& e) {
        throw ContractViolation(ctx + e.what());
    } catch (const NumericInputError& e) {
        throw NumericInputError(ctx + e.what());
    } catch (const NearSingularError& e) {
        throw NearSingularError(ctx + e.what());
    } catch (const Error& e) {
        throw Error(ctx + e.what());
    }
}

std::uint64_t hash_observations(const ObservationSeries& y) {
    io::Writer w;
    w.u64(y.times.size());
    for (int t : y.times) w.i64(t);
    for (Eigen::Index i = 0; i < y.values.size(); ++i) w.f64(y.values.data()[i]);
    for (int c : y.model.observed_components) w.i64(c);
    w.i64(y.model.stride);
    w.f64(y.model.noise_std);
    return fnv1a(w.buffer());
}

std::uint64_t hash_strings(std::initializer_list<std::string> parts) {
    std::uint64_t h = fnv1a("soda-stage-v1");
    for (const auto& p : parts) h = fnv1a(p + "\x1f", h);
    return h;
}

std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

template <class T>
std::string list(const std::vector<T>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + num(static_cast<double>(v[i]));
    return s;
}

void write_text(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out << body;
}

// CSV plus `<file>.json` naming the config hash and seed.
void write_csv(const fs::path& path, const std::string& body, const ExperimentConfig& cfg) {
    write_text(path, body);
    json meta = {{"format", "soda-table"},
                 {"version", kResultsFormatVersion},
                 {"config_hash", hex64(cfg.content_hash())},
                 {"seed", cfg.seed},
                 {"content_hash", hex64(fnv1a(body))}};
    write_text(path.string() + ".json", meta.dump(2) + "\n");
}

template <class Load, class Make, class Save>
auto cached(const fs::path& path, Load&& load, Make&& make, Save&& save, bool& hit) -> decltype(make()) {
    if (fs::exists(path)) {
        try {
            hit = true;
            return load(path);
        } catch (const FormatError&) {
            // unreadable cache entries are rebuilt
        }
    }
    hit = false;
    auto value = make();
    save(value, path);
    return value;
}

double mean_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void fill_item(MethodResult& m, std::size_t i, const PosteriorSampleSet& set, const ObservationSeries& y,
               const SystemSpec& spec, const PosteriorSampleSet* reference, const Vector* scale) {
    const auto summary = summarize_parameter(set.parameter_series());
    m.estimate[i] = summary.point_estimate;
    m.spread[i] = summary.spread;
    m.ell[i] = expected_log_likelihood(set, y);
    m.w1[i] = reference ? wasserstein1_marginal(set, *reference, scale) : 0.0;
    double res = 0.0;
    for (const auto& s : set.samples) res += equation_residual(s, spec);
    m.residual[i] = res / set.n_samples();
}

MethodResult make_method(std::string label, int w, std::size_t n) {
    MethodResult m;
    m.label = std::move(label);
    m.w = w;
    m.estimate.assign(n, 0.0);
    m.spread.assign(n, 0.0);
    m.ell.assign(n, 0.0);
    m.w1.assign(n, 0.0);
    m.residual.assign(n, 0.0);
    return m;
}

std::string items_csv(const MethodResult& m, const std::vector<double>& truth) {
    std::ostringstream os;
    os << std::setprecision(10) << "item,truth,estimate,spread,ell,w1,residual\n";
    for (std::size_t i = 0; i < truth.size(); ++i)
        os << i << ',' << truth[i] << ',' << m.estimate[i] << ',' << m.spread[i] << ',' << m.ell[i] << ',' << m.w1[i]
           << ',' << m.residual[i] << '\n';
    return os.str();
}

}  // namespace

std::vector<MetricRow> report_metrics(const ExperimentReport& r) {
    const std::string sys(to_string(r.config.system));
    std::vector<MetricRow> rows;
    auto add = [&](const MethodResult& m, bool with_w1) {
        const std::string w = m.w > 0 ? std::to_string(m.w) : m.label;
        rows.push_back(summarize_metric(sys, w, "ELL", m.ell));
        if (with_w1) rows.push_back(summarize_metric(sys, w, "W1", m.w1));
        MetricRow rmse_row{sys, w, "RMSE_theta", rmse(m.estimate, r.truth), 0.0, static_cast<int>(r.truth.size())};
        rows.push_back(rmse_row);
        const double corr = r.truth.size() >= 2 ? pearson(m.estimate, r.truth) : 0.0;
        rows.push_back({sys, w, "corr_theta", std::isfinite(corr) ? corr : 0.0, 0.0, static_cast<int>(r.truth.size())});
        rows.push_back(summarize_metric(sys, w, "D_eq", m.residual));
    };
    for (const auto& m : r.windows) add(m, true);
    add(r.pf, false);
    add(r.open_loop, true);
    return rows;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg_in, std::ostream* log) {
    ExperimentConfig cfg = cfg_in;
    cfg.validate();
    const fs::path out = cfg.output;
    const fs::path cache = cfg.cache_dir();
    fs::create_directories(out);
    fs::create_directories(cache);
    auto note = [&](const std::string& s) {
        if (log) *log << s << std::endl;
    };
    json stages = json::object();
    Stopwatch total;

    ExperimentReport report;
    report.config = cfg;
    report.config_hash = cfg.content_hash();
    write_text(out / "config.cfg", render_config(cfg));

    // dataset
    const DatasetManifest manifest = cfg.manifest();
    const std::uint64_t data_hash = manifest.content_hash();
    Stopwatch sw;
    bool hit = false;
    const fs::path data_path = cache / ("dataset-" + hex64(data_hash) + ".bin");
    const Dataset data = stage("generate", data_hash, [&] {
        return cached(
            data_path, [](const fs::path& p) { return load_dataset(p); },
            [&] { return generate_dataset(manifest, cfg.threads); },
            [](const Dataset& d, const fs::path& p) { save_dataset(d, p); }, hit);
    });
    note("generate: " + std::to_string(data.size()) + " trajectories" + (hit ? " (cached)" : "") + ", " +
         num(sw.seconds()) + " s");
    stages["generate"] = {{"artifact", data_path.filename().string()}, {"cached", hit}, {"seconds", sw.seconds()},
                          {"divergent_resamples", data.divergent_resamples}};
    const SystemSpec& spec = data.manifest.system;

    // evaluation items
    const ObservationModel obs_model = cfg.observation_model();
    const std::uint64_t items_seed = derive_seed(cfg.seed, {3});
    const auto items = stage("items", data_hash, [&] {
        return build_evaluation_items(data, cfg.n_items, cfg.horizon, obs_model, items_seed);
    });
    const std::size_t n_items = items.size();
    for (const auto& it : items) report.truth.push_back(it.theta);

    // PF reference
    sw = Stopwatch{};
    PFConfig pf_cfg = cfg.pf_config();
    report.pf = make_method("PF", 0, n_items);
    std::vector<PosteriorSampleSet> pf_sets(n_items);
    int pf_hits = 0;
    for (std::size_t i = 0; i < n_items; ++i) {
        pf_cfg.seed = derive_seed(cfg.seed, {4, i});
        const std::uint64_t h = hash_strings({hex64(data_hash), hex64(hash_observations(items[i].observations)),
                                              std::to_string(cfg.horizon), std::to_string(pf_cfg.n_particles),
                                              num(pf_cfg.jitter_std), num(pf_cfg.resample_fraction),
                                              std::to_string(pf_cfg.seed), std::to_string(cfg.pf_samples)});
        pf_sets[i] = stage("pf item " + std::to_string(i), h, [&] {
            return cached(
                cache / ("pf-" + hex64(h) + ".csv"), [](const fs::path& p) { return load_results(p); },
                [&] {
                    const auto ens = run_pf(spec, data.manifest.prior, obs_model, items[i].observations, pf_cfg,
                                            cfg.horizon);
                    Rng rng(derive_seed(cfg.seed, {7, i}));
                    auto set = ens.sample_paths(cfg.pf_samples, rng);
                    set.model_id = "pf";
                    set.observation_id = hex64(hash_observations(items[i].observations));
                    set.seed = pf_cfg.seed;
                    return set;
                },
                [&](const PosteriorSampleSet& s, const fs::path& p) {
                    save_results(s, p, {{"config_hash", hex64(report.config_hash)}, {"stage", "pf"}});
                },
                hit);
        });
        pf_hits += hit;
        fill_item(report.pf, i, pf_sets[i], items[i].observations, spec, nullptr, nullptr);
    }
    note("pf: " + std::to_string(n_items) + " items (" + std::to_string(pf_hits) + " cached), " + num(sw.seconds()) +
         " s");
    stages["pf"] = {{"cached_items", pf_hits}, {"seconds", sw.seconds()}};
    const Vector& scale = data.normalization.std;

    // open-loop baseline: one prior ensemble scored against every item
    sw = Stopwatch{};
    report.open_loop = make_method("open_loop", 0, n_items);
    const PosteriorSampleSet open_loop = stage("open loop", data_hash, [&] {
        return open_loop_samples(spec, data.manifest.prior, cfg.horizon, cfg.open_loop_samples,
                                 derive_seed(cfg.seed, {6}));
    });
    for (std::size_t i = 0; i < n_items; ++i)
        fill_item(report.open_loop, i, open_loop, items[i].observations, spec, &pf_sets[i], &scale);
    stages["open_loop"] = {{"seconds", sw.seconds()}};

    // per window size: train, then assimilate every item
    const NoiseSchedule schedule;
    for (int w : cfg.windows) {
        sw = Stopwatch{};
        const NetworkArchitecture arch = cfg.architecture(w);
        const TrainConfig tc = cfg.train_config(w);
        const std::uint64_t model_hash = hash_strings(
            {hex64(data_hash), std::to_string(w), list(arch.hidden), std::to_string(arch.embed_dim), std::to_string(arch.gaussian_skip),
             std::string(NoiseSchedule::id()), num(schedule.sigma_min), std::to_string(tc.steps),
             std::to_string(tc.batch_size), num(tc.learning_rate), num(tc.ema_decay),
             std::to_string(tc.validation_windows), std::to_string(tc.log_every), std::to_string(tc.seed)});
        const fs::path model_path = cache / ("model-" + hex64(model_hash) + ".bin");
        const fs::path loss_path = cache / ("model-" + hex64(model_hash) + ".loss.csv");
        const ScoreNetwork net = stage("train w=" + std::to_string(w), model_hash, [&] {
            return cached(
                model_path, [](const fs::path& p) { return load_model(p); },
                [&] {
                    TrajectoryWindowSource train_src(data, data.splits.train, w);
                    TrajectoryWindowSource val_src(data, data.splits.val, w);
                    TrainResult res = train(train_src, &val_src, arch, tc, schedule);
                    std::ostringstream os;
                    os << std::setprecision(10) << "step,train_loss,validation_loss\n";
                    for (const auto& p : res.loss_curve)
                        os << p.step << ',' << p.train_loss << ','
                           << (p.validation_loss ? num(*p.validation_loss) : std::string{}) << '\n';
                    write_text(loss_path, os.str());
                    return res.network;
                },
                [](const ScoreNetwork& n, const fs::path& p) { save_model(n, p); }, hit);
        });
        if (fs::exists(loss_path)) fs::copy_file(loss_path, out / ("loss_w" + std::to_string(w) + ".csv"),
                                                 fs::copy_options::overwrite_existing);
        const double train_seconds = sw.seconds();
        note("train w=" + std::to_string(w) + (hit ? " (cached)" : "") + ", " + num(train_seconds) + " s");
        const bool train_hit = hit;

        sw = Stopwatch{};
        const std::string mid = model_id(net);
        AssimilationRequest req = cfg.assimilation_request();
        MethodResult m = make_method("w" + std::to_string(w), w, n_items);
        int post_hits = 0;
        for (std::size_t i = 0; i < n_items; ++i) {
            const std::uint64_t seed = derive_seed(cfg.seed, {5, static_cast<std::uint64_t>(w), i});
            const std::string obs_id = hex64(hash_observations(items[i].observations));
            const std::uint64_t h =
                hash_strings({mid, obs_id, std::to_string(req.horizon), std::to_string(req.n_samples),
                              std::to_string(req.sampler.steps), std::to_string(req.sampler.corrector_steps),
                              num(req.sampler.corrector_r), num(req.sampler.a_start), num(req.guidance.inflation),
                              num(req.guidance.scale), num(req.guidance.a_min),
                              std::to_string(req.guidance.full_jacobian), std::to_string(seed)});
            const PosteriorSampleSet set = stage("assimilate w=" + std::to_string(w) + " item " + std::to_string(i), h, [&] {
                return cached(
                    cache / ("posterior-" + hex64(h) + ".csv"), [](const fs::path& p) { return load_results(p); },
                    [&] {
                        auto s = assimilate(net, schedule, items[i].observations, req, seed);
                        s.model_id = mid;
                        s.observation_id = obs_id;
                        return s;
                    },
                    [&](const PosteriorSampleSet& s, const fs::path& p) {
                        save_results(s, p, {{"config_hash", hex64(report.config_hash)}, {"stage", "assimilate"}});
                    },
                    hit);
            });
            post_hits += hit;
            fill_item(m, i, set, items[i].observations, spec, &pf_sets[i], &scale);
        }
        note("assimilate w=" + std::to_string(w) + ": " + std::to_string(n_items) + " items (" +
             std::to_string(post_hits) + " cached), " + num(sw.seconds()) + " s");
        stages["w" + std::to_string(w)] = {{"model", model_path.filename().string()},
                                           {"model_id", mid},
                                           {"train_cached", train_hit},
                                           {"train_seconds", train_seconds},
                                           {"assimilate_cached_items", post_hits},
                                           {"assimilate_seconds", sw.seconds()}};
        report.windows.push_back(std::move(m));
    }

    double best = -std::numeric_limits<double>::infinity();
    for (const auto& m : report.windows) {
        const double v = mean_of(m.ell);
        if (v > best) {
            best = v;
            report.best_w = m.w;
        }
    }
    report.metrics = report_metrics(report);

    // outputs
    std::ostringstream metrics;
    write_metrics_csv(metrics, report.metrics);
    write_csv(out / "metrics.csv", metrics.str(), cfg);

    std::ostringstream scatter;
    scatter << std::setprecision(10) << "system,method,w,item,truth,estimate,spread\n";
    auto scatter_rows = [&](const MethodResult& m) {
        for (std::size_t i = 0; i < n_items; ++i)
            scatter << to_string(cfg.system) << ',' << m.label << ',' << m.w << ',' << i << ',' << report.truth[i]
                    << ',' << m.estimate[i] << ',' << m.spread[i] << '\n';
    };
    for (const auto& m : report.windows) scatter_rows(m);
    scatter_rows(report.pf);
    write_csv(out / "scatter.csv", scatter.str(), cfg);
    for (const auto& m : report.windows) write_csv(out / ("items_" + m.label + ".csv"), items_csv(m, report.truth), cfg);
    write_csv(out / "items_PF.csv", items_csv(report.pf, report.truth), cfg);
    write_csv(out / "items_open_loop.csv", items_csv(report.open_loop, report.truth), cfg);

    json metric_json = json::array();
    for (const auto& r : report.metrics)
        metric_json.push_back({{"w", r.w}, {"metric", r.metric}, {"mean", r.mean}, {"std", r.std}, {"n_runs", r.n_runs}});
    json summary = {{"format", "soda-summary"},
                    {"version", kResultsFormatVersion},
                    {"config_hash", hex64(report.config_hash)},
                    {"seed", cfg.seed},
                    {"system", std::string(to_string(cfg.system))},
                    {"config", cfg.to_map()},
                    {"dataset", {{"artifact", data_path.filename().string()},
                                 {"manifest_hash", hex64(data_hash)},
                                 {"normalization_mean", std::vector<double>(data.normalization.mean.begin(), data.normalization.mean.end())},
                                 {"normalization_std", std::vector<double>(scale.begin(), scale.end())}}},
                    {"best_w", report.best_w},
                    {"metrics", metric_json},
                    {"stages", stages},
                    {"seconds", total.seconds()}};
    write_text(out / "summary.json", summary.dump(2) + "\n");
    note("done in " + num(total.seconds()) + " s; results in " + out.string());
    return report;
}

}  // namespace soda
