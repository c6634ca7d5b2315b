#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "soda/config.hpp"
#include "soda/metrics.hpp"

namespace soda {

// Per-item outcomes of one inference method on the evaluation set.
struct MethodResult {
    std::string label;  // "w17", "PF" or "open_loop"
    int w = 0;          // window size; 0 for the references
    std::vector<double> estimate;  // summarize_parameter point estimate
    std::vector<double> spread;
    std::vector<double> ell;       // expected log-likelihood of the item's observations
    std::vector<double> w1;        // marginal W1 against the PF samples (normalized units)
    std::vector<double> residual;  // mean equation residual over samples
};

struct ExperimentReport {
    ExperimentConfig config;
    std::uint64_t config_hash = 0;
    std::vector<double> truth;  // theta of every evaluation item
    std::vector<MethodResult> windows;
    MethodResult pf;
    MethodResult open_loop;
    std::vector<MetricRow> metrics;
    int best_w = 0;  // highest mean ELL

    const MethodResult& window(int w) const;
};

// generate -> split -> train (per w) -> evaluation items -> assimilate -> PF
// -> open loop -> metrics. Stage artifacts are cached under cfg.cache_dir()
// by content hash, so a rerun with the same config reuses them. Writes
// metrics.csv, scatter.csv, items_<label>.csv, loss_w<w>.csv, config.cfg and
// summary.json into cfg.output. Progress lines go to `log` when given.
ExperimentReport run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

// Metric rows of a finished report (ELL, W1, RMSE_theta, corr_theta, D_eq).
std::vector<MetricRow> report_metrics(const ExperimentReport& report);

}  // namespace soda
