#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "soda/sda.hpp"

namespace soda {

// Mean over samples of log p(y | x) on the x-channel.
double expected_log_likelihood(const PosteriorSampleSet& samples, const ObservationSeries& y);

// Exact 1-D empirical W1 between two sample sets (integral of the absolute
// difference of the two quantile step functions).
double wasserstein1(std::vector<double> a, std::vector<double> b);

// W1 per (time, channel) averaged over all pairs. Channels are divided by
// `scale` (e.g. normalization stds) when given.
double wasserstein1_marginal(const PosteriorSampleSet& A, const PosteriorSampleSet& B, const Vector* scale = nullptr);

// Alternative: W1 of random 1-D projections of whole flattened trajectories.
double sliced_wasserstein1(const PosteriorSampleSet& A, const PosteriorSampleSet& B, int projections,
                           std::uint64_t seed, const Vector* scale = nullptr);

double rmse(std::span<const double> estimates, std::span<const double> truths);

// Mean over t of ||x_{t+1} - rk4_step(x_t, theta_t, dt)||^2; 0 when T = 1, +inf when a step
// overflows or the sample is non-finite.
double equation_residual(const AugmentedTrajectory& sample, const SystemSpec& spec);

double pearson(std::span<const double> x, std::span<const double> y);

// One-sided exact sign test: P(X >= successes), X ~ Binomial(n, 1/2).
double sign_test_p_value(int successes, int n);

struct MetricRow {
    std::string system;
    std::string w;  // window size, or a reference label such as "PF"
    std::string metric;
    double mean = 0.0;
    double std = 0.0;
    int n_runs = 0;
};

MetricRow summarize_metric(std::string system, std::string w, std::string metric, std::span<const double> values);

// CSV with header system,w,metric,mean,std,n_runs.
void write_metrics_csv(std::ostream& os, std::span<const MetricRow> rows);

}  // namespace soda
