#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "soda/observe.hpp"
#include "soda/sda.hpp"

namespace soda {

struct PFConfig {
    int n_particles = 1 << 14;
    double jitter_std = 0.25;  // random walk of the parameter channel, per step
    double resample_fraction = 0.5;  // resample when ESS < fraction * N
    std::uint64_t seed = 0;
    int threads = 1;

    // 0.01 for FHN's a, 0.25 for Lorenz-63's rho.
    static PFConfig default_for(SystemId id);
    void validate() const;
};

// Bootstrap filter state over augmented particles [x | theta].
struct ParticleEnsemble {
    RowMatrix particles;  // N x d_z, after the last update
    Vector weights;       // normalized
    // States of every particle at every step, before that step's resampling.
    std::vector<RowMatrix> history;
    // One entry per processed observation: ancestor of each post-update
    // particle (identity when no resampling happened).
    std::vector<std::vector<std::int32_t>> genealogy;
    std::vector<int> observation_times;
    std::vector<bool> resampled;
    std::vector<double> ess_trace;
    SystemId system_id = SystemId::Lorenz63;
    double dt = 0.05;

    int size() const { return static_cast<int>(particles.rows()); }
    int horizon() const { return static_cast<int>(history.size()); }

    // Full path of post-update particle i, traced through the genealogy.
    AugmentedTrajectory trace_path(int i) const;
    // n paths drawn by systematic resampling of the final weights.
    PosteriorSampleSet sample_paths(int n, Rng& rng) const;
};

// Positions (i + u) / N through the cumulative weights; output ascending.
// Throws ContractViolation unless |sum(w) - 1| <= 1e-9 and u in [0, 1).
std::vector<std::int32_t> systematic_resample(std::span<const double> weights, double u);

double ess(std::span<const double> weights);

// Runs the self-organizing bootstrap filter for `horizon` steps (defaults to
// the last observation time + 1).
ParticleEnsemble run_pf(const SystemSpec& spec, const ParameterPrior& prior, const ObservationModel& obs_model,
                        const ObservationSeries& y, const PFConfig& cfg, int horizon = 0);

// Free-running trajectories from the prior: theta ~ prior, x0 from
// sample_initial_state, no conditioning. Baseline for the filter.
PosteriorSampleSet open_loop_samples(const SystemSpec& spec, const ParameterPrior& prior, int horizon, int n,
                                     std::uint64_t seed);

}  // namespace soda
