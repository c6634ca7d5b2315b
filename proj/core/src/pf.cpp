#include "soda/pf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "soda/error.hpp"
#include "soda/parallel.hpp"

namespace soda {

PFConfig PFConfig::default_for(SystemId id) {
    PFConfig c;
    c.jitter_std = id == SystemId::FHN ? 0.01 : 0.25;
    return c;
}

void PFConfig::validate() const {
    require(n_particles >= 2, "particle filter needs N >= 2");
    require(jitter_std > 0.0, "particle filter jitter std must be > 0");
    require(resample_fraction > 0.0 && resample_fraction <= 1.0, "resample fraction must lie in (0, 1]");
}

std::vector<std::int32_t> systematic_resample(std::span<const double> weights, double u) {
    const std::size_t N = weights.size();
    require(N > 0, "systematic_resample needs weights");
    require(u >= 0.0 && u < 1.0, "systematic_resample offset must lie in [0, 1)");
    double total = 0.0;
    for (double w : weights) {
        require(w >= 0.0, "weights must be nonnegative");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ContractViolation("weights are not normalized");

    std::vector<std::int32_t> out(N);
    std::size_t k = 0;
    double cumulative = weights[0];
    for (std::size_t i = 0; i < N; ++i) {
        const double position = (static_cast<double>(i) + u) / static_cast<double>(N);
        while (position >= cumulative && k + 1 < N) cumulative += weights[++k];
        // Rounding can leave the tail of the cumulative sum just below 1;
        // never land on a zero-weight particle.
        std::size_t pick = k;
        while (weights[pick] == 0.0 && pick > 0) --pick;
        out[i] = static_cast<std::int32_t>(pick);
    }
    return out;
}

double ess(std::span<const double> weights) {
    double s = 0.0;
    for (double w : weights) s += w * w;
    require(s > 0.0, "ess of all-zero weights");
    return 1.0 / s;
}

AugmentedTrajectory ParticleEnsemble::trace_path(int i) const {
    require(i >= 0 && i < size(), "particle index out of range");
    const int T = horizon();
    AugmentedTrajectory path;
    path.system_id = system_id;
    path.dt = dt;
    path.d_theta = 1;
    path.states.resize(T, particles.cols());
    std::size_t event = genealogy.size();
    std::int32_t idx = i;
    for (int t = T - 1; t >= 0; --t) {
        if (event > 0 && observation_times[event - 1] == t) {
            --event;
            idx = genealogy[event][static_cast<std::size_t>(idx)];
        }
        path.states.row(t) = history[static_cast<std::size_t>(t)].row(idx);
    }
    return path;
}

PosteriorSampleSet ParticleEnsemble::sample_paths(int n, Rng& rng) const {
    require(n >= 1, "sample_paths needs n >= 1");
    // Resample the final weights down to n paths.
    std::vector<double> cdf(weights.data(), weights.data() + weights.size());
    std::partial_sum(cdf.begin(), cdf.end(), cdf.begin());
    PosteriorSampleSet set;
    const double u = rng.uniform();
    for (int j = 0; j < n; ++j) {
        const double pos = (j + u) / n * cdf.back();
        auto it = std::upper_bound(cdf.begin(), cdf.end(), pos);
        const int idx = static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(), size() - 1));
        set.samples.push_back(trace_path(idx));
    }
    set.model_id = "particle-filter";
    return set;
}

ParticleEnsemble run_pf(const SystemSpec& spec, const ParameterPrior& prior, const ObservationModel& obs_model,
                        const ObservationSeries& y, const PFConfig& cfg, int horizon) {
    cfg.validate();
    spec.validate();
    obs_model.validate(spec.state_dim);
    const int T = horizon > 0 ? horizon : (y.empty() ? 0 : y.times.back() + 1);
    require(T >= 1, "particle filter needs a horizon or observations");
    for (std::size_t i = 0; i < y.times.size(); ++i) {
        require(y.times[i] >= 0 && y.times[i] < T, "observation time outside the horizon");
        require(i == 0 || y.times[i] > y.times[i - 1], "observation times must be strictly ascending");
    }

    const int N = cfg.n_particles;
    const int dx = spec.state_dim;
    const int dz = dx + 1;
    ParticleEnsemble ens;
    ens.system_id = spec.system_id;
    ens.dt = spec.dt;
    ens.particles.resize(N, dz);
    ens.weights = Vector::Constant(N, 1.0 / N);

    parallel_for(static_cast<std::size_t>(N), cfg.threads, [&](std::size_t i) {
        Rng rng(derive_seed(cfg.seed, {0, i}));
        const double theta = sample_parameter(prior, rng);
        const State x0 = sample_initial_state(spec, theta, rng);
        ens.particles.row(static_cast<Eigen::Index>(i)).head(dx) = x0.transpose();
        ens.particles(static_cast<Eigen::Index>(i), dx) = theta;
    });

    Vector log_w = Vector::Zero(N);
    std::size_t next_obs = 0;
    Rng resample_rng(derive_seed(cfg.seed, {2}));
    const double var = obs_model.noise_std * obs_model.noise_std;

    for (int t = 0; t < T; ++t) {
        if (t > 0) {
            parallel_for(static_cast<std::size_t>(N), cfg.threads, [&](std::size_t i) {
                const auto row = static_cast<Eigen::Index>(i);
                const double theta = ens.particles(row, dx);
                State x = ens.particles.row(row).head(dx).transpose();
                x = rk4_step(spec, x, theta, spec.dt, static_cast<std::size_t>(t - 1));
                Rng rng(derive_seed(cfg.seed, {1, static_cast<std::uint64_t>(t), i}));
                ens.particles.row(row).head(dx) = x.transpose();
                ens.particles(row, dx) = theta + cfg.jitter_std * rng.normal();
            });
        }
        ens.history.push_back(ens.particles);

        if (next_obs < y.times.size() && y.times[next_obs] == t) {
            const std::size_t obs_index = next_obs++;
            for (int i = 0; i < N; ++i) {
                double ll = 0.0;
                for (int j = 0; j < obs_model.obs_dim(); ++j) {
                    const double r = y.values(static_cast<Eigen::Index>(obs_index), j) -
                                     ens.particles(i, obs_model.observed_components[j]);
                    ll -= 0.5 * r * r / var;
                }
                log_w[i] += ll;
            }
            const double max_lw = log_w.maxCoeff();
            if (!std::isfinite(max_lw)) throw DegenerateFilterError("all particle weights vanished", obs_index);
            ens.weights = (log_w.array() - max_lw).exp();
            ens.weights /= ens.weights.sum();
            const double e = ess({ens.weights.data(), static_cast<std::size_t>(N)});
            ens.ess_trace.push_back(e);
            ens.observation_times.push_back(t);

            std::vector<std::int32_t> ancestors(static_cast<std::size_t>(N));
            if (e < cfg.resample_fraction * N) {
                ancestors = systematic_resample({ens.weights.data(), static_cast<std::size_t>(N)}, resample_rng.uniform());
                RowMatrix next(N, dz);
                for (int i = 0; i < N; ++i) next.row(i) = ens.particles.row(ancestors[static_cast<std::size_t>(i)]);
                ens.particles = std::move(next);
                ens.weights.setConstant(1.0 / N);
                log_w.setZero();
                ens.resampled.push_back(true);
            } else {
                std::iota(ancestors.begin(), ancestors.end(), 0);
                log_w = ens.weights.array().log();
                ens.resampled.push_back(false);
            }
            ens.genealogy.push_back(std::move(ancestors));
        }
    }
    return ens;
}

PosteriorSampleSet open_loop_samples(const SystemSpec& spec, const ParameterPrior& prior, int horizon, int n,
                                     std::uint64_t seed) {
    require(horizon >= 1 && n >= 1, "open_loop_samples needs positive sizes");
    PosteriorSampleSet set;
    set.model_id = "open-loop-prior";
    set.seed = seed;
    for (int j = 0; j < n; ++j) {
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(j)}));
        const double theta = sample_parameter(prior, rng);
        const State x0 = sample_initial_state(spec, theta, rng);
        const Trajectory traj = simulate(spec, x0, theta, horizon);
        AugmentedTrajectory z;
        z.system_id = spec.system_id;
        z.dt = spec.dt;
        z.states.resize(horizon, spec.state_dim + 1);
        z.states.leftCols(spec.state_dim) = traj.states;
        z.states.col(spec.state_dim).setConstant(theta);
        set.samples.push_back(std::move(z));
    }
    return set;
}

}  // namespace soda
