#pragma once

#include <span>
#include <utility>

#include "soda/dynamics.hpp"

namespace soda {

// Latent states with the unknown parameter appended as extra channels:
// row t is [x_t | theta_t].
struct AugmentedTrajectory {
    RowMatrix states;  // T x (dx + d_theta)
    double dt = 0.0;
    SystemId system_id = SystemId::Lorenz63;
    int d_theta = 1;

    int length() const { return static_cast<int>(states.rows()); }
    int channels() const { return static_cast<int>(states.cols()); }
    int state_dim() const { return channels() - d_theta; }
};

struct JitterConfig {
    bool enabled = false;
    double std = 0.0;  // per-step random-walk std of the parameter channel
};

// Embeds a constant parameter into a pre-simulated trajectory. A jitter with
// nonzero std needs the dynamics re-driven; use the SystemSpec overload.
AugmentedTrajectory augment(const Trajectory& traj, double theta, const JitterConfig& jitter, Rng& rng);

// Simulates x under the (possibly random-walk) parameter and embeds it:
// theta_0 = theta, theta_{t+1} = theta_t + eps_t, x_{t+1} from x_t and theta_t.
AugmentedTrajectory augment(const SystemSpec& spec, const State& x0, double theta, int T, const JitterConfig& jitter,
                            Rng& rng);

std::pair<Trajectory, Vector> split(const AugmentedTrajectory& z);

struct ParameterSummary {
    double point_estimate;
    double spread;
};

// Mean and population std over every (sample, time) value.
ParameterSummary summarize_parameter(std::span<const Vector> samples);

}  // namespace soda
