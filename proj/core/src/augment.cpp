#include "soda/augment.hpp"

#include <cmath>

namespace soda {

namespace {

void check_jitter(const JitterConfig& jitter) {
    if (!(jitter.std >= 0.0) || !std::isfinite(jitter.std)) throw ContractViolation("jitter std must be >= 0");
}

Vector parameter_walk(double theta, int T, const JitterConfig& jitter, Rng& rng) {
    Vector series(T);
    series[0] = theta;
    const bool walk = jitter.enabled && jitter.std > 0.0;
    for (int t = 1; t < T; ++t) series[t] = walk ? series[t - 1] + jitter.std * rng.normal() : theta;
    return series;
}

AugmentedTrajectory embed(const Trajectory& traj, const Vector& series) {
    AugmentedTrajectory z;
    z.dt = traj.dt;
    z.system_id = traj.system_id;
    z.d_theta = 1;
    z.states.resize(traj.length(), traj.dim() + 1);
    z.states.leftCols(traj.dim()) = traj.states;
    z.states.col(traj.dim()) = series;
    return z;
}

}  // namespace

AugmentedTrajectory augment(const Trajectory& traj, double theta, const JitterConfig& jitter, Rng& rng) {
    check_jitter(jitter);
    require(traj.length() >= 1, "augment requires a nonempty trajectory");
    if (!traj.states.allFinite() || !std::isfinite(theta)) throw NumericInputError("augment requires finite input");
    if (jitter.enabled && jitter.std > 0.0)
        throw ContractViolation("a jittered parameter must drive the simulation; pass the SystemSpec");
    return embed(traj, parameter_walk(theta, traj.length(), jitter, rng));
}

AugmentedTrajectory augment(const SystemSpec& spec, const State& x0, double theta, int T, const JitterConfig& jitter,
                            Rng& rng) {
    check_jitter(jitter);
    require(T >= 1, "augment requires T >= 1");
    const Vector series = parameter_walk(theta, T, jitter, rng);
    return embed(simulate_series(spec, x0, series), series);
}

std::pair<Trajectory, Vector> split(const AugmentedTrajectory& z) {
    Trajectory x;
    x.dt = z.dt;
    x.system_id = z.system_id;
    x.states = z.states.leftCols(z.state_dim());
    Vector theta = z.states.col(z.state_dim());
    return {std::move(x), std::move(theta)};
}

ParameterSummary summarize_parameter(std::span<const Vector> samples) {
    require(!samples.empty(), "summarize_parameter needs at least one sample");
    double sum = 0.0;
    long count = 0;
    for (const auto& s : samples) {
        sum += s.sum();
        count += s.size();
    }
    require(count > 0, "summarize_parameter needs nonempty series");
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (const auto& s : samples) ss += (s.array() - mean).square().sum();
    return {mean, std::sqrt(ss / static_cast<double>(count))};
}

}  // namespace soda
