#include "soda/dynamics.hpp"

#include <cmath>
#include <random>

namespace soda {

std::string_view to_string(SystemId id) {
    switch (id) {
        case SystemId::FHN: return "fhn";
        case SystemId::Lorenz63: return "lorenz63";
    }
    return "unknown";
}

SystemId system_from_string(std::string_view name) {
    if (name == "fhn" || name == "FHN") return SystemId::FHN;
    if (name == "lorenz63" || name == "lorenz" || name == "Lorenz63") return SystemId::Lorenz63;
    throw ConfigError("unknown system '" + std::string(name) + "'");
}

SystemSpec SystemSpec::fhn() {
    SystemSpec s;
    s.system_id = SystemId::FHN;
    s.fixed_params = {{"b", 0.2}, {"tau", 1.0}, {"I", 0.5}};
    s.free_param_name = "a";
    s.state_dim = 2;
    s.dt = 0.4;
    return s;
}

SystemSpec SystemSpec::lorenz63() {
    SystemSpec s;
    s.system_id = SystemId::Lorenz63;
    s.fixed_params = {{"sigma", 10.0}, {"beta", 8.0 / 3.0}};
    s.free_param_name = "rho";
    s.state_dim = 3;
    s.dt = 0.05;
    return s;
}

SystemSpec SystemSpec::for_system(SystemId id) { return id == SystemId::FHN ? fhn() : lorenz63(); }

double SystemSpec::param(const std::string& name) const {
    auto it = fixed_params.find(name);
    if (it == fixed_params.end()) throw ContractViolation("system has no fixed parameter '" + name + "'");
    return it->second;
}

void SystemSpec::validate() const {
    require(dt > 0.0 && std::isfinite(dt), "dt must be positive");
    const int expected = system_id == SystemId::FHN ? 2 : 3;
    require(state_dim == expected, "state_dim does not match the system");
    if (system_id == SystemId::FHN) {
        require(param("tau") != 0.0, "FHN tau must be nonzero");
        param("b");
        param("I");
    } else {
        param("sigma");
        param("beta");
    }
}

ParameterPrior ParameterPrior::uniform(double lo, double hi) {
    require(std::isfinite(lo) && std::isfinite(hi) && lo < hi, "uniform prior requires lo < hi");
    return {Kind::Uniform, lo, hi};
}

ParameterPrior ParameterPrior::gaussian(double mean, double std) {
    require(std::isfinite(mean) && std::isfinite(std) && std > 0.0, "gaussian prior requires std > 0");
    return {Kind::Gaussian, mean, std};
}

ParameterPrior ParameterPrior::default_for(SystemId id) {
    return id == SystemId::FHN ? uniform(0.0, 1.0) : gaussian(28.0, 4.0);
}

double ParameterPrior::mean() const { return kind_ == Kind::Uniform ? 0.5 * (p1_ + p2_) : p1_; }

double ParameterPrior::stddev() const { return kind_ == Kind::Uniform ? (p2_ - p1_) / std::sqrt(12.0) : p2_; }

namespace {

void check_state(const SystemSpec& spec, const State& state) {
    if (state.size() != spec.state_dim)
        throw ContractViolation("state has dimension " + std::to_string(state.size()) + ", system expects " +
                                std::to_string(spec.state_dim));
}

}  // namespace

State derivative(const SystemSpec& spec, const State& state, double theta) {
    check_state(spec, state);
    if (!state.allFinite() || !std::isfinite(theta)) throw NumericInputError("non-finite state or parameter");
    State out(spec.state_dim);
    if (spec.system_id == SystemId::FHN) {
        const double u = state[0], v = state[1];
        const double b = spec.param("b"), tau = spec.param("tau"), I = spec.param("I");
        out[0] = u - u * u * u / 3.0 - v + I;
        out[1] = (u + theta - b * v) / tau;
    } else {
        const double x = state[0], y = state[1], z = state[2];
        const double sigma = spec.param("sigma"), beta = spec.param("beta");
        out[0] = sigma * (y - x);
        out[1] = x * (theta - z) - y;
        out[2] = x * y - beta * z;
    }
    return out;
}

State rk4_step(const SystemSpec& spec, const State& state, double theta, double dt, std::size_t step) {
    require(dt > 0.0, "rk4_step requires dt > 0");
    check_state(spec, state);
    // Intermediate stages can overflow before the result does; treat any
    // non-finite stage as divergence rather than an input error.
    auto rhs = [&](const State& s) -> State {
        if (!s.allFinite()) throw DivergenceError("non-finite RK4 stage", step);
        return derivative(spec, s, theta);
    };
    if (!state.allFinite() || !std::isfinite(theta)) throw NumericInputError("non-finite state or parameter");
    State next = rk4_advance(rhs, state, dt);
    if (!next.allFinite()) throw DivergenceError("RK4 step produced non-finite state", step);
    return next;
}

Trajectory simulate(const SystemSpec& spec, const State& x0, double theta, int T) {
    require(T >= 1, "simulate requires T >= 1");
    check_state(spec, x0);
    Trajectory traj;
    traj.dt = spec.dt;
    traj.system_id = spec.system_id;
    traj.states.resize(T, spec.state_dim);
    State x = x0;
    traj.states.row(0) = x.transpose();
    for (int t = 1; t < T; ++t) {
        x = rk4_step(spec, x, theta, spec.dt, static_cast<std::size_t>(t - 1));
        traj.states.row(t) = x.transpose();
    }
    return traj;
}

Trajectory simulate_series(const SystemSpec& spec, const State& x0, const Vector& theta_series) {
    const int T = static_cast<int>(theta_series.size());
    require(T >= 1, "simulate_series requires a nonempty parameter series");
    check_state(spec, x0);
    Trajectory traj;
    traj.dt = spec.dt;
    traj.system_id = spec.system_id;
    traj.states.resize(T, spec.state_dim);
    State x = x0;
    traj.states.row(0) = x.transpose();
    for (int t = 1; t < T; ++t) {
        x = rk4_step(spec, x, theta_series[t - 1], spec.dt, static_cast<std::size_t>(t - 1));
        traj.states.row(t) = x.transpose();
    }
    return traj;
}

State sample_initial_state(const SystemSpec& spec, double theta, Rng& rng) {
    State scale(spec.state_dim), offset(spec.state_dim);
    if (spec.system_id == SystemId::FHN) {
        scale << 1.0, 1.0;
        offset << 0.0, 0.0;
    } else {
        scale << 8.0, 8.0, 25.0;
        offset << 0.0, 0.0, 25.0;
    }
    for (int attempt = 0; attempt < kInitialStateRetries; ++attempt) {
        State x(spec.state_dim);
        for (int i = 0; i < spec.state_dim; ++i) x[i] = offset[i] + scale[i] * rng.normal();
        try {
            for (int s = 0; s < kBurnInSteps; ++s) x = rk4_step(spec, x, theta, spec.dt, static_cast<std::size_t>(s));
            return x;
        } catch (const DivergenceError&) {
        }
    }
    throw DivergenceError("burn-in diverged on every retry", kBurnInSteps);
}

double sample_parameter(const ParameterPrior& prior, Rng& rng) {
    if (prior.kind() == ParameterPrior::Kind::Uniform) {
        std::uniform_real_distribution<double> d(prior.first(), prior.second());
        return d(rng);
    }
    std::normal_distribution<double> d(prior.first(), prior.second());
    return d(rng);
}

}  // namespace soda
