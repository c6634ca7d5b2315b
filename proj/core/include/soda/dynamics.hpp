#pragma once

#include <map>
#include <string>
#include <string_view>

#include "soda/error.hpp"
#include "soda/linalg.hpp"
#include "soda/random.hpp"

namespace soda {

enum class SystemId { FHN, Lorenz63 };

std::string_view to_string(SystemId id);
SystemId system_from_string(std::string_view name);

// One ODE system with all but one parameter fixed.
struct SystemSpec {
    SystemId system_id = SystemId::Lorenz63;
    std::map<std::string, double> fixed_params;
    std::string free_param_name;
    int state_dim = 3;
    double dt = 0.05;

    // FitzHugh-Nagumo: b = 0.2, tau = 1.0, I = 0.5, free parameter a, dt = 0.4.
    static SystemSpec fhn();
    // Lorenz-63: sigma = 10, beta = 8/3, free parameter rho, dt = 0.05.
    static SystemSpec lorenz63();
    static SystemSpec for_system(SystemId id);

    double param(const std::string& name) const;
    void validate() const;
};

class ParameterPrior {
public:
    enum class Kind { Uniform, Gaussian };

    static ParameterPrior uniform(double lo, double hi);
    static ParameterPrior gaussian(double mean, double std);
    // Uniform(0, 1) for FHN, N(28, 4^2) for Lorenz-63.
    static ParameterPrior default_for(SystemId id);

    Kind kind() const { return kind_; }
    double first() const { return p1_; }
    double second() const { return p2_; }
    double mean() const;
    double stddev() const;

private:
    ParameterPrior(Kind k, double p1, double p2) : kind_(k), p1_(p1), p2_(p2) {}
    Kind kind_;
    double p1_, p2_;
};

struct Trajectory {
    RowMatrix states;  // T x d
    double dt = 0.0;
    SystemId system_id = SystemId::Lorenz63;

    int length() const { return static_cast<int>(states.rows()); }
    int dim() const { return static_cast<int>(states.cols()); }
};

// Right-hand side of the ODE at `state` with free parameter `theta`.
State derivative(const SystemSpec& spec, const State& state, double theta);

// Classical fourth-order Runge-Kutta step for any right-hand side.
template <class Rhs>
State rk4_advance(Rhs&& rhs, const State& x, double dt) {
    const State k1 = rhs(x);
    const State k2 = rhs(State(x + 0.5 * dt * k1));
    const State k3 = rhs(State(x + 0.5 * dt * k2));
    const State k4 = rhs(State(x + dt * k3));
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Throws DivergenceError(step) when the result is not finite.
State rk4_step(const SystemSpec& spec, const State& state, double theta, double dt, std::size_t step = 0);

// states[0] = x0, states[t+1] = rk4_step(states[t]).
Trajectory simulate(const SystemSpec& spec, const State& x0, double theta, int T);

// Same, with a time-varying parameter: states[t+1] uses theta_series[t].
Trajectory simulate_series(const SystemSpec& spec, const State& x0, const Vector& theta_series);

// Draws a standard-normal seed point placed near the attractor and runs a
// 256-step burn-in; retries up to 8 times on divergence.
State sample_initial_state(const SystemSpec& spec, double theta, Rng& rng);

double sample_parameter(const ParameterPrior& prior, Rng& rng);

inline constexpr int kBurnInSteps = 256;
inline constexpr int kInitialStateRetries = 8;

}  // namespace soda
