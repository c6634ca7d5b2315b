#include "soda/observe.hpp"

#include <cmath>
#include <numbers>

namespace soda {

ObservationModel ObservationModel::default_for(SystemId) { return ObservationModel{}; }

void ObservationModel::validate(int state_dim) const {
    require(stride >= 1, "observation stride must be >= 1");
    require(noise_std > 0.0 && std::isfinite(noise_std), "observation noise_std must be > 0");
    require(!observed_components.empty(), "observation model selects no components");
    for (int c : observed_components)
        require(c >= 0 && c < state_dim, "observed component " + std::to_string(c) + " outside the state");
}

ObservationSeries observe(const Trajectory& traj, const ObservationModel& model, Rng& rng) {
    require(traj.length() >= 1, "observe requires a nonempty trajectory");
    model.validate(traj.dim());
    ObservationSeries y;
    y.model = model;
    for (int t = 0; t < traj.length(); t += model.stride) y.times.push_back(t);
    y.values.resize(static_cast<Eigen::Index>(y.times.size()), model.obs_dim());
    for (std::size_t i = 0; i < y.times.size(); ++i)
        for (int j = 0; j < model.obs_dim(); ++j)
            y.values(i, j) = traj.states(y.times[i], model.observed_components[j]) + model.noise_std * rng.normal();
    return y;
}

double log_likelihood(const ObservationSeries& y, const Eigen::Ref<const RowMatrix>& states) {
    const double var = y.model.noise_std * y.model.noise_std;
    const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * var);
    double total = 0.0;
    for (std::size_t i = 0; i < y.times.size(); ++i) {
        const int t = y.times[i];
        if (t < 0 || t >= states.rows()) throw ContractViolation("observation time " + std::to_string(t) + " outside trajectory");
        for (int j = 0; j < y.model.obs_dim(); ++j) {
            const int c = y.model.observed_components[j];
            if (c >= states.cols()) throw ContractViolation("observed component outside state");
            const double r = y.values(i, j) - states(t, c);
            total += log_norm - 0.5 * r * r / var;
        }
    }
    return total;
}

double log_likelihood(const ObservationSeries& y, const Trajectory& traj) { return log_likelihood(y, traj.states); }

}  // namespace soda
