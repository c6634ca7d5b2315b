#pragma once

#include <vector>

#include "soda/dynamics.hpp"

namespace soda {

// Linear component-selecting observation with isotropic Gaussian noise,
// taken every `stride` steps starting at index 0.
struct ObservationModel {
    std::vector<int> observed_components{0};
    int stride = 8;
    double noise_std = 0.05;

    static ObservationModel default_for(SystemId id);
    void validate(int state_dim) const;
    int obs_dim() const { return static_cast<int>(observed_components.size()); }
};

struct ObservationSeries {
    std::vector<int> times;  // strictly ascending trajectory indices
    RowMatrix values;        // |times| x d_y
    ObservationModel model;

    bool empty() const { return times.empty(); }
    std::size_t size() const { return times.size(); }
};

ObservationSeries observe(const Trajectory& traj, const ObservationModel& model, Rng& rng);

// Exact Gaussian log-density of y given the rows of `states`. Only the
// observed components are read, so augmented states can be passed as is.
double log_likelihood(const ObservationSeries& y, const Eigen::Ref<const RowMatrix>& states);
double log_likelihood(const ObservationSeries& y, const Trajectory& traj);

}  // namespace soda
