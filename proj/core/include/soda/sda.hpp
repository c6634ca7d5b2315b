#pragma once

#include <string>
#include <vector>

#include "soda/augment.hpp"
#include "soda/diffusion.hpp"
#include "soda/observe.hpp"

namespace soda {

// Stride-1 composition of window scores over a longer trajectory.
struct CompositionConfig {
    // Window that supplies coordinate t: the one where t is most central,
    // ties toward the earlier window, clamped to the first/last window.
    static int owner_window(int t, int T, int w);
};

struct GuidanceConfig {
    // Observation variance is inflated by inflation * (sigma / alpha)^2,
    // measured in normalized units of the observed channel.
    double inflation = 0.1;
    double scale = 1.0;
    // Below this diffusion time the raw observation variance is used.
    double a_min = 1e-3;
    // false: treat the denoiser Jacobian as 1 / alpha (no VJP through the network).
    bool full_jacobian = true;

    void validate() const;
};

// Full-trajectory score assembled from stride-1 windows. z_a is T x d_z in
// normalized coordinates. A single window (T == w) may have any w >= 1;
// otherwise w >= 3 is required.
RowMatrix composed_score(const WindowScoreModel& model, const Eigen::Ref<const RowMatrix>& z_a, double a);

// composed score + scale * grad log N(y | A(x0_hat(z_a)), sigma_obs^2 + inflation (sigma/alpha)^2)
// where x0_hat is Tweedie denoising through the composed score. Observations
// are in physical units; the normalization of `model` maps between the two.
RowMatrix guidance_score(const WindowScoreModel& model, const Eigen::Ref<const RowMatrix>& z_a, double a,
                         const ObservationSeries& y, const NoiseSchedule& schedule, const GuidanceConfig& g);

struct PosteriorSampleSet {
    std::vector<AugmentedTrajectory> samples;
    std::string model_id;
    std::string observation_id;
    std::string sampler_config;
    std::uint64_t seed = 0;

    int n_samples() const { return static_cast<int>(samples.size()); }
    int length() const { return samples.empty() ? 0 : samples.front().length(); }
    int channels() const { return samples.empty() ? 0 : samples.front().channels(); }
    void validate() const;
    std::vector<Vector> parameter_series() const;
};

struct AssimilationRequest {
    int horizon = 65;
    int n_samples = 16;
    SamplerConfig sampler;
    GuidanceConfig guidance;
    int threads = 1;
    SystemId system_id = SystemId::Lorenz63;
    double dt = 0.05;
};

// Conditional reverse diffusion over the whole T x d_z augmented trajectory;
// sample j uses stream j of `seed`, so results do not depend on `threads`.
// Returned samples are in physical units.
PosteriorSampleSet assimilate(const WindowScoreModel& model, const NoiseSchedule& schedule, const ObservationSeries& y,
                              const AssimilationRequest& request, std::uint64_t seed);

}  // namespace soda
