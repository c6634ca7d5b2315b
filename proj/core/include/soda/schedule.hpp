#pragma once

#include <string_view>
#include <utility>

#include "soda/linalg.hpp"
#include "soda/random.hpp"

namespace soda {

struct AlphaSigma {
    double alpha;
    double sigma;
};

// Variance-preserving cosine schedule on a in [0, 1]:
// alpha(a) = cos(a pi / 2), sigma(a) = sin(a pi / 2), sigma floored at sigma_min.
struct NoiseSchedule {
    double sigma_min = 1e-3;

    static constexpr std::string_view id() { return "cosine-vp"; }

    double alpha_raw(double a) const;
    double sigma_raw(double a) const;

    // Clamped pair; throws ContractViolation outside [0, 1].
    AlphaSigma eval(double a) const;
};

struct Perturbed {
    Vector xa;
    Vector eps;
};

// xa = alpha(a) x0 + sigma(a) eps with eps ~ N(0, I).
Perturbed perturb(const Vector& x0, double a, const NoiseSchedule& s, Rng& rng);

// Posterior mean of the clean sample: (xa + sigma^2 score) / alpha.
// Throws NearSingularError when alpha(a) < 1e-6.
Matrix tweedie_denoise(const Eigen::Ref<const Matrix>& xa, double a, const Eigen::Ref<const Matrix>& score,
                       const NoiseSchedule& s);

inline constexpr double kTweedieAlphaFloor = 1e-6;

}  // namespace soda
