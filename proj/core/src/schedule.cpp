#include "soda/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "soda/error.hpp"

namespace soda {

double NoiseSchedule::alpha_raw(double a) const { return std::cos(a * std::numbers::pi / 2.0); }

double NoiseSchedule::sigma_raw(double a) const { return std::sin(a * std::numbers::pi / 2.0); }

AlphaSigma NoiseSchedule::eval(double a) const {
    if (!(a >= 0.0 && a <= 1.0)) throw ContractViolation("diffusion time must lie in [0, 1]");
    return {alpha_raw(a), std::max(sigma_raw(a), sigma_min)};
}

Perturbed perturb(const Vector& x0, double a, const NoiseSchedule& s, Rng& rng) {
    const auto [alpha, sigma] = s.eval(a);
    Perturbed p;
    p.eps.resize(x0.size());
    for (Eigen::Index i = 0; i < x0.size(); ++i) p.eps[i] = rng.normal();
    p.xa = alpha * x0 + sigma * p.eps;
    return p;
}

Matrix tweedie_denoise(const Eigen::Ref<const Matrix>& xa, double a, const Eigen::Ref<const Matrix>& score,
                       const NoiseSchedule& s) {
    require(xa.rows() == score.rows() && xa.cols() == score.cols(), "tweedie_denoise shape mismatch");
    const auto [alpha, sigma] = s.eval(a);
    if (alpha < kTweedieAlphaFloor) throw NearSingularError("alpha(a) too small for Tweedie denoising");
    return (xa + sigma * sigma * score) / alpha;
}

}  // namespace soda
