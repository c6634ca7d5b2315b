#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "soda/score_network.hpp"

namespace soda {

// Supplies normalized training windows, flattened time-major.
class WindowSource {
public:
    virtual ~WindowSource() = default;
    virtual int window() const = 0;
    virtual int channels() const = 0;
    virtual const Normalization& normalization() const = 0;
    virtual void sample(Rng& rng, double* out) const = 0;

    int flat_size() const { return window() * channels(); }
};

// One denoising score matching minibatch; column b is one example.
struct DsmBatch {
    Matrix x0;
    Matrix eps;
    Matrix xa;
    std::vector<double> a;

    Eigen::Index size() const { return x0.cols(); }
};

// Draws a ~ U[0, 1] and eps ~ N(0, I) for every column of x0.
DsmBatch make_dsm_batch(Matrix x0, const NoiseSchedule& s, Rng& rng);
// Same with a fixed diffusion time.
DsmBatch make_dsm_batch(Matrix x0, double a, const NoiseSchedule& s, Rng& rng);

// Mean over batch and coordinates of ||eps_hat - eps||^2, which equals the
// sigma^2-weighted score matching loss ||s + eps / sigma||^2 sigma^2.
double dsm_loss_from_prediction(const Eigen::Ref<const Matrix>& eps_hat, const Eigen::Ref<const Matrix>& eps);
double dsm_loss(const ScoreNetwork& net, const DsmBatch& batch);

struct LossAndGradient {
    double loss;
    Vector grad;
};

// Exact reverse-mode gradient of dsm_loss w.r.t. the parameters. Throws
// DivergenceError when the loss is not finite.
LossAndGradient net_gradients(const ScoreNetwork& net, const DsmBatch& batch);

struct TrainConfig {
    int batch_size = 256;
    int steps = 20000;
    double learning_rate = 2e-4;  // cosine-decayed to zero
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double ema_decay = 0.999;
    double grad_clip = 0.0;  // global-norm clip; 0 disables
    int log_every = 100;
    int validation_windows = 512;
    std::uint64_t seed = 0;

    void validate() const;
};

struct LossPoint {
    int step;
    double train_loss;                     // mean over the interval
    std::optional<double> validation_loss;  // EMA weights on the held-out set
};

struct TrainResult {
    ScoreNetwork network;  // EMA weights, best validation checkpoint when validation data is given
    std::vector<LossPoint> loss_curve;
    int best_step = 0;
};

TrainResult train(const WindowSource& data, const WindowSource* validation, const NetworkArchitecture& shape,
                  const TrainConfig& config, const NoiseSchedule& schedule);

// Scores of a batch of flat states (dim x B) at diffusion time a.
using BatchScoreFn = std::function<void(const Matrix& x, double a, Matrix& score)>;

struct SamplerConfig {
    int steps = 256;
    int corrector_steps = 1;
    double corrector_r = 0.1;  // Langevin step r sigma(a)^2
    double a_start = 0.995;    // alpha(a_start) ~ 7.9e-3

    void validate() const;
};

// Reverse diffusion from N(0, I) at a_start down to a = 0: a DDIM-style
// exponential-integrator predictor on (alpha, sigma) followed by
// `corrector_steps` Langevin corrections per step. Returns dim x batch.
Matrix reverse_sample(const BatchScoreFn& score, int dim, int batch, const SamplerConfig& cfg,
                      const NoiseSchedule& schedule, Rng& rng);

}  // namespace soda
