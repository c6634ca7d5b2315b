#include "soda/diffusion.hpp"

#include <cmath>
#include <numbers>

#include "soda/error.hpp"

namespace soda {

namespace {

void fill_normal(Matrix& m, Rng& rng) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
}

}  // namespace

DsmBatch make_dsm_batch(Matrix x0, const NoiseSchedule& s, Rng& rng) {
    DsmBatch b;
    b.a.resize(static_cast<std::size_t>(x0.cols()));
    for (auto& a : b.a) a = rng.uniform();
    b.eps.resize(x0.rows(), x0.cols());
    fill_normal(b.eps, rng);
    b.xa.resize(x0.rows(), x0.cols());
    for (Eigen::Index c = 0; c < x0.cols(); ++c) {
        const auto [alpha, sigma] = s.eval(b.a[c]);
        b.xa.col(c) = alpha * x0.col(c) + sigma * b.eps.col(c);
    }
    b.x0 = std::move(x0);
    return b;
}

DsmBatch make_dsm_batch(Matrix x0, double a, const NoiseSchedule& s, Rng& rng) {
    DsmBatch b;
    b.a.assign(static_cast<std::size_t>(x0.cols()), a);
    b.eps.resize(x0.rows(), x0.cols());
    fill_normal(b.eps, rng);
    const auto [alpha, sigma] = s.eval(a);
    b.xa = alpha * x0 + sigma * b.eps;
    b.x0 = std::move(x0);
    return b;
}

double dsm_loss_from_prediction(const Eigen::Ref<const Matrix>& eps_hat, const Eigen::Ref<const Matrix>& eps) {
    require(eps_hat.rows() == eps.rows() && eps_hat.cols() == eps.cols() && eps.size() > 0, "dsm loss shape mismatch");
    return (eps_hat - eps).squaredNorm() / static_cast<double>(eps.size());
}

double dsm_loss(const ScoreNetwork& net, const DsmBatch& batch) {
    ScoreNetwork::Tape tape;
    net.predict_noise(batch.xa, batch.a, tape);
    return dsm_loss_from_prediction(tape.output, batch.eps);
}

LossAndGradient net_gradients(const ScoreNetwork& net, const DsmBatch& batch) {
    require(batch.size() > 0, "net_gradients needs a nonempty batch");
    ScoreNetwork::Tape tape;
    net.predict_noise(batch.xa, batch.a, tape);
    const double loss = dsm_loss_from_prediction(tape.output, batch.eps);
    if (!std::isfinite(loss)) throw DivergenceError("non-finite DSM loss", 0);
    const Matrix d_eps = (tape.output - batch.eps) * (2.0 / static_cast<double>(batch.eps.size()));
    LossAndGradient out{loss, Vector::Zero(net.parameters().size())};
    net.backward_noise(tape, d_eps, &out.grad, nullptr);
    return out;
}

void TrainConfig::validate() const {
    require(batch_size >= 1, "batch_size must be >= 1");
    require(steps >= 1, "steps must be >= 1");
    require(learning_rate > 0.0, "learning_rate must be > 0");
    require(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0, "Adam betas must lie in (0, 1)");
    require(adam_eps > 0.0, "adam_eps must be > 0");
    require(ema_decay > 0.0 && ema_decay < 1.0, "ema_decay must lie in (0, 1)");
    require(grad_clip >= 0.0, "grad_clip must be >= 0");
    require(log_every >= 1, "log_every must be >= 1");
    require(validation_windows >= 1, "validation_windows must be >= 1");
}

TrainResult train(const WindowSource& data, const WindowSource* validation, const NetworkArchitecture& shape,
                  const TrainConfig& config, const NoiseSchedule& schedule) {
    config.validate();
    NetworkArchitecture arch = shape;
    arch.window = data.window();
    arch.channels = data.channels();
    if (validation)
        require(validation->window() == data.window() && validation->channels() == data.channels(),
                "validation windows differ in shape from training windows");

    Rng rng(config.seed);
    ScoreNetwork net(arch, data.normalization(), schedule, derive_seed(config.seed, {1}));
    Vector ema = net.parameters();
    Vector m = Vector::Zero(ema.size());
    Vector v = Vector::Zero(ema.size());

    std::optional<DsmBatch> val_batch;
    if (validation) {
        Rng vrng(derive_seed(config.seed, {2}));
        Matrix x0(validation->flat_size(), config.validation_windows);
        for (Eigen::Index c = 0; c < x0.cols(); ++c) validation->sample(vrng, x0.col(c).data());
        val_batch = make_dsm_batch(std::move(x0), schedule, vrng);
    }

    TrainResult result{net, {}, 0};
    double best_val = std::numeric_limits<double>::infinity();
    double interval_loss = 0.0;
    int interval_count = 0;
    Matrix x0(data.flat_size(), config.batch_size);

    for (int step = 1; step <= config.steps; ++step) {
        for (Eigen::Index c = 0; c < x0.cols(); ++c) data.sample(rng, x0.col(c).data());
        const DsmBatch batch = make_dsm_batch(x0, schedule, rng);
        LossAndGradient lg;
        try {
            lg = net_gradients(net, batch);
        } catch (const DivergenceError&) {
            throw DivergenceError("training diverged", static_cast<std::size_t>(step));
        }
        if (!lg.grad.allFinite()) throw DivergenceError("non-finite gradient", static_cast<std::size_t>(step));
        if (config.grad_clip > 0.0) {
            const double norm = lg.grad.norm();
            if (norm > config.grad_clip) lg.grad *= config.grad_clip / norm;
        }

        const double lr =
            config.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * (step - 1) / config.steps));
        m = config.beta1 * m + (1.0 - config.beta1) * lg.grad;
        v = config.beta2 * v + (1.0 - config.beta2) * lg.grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(config.beta1, step);
        const double c2 = 1.0 - std::pow(config.beta2, step);
        Vector p = net.parameters();
        p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + config.adam_eps);
        net.set_parameters(p);

        // Warm-started EMA so short runs are not dominated by the initial weights.
        const double decay = std::min(config.ema_decay, (1.0 + step) / (10.0 + step));
        ema = decay * ema + (1.0 - decay) * p;

        interval_loss += lg.loss;
        ++interval_count;
        if (step % config.log_every == 0 || step == config.steps) {
            LossPoint point{step, interval_loss / interval_count, std::nullopt};
            interval_loss = 0.0;
            interval_count = 0;
            if (val_batch) {
                ScoreNetwork ema_net(arch, data.normalization(), schedule, ema);
                const double val = dsm_loss(ema_net, *val_batch);
                point.validation_loss = val;
                if (val < best_val) {
                    best_val = val;
                    result.network.set_parameters(ema);
                    result.best_step = step;
                }
            }
            result.loss_curve.push_back(point);
        }
    }
    if (!val_batch) {
        result.network.set_parameters(ema);
        result.best_step = config.steps;
    }
    return result;
}

void SamplerConfig::validate() const {
    require(steps >= 1, "sampler steps must be >= 1");
    require(corrector_steps >= 0, "corrector steps must be >= 0");
    require(corrector_r >= 0.0, "corrector step ratio must be >= 0");
    require(a_start > 0.0 && a_start <= 1.0, "a_start must lie in (0, 1]");
}

Matrix reverse_sample(const BatchScoreFn& score, int dim, int batch, const SamplerConfig& cfg,
                      const NoiseSchedule& schedule, Rng& rng) {
    cfg.validate();
    require(dim >= 1 && batch >= 1, "reverse_sample needs positive dimensions");
    Matrix x(dim, batch);
    fill_normal(x, rng);
    Matrix s(dim, batch), noise(dim, batch);
    for (int i = 0; i < cfg.steps; ++i) {
        const double a = cfg.a_start * (1.0 - static_cast<double>(i) / cfg.steps);
        const double a_next = cfg.a_start * (1.0 - static_cast<double>(i + 1) / cfg.steps);
        const auto [alpha, sigma] = schedule.eval(a);
        const auto [alpha_next, sigma_next] = schedule.eval(a_next);

        score(x, a, s);
        // eps_hat = -sigma s, x0_hat = (x + sigma^2 s) / alpha.
        const Matrix eps_hat = -sigma * s;
        const Matrix x0_hat = (x + sigma * sigma * s) / alpha;
        x = alpha_next * x0_hat + sigma_next * eps_hat;

        for (int c = 0; c < cfg.corrector_steps; ++c) {
            const double delta = cfg.corrector_r * sigma_next * sigma_next;
            score(x, a_next, s);
            fill_normal(noise, rng);
            x += delta * s + std::sqrt(2.0 * delta) * noise;
        }
        if (!x.allFinite()) throw DivergenceError("reverse sampler produced non-finite state", static_cast<std::size_t>(i));
    }
    return x;
}

}  // namespace soda
