#include "soda/sda.hpp"

#include <algorithm>
#include <sstream>

#include "soda/error.hpp"
#include "soda/parallel.hpp"

namespace soda {

int CompositionConfig::owner_window(int t, int T, int w) { return std::clamp(t - w / 2, 0, T - w); }

void GuidanceConfig::validate() const {
    require(inflation >= 0.0, "guidance inflation must be >= 0");
    require(scale > 0.0, "guidance scale must be > 0");
    require(a_min >= 0.0 && a_min <= 1.0, "guidance a_min must lie in [0, 1]");
}

namespace {

struct WindowLayout {
    int T;
    int w;
    int d;
    int K;
};

WindowLayout layout_for(const WindowScoreModel& model, const Eigen::Ref<const RowMatrix>& z) {
    const int T = static_cast<int>(z.rows());
    const int w = model.window();
    const int d = model.channels();
    if (z.cols() != d)
        throw ContractViolation("trajectory has " + std::to_string(z.cols()) + " channels, model expects " +
                                std::to_string(d));
    if (T < w)
        throw WindowTooLargeError("trajectory length " + std::to_string(T) + " is shorter than window " +
                                  std::to_string(w) + "; pad the trajectory or train with w = T");
    if (T != w && w < 3) throw ContractViolation("composition over several windows needs w >= 3");
    return {T, w, d, T - w + 1};
}

Matrix gather_windows(const WindowLayout& L, const Eigen::Ref<const RowMatrix>& z) {
    Matrix windows(L.w * L.d, L.K);
    // Row-major storage makes rows k..k+w-1 one contiguous run.
    for (int k = 0; k < L.K; ++k)
        for (int j = 0; j < L.w; ++j)
            for (int c = 0; c < L.d; ++c) windows(j * L.d + c, k) = z(k + j, c);
    return windows;
}

RowMatrix assemble(const WindowLayout& L, const Matrix& window_scores) {
    RowMatrix out(L.T, L.d);
    for (int t = 0; t < L.T; ++t) {
        const int k = CompositionConfig::owner_window(t, L.T, L.w);
        const int j = t - k;
        for (int c = 0; c < L.d; ++c) out(t, c) = window_scores(j * L.d + c, k);
    }
    return out;
}

}  // namespace

RowMatrix composed_score(const WindowScoreModel& model, const Eigen::Ref<const RowMatrix>& z_a, double a) {
    const WindowLayout L = layout_for(model, z_a);
    Matrix s;
    model.scores(gather_windows(L, z_a), a, s);
    return assemble(L, s);
}

RowMatrix guidance_score(const WindowScoreModel& model, const Eigen::Ref<const RowMatrix>& z_a, double a,
                         const ObservationSeries& y, const NoiseSchedule& schedule, const GuidanceConfig& g) {
    g.validate();
    const WindowLayout L = layout_for(model, z_a);
    const Matrix windows = gather_windows(L, z_a);
    Matrix window_scores;
    if (y.empty()) {
        model.scores(windows, a, window_scores);
        return assemble(L, window_scores);
    }
    auto tape = model.forward(windows, a, window_scores);
    RowMatrix prior = assemble(L, window_scores);

    const auto [alpha, sigma] = schedule.eval(a);
    const RowMatrix x0_hat = tweedie_denoise(z_a, a, prior, schedule);
    const Normalization& norm = model.normalization();
    const double obs_var = y.model.noise_std * y.model.noise_std;
    const double ratio2 = (sigma / alpha) * (sigma / alpha);

    // d log p(y | x0_hat) / d x0_hat, normalized coordinates.
    RowMatrix v = RowMatrix::Zero(L.T, L.d);
    for (std::size_t i = 0; i < y.times.size(); ++i) {
        const int t = y.times[i];
        if (t < 0 || t >= L.T) throw ContractViolation("observation time outside the trajectory");
        for (int j = 0; j < y.model.obs_dim(); ++j) {
            const int c = y.model.observed_components[j];
            require(c < L.d, "observed component outside the state");
            const double std_c = norm.std[c];
            const double residual = y.values(i, j) - (norm.mean[c] + std_c * x0_hat(t, c));
            const double var = a < g.a_min ? obs_var : obs_var + g.inflation * ratio2 * std_c * std_c;
            v(t, c) += residual * std_c / var;
        }
    }

    // grad_z = (v + sigma^2 J^T v) / alpha, J the Jacobian of the composed score.
    RowMatrix grad = v;
    if (g.full_jacobian) {
        Matrix cot = Matrix::Zero(L.w * L.d, L.K);
        for (int t = 0; t < L.T; ++t) {
            if (v.row(t).isZero(0.0)) continue;
            const int k = CompositionConfig::owner_window(t, L.T, L.w);
            for (int c = 0; c < L.d; ++c) cot((t - k) * L.d + c, k) = v(t, c);
        }
        Matrix d_windows;
        model.backward(*tape, cot, d_windows);
        for (int k = 0; k < L.K; ++k) {
            if (d_windows.col(k).isZero(0.0)) continue;
            for (int j = 0; j < L.w; ++j)
                for (int c = 0; c < L.d; ++c) grad(k + j, c) += sigma * sigma * d_windows(j * L.d + c, k);
        }
    }
    return prior + (g.scale / alpha) * grad;
}

void PosteriorSampleSet::validate() const {
    require(!samples.empty(), "posterior sample set is empty");
    for (const auto& s : samples) {
        require(s.length() == length() && s.channels() == channels(), "posterior samples differ in shape");
        require(s.states.allFinite(), "posterior sample is not finite");
    }
}

std::vector<Vector> PosteriorSampleSet::parameter_series() const {
    std::vector<Vector> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(split(s).second);
    return out;
}

PosteriorSampleSet assimilate(const WindowScoreModel& model, const NoiseSchedule& schedule, const ObservationSeries& y,
                              const AssimilationRequest& req, std::uint64_t seed) {
    require(req.n_samples >= 1, "assimilate needs n_samples >= 1");
    req.sampler.validate();
    req.guidance.validate();
    const int T = req.horizon;
    const int d = model.channels();
    if (T < model.window())
        throw WindowTooLargeError("horizon " + std::to_string(T) + " is shorter than window " +
                                  std::to_string(model.window()));

    PosteriorSampleSet set;
    set.samples.resize(static_cast<std::size_t>(req.n_samples));
    set.seed = seed;
    std::ostringstream cfg;
    cfg << "steps=" << req.sampler.steps << ";corrector=" << req.sampler.corrector_steps
        << ";r=" << req.sampler.corrector_r << ";a_start=" << req.sampler.a_start
        << ";inflation=" << req.guidance.inflation << ";scale=" << req.guidance.scale
        << ";full_jacobian=" << req.guidance.full_jacobian;
    set.sampler_config = cfg.str();

    BatchScoreFn score = [&](const Matrix& x, double a, Matrix& out) {
        out.resize(x.rows(), x.cols());
        for (Eigen::Index b = 0; b < x.cols(); ++b) {
            Eigen::Map<const RowMatrix> z(x.col(b).data(), T, d);
            const RowMatrix s = guidance_score(model, z, a, y, schedule, req.guidance);
            out.col(b) = Eigen::Map<const Vector>(s.data(), s.size());
        }
    };

    parallel_for(set.samples.size(), req.threads, [&](std::size_t j) {
        Rng rng(derive_seed(seed, {j}));
        Matrix x;
        try {
            x = reverse_sample(score, T * d, 1, req.sampler, schedule, rng);
        } catch (const DivergenceError& e) {
            throw DivergenceError("assimilation diverged in sample " + std::to_string(j), e.step());
        }
        AugmentedTrajectory& out = set.samples[j];
        out.system_id = req.system_id;
        out.dt = req.dt;
        out.d_theta = 1;
        out.states = model.normalization().denormalize(Eigen::Map<const RowMatrix>(x.data(), T, d));
    });
    return set;
}

}  // namespace soda
