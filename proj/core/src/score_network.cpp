#include "soda/score_network.hpp"

#include <cmath>
#include <numbers>

#include "soda/error.hpp"

namespace soda {

Normalization Normalization::identity(int channels) {
    return {Vector::Zero(channels), Vector::Ones(channels)};
}

void Normalization::validate() const {
    require(mean.size() == std.size() && mean.size() > 0, "normalization mean/std size mismatch");
    require(mean.allFinite() && std.allFinite(), "normalization must be finite");
    require((std.array() > 0.0).all(), "normalization stds must be > 0");
}

RowMatrix Normalization::normalize(const Eigen::Ref<const RowMatrix>& physical) const {
    require(physical.cols() == channels(), "normalize: channel mismatch");
    return (physical.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
}

RowMatrix Normalization::denormalize(const Eigen::Ref<const RowMatrix>& normalized) const {
    require(normalized.cols() == channels(), "denormalize: channel mismatch");
    return (normalized.array().rowwise() * std.transpose().array()).rowwise() + mean.transpose().array();
}

std::size_t NetworkArchitecture::parameter_count() const {
    std::size_t n = 0;
    int in = input_dim();
    for (int h : hidden) {
        n += static_cast<std::size_t>(h) * in + h;
        in = h;
    }
    n += static_cast<std::size_t>(output_dim()) * in + output_dim();
    return n;
}

void NetworkArchitecture::validate() const {
    require(window >= 1, "window size must be >= 1");
    require(channels >= 1, "channels must be >= 1");
    require(embed_dim >= 2 && embed_dim % 2 == 0, "time embedding dim must be even and >= 2");
    for (int h : hidden) require(h >= 1, "hidden widths must be >= 1");
}

void time_embedding(double a, int embed_dim, double* out) {
    const int half = embed_dim / 2;
    for (int k = 0; k < half; ++k) {
        const double freq = half > 1 ? std::exp(std::log(1000.0) * k / (half - 1)) : 1.0;
        out[k] = std::sin(a * freq);
        out[half + k] = std::cos(a * freq);
    }
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

ScoreNetwork::ScoreNetwork(NetworkArchitecture arch, Normalization norm, NoiseSchedule schedule, Vector params)
    : arch_(std::move(arch)), norm_(std::move(norm)), schedule_(schedule), params_(std::move(params)) {
    arch_.validate();
    norm_.validate();
    require(norm_.channels() == arch_.channels, "normalization channels differ from architecture");
    require(static_cast<std::size_t>(params_.size()) == arch_.parameter_count(), "parameter vector has wrong length");
    std::size_t offset = 0;
    int in = arch_.input_dim();
    auto add = [&](int out) {
        layers_.push_back({offset, offset + static_cast<std::size_t>(out) * in, out, in});
        offset += static_cast<std::size_t>(out) * in + out;
        in = out;
    };
    for (int h : arch_.hidden) add(h);
    add(arch_.output_dim());
}

ScoreNetwork::ScoreNetwork(NetworkArchitecture arch, Normalization norm, NoiseSchedule schedule, std::uint64_t init_seed)
    : ScoreNetwork(arch, std::move(norm), schedule, Vector::Zero(static_cast<Eigen::Index>(arch.parameter_count()))) {
    Rng rng(init_seed);
    // Hidden layers: N(0, 1/fan_in) weights, zero biases. Output layer stays zero.
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
        const auto& L = layers_[l];
        const double scale = 1.0 / std::sqrt(static_cast<double>(L.cols));
        for (std::size_t i = 0; i < static_cast<std::size_t>(L.rows) * L.cols; ++i)
            params_[static_cast<Eigen::Index>(L.w_offset + i)] = scale * rng.normal();
    }
}

void ScoreNetwork::set_parameters(const Vector& p) {
    require(p.size() == params_.size(), "parameter vector has wrong length");
    params_ = p;
}

Eigen::Map<const Matrix> ScoreNetwork::weight(std::size_t l) const {
    const auto& L = layers_[l];
    return {params_.data() + L.w_offset, L.rows, L.cols};
}

Eigen::Map<const Vector> ScoreNetwork::bias(std::size_t l) const {
    const auto& L = layers_[l];
    return {params_.data() + L.b_offset, L.rows};
}

void ScoreNetwork::predict_noise(const Eigen::Ref<const Matrix>& windows, std::span<const double> a, Tape& tape) const {
    const Eigen::Index B = windows.cols();
    if (windows.rows() != arch_.flat_size())
        throw ContractViolation("window batch has " + std::to_string(windows.rows()) + " rows, network expects " +
                                std::to_string(arch_.flat_size()));
    require(a.size() == 1 || a.size() == static_cast<std::size_t>(B), "need one diffusion time or one per column");
    const std::size_t n_layers = layers_.size();
    tape.a.assign(a.begin(), a.end());
    tape.inputs.resize(n_layers);
    tape.pre.resize(n_layers - 1);

    Matrix& x = tape.inputs[0];
    x.resize(arch_.input_dim(), B);
    x.topRows(arch_.flat_size()) = windows;
    if (a.size() == 1) {
        time_embedding(a[0], arch_.embed_dim, x.col(0).data() + arch_.flat_size());
        for (Eigen::Index b = 1; b < B; ++b) x.col(b).tail(arch_.embed_dim) = x.col(0).tail(arch_.embed_dim);
    } else {
        for (Eigen::Index b = 0; b < B; ++b) time_embedding(a[b], arch_.embed_dim, x.col(b).data() + arch_.flat_size());
    }

    for (std::size_t l = 0; l < n_layers; ++l) {
        Matrix z = weight(l) * tape.inputs[l];
        z.colwise() += bias(l);
        if (l + 1 == n_layers) {
            tape.output = std::move(z);
            if (arch_.gaussian_skip)
                for (Eigen::Index b = 0; b < B; ++b)
                    tape.output.col(b) += schedule_.eval(tape.a[a.size() == 1 ? 0 : b]).sigma * windows.col(b);
        } else {
            tape.inputs[l + 1] = z.unaryExpr([](double v) { return gelu(v); });
            tape.pre[l] = std::move(z);
        }
    }
}

void ScoreNetwork::backward_noise(const Tape& tape, const Eigen::Ref<const Matrix>& d_eps, Vector* grad,
                                  Matrix* d_windows) const {
    require(d_eps.rows() == tape.output.rows() && d_eps.cols() == tape.output.cols(), "cotangent shape mismatch");
    if (grad) require(grad->size() == params_.size(), "gradient vector has wrong length");
    Matrix delta = d_eps;
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const auto& L = layers_[l];
        if (grad) {
            Eigen::Map<Matrix> gw(grad->data() + L.w_offset, L.rows, L.cols);
            Eigen::Map<Vector> gb(grad->data() + L.b_offset, L.rows);
            gw.noalias() += delta * tape.inputs[l].transpose();
            gb.noalias() += delta.rowwise().sum();
        }
        if (l == 0 && !d_windows) break;
        Matrix upstream = weight(l).transpose() * delta;
        if (l == 0) {
            *d_windows = upstream.topRows(arch_.flat_size());
            if (arch_.gaussian_skip)
                for (Eigen::Index b = 0; b < d_eps.cols(); ++b)
                    d_windows->col(b) += schedule_.eval(tape.a[tape.a.size() == 1 ? 0 : b]).sigma * d_eps.col(b);
            break;
        }
        delta = upstream.cwiseProduct(tape.pre[l - 1].unaryExpr([](double v) { return gelu_grad(v); }));
    }
}

namespace {

struct NetworkScoreTape final : ScoreTape {
    ScoreNetwork::Tape tape;
    double sigma = 1.0;
};

}  // namespace

void ScoreNetwork::scores(const Eigen::Ref<const Matrix>& windows, double a, Matrix& out) const {
    Tape tape;
    const double at[1] = {a};
    predict_noise(windows, at, tape);
    out = tape.output * (-1.0 / schedule_.eval(a).sigma);
}

std::unique_ptr<ScoreTape> ScoreNetwork::forward(const Eigen::Ref<const Matrix>& windows, double a, Matrix& out) const {
    auto t = std::make_unique<NetworkScoreTape>();
    const double at[1] = {a};
    predict_noise(windows, at, t->tape);
    t->sigma = schedule_.eval(a).sigma;
    out = t->tape.output * (-1.0 / t->sigma);
    return t;
}

void ScoreNetwork::backward(const ScoreTape& tape, const Eigen::Ref<const Matrix>& cotangent, Matrix& d_windows) const {
    const auto* t = dynamic_cast<const NetworkScoreTape*>(&tape);
    require(t != nullptr, "tape was not produced by a ScoreNetwork");
    const Matrix& out = t->tape.output;
    require(cotangent.rows() == out.rows() && cotangent.cols() == out.cols(), "cotangent shape mismatch");

    // Only columns with a nonzero cotangent contribute.
    std::vector<Eigen::Index> active;
    for (Eigen::Index k = 0; k < cotangent.cols(); ++k)
        if (!cotangent.col(k).isZero(0.0)) active.push_back(k);
    d_windows = Matrix::Zero(arch_.flat_size(), cotangent.cols());
    if (active.empty()) return;

    const Eigen::Index n = static_cast<Eigen::Index>(active.size());
    Tape sub;
    sub.inputs.resize(t->tape.inputs.size());
    sub.pre.resize(t->tape.pre.size());
    for (std::size_t l = 0; l < sub.inputs.size(); ++l) sub.inputs[l] = t->tape.inputs[l](Eigen::all, active);
    for (std::size_t l = 0; l < sub.pre.size(); ++l) sub.pre[l] = t->tape.pre[l](Eigen::all, active);
    sub.output = out(Eigen::all, active);
    if (t->tape.a.size() == 1) {
        sub.a = t->tape.a;
    } else {
        for (auto k : active) sub.a.push_back(t->tape.a[static_cast<std::size_t>(k)]);
    }
    Matrix d_eps = cotangent(Eigen::all, active) * (-1.0 / t->sigma);
    Matrix dw(arch_.flat_size(), n);
    backward_noise(sub, d_eps, nullptr, &dw);
    for (Eigen::Index i = 0; i < n; ++i) d_windows.col(active[i]) = dw.col(i);
}

Vector ScoreNetwork::score(const Vector& window, double a) const {
    Matrix out;
    scores(window, a, out);
    return out.col(0);
}

}  // namespace soda
