#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "soda/schedule.hpp"
#include "soda/score_model.hpp"

namespace soda {

enum class Activation { Gelu };

struct NetworkArchitecture {
    int window = 1;
    int channels = 1;
    std::vector<int> hidden{256, 256, 256};
    int embed_dim = 32;
    Activation activation = Activation::Gelu;
    // Adds sigma(a) x to the noise prediction (the N(0, I) answer).
    bool gaussian_skip = true;

    int flat_size() const { return window * channels; }
    int input_dim() const { return flat_size() + embed_dim; }
    int output_dim() const { return flat_size(); }
    std::size_t parameter_count() const;
    void validate() const;
};

// Sinusoidal features of the diffusion time, embed_dim / 2 frequencies
// spaced geometrically between 1 and 1000 rad.
void time_embedding(double a, int embed_dim, double* out);

// eps_hat = MLP([flattened window | time embedding]) (+ sigma(a) x with
// gaussian_skip); score = -eps_hat / sigma(a). The last layer starts at zero,
// so a fresh network outputs the N(0, I) score with the skip and zero without.
class ScoreNetwork final : public WindowScoreModel {
public:
    ScoreNetwork(NetworkArchitecture arch, Normalization norm, NoiseSchedule schedule, std::uint64_t init_seed);
    ScoreNetwork(NetworkArchitecture arch, Normalization norm, NoiseSchedule schedule, Vector params);

    const NetworkArchitecture& architecture() const { return arch_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    const Vector& parameters() const { return params_; }
    void set_parameters(const Vector& p);

    int window() const override { return arch_.window; }
    int channels() const override { return arch_.channels; }
    const Normalization& normalization() const override { return norm_; }

    // Activations of one batched pass; `a` holds one diffusion time per column.
    struct Tape final : ScoreTape {
        std::vector<Matrix> inputs;  // input of every layer
        std::vector<Matrix> pre;     // pre-activations of hidden layers
        Matrix output;               // eps_hat
        std::vector<double> a;
    };

    void predict_noise(const Eigen::Ref<const Matrix>& windows, std::span<const double> a, Tape& tape) const;

    // Accumulates d(loss)/d(params) into grad (if non-null) and writes
    // d(loss)/d(windows) into d_windows (if non-null), given d(loss)/d(eps_hat).
    void backward_noise(const Tape& tape, const Eigen::Ref<const Matrix>& d_eps, Vector* grad, Matrix* d_windows) const;

    // WindowScoreModel
    void scores(const Eigen::Ref<const Matrix>& windows, double a, Matrix& out) const override;
    std::unique_ptr<ScoreTape> forward(const Eigen::Ref<const Matrix>& windows, double a, Matrix& out) const override;
    void backward(const ScoreTape& tape, const Eigen::Ref<const Matrix>& cotangent, Matrix& d_windows) const override;

    // Score of a single window.
    Vector score(const Vector& window, double a) const;

private:
    struct LayerView {
        std::size_t w_offset;
        std::size_t b_offset;
        int rows;
        int cols;
    };

    Eigen::Map<const Matrix> weight(std::size_t l) const;
    Eigen::Map<const Vector> bias(std::size_t l) const;

    NetworkArchitecture arch_;
    Normalization norm_;
    NoiseSchedule schedule_;
    Vector params_;
    std::vector<LayerView> layers_;
};

// Gaussian-error linear unit (erf form) and its derivative.
double gelu(double x);
double gelu_grad(double x);

}  // namespace soda
