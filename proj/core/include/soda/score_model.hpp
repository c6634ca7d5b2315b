#pragma once

#include <memory>

#include "soda/linalg.hpp"

namespace soda {

// Per-channel affine map between physical and network coordinates.
struct Normalization {
    Vector mean;
    Vector std;

    static Normalization identity(int channels);

    int channels() const { return static_cast<int>(mean.size()); }
    void validate() const;

    RowMatrix normalize(const Eigen::Ref<const RowMatrix>& physical) const;
    RowMatrix denormalize(const Eigen::Ref<const RowMatrix>& normalized) const;
};

// Opaque activations kept by a forward pass for a later vector-Jacobian product.
struct ScoreTape {
    virtual ~ScoreTape() = default;
};

// A score model over flattened length-w windows of d_z channels, in
// normalized coordinates. Column k of `windows` is one time-major window.
class WindowScoreModel {
public:
    virtual ~WindowScoreModel() = default;

    virtual int window() const = 0;
    virtual int channels() const = 0;
    virtual const Normalization& normalization() const = 0;

    virtual void scores(const Eigen::Ref<const Matrix>& windows, double a, Matrix& out) const = 0;

    // Same as scores() but keeps what backward() needs.
    virtual std::unique_ptr<ScoreTape> forward(const Eigen::Ref<const Matrix>& windows, double a, Matrix& out) const = 0;

    // d_windows = J^T cotangent, J the Jacobian of the scores w.r.t. the windows.
    virtual void backward(const ScoreTape& tape, const Eigen::Ref<const Matrix>& cotangent, Matrix& d_windows) const = 0;

    int flat_size() const { return window() * channels(); }
};

}  // namespace soda
