#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tadml/common.hpp"

namespace tadml {

// Dense row-major tensor. Values are 64-bit; checkpoints serialize as f32.
struct TensorData {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    std::vector<double> grad;  // allocated lazily, same length as values
    bool requires_grad = false;
};

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, bool requires_grad = false);

    static Tensor from(std::vector<std::size_t> shape, std::vector<double> values);
    static Tensor scalar(double v);

    bool defined() const { return static_cast<bool>(d_); }

    const std::vector<std::size_t>& shape() const { return d_->shape; }
    std::size_t ndim() const { return d_->shape.size(); }
    std::size_t numel() const { return d_->values.size(); }
    std::size_t rows() const { return d_->shape.at(0); }
    std::size_t cols() const { return d_->shape.at(1); }

    std::vector<double>& values() { return d_->values; }
    const std::vector<double>& values() const { return d_->values; }

    double& at(std::size_t i) { return d_->values[i]; }
    double at(std::size_t i) const { return d_->values[i]; }
    double& at(std::size_t i, std::size_t j) { return d_->values[i * cols() + j]; }
    double at(std::size_t i, std::size_t j) const { return d_->values[i * cols() + j]; }

    double item() const;

    bool requires_grad() const { return d_->requires_grad; }
    void set_requires_grad(bool v) { d_->requires_grad = v; }

    bool has_grad() const { return !d_->grad.empty(); }
    std::vector<double>& grad() { return ensure_grad(); }
    const std::vector<double>& grad_view() const { return d_->grad; }
    std::vector<double>& ensure_grad();
    void zero_grad();

    // Shares storage (shallow copy semantics, like a handle).
    std::shared_ptr<TensorData> data_ptr() const { return d_; }

    // Deep copy of values (no grad, no tape history).
    Tensor clone() const;

    // Throws NumericError if any value is NaN/Inf.
    void check_finite(const char* what) const;

private:
    std::shared_ptr<TensorData> d_;
};

// Records primitive applications; backward replays them in reverse.
class Tape {
public:
    void record(std::function<void()> backward_fn) {
        ops_.push_back(std::move(backward_fn));
    }

    // Seeds `loss` (scalar) with gradient 1 and runs all recorded backward
    // functions in reverse order. A tape may run backward only once.
    void backward(Tensor& loss);

    std::size_t size() const { return ops_.size(); }
    bool consumed() const { return consumed_; }

private:
    std::vector<std::function<void()>> ops_;
    bool consumed_ = false;
};

// ---- primitives (tape == nullptr disables gradient recording) ----

// y[t,j] = sum_i x[t,i] * W[i,j] + b[j]
Tensor fc(Tape* tape, const Tensor& x, const Tensor& W, const Tensor& b);

// Per-row normalization with biased variance.
Tensor layer_norm(Tape* tape, const Tensor& x, const Tensor& gamma,
                  const Tensor& beta, double eps = 1e-5);

Tensor relu(Tape* tape, const Tensor& x);

// Temporal stride-2 average pooling; an odd tail pools the last frame with
// itself, so the output length is ceil(T/2) for any T.
Tensor avgpool2(Tape* tape, const Tensor& x);

// 1D linear interpolation along time with half-pixel centers and edge clamp.
Tensor linear_upsample2(Tape* tape, const Tensor& x, std::size_t target_len);

Tensor add(Tape* tape, const Tensor& a, const Tensor& b);

// ---- finite-difference gradient checker ----

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    bool ok = false;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    bool ok = true;
};

// `f` builds a scalar loss from the (externally captured) parameters; it is
// called once with a tape for analytic gradients and repeatedly without one
// for central differences with step 1e-5 * (1 + |x|).
GradCheckReport grad_check(const std::function<Tensor(Tape*)>& f,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           double tol);

}  // namespace tadml
