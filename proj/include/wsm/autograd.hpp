#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "wsm/tensor.hpp"

namespace wsm {

using Rng = std::mt19937_64;

// A named trainable (or frozen) tensor. Gradients accumulate; call zero_grad()
// between steps.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value, bool trainable = true);

  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  void zero_grad() { grad.fill(0.0); }
};

using ParamRefs = std::vector<Parameter*>;

class Tape;

// Handle to a value produced on a Tape. Vars without a node are constants:
// gradients are not propagated through them.
class Var {
 public:
  Var() = default;

  const Tensor& value() const { return *value_; }
  const Shape& shape() const { return value_->shape(); }
  std::size_t rows() const { return value_->rows(); }
  std::size_t cols() const { return value_->cols(); }
  bool requires_grad() const { return node_ >= 0; }
  bool defined() const { return value_ != nullptr; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  std::shared_ptr<const Tensor> value_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Records differentiable operations of one forward pass. Nodes are appended in
// creation order, which is a topological order; backward() walks them in
// reverse exactly once. A non-recording tape computes values only.
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor& grad_out, Tape& tape)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  Var constant(Tensor value);
  // Leaf bound to a parameter. Frozen parameters enter as constants.
  Var param(Parameter& p);

  // Registers the result of an operation. `op` names the operation in error
  // messages. If no input requires grad the result is a constant and `fn` is
  // dropped. Throws NumericError when the value is not finite.
  Var make(const char* op, Tensor value, std::initializer_list<const Var*> inputs, BackwardFn fn);
  Var make(const char* op, Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

  // Adds `grad` into the gradient slot of `v`; no-op for constants.
  void accumulate(const Var& v, const Tensor& grad);
  void accumulate(const Var& v, Tensor&& grad);

  // Seeds d(loss)/d(loss) = 1 and propagates. Loss must hold one element.
  void backward(const Var& loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    BackwardFn backward;
    Parameter* param = nullptr;
    std::shared_ptr<const Tensor> value;
  };

  Var push(std::shared_ptr<const Tensor> value, Node node);
  // Mixing tapes would silently drop gradients.
  void check_owner(const Var& v, const char* op) const;

  bool recording_;
  bool consumed_ = false;
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

// Dropout/training switches for one forward pass.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
};

// Differentiable operations.
Var matmul(const Var& a, const Var& b);
// x[T×in]·w[in×out] + b[out]
Var linear(const Var& x, const Var& w, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// Exact-erf GeLU: x·Φ(x).
Var gelu(const Var& x);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var softmax(const Var& x, std::size_t axis);
// Log-softmax over the last axis.
Var log_softmax(const Var& x);
Var sum(const Var& x);
Var sum_squares(const Var& x);
// Row-wise layer normalization with affine gain/bias of width cols().
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
// Zeroes rows at index >= valid.
Var mask_rows(const Var& x, std::size_t valid);
// [1×d] row repeated `rows` times.
Var broadcast_rows(const Var& row, std::size_t rows);
// Inverted dropout; identity when !ctx.training or rate == 0.
Var dropout(const Var& x, double rate, const ForwardContext& ctx);
// Σ_i weights[i]·xs[i]; weights has shape [n].
Var weighted_sum(const std::vector<Var>& xs, const Var& weights);

// Scalar-valued helpers on plain tensors.
double gelu_value(double x);
double gelu_derivative(double x);

}  // namespace wsm
