#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fedlt::ad {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& s);

/// Dense row-major float64 tensor with an optional gradient buffer.
///
/// Invariants: product(shape) == values.size(); grad, when allocated, has the
/// same length as values. Gradients accumulate additively; callers zero them
/// explicitly (or via sgd_step, which zeroes after the update).
class Tensor {
 public:
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;

  Tensor(Shape s, std::vector<double> v, bool rg);

  static std::shared_ptr<Tensor> make(Shape s, std::vector<double> v, bool rg = false);
  static std::shared_ptr<Tensor> zeros(Shape s, bool rg = false);
  static std::shared_ptr<Tensor> scalar(double v, bool rg = false);
  static std::shared_ptr<Tensor> matrix(std::size_t rows, std::size_t cols,
                                        std::vector<double> v, bool rg = false);

  std::size_t numel() const { return values.size(); }
  bool is_scalar() const { return numel() == 1; }
  bool is_matrix() const { return shape.size() == 2; }
  std::size_t rows() const;
  std::size_t cols() const;
  double at(std::size_t r, std::size_t c) const;

  void ensure_grad();
  void zero_grad();
  bool has_grad() const { return !grad.empty(); }
  bool all_finite() const;
};

using TensorPtr = std::shared_ptr<Tensor>;

/// Reverse-mode tape. Operations are recorded in execution order; backward
/// replays them in exact reverse order. A tape and its tensors are confined
/// to one execution context.
class Tape {
 public:
  // -- primitive operations -------------------------------------------------
  TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
  TensorPtr add(const TensorPtr& a, const TensorPtr& b);
  TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
  TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
  /// [n x m] plus a length-m bias added to every row.
  TensorPtr add_bias(const TensorPtr& x, const TensorPtr& bias);
  TensorPtr exp(const TensorPtr& x);
  /// Elementwise log(max(x, kLogClamp)). Negative inputs are a domain error;
  /// clamped entries get zero gradient (the clamp is a constant region).
  TensorPtr log(const TensorPtr& x);
  TensorPtr relu(const TensorPtr& x);
  TensorPtr scale(const TensorPtr& x, double c);
  TensorPtr sum(const TensorPtr& x);
  /// Dot product with a constant weight tensor of equal length -> scalar.
  TensorPtr weighted_sum(const TensorPtr& x, const std::vector<double>& w);
  /// Gathers x[r, idx[r]] per row -> shape [n]. Backward scatters.
  TensorPtr pick_per_row(const TensorPtr& x, const std::vector<int>& idx);

  // -- extension point for fused ops (losses) --------------------------------
  /// Registers an already-computed output with a custom backward closure.
  void record(const TensorPtr& out, std::function<void()> backward);

  /// Propagates d(loss)/d(tensor) for every requires_grad tensor reachable
  /// from `loss`. Intermediate (op output) grads are reset on each call; leaf
  /// grads accumulate across calls.
  void backward(const TensorPtr& loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    TensorPtr out;
    std::function<void()> back;
  };
  std::vector<Node> nodes_;
};

inline constexpr double kLogClamp = 1e-12;

/// p <- p - lr * p.grad for each parameter, then zeroes the grads.
void sgd_step(std::span<const TensorPtr> params, double lr);

}  // namespace fedlt::ad
