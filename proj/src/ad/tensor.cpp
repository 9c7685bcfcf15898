#include "ad/tensor.hpp"

#include <cmath>
#include <sstream>

#include "util/error.hpp"

namespace fedlt::ad {

std::string shape_to_string(const Shape& s) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out << "x";
    out << s[i];
  }
  out << "]";
  return out.str();
}

namespace {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) {
    if (d == 0) throw_error(ErrorKind::Dimension, "zero-sized dimension in shape " + shape_to_string(s));
    n *= d;
  }
  return n;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape)
    throw_error(ErrorKind::Dimension, std::string(op) + ": shape mismatch " +
                                          shape_to_string(a.shape) + " vs " + shape_to_string(b.shape));
}

}  // namespace

Tensor::Tensor(Shape s, std::vector<double> v, bool rg)
    : shape(std::move(s)), values(std::move(v)), requires_grad(rg) {
  if (shape_numel(shape) != values.size())
    throw_error(ErrorKind::Dimension, "value count " + std::to_string(values.size()) +
                                          " does not match shape " + shape_to_string(shape));
}

TensorPtr Tensor::make(Shape s, std::vector<double> v, bool rg) {
  return std::make_shared<Tensor>(std::move(s), std::move(v), rg);
}

TensorPtr Tensor::zeros(Shape s, bool rg) {
  std::size_t n = shape_numel(s);
  return std::make_shared<Tensor>(std::move(s), std::vector<double>(n, 0.0), rg);
}

TensorPtr Tensor::scalar(double v, bool rg) {
  return std::make_shared<Tensor>(Shape{1}, std::vector<double>{v}, rg);
}

TensorPtr Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v, bool rg) {
  return std::make_shared<Tensor>(Shape{rows, cols}, std::move(v), rg);
}

std::size_t Tensor::rows() const {
  if (!is_matrix()) throw_error(ErrorKind::Contract, "rows() on non-matrix tensor " + shape_to_string(shape));
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (!is_matrix()) throw_error(ErrorKind::Contract, "cols() on non-matrix tensor " + shape_to_string(shape));
  return shape[1];
}

double Tensor::at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

void Tensor::ensure_grad() {
  if (grad.empty()) grad.assign(values.size(), 0.0);
}

void Tensor::zero_grad() {
  if (!grad.empty()) grad.assign(values.size(), 0.0);
}

bool Tensor::all_finite() const {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  for (double g : grad)
    if (!std::isfinite(g)) return false;
  return true;
}

// ---------------------------------------------------------------------------

TensorPtr Tape::matmul(const TensorPtr& a, const TensorPtr& b) {
  if (!a->is_matrix() || !b->is_matrix())
    throw_error(ErrorKind::Dimension, "matmul: operands must be matrices, got " +
                                          shape_to_string(a->shape) + " and " + shape_to_string(b->shape));
  const std::size_t m = a->rows(), k = a->cols(), n = b->cols();
  if (b->rows() != k)
    throw_error(ErrorKind::Dimension, "matmul: inner dimensions disagree, " +
                                          shape_to_string(a->shape) + " x " + shape_to_string(b->shape));
  auto out = Tensor::zeros({m, n}, a->requires_grad || b->requires_grad);
  const double* A = a->values.data();
  const double* B = b->values.data();
  double* O = out->values.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* Bp = B + p * n;
      double* Oi = O + i * n;
      for (std::size_t j = 0; j < n; ++j) Oi[j] += aip * Bp[j];
    }
  if (out->requires_grad)
    record(out, [a, b, out, m, k, n] {
      const double* G = out->grad.data();
      if (a->requires_grad) {
        a->ensure_grad();
        // a.grad += g . b^T
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* Gi = G + i * n;
            const double* Bp = b->values.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) acc += Gi[j] * Bp[j];
            a->grad[i * k + p] += acc;
          }
      }
      if (b->requires_grad) {
        b->ensure_grad();
        // b.grad += a^T . g, accumulated per slot so one backward pass adds
        // exactly one term to each gradient entry
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) acc += a->values[i * k + p] * G[i * n + j];
            b->grad[p * n + j] += acc;
          }
      }
    });
  return out;
}

TensorPtr Tape::add(const TensorPtr& a, const TensorPtr& b) {
  require_same_shape(*a, *b, "add");
  auto out = Tensor::make(a->shape, a->values, a->requires_grad || b->requires_grad);
  for (std::size_t i = 0; i < out->numel(); ++i) out->values[i] += b->values[i];
  if (out->requires_grad)
    record(out, [a, b, out] {
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < out->numel(); ++i) a->grad[i] += out->grad[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < out->numel(); ++i) b->grad[i] += out->grad[i];
      }
    });
  return out;
}

TensorPtr Tape::sub(const TensorPtr& a, const TensorPtr& b) {
  require_same_shape(*a, *b, "sub");
  auto out = Tensor::make(a->shape, a->values, a->requires_grad || b->requires_grad);
  for (std::size_t i = 0; i < out->numel(); ++i) out->values[i] -= b->values[i];
  if (out->requires_grad)
    record(out, [a, b, out] {
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < out->numel(); ++i) a->grad[i] += out->grad[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < out->numel(); ++i) b->grad[i] -= out->grad[i];
      }
    });
  return out;
}

TensorPtr Tape::mul(const TensorPtr& a, const TensorPtr& b) {
  require_same_shape(*a, *b, "mul");
  auto out = Tensor::make(a->shape, a->values, a->requires_grad || b->requires_grad);
  for (std::size_t i = 0; i < out->numel(); ++i) out->values[i] *= b->values[i];
  if (out->requires_grad)
    record(out, [a, b, out] {
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < out->numel(); ++i) a->grad[i] += out->grad[i] * b->values[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < out->numel(); ++i) b->grad[i] += out->grad[i] * a->values[i];
      }
    });
  return out;
}

TensorPtr Tape::add_bias(const TensorPtr& x, const TensorPtr& bias) {
  if (!x->is_matrix() || bias->shape.size() != 1 || bias->shape[0] != x->cols())
    throw_error(ErrorKind::Dimension, "add_bias: need [n x m] and [m], got " +
                                          shape_to_string(x->shape) + " and " + shape_to_string(bias->shape));
  const std::size_t n = x->rows(), m = x->cols();
  auto out = Tensor::make(x->shape, x->values, x->requires_grad || bias->requires_grad);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out->values[i * m + j] += bias->values[j];
  if (out->requires_grad)
    record(out, [x, bias, out, n, m] {
      if (x->requires_grad) {
        x->ensure_grad();
        for (std::size_t i = 0; i < n * m; ++i) x->grad[i] += out->grad[i];
      }
      if (bias->requires_grad) {
        bias->ensure_grad();
        for (std::size_t j = 0; j < m; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < n; ++i) acc += out->grad[i * m + j];
          bias->grad[j] += acc;
        }
      }
    });
  return out;
}

TensorPtr Tape::exp(const TensorPtr& x) {
  auto out = Tensor::make(x->shape, x->values, x->requires_grad);
  for (double& v : out->values) v = std::exp(v);
  if (out->requires_grad)
    record(out, [x, out] {
      x->ensure_grad();
      for (std::size_t i = 0; i < out->numel(); ++i) x->grad[i] += out->grad[i] * out->values[i];
    });
  return out;
}

TensorPtr Tape::log(const TensorPtr& x) {
  auto out = Tensor::make(x->shape, x->values, x->requires_grad);
  for (std::size_t i = 0; i < out->numel(); ++i) {
    double v = x->values[i];
    if (v < 0.0)
      throw_error(ErrorKind::Domain, "log: negative input " + std::to_string(v) + " below clamp");
    out->values[i] = std::log(v < kLogClamp ? kLogClamp : v);
  }
  if (out->requires_grad)
    record(out, [x, out] {
      x->ensure_grad();
      for (std::size_t i = 0; i < out->numel(); ++i)
        if (x->values[i] > kLogClamp) x->grad[i] += out->grad[i] / x->values[i];
    });
  return out;
}

TensorPtr Tape::relu(const TensorPtr& x) {
  auto out = Tensor::make(x->shape, x->values, x->requires_grad);
  for (double& v : out->values)
    if (v < 0.0) v = 0.0;
  if (out->requires_grad)
    record(out, [x, out] {
      x->ensure_grad();
      for (std::size_t i = 0; i < out->numel(); ++i)
        if (x->values[i] > 0.0) x->grad[i] += out->grad[i];
    });
  return out;
}

TensorPtr Tape::scale(const TensorPtr& x, double c) {
  auto out = Tensor::make(x->shape, x->values, x->requires_grad);
  for (double& v : out->values) v *= c;
  if (out->requires_grad)
    record(out, [x, out, c] {
      x->ensure_grad();
      for (std::size_t i = 0; i < out->numel(); ++i) x->grad[i] += out->grad[i] * c;
    });
  return out;
}

TensorPtr Tape::sum(const TensorPtr& x) {
  double acc = 0.0;
  for (double v : x->values) acc += v;
  auto out = Tensor::scalar(acc, x->requires_grad);
  if (out->requires_grad)
    record(out, [x, out] {
      x->ensure_grad();
      const double g = out->grad[0];
      for (double& gi : x->grad) gi += g;
    });
  return out;
}

TensorPtr Tape::weighted_sum(const TensorPtr& x, const std::vector<double>& w) {
  if (w.size() != x->numel())
    throw_error(ErrorKind::Dimension, "weighted_sum: weight count " + std::to_string(w.size()) +
                                          " vs tensor " + shape_to_string(x->shape));
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) acc += x->values[i] * w[i];
  auto out = Tensor::scalar(acc, x->requires_grad);
  if (out->requires_grad) {
    auto weights = std::make_shared<std::vector<double>>(w);
    record(out, [x, out, weights] {
      x->ensure_grad();
      const double g = out->grad[0];
      for (std::size_t i = 0; i < weights->size(); ++i) x->grad[i] += g * (*weights)[i];
    });
  }
  return out;
}

TensorPtr Tape::pick_per_row(const TensorPtr& x, const std::vector<int>& idx) {
  const std::size_t n = x->rows(), m = x->cols();
  if (idx.size() != n)
    throw_error(ErrorKind::Dimension, "pick_per_row: " + std::to_string(idx.size()) +
                                          " indices for " + std::to_string(n) + " rows");
  for (int j : idx)
    if (j < 0 || static_cast<std::size_t>(j) >= m)
      throw_error(ErrorKind::Contract, "pick_per_row: index " + std::to_string(j) + " out of range");
  auto out = Tensor::zeros({n}, x->requires_grad);
  for (std::size_t i = 0; i < n; ++i) out->values[i] = x->values[i * m + idx[i]];
  if (out->requires_grad) {
    auto indices = std::make_shared<std::vector<int>>(idx);
    record(out, [x, out, indices, m] {
      x->ensure_grad();
      for (std::size_t i = 0; i < out->numel(); ++i)
        x->grad[i * m + (*indices)[i]] += out->grad[i];
    });
  }
  return out;
}

void Tape::record(const TensorPtr& out, std::function<void()> backward) {
  nodes_.push_back(Node{out, std::move(backward)});
}

void Tape::backward(const TensorPtr& loss) {
  if (!loss->is_scalar())
    throw_error(ErrorKind::Contract, "backward: loss must be scalar, got " + shape_to_string(loss->shape));
  // Intermediate grads are scratch: reset them so repeated backward calls
  // propagate a fresh unit seed while leaf grads keep accumulating.
  for (auto& node : nodes_) {
    node.out->ensure_grad();
    node.out->zero_grad();
  }
  loss->ensure_grad();
  loss->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->back();
}

void sgd_step(std::span<const TensorPtr> params, double lr) {
  if (!(lr >= 0.0))
    throw_error(ErrorKind::Parameter, "sgd_step: learning rate must be >= 0, got " + std::to_string(lr));
  for (const auto& p : params)
    if (!p->has_grad())
      throw_error(ErrorKind::Contract, "sgd_step: parameter " + shape_to_string(p->shape) + " has no gradient");
  for (const auto& p : params) {
    for (std::size_t i = 0; i < p->numel(); ++i) p->values[i] -= lr * p->grad[i];
    p->zero_grad();
  }
}

}  // namespace fedlt::ad
