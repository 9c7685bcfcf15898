#include "losses/losses.hpp"

#include <cmath>
#include <string>

#include "util/error.hpp"

namespace fedlt::losses {

AdjustedSoftmaxParams::AdjustedSoftmaxParams(prior::PriorDistribution p, double T)
    : prior(p.floored_normalized()), temperature(T) {
  if (!(T > 0.0))
    throw_error(ErrorKind::Parameter, "adjusted softmax: temperature must be > 0, got " +
                                          std::to_string(T));
  if (prior.size() == 0)
    throw_error(ErrorKind::Parameter, "adjusted softmax: empty prior");
}

namespace {

// One row of prior^y * exp(z_y / T) normalized, with max subtraction in the
// shifted space u_y = z_y / T + ln(prior_y).
void softmax_row(const double* z, double* out, std::size_t C, const std::vector<double>& log_prior,
                 double inv_T) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t y = 0; y < C; ++y) {
    const double u = z[y] * inv_T + log_prior[y];
    out[y] = u;
    if (u > m) m = u;
  }
  double denom = 0.0;
  for (std::size_t y = 0; y < C; ++y) {
    out[y] = std::exp(out[y] - m);
    denom += out[y];
  }
  const double inv = 1.0 / denom;
  for (std::size_t y = 0; y < C; ++y) out[y] *= inv;
}

std::vector<double> log_prior_of(const AdjustedSoftmaxParams& params) {
  std::vector<double> lp(params.prior.size());
  for (std::size_t y = 0; y < lp.size(); ++y) lp[y] = std::log(params.prior.weights[y]);
  return lp;
}

void check_logits(const ad::Tensor& logits, const AdjustedSoftmaxParams& params) {
  if (!logits.is_matrix() || logits.cols() != params.num_classes())
    throw_error(ErrorKind::Dimension, "adjusted softmax: logits " + ad::shape_to_string(logits.shape) +
                                          " vs " + std::to_string(params.num_classes()) + " classes");
  for (double v : logits.values)
    if (!std::isfinite(v))
      throw_error(ErrorKind::Numeric, "adjusted softmax: non-finite logit");
}

}  // namespace

std::vector<double> adjusted_softmax_values(const ad::Tensor& logits,
                                            const AdjustedSoftmaxParams& params) {
  check_logits(logits, params);
  const std::size_t n = logits.rows(), C = logits.cols();
  const auto log_prior = log_prior_of(params);
  const double inv_T = 1.0 / params.temperature;
  std::vector<double> out(n * C);
  for (std::size_t i = 0; i < n; ++i)
    softmax_row(logits.values.data() + i * C, out.data() + i * C, C, log_prior, inv_T);
  return out;
}

ad::TensorPtr adjusted_softmax(ad::Tape& tape, const ad::TensorPtr& logits,
                               const AdjustedSoftmaxParams& params) {
  auto out = ad::Tensor::matrix(logits->rows(), logits->cols(),
                                adjusted_softmax_values(*logits, params), logits->requires_grad);
  if (out->requires_grad) {
    const double inv_T = 1.0 / params.temperature;
    tape.record(out, [logits, out, inv_T] {
      logits->ensure_grad();
      const std::size_t n = out->rows(), C = out->cols();
      for (std::size_t i = 0; i < n; ++i) {
        const double* p = out->values.data() + i * C;
        const double* g = out->grad.data() + i * C;
        double dot = 0.0;
        for (std::size_t y = 0; y < C; ++y) dot += g[y] * p[y];
        double* zg = logits->grad.data() + i * C;
        for (std::size_t y = 0; y < C; ++y) zg[y] += inv_T * p[y] * (g[y] - dot);
      }
    });
  }
  return out;
}

std::vector<bool> teacher_mask(const std::vector<double>& probs, std::size_t rows,
                               std::size_t cols, std::span<const int> labels) {
  if (probs.size() != rows * cols || labels.size() != rows)
    throw_error(ErrorKind::Dimension, "teacher_mask: inconsistent sizes");
  std::vector<bool> mask(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    std::size_t best = 0;
    for (std::size_t y = 1; y < cols; ++y)
      if (probs[i * cols + y] > probs[i * cols + best]) best = y;
    mask[i] = static_cast<int>(best) == labels[i];
  }
  return mask;
}

TeacherView make_teacher(const ad::Tensor& weak_logits, std::span<const int> labels,
                         const AdjustedSoftmaxParams& params) {
  TeacherView t;
  t.rows = weak_logits.rows();
  t.cols = weak_logits.cols();
  t.probs = adjusted_softmax_values(weak_logits, params);
  // Correctness is judged on the classifier's raw prediction (argmax of the
  // logits); the prior shift would otherwise hide rare classes from the
  // teacher pool entirely.
  t.mask = teacher_mask(weak_logits.values, t.rows, t.cols, labels);
  for (bool m : t.mask) t.masked += m;
  return t;
}

ad::TensorPtr asd_loss_with_teacher(ad::Tape& tape, const TeacherView& teacher,
                                    const ad::TensorPtr& strong_logits,
                                    const AdjustedSoftmaxParams& params) {
  const std::size_t n = teacher.rows, C = teacher.cols;
  if (strong_logits->rows() != n || strong_logits->cols() != C)
    throw_error(ErrorKind::Dimension, "asd_loss: teacher/student shapes differ");
  if (teacher.masked == 0) return ad::Tensor::scalar(0.0);

  // KL(t || s) summed over masked rows = sum t*log t - sum t*log s; the
  // teacher side is a constant, so only the -t*log s part carries gradient.
  std::vector<double> weights(n * C, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (teacher.mask[i])
      for (std::size_t y = 0; y < C; ++y) weights[i * C + y] = teacher.probs[i * C + y];
  double entropy_sum = 0.0;
  for (std::size_t i = 0; i < n * C; ++i) {
    const double t = teacher.probs[i];
    entropy_sum += weights[i] * std::log(t < ad::kLogClamp ? ad::kLogClamp : t);
  }

  auto student = adjusted_softmax(tape, strong_logits, params);
  auto log_student = tape.log(student);
  auto cross = tape.weighted_sum(log_student, weights);
  auto kl_sum = tape.sub(ad::Tensor::scalar(entropy_sum), cross);
  // Divisor is the full view size, not the masked count: the sum runs over
  // correct teachers only, so a batch with few reliable teachers contributes
  // proportionally little distillation signal.
  return tape.scale(kl_sum, 1.0 / static_cast<double>(n));
}

ad::TensorPtr asd_loss(ad::Tape& tape, const ad::TensorPtr& weak_logits,
                       const ad::TensorPtr& strong_logits, std::span<const int> labels,
                       const AdjustedSoftmaxParams& params) {
  if (weak_logits->shape != strong_logits->shape)
    throw_error(ErrorKind::Dimension, "asd_loss: view shapes differ, " +
                                          ad::shape_to_string(weak_logits->shape) + " vs " +
                                          ad::shape_to_string(strong_logits->shape));
  if (labels.size() != weak_logits->rows())
    throw_error(ErrorKind::Dimension, "asd_loss: label count mismatch");
  return asd_loss_with_teacher(tape, make_teacher(*weak_logits, labels, params), strong_logits,
                               params);
}

namespace {

ad::TensorPtr nll_sum(ad::Tape& tape, const ad::TensorPtr& logits, std::span<const int> labels,
                      const AdjustedSoftmaxParams& params) {
  auto probs = adjusted_softmax(tape, logits, params);
  auto picked = tape.pick_per_row(probs, std::vector<int>(labels.begin(), labels.end()));
  return tape.sum(tape.log(picked));
}

}  // namespace

ad::TensorPtr dla_loss(ad::Tape& tape, const ad::TensorPtr& weak_logits,
                       const ad::TensorPtr& strong_logits, std::span<const int> labels,
                       const AdjustedSoftmaxParams& params) {
  if (weak_logits->shape != strong_logits->shape)
    throw_error(ErrorKind::Dimension, "dla_loss: view shapes differ");
  const std::size_t n = weak_logits->rows();
  if (labels.size() != n) throw_error(ErrorKind::Dimension, "dla_loss: label count mismatch");
  auto log_lik = tape.add(nll_sum(tape, weak_logits, labels, params),
                          nll_sum(tape, strong_logits, labels, params));
  return tape.scale(log_lik, -1.0 / (2.0 * static_cast<double>(n)));
}

LossBundle total_loss_parts(ad::Tape& tape, const ad::TensorPtr& weak_logits,
                            const ad::TensorPtr& strong_logits, std::span<const int> labels,
                            const AdjustedSoftmaxParams& params, double lambda) {
  if (lambda < 0.0)
    throw_error(ErrorKind::Parameter, "total_loss: lambda must be >= 0, got " + std::to_string(lambda));
  LossBundle out;
  out.dla = dla_loss(tape, weak_logits, strong_logits, labels, params);
  if (lambda == 0.0) {
    out.total = out.dla;
    return out;
  }
  out.asd = asd_loss(tape, weak_logits, strong_logits, labels, params);
  out.total = tape.add(out.dla, tape.scale(out.asd, lambda));
  return out;
}

ad::TensorPtr total_loss(ad::Tape& tape, const ad::TensorPtr& weak_logits,
                         const ad::TensorPtr& strong_logits, std::span<const int> labels,
                         const AdjustedSoftmaxParams& params, double lambda) {
  return total_loss_parts(tape, weak_logits, strong_logits, labels, params, lambda).total;
}

ad::TensorPtr cross_entropy(ad::Tape& tape, const ad::TensorPtr& logits,
                            std::span<const int> labels, const AdjustedSoftmaxParams& params) {
  const std::size_t n = logits->rows();
  if (labels.size() != n) throw_error(ErrorKind::Dimension, "cross_entropy: label count mismatch");
  return tape.scale(nll_sum(tape, logits, labels, params), -1.0 / static_cast<double>(n));
}

}  // namespace fedlt::losses
