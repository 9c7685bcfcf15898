#include "prior/prior.hpp"

#include <cmath>
#include <string>

#include "util/error.hpp"

namespace fedlt::prior {

PriorDistribution PriorDistribution::uniform(std::size_t num_classes) {
  return PriorDistribution(std::vector<double>(num_classes, 1.0)).normalized();
}

double PriorDistribution::sum() const {
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

PriorDistribution PriorDistribution::normalized() const {
  for (double w : weights)
    if (!(w >= 0.0))
      throw_error(ErrorKind::Domain, "prior: weights must be nonnegative and finite");
  const double s = sum();
  if (s == 0.0) return PriorDistribution(std::vector<double>(weights.size(), 1.0)).normalized();
  if (std::abs(s - 1.0) <= 1e-12) return *this;
  PriorDistribution out(*this);
  for (double& w : out.weights) w /= s;
  return out;
}

PriorDistribution PriorDistribution::floored_normalized() const {
  PriorDistribution out(*this);
  for (double& w : out.weights)
    if (w < kPriorFloor) w = kPriorFloor;
  return out.normalized();
}

CorrelationMatrix pearson_matrix(const std::vector<std::vector<double>>& features,
                                 std::span<const double> prototype) {
  if (features.empty())
    throw_error(ErrorKind::Contract, "pearson_matrix: need at least one feature row");
  const std::size_t n = features.size();
  const std::size_t d = prototype.size();
  std::vector<std::vector<double>> dev(n, std::vector<double>(d));
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (features[i].size() != d)
      throw_error(ErrorKind::Dimension, "pearson_matrix: feature row has dimension " +
                                            std::to_string(features[i].size()) + ", prototype has " +
                                            std::to_string(d));
    double norm2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dev[i][j] = features[i][j] - prototype[j];
      norm2 += dev[i][j] * dev[i][j];
    }
    norms[i] = std::sqrt(norm2);
  }
  CorrelationMatrix R;
  R.n = n;
  R.entries.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) R.entries[i * n + i] = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (norms[i] < kDegenerateNorm) continue;  // degenerate: row/col stays 0 off-diagonal
    for (std::size_t j = i + 1; j < n; ++j) {
      if (norms[j] < kDegenerateNorm) continue;
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += dev[i][k] * dev[j][k];
      double r = dot / (norms[i] * norms[j]);
      if (r > 1.0) r = 1.0;
      if (r < -1.0) r = -1.0;
      R.entries[i * n + j] = r;
      R.entries[j * n + i] = r;
    }
  }
  return R;
}

double batch_effective_count(const CorrelationMatrix& R) {
  const std::size_t n = R.n;
  if (n == 0) throw_error(ErrorKind::Contract, "batch_effective_count: empty matrix");
  const double a = 1.0 / static_cast<double>(n);
  double quad = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) quad += a * a * R.at(i, j);
  const double floor = 1.0 / static_cast<double>(n);
  if (quad < floor) quad = floor;
  return 1.0 / quad;
}

PriorEstimate effective_prior(
    const std::vector<std::map<int, std::vector<std::vector<double>>>>& batches_per_class,
    const std::map<int, std::vector<double>>& prototypes, std::size_t num_classes) {
  PriorEstimate est;
  est.raw.assign(num_classes, 0.0);
  est.seen.assign(num_classes, false);
  for (const auto& batch : batches_per_class) {
    for (const auto& [cls, rows] : batch) {
      if (cls < 0 || static_cast<std::size_t>(cls) >= num_classes)
        throw_error(ErrorKind::Contract, "effective_prior: class " + std::to_string(cls) + " out of range");
      auto proto = prototypes.find(cls);
      if (proto == prototypes.end())
        throw_error(ErrorKind::Contract,
                    "effective_prior: no prototype for class " + std::to_string(cls));
      est.raw[cls] += batch_effective_count(pearson_matrix(rows, proto->second));
      est.seen[cls] = true;
    }
  }
  est.normalized = PriorDistribution(est.raw).normalized();
  return est;
}

RoundPriorEstimator::RoundPriorEstimator(std::size_t num_classes, std::size_t feature_dim)
    : num_classes_(num_classes),
      feature_dim_(feature_dim),
      proto_sums_(num_classes * feature_dim, 0.0),
      proto_counts_(num_classes, 0),
      raw_(num_classes, 0.0) {}

void RoundPriorEstimator::observe_batch(const std::vector<std::vector<double>>& features,
                                        std::span<const int> labels) {
  if (features.size() != labels.size())
    throw_error(ErrorKind::Dimension, "observe_batch: feature/label count mismatch");
  std::map<int, std::vector<std::vector<double>>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int c = labels[i];
    if (c < 0 || static_cast<std::size_t>(c) >= num_classes_)
      throw_error(ErrorKind::Contract, "observe_batch: class " + std::to_string(c) + " out of range");
    by_class[c].push_back(features[i]);
  }
  // The batch joins the running prototype before it is scored, so the first
  // batch of a class is measured against its own mean.
  for (const auto& [c, rows] : by_class) {
    double* sums = proto_sums_.data() + static_cast<std::size_t>(c) * feature_dim_;
    for (const auto& row : rows) {
      for (std::size_t j = 0; j < feature_dim_; ++j) sums[j] += row[j];
      ++proto_counts_[c];
    }
  }
  for (const auto& [c, rows] : by_class) {
    const double* sums = proto_sums_.data() + static_cast<std::size_t>(c) * feature_dim_;
    std::vector<double> proto(feature_dim_);
    const double inv = 1.0 / static_cast<double>(proto_counts_[c]);
    for (std::size_t j = 0; j < feature_dim_; ++j) proto[j] = sums[j] * inv;
    raw_[c] += batch_effective_count(pearson_matrix(rows, proto));
  }
}

PriorEstimate RoundPriorEstimator::finish() const {
  PriorEstimate est;
  est.raw = raw_;
  est.seen.assign(num_classes_, false);
  for (std::size_t c = 0; c < num_classes_; ++c) est.seen[c] = raw_[c] > 0.0;
  est.normalized = PriorDistribution(raw_).normalized();
  return est;
}

PriorDistribution ema_update(const PriorDistribution& old_prior, const PriorDistribution& fresh,
                             double momentum) {
  if (old_prior.size() != fresh.size())
    throw_error(ErrorKind::Dimension, "ema_update: length mismatch");
  if (momentum < 0.0 || momentum > 1.0)
    throw_error(ErrorKind::Parameter, "ema_update: momentum must lie in [0, 1]");
  std::vector<double> w(old_prior.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    w[i] = momentum * old_prior.weights[i] + (1.0 - momentum) * fresh.weights[i];
  return PriorDistribution(std::move(w)).normalized();
}

PriorDistribution aggregate_global_prior(const std::vector<PriorDistribution>& estimates,
                                         const std::vector<long long>& client_sizes) {
  if (estimates.empty())
    throw_error(ErrorKind::Contract, "aggregate_global_prior: no client estimates");
  if (estimates.size() != client_sizes.size())
    throw_error(ErrorKind::Dimension, "aggregate_global_prior: estimate/size count mismatch");
  const std::size_t C = estimates.front().size();
  long long total = 0;
  for (long long n : client_sizes) total += n;
  if (total <= 0)
    throw_error(ErrorKind::Contract, "aggregate_global_prior: total client size must be positive");
  std::vector<double> w(C, 0.0);
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    if (estimates[k].size() != C)
      throw_error(ErrorKind::Dimension, "aggregate_global_prior: estimate length mismatch");
    const double share = static_cast<double>(client_sizes[k]) / static_cast<double>(total);
    const auto normalized = estimates[k].normalized();
    for (std::size_t c = 0; c < C; ++c) w[c] += share * normalized.weights[c];
  }
  return PriorDistribution(std::move(w)).normalized();
}

PriorDistribution fuse(const PriorDistribution& pi_g, const PriorDistribution& pi_k, double gamma) {
  if (pi_g.size() != pi_k.size())
    throw_error(ErrorKind::Dimension, "fuse: length mismatch");
  if (gamma < 0.0 || gamma > 1.0)
    throw_error(ErrorKind::Parameter, "fuse: gamma must lie in [0, 1], got " + std::to_string(gamma));
  std::vector<double> w(pi_g.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    w[i] = (1.0 - gamma) * pi_g.weights[i] + gamma * pi_k.weights[i];
  return PriorDistribution(std::move(w)).floored_normalized();
}

}  // namespace fedlt::prior
