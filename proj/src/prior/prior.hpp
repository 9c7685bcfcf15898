#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

namespace fedlt::prior {

inline constexpr double kPriorFloor = 1e-8;
inline constexpr double kDegenerateNorm = 1e-10;

/// Length-C nonnegative weight vector over classes.
struct PriorDistribution {
  std::vector<double> weights;

  PriorDistribution() = default;
  explicit PriorDistribution(std::vector<double> w) : weights(std::move(w)) {}
  static PriorDistribution uniform(std::size_t num_classes);

  std::size_t size() const { return weights.size(); }
  double sum() const;

  /// Scales the weights to sum to 1. A vector already within 1e-12 of the
  /// simplex is returned unchanged, so repeated normalization is bitwise
  /// stable. All-zero input normalizes to uniform.
  PriorDistribution normalized() const;

  /// max(w, kPriorFloor) per entry, then normalized.
  PriorDistribution floored_normalized() const;
};

/// Square sample-correlation matrix for one class within one batch.
/// Symmetric, unit diagonal, entries in [-1, 1]; rows of deviations with
/// norm < kDegenerateNorm are zeroed off-diagonal.
struct CorrelationMatrix {
  std::size_t n = 0;
  std::vector<double> entries;  // row-major n x n

  double at(std::size_t i, std::size_t j) const { return entries[i * n + j]; }
};

/// Unnormalized effective counts per class plus their normalized form.
/// raw[c] == 0 exactly when class c was unseen.
struct PriorEstimate {
  std::vector<double> raw;
  PriorDistribution normalized;
  std::vector<bool> seen;
};

/// R[i][j] = <h_i - mu, h_j - mu> / (|h_i - mu| |h_j - mu|).
CorrelationMatrix pearson_matrix(const std::vector<std::vector<double>>& features,
                                 std::span<const double> prototype);

/// 1 / (a^T R a) with uniform weights a = 1/n; a^T R a is floored at 1/n so a
/// batch contributes at most n effective samples.
double batch_effective_count(const CorrelationMatrix& R);

/// Sums batch_effective_count over all batches containing each class, with a
/// fixed prototype per class.
PriorEstimate effective_prior(
    const std::vector<std::map<int, std::vector<std::vector<double>>>>& batches_per_class,
    const std::map<int, std::vector<double>>& prototypes, std::size_t num_classes);

/// Training-time estimator: folds each batch into a running per-class
/// prototype, then scores the batch's correlation structure against it.
class RoundPriorEstimator {
 public:
  RoundPriorEstimator(std::size_t num_classes, std::size_t feature_dim);

  void observe_batch(const std::vector<std::vector<double>>& features, std::span<const int> labels);
  PriorEstimate finish() const;

 private:
  std::size_t num_classes_;
  std::size_t feature_dim_;
  std::vector<double> proto_sums_;       // C x d
  std::vector<long long> proto_counts_;  // C
  std::vector<double> raw_;
};

/// m * old + (1 - m) * fresh, renormalized.
PriorDistribution ema_update(const PriorDistribution& old_prior, const PriorDistribution& fresh,
                             double momentum);

/// Sample-count-weighted mean of the clients' normalized estimates.
PriorDistribution aggregate_global_prior(const std::vector<PriorDistribution>& estimates,
                                         const std::vector<long long>& client_sizes);

/// pi_mix = (1 - gamma) * pi_g + gamma * pi_k, floored and renormalized.
PriorDistribution fuse(const PriorDistribution& pi_g, const PriorDistribution& pi_k, double gamma);

}  // namespace fedlt::prior
