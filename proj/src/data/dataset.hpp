#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "util/rng.hpp"

namespace fedlt::data {

/// Inputs are row-major [N x input_dim]; labels[i] in [0, C). Classes are
/// ordered by frequency after generation: i < j implies counts[i] >= counts[j].
struct LabeledDataset {
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> inputs;
  std::vector<int> labels;
  std::vector<long long> class_counts;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {inputs.data() + i * input_dim, input_dim};
  }
};

/// Per-client index lists (disjoint cover of the dataset) and per-client
/// per-class counts n_k^c with sum_k n_k^c == N^c.
struct ClientPartition {
  std::vector<std::vector<std::size_t>> client_indices;
  std::vector<std::vector<long long>> client_class_counts;  // K x C
  int num_clients() const { return static_cast<int>(client_indices.size()); }
};

struct AugmentConfig {
  double weak_noise_sigma = 0.24;
  double strong_noise_sigma = 0.39;
  double strong_mask_prob = 0.0;
  double strong_scale_lo = 1.0;
  double strong_scale_hi = 1.0;

  void validate() const;
};

/// N^c = round(n_max * IF^(-(c-1)/(C-1))) for c = 1..C; nonincreasing,
/// N^1 == n_max, N^1/N^C ~= IF.
std::vector<long long> longtail_counts(int num_classes, long long n_max, double imbalance_factor);

/// Unit-norm class mean directions scaled by class_sep; deterministic per seed.
std::vector<std::vector<double>> make_class_means(int num_classes, int input_dim,
                                                  double class_sep, std::uint64_t seed);

/// Samples counts[c] points from Gaussian(mean_c, I) per class, classes in
/// order (so class c's indices are contiguous).
LabeledDataset sample_dataset(const std::vector<std::vector<double>>& means,
                              const std::vector<long long>& counts, std::uint64_t seed);

/// make_class_means + sample_dataset with seeds derived from `seed`.
LabeledDataset generate_synthetic(int num_classes, const std::vector<long long>& counts,
                                  int input_dim, double class_sep, std::uint64_t seed);

/// Per class, draws proportions ~ Dirichlet(alpha * 1_K) and assigns that
/// class's samples by largest-remainder rounding, so sum_k n_k^c == N^c exactly.
ClientPartition dirichlet_partition(const LabeledDataset& ds, int num_clients, double alpha,
                                    std::uint64_t seed);

/// weak(x) = x + N(0, weak_noise_sigma^2)
void weak_augment(std::span<const double> x, std::span<double> out, const AugmentConfig& cfg,
                  util::Rng& rng);

/// strong(x): per-coordinate mask-to-zero with strong_mask_prob, scale the
/// row by uniform(scale_lo, scale_hi), then add N(0, strong_noise_sigma^2).
void strong_augment(std::span<const double> x, std::span<double> out, const AugmentConfig& cfg,
                    util::Rng& rng);

/// "FEDLT-DATA v1" header, "N input_dim C" dims line, then one
/// "v,...,v,label" row per sample. Values round-trip exactly.
void save_dataset(const std::string& path, const LabeledDataset& ds);
LabeledDataset load_dataset(const std::string& path);

/// One line per client listing its indices, space separated.
void save_partition(const std::string& path, const ClientPartition& part);
ClientPartition load_partition(const std::string& path, const LabeledDataset& ds);

}  // namespace fedlt::data
