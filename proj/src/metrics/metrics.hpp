#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prior/prior.hpp"

namespace fedlt::metrics {

/// How classes are split into many/medium/few groups.
///  - Relative (default): classes ranked by global count and cut into
///    top/middle/bottom thirds.
///  - Absolute: many if count > many_min, few if count < few_max_exclusive.
struct GroupThresholds {
  bool relative = true;
  long long many_min = 100;           // many: count > many_min
  long long few_max_exclusive = 20;   // few: count < few_max_exclusive
};

struct GroupedAccuracy {
  double all = 0.0;
  std::optional<double> many;
  std::optional<double> medium;
  std::optional<double> few;
};

enum class ClassGroup { Many, Medium, Few };

std::vector<ClassGroup> assign_groups(const std::vector<long long>& class_counts,
                                      const GroupThresholds& thresholds);

GroupedAccuracy grouped_accuracy(std::span<const int> predictions, std::span<const int> labels,
                                 const std::vector<long long>& class_counts,
                                 const GroupThresholds& thresholds);

struct NcAngles {
  double min_deg = 0.0;
  double max_deg = 0.0;
  double mean_deg = 0.0;
  double etf_optimum_deg = 0.0;
  int excluded_zero_norm = 0;
};

/// Pairwise angles between raw prototype directions; etf_optimum =
/// arccos(-1/(C-1)) in degrees for C prototypes. Zero-norm prototypes are
/// excluded and counted.
NcAngles nc_angles(const std::map<int, std::vector<double>>& prototypes);

/// Euclidean distance between two distributions of equal length.
double prior_l2(const prior::PriorDistribution& estimate, const prior::PriorDistribution& oracle);

/// Mean cosine similarity between two feature matrices, row by row.
double mean_feature_cosine(const std::vector<double>& a, const std::vector<double>& b,
                           std::size_t rows, std::size_t cols);

/// Wire form of one client's uploaded prior estimate.
struct PriorUpload {
  int client = 0;
  long long num_samples = 0;
  std::vector<double> prior;
};

/// Per-round record written to the round log. The CSV row carries the metric
/// columns; the structured-object line additionally carries the clients'
/// uploaded prior estimates.
struct RoundMetrics {
  int round = 0;
  double loss_total = 0.0;
  double loss_dla = 0.0;
  double loss_asd = 0.0;
  double acc_all = 0.0;
  std::optional<double> acc_many;
  std::optional<double> acc_medium;
  std::optional<double> acc_few;
  double nc_min_angle = 0.0;
  double nc_max_angle = 0.0;
  double nc_mean_angle = 0.0;
  double nc_etf_optimum = 0.0;
  double prior_l2 = 0.0;
  double feat_cos_global_local = 0.0;
  std::vector<PriorUpload> uploads;

  static std::string csv_header();
  std::string to_csv() const;
  std::string to_json() const;
};

}  // namespace fedlt::metrics
