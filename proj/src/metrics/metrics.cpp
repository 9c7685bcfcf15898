#include "metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "util/error.hpp"
#include "util/strings.hpp"

namespace fedlt::metrics {

std::vector<ClassGroup> assign_groups(const std::vector<long long>& class_counts,
                                      const GroupThresholds& thresholds) {
  const std::size_t C = class_counts.size();
  std::vector<ClassGroup> groups(C, ClassGroup::Medium);
  if (!thresholds.relative) {
    for (std::size_t c = 0; c < C; ++c) {
      if (class_counts[c] > thresholds.many_min)
        groups[c] = ClassGroup::Many;
      else if (class_counts[c] < thresholds.few_max_exclusive)
        groups[c] = ClassGroup::Few;
    }
    return groups;
  }
  // Rank by count (descending, ties by class index) and cut into thirds.
  std::vector<std::size_t> order(C);
  for (std::size_t c = 0; c < C; ++c) order[c] = c;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return class_counts[a] > class_counts[b];
  });
  const std::size_t many_end = C / 3;
  const std::size_t medium_end = 2 * C / 3;
  for (std::size_t rank = 0; rank < C; ++rank) {
    if (rank < many_end)
      groups[order[rank]] = ClassGroup::Many;
    else if (rank < medium_end)
      groups[order[rank]] = ClassGroup::Medium;
    else
      groups[order[rank]] = ClassGroup::Few;
  }
  return groups;
}

GroupedAccuracy grouped_accuracy(std::span<const int> predictions, std::span<const int> labels,
                                 const std::vector<long long>& class_counts,
                                 const GroupThresholds& thresholds) {
  if (predictions.size() != labels.size())
    throw_error(ErrorKind::Dimension, "grouped_accuracy: prediction/label count mismatch");
  if (labels.empty()) throw_error(ErrorKind::Contract, "grouped_accuracy: empty evaluation set");
  const auto groups = assign_groups(class_counts, thresholds);
  long long hit_all = 0, n_all = 0;
  long long hit_g[3] = {0, 0, 0}, n_g[3] = {0, 0, 0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= groups.size())
      throw_error(ErrorKind::Contract, "grouped_accuracy: label out of range");
    const int g = static_cast<int>(groups[y]);
    const bool hit = predictions[i] == y;
    ++n_all;
    hit_all += hit;
    ++n_g[g];
    hit_g[g] += hit;
  }
  GroupedAccuracy out;
  out.all = static_cast<double>(hit_all) / static_cast<double>(n_all);
  auto ratio = [&](ClassGroup g) -> std::optional<double> {
    const int i = static_cast<int>(g);
    if (n_g[i] == 0) return std::nullopt;  // empty group is absent, not 0
    return static_cast<double>(hit_g[i]) / static_cast<double>(n_g[i]);
  };
  out.many = ratio(ClassGroup::Many);
  out.medium = ratio(ClassGroup::Medium);
  out.few = ratio(ClassGroup::Few);
  return out;
}

NcAngles nc_angles(const std::map<int, std::vector<double>>& prototypes) {
  if (prototypes.size() < 2)
    throw_error(ErrorKind::Contract, "nc_angles: need at least two prototypes");
  const std::size_t d = prototypes.begin()->second.size();

  // Raw (uncentered) prototype directions. Centering forces the average
  // cosine toward -1/(C-1) for any prototype set, which hides how close the
  // learned geometry actually is to the ETF optimum.
  std::vector<std::vector<double>> dirs;
  int excluded = 0;
  for (const auto& [c, mu] : prototypes) {
    if (mu.size() != d) throw_error(ErrorKind::Dimension, "nc_angles: prototype dimension mismatch");
    double norm2 = 0.0;
    for (double v : mu) norm2 += v * v;
    if (std::sqrt(norm2) < 1e-12) {
      ++excluded;
      continue;
    }
    dirs.push_back(mu);
  }
  if (dirs.size() < 2)
    throw_error(ErrorKind::Contract, "nc_angles: fewer than two nonzero prototypes");

  NcAngles out;
  out.excluded_zero_norm = excluded;
  out.min_deg = 180.0;
  out.max_deg = 0.0;
  double sum = 0.0;
  std::size_t pairs = 0;
  const double rad2deg = 180.0 / std::numbers::pi;
  for (std::size_t i = 0; i < dirs.size(); ++i)
    for (std::size_t j = i + 1; j < dirs.size(); ++j) {
      double dot = 0.0, ni = 0.0, nj = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        dot += dirs[i][k] * dirs[j][k];
        ni += dirs[i][k] * dirs[i][k];
        nj += dirs[j][k] * dirs[j][k];
      }
      double cosv = dot / std::sqrt(ni * nj);
      cosv = std::clamp(cosv, -1.0, 1.0);
      const double ang = std::acos(cosv) * rad2deg;
      out.min_deg = std::min(out.min_deg, ang);
      out.max_deg = std::max(out.max_deg, ang);
      sum += ang;
      ++pairs;
    }
  out.mean_deg = sum / static_cast<double>(pairs);
  const double C = static_cast<double>(prototypes.size());
  out.etf_optimum_deg = std::acos(-1.0 / (C - 1.0)) * rad2deg;
  return out;
}

double prior_l2(const prior::PriorDistribution& estimate, const prior::PriorDistribution& oracle) {
  if (estimate.size() != oracle.size())
    throw_error(ErrorKind::Dimension, "prior_l2: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double diff = estimate.weights[i] - oracle.weights[i];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

double mean_feature_cosine(const std::vector<double>& a, const std::vector<double>& b,
                           std::size_t rows, std::size_t cols) {
  if (a.size() != rows * cols || b.size() != rows * cols)
    throw_error(ErrorKind::Dimension, "mean_feature_cosine: size mismatch");
  if (rows == 0) throw_error(ErrorKind::Contract, "mean_feature_cosine: empty probe set");
  double acc = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double x = a[i * cols + j], y = b[i * cols + j];
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
    const double denom = std::sqrt(na * nb);
    acc += denom < 1e-300 ? 0.0 : std::clamp(dot / denom, -1.0, 1.0);
  }
  return acc / static_cast<double>(rows);
}

namespace {

std::string opt_str(const std::optional<double>& v) {
  return v ? util::format_double(*v) : "nan";
}

}  // namespace

std::string RoundMetrics::csv_header() {
  return "round,loss_total,loss_dla,loss_asd,acc_all,acc_many,acc_medium,acc_few,"
         "nc_min_angle,nc_max_angle,nc_mean_angle,nc_etf_optimum,prior_l2,feat_cos_global_local";
}

std::string RoundMetrics::to_csv() const {
  std::ostringstream out;
  out << round << "," << util::format_double(loss_total) << "," << util::format_double(loss_dla)
      << "," << util::format_double(loss_asd) << "," << util::format_double(acc_all) << ","
      << opt_str(acc_many) << "," << opt_str(acc_medium) << "," << opt_str(acc_few) << ","
      << util::format_double(nc_min_angle) << "," << util::format_double(nc_max_angle) << ","
      << util::format_double(nc_mean_angle) << "," << util::format_double(nc_etf_optimum) << ","
      << util::format_double(prior_l2) << "," << util::format_double(feat_cos_global_local);
  return out.str();
}

std::string RoundMetrics::to_json() const {
  nlohmann::json j;
  j["round"] = round;
  j["loss_total"] = loss_total;
  j["loss_dla"] = loss_dla;
  j["loss_asd"] = loss_asd;
  j["acc_all"] = acc_all;
  j["acc_many"] = acc_many ? nlohmann::json(*acc_many) : nlohmann::json();
  j["acc_medium"] = acc_medium ? nlohmann::json(*acc_medium) : nlohmann::json();
  j["acc_few"] = acc_few ? nlohmann::json(*acc_few) : nlohmann::json();
  j["nc_min_angle"] = nc_min_angle;
  j["nc_max_angle"] = nc_max_angle;
  j["nc_mean_angle"] = nc_mean_angle;
  j["nc_etf_optimum"] = nc_etf_optimum;
  j["prior_l2"] = prior_l2;
  j["feat_cos_global_local"] = feat_cos_global_local;
  j["uploads"] = nlohmann::json::array();
  for (const auto& up : uploads) {
    nlohmann::json u;
    u["client"] = up.client;
    u["num_samples"] = up.num_samples;
    u["prior"] = up.prior;
    j["uploads"].push_back(u);
  }
  return j.dump();
}

}  // namespace fedlt::metrics
