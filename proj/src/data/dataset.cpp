#include "data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "util/error.hpp"
#include "util/strings.hpp"

namespace fedlt::data {

void AugmentConfig::validate() const {
  if (!(weak_noise_sigma >= 0.0) || !(strong_noise_sigma >= 0.0))
    throw_error(ErrorKind::Parameter, "augment: noise sigmas must be >= 0");
  if (weak_noise_sigma > strong_noise_sigma)
    throw_error(ErrorKind::Parameter, "augment: weak_noise_sigma must not exceed strong_noise_sigma");
  if (strong_mask_prob < 0.0 || strong_mask_prob > 1.0)
    throw_error(ErrorKind::Parameter, "augment: strong_mask_prob must lie in [0, 1]");
  if (!(strong_scale_lo > 0.0) || strong_scale_lo > strong_scale_hi)
    throw_error(ErrorKind::Parameter, "augment: need 0 < strong_scale_lo <= strong_scale_hi");
}

std::vector<long long> longtail_counts(int num_classes, long long n_max, double imbalance_factor) {
  if (num_classes < 2)
    throw_error(ErrorKind::Parameter, "longtail_counts: num_classes must be >= 2");
  if (n_max < num_classes)
    throw_error(ErrorKind::Parameter, "longtail_counts: n_max must be >= num_classes");
  if (!(imbalance_factor >= 1.0))
    throw_error(ErrorKind::Parameter, "longtail_counts: imbalance_factor must be >= 1, got " +
                                          std::to_string(imbalance_factor));
  std::vector<long long> counts(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    const double expo = -static_cast<double>(c) / static_cast<double>(num_classes - 1);
    counts[c] = std::llround(static_cast<double>(n_max) * std::pow(imbalance_factor, expo));
    if (counts[c] < 1) counts[c] = 1;
  }
  return counts;
}

std::vector<std::vector<double>> make_class_means(int num_classes, int input_dim,
                                                  double class_sep, std::uint64_t seed) {
  if (input_dim < 2) throw_error(ErrorKind::Parameter, "make_class_means: input_dim must be >= 2");
  util::Rng rng(util::derive_seed(seed, "class-means"));

  // Class means live in a shared low-dimensional subspace whose basis is
  // dense in the input coordinates: the class signal is redundant across
  // coordinates while most directions carry pure noise, mirroring data whose
  // semantics sit on a low-dimensional manifold. Means have norm class_sep,
  // so typical pairwise distances are class_sep * sqrt(2) with unit noise.
  const int subspace_dim = std::max(2, std::min(num_classes, input_dim / 4));
  std::vector<std::vector<double>> basis(subspace_dim, std::vector<double>(input_dim));
  for (int b = 0; b < subspace_dim; ++b) {
    auto& v = basis[b];
    for (double& x : v) x = rng.normal();
    for (int p = 0; p < b; ++p) {  // Gram-Schmidt
      double dot = 0.0;
      for (int j = 0; j < input_dim; ++j) dot += v[j] * basis[p][j];
      for (int j = 0; j < input_dim; ++j) v[j] -= dot * basis[p][j];
    }
    double norm2 = 0.0;
    for (double x : v) norm2 += x * x;
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
  }

  const double radius = class_sep;
  std::vector<std::vector<double>> means(num_classes, std::vector<double>(input_dim, 0.0));
  for (auto& mu : means) {
    std::vector<double> coeff(subspace_dim);
    double norm2 = 0.0;
    for (double& c : coeff) {
      c = rng.normal();
      norm2 += c * c;
    }
    const double scale = radius / std::sqrt(norm2);
    for (int b = 0; b < subspace_dim; ++b)
      for (int j = 0; j < input_dim; ++j) mu[j] += scale * coeff[b] * basis[b][j];
  }
  return means;
}

LabeledDataset sample_dataset(const std::vector<std::vector<double>>& means,
                              const std::vector<long long>& counts, std::uint64_t seed) {
  if (means.size() != counts.size())
    throw_error(ErrorKind::Parameter, "sample_dataset: means/counts size mismatch");
  LabeledDataset ds;
  ds.num_classes = means.size();
  ds.input_dim = means.front().size();
  ds.class_counts = counts;
  util::Rng rng(util::derive_seed(seed, "samples"));
  for (std::size_t c = 0; c < means.size(); ++c) {
    for (long long i = 0; i < counts[c]; ++i) {
      for (std::size_t j = 0; j < ds.input_dim; ++j)
        ds.inputs.push_back(means[c][j] + rng.normal());
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

LabeledDataset generate_synthetic(int num_classes, const std::vector<long long>& counts,
                                  int input_dim, double class_sep, std::uint64_t seed) {
  auto means = make_class_means(num_classes, input_dim, class_sep, seed);
  return sample_dataset(means, counts, seed);
}

ClientPartition dirichlet_partition(const LabeledDataset& ds, int num_clients, double alpha,
                                    std::uint64_t seed) {
  if (num_clients < 1) throw_error(ErrorKind::Parameter, "dirichlet_partition: need >= 1 client");
  if (!(alpha > 0.0)) throw_error(ErrorKind::Parameter, "dirichlet_partition: alpha must be > 0");
  const std::size_t K = static_cast<std::size_t>(num_clients);
  const std::size_t C = ds.num_classes;

  std::vector<std::vector<std::size_t>> by_class(C);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);

  ClientPartition part;
  part.client_indices.assign(K, {});
  part.client_class_counts.assign(K, std::vector<long long>(C, 0));
  util::Rng rng(util::derive_seed(seed, "partition"));

  for (std::size_t c = 0; c < C; ++c) {
    const std::size_t n = by_class[c].size();
    if (n == 0) continue;
    std::vector<double> props(K);
    double total = 0.0;
    for (double& p : props) {
      p = rng.gamma(alpha, 1.0);
      total += p;
    }
    if (total <= 0.0) {  // degenerate gamma draws; fall back to uniform
      std::fill(props.begin(), props.end(), 1.0);
      total = static_cast<double>(K);
    }
    // Largest-remainder rounding keeps sum_k n_k^c == N^c exact.
    std::vector<long long> quota(K);
    std::vector<std::pair<double, std::size_t>> remainders(K);
    long long assigned = 0;
    for (std::size_t k = 0; k < K; ++k) {
      const double ideal = static_cast<double>(n) * props[k] / total;
      quota[k] = static_cast<long long>(std::floor(ideal));
      assigned += quota[k];
      remainders[k] = {ideal - std::floor(ideal), k};
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (long long r = static_cast<long long>(n) - assigned; r > 0; --r)
      ++quota[remainders[static_cast<std::size_t>(r - 1) % K].second];

    std::size_t cursor = 0;
    for (std::size_t k = 0; k < K; ++k) {
      for (long long i = 0; i < quota[k]; ++i)
        part.client_indices[k].push_back(by_class[c][cursor++]);
      part.client_class_counts[k][c] = quota[k];
    }
  }
  return part;
}

void weak_augment(std::span<const double> x, std::span<double> out, const AugmentConfig& cfg,
                  util::Rng& rng) {
  if (cfg.weak_noise_sigma == 0.0) {
    std::copy(x.begin(), x.end(), out.begin());
    return;
  }
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] + rng.normal(0.0, cfg.weak_noise_sigma);
}

void strong_augment(std::span<const double> x, std::span<double> out, const AugmentConfig& cfg,
                    util::Rng& rng) {
  std::copy(x.begin(), x.end(), out.begin());
  if (cfg.strong_mask_prob > 0.0)
    for (double& v : out)
      if (rng.bernoulli(cfg.strong_mask_prob)) v = 0.0;
  const double s = cfg.strong_scale_lo == cfg.strong_scale_hi
                       ? cfg.strong_scale_lo
                       : rng.uniform(cfg.strong_scale_lo, cfg.strong_scale_hi);
  for (double& v : out) v *= s;
  if (cfg.strong_noise_sigma > 0.0)
    for (double& v : out) v += rng.normal(0.0, cfg.strong_noise_sigma);
}

void save_dataset(const std::string& path, const LabeledDataset& ds) {
  std::ofstream out(path);
  if (!out) throw_error(ErrorKind::Io, "cannot write dataset '" + path + "'");
  out << "FEDLT-DATA v1\n";
  out << ds.size() << " " << ds.input_dim << " " << ds.num_classes << "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.input_dim; ++j)
      out << util::format_double(ds.inputs[i * ds.input_dim + j]) << ",";
    out << ds.labels[i] << "\n";
  }
  if (!out) throw_error(ErrorKind::Io, "short write for dataset '" + path + "'");
}

LabeledDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_error(ErrorKind::Io, "cannot open dataset '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != "FEDLT-DATA v1")
    throw_error(ErrorKind::Parse, "dataset '" + path + "': bad header '" + line + "'");
  if (!std::getline(in, line))
    throw_error(ErrorKind::Parse, "dataset '" + path + "': missing dims line");
  std::istringstream dims(line);
  std::size_t n = 0, d = 0, c = 0;
  if (!(dims >> n >> d >> c))
    throw_error(ErrorKind::Parse, "dataset '" + path + "': bad dims line '" + line + "'");
  LabeledDataset ds;
  ds.input_dim = d;
  ds.num_classes = c;
  ds.class_counts.assign(c, 0);
  ds.inputs.reserve(n * d);
  ds.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line))
      throw_error(ErrorKind::Parse, "dataset '" + path + "': truncated at row " + std::to_string(i));
    auto fields = util::split(line, ',');
    if (fields.size() != d + 1)
      throw_error(ErrorKind::Parse, "dataset '" + path + "': row " + std::to_string(i) + " has " +
                                        std::to_string(fields.size()) + " fields, expected " +
                                        std::to_string(d + 1));
    for (std::size_t j = 0; j < d; ++j)
      ds.inputs.push_back(util::parse_double(fields[j], "dataset value"));
    const long long label = util::parse_int(fields[d], "dataset label");
    if (label < 0 || label >= static_cast<long long>(c))
      throw_error(ErrorKind::Parse, "dataset '" + path + "': label " + std::to_string(label) +
                                        " out of range at row " + std::to_string(i));
    ds.labels.push_back(static_cast<int>(label));
    ++ds.class_counts[static_cast<std::size_t>(label)];
  }
  return ds;
}

void save_partition(const std::string& path, const ClientPartition& part) {
  std::ofstream out(path);
  if (!out) throw_error(ErrorKind::Io, "cannot write partition '" + path + "'");
  for (const auto& indices : part.client_indices) {
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (i) out << " ";
      out << indices[i];
    }
    out << "\n";
  }
  if (!out) throw_error(ErrorKind::Io, "short write for partition '" + path + "'");
}

ClientPartition load_partition(const std::string& path, const LabeledDataset& ds) {
  std::ifstream in(path);
  if (!in) throw_error(ErrorKind::Io, "cannot open partition '" + path + "'");
  ClientPartition part;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::size_t> indices;
    std::vector<long long> counts(ds.num_classes, 0);
    std::istringstream ls(line);
    std::size_t idx;
    while (ls >> idx) {
      if (idx >= ds.size())
        throw_error(ErrorKind::Parse, "partition '" + path + "': index " + std::to_string(idx) +
                                          " out of range");
      indices.push_back(idx);
      ++counts[ds.labels[idx]];
    }
    part.client_indices.push_back(std::move(indices));
    part.client_class_counts.push_back(std::move(counts));
  }
  return part;
}

}  // namespace fedlt::data
