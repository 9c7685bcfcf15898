#include "model/mlp.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "util/error.hpp"
#include "util/strings.hpp"

namespace fedlt::model {

namespace {

std::vector<std::size_t> layer_dims(const ArchitectureConfig& a) {
  std::vector<std::size_t> dims;
  dims.push_back(a.input_dim);
  for (std::size_t h : a.hidden) dims.push_back(h);
  dims.push_back(a.feature_dim);
  dims.push_back(a.num_classes);
  return dims;
}

}  // namespace

MLPClassifier::MLPClassifier(const ArchitectureConfig& arch) : arch_(arch) {
  if (arch.input_dim == 0 || arch.feature_dim == 0 || arch.num_classes == 0)
    throw_error(ErrorKind::Parameter, "architecture dimensions must be positive");
  auto dims = layer_dims(arch_);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    weights_.push_back(ad::Tensor::zeros({dims[l], dims[l + 1]}, true));
    biases_.push_back(ad::Tensor::zeros({dims[l + 1]}, true));
  }
}

void MLPClassifier::init_params(util::Rng& rng) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const double s = 1.0 / std::sqrt(static_cast<double>(weights_[l]->shape[0]));
    for (double& v : weights_[l]->values) v = rng.uniform(-s, s);
    for (double& v : biases_[l]->values) v = rng.uniform(-s, s);
  }
}

ad::TensorPtr MLPClassifier::forward_features(ad::Tape& tape, const ad::TensorPtr& x) const {
  if (!x->is_matrix() || x->cols() != arch_.input_dim)
    throw_error(ErrorKind::Dimension, "forward: input " + ad::shape_to_string(x->shape) +
                                          " incompatible with input_dim " + std::to_string(arch_.input_dim));
  ad::TensorPtr h = x;
  const std::size_t extractor_layers = weights_.size() - 1;
  for (std::size_t l = 0; l < extractor_layers; ++l) {
    h = tape.add_bias(tape.matmul(h, weights_[l]), biases_[l]);
    if (l + 1 < extractor_layers) h = tape.relu(h);  // feature layer stays linear
  }
  return h;
}

ad::TensorPtr MLPClassifier::head_logits(ad::Tape& tape, const ad::TensorPtr& features) const {
  return tape.add_bias(tape.matmul(features, weights_.back()), biases_.back());
}

ad::TensorPtr MLPClassifier::forward_logits(ad::Tape& tape, const ad::TensorPtr& x) const {
  return head_logits(tape, forward_features(tape, x));
}

std::vector<ad::TensorPtr> MLPClassifier::parameters() const {
  std::vector<ad::TensorPtr> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(weights_[l]);
    out.push_back(biases_[l]);
  }
  return out;
}

std::size_t MLPClassifier::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p->numel();
  return n;
}

Manifest MLPClassifier::manifest() const {
  Manifest m;
  const std::size_t head = weights_.size() - 1;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    std::string base = l == head ? "head" : "extractor." + std::to_string(l);
    m.emplace_back(base + ".weight", weights_[l]->shape);
    m.emplace_back(base + ".bias", biases_[l]->shape);
  }
  return m;
}

ModelParams MLPClassifier::flatten() const {
  ModelParams out;
  out.manifest = manifest();
  out.flat.reserve(parameter_count());
  for (const auto& p : parameters())
    out.flat.insert(out.flat.end(), p->values.begin(), p->values.end());
  return out;
}

void MLPClassifier::unflatten(const ModelParams& params) {
  if (params.manifest != manifest())
    throw_error(ErrorKind::Aggregation, "unflatten: parameter manifest does not match this model");
  if (params.flat.size() != parameter_count())
    throw_error(ErrorKind::Aggregation, "unflatten: expected " + std::to_string(parameter_count()) +
                                            " values, got " + std::to_string(params.flat.size()));
  std::size_t off = 0;
  for (const auto& p : parameters()) {
    std::copy(params.flat.begin() + off, params.flat.begin() + off + p->numel(), p->values.begin());
    off += p->numel();
  }
}

std::map<int, std::vector<double>> class_prototypes(const ad::Tensor& features,
                                                    std::span<const int> labels) {
  if (features.rows() != labels.size())
    throw_error(ErrorKind::Dimension, "class_prototypes: " + std::to_string(features.rows()) +
                                          " feature rows vs " + std::to_string(labels.size()) + " labels");
  const std::size_t d = features.cols();
  std::map<int, std::vector<double>> sums;
  std::map<int, std::size_t> counts;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& s = sums[labels[i]];
    if (s.empty()) s.assign(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) s[j] += features.values[i * d + j];
    ++counts[labels[i]];
  }
  for (auto& [c, s] : sums) {
    const double inv = 1.0 / static_cast<double>(counts[c]);
    for (double& v : s) v *= inv;
  }
  return sums;
}

void save_checkpoint(const std::string& path, const MLPClassifier& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_error(ErrorKind::Io, "cannot write checkpoint '" + path + "'");
  out << "FEDLT-CKPT v1\n";
  for (const auto& [name, shape] : model.manifest()) {
    out << name;
    for (std::size_t d : shape) out << " " << d;
    out << "\n";
  }
  out << "payload\n";
  static_assert(std::endian::native == std::endian::little, "payload is written little-endian");
  for (const auto& p : model.parameters())
    out.write(reinterpret_cast<const char*>(p->values.data()),
              static_cast<std::streamsize>(p->values.size() * sizeof(double)));
  if (!out) throw_error(ErrorKind::Io, "short write for checkpoint '" + path + "'");
}

void load_checkpoint(const std::string& path, MLPClassifier& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_error(ErrorKind::Io, "cannot open checkpoint '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != "FEDLT-CKPT v1")
    throw_error(ErrorKind::Parse, "checkpoint '" + path + "': bad header '" + line + "'");
  Manifest manifest;
  while (std::getline(in, line)) {
    if (line == "payload") break;
    std::istringstream ls(line);
    std::string name;
    ls >> name;
    ad::Shape shape;
    std::size_t d;
    while (ls >> d) shape.push_back(d);
    if (name.empty() || shape.empty())
      throw_error(ErrorKind::Parse, "checkpoint '" + path + "': bad manifest line '" + line + "'");
    manifest.emplace_back(name, shape);
  }
  if (manifest != model.manifest())
    throw_error(ErrorKind::Aggregation, "checkpoint '" + path + "': manifest does not match model");
  ModelParams params;
  params.manifest = manifest;
  params.flat.resize(model.parameter_count());
  in.read(reinterpret_cast<char*>(params.flat.data()),
          static_cast<std::streamsize>(params.flat.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(params.flat.size() * sizeof(double)))
    throw_error(ErrorKind::Parse, "checkpoint '" + path + "': truncated payload");
  model.unflatten(params);
}

}  // namespace fedlt::model
