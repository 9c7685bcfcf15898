#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "ad/tensor.hpp"
#include "util/rng.hpp"

namespace fedlt::model {

struct ArchitectureConfig {
  std::size_t input_dim = 32;
  std::vector<std::size_t> hidden = {64, 64};  // relu layers before the feature layer
  std::size_t feature_dim = 32;
  std::size_t num_classes = 10;
};

/// Ordered (name, shape) pairs; two models built from the same architecture
/// config have identical manifests.
using Manifest = std::vector<std::pair<std::string, ad::Shape>>;

/// Flat ordered parameter vector plus its shape manifest; the unit of
/// FedAvg aggregation.
struct ModelParams {
  std::vector<double> flat;
  Manifest manifest;
};

/// Feature extractor (linear+relu stack ending in a linear feature layer)
/// followed by a linear classification head.
class MLPClassifier {
 public:
  explicit MLPClassifier(const ArchitectureConfig& arch);

  /// uniform(-s, s) with s = 1/sqrt(fan_in) for weights and biases.
  void init_params(util::Rng& rng);

  ad::TensorPtr forward_features(ad::Tape& tape, const ad::TensorPtr& x) const;
  ad::TensorPtr head_logits(ad::Tape& tape, const ad::TensorPtr& features) const;
  ad::TensorPtr forward_logits(ad::Tape& tape, const ad::TensorPtr& x) const;

  std::vector<ad::TensorPtr> parameters() const;
  std::size_t parameter_count() const;

  Manifest manifest() const;
  ModelParams flatten() const;
  void unflatten(const ModelParams& params);

  const ArchitectureConfig& arch() const { return arch_; }
  std::size_t feature_dim() const { return arch_.feature_dim; }
  std::size_t num_classes() const { return arch_.num_classes; }
  std::size_t input_dim() const { return arch_.input_dim; }

 private:
  ArchitectureConfig arch_;
  // extractor weights/biases in layer order, then head weight/bias
  std::vector<ad::TensorPtr> weights_;
  std::vector<ad::TensorPtr> biases_;
};

/// Per-class arithmetic mean of feature rows. Classes absent from `labels`
/// are absent from the map.
std::map<int, std::vector<double>> class_prototypes(const ad::Tensor& features,
                                                    std::span<const int> labels);

/// Checkpoint format: "FEDLT-CKPT v1" header, one "name dim dim ..." manifest
/// line per tensor, a "payload" separator, then raw little-endian float64.
/// Round-trip is bit-exact.
void save_checkpoint(const std::string& path, const MLPClassifier& model);
void load_checkpoint(const std::string& path, MLPClassifier& model);

}  // namespace fedlt::model
