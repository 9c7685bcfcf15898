#pragma once

#include <string>
#include <vector>

#include "data/dataset.hpp"
#include "fed/federation.hpp"
#include "model/mlp.hpp"
#include "util/config.hpp"

namespace fedlt::exp {

/// A fully parsed run description: dataset + federation settings + variant
/// list. All variants share the dataset and root seed, so cross-variant
/// comparisons are paired.
struct ExperimentSpec {
  util::KeyValueConfig raw;

  // data
  int num_classes = 10;
  int input_dim = 32;
  double class_sep = 3.0;
  long long n_max = 500;
  double imbalance_factor = 100.0;
  long long eval_per_class = 50;
  double alpha = 0.5;

  model::ArchitectureConfig arch;
  fed::TrainConfig train;  // algorithm is overridden per variant
  std::vector<std::string> variants;

  static ExperimentSpec from_config(const util::KeyValueConfig& cfg);
};

struct BuiltData {
  data::LabeledDataset train;
  data::LabeledDataset test;
  data::ClientPartition partition;
};

BuiltData build_data(const ExperimentSpec& spec);

/// Writes train.data, test.data and partition.txt under out_dir; returns the
/// per-client per-class count table.
std::string cmd_generate(const ExperimentSpec& spec, const std::string& out_dir);

/// Runs every variant on the shared dataset; writes <variant>_rounds.csv,
/// <variant>_rounds.jsonl and <variant>_final.ckpt under out_dir; returns the
/// final summary table.
std::string cmd_train(const ExperimentSpec& spec, const std::string& out_dir);

/// Paired runs of variants[0] across values of one parameter
/// (gamma | lambda | alpha | IF); returns the value -> accuracy table.
std::string cmd_sweep(const ExperimentSpec& spec, const std::string& out_dir,
                      const std::string& param, const std::vector<std::string>& values);

/// Merges round logs aligned by round index plus a final-round comparison.
std::string cmd_report(const std::vector<std::string>& log_paths);

}  // namespace fedlt::exp
