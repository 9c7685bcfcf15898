#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "data/dataset.hpp"
#include "metrics/metrics.hpp"
#include "model/mlp.hpp"
#include "prior/prior.hpp"

namespace fedlt::fed {

enum class Algorithm { FedYoYo, FedAvg, FedAvgBsm, FedProx };

Algorithm parse_algorithm(const std::string& name);
std::string algorithm_name(Algorithm alg);

struct TrainConfig {
  int num_clients = 10;
  int clients_per_round = 10;
  int rounds = 50;
  int local_epochs = 3;
  int batch_size = 16;
  double lr = 0.12;
  double temperature = 1.5;
  double lambda = 4.0;
  double gamma = 0.5;
  double ema_momentum = 0.9;
  double prox_mu = 0.0;
  Algorithm algorithm = Algorithm::FedYoYo;
  /// Component ablation: forces a uniform prior at T=1 for both losses while
  /// keeping the two-view pipeline and distillation.
  bool disable_dla = false;
  std::uint64_t seed = 1;
  bool parallel_clients = false;
  data::AugmentConfig augment;
  metrics::GroupThresholds thresholds;

  void validate() const;
};

/// Per-client persistent state across rounds: the EMA-smoothed local prior.
struct ClientState {
  prior::PriorDistribution ema_prior;
};

struct ServerState {
  model::ModelParams global_params;
  prior::PriorDistribution global_prior;
  int round = 0;
};

struct LocalResult {
  model::ModelParams params;
  prior::PriorEstimate fresh_estimate;
  prior::PriorDistribution uploaded_prior;
  double mean_total = 0.0;
  double mean_dla = 0.0;
  double mean_asd = 0.0;
  std::vector<double> epoch_mean_total;
  long long num_samples = 0;
  bool skipped = false;
};

/// Stream seed for one client's round; parallel and serial schedules draw
/// identical values because every client owns its streams.
std::uint64_t client_stream_seed(std::uint64_t root_seed, int round, int client_id,
                                 std::string_view purpose);

/// One client's local round. Loads the global parameters, trains
/// cfg.local_epochs epochs with the algorithm's loss, and returns the updated
/// parameters plus the prior it uploads (EMA-smoothed estimate for FedYoYo,
/// count-based for baselines). Empty clients return skipped = true.
LocalResult local_train(const TrainConfig& cfg, const model::ArchitectureConfig& arch,
                        const model::ModelParams& global_params,
                        const data::LabeledDataset& ds, const std::vector<std::size_t>& indices,
                        const std::vector<long long>& client_class_counts,
                        const prior::PriorDistribution& global_prior,
                        const prior::PriorDistribution& ema_prior, int round, int client_id);

/// Coordinate-wise weighted mean with weights n_k / sum(n).
model::ModelParams fedavg_aggregate(const std::vector<model::ModelParams>& params_list,
                                    const std::vector<long long>& weights);

struct Evaluation {
  std::vector<int> predictions;
  std::vector<double> features;  // rows x feature_dim
  std::size_t rows = 0;
  std::size_t feature_dim = 0;
};

Evaluation evaluate_model(const model::ArchitectureConfig& arch, const model::ModelParams& params,
                          const data::LabeledDataset& ds);

/// The round engine: client sampling, local training (optionally parallel),
/// FedAvg aggregation of models and priors, evaluation, diagnostics.
class FederatedEngine {
 public:
  FederatedEngine(TrainConfig cfg, model::ArchitectureConfig arch,
                  const data::LabeledDataset& train, const data::ClientPartition& partition,
                  const data::LabeledDataset& test);

  metrics::RoundMetrics run_round();
  const ServerState& server() const { return server_; }
  const std::vector<ClientState>& clients() const { return clients_; }
  metrics::GroupedAccuracy evaluate_current() const;

 private:
  TrainConfig cfg_;
  model::ArchitectureConfig arch_;
  const data::LabeledDataset& train_;
  const data::ClientPartition& partition_;
  const data::LabeledDataset& test_;
  ServerState server_;
  std::vector<ClientState> clients_;
  prior::PriorDistribution oracle_prior_;

  std::vector<int> sample_participants(int round);
};

struct ExperimentResult {
  std::vector<metrics::RoundMetrics> round_log;
  model::ModelParams final_params;
  metrics::GroupedAccuracy final_accuracy;
  prior::PriorDistribution final_global_prior;
};

ExperimentResult run_experiment(const TrainConfig& cfg, const model::ArchitectureConfig& arch,
                                const data::LabeledDataset& train,
                                const data::ClientPartition& partition,
                                const data::LabeledDataset& test);

/// Mean cosine similarity between global-model and client-model features on a
/// shared probe set.
double feature_similarity(const model::ArchitectureConfig& arch,
                          const model::ModelParams& global_params,
                          const std::vector<model::ModelParams>& client_params,
                          const std::vector<double>& probe_inputs, std::size_t probe_rows);

}  // namespace fedlt::fed
