#include "fed/federation.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numbers>
#include <limits>

#include "losses/losses.hpp"
#include "util/error.hpp"
#include "util/rng.hpp"

namespace fedlt::fed {

Algorithm parse_algorithm(const std::string& name) {
  if (name == "fedyoyo") return Algorithm::FedYoYo;
  if (name == "fedavg") return Algorithm::FedAvg;
  if (name == "fedavg_bsm") return Algorithm::FedAvgBsm;
  if (name == "fedprox") return Algorithm::FedProx;
  throw_error(ErrorKind::Config, "unknown algorithm '" + name +
                                     "' (expected fedyoyo, fedavg, fedavg_bsm or fedprox)");
}

std::string algorithm_name(Algorithm alg) {
  switch (alg) {
    case Algorithm::FedYoYo: return "fedyoyo";
    case Algorithm::FedAvg: return "fedavg";
    case Algorithm::FedAvgBsm: return "fedavg_bsm";
    case Algorithm::FedProx: return "fedprox";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (num_clients < 1) throw_error(ErrorKind::Config, "train.num_clients must be >= 1");
  if (clients_per_round < 1 || clients_per_round > num_clients)
    throw_error(ErrorKind::Config, "train.clients_per_round must lie in [1, num_clients]");
  if (rounds < 0) throw_error(ErrorKind::Config, "train.rounds must be >= 0");
  if (local_epochs < 1) throw_error(ErrorKind::Config, "train.local_epochs must be >= 1");
  if (batch_size < 1) throw_error(ErrorKind::Config, "train.batch_size must be >= 1");
  if (!(lr >= 0.0)) throw_error(ErrorKind::Config, "train.lr must be >= 0");
  if (!(temperature > 0.0)) throw_error(ErrorKind::Config, "train.temperature must be > 0");
  if (lambda < 0.0) throw_error(ErrorKind::Config, "train.lambda must be >= 0");
  if (gamma < 0.0 || gamma > 1.0) throw_error(ErrorKind::Config, "train.gamma must lie in [0, 1]");
  if (ema_momentum < 0.0 || ema_momentum > 1.0)
    throw_error(ErrorKind::Config, "train.ema_momentum must lie in [0, 1]");
  if (prox_mu < 0.0) throw_error(ErrorKind::Config, "train.prox_mu must be >= 0");
  augment.validate();
}

std::uint64_t client_stream_seed(std::uint64_t root_seed, int round, int client_id,
                                 std::string_view purpose) {
  return util::derive_seed(root_seed, purpose,
                           {static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(client_id)});
}

namespace {

std::vector<double> gather_rows(const data::LabeledDataset& ds,
                                const std::vector<std::size_t>& order, std::size_t begin,
                                std::size_t end) {
  std::vector<double> out;
  out.reserve((end - begin) * ds.input_dim);
  for (std::size_t i = begin; i < end; ++i) {
    auto row = ds.row(order[i]);
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

std::vector<std::vector<double>> tensor_rows(const ad::Tensor& t) {
  std::vector<std::vector<double>> rows(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i)
    rows[i].assign(t.values.begin() + i * t.cols(), t.values.begin() + (i + 1) * t.cols());
  return rows;
}

}  // namespace

LocalResult local_train(const TrainConfig& cfg, const model::ArchitectureConfig& arch,
                        const model::ModelParams& global_params,
                        const data::LabeledDataset& ds, const std::vector<std::size_t>& indices,
                        const std::vector<long long>& client_class_counts,
                        const prior::PriorDistribution& global_prior,
                        const prior::PriorDistribution& ema_prior, int round, int client_id) {
  LocalResult result;
  result.num_samples = static_cast<long long>(indices.size());
  if (indices.empty()) {
    result.skipped = true;
    result.mean_total = std::numeric_limits<double>::quiet_NaN();
    result.mean_dla = result.mean_total;
    result.mean_asd = result.mean_total;
    return result;
  }

  const std::size_t C = arch.num_classes;
  model::MLPClassifier net(arch);
  net.unflatten(global_params);
  const auto params = net.parameters();

  util::Rng shuffle_rng(client_stream_seed(cfg.seed, round, client_id, "shuffle"));
  util::Rng augment_rng(client_stream_seed(cfg.seed, round, client_id, "augment"));

  const Algorithm alg = cfg.algorithm;
  std::optional<losses::AdjustedSoftmaxParams> softmax_params;
  switch (alg) {
    case Algorithm::FedYoYo:
      if (cfg.disable_dla)
        softmax_params.emplace(prior::PriorDistribution::uniform(C), 1.0);
      else
        softmax_params.emplace(prior::fuse(global_prior, ema_prior, cfg.gamma), cfg.temperature);
      break;
    case Algorithm::FedAvg:
    case Algorithm::FedProx:
      softmax_params.emplace(prior::PriorDistribution::uniform(C), 1.0);
      break;
    case Algorithm::FedAvgBsm: {
      std::vector<double> counts(C);
      for (std::size_t c = 0; c < C; ++c) counts[c] = static_cast<double>(client_class_counts[c]);
      softmax_params.emplace(prior::PriorDistribution(std::move(counts)), cfg.temperature);
      break;
    }
  }

  // Anchor parameters for the FedProx proximal term.
  std::vector<ad::TensorPtr> anchors;
  if (alg == Algorithm::FedProx)
    for (const auto& p : params) anchors.push_back(ad::Tensor::make(p->shape, p->values));

  prior::RoundPriorEstimator estimator(C, arch.feature_dim);
  double sum_total = 0.0, sum_dla = 0.0, sum_asd = 0.0;
  std::size_t steps = 0;

  std::vector<std::size_t> order(indices);
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    double epoch_total = 0.0;
    std::size_t epoch_steps = 0;
    shuffle_rng.shuffle(order);
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const std::size_t b = end - begin;
      std::vector<int> labels(b);
      for (std::size_t i = 0; i < b; ++i) labels[i] = ds.labels[order[begin + i]];

      ad::Tape tape;
      ad::TensorPtr loss;
      double dla_val = 0.0, asd_val = 0.0;
      if (alg == Algorithm::FedYoYo) {
        std::vector<double> weak(b * ds.input_dim), strong(b * ds.input_dim);
        for (std::size_t i = 0; i < b; ++i) {
          auto x = ds.row(order[begin + i]);
          data::weak_augment(x, {weak.data() + i * ds.input_dim, ds.input_dim}, cfg.augment,
                             augment_rng);
          data::strong_augment(x, {strong.data() + i * ds.input_dim, ds.input_dim}, cfg.augment,
                               augment_rng);
        }
        auto xw = ad::Tensor::matrix(b, ds.input_dim, std::move(weak));
        auto xs = ad::Tensor::matrix(b, ds.input_dim, std::move(strong));
        auto feat_w = net.forward_features(tape, xw);
        auto logits_w = net.head_logits(tape, feat_w);
        auto feat_s = net.forward_features(tape, xs);
        auto logits_s = net.head_logits(tape, feat_s);
        auto bundle = losses::total_loss_parts(tape, logits_w, logits_s, labels, *softmax_params,
                                               cfg.lambda);
        loss = bundle.total;
        dla_val = bundle.dla->values[0];
        asd_val = bundle.asd ? bundle.asd->values[0] : 0.0;
        // Weak-view features, gradient-detached, feed the prior estimator.
        estimator.observe_batch(tensor_rows(*feat_w), labels);
      } else {
        auto x = ad::Tensor::matrix(b, ds.input_dim, gather_rows(ds, order, begin, end));
        auto logits = net.forward_logits(tape, x);
        auto ce = losses::cross_entropy(tape, logits, labels, *softmax_params);
        if (alg == Algorithm::FedProx && cfg.prox_mu > 0.0) {
          ad::TensorPtr acc;
          for (std::size_t pi = 0; pi < params.size(); ++pi) {
            auto diff = tape.sub(params[pi], anchors[pi]);
            auto sq = tape.sum(tape.mul(diff, diff));
            acc = acc ? tape.add(acc, sq) : sq;
          }
          loss = tape.add(ce, tape.scale(acc, cfg.prox_mu / 2.0));
        } else {
          loss = ce;
        }
        dla_val = ce->values[0];
      }

      tape.backward(loss);
      ad::sgd_step(params, cfg.lr);
      sum_total += loss->values[0];
      sum_dla += dla_val;
      sum_asd += asd_val;
      epoch_total += loss->values[0];
      ++epoch_steps;
      ++steps;
    }
    result.epoch_mean_total.push_back(epoch_total / static_cast<double>(epoch_steps));
  }

  result.params = net.flatten();
  result.mean_total = sum_total / static_cast<double>(steps);
  result.mean_dla = sum_dla / static_cast<double>(steps);
  result.mean_asd = sum_asd / static_cast<double>(steps);
  if (alg == Algorithm::FedYoYo) {
    result.fresh_estimate = estimator.finish();
    result.uploaded_prior =
        prior::ema_update(ema_prior, result.fresh_estimate.normalized, cfg.ema_momentum);
  } else {
    // Baselines know their class counts directly.
    std::vector<double> counts(C);
    for (std::size_t c = 0; c < C; ++c) counts[c] = static_cast<double>(client_class_counts[c]);
    result.fresh_estimate.raw = counts;
    result.fresh_estimate.seen.assign(C, false);
    for (std::size_t c = 0; c < C; ++c) result.fresh_estimate.seen[c] = counts[c] > 0;
    result.fresh_estimate.normalized = prior::PriorDistribution(std::move(counts)).normalized();
    result.uploaded_prior = result.fresh_estimate.normalized;
  }
  return result;
}

model::ModelParams fedavg_aggregate(const std::vector<model::ModelParams>& params_list,
                                    const std::vector<long long>& weights) {
  if (params_list.empty())
    throw_error(ErrorKind::Contract, "fedavg_aggregate: no parameter sets");
  if (params_list.size() != weights.size())
    throw_error(ErrorKind::Dimension, "fedavg_aggregate: params/weight count mismatch");
  long long total = 0;
  for (long long w : weights) {
    if (w < 0) throw_error(ErrorKind::Parameter, "fedavg_aggregate: negative weight");
    total += w;
  }
  if (total <= 0) throw_error(ErrorKind::Contract, "fedavg_aggregate: total weight must be positive");
  const auto& manifest = params_list.front().manifest;
  for (const auto& p : params_list)
    if (p.manifest != manifest)
      throw_error(ErrorKind::Aggregation, "fedavg_aggregate: parameter manifests differ");
  // Anchored mean: p0 + sum share_k (p_k - p0). Identical inputs reproduce
  // exactly; the first client is untouched by rounding drift.
  model::ModelParams out = params_list.front();
  for (std::size_t k = 1; k < params_list.size(); ++k) {
    const double share = static_cast<double>(weights[k]) / static_cast<double>(total);
    const auto& flat = params_list[k].flat;
    if (flat.size() != out.flat.size())
      throw_error(ErrorKind::Aggregation, "fedavg_aggregate: parameter counts differ");
    for (std::size_t i = 0; i < flat.size(); ++i)
      out.flat[i] += share * (flat[i] - params_list.front().flat[i]);
  }
  return out;
}

Evaluation evaluate_model(const model::ArchitectureConfig& arch, const model::ModelParams& params,
                          const data::LabeledDataset& ds) {
  model::MLPClassifier net(arch);
  net.unflatten(params);
  ad::Tape tape;
  auto x = ad::Tensor::matrix(ds.size(), ds.input_dim,
                              std::vector<double>(ds.inputs.begin(), ds.inputs.end()));
  auto features = net.forward_features(tape, x);
  auto logits = net.head_logits(tape, features);
  Evaluation out;
  out.rows = ds.size();
  out.feature_dim = arch.feature_dim;
  out.features = features->values;
  out.predictions.resize(ds.size());
  const std::size_t C = arch.num_classes;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t y = 1; y < C; ++y)
      if (logits->values[i * C + y] > logits->values[i * C + best]) best = y;
    out.predictions[i] = static_cast<int>(best);
  }
  return out;
}

double feature_similarity(const model::ArchitectureConfig& arch,
                          const model::ModelParams& global_params,
                          const std::vector<model::ModelParams>& client_params,
                          const std::vector<double>& probe_inputs, std::size_t probe_rows) {
  if (probe_rows == 0) throw_error(ErrorKind::Contract, "feature_similarity: empty probe set");
  if (client_params.empty())
    throw_error(ErrorKind::Contract, "feature_similarity: no client models");
  auto features_of = [&](const model::ModelParams& p) {
    model::MLPClassifier net(arch);
    net.unflatten(p);
    ad::Tape tape;
    auto x = ad::Tensor::matrix(probe_rows, arch.input_dim,
                                std::vector<double>(probe_inputs.begin(), probe_inputs.end()));
    return net.forward_features(tape, x)->values;
  };
  const auto global_feats = features_of(global_params);
  double acc = 0.0;
  for (const auto& cp : client_params)
    acc += metrics::mean_feature_cosine(global_feats, features_of(cp), probe_rows, arch.feature_dim);
  return acc / static_cast<double>(client_params.size());
}

FederatedEngine::FederatedEngine(TrainConfig cfg, model::ArchitectureConfig arch,
                                 const data::LabeledDataset& train,
                                 const data::ClientPartition& partition,
                                 const data::LabeledDataset& test)
    : cfg_(std::move(cfg)), arch_(std::move(arch)), train_(train), partition_(partition), test_(test) {
  cfg_.validate();
  if (partition_.num_clients() != cfg_.num_clients)
    throw_error(ErrorKind::Config, "partition has " + std::to_string(partition_.num_clients()) +
                                       " clients, config expects " + std::to_string(cfg_.num_clients));
  model::MLPClassifier net(arch_);
  util::Rng init_rng(util::derive_seed(cfg_.seed, "init"));
  net.init_params(init_rng);
  server_.global_params = net.flatten();
  server_.global_prior = prior::PriorDistribution::uniform(arch_.num_classes);
  clients_.assign(cfg_.num_clients, ClientState{prior::PriorDistribution::uniform(arch_.num_classes)});
  std::vector<double> oracle(train_.class_counts.begin(), train_.class_counts.end());
  oracle_prior_ = prior::PriorDistribution(std::move(oracle)).normalized();
}

std::vector<int> FederatedEngine::sample_participants(int round) {
  const int K = cfg_.num_clients;
  std::vector<int> ids(K);
  for (int k = 0; k < K; ++k) ids[k] = k;
  if (cfg_.clients_per_round < K) {
    util::Rng rng(util::derive_seed(cfg_.seed, "sampling", {static_cast<std::uint64_t>(round)}));
    for (int i = 0; i < cfg_.clients_per_round; ++i) {
      const std::size_t j = i + rng.index(static_cast<std::size_t>(K - i));
      std::swap(ids[i], ids[j]);
    }
    ids.resize(cfg_.clients_per_round);
    std::sort(ids.begin(), ids.end());
  }
  return ids;
}

metrics::RoundMetrics FederatedEngine::run_round() {
  const int round = server_.round;
  const auto participants = sample_participants(round);

  std::vector<LocalResult> results(participants.size());
  auto train_one = [&](std::size_t slot) {
    const int k = participants[slot];
    results[slot] = local_train(cfg_, arch_, server_.global_params, train_,
                                partition_.client_indices[k], partition_.client_class_counts[k],
                                server_.global_prior, clients_[k].ema_prior, round, k);
  };
  if (cfg_.parallel_clients) {
    std::vector<std::future<void>> futures;
    futures.reserve(participants.size());
    for (std::size_t slot = 0; slot < participants.size(); ++slot)
      futures.push_back(std::async(std::launch::async, train_one, slot));
    for (auto& f : futures) f.get();
  } else {
    for (std::size_t slot = 0; slot < participants.size(); ++slot) train_one(slot);
  }

  std::vector<model::ModelParams> trained;
  std::vector<prior::PriorDistribution> uploaded;
  std::vector<long long> weights;
  std::vector<model::ModelParams> client_models;
  std::vector<metrics::PriorUpload> upload_records;
  double loss_total = 0.0, loss_dla = 0.0, loss_asd = 0.0;
  long long loss_weight = 0;
  for (std::size_t slot = 0; slot < participants.size(); ++slot) {
    auto& r = results[slot];
    if (r.skipped) continue;
    trained.push_back(std::move(r.params));
    uploaded.push_back(r.uploaded_prior);
    weights.push_back(r.num_samples);
    upload_records.push_back(
        {participants[slot], r.num_samples, r.uploaded_prior.weights});
    loss_total += static_cast<double>(r.num_samples) * r.mean_total;
    loss_dla += static_cast<double>(r.num_samples) * r.mean_dla;
    loss_asd += static_cast<double>(r.num_samples) * r.mean_asd;
    loss_weight += r.num_samples;
    clients_[participants[slot]].ema_prior = r.uploaded_prior;
  }

  if (!trained.empty()) {
    server_.global_params = fedavg_aggregate(trained, weights);
    server_.global_prior = prior::aggregate_global_prior(uploaded, weights);
    client_models = std::move(trained);
  }
  server_.round = round + 1;

  const auto eval = evaluate_model(arch_, server_.global_params, test_);
  const auto acc = metrics::grouped_accuracy(eval.predictions, test_.labels, train_.class_counts,
                                             cfg_.thresholds);
  auto protos = model::class_prototypes(
      *ad::Tensor::matrix(eval.rows, arch_.feature_dim, eval.features), test_.labels);
  metrics::NcAngles angles;
  try {
    angles = metrics::nc_angles(protos);
  } catch (const Error&) {
    // collapsed features leave no usable prototype geometry
    angles.min_deg = angles.max_deg = angles.mean_deg =
        std::numeric_limits<double>::quiet_NaN();
    angles.etf_optimum_deg =
        std::acos(-1.0 / (static_cast<double>(arch_.num_classes) - 1.0)) * 180.0 /
        std::numbers::pi;
  }

  metrics::RoundMetrics rm;
  rm.round = round;
  const double inv_w = loss_weight > 0 ? 1.0 / static_cast<double>(loss_weight)
                                       : std::numeric_limits<double>::quiet_NaN();
  rm.loss_total = loss_total * inv_w;
  rm.loss_dla = loss_dla * inv_w;
  rm.loss_asd = loss_asd * inv_w;
  rm.acc_all = acc.all;
  rm.acc_many = acc.many;
  rm.acc_medium = acc.medium;
  rm.acc_few = acc.few;
  rm.nc_min_angle = angles.min_deg;
  rm.nc_max_angle = angles.max_deg;
  rm.nc_mean_angle = angles.mean_deg;
  rm.nc_etf_optimum = angles.etf_optimum_deg;
  rm.prior_l2 = metrics::prior_l2(server_.global_prior, oracle_prior_);
  rm.uploads = std::move(upload_records);

  const std::size_t probe_rows = std::min<std::size_t>(64, test_.size());
  if (!client_models.empty() && probe_rows > 0) {
    std::vector<double> probe(test_.inputs.begin(),
                              test_.inputs.begin() + probe_rows * test_.input_dim);
    rm.feat_cos_global_local =
        feature_similarity(arch_, server_.global_params, client_models, probe, probe_rows);
  } else {
    rm.feat_cos_global_local = std::numeric_limits<double>::quiet_NaN();
  }
  return rm;
}

metrics::GroupedAccuracy FederatedEngine::evaluate_current() const {
  const auto eval = evaluate_model(arch_, server_.global_params, test_);
  return metrics::grouped_accuracy(eval.predictions, test_.labels, train_.class_counts,
                                   cfg_.thresholds);
}

ExperimentResult run_experiment(const TrainConfig& cfg, const model::ArchitectureConfig& arch,
                                const data::LabeledDataset& train,
                                const data::ClientPartition& partition,
                                const data::LabeledDataset& test) {
  FederatedEngine engine(cfg, arch, train, partition, test);
  ExperimentResult result;
  result.round_log.reserve(cfg.rounds);
  for (int r = 0; r < cfg.rounds; ++r) result.round_log.push_back(engine.run_round());
  result.final_params = engine.server().global_params;
  result.final_global_prior = engine.server().global_prior;
  result.final_accuracy = engine.evaluate_current();
  return result;
}

}  // namespace fedlt::fed
