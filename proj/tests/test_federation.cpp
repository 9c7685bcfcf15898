#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fed/federation.hpp"
#include "losses/losses.hpp"
#include "testsupport.hpp"
#include "util/error.hpp"
#include "util/strings.hpp"

using namespace fedlt;
using fed::Algorithm;
using fed::TrainConfig;

namespace {

model::ModelParams scalar_params(double v) {
  model::ModelParams p;
  p.manifest = {{"w", {1}}};
  p.flat = {v};
  return p;
}

struct Bench {
  model::ArchitectureConfig arch;
  data::LabeledDataset train;
  data::LabeledDataset test;
  data::ClientPartition partition;
  TrainConfig cfg;
};

// Small, fast benchmark: 4 classes, 3 clients, 2 rounds.
Bench small_bench(std::uint64_t seed, Algorithm alg) {
  Bench b;
  b.arch.input_dim = 6;
  b.arch.hidden = {8};
  b.arch.feature_dim = 4;
  b.arch.num_classes = 4;

  const auto counts = data::longtail_counts(4, 60, 10.0);
  const auto means = data::make_class_means(4, 6, 3.0, util::derive_seed(seed, "data"));
  b.train = data::sample_dataset(means, counts, util::derive_seed(seed, "train-samples"));
  b.test = data::sample_dataset(means, {10, 10, 10, 10}, util::derive_seed(seed, "test-samples"));
  b.partition = data::dirichlet_partition(b.train, 3, 0.5, seed);

  b.cfg.num_clients = 3;
  b.cfg.clients_per_round = 3;
  b.cfg.rounds = 2;
  b.cfg.local_epochs = 1;
  b.cfg.batch_size = 16;
  b.cfg.lr = 0.05;
  b.cfg.seed = seed;
  b.cfg.algorithm = alg;
  b.cfg.augment.weak_noise_sigma = 0.15;
  b.cfg.augment.strong_noise_sigma = 0.45;
  return b;
}

std::string log_to_string(const std::vector<metrics::RoundMetrics>& log) {
  std::string out = metrics::RoundMetrics::csv_header() + "\n";
  for (const auto& rm : log) out += rm.to_csv() + "\n";
  return out;
}

}  // namespace

TEST_CASE("fedavg_aggregate hand cases") {
  auto a = scalar_params(0.0);
  auto b = scalar_params(4.0);
  auto out = fed::fedavg_aggregate({a, b}, {1, 3});
  CHECK(out.flat[0] == doctest::Approx(3.0).epsilon(1e-15));

  auto same = fed::fedavg_aggregate({b, b, b}, {5, 1, 2});
  CHECK(same.flat[0] == doctest::Approx(4.0).epsilon(1e-15));

  auto single = fed::fedavg_aggregate({a}, {7});
  CHECK(single.flat[0] == 0.0);
}

TEST_CASE("aggregation is permutation invariant and linear under duplication") {
  util::Rng rng(12);
  std::vector<model::ModelParams> ps;
  for (int k = 0; k < 3; ++k) ps.push_back(scalar_params(rng.uniform(-2, 2)));
  auto fwd = fed::fedavg_aggregate({ps[0], ps[1], ps[2]}, {2, 5, 3});
  auto rev = fed::fedavg_aggregate({ps[2], ps[1], ps[0]}, {3, 5, 2});
  CHECK(fwd.flat[0] == doctest::Approx(rev.flat[0]).epsilon(1e-15));

  // duplicating a client with halved weights reproduces the original
  auto dup = fed::fedavg_aggregate({ps[0], ps[0], ps[1], ps[2]}, {1, 1, 5, 3});
  CHECK(dup.flat[0] == doctest::Approx(fwd.flat[0]).epsilon(1e-12));
}

TEST_CASE("aggregate lies inside the participants' coordinate envelope") {
  util::Rng rng(13);
  std::vector<model::ModelParams> ps;
  std::vector<long long> ws;
  for (int k = 0; k < 4; ++k) {
    ps.push_back(scalar_params(rng.uniform(-5, 5)));
    ws.push_back(1 + static_cast<long long>(rng.index(9)));
  }
  auto out = fed::fedavg_aggregate(ps, ws);
  double lo = ps[0].flat[0], hi = ps[0].flat[0];
  for (const auto& p : ps) {
    lo = std::min(lo, p.flat[0]);
    hi = std::max(hi, p.flat[0]);
  }
  CHECK(out.flat[0] >= lo - 1e-12);
  CHECK(out.flat[0] <= hi + 1e-12);
}

TEST_CASE("aggregation rejects mismatched manifests") {
  auto a = scalar_params(1.0);
  model::ModelParams b;
  b.manifest = {{"other", {1}}};
  b.flat = {2.0};
  CHECK_THROWS_AS(fed::fedavg_aggregate({a, b}, {1, 1}), Error);
}

TEST_CASE("local training is bit-deterministic for a fixed seed") {
  auto bench = small_bench(101, Algorithm::FedYoYo);
  model::MLPClassifier net(bench.arch);
  util::Rng init(1);
  net.init_params(init);
  const auto start = net.flatten();
  auto uniform = prior::PriorDistribution::uniform(4);
  auto r1 = fed::local_train(bench.cfg, bench.arch, start, bench.train,
                             bench.partition.client_indices[0],
                             bench.partition.client_class_counts[0], uniform, uniform, 0, 0);
  auto r2 = fed::local_train(bench.cfg, bench.arch, start, bench.train,
                             bench.partition.client_indices[0],
                             bench.partition.client_class_counts[0], uniform, uniform, 0, 0);
  CHECK(r1.params.flat == r2.params.flat);
  CHECK(r1.uploaded_prior.weights == r2.uploaded_prior.weights);
}

TEST_CASE("an empty client is skipped with sentinel metrics") {
  auto bench = small_bench(7, Algorithm::FedYoYo);
  model::MLPClassifier net(bench.arch);
  util::Rng init(1);
  net.init_params(init);
  auto uniform = prior::PriorDistribution::uniform(4);
  auto r = fed::local_train(bench.cfg, bench.arch, net.flatten(), bench.train, {}, {0, 0, 0, 0},
                            uniform, uniform, 0, 0);
  CHECK(r.skipped);
  CHECK(std::isnan(r.mean_total));
}

TEST_CASE("training lowers the loss across local epochs on most seeds") {
  int improved = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto bench = small_bench(seed, Algorithm::FedYoYo);
    bench.cfg.local_epochs = 4;
    model::MLPClassifier net(bench.arch);
    util::Rng init(util::derive_seed(seed, "init"));
    net.init_params(init);
    auto uniform = prior::PriorDistribution::uniform(4);
    auto r = fed::local_train(bench.cfg, bench.arch, net.flatten(), bench.train,
                              bench.partition.client_indices[0],
                              bench.partition.client_class_counts[0], uniform, uniform, 0, 0);
    REQUIRE(r.epoch_mean_total.size() == 4);
    improved += r.epoch_mean_total.back() <= r.epoch_mean_total.front();
  }
  CHECK(improved >= 4);
}

TEST_CASE("fedyoyo reduction: lambda 0, gamma 1, uniform prior, zero noise matches fedavg bitwise") {
  auto bench = small_bench(55, Algorithm::FedYoYo);
  bench.cfg.lambda = 0.0;
  bench.cfg.gamma = 1.0;
  bench.cfg.temperature = 1.0;
  bench.cfg.augment.weak_noise_sigma = 0.0;
  bench.cfg.augment.strong_noise_sigma = 0.0;
  bench.cfg.augment.strong_mask_prob = 0.0;
  bench.cfg.augment.strong_scale_lo = 1.0;
  bench.cfg.augment.strong_scale_hi = 1.0;

  model::MLPClassifier net(bench.arch);
  util::Rng init(3);
  net.init_params(init);
  const auto start = net.flatten();
  auto uniform = prior::PriorDistribution::uniform(4);

  auto yoyo = fed::local_train(bench.cfg, bench.arch, start, bench.train,
                               bench.partition.client_indices[0],
                               bench.partition.client_class_counts[0], uniform, uniform, 0, 0);
  auto cfg_avg = bench.cfg;
  cfg_avg.algorithm = Algorithm::FedAvg;
  auto avg = fed::local_train(cfg_avg, bench.arch, start, bench.train,
                              bench.partition.client_indices[0],
                              bench.partition.client_class_counts[0], uniform, uniform, 0, 0);
  CHECK(yoyo.params.flat == avg.params.flat);
  CHECK(yoyo.mean_total == avg.mean_total);
}

TEST_CASE("fedprox with mu 0 matches fedavg bitwise; proximal gradient vanishes at the anchor") {
  auto bench = small_bench(66, Algorithm::FedProx);
  bench.cfg.prox_mu = 0.0;
  model::MLPClassifier net(bench.arch);
  util::Rng init(4);
  net.init_params(init);
  const auto start = net.flatten();
  auto uniform = prior::PriorDistribution::uniform(4);
  auto prox = fed::local_train(bench.cfg, bench.arch, start, bench.train,
                               bench.partition.client_indices[0],
                               bench.partition.client_class_counts[0], uniform, uniform, 0, 0);
  auto cfg_avg = bench.cfg;
  cfg_avg.algorithm = Algorithm::FedAvg;
  auto avg = fed::local_train(cfg_avg, bench.arch, start, bench.train,
                              bench.partition.client_indices[0],
                              bench.partition.client_class_counts[0], uniform, uniform, 0, 0);
  CHECK(prox.params.flat == avg.params.flat);

  // (mu/2) * |w - w_g|^2 has zero gradient at w == w_g
  ad::Tape tape;
  auto w = ad::Tensor::make({3}, {0.5, -1.0, 2.0}, true);
  auto anchor = ad::Tensor::make({3}, {0.5, -1.0, 2.0});
  auto diff = tape.sub(w, anchor);
  auto penalty = tape.scale(tape.sum(tape.mul(diff, diff)), 0.5);
  tape.backward(penalty);
  for (double g : w->grad) CHECK(g == 0.0);
}

TEST_CASE("fedavg_bsm on a balanced client at T=1 matches fedavg bitwise") {
  auto bench = small_bench(77, Algorithm::FedAvgBsm);
  bench.cfg.temperature = 1.0;
  // balanced client: take the test set (10 per class) as training data
  std::vector<std::size_t> indices(bench.test.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  std::vector<long long> counts{10, 10, 10, 10};
  model::MLPClassifier net(bench.arch);
  util::Rng init(5);
  net.init_params(init);
  const auto start = net.flatten();
  auto uniform = prior::PriorDistribution::uniform(4);
  auto bsm = fed::local_train(bench.cfg, bench.arch, start, bench.test, indices, counts, uniform,
                              uniform, 0, 0);
  auto cfg_avg = bench.cfg;
  cfg_avg.algorithm = Algorithm::FedAvg;
  auto avg = fed::local_train(cfg_avg, bench.arch, start, bench.test, indices, counts, uniform,
                              uniform, 0, 0);
  CHECK(bsm.params.flat == avg.params.flat);
}

TEST_CASE("run_round with full participation populates the metrics schema") {
  auto bench = small_bench(88, Algorithm::FedYoYo);
  fed::FederatedEngine engine(bench.cfg, bench.arch, bench.train, bench.partition, bench.test);
  auto rm = engine.run_round();
  CHECK(rm.round == 0);
  CHECK(std::isfinite(rm.loss_total));
  CHECK(std::isfinite(rm.acc_all));
  CHECK(rm.acc_all >= 0.0);
  CHECK(rm.acc_all <= 1.0);
  CHECK(rm.nc_min_angle >= 0.0);
  CHECK(rm.nc_max_angle <= 180.0);
  CHECK(rm.nc_mean_angle >= rm.nc_min_angle);
  CHECK(rm.nc_mean_angle <= rm.nc_max_angle);
  CHECK(rm.prior_l2 >= 0.0);
  CHECK(std::isfinite(rm.feat_cos_global_local));
  CHECK(engine.server().round == 1);
  // the CSV row carries every schema field
  CHECK(util::split(rm.to_csv(), ',').size() ==
        util::split(metrics::RoundMetrics::csv_header(), ',').size());
}

TEST_CASE("frozen learning rate keeps global parameters fixed across rounds") {
  auto bench = small_bench(99, Algorithm::FedYoYo);
  bench.cfg.lr = 0.0;
  fed::FederatedEngine engine(bench.cfg, bench.arch, bench.train, bench.partition, bench.test);
  const auto before = engine.server().global_params.flat;
  engine.run_round();
  const auto mid = engine.server().global_params.flat;
  engine.run_round();
  const auto after = engine.server().global_params.flat;
  CHECK(before == mid);
  CHECK(mid == after);
}

TEST_CASE("identical config and seed give byte-identical round logs") {
  auto run_once = [](bool parallel) {
    auto bench = small_bench(123, Algorithm::FedYoYo);
    bench.cfg.parallel_clients = parallel;
    auto result =
        fed::run_experiment(bench.cfg, bench.arch, bench.train, bench.partition, bench.test);
    return log_to_string(result.round_log);
  };
  const auto serial1 = run_once(false);
  const auto serial2 = run_once(false);
  const auto parallel1 = run_once(true);
  const auto parallel2 = run_once(true);
  CHECK(serial1 == serial2);
  CHECK(parallel1 == parallel2);
  CHECK(serial1 == parallel1);  // schedules agree bitwise
}

TEST_CASE("client sampling without full participation is uniform, sorted and sized") {
  auto bench = small_bench(31, Algorithm::FedAvg);
  bench.cfg.clients_per_round = 2;
  fed::FederatedEngine engine(bench.cfg, bench.arch, bench.train, bench.partition, bench.test);
  auto rm = engine.run_round();
  CHECK(rm.round == 0);  // smoke: a partial round completes
}

TEST_CASE("K=1 federation equals a centralized loop over the same loss") {
  auto bench = small_bench(202, Algorithm::FedYoYo);
  bench.cfg.num_clients = 1;
  bench.cfg.clients_per_round = 1;
  bench.cfg.rounds = 2;
  data::ClientPartition whole;
  whole.client_indices.assign(1, {});
  for (std::size_t i = 0; i < bench.train.size(); ++i) whole.client_indices[0].push_back(i);
  whole.client_class_counts.assign(1, bench.train.class_counts);

  auto fed_result =
      fed::run_experiment(bench.cfg, bench.arch, bench.train, whole, bench.test);

  // Centralized counterpart: same loss, same stream keying, no federation.
  model::MLPClassifier net(bench.arch);
  util::Rng init(util::derive_seed(bench.cfg.seed, "init"));
  net.init_params(init);
  auto params = net.flatten();
  auto ema = prior::PriorDistribution::uniform(4);
  auto global = prior::PriorDistribution::uniform(4);
  for (int round = 0; round < bench.cfg.rounds; ++round) {
    auto r = fed::local_train(bench.cfg, bench.arch, params, bench.train,
                              whole.client_indices[0], whole.client_class_counts[0], global, ema,
                              round, 0);
    params = fed::fedavg_aggregate({r.params}, {r.num_samples});
    global = prior::aggregate_global_prior({r.uploaded_prior}, {r.num_samples});
    ema = r.uploaded_prior;
  }
  CHECK(fed_result.final_params.flat == params.flat);
}
