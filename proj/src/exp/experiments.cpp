#include "exp/experiments.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "util/error.hpp"
#include "util/rng.hpp"
#include "util/strings.hpp"

namespace fedlt::exp {

namespace {

namespace fs = std::filesystem;

void require(bool ok, const std::string& msg) {
  if (!ok) throw_error(ErrorKind::Config, msg);
}

std::vector<std::string> parse_variant_list(const std::string& csv) {
  std::vector<std::string> out;
  for (const auto& item : util::split(csv, ',')) {
    const std::string name = util::trim(item);
    if (name.empty()) continue;
    fed::parse_algorithm(name);  // validates
    out.push_back(name);
  }
  if (out.empty()) throw_error(ErrorKind::Config, "run.variants: empty variant list");
  return out;
}

}  // namespace

ExperimentSpec ExperimentSpec::from_config(const util::KeyValueConfig& cfg) {
  ExperimentSpec s;
  s.raw = cfg;

  s.num_classes = static_cast<int>(cfg.get_int("data.num_classes", 10));
  require(s.num_classes >= 2, "data.num_classes must be >= 2");
  s.input_dim = static_cast<int>(cfg.get_int("data.input_dim", 32));
  require(s.input_dim >= 2, "data.input_dim must be >= 2");
  s.class_sep = cfg.get_double("data.class_sep", 3.0);
  require(s.class_sep > 0.0, "data.class_sep must be > 0");
  s.n_max = cfg.get_int("data.n_max", 500);
  require(s.n_max >= s.num_classes, "data.n_max must be >= data.num_classes");
  s.imbalance_factor = cfg.get_double("data.imbalance_factor", 100.0);
  require(s.imbalance_factor >= 1.0, "data.imbalance_factor must be >= 1, got " +
                                         util::format_double(s.imbalance_factor));
  s.eval_per_class = cfg.get_int("data.eval_per_class", 150);
  require(s.eval_per_class >= 1, "data.eval_per_class must be >= 1");
  s.alpha = cfg.get_double("partition.alpha", 0.5);
  require(s.alpha > 0.0, "partition.alpha must be > 0");

  s.arch.input_dim = static_cast<std::size_t>(s.input_dim);
  s.arch.num_classes = static_cast<std::size_t>(s.num_classes);
  s.arch.feature_dim = static_cast<std::size_t>(cfg.get_int("model.feature_dim", 32));
  require(s.arch.feature_dim >= 1, "model.feature_dim must be >= 1");
  s.arch.hidden.clear();
  for (const auto& part : util::split(cfg.get_string("model.hidden", "64,64"), ',')) {
    const std::string t = util::trim(part);
    if (t.empty()) continue;
    const long long h = util::parse_int(t, "model.hidden");
    require(h >= 1, "model.hidden entries must be >= 1");
    s.arch.hidden.push_back(static_cast<std::size_t>(h));
  }

  auto& t = s.train;
  t.num_clients = static_cast<int>(cfg.get_int("partition.num_clients", 10));
  t.clients_per_round =
      static_cast<int>(cfg.get_int("train.clients_per_round", t.num_clients));
  t.rounds = static_cast<int>(cfg.get_int("train.rounds", 50));
  t.local_epochs = static_cast<int>(cfg.get_int("train.local_epochs", 3));
  t.batch_size = static_cast<int>(cfg.get_int("train.batch_size", 16));
  t.lr = cfg.get_double("train.lr", 0.12);
  t.temperature = cfg.get_double("train.temperature", 1.5);
  t.lambda = cfg.get_double("train.lambda", 4.0);
  t.gamma = cfg.get_double("train.gamma", 0.5);
  t.ema_momentum = cfg.get_double("train.ema_momentum", 0.9);
  t.prox_mu = cfg.get_double("train.prox_mu", 0.0);
  t.seed = static_cast<std::uint64_t>(cfg.get_int("run.seed", 1));
  t.parallel_clients = cfg.get_bool("run.parallel_clients", false);

  // Augmentation defaults scale with class separation.
  t.augment.weak_noise_sigma = cfg.get_double("augment.weak_sigma", 0.08 * s.class_sep);
  t.augment.strong_noise_sigma = cfg.get_double("augment.strong_sigma", 0.13 * s.class_sep);
  t.augment.strong_mask_prob = cfg.get_double("augment.strong_mask_prob", 0.0);
  t.augment.strong_scale_lo = cfg.get_double("augment.strong_scale_lo", 1.0);
  t.augment.strong_scale_hi = cfg.get_double("augment.strong_scale_hi", 1.0);

  const std::string grouping = cfg.get_string("metrics.grouping", "thirds");
  if (grouping == "thirds") {
    t.thresholds.relative = true;
  } else if (grouping == "absolute") {
    t.thresholds.relative = false;
    t.thresholds.many_min = cfg.get_int("metrics.many_min", 100);
    t.thresholds.few_max_exclusive = cfg.get_int("metrics.few_max", 20);
  } else {
    throw_error(ErrorKind::Config, "metrics.grouping must be 'thirds' or 'absolute'");
  }

  t.disable_dla = cfg.get_bool("train.disable_dla", false);
  t.algorithm = fed::parse_algorithm(cfg.get_string("train.algorithm", "fedyoyo"));
  s.variants = parse_variant_list(cfg.get_string("run.variants", "fedyoyo,fedavg"));
  t.validate();
  return s;
}

BuiltData build_data(const ExperimentSpec& spec) {
  BuiltData out;
  const auto counts = data::longtail_counts(spec.num_classes, spec.n_max, spec.imbalance_factor);
  const auto means = data::make_class_means(spec.num_classes, spec.input_dim, spec.class_sep,
                                            util::derive_seed(spec.train.seed, "data"));
  out.train = data::sample_dataset(means, counts, util::derive_seed(spec.train.seed, "train-samples"));
  const std::vector<long long> eval_counts(spec.num_classes, spec.eval_per_class);
  out.test = data::sample_dataset(means, eval_counts, util::derive_seed(spec.train.seed, "test-samples"));
  out.partition = data::dirichlet_partition(out.train, spec.train.num_clients, spec.alpha,
                                            spec.train.seed);
  return out;
}

namespace {

void ensure_dir(const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw_error(ErrorKind::Io, "cannot create output directory '" + out_dir + "'");
}

std::string count_table(const data::ClientPartition& part, int num_classes) {
  std::ostringstream out;
  out << "client";
  for (int c = 0; c < num_classes; ++c) out << ",class" << c;
  out << ",total\n";
  std::vector<long long> column_totals(num_classes, 0);
  for (int k = 0; k < part.num_clients(); ++k) {
    long long row_total = 0;
    out << k;
    for (int c = 0; c < num_classes; ++c) {
      const long long n = part.client_class_counts[k][c];
      out << "," << n;
      row_total += n;
      column_totals[c] += n;
    }
    out << "," << row_total << "\n";
  }
  long long grand = 0;
  out << "total";
  for (long long n : column_totals) {
    out << "," << n;
    grand += n;
  }
  out << "," << grand << "\n";
  return out.str();
}

void write_round_logs(const std::string& out_dir, const std::string& variant,
                      const std::vector<metrics::RoundMetrics>& log) {
  std::ofstream csv(fs::path(out_dir) / (variant + "_rounds.csv"));
  std::ofstream jsonl(fs::path(out_dir) / (variant + "_rounds.jsonl"));
  if (!csv || !jsonl) throw_error(ErrorKind::Io, "cannot write round logs under '" + out_dir + "'");
  csv << metrics::RoundMetrics::csv_header() << "\n";
  for (const auto& rm : log) {
    csv << rm.to_csv() << "\n";
    jsonl << rm.to_json() << "\n";
  }
}

std::string opt_acc(const std::optional<double>& v) {
  return v ? util::format_double(*v) : "nan";
}

}  // namespace

std::string cmd_generate(const ExperimentSpec& spec, const std::string& out_dir) {
  ensure_dir(out_dir);
  const auto built = build_data(spec);
  data::save_dataset((fs::path(out_dir) / "train.data").string(), built.train);
  data::save_dataset((fs::path(out_dir) / "test.data").string(), built.test);
  data::save_partition((fs::path(out_dir) / "partition.txt").string(), built.partition);
  return count_table(built.partition, spec.num_classes);
}

std::string cmd_train(const ExperimentSpec& spec, const std::string& out_dir) {
  ensure_dir(out_dir);
  const auto built = build_data(spec);
  std::ostringstream summary;
  summary << "variant,acc_all,acc_many,acc_medium,acc_few\n";
  for (const auto& variant : spec.variants) {
    fed::TrainConfig cfg = spec.train;
    cfg.algorithm = fed::parse_algorithm(variant);
    const auto result = fed::run_experiment(cfg, spec.arch, built.train, built.partition, built.test);
    write_round_logs(out_dir, variant, result.round_log);
    model::MLPClassifier net(spec.arch);
    net.unflatten(result.final_params);
    model::save_checkpoint((fs::path(out_dir) / (variant + "_final.ckpt")).string(), net);
    const auto& acc = result.final_accuracy;
    summary << variant << "," << util::format_double(acc.all) << "," << opt_acc(acc.many) << ","
            << opt_acc(acc.medium) << "," << opt_acc(acc.few) << "\n";
  }
  std::ofstream sf(fs::path(out_dir) / "summary.csv");
  if (!sf) throw_error(ErrorKind::Io, "cannot write summary under '" + out_dir + "'");
  sf << summary.str();
  return summary.str();
}

std::string cmd_sweep(const ExperimentSpec& spec, const std::string& out_dir,
                      const std::string& param, const std::vector<std::string>& values) {
  if (param != "gamma" && param != "lambda" && param != "alpha" && param != "IF")
    throw_error(ErrorKind::Config,
                "sweep: unknown parameter '" + param + "' (expected gamma, lambda, alpha or IF)");
  if (values.empty()) throw_error(ErrorKind::Config, "sweep: no values given");
  ensure_dir(out_dir);
  const std::string variant = spec.variants.front();

  std::ostringstream table;
  table << "param,value,acc_all,acc_many,acc_medium,acc_few\n";
  for (const auto& value_str : values) {
    const double value = util::parse_double(value_str, "sweep value");
    ExperimentSpec run = spec;
    if (param == "gamma") {
      run.train.gamma = value;
    } else if (param == "lambda") {
      run.train.lambda = value;
    } else if (param == "alpha") {
      run.alpha = value;
    } else {
      run.imbalance_factor = value;
    }
    run.train.validate();
    const auto built = build_data(run);
    fed::TrainConfig cfg = run.train;
    cfg.algorithm = fed::parse_algorithm(variant);
    const auto result = fed::run_experiment(cfg, run.arch, built.train, built.partition, built.test);
    write_round_logs(out_dir, variant + "_" + param + value_str, result.round_log);
    const auto& acc = result.final_accuracy;
    table << param << "," << value_str << "," << util::format_double(acc.all) << ","
          << opt_acc(acc.many) << "," << opt_acc(acc.medium) << "," << opt_acc(acc.few) << "\n";
  }
  std::ofstream tf(fs::path(out_dir) / ("sweep_" + param + ".csv"));
  if (!tf) throw_error(ErrorKind::Io, "cannot write sweep table under '" + out_dir + "'");
  tf << table.str();
  return table.str();
}

namespace {

struct ParsedLog {
  std::string label;
  std::vector<std::string> columns;             // without the leading "round"
  std::vector<std::vector<std::string>> rows;   // cell text per row, aligned with columns
  std::vector<int> rounds;
};

ParsedLog parse_round_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_error(ErrorKind::Io, "cannot open log '" + path + "'");
  ParsedLog log;
  log.label = fs::path(path).stem().string();
  std::string line;
  if (!std::getline(in, line))
    throw_error(ErrorKind::Parse, "log '" + path + "' line 1: empty file");
  auto header = util::split(line, ',');
  if (header.empty() || header.front() != "round")
    throw_error(ErrorKind::Parse, "log '" + path + "' line 1: header must start with 'round'");
  log.columns.assign(header.begin() + 1, header.end());
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (util::trim(line).empty()) continue;
    auto fields = util::split(line, ',');
    if (fields.size() != header.size())
      throw_error(ErrorKind::Parse, "log '" + path + "' line " + std::to_string(lineno) + ": has " +
                                        std::to_string(fields.size()) + " fields, expected " +
                                        std::to_string(header.size()));
    try {
      log.rounds.push_back(static_cast<int>(util::parse_int(fields[0], "round index")));
    } catch (const Error&) {
      throw_error(ErrorKind::Parse, "log '" + path + "' line " + std::to_string(lineno) +
                                        ": bad round index '" + fields[0] + "'");
    }
    log.rows.emplace_back(fields.begin() + 1, fields.end());
  }
  return log;
}

}  // namespace

std::string cmd_report(const std::vector<std::string>& log_paths) {
  if (log_paths.empty()) throw_error(ErrorKind::Config, "report: need at least one log");
  std::vector<ParsedLog> logs;
  logs.reserve(log_paths.size());
  for (const auto& p : log_paths) logs.push_back(parse_round_log(p));

  std::ostringstream out;
  std::size_t rows = logs.front().rows.size();
  for (const auto& l : logs) rows = std::min(rows, l.rows.size());
  bool truncated = false;
  for (const auto& l : logs) truncated |= l.rows.size() != rows;
  if (truncated)
    out << "# warning: logs have differing round counts; aligned on the first " << rows
        << " rounds\n";

  const bool single = logs.size() == 1;
  out << "round";
  for (const auto& l : logs)
    for (const auto& col : l.columns) {
      out << "," << col;
      if (!single) out << "@" << l.label;
    }
  out << "\n";
  for (std::size_t r = 0; r < rows; ++r) {
    out << logs.front().rounds[r];
    for (const auto& l : logs)
      for (const auto& cell : l.rows[r]) out << "," << cell;
    out << "\n";
  }

  if (!single && rows > 0) {
    out << "\nlabel";
    for (const auto& col : logs.front().columns) out << "," << col;
    out << "\n";
    for (const auto& l : logs) {
      out << l.label;
      for (const auto& cell : l.rows[rows - 1]) out << "," << cell;
      out << "\n";
    }
  }
  return out.str();
}

}  // namespace fedlt::exp
