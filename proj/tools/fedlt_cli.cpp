// fedlt command-line front end. Talks to the core exclusively through the
// C API in fedlt/fedlt.h.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime error.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedlt/fedlt.h"

namespace {

int fail(fedlt_status status) {
  std::fprintf(stderr, "error: %s\n", fedlt_last_error());
  return static_cast<int>(status);
}

struct ConfigHandle {
  fedlt_config_t* cfg = nullptr;
  ~ConfigHandle() { fedlt_config_free(cfg); }
};

int open_config(const std::string& path, long long seed_override, bool has_seed,
                const std::string& variants_override, ConfigHandle& out) {
  fedlt_status st = fedlt_config_open(path.c_str(), &out.cfg);
  if (st != FEDLT_OK) return fail(st);
  if (has_seed) {
    st = fedlt_config_set(out.cfg, "run.seed", std::to_string(seed_override).c_str());
    if (st != FEDLT_OK) return fail(st);
  }
  if (!variants_override.empty()) {
    st = fedlt_config_set(out.cfg, "run.variants", variants_override.c_str());
    if (st != FEDLT_OK) return fail(st);
  }
  return 0;
}

int print_result(fedlt_status st, char* text) {
  if (st != FEDLT_OK) return fail(st);
  if (text) {
    std::fputs(text, stdout);
    fedlt_string_free(text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedlt: federated long-tailed learning simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  long long seed = 0;
  bool has_seed = false;
  std::string variants;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "configuration file")->required();
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "override run.seed")->each([&](const std::string&) {
      has_seed = true;
    });
  };

  auto* gen = app.add_subcommand("generate", "write dataset and partition files");
  add_common(gen);

  auto* train = app.add_subcommand("train", "run the configured experiment variants");
  add_common(train);
  train->add_option("--variants", variants, "comma-separated algorithm list (overrides config)");

  auto* sweep = app.add_subcommand("sweep", "paired runs across one parameter");
  add_common(sweep);
  std::string param;
  std::string values;
  sweep->add_option("--param", param, "gamma | lambda | alpha | IF")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();

  auto* report = app.add_subcommand("report", "merge round logs for plotting");
  std::vector<std::string> logs;
  report->add_option("logs", logs, "round log files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  char* text = nullptr;
  if (report->parsed()) {
    std::vector<const char*> paths;
    paths.reserve(logs.size());
    for (const auto& l : logs) paths.push_back(l.c_str());
    const fedlt_status st = fedlt_cmd_report(paths.data(), paths.size(), &text);
    return print_result(st, text);
  }

  ConfigHandle cfg;
  if (int rc = open_config(config_path, seed, has_seed, variants, cfg); rc != 0) return rc;

  fedlt_status st = FEDLT_ERROR_CONFIG;
  if (gen->parsed())
    st = fedlt_cmd_generate(cfg.cfg, out_dir.c_str(), &text);
  else if (train->parsed())
    st = fedlt_cmd_train(cfg.cfg, out_dir.c_str(), &text);
  else if (sweep->parsed())
    st = fedlt_cmd_sweep(cfg.cfg, out_dir.c_str(), param.c_str(), values.c_str(), &text);
  return print_result(st, text);
}
