#include "fedlt/fedlt.h"

#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "exp/experiments.hpp"
#include "util/config.hpp"
#include "util/error.hpp"
#include "util/strings.hpp"

struct fedlt_config_t {
  fedlt::util::KeyValueConfig cfg;
  mutable std::string lookup;  // backing storage for fedlt_config_get
};

namespace {

thread_local std::string g_last_error;

fedlt_status status_of(const fedlt::Error& e) {
  return e.kind() == fedlt::ErrorKind::Config ? FEDLT_ERROR_CONFIG : FEDLT_ERROR_RUNTIME;
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <class Fn>
fedlt_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return FEDLT_OK;
  } catch (const fedlt::Error& e) {
    g_last_error = e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FEDLT_ERROR_RUNTIME;
  }
}

fedlt_status run_command(const fedlt_config_t* cfg, char** out_text,
                         const std::function<std::string(const fedlt::exp::ExperimentSpec&)>& cmd) {
  if (!cfg) {
    g_last_error = "null config handle";
    return FEDLT_ERROR_CONFIG;
  }
  return guarded([&] {
    const auto spec = fedlt::exp::ExperimentSpec::from_config(cfg->cfg);
    const std::string text = cmd(spec);
    if (out_text) *out_text = dup_string(text);
  });
}

}  // namespace

extern "C" {

fedlt_status fedlt_config_open(const char* path, fedlt_config_t** out_cfg) {
  if (!path || !out_cfg) {
    g_last_error = "null argument";
    return FEDLT_ERROR_CONFIG;
  }
  return guarded([&] {
    auto* handle = new fedlt_config_t{fedlt::util::KeyValueConfig::load_file(path), {}};
    *out_cfg = handle;
  });
}

fedlt_status fedlt_config_parse(const char* text, fedlt_config_t** out_cfg) {
  if (!text || !out_cfg) {
    g_last_error = "null argument";
    return FEDLT_ERROR_CONFIG;
  }
  return guarded([&] {
    auto* handle = new fedlt_config_t{fedlt::util::KeyValueConfig::parse_text(text), {}};
    *out_cfg = handle;
  });
}

fedlt_status fedlt_config_set(fedlt_config_t* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) {
    g_last_error = "null argument";
    return FEDLT_ERROR_CONFIG;
  }
  return guarded([&] { cfg->cfg.set(key, value); });
}

const char* fedlt_config_get(const fedlt_config_t* cfg, const char* key) {
  if (!cfg || !key) return nullptr;
  auto v = cfg->cfg.get(key);
  if (!v) return nullptr;
  cfg->lookup = *v;
  return cfg->lookup.c_str();
}

void fedlt_config_free(fedlt_config_t* cfg) { delete cfg; }

const char* fedlt_last_error(void) { return g_last_error.c_str(); }

fedlt_status fedlt_cmd_generate(const fedlt_config_t* cfg, const char* out_dir, char** out_text) {
  if (!out_dir) {
    g_last_error = "null output directory";
    return FEDLT_ERROR_CONFIG;
  }
  return run_command(cfg, out_text,
                     [&](const auto& spec) { return fedlt::exp::cmd_generate(spec, out_dir); });
}

fedlt_status fedlt_cmd_train(const fedlt_config_t* cfg, const char* out_dir, char** out_text) {
  if (!out_dir) {
    g_last_error = "null output directory";
    return FEDLT_ERROR_CONFIG;
  }
  return run_command(cfg, out_text,
                     [&](const auto& spec) { return fedlt::exp::cmd_train(spec, out_dir); });
}

fedlt_status fedlt_cmd_sweep(const fedlt_config_t* cfg, const char* out_dir, const char* param,
                             const char* values_csv, char** out_text) {
  if (!out_dir || !param || !values_csv) {
    g_last_error = "null argument";
    return FEDLT_ERROR_CONFIG;
  }
  return run_command(cfg, out_text, [&](const auto& spec) {
    std::vector<std::string> values;
    for (const auto& v : fedlt::util::split(values_csv, ',')) {
      const std::string t = fedlt::util::trim(v);
      if (!t.empty()) values.push_back(t);
    }
    return fedlt::exp::cmd_sweep(spec, out_dir, param, values);
  });
}

fedlt_status fedlt_cmd_report(const char* const* log_paths, size_t num_logs, char** out_text) {
  if (!log_paths && num_logs > 0) {
    g_last_error = "null log path list";
    return FEDLT_ERROR_CONFIG;
  }
  return guarded([&] {
    std::vector<std::string> paths;
    paths.reserve(num_logs);
    for (size_t i = 0; i < num_logs; ++i) {
      if (!log_paths[i]) fedlt::throw_error(fedlt::ErrorKind::Config, "null log path");
      paths.emplace_back(log_paths[i]);
    }
    const std::string text = fedlt::exp::cmd_report(paths);
    if (out_text) *out_text = dup_string(text);
  });
}

void fedlt_string_free(char* text) { delete[] text; }

const char* fedlt_version(void) { return "fedlt 1.0.0"; }

}  // extern "C"
