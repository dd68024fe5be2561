#include "uniq/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace uniq {

namespace {

using nlohmann::json;

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: field '") + key +
                      "' has the wrong type");
  }
}

void require_range(bool ok, const char* field, const char* expectation) {
  if (!ok)
    throw ConfigError(std::string("config: field '") + field + "' must be " +
                      expectation);
}

}  // namespace

void ExperimentConfig::validate() const {
  require_range(bits_w >= 1 && bits_w <= 8, "bits_w", "in [1, 8]");
  require_range(bits_a >= 1 && bits_a <= 8, "bits_a", "in [1, 8]");
  require_range(stages >= 1 && stages <= 1024, "stages", "in [1, 1024]");
  require_range(epochs_per_stage >= 1 && epochs_per_stage <= 1000,
                "epochs_per_stage", "in [1, 1000]");
  require_range(restart_iterations >= 1 && restart_iterations <= 100,
                "restart_iterations", "in [1, 100]");
  require_range(learning_rate > 0.0 && learning_rate < 1.0, "learning_rate",
                "in (0, 1)");
  require_range(momentum >= 0.0 && momentum < 1.0, "momentum", "in [0, 1)");
  require_range(weight_decay >= 0.0 && weight_decay < 1.0, "weight_decay",
                "in [0, 1)");
  require_range(method == "kquantile" || method == "kmeans" ||
                    method == "uniform",
                "method", "one of kquantile|kmeans|uniform");
  require_range(dist == "gaussian" || dist == "empirical", "dist",
                "one of gaussian|empirical");
  require_range(arch == "lenet-ish" || arch == "narrow-resnet", "arch",
                "one of lenet-ish|narrow-resnet");
  require_range(mode == "fine-tune" || mode == "from-scratch", "mode",
                "one of fine-tune|from-scratch");
  require_range(batch_size >= 1 && batch_size <= 4096, "batch_size",
                "in [1, 4096]");
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");

  static const char* known[] = {
      "seed",          "bits_w",        "bits_a",
      "stages",        "epochs_per_stage", "restart_iterations",
      "learning_rate", "momentum",      "weight_decay",
      "method",        "dist",          "dataset",
      "arch",          "mode",          "batch_size",
      "quantize_first_last"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok)
      throw ConfigError("config: unknown field '" + it.key() + "'");
  }

  ExperimentConfig cfg;
  read_field(j, "seed", cfg.seed);
  read_field(j, "bits_w", cfg.bits_w);
  read_field(j, "bits_a", cfg.bits_a);
  read_field(j, "stages", cfg.stages);
  read_field(j, "epochs_per_stage", cfg.epochs_per_stage);
  read_field(j, "restart_iterations", cfg.restart_iterations);
  read_field(j, "learning_rate", cfg.learning_rate);
  read_field(j, "momentum", cfg.momentum);
  read_field(j, "weight_decay", cfg.weight_decay);
  read_field(j, "method", cfg.method);
  read_field(j, "dist", cfg.dist);
  read_field(j, "dataset", cfg.dataset);
  read_field(j, "arch", cfg.arch);
  read_field(j, "mode", cfg.mode);
  read_field(j, "batch_size", cfg.batch_size);
  read_field(j, "quantize_first_last", cfg.quantize_first_last);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

}  // namespace uniq
