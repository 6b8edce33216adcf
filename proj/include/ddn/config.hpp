#pragma once

#include <string>
#include <vector>

#include "ddn/network.hpp"
#include "ddn/scene.hpp"
#include "ddn/training.hpp"

// Plain-text key=value configuration. One schema drives parsing, default
// documentation and the model-config block embedded in checkpoints.

namespace ddn {
namespace config {

std::vector<int> parse_ints(const std::string& csv);
std::string join_ints(const std::vector<int>& v);

struct EvalConfig {
  double threshold = 0.5;
  double match_dist = 3.0;
  int roc_thresholds = 99;
};

struct DataConfig {
  int count = 100;
  std::string kind = "single";  // single | sequence
};

struct RunConfig {
  uint64_t seed = 7;
  net::ModelConfig model;
  train::TrainConfig train;
  scene::SceneSpec scene;
  EvalConfig eval;
  DataConfig data;
};

// Applies one key; unknown keys and unparsable values are errors naming the
// key. `seed` also feeds train.seed.
void apply_key(RunConfig& cfg, const std::string& key,
               const std::string& value);

RunConfig parse_run_config_text(const std::string& text);
RunConfig load_run_config(const std::string& path);

struct KeyDoc {
  std::string key;
  std::string default_value;
  std::string doc;
};
std::vector<KeyDoc> describe();

// Model-config subset used by the checkpoint header.
std::vector<std::pair<std::string, std::string>> model_config_kv(
    const net::ModelConfig& cfg);
void apply_model_key(net::ModelConfig& cfg, const std::string& key,
                     const std::string& value);

}  // namespace config
}  // namespace ddn
