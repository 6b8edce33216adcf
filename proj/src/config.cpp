#include "ddn/config.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <sstream>

#include "ddn/io.hpp"

namespace ddn {
namespace config {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int r = std::stoi(v, &pos);
    require(pos == v.size(), "");
    return r;
  } catch (...) {
    fail("config: key '", key, "' expects an integer, got '", v, "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double r = std::stod(v, &pos);
    require(pos == v.size(), "");
    return r;
  } catch (...) {
    fail("config: key '", key, "' expects a number, got '", v, "'");
  }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    uint64_t r = std::stoull(v, &pos);
    require(pos == v.size(), "");
    return r;
  } catch (...) {
    fail("config: key '", key, "' expects an unsigned integer, got '", v,
         "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  fail("config: key '", key, "' expects a boolean (true/false), got '", v,
       "'");
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

std::string from_double(double d) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", d);
  return buf;
}

std::vector<int> to_ints(const std::string& key, const std::string& v) {
  try {
    return parse_ints(v);
  } catch (...) {
    fail("config: key '", key, "' expects a comma-separated integer list, "
         "got '", v, "'");
  }
}

struct ModelEntry {
  const char* key;
  const char* doc;
  std::function<std::string(const net::ModelConfig&)> get;
  std::function<void(net::ModelConfig&, const std::string&, const std::string&)>
      set;
};

const std::vector<ModelEntry>& model_schema() {
  static const std::vector<ModelEntry> schema = {
      {"channels", "per-level widths, strictly increasing",
       [](const net::ModelConfig& m) { return join_ints(m.channels); },
       [](net::ModelConfig& m, const std::string& k, const std::string& v) {
         m.channels = to_ints(k, v);
       }},
      {"dilations", "dilation rates of the 3x3 difference bank",
       [](const net::ModelConfig& m) { return join_ints(m.dilations); },
       [](net::ModelConfig& m, const std::string& k, const std::string& v) {
         m.dilations = to_ints(k, v);
       }},
      {"temporal_window", "frames per temporal stack (N)",
       [](const net::ModelConfig& m) {
         return std::to_string(m.temporal_window);
       },
       [](net::ModelConfig& m, const std::string& k, const std::string& v) {
         m.temporal_window = to_int(k, v);
       }},
      {"stages", "number of chained U-Modules",
       [](const net::ModelConfig& m) { return std::to_string(m.stages); },
       [](net::ModelConfig& m, const std::string& k, const std::string& v) {
         m.stages = to_int(k, v);
       }},
      {"head_channels", "output channels of the head (fixed at 1)",
       [](const net::ModelConfig& m) {
         return std::to_string(m.head_channels);
       },
       [](net::ModelConfig& m, const std::string& k, const std::string& v) {
         m.head_channels = to_int(k, v);
       }},
      {"use_sd2m", "SD2M inside every block",
       [](const net::ModelConfig& m) { return from_bool(m.use_sd2m); },
       [](net::ModelConfig& m, const std::string& k, const std::string& v) {
         m.use_sd2m = to_bool(k, v);
       }},
      {"use_inception_pool", "inception pooling between levels",
       [](const net::ModelConfig& m) {
         return from_bool(m.use_inception_pool);
       },
       [](net::ModelConfig& m, const std::string& k, const std::string& v) {
         m.use_inception_pool = to_bool(k, v);
       }},
      {"use_sd3m", "SD3M branch inside inception pooling",
       [](const net::ModelConfig& m) { return from_bool(m.use_sd3m); },
       [](net::ModelConfig& m, const std::string& k, const std::string& v) {
         m.use_sd3m = to_bool(k, v);
       }},
      {"conv_bias", "bias terms on learned convolutions",
       [](const net::ModelConfig& m) { return from_bool(m.conv_bias); },
       [](net::ModelConfig& m, const std::string& k, const std::string& v) {
         m.conv_bias = to_bool(k, v);
       }},
      {"basis_mode", "basis treatment: normalized | orthonormal",
       [](const net::ModelConfig& m) {
         return m.basis_mode == BasisMode::kNormalized ? "normalized"
                                                       : "orthonormal";
       },
       [](net::ModelConfig& m, const std::string& k, const std::string& v) {
         if (v == "normalized")
           m.basis_mode = BasisMode::kNormalized;
         else if (v == "orthonormal")
           m.basis_mode = BasisMode::kOrthonormalized;
         else
           fail("config: key '", k, "' expects normalized|orthonormal, got '",
                v, "'");
       }},
      {"downsample_bfem", "SD3M basis extractor: dfed | haar",
       [](const net::ModelConfig& m) {
         return m.downsample_bfem == spatial::DownsampleBfem::kDfed ? "dfed"
                                                                    : "haar";
       },
       [](net::ModelConfig& m, const std::string& k, const std::string& v) {
         if (v == "dfed")
           m.downsample_bfem = spatial::DownsampleBfem::kDfed;
         else if (v == "haar")
           m.downsample_bfem = spatial::DownsampleBfem::kHaar;
         else
           fail("config: key '", k, "' expects dfed|haar, got '", v, "'");
       }},
  };
  return schema;
}

struct RunEntry {
  std::string key;
  std::string doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::vector<RunEntry> build_run_schema() {
  std::vector<RunEntry> schema;
  schema.push_back({"seed", "single source of all randomness",
                    [](const RunConfig& c) { return std::to_string(c.seed); },
                    [](RunConfig& c, const std::string& v) {
                      c.seed = to_u64("seed", v);
                      c.train.seed = c.seed;
                    }});
  for (const auto& e : model_schema()) {
    schema.push_back(
        {std::string("model.") + e.key, e.doc,
         [&e](const RunConfig& c) { return e.get(c.model); },
         [&e](RunConfig& c, const std::string& v) {
           e.set(c.model, std::string("model.") + e.key, v);
         }});
  }

  auto add_int = [&schema](const std::string& key, const char* doc,
                           std::function<int&(RunConfig&)> ref) {
    schema.push_back(
        {key, doc,
         [ref](const RunConfig& c) {
           return std::to_string(ref(const_cast<RunConfig&>(c)));
         },
         [ref, key](RunConfig& c, const std::string& v) {
           ref(c) = to_int(key, v);
         }});
  };
  auto add_double = [&schema](const std::string& key, const char* doc,
                              std::function<double&(RunConfig&)> ref) {
    schema.push_back(
        {key, doc,
         [ref](const RunConfig& c) {
           return from_double(ref(const_cast<RunConfig&>(c)));
         },
         [ref, key](RunConfig& c, const std::string& v) {
           ref(c) = to_double(key, v);
         }});
  };
  auto add_bool = [&schema](const std::string& key, const char* doc,
                            std::function<bool&(RunConfig&)> ref) {
    schema.push_back(
        {key, doc,
         [ref](const RunConfig& c) {
           return from_bool(ref(const_cast<RunConfig&>(c)));
         },
         [ref, key](RunConfig& c, const std::string& v) {
           ref(c) = to_bool(key, v);
         }});
  };

  add_int("train.epochs", "training epochs",
          [](RunConfig& c) -> int& { return c.train.epochs; });
  add_int("train.batch_size", "minibatch size",
          [](RunConfig& c) -> int& { return c.train.batch_size; });
  add_double("train.base_lr", "initial learning rate",
             [](RunConfig& c) -> double& { return c.train.base_lr; });
  schema.push_back(
      {"train.milestones", "epochs at which the learning rate decays",
       [](const RunConfig& c) { return join_ints(c.train.milestones); },
       [](RunConfig& c, const std::string& v) {
         c.train.milestones = to_ints("train.milestones", v);
       }});
  add_double("train.decay", "learning-rate decay factor per milestone",
             [](RunConfig& c) -> double& { return c.train.decay; });
  add_double("train.grad_clip", "global-norm gradient clip (0 disables)",
             [](RunConfig& c) -> double& { return c.train.grad_clip; });
  add_bool("train.freeze_backbone",
           "std2net: keep the per-frame backbone fixed",
           [](RunConfig& c) -> bool& { return c.train.freeze_backbone; });

  add_int("scene.height", "image height (divisible by 8)",
          [](RunConfig& c) -> int& { return c.scene.height; });
  add_int("scene.width", "image width (divisible by 8)",
          [](RunConfig& c) -> int& { return c.scene.width; });
  add_int("scene.targets_min", "minimum targets per image",
          [](RunConfig& c) -> int& { return c.scene.targets_min; });
  add_int("scene.targets_max", "maximum targets per image",
          [](RunConfig& c) -> int& { return c.scene.targets_max; });
  add_double("scene.amplitude_min", "minimum target contrast",
             [](RunConfig& c) -> double& { return c.scene.amplitude_min; });
  add_double("scene.amplitude_max", "maximum target contrast",
             [](RunConfig& c) -> double& { return c.scene.amplitude_max; });
  add_double("scene.sigma_min", "minimum target PSF sigma (px)",
             [](RunConfig& c) -> double& { return c.scene.sigma_min; });
  add_double("scene.sigma_max", "maximum target PSF sigma (px)",
             [](RunConfig& c) -> double& { return c.scene.sigma_max; });
  add_int("scene.clutter_octaves", "value-noise octaves in the background",
          [](RunConfig& c) -> int& { return c.scene.clutter_octaves; });
  add_double("scene.clutter_amplitude", "clutter strength",
             [](RunConfig& c) -> double& {
               return c.scene.clutter_amplitude;
             });
  add_double("scene.noise_sigma", "per-pixel Gaussian noise sigma",
             [](RunConfig& c) -> double& { return c.scene.noise_sigma; });
  add_int("scene.frames_per_clip", "frames per sequence clip",
          [](RunConfig& c) -> int& { return c.scene.frames_per_clip; });
  add_double("scene.velocity_min", "minimum target speed (px/frame)",
             [](RunConfig& c) -> double& { return c.scene.velocity_min; });
  add_double("scene.velocity_max", "maximum target speed (px/frame, <= 2)",
             [](RunConfig& c) -> double& { return c.scene.velocity_max; });
  add_double("scene.flicker_amplitude", "per-frame clutter flicker strength",
             [](RunConfig& c) -> double& {
               return c.scene.flicker_amplitude;
             });

  add_double("eval.threshold", "binarization threshold after sigmoid",
             [](RunConfig& c) -> double& { return c.eval.threshold; });
  add_double("eval.match_dist", "centroid match distance for Pd (px)",
             [](RunConfig& c) -> double& { return c.eval.match_dist; });
  add_int("eval.roc_thresholds", "number of ROC thresholds",
          [](RunConfig& c) -> int& { return c.eval.roc_thresholds; });

  add_int("data.count", "total samples to generate (80/20 split)",
          [](RunConfig& c) -> int& { return c.data.count; });
  schema.push_back({"data.kind", "dataset kind: single | sequence",
                    [](const RunConfig& c) { return c.data.kind; },
                    [](RunConfig& c, const std::string& v) {
                      require(v == "single" || v == "sequence",
                              "config: key 'data.kind' expects "
                              "single|sequence, got '",
                              v, "'");
                      c.data.kind = v;
                    }});
  return schema;
}

const std::vector<RunEntry>& run_schema() {
  static const std::vector<RunEntry> schema = build_run_schema();
  return schema;
}

}  // namespace

std::vector<int> parse_ints(const std::string& csv) {
  std::vector<int> out;
  std::string token;
  std::istringstream in(csv);
  while (std::getline(in, token, ',')) {
    token = trim(token);
    if (token.empty()) continue;
    size_t pos = 0;
    out.push_back(std::stoi(token, &pos));
    require(pos == token.size(), "bad integer '", token, "'");
  }
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

void apply_key(RunConfig& cfg, const std::string& key,
               const std::string& value) {
  for (const auto& e : run_schema()) {
    if (e.key == key) {
      e.set(cfg, value);
      return;
    }
  }
  fail("config: unknown key '", key, "'");
}

RunConfig parse_run_config_text(const std::string& text) {
  RunConfig cfg;
  cfg.train.seed = cfg.seed;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    require(eq != std::string::npos, "config: line ", line_no,
            " is not key=value: '", t, "'");
    apply_key(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config_text(io::read_text_file(path));
}

std::vector<KeyDoc> describe() {
  RunConfig defaults;
  std::vector<KeyDoc> out;
  for (const auto& e : run_schema())
    out.push_back({e.key, e.get(defaults), e.doc});
  return out;
}

std::vector<std::pair<std::string, std::string>> model_config_kv(
    const net::ModelConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : model_schema()) out.push_back({e.key, e.get(cfg)});
  return out;
}

void apply_model_key(net::ModelConfig& cfg, const std::string& key,
                     const std::string& value) {
  for (const auto& e : model_schema()) {
    if (key == e.key) {
      e.set(cfg, key, value);
      return;
    }
  }
  fail("checkpoint config: unknown key '", key, "'");
}

}  // namespace config
}  // namespace ddn
