#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ddn/rng.hpp"
#include "ddn/spatial.hpp"
#include "ddn/temporal.hpp"

// Model assembly: the encoder-decoder U-Module, the three-stage single-frame
// network and its temporal extension. Parameters live in a flat name->tensor
// tree whose structure is a pure function of the config, which keeps
// checkpointing and the optimizer trivial.

namespace ddn {
namespace net {

enum class ModelKind { kSd2net, kStd2net };

inline const char* model_kind_name(ModelKind k) {
  return k == ModelKind::kSd2net ? "sd2net" : "std2net";
}

struct ModelConfig {
  std::vector<int> channels{8, 16, 32, 64};
  std::vector<int> dilations{1, 3};
  int temporal_window = 5;
  int stages = 3;
  int head_channels = 1;
  bool use_sd2m = true;
  bool use_inception_pool = true;
  bool use_sd3m = true;
  bool conv_bias = false;
  BasisMode basis_mode = BasisMode::kNormalized;
  spatial::DownsampleBfem downsample_bfem = spatial::DownsampleBfem::kDfed;
  double norm_eps = bdm::kNormEps;

  int levels() const { return (int)channels.size(); }
  int base_channels() const { return channels.front(); }
  int downsample_factor() const { return 1 << (levels() - 1); }

  void validate() const {
    require(channels.size() >= 2, "config: need at least 2 channel levels");
    for (size_t i = 1; i < channels.size(); ++i)
      require(channels[i] > channels[i - 1],
              "config: channels must be strictly increasing");
    require(!dilations.empty(), "config: dilations must be non-empty");
    for (int d : dilations) require(d >= 1, "config: bad dilation ", d);
    require(temporal_window >= 2, "config: temporal_window must be >= 2");
    require(stages >= 1, "config: stages must be >= 1");
    require(head_channels == 1, "config: head_channels must be 1");
    if (use_inception_pool)
      require(channels.front() >= 3,
              "config: inception pooling needs >= 3 channels at every "
              "downsampled level; channels[0]=",
              channels.front());
  }

  bool operator==(const ModelConfig&) const = default;
};

template <class T>
using ParamTree = std::map<std::string, Tensor<T>>;

template <class T>
using ParamVars = std::map<std::string, Var<T>>;

namespace detail {

inline void add_conv(std::map<std::string, Shape>& shapes,
                     const std::string& name, int cout, int cin, int k,
                     bool bias) {
  shapes[name + ".w"] = {cout, cin, k, k};
  if (bias) shapes[name + ".b"] = {cout};
}

inline void add_u_module(std::map<std::string, Shape>& shapes,
                         const std::string& prefix, const ModelConfig& cfg) {
  const int L = cfg.levels();
  for (int l = 0; l < L; ++l) {
    const int cin = l == 0 ? cfg.channels[0] : cfg.channels[l - 1];
    const int cl = cfg.channels[l];
    add_conv(shapes, prefix + "enc" + std::to_string(l) + ".conv", cl, cin, 3,
             cfg.conv_bias);
    if (cfg.use_sd2m)
      add_conv(shapes, prefix + "enc" + std::to_string(l) + ".sd2m", cl, cl, 1,
               cfg.conv_bias);
    if (l < L - 1 && cfg.use_inception_pool && cfg.use_sd3m) {
      const int g3 = ag::inception_split(cl)[2];
      add_conv(shapes, prefix + "down" + std::to_string(l) + ".sd3m", g3, g3,
               1, cfg.conv_bias);
    }
  }
  for (int l = L - 2; l >= 0; --l) {
    const int cl = cfg.channels[l];
    add_conv(shapes, prefix + "dec" + std::to_string(l) + ".up", cl,
             cfg.channels[l + 1], 3, cfg.conv_bias);
    add_conv(shapes, prefix + "dec" + std::to_string(l) + ".fuse", cl, 2 * cl,
             1, cfg.conv_bias);
    add_conv(shapes, prefix + "dec" + std::to_string(l) + ".conv", cl, cl, 3,
             cfg.conv_bias);
    if (cfg.use_sd2m)
      add_conv(shapes, prefix + "dec" + std::to_string(l) + ".sd2m", cl, cl, 1,
               cfg.conv_bias);
  }
}

inline void add_backbone(std::map<std::string, Shape>& shapes,
                         const std::string& prefix, const ModelConfig& cfg) {
  add_conv(shapes, prefix + "stem", cfg.channels[0], 1, 3, cfg.conv_bias);
  for (int s = 1; s <= cfg.stages; ++s)
    add_u_module(shapes, prefix + "u" + std::to_string(s) + ".", cfg);
}

}  // namespace detail

// The parameter tree layout for a given config. Fixed difference kernels are
// constants, not parameters, so they never appear here.
inline std::map<std::string, Shape> param_shapes(const ModelConfig& cfg,
                                                 ModelKind kind) {
  cfg.validate();
  std::map<std::string, Shape> shapes;
  const int c0 = cfg.channels[0];
  if (kind == ModelKind::kSd2net) {
    detail::add_backbone(shapes, "", cfg);
    detail::add_conv(shapes, "head", cfg.head_channels, c0, 1, cfg.conv_bias);
  } else {
    detail::add_backbone(shapes, "sd2net.", cfg);
    detail::add_conv(shapes, "td2m", c0, cfg.temporal_window * c0, 1,
                     cfg.conv_bias);
    detail::add_u_module(shapes, "tail.u.", cfg);
    detail::add_conv(shapes, "tail.head", cfg.head_channels, c0, 1,
                     cfg.conv_bias);
  }
  return shapes;
}

// Uniform +-sqrt(6/fan_in) for weights, zeros for biases. Each leaf draws
// from its own split of the seed stream, so the values are a function of
// (seed, leaf name order) only.
template <class T>
ParamTree<T> init_params(const ModelConfig& cfg, uint64_t seed,
                         ModelKind kind) {
  auto shapes = param_shapes(cfg, kind);
  ParamTree<T> tree;
  Rng root(seed);
  uint64_t leaf_index = 0;
  for (const auto& [name, shape] : shapes) {
    Tensor<T> t(shape);
    if (shape.size() == 4) {
      const double fan_in = (double)shape[1] * shape[2] * shape[3];
      const double bound = std::sqrt(6.0 / fan_in);
      Rng rng = root.split(leaf_index);
      for (auto& v : t.data) v = (T)rng.uniform(-bound, bound);
    }
    tree.emplace(name, std::move(t));
    ++leaf_index;
  }
  return tree;
}

template <class T>
int64_t count_params(const ParamTree<T>& tree) {
  int64_t n = 0;
  for (const auto& [name, t] : tree) n += t.size();
  return n;
}

// Loads the whole tree onto a tape. Leaves whose name starts with
// `freeze_prefix` (when non-empty) are recorded without gradient.
template <class T>
ParamVars<T> make_param_vars(Graph<T>& g, const ParamTree<T>& tree,
                             bool trainable = true,
                             const std::string& freeze_prefix = "") {
  ParamVars<T> vars;
  for (const auto& [name, t] : tree) {
    bool req = trainable;
    if (!freeze_prefix.empty() && name.rfind(freeze_prefix, 0) == 0)
      req = false;
    vars.emplace(name, g.leaf(t, req));
  }
  return vars;
}

template <class T>
Var<T> pget(const ParamVars<T>& pv, const std::string& name) {
  auto it = pv.find(name);
  require(it != pv.end(), "missing parameter leaf: ", name);
  return it->second;
}

template <class T>
Var<T> pget_bias(const ParamVars<T>& pv, const std::string& name,
                 bool enabled) {
  if (!enabled) return Var<T>{};
  return pget(pv, name);
}

namespace detail {

template <class T>
Var<T> learned_conv(const ParamVars<T>& pv, const std::string& name, Var<T> x,
                    const ModelConfig& cfg) {
  ops::ConvSpec spec{1, 1, ops::Padding::kZero, false};
  return ag::conv2d(x, pget(pv, name + ".w"),
                    pget_bias<T>(pv, name + ".b", cfg.conv_bias), spec);
}

template <class T>
Var<T> downsample(const ParamVars<T>& pv, const std::string& prefix, Var<T> x,
                  const ModelConfig& cfg) {
  if (!cfg.use_inception_pool) return ag::max_pool2(x);
  Var<T> w, b;
  if (cfg.use_sd3m) {
    w = pget(pv, prefix + "sd3m.w");
    b = pget_bias<T>(pv, prefix + "sd3m.b", cfg.conv_bias);
  }
  return ag::inception_pool(x, w, b, (T)cfg.norm_eps, cfg.basis_mode,
                            cfg.use_sd3m, cfg.downsample_bfem);
}

}  // namespace detail

// One encoder-decoder stage. Per level: 3x3 conv -> relu -> SD2M; downsample
// between levels; decoder mirrors with nearest-neighbor upsampling, a skip
// concatenation and a 1x1 fusion conv. Resolution and channel count are
// preserved end to end.
template <class T>
Var<T> u_module_forward(const ParamVars<T>& pv, const std::string& prefix,
                        Var<T> x, const ModelConfig& cfg) {
  const Shape& s = ag::val(x).dims;
  require(s.size() == 4, "u_module: input must be [B,C,H,W]");
  const int L = cfg.levels();
  const int f = cfg.downsample_factor();
  require(s[2] % f == 0 && s[3] % f == 0, "u_module: H and W must be divisible by ",
          f, " (2^(levels-1)), got H=", s[2], " W=", s[3]);
  require(s[1] == cfg.channels[0], "u_module: expected ", cfg.channels[0],
          " input channels, got ", s[1]);

  const auto bank = spatial::make_difference_bank(cfg.dilations);
  const T eps = (T)cfg.norm_eps;

  std::vector<Var<T>> skips;
  Var<T> h = x;
  for (int l = 0; l < L; ++l) {
    const std::string enc = prefix + "enc" + std::to_string(l);
    h = ag::relu(detail::learned_conv(pv, enc + ".conv", h, cfg));
    if (cfg.use_sd2m)
      h = ag::sd2m(h, pget(pv, enc + ".sd2m.w"),
                   pget_bias<T>(pv, enc + ".sd2m.b", cfg.conv_bias), bank, eps,
                   cfg.basis_mode);
    if (l < L - 1) {
      skips.push_back(h);
      h = detail::downsample(pv, prefix + "down" + std::to_string(l) + ".", h,
                             cfg);
    }
  }
  for (int l = L - 2; l >= 0; --l) {
    const std::string dec = prefix + "dec" + std::to_string(l);
    Var<T> up = ag::relu(
        detail::learned_conv(pv, dec + ".up", ag::upsample_nearest2(h), cfg));
    Var<T> cat = ag::concat<T>({skips[l], up}, 1);
    h = ag::relu(detail::learned_conv(pv, dec + ".fuse", cat, cfg));
    h = ag::relu(detail::learned_conv(pv, dec + ".conv", h, cfg));
    if (cfg.use_sd2m)
      h = ag::sd2m(h, pget(pv, dec + ".sd2m.w"),
                   pget_bias<T>(pv, dec + ".sd2m.b", cfg.conv_bias), bank, eps,
                   cfg.basis_mode);
  }
  return h;
}

// Stem then the chained U-Modules; the pre-head feature tensor is the tap
// point for the temporal network.
template <class T>
Var<T> backbone_forward(const ParamVars<T>& pv, const std::string& prefix,
                        Var<T> image, const ModelConfig& cfg) {
  const Shape& s = ag::val(image).dims;
  require(s.size() == 4 && s[1] == 1,
          "backbone: input must be [B,1,H,W], got ", shape_str(s));
  Var<T> h = ag::relu(detail::learned_conv(pv, prefix + "stem", image, cfg));
  for (int st = 1; st <= cfg.stages; ++st)
    h = u_module_forward(pv, prefix + "u" + std::to_string(st) + ".", h, cfg);
  return h;
}

template <class T>
struct Sd2netOut {
  Var<T> logits;    // [B,1,H,W]
  Var<T> features;  // [B,C0,H,W], pre-head
};

template <class T>
Sd2netOut<T> sd2net_forward(const ParamVars<T>& pv, Var<T> image,
                            const ModelConfig& cfg) {
  Var<T> features = backbone_forward(pv, "", image, cfg);
  Var<T> logits = detail::learned_conv(pv, "head", features, cfg);
  return {logits, features};
}

// Per-frame shared-weight backbone features -> TD2M -> one refinement
// U-Module -> 1x1 head. Emits logits for the current (last) frame.
template <class T>
Var<T> std2net_forward(const ParamVars<T>& pv, Var<T> sequence,
                       const ModelConfig& cfg) {
  const Shape& s = ag::val(sequence).dims;
  require(s.size() == 5, "std2net: input must be [B,N,1,H,W], got ",
          shape_str(s));
  require(s[1] == cfg.temporal_window, "std2net: sequence has ", s[1],
          " frames but temporal_window is ", cfg.temporal_window);
  require(s[2] == 1, "std2net: frames must be single-channel");
  const int B = s[0], N = s[1], H = s[3], W = s[4];

  std::vector<Var<T>> feats;
  feats.reserve(N);
  for (int i = 0; i < N; ++i) {
    Var<T> frame = ag::reshape(ag::slice(sequence, 1, i, 1), {B, 1, H, W});
    feats.push_back(backbone_forward(pv, "sd2net.", frame, cfg));
  }
  Var<T> fused = ag::td2m(feats, pget(pv, "td2m.w"),
                          pget_bias<T>(pv, "td2m.b", cfg.conv_bias),
                          (T)cfg.norm_eps, cfg.basis_mode);
  Var<T> h = u_module_forward(pv, "tail.u.", fused, cfg);
  return detail::learned_conv(pv, "tail.head", h, cfg);
}

}  // namespace net
}  // namespace ddn
