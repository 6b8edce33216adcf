#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ddn/network.hpp"
#include "ddn/scene.hpp"

namespace ddn {
namespace ag {

// 1 - sum(p*g) / (sum(p) + sum(g) - sum(p*g)), pooled over the whole batch.
// Inputs are probabilities; anything outside [0,1] is rejected.
template <class T>
Var<T> soft_iou_loss(Var<T> pred_prob, Var<T> gt) {
  const Tensor<T>& p = val(pred_prob);
  const Tensor<T>& g = val(gt);
  check_same_shape(p, g, "soft_iou_loss");
  for (int64_t i = 0; i < p.size(); ++i) {
    require(p[i] >= T(0) && p[i] <= T(1),
            "soft_iou_loss: prediction outside [0,1]: ", (double)p[i]);
    require(g[i] >= T(0) && g[i] <= T(1),
            "soft_iou_loss: ground truth outside [0,1]: ", (double)g[i]);
  }
  Var<T> inter = sum_all(mul(pred_prob, gt));
  Var<T> denom = sub(add(sum_all(pred_prob), sum_all(gt)), inter);
  return affine(div(inter, denom), T(-1), T(1));
}

template <class T>
Var<T> soft_iou_from_logits(Var<T> logits, Var<T> gt) {
  return soft_iou_loss(sigmoid(logits), gt);
}

}  // namespace ag

namespace train {

// Tape-free loss evaluation; both-empty input is a perfect (zero-loss) match.
template <class T>
T soft_iou_loss(const Tensor<T>& pred_prob, const Tensor<T>& gt) {
  check_same_shape(pred_prob, gt, "soft_iou_loss");
  T inter = 0, sp = 0, sg = 0;
  for (int64_t i = 0; i < pred_prob.size(); ++i) {
    const T p = pred_prob[i], g = gt[i];
    require(p >= T(0) && p <= T(1),
            "soft_iou_loss: prediction outside [0,1]: ", (double)p);
    require(g >= T(0) && g <= T(1),
            "soft_iou_loss: ground truth outside [0,1]: ", (double)g);
    inter += p * g;
    sp += p;
    sg += g;
  }
  const T denom = sp + sg - inter;
  if (denom == T(0)) return T(0);
  return T(1) - inter / denom;
}

struct TrainConfig {
  int epochs = 100;
  int batch_size = 8;
  double base_lr = 5e-4;
  std::vector<int> milestones{50, 75};  // epochs at which lr is multiplied by decay
  double decay = 0.1;
  uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 10.0;  // global norm; 0 disables
  bool freeze_backbone = false;  // std2net only: keep sd2net.* leaves fixed

  void validate() const {
    require(epochs >= 1, "train config: epochs must be >= 1");
    require(batch_size >= 1, "train config: batch_size must be >= 1");
    require(base_lr > 0, "train config: base_lr must be positive");
    require(decay > 0, "train config: decay must be positive");
    for (size_t i = 0; i < milestones.size(); ++i) {
      require(milestones[i] < epochs, "train config: milestone ",
              milestones[i], " not below epochs ", epochs);
      if (i)
        require(milestones[i] > milestones[i - 1],
                "train config: milestones must be strictly increasing");
    }
  }
};

inline double lr_at(int epoch, const TrainConfig& cfg) {
  double lr = cfg.base_lr;
  for (int m : cfg.milestones)
    if (epoch >= m) lr *= cfg.decay;
  return lr;
}

template <class T>
struct AdamState {
  std::map<std::string, Tensor<T>> m, v;
  int64_t step = 0;
};

// Textbook bias-corrected Adam, applied leaf-wise. Leaves without a gradient
// entry (frozen subtrees) are left untouched.
template <class T>
void adam_step(net::ParamTree<T>& params,
               const std::map<std::string, Tensor<T>>& grads,
               AdamState<T>& state, T lr, const TrainConfig& cfg) {
  ++state.step;
  const T b1 = (T)cfg.beta1, b2 = (T)cfg.beta2, eps = (T)cfg.adam_eps;
  const T bc1 = T(1) - std::pow(b1, (T)state.step);
  const T bc2 = T(1) - std::pow(b2, (T)state.step);
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor<T>& g = git->second;
    if (!g.all_finite())
      fail_numeric("adam_step: non-finite gradient for parameter '", name,
                   "'");
    auto& m = state.m.try_emplace(name, Tensor<T>(p.dims)).first->second;
    auto& v = state.v.try_emplace(name, Tensor<T>(p.dims)).first->second;
    for (int64_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const T mhat = m[i] / bc1;
      const T vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  double loss = 0;
  double val_miou = 0;
};

struct TrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
  std::function<void(const net::ParamTree<float>&, const std::string&)>
      on_abort;
};

struct TrainResult {
  net::ParamTree<float> final_params;
  net::ParamTree<float> best_params;
  int best_epoch = -1;
  double best_val = -1.0;
  AdamState<float> adam;
  std::vector<EpochLog> log;
};

namespace detail {

inline std::vector<int> shuffled_indices(size_t n, uint64_t seed, int epoch) {
  std::vector<int> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = (int)i;
  Rng rng = Rng(seed).split(0x51000000ull + (uint64_t)epoch);
  for (size_t i = n; i > 1; --i) {
    size_t j = rng.next_u64() % i;
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

inline Tensor<float> mask_to_float(const Tensor<uint8_t>& mask) {
  Tensor<float> out({1, 1, mask.dim(0), mask.dim(1)});
  for (int64_t i = 0; i < mask.size(); ++i) out[i] = mask[i] ? 1.f : 0.f;
  return out;
}

inline Tensor<float> image_batch(const std::vector<scene::LabeledSample>& set,
                                 const std::vector<int>& ids, size_t lo,
                                 size_t hi) {
  const auto& first = set[ids[lo]].image;
  const int H = first.dim(1), W = first.dim(2);
  Tensor<float> batch({(int)(hi - lo), 1, H, W});
  for (size_t i = lo; i < hi; ++i) {
    const auto& img = set[ids[i]].image;
    require(img.dims == first.dims, "training: inconsistent image dims");
    std::copy(img.data.begin(), img.data.end(),
              batch.data.begin() + (i - lo) * img.size());
  }
  return batch;
}

inline Tensor<float> mask_batch(const std::vector<scene::LabeledSample>& set,
                                const std::vector<int>& ids, size_t lo,
                                size_t hi) {
  const auto& first = set[ids[lo]].mask;
  const int H = first.dim(0), W = first.dim(1);
  Tensor<float> batch({(int)(hi - lo), 1, H, W});
  for (size_t i = lo; i < hi; ++i) {
    const auto& m = set[ids[i]].mask;
    for (int64_t k = 0; k < m.size(); ++k)
      batch[(i - lo) * m.size() + k] = m[k] ? 1.f : 0.f;
  }
  return batch;
}

// Last `window` frames of a clip, left-padded by replicating the earliest
// frame when the clip is shorter than the window.
inline std::vector<const Tensor<float>*> clip_window(
    const scene::SequenceSample& clip, int window) {
  std::vector<const Tensor<float>*> frames;
  const int n = (int)clip.frames.size();
  for (int i = 0; i < window; ++i) {
    int src = n - window + i;
    if (src < 0) src = 0;
    frames.push_back(&clip.frames[src]);
  }
  return frames;
}

inline Tensor<float> sequence_batch(
    const std::vector<scene::SequenceSample>& set, const std::vector<int>& ids,
    size_t lo, size_t hi, int window) {
  const auto& first = set[ids[lo]].frames.front();
  const int H = first.dim(1), W = first.dim(2);
  Tensor<float> batch({(int)(hi - lo), window, 1, H, W});
  for (size_t i = lo; i < hi; ++i) {
    auto frames = clip_window(set[ids[i]], window);
    for (int f = 0; f < window; ++f) {
      require(frames[f]->dims == first.dims,
              "training: inconsistent frame dims");
      std::copy(frames[f]->data.begin(), frames[f]->data.end(),
                batch.data.begin() +
                    ((i - lo) * window + f) * frames[f]->size());
    }
  }
  return batch;
}

inline Tensor<float> sequence_mask_batch(
    const std::vector<scene::SequenceSample>& set, const std::vector<int>& ids,
    size_t lo, size_t hi) {
  const auto& first = set[ids[lo]].masks.back();
  Tensor<float> batch({(int)(hi - lo), 1, first.dim(0), first.dim(1)});
  for (size_t i = lo; i < hi; ++i) {
    const auto& m = set[ids[i]].masks.back();
    for (int64_t k = 0; k < m.size(); ++k)
      batch[(i - lo) * m.size() + k] = m[k] ? 1.f : 0.f;
  }
  return batch;
}

inline void accumulate_iou(const Tensor<float>& probs,
                           const Tensor<float>& gt, float threshold,
                           int64_t* inter, int64_t* uni) {
  for (int64_t i = 0; i < probs.size(); ++i) {
    const bool p = probs[i] >= threshold;
    const bool g = gt[i] >= 0.5f;
    *inter += (p && g);
    *uni += (p || g);
  }
}

template <class StepFn, class ValFn>
TrainResult run_loop(net::ParamTree<float> params, const TrainConfig& tcfg,
                     size_t train_count, StepFn&& step, ValFn&& validate,
                     const TrainHooks& hooks, AdamState<float> adam,
                     int start_epoch) {
  TrainResult result;
  result.adam = std::move(adam);
  for (int epoch = start_epoch; epoch < tcfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, tcfg);
    auto order = shuffled_indices(train_count, tcfg.seed, epoch);
    double loss_sum = 0;
    int batches = 0;
    for (size_t lo = 0; lo < order.size(); lo += tcfg.batch_size) {
      size_t hi = std::min(order.size(), lo + tcfg.batch_size);
      double loss = step(order, lo, hi, params, result.adam, (float)lr);
      if (!std::isfinite(loss)) {
        std::string reason = "non-finite training loss at epoch " +
                             std::to_string(epoch) + ", batch " +
                             std::to_string(batches);
        if (hooks.on_abort) hooks.on_abort(params, reason);
        fail_numeric(reason);
      }
      loss_sum += loss;
      ++batches;
    }
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.loss = batches ? loss_sum / batches : 0.0;
    log.val_miou = validate(params);
    result.log.push_back(log);
    if (log.val_miou > result.best_val) {
      result.best_val = log.val_miou;
      result.best_epoch = epoch;
      result.best_params = params;
    }
    if (hooks.on_epoch) hooks.on_epoch(log);
  }
  result.final_params = std::move(params);
  if (result.best_epoch < 0) result.best_params = result.final_params;
  return result;
}

}  // namespace detail

// Clips gradients to a global norm bound; returns the pre-clip norm.
inline double clip_gradients(std::map<std::string, Tensor<float>>& grads,
                             double max_norm) {
  double sq = 0;
  for (const auto& [name, g] : grads)
    for (int64_t i = 0; i < g.size(); ++i) sq += (double)g[i] * g[i];
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const float scale = (float)(max_norm / norm);
    for (auto& [name, g] : grads)
      for (int64_t i = 0; i < g.size(); ++i) g[i] *= scale;
  }
  return norm;
}

inline double train_step_common(
    net::ParamTree<float>& params, train::AdamState<float>& adam,
    const TrainConfig& tcfg, float lr, const std::string& freeze_prefix,
    const std::function<Var<float>(Graph<float>&,
                                   const net::ParamVars<float>&)>& fwd_loss) {
  Graph<float> g;
  auto pv = net::make_param_vars(g, params, true, freeze_prefix);
  Var<float> loss = fwd_loss(g, pv);
  const double loss_value = g.value(loss)[0];
  if (!std::isfinite(loss_value)) return loss_value;
  g.backward(loss);
  std::map<std::string, Tensor<float>> grads;
  for (const auto& [name, var] : pv)
    if (g.requires_grad(var)) grads.emplace(name, g.grad(var));
  clip_gradients(grads, tcfg.grad_clip);
  adam_step(params, grads, adam, lr, tcfg);
  return loss_value;
}

// Dataset-accumulated IoU of thresholded predictions on a labeled set.
inline double eval_miou_sd2net(const net::ParamTree<float>& params,
                               const net::ModelConfig& mcfg,
                               const std::vector<scene::LabeledSample>& set,
                               int batch_size, float threshold = 0.5f) {
  if (set.empty()) return 0.0;
  std::vector<int> ids(set.size());
  for (size_t i = 0; i < ids.size(); ++i) ids[i] = (int)i;
  int64_t inter = 0, uni = 0;
  for (size_t lo = 0; lo < set.size(); lo += batch_size) {
    size_t hi = std::min(set.size(), lo + batch_size);
    Graph<float> g;
    auto pv = net::make_param_vars(g, params, false);
    Var<float> x = g.leaf(detail::image_batch(set, ids, lo, hi), false);
    auto out = net::sd2net_forward(pv, x, mcfg);
    Tensor<float> probs = ops::sigmoid(g.value(out.logits));
    detail::accumulate_iou(probs, detail::mask_batch(set, ids, lo, hi),
                           threshold, &inter, &uni);
  }
  return uni == 0 ? 1.0 : (double)inter / (double)uni;
}

inline double eval_miou_std2net(const net::ParamTree<float>& params,
                                const net::ModelConfig& mcfg,
                                const std::vector<scene::SequenceSample>& set,
                                int batch_size, float threshold = 0.5f) {
  if (set.empty()) return 0.0;
  std::vector<int> ids(set.size());
  for (size_t i = 0; i < ids.size(); ++i) ids[i] = (int)i;
  int64_t inter = 0, uni = 0;
  for (size_t lo = 0; lo < set.size(); lo += batch_size) {
    size_t hi = std::min(set.size(), lo + batch_size);
    Graph<float> g;
    auto pv = net::make_param_vars(g, params, false);
    Var<float> x = g.leaf(
        detail::sequence_batch(set, ids, lo, hi, mcfg.temporal_window), false);
    Var<float> logits = net::std2net_forward(pv, x, mcfg);
    Tensor<float> probs = ops::sigmoid(g.value(logits));
    detail::accumulate_iou(probs, detail::sequence_mask_batch(set, ids, lo, hi),
                           threshold, &inter, &uni);
  }
  return uni == 0 ? 1.0 : (double)inter / (double)uni;
}

inline TrainResult train_sd2net(
    const std::vector<scene::LabeledSample>& train_set,
    const std::vector<scene::LabeledSample>& val_set,
    const net::ModelConfig& mcfg, const TrainConfig& tcfg,
    const TrainHooks& hooks = {}, net::ParamTree<float> resume_params = {},
    AdamState<float> resume_adam = {}, int start_epoch = 0) {
  mcfg.validate();
  tcfg.validate();
  require(!train_set.empty(), "train: empty dataset");
  net::ParamTree<float> params =
      resume_params.empty()
          ? net::init_params<float>(mcfg, tcfg.seed, net::ModelKind::kSd2net)
          : std::move(resume_params);

  auto step = [&](const std::vector<int>& order, size_t lo, size_t hi,
                  net::ParamTree<float>& p, AdamState<float>& adam,
                  float lr) {
    Tensor<float> images = detail::image_batch(train_set, order, lo, hi);
    Tensor<float> masks = detail::mask_batch(train_set, order, lo, hi);
    return train_step_common(
        p, adam, tcfg, lr, "",
        [&](Graph<float>& g, const net::ParamVars<float>& pv) {
          Var<float> x = g.leaf(images, false);
          Var<float> gt = g.leaf(masks, false);
          auto out = net::sd2net_forward(pv, x, mcfg);
          return ag::soft_iou_from_logits(out.logits, gt);
        });
  };
  auto validate = [&](const net::ParamTree<float>& p) {
    return eval_miou_sd2net(p, mcfg, val_set, tcfg.batch_size);
  };
  return detail::run_loop(std::move(params), tcfg, train_set.size(), step,
                          validate, hooks, std::move(resume_adam),
                          start_epoch);
}

inline TrainResult train_std2net(
    const std::vector<scene::SequenceSample>& train_set,
    const std::vector<scene::SequenceSample>& val_set,
    const net::ModelConfig& mcfg, const TrainConfig& tcfg,
    const TrainHooks& hooks = {}, net::ParamTree<float> resume_params = {},
    AdamState<float> resume_adam = {}, int start_epoch = 0) {
  mcfg.validate();
  tcfg.validate();
  require(!train_set.empty(), "train: empty dataset");
  net::ParamTree<float> params =
      resume_params.empty()
          ? net::init_params<float>(mcfg, tcfg.seed, net::ModelKind::kStd2net)
          : std::move(resume_params);
  const std::string freeze = tcfg.freeze_backbone ? "sd2net." : "";

  auto step = [&](const std::vector<int>& order, size_t lo, size_t hi,
                  net::ParamTree<float>& p, AdamState<float>& adam,
                  float lr) {
    Tensor<float> seqs =
        detail::sequence_batch(train_set, order, lo, hi, mcfg.temporal_window);
    Tensor<float> masks = detail::sequence_mask_batch(train_set, order, lo, hi);
    return train_step_common(
        p, adam, tcfg, lr, freeze,
        [&](Graph<float>& g, const net::ParamVars<float>& pv) {
          Var<float> x = g.leaf(seqs, false);
          Var<float> gt = g.leaf(masks, false);
          Var<float> logits = net::std2net_forward(pv, x, mcfg);
          return ag::soft_iou_from_logits(logits, gt);
        });
  };
  auto validate = [&](const net::ParamTree<float>& p) {
    return eval_miou_std2net(p, mcfg, val_set, tcfg.batch_size);
  };
  return detail::run_loop(std::move(params), tcfg, train_set.size(), step,
                          validate, hooks, std::move(resume_adam),
                          start_epoch);
}

}  // namespace train
}  // namespace ddn
