#pragma once

#include <vector>

#include "ddn/bdm.hpp"
#include "ddn/graph.hpp"

// Temporal difference extraction over an ordered frame stack I_1..I_N, where
// frame N is the current frame and the preceding N-1 frames are references.

namespace ddn {
namespace ag {

template <class T>
void check_frame_stack(const std::vector<Var<T>>& frames) {
  require(frames.size() >= 2, "frame stack: need N >= 2 frames, got ",
          frames.size());
  const Shape& first = val(frames[0]).dims;
  require(first.size() == 4, "frame stack: frames must be [B,C,H,W]");
  for (size_t i = 1; i < frames.size(); ++i)
    require(val(frames[i]).dims == first,
            "frame stack: frame ", i, " shape ",
            shape_str(val(frames[i]).dims), " differs from ",
            shape_str(first));
}

// Bases 1..N-1 are the flattened differences (I_N - I_i); basis N is the
// flattened current frame. Output [B,C,N,HW].
template <class T>
Var<T> tfem(const std::vector<Var<T>>& frames) {
  check_frame_stack(frames);
  const int N = (int)frames.size();
  const Shape& s = val(frames[0]).dims;
  const int B = s[0], C = s[1], hw = s[2] * s[3];
  Var<T> current = frames[N - 1];
  std::vector<Var<T>> parts;
  parts.reserve(N);
  for (int i = 0; i < N - 1; ++i)
    parts.push_back(reshape(sub(current, frames[i]), {B, C, 1, hw}));
  parts.push_back(reshape(current, {B, C, 1, hw}));
  return concat(parts, 2);
}

// TD2M: fuse the channel-concatenated stack with a 1x1 conv into the original
// feature, decompose it over the normalized temporal bases, rebuild.
template <class T>
Var<T> td2m(const std::vector<Var<T>>& frames, Var<T> fem_w, Var<T> fem_b,
            T eps, BasisMode mode = BasisMode::kNormalized) {
  check_frame_stack(frames);
  const int N = (int)frames.size();
  const Shape& s = val(frames[0]).dims;
  const int B = s[0], C = s[1], H = s[2], W = s[3];
  const Shape& ws = val(fem_w).dims;
  require(ws.size() == 4 && ws[0] == C && ws[1] == N * C && ws[2] == 1 &&
              ws[3] == 1,
          "td2m: fusion weights must be [", C, ",", N * C,
          ",1,1], got ", shape_str(ws));
  Var<T> cat = concat(frames, 1);
  ops::ConvSpec one{1, 1, ops::Padding::kZero, false};
  Var<T> t = reshape(conv2d(cat, fem_w, fem_b, one), {B, C, 1, H * W});
  Var<T> p = tfem(frames);
  return reshape(bdm_forward(t, p, eps, mode), {B, C, H, W});
}

}  // namespace ag

namespace temporal {

template <class T>
Tensor<T> tfem(const std::vector<Tensor<T>>& frames) {
  Graph<T> g;
  std::vector<Var<T>> vars;
  vars.reserve(frames.size());
  for (const auto& f : frames) vars.push_back(g.leaf(f, false));
  return g.value(ag::tfem(vars));
}

template <class T>
Tensor<T> td2m(const std::vector<Tensor<T>>& frames, const Tensor<T>& fem_w,
               T eps, BasisMode mode = BasisMode::kNormalized) {
  Graph<T> g;
  std::vector<Var<T>> vars;
  vars.reserve(frames.size());
  for (const auto& f : frames) vars.push_back(g.leaf(f, false));
  return g.value(ag::td2m(vars, g.leaf(fem_w, false), Var<T>{}, eps, mode));
}

}  // namespace temporal
}  // namespace ddn
