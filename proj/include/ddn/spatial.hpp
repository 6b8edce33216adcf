#pragma once

#include <array>
#include <vector>

#include "ddn/bdm.hpp"
#include "ddn/graph.hpp"

// Spatial difference feature extractors and the decomposition modules built
// on them. The 3x3 bank drives SD2M (resolution preserving); the 2x2
// stride-2 bank plus max pooling drives SD3M (downsampling); Inception
// Pooling routes channel groups through max, average and SD3M branches.

namespace ddn {
namespace spatial {

// Eight fixed 3x3 difference kernels: +1 at one of the eight neighbors
// (clockwise from top-left), -1 at the center. Every kernel sums to zero and
// a quarter turn of any member yields another member (index shift by 2).
struct DifferenceKernelBank {
  std::array<std::array<double, 9>, 8> kernels;
  std::vector<int> dilations;
};

inline DifferenceKernelBank make_difference_bank(
    std::vector<int> dilations = {1, 3}) {
  require(!dilations.empty(), "difference bank: need at least one dilation");
  for (int d : dilations) require(d >= 1, "difference bank: bad dilation ", d);
  static constexpr int kNeighbors[8][2] = {{0, 0}, {0, 1}, {0, 2}, {1, 2},
                                           {2, 2}, {2, 1}, {2, 0}, {1, 0}};
  DifferenceKernelBank bank;
  bank.dilations = std::move(dilations);
  for (int i = 0; i < 8; ++i) {
    bank.kernels[i].fill(0.0);
    bank.kernels[i][kNeighbors[i][0] * 3 + kNeighbors[i][1]] = 1.0;
    bank.kernels[i][4] = -1.0;
  }
  return bank;
}

// Fixed 2x2 stride-2 kernels of the downsampling extractor; zero-sum and
// mutually orthogonal as 4-vectors.
inline const std::array<std::array<double, 4>, 3>& downsample_kernels() {
  static const std::array<std::array<double, 4>, 3> k = {{
      {1, 1, -1, -1},  // D1
      {1, -1, 1, -1},  // D2
      {1, -1, -1, 1},  // D3
  }};
  return k;
}

// 2x2 Haar analysis kernels (LL, then the three difference bands), scaled so
// the four responses form an orthonormal transform of each block.
inline const std::array<std::array<double, 4>, 4>& haar_kernels() {
  static const std::array<std::array<double, 4>, 4> k = {{
      {0.5, 0.5, 0.5, 0.5},
      {0.5, 0.5, -0.5, -0.5},
      {0.5, -0.5, 0.5, -0.5},
      {0.5, -0.5, -0.5, 0.5},
  }};
  return k;
}

template <class T, size_t N>
Tensor<T> depthwise_const_kernel(const std::array<double, N>& k, int channels,
                                 int kh, int kw) {
  Tensor<T> w({channels, 1, kh, kw});
  for (int c = 0; c < channels; ++c)
    for (size_t i = 0; i < N; ++i) w.data[c * N + i] = (T)k[i];
  return w;
}

enum class DownsampleBfem { kDfed, kHaar };

}  // namespace spatial

namespace ag {

// Stacks one depthwise difference map per (dilation, kernel) pair, flattened
// to [B,C,8n,HW]. Dilation-major order; replicate padding keeps the maps
// exactly zero on constant inputs at every position.
template <class T>
Var<T> dfem(Var<T> x, const spatial::DifferenceKernelBank& bank) {
  Graph<T>* g = x.g;
  const Shape& s = val(x).dims;
  require(s.size() == 4, "dfem: input must be [B,C,H,W], got ", shape_str(s));
  const int B = s[0], C = s[1], H = s[2], W = s[3];
  std::vector<Var<T>> parts;
  parts.reserve(8 * bank.dilations.size());
  for (int d : bank.dilations) {
    ops::ConvSpec spec{1, d, ops::Padding::kReplicate, true};
    for (int i = 0; i < 8; ++i) {
      Var<T> k = g->constant(
          spatial::depthwise_const_kernel<T>(bank.kernels[i], C, 3, 3));
      Var<T> m = conv2d(x, k, spec);
      parts.push_back(reshape(m, {B, C, 1, H * W}));
    }
  }
  return concat(parts, 2);
}

// SD2M: 1x1 FEM for the original feature, DFEM for the basis stack, BDM to
// rebuild. Resolution preserving.
template <class T>
Var<T> sd2m(Var<T> x, Var<T> fem_w, Var<T> fem_b,
            const spatial::DifferenceKernelBank& bank, T eps,
            BasisMode mode = BasisMode::kNormalized) {
  const Shape& s = val(x).dims;
  const int B = s[0], C = s[1], H = s[2], W = s[3];
  ops::ConvSpec one{1, 1, ops::Padding::kZero, false};
  Var<T> t = reshape(conv2d(x, fem_w, fem_b, one), {B, C, 1, H * W});
  Var<T> p = dfem(x, bank);
  return reshape(bdm_forward(t, p, eps, mode), {B, C, H, W});
}

// DFED: max-pool basis plus the three stride-2 difference bases, [B,C,4,HW/4].
template <class T>
Var<T> dfed(Var<T> x) {
  Graph<T>* g = x.g;
  const Shape& s = val(x).dims;
  require(s.size() == 4, "dfed: input must be [B,C,H,W], got ", shape_str(s));
  require(s[2] % 2 == 0 && s[3] % 2 == 0, "dfed: H and W must be even, got H=",
          s[2], " W=", s[3]);
  const int B = s[0], C = s[1], oh = s[2] / 2, ow = s[3] / 2;
  std::vector<Var<T>> parts;
  parts.push_back(reshape(max_pool2(x), {B, C, 1, oh * ow}));
  ops::ConvSpec spec{2, 1, ops::Padding::kZero, true};
  for (const auto& k : spatial::downsample_kernels()) {
    Var<T> kv = g->constant(spatial::depthwise_const_kernel<T>(k, C, 2, 2));
    parts.push_back(reshape(conv2d(x, kv, spec), {B, C, 1, oh * ow}));
  }
  return concat(parts, 2);
}

// Haar analysis bands as a drop-in replacement for DFED.
template <class T>
Var<T> haar_bfem(Var<T> x) {
  Graph<T>* g = x.g;
  const Shape& s = val(x).dims;
  require(s.size() == 4, "haar_bfem: input must be [B,C,H,W], got ",
          shape_str(s));
  require(s[2] % 2 == 0 && s[3] % 2 == 0,
          "haar_bfem: H and W must be even, got H=", s[2], " W=", s[3]);
  const int B = s[0], C = s[1], oh = s[2] / 2, ow = s[3] / 2;
  std::vector<Var<T>> parts;
  ops::ConvSpec spec{2, 1, ops::Padding::kZero, true};
  for (const auto& k : spatial::haar_kernels()) {
    Var<T> kv = g->constant(spatial::depthwise_const_kernel<T>(k, C, 2, 2));
    parts.push_back(reshape(conv2d(x, kv, spec), {B, C, 1, oh * ow}));
  }
  return concat(parts, 2);
}

// SD3M: original feature from 1x1 conv over the average-pooled input, basis
// stack from DFED (or the Haar bands), output at half resolution.
template <class T>
Var<T> sd3m(Var<T> x, Var<T> fem_w, Var<T> fem_b, T eps,
            BasisMode mode = BasisMode::kNormalized,
            spatial::DownsampleBfem bfem = spatial::DownsampleBfem::kDfed) {
  const Shape& s = val(x).dims;
  const int B = s[0], C = s[1];
  const int oh = s[2] / 2, ow = s[3] / 2;
  ops::ConvSpec one{1, 1, ops::Padding::kZero, false};
  Var<T> t =
      reshape(conv2d(avg_pool2(x), fem_w, fem_b, one), {B, C, 1, oh * ow});
  Var<T> p = bfem == spatial::DownsampleBfem::kHaar ? haar_bfem(x) : dfed(x);
  return reshape(bdm_forward(t, p, eps, mode), {B, C, oh, ow});
}

// Near-equal channel split used by Inception Pooling: ceil(C/3) for the max
// branch, then half of the rest (rounded up) for the average branch.
inline std::array<int, 3> inception_split(int channels) {
  int g1 = (channels + 2) / 3;
  int rest = channels - g1;
  int g2 = (rest + 1) / 2;
  return {g1, g2, rest - g2};
}

// Channel groups -> max pool, avg pool, SD3M; concatenated in that order.
// With use_sd3m false the third branch falls back to max pooling.
template <class T>
Var<T> inception_pool(Var<T> x, Var<T> sd3m_w, Var<T> sd3m_b, T eps,
                      BasisMode mode = BasisMode::kNormalized,
                      bool use_sd3m = true,
                      spatial::DownsampleBfem bfem =
                          spatial::DownsampleBfem::kDfed) {
  const Shape& s = val(x).dims;
  require(s.size() == 4, "inception_pool: input must be [B,C,H,W]");
  const int C = s[1];
  require(C >= 3, "inception_pool: needs at least 3 channels, got ", C);
  auto groups = inception_split(C);
  Var<T> c1 = slice(x, 1, 0, groups[0]);
  Var<T> c2 = slice(x, 1, groups[0], groups[1]);
  Var<T> c3 = slice(x, 1, groups[0] + groups[1], groups[2]);
  std::vector<Var<T>> outs;
  outs.push_back(max_pool2(c1));
  outs.push_back(avg_pool2(c2));
  outs.push_back(use_sd3m ? sd3m(c3, sd3m_w, sd3m_b, eps, mode, bfem)
                          : max_pool2(c3));
  return concat(outs, 1);
}

}  // namespace ag

// Tape-free wrappers for direct evaluation.
namespace spatial {

template <class T>
Tensor<T> dfem(const Tensor<T>& x, const DifferenceKernelBank& bank) {
  Graph<T> g;
  return g.value(ag::dfem(g.leaf(x, false), bank));
}

template <class T>
Tensor<T> sd2m(const Tensor<T>& x, const Tensor<T>& fem_w,
               const DifferenceKernelBank& bank, T eps,
               BasisMode mode = BasisMode::kNormalized) {
  Graph<T> g;
  return g.value(
      ag::sd2m(g.leaf(x, false), g.leaf(fem_w, false), Var<T>{}, bank, eps, mode));
}

template <class T>
Tensor<T> dfed(const Tensor<T>& x) {
  Graph<T> g;
  return g.value(ag::dfed(g.leaf(x, false)));
}

template <class T>
Tensor<T> haar_bfem(const Tensor<T>& x) {
  Graph<T> g;
  return g.value(ag::haar_bfem(g.leaf(x, false)));
}

template <class T>
Tensor<T> sd3m(const Tensor<T>& x, const Tensor<T>& fem_w, T eps,
               BasisMode mode = BasisMode::kNormalized,
               DownsampleBfem bfem = DownsampleBfem::kDfed) {
  Graph<T> g;
  return g.value(
      ag::sd3m(g.leaf(x, false), g.leaf(fem_w, false), Var<T>{}, eps, mode, bfem));
}

template <class T>
Tensor<T> inception_pool(const Tensor<T>& x, const Tensor<T>& sd3m_w, T eps,
                         BasisMode mode = BasisMode::kNormalized,
                         bool use_sd3m = true,
                         DownsampleBfem bfem = DownsampleBfem::kDfed) {
  Graph<T> g;
  return g.value(ag::inception_pool(g.leaf(x, false), g.leaf(sd3m_w, false),
                                    Var<T>{}, eps, mode, use_sd3m, bfem));
}

}  // namespace spatial
}  // namespace ddn
