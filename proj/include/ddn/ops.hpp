#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ddn/parallel.hpp"
#include "ddn/tensor.hpp"

// Pure array operations. Forward kernels are the public surface; the *_bwd
// functions implement the exact adjoints and are what the autodiff tape calls.
// All functions are deterministic: every output element is produced by one
// fixed serial reduction regardless of thread count.

namespace ddn {
namespace ops {

enum class Padding { kZero, kReplicate };

struct ConvSpec {
  int stride = 1;
  int dilation = 1;
  Padding padding = Padding::kZero;
  bool depthwise = false;
};

// Padding amount per side: odd kernels keep resolution at stride 1
// ("same" padding, scaled by dilation); even kernels run valid (pad 0).
inline int conv_pad(int k, int dilation) {
  return (k % 2 == 1) ? dilation * (k - 1) / 2 : 0;
}

inline int conv_out_extent(int in, int k, int pad, int stride, int dilation) {
  return (in + 2 * pad - dilation * (k - 1) - 1) / stride + 1;
}

inline void check_conv_args(const Shape& x, const Shape& w, const ConvSpec& s) {
  require(x.size() == 4, "conv2d: input must be rank 4 [B,C,H,W], got ",
          shape_str(x));
  require(w.size() == 4, "conv2d: kernel must be rank 4 [Cout,Cin,kh,kw], got ",
          shape_str(w));
  require(s.stride == 1 || s.stride == 2, "conv2d: stride must be 1 or 2, got ",
          s.stride);
  require(s.dilation >= 1, "conv2d: dilation must be >= 1, got ", s.dilation);
  if (s.depthwise) {
    require(w[1] == 1, "conv2d(depthwise): kernel channel extent must be 1, got ",
            w[1]);
    require(w[0] == x[1], "conv2d(depthwise): Cout ", w[0],
            " must equal input channels ", x[1]);
  } else {
    require(w[1] == x[1], "conv2d: kernel Cin ", w[1],
            " does not match input channels ", x[1]);
  }
  int ph = conv_pad(w[2], s.dilation);
  int pw = conv_pad(w[3], s.dilation);
  require(x[2] + 2 * ph >= s.dilation * (w[2] - 1) + 1,
          "conv2d: dilated kernel height does not fit padded input H=", x[2]);
  require(x[3] + 2 * pw >= s.dilation * (w[3] - 1) + 1,
          "conv2d: dilated kernel width does not fit padded input W=", x[3]);
}

// ox range [lo,hi) whose source column ox*stride - pad + kx*dil is in [0,W).
inline void ox_bounds(int w_in, int ow, int kx, int pad, int stride, int dil,
                      int* lo, int* hi) {
  int a = pad - kx * dil;                 // need ox*stride >= a
  int b = w_in + pad - kx * dil;          // need ox*stride < b
  *lo = a <= 0 ? 0 : (a + stride - 1) / stride;
  *hi = b <= 0 ? 0 : std::min(ow, (b + stride - 1) / stride);
  if (*lo > *hi) *lo = *hi;
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 const ConvSpec& spec) {
  check_conv_args(x.dims, w.dims, spec);
  if (!w.all_finite()) fail_numeric("conv2d: non-finite kernel values");
  if (bias) {
    require(bias->rank() == 1 && bias->dim(0) == w.dim(0),
            "conv2d: bias must have shape [Cout]=[", w.dim(0), "], got ",
            shape_str(bias->dims));
  }
  const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int dil = spec.dilation, stride = spec.stride;
  const int ph = conv_pad(kh, dil), pw = conv_pad(kw, dil);
  const int OH = conv_out_extent(H, kh, ph, stride, dil);
  const int OW = conv_out_extent(W, kw, pw, stride, dil);
  const bool rep = spec.padding == Padding::kReplicate;

  Tensor<T> y({B, Cout, OH, OW});
  const T* xp = x.ptr();
  const T* wp = w.ptr();
  T* yp = y.ptr();

  parallel_for((int64_t)B * Cout, [&](int64_t idx) {
    const int b = (int)(idx / Cout);
    const int co = (int)(idx % Cout);
    T* out = yp + ((int64_t)b * Cout + co) * OH * OW;
    const T init = bias ? bias->data[co] : T(0);
    for (int64_t i = 0; i < (int64_t)OH * OW; ++i) out[i] = init;
    const int ci_begin = spec.depthwise ? co : 0;
    const int ci_end = spec.depthwise ? co + 1 : Cin;
    for (int ci = ci_begin; ci < ci_end; ++ci) {
      const T* in = xp + ((int64_t)b * Cin + ci) * H * W;
      const T* ws =
          wp + ((int64_t)co * w.dim(1) + (spec.depthwise ? 0 : ci)) * kh * kw;
      for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
          const T wv = ws[ky * kw + kx];
          if (wv == T(0)) continue;
          int lo, hi;
          ox_bounds(W, OW, kx, pw, stride, dil, &lo, &hi);
          for (int oy = 0; oy < OH; ++oy) {
            int iy = oy * stride - ph + ky * dil;
            if (iy < 0 || iy >= H) {
              if (!rep) continue;
              iy = iy < 0 ? 0 : H - 1;
            }
            const T* row = in + (int64_t)iy * W;
            T* orow = out + (int64_t)oy * OW;
            if (rep) {
              for (int ox = 0; ox < lo; ++ox) orow[ox] += wv * row[0];
              for (int ox = hi; ox < OW; ++ox) orow[ox] += wv * row[W - 1];
            }
            const int base = kx * dil - pw;
            for (int ox = lo; ox < hi; ++ox)
              orow[ox] += wv * row[ox * stride + base];
          }
        }
      }
    }
  });
  return y;
}

// Adjoints of conv2d. dx accumulation is parallel over batch (disjoint
// slices); dw over output channels; replicate padding scatters border
// contributions into the clamped source pixel.
template <class T>
Tensor<T> conv2d_bwd_input(const Tensor<T>& dy, const Tensor<T>& w,
                           const Shape& x_shape, const ConvSpec& spec) {
  const int B = x_shape[0], Cin = x_shape[1], H = x_shape[2], W = x_shape[3];
  const int Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int dil = spec.dilation, stride = spec.stride;
  const int ph = conv_pad(kh, dil), pw = conv_pad(kw, dil);
  const int OH = dy.dim(2), OW = dy.dim(3);
  const bool rep = spec.padding == Padding::kReplicate;

  Tensor<T> dx(x_shape);
  parallel_for(B, [&](int64_t b) {
    for (int co = 0; co < Cout; ++co) {
      const T* g = dy.ptr() + ((int64_t)b * Cout + co) * OH * OW;
      const int ci_begin = spec.depthwise ? co : 0;
      const int ci_end = spec.depthwise ? co + 1 : Cin;
      for (int ci = ci_begin; ci < ci_end; ++ci) {
        T* dst = dx.ptr() + ((int64_t)b * Cin + ci) * H * W;
        const T* ws = w.ptr() + ((int64_t)co * w.dim(1) +
                                 (spec.depthwise ? 0 : ci)) *
                                    kh * kw;
        for (int ky = 0; ky < kh; ++ky) {
          for (int kx = 0; kx < kw; ++kx) {
            const T wv = ws[ky * kw + kx];
            if (wv == T(0)) continue;
            for (int oy = 0; oy < OH; ++oy) {
              int iy = oy * stride - ph + ky * dil;
              if (iy < 0 || iy >= H) {
                if (!rep) continue;
                iy = iy < 0 ? 0 : H - 1;
              }
              for (int ox = 0; ox < OW; ++ox) {
                int ix = ox * stride - pw + kx * dil;
                if (ix < 0 || ix >= W) {
                  if (!rep) continue;
                  ix = ix < 0 ? 0 : W - 1;
                }
                dst[(int64_t)iy * W + ix] += wv * g[(int64_t)oy * OW + ox];
              }
            }
          }
        }
      }
    }
  });
  return dx;
}

template <class T>
Tensor<T> conv2d_bwd_kernel(const Tensor<T>& dy, const Tensor<T>& x,
                            const Shape& w_shape, const ConvSpec& spec) {
  const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = w_shape[0], kh = w_shape[2], kw = w_shape[3];
  const int dil = spec.dilation, stride = spec.stride;
  const int ph = conv_pad(kh, dil), pw = conv_pad(kw, dil);
  const int OH = dy.dim(2), OW = dy.dim(3);
  const bool rep = spec.padding == Padding::kReplicate;

  Tensor<T> dw(w_shape);
  parallel_for(Cout, [&](int64_t co) {
    for (int b = 0; b < B; ++b) {
      const T* g = dy.ptr() + ((int64_t)b * Cout + co) * OH * OW;
      const int ci_begin = spec.depthwise ? (int)co : 0;
      const int ci_end = spec.depthwise ? (int)co + 1 : Cin;
      for (int ci = ci_begin; ci < ci_end; ++ci) {
        const T* in = x.ptr() + ((int64_t)b * Cin + ci) * H * W;
        T* wslice = dw.ptr() + ((int64_t)co * w_shape[1] +
                                (spec.depthwise ? 0 : ci)) *
                                   kh * kw;
        for (int ky = 0; ky < kh; ++ky) {
          for (int kx = 0; kx < kw; ++kx) {
            T acc = 0;
            for (int oy = 0; oy < OH; ++oy) {
              int iy = oy * stride - ph + ky * dil;
              if (iy < 0 || iy >= H) {
                if (!rep) continue;
                iy = iy < 0 ? 0 : H - 1;
              }
              const T* row = in + (int64_t)iy * W;
              const T* grow = g + (int64_t)oy * OW;
              int lo, hi;
              ox_bounds(W, OW, kx, pw, stride, dil, &lo, &hi);
              if (rep) {
                for (int ox = 0; ox < lo; ++ox) acc += grow[ox] * row[0];
                for (int ox = hi; ox < OW; ++ox) acc += grow[ox] * row[W - 1];
              }
              const int base = kx * dil - pw;
              for (int ox = lo; ox < hi; ++ox)
                acc += grow[ox] * row[ox * stride + base];
            }
            wslice[ky * kw + kx] += acc;
          }
        }
      }
    }
  });
  return dw;
}

template <class T>
Tensor<T> conv2d_bwd_bias(const Tensor<T>& dy) {
  const int B = dy.dim(0), C = dy.dim(1);
  const int64_t hw = (int64_t)dy.dim(2) * dy.dim(3);
  Tensor<T> db({C});
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const T* g = dy.ptr() + ((int64_t)b * C + c) * hw;
      T acc = 0;
      for (int64_t i = 0; i < hw; ++i) acc += g[i];
      db[c] += acc;
    }
  return db;
}

inline void check_pool_args(const Shape& x, const char* name) {
  require(x.size() == 4, name, ": input must be rank 4 [B,C,H,W], got ",
          shape_str(x));
  require(x[2] % 2 == 0 && x[3] % 2 == 0, name,
          ": H and W must be even, got H=", x[2], " W=", x[3]);
}

// 2x2 max pooling over disjoint windows. If argmax is non-null it receives,
// per output element, the flat input offset of the first maximal element in
// scan order (the tie rule the backward pass relies on).
template <class T>
Tensor<T> max_pool2(const Tensor<T>& x, std::vector<int64_t>* argmax = nullptr) {
  check_pool_args(x.dims, "max_pool2");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int OH = H / 2, OW = W / 2;
  Tensor<T> y({B, C, OH, OW});
  if (argmax) argmax->assign((size_t)y.size(), 0);
  parallel_for((int64_t)B * C, [&](int64_t bc) {
    const T* in = x.ptr() + bc * H * W;
    T* out = y.ptr() + bc * OH * OW;
    for (int oy = 0; oy < OH; ++oy) {
      for (int ox = 0; ox < OW; ++ox) {
        int64_t base = (int64_t)(2 * oy) * W + 2 * ox;
        int64_t best = base;
        T m = in[base];
        const int64_t cand[3] = {base + 1, base + W, base + W + 1};
        for (int64_t c2 : cand) {
          if (in[c2] > m) {
            m = in[c2];
            best = c2;
          }
        }
        out[(int64_t)oy * OW + ox] = m;
        if (argmax) (*argmax)[bc * OH * OW + oy * OW + ox] = bc * H * W + best;
      }
    }
  });
  return y;
}

template <class T>
Tensor<T> max_pool2_bwd(const Tensor<T>& dy, const std::vector<int64_t>& argmax,
                        const Shape& x_shape) {
  Tensor<T> dx(x_shape);
  for (int64_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
  return dx;
}

template <class T>
Tensor<T> avg_pool2(const Tensor<T>& x) {
  check_pool_args(x.dims, "avg_pool2");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int OH = H / 2, OW = W / 2;
  Tensor<T> y({B, C, OH, OW});
  parallel_for((int64_t)B * C, [&](int64_t bc) {
    const T* in = x.ptr() + bc * H * W;
    T* out = y.ptr() + bc * OH * OW;
    for (int oy = 0; oy < OH; ++oy)
      for (int ox = 0; ox < OW; ++ox) {
        int64_t base = (int64_t)(2 * oy) * W + 2 * ox;
        out[(int64_t)oy * OW + ox] =
            (in[base] + in[base + 1] + in[base + W] + in[base + W + 1]) / T(4);
      }
  });
  return y;
}

template <class T>
Tensor<T> avg_pool2_bwd(const Tensor<T>& dy, const Shape& x_shape) {
  const int H = x_shape[2], W = x_shape[3];
  const int OH = H / 2, OW = W / 2;
  Tensor<T> dx(x_shape);
  const int64_t planes = (int64_t)x_shape[0] * x_shape[1];
  for (int64_t bc = 0; bc < planes; ++bc) {
    const T* g = dy.ptr() + bc * OH * OW;
    T* out = dx.ptr() + bc * H * W;
    for (int oy = 0; oy < OH; ++oy)
      for (int ox = 0; ox < OW; ++ox) {
        T v = g[(int64_t)oy * OW + ox] / T(4);
        int64_t base = (int64_t)(2 * oy) * W + 2 * ox;
        out[base] += v;
        out[base + 1] += v;
        out[base + W] += v;
        out[base + W + 1] += v;
      }
  }
  return dx;
}

// Batched matrix multiply over identical leading dims, with optional
// transposes of the trailing two axes. batched_matmul == bmm(a, b).
template <class T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool ta = false,
              bool tb = false) {
  require(a.rank() >= 2 && b.rank() >= 2, "bmm: operands must be rank >= 2");
  require(a.rank() == b.rank(), "bmm: rank mismatch ", shape_str(a.dims),
          " vs ", shape_str(b.dims));
  const int r = a.rank();
  int64_t batch = 1;
  for (int i = 0; i < r - 2; ++i) {
    require(a.dims[i] == b.dims[i], "bmm: batch extent ", i, " mismatch: ",
            a.dims[i], " vs ", b.dims[i]);
    batch *= a.dims[i];
  }
  const int am = a.dims[r - 2], ak = a.dims[r - 1];
  const int bk = b.dims[r - 2], bn = b.dims[r - 1];
  const int m = ta ? ak : am, k = ta ? am : ak;
  const int kb = tb ? bn : bk, n = tb ? bk : bn;
  require(k == kb, "bmm: inner extents disagree: ", k, " vs ", kb, " for ",
          shape_str(a.dims), " x ", shape_str(b.dims));

  Shape os(a.dims.begin(), a.dims.end() - 2);
  os.push_back(m);
  os.push_back(n);
  Tensor<T> c(os);
  const int64_t asz = (int64_t)am * ak, bsz = (int64_t)bk * bn,
                csz = (int64_t)m * n;
  parallel_for(batch, [&](int64_t p) {
    const T* A = a.ptr() + p * asz;
    const T* Bp = b.ptr() + p * bsz;
    T* C = c.ptr() + p * csz;
    if (!ta && !tb) {
      for (int i = 0; i < m; ++i)
        for (int l = 0; l < k; ++l) {
          const T av = A[(int64_t)i * k + l];
          if (av == T(0)) continue;
          const T* brow = Bp + (int64_t)l * n;
          T* crow = C + (int64_t)i * n;
          for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    } else if (!ta && tb) {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const T* arow = A + (int64_t)i * k;
          const T* brow = Bp + (int64_t)j * k;
          T acc = 0;
          for (int l = 0; l < k; ++l) acc += arow[l] * brow[l];
          C[(int64_t)i * n + j] = acc;
        }
    } else if (ta && !tb) {
      for (int l = 0; l < k; ++l)
        for (int i = 0; i < m; ++i) {
          const T av = A[(int64_t)l * m + i];
          if (av == T(0)) continue;
          const T* brow = Bp + (int64_t)l * n;
          T* crow = C + (int64_t)i * n;
          for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    } else {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          T acc = 0;
          for (int l = 0; l < k; ++l)
            acc += A[(int64_t)l * m + i] * Bp[(int64_t)j * k + l];
          C[(int64_t)i * n + j] = acc;
        }
    }
  });
  return c;
}

template <class T>
Tensor<T> batched_matmul(const Tensor<T>& a, const Tensor<T>& b) {
  return bmm(a, b, false, false);
}

// Divides each length-F row (last axis) by sqrt(sum of squares + eps^2);
// all-zero rows stay zero.
template <class T>
Tensor<T> l2_normalize_rows(const Tensor<T>& p, T eps) {
  require(eps > T(0), "l2_normalize_rows: eps must be positive");
  const int F = p.dims.back();
  const int64_t rows = p.size() / F;
  Tensor<T> out(p.dims);
  parallel_for(rows, [&](int64_t r) {
    const T* in = p.ptr() + r * F;
    T* o = out.ptr() + r * F;
    T ss = 0;
    for (int i = 0; i < F; ++i) ss += in[i] * in[i];
    T inv = T(1) / std::sqrt(ss + eps * eps);
    for (int i = 0; i < F; ++i) o[i] = in[i] * inv;
  });
  return out;
}

template <class T>
Tensor<T> l2_normalize_rows_bwd(const Tensor<T>& dy, const Tensor<T>& x,
                                T eps) {
  const int F = x.dims.back();
  const int64_t rows = x.size() / F;
  Tensor<T> dx(x.dims);
  parallel_for(rows, [&](int64_t r) {
    const T* in = x.ptr() + r * F;
    const T* g = dy.ptr() + r * F;
    T* o = dx.ptr() + r * F;
    T ss = 0, xg = 0;
    for (int i = 0; i < F; ++i) {
      ss += in[i] * in[i];
      xg += in[i] * g[i];
    }
    T n2 = ss + eps * eps;
    T inv = T(1) / std::sqrt(n2);
    T inv3 = inv / n2;
    for (int i = 0; i < F; ++i) o[i] = g[i] * inv - in[i] * xg * inv3;
  });
  return dx;
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.dims);
  for (int64_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

template <class T>
Tensor<T> relu_bwd(const Tensor<T>& dy, const Tensor<T>& x) {
  Tensor<T> dx(x.dims);
  for (int64_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
  return dx;
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.dims);
  for (int64_t i = 0; i < x.size(); ++i) {
    T v = x[i];
    y[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                     : std::exp(v) / (T(1) + std::exp(v));
  }
  return y;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "add");
  Tensor<T> y(a.dims);
  for (int64_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "sub");
  Tensor<T> y(a.dims);
  for (int64_t i = 0; i < a.size(); ++i) y[i] = a[i] - b[i];
  return y;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "mul");
  Tensor<T> y(a.dims);
  for (int64_t i = 0; i < a.size(); ++i) y[i] = a[i] * b[i];
  return y;
}

template <class T>
Tensor<T> affine(const Tensor<T>& x, T scale, T shift) {
  Tensor<T> y(x.dims);
  for (int64_t i = 0; i < x.size(); ++i) y[i] = scale * x[i] + shift;
  return y;
}

inline int64_t axis_block(const Shape& dims, int axis) {
  int64_t block = 1;
  for (size_t i = axis + 1; i < dims.size(); ++i) block *= dims[i];
  return block;
}

template <class T>
Tensor<T> concat(const std::vector<const Tensor<T>*>& parts, int axis) {
  require(!parts.empty(), "concat: no inputs");
  const Shape& first = parts[0]->dims;
  require(axis >= 0 && axis < (int)first.size(), "concat: bad axis ", axis);
  Shape os = first;
  int total = 0;
  for (const auto* p : parts) {
    require((int)p->dims.size() == (int)first.size(),
            "concat: rank mismatch");
    for (int i = 0; i < (int)first.size(); ++i)
      if (i != axis)
        require(p->dims[i] == first[i], "concat: extent ", i, " mismatch: ",
                p->dims[i], " vs ", first[i]);
    total += p->dims[axis];
  }
  os[axis] = total;
  Tensor<T> out(os);
  int64_t outer = 1;
  for (int i = 0; i < axis; ++i) outer *= first[i];
  const int64_t block = axis_block(first, axis);
  const int64_t out_stride = (int64_t)total * block;
  int64_t off = 0;
  for (const auto* p : parts) {
    const int64_t plen = (int64_t)p->dims[axis] * block;
    for (int64_t o = 0; o < outer; ++o)
      std::copy(p->ptr() + o * plen, p->ptr() + (o + 1) * plen,
                out.ptr() + o * out_stride + off);
    off += plen;
  }
  return out;
}

template <class T>
Tensor<T> slice(const Tensor<T>& x, int axis, int start, int len) {
  require(axis >= 0 && axis < x.rank(), "slice: bad axis ", axis);
  require(start >= 0 && len > 0 && start + len <= x.dims[axis],
          "slice: range [", start, ",", start + len, ") out of extent ",
          x.dims[axis], " on axis ", axis);
  Shape os = x.dims;
  os[axis] = len;
  Tensor<T> out(os);
  int64_t outer = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dims[i];
  const int64_t block = axis_block(x.dims, axis);
  const int64_t in_stride = (int64_t)x.dims[axis] * block;
  const int64_t out_stride = (int64_t)len * block;
  for (int64_t o = 0; o < outer; ++o)
    std::copy(x.ptr() + o * in_stride + start * block,
              x.ptr() + o * in_stride + (start + len) * block,
              out.ptr() + o * out_stride);
  return out;
}

// Scatter-add a slice gradient back into the enclosing tensor's gradient.
template <class T>
void slice_bwd_accum(Tensor<T>& dx, const Tensor<T>& dy, int axis, int start) {
  int64_t outer = 1;
  for (int i = 0; i < axis; ++i) outer *= dx.dims[i];
  const int64_t block = axis_block(dx.dims, axis);
  const int64_t in_stride = (int64_t)dx.dims[axis] * block;
  const int64_t out_stride = (int64_t)dy.dims[axis] * block;
  for (int64_t o = 0; o < outer; ++o) {
    const T* g = dy.ptr() + o * out_stride;
    T* dst = dx.ptr() + o * in_stride + start * block;
    for (int64_t i = 0; i < out_stride; ++i) dst[i] += g[i];
  }
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape dims) {
  require(shape_numel(dims) == x.size(), "reshape: ", shape_str(x.dims),
          " has ", x.size(), " elements, target ", shape_str(dims), " has ",
          shape_numel(dims));
  Tensor<T> y = x;
  y.dims = std::move(dims);
  check_shape(y.dims);
  return y;
}

template <class T>
Tensor<T> upsample_nearest2(const Tensor<T>& x) {
  require(x.rank() == 4, "upsample_nearest2: input must be rank 4");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor<T> y({B, C, 2 * H, 2 * W});
  parallel_for((int64_t)B * C, [&](int64_t bc) {
    const T* in = x.ptr() + bc * H * W;
    T* out = y.ptr() + bc * 4 * H * W;
    for (int iy = 0; iy < H; ++iy)
      for (int ix = 0; ix < W; ++ix) {
        T v = in[(int64_t)iy * W + ix];
        int64_t base = (int64_t)(2 * iy) * (2 * W) + 2 * ix;
        out[base] = v;
        out[base + 1] = v;
        out[base + 2 * W] = v;
        out[base + 2 * W + 1] = v;
      }
  });
  return y;
}

template <class T>
Tensor<T> upsample_nearest2_bwd(const Tensor<T>& dy, const Shape& x_shape) {
  const int H = x_shape[2], W = x_shape[3];
  Tensor<T> dx(x_shape);
  const int64_t planes = (int64_t)x_shape[0] * x_shape[1];
  for (int64_t bc = 0; bc < planes; ++bc) {
    const T* g = dy.ptr() + bc * 4 * H * W;
    T* out = dx.ptr() + bc * H * W;
    for (int iy = 0; iy < H; ++iy)
      for (int ix = 0; ix < W; ++ix) {
        int64_t base = (int64_t)(2 * iy) * (2 * W) + 2 * ix;
        out[(int64_t)iy * W + ix] +=
            g[base] + g[base + 1] + g[base + 2 * W] + g[base + 2 * W + 1];
      }
  }
  return dx;
}

// Full reductions run serially so the summation order never depends on the
// thread count.
template <class T>
T sum_all(const Tensor<T>& x) {
  T acc = 0;
  for (int64_t i = 0; i < x.size(); ++i) acc += x[i];
  return acc;
}

template <class T>
T dot_all(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "dot_all");
  T acc = 0;
  for (int64_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// Quarter-turn rotation of the trailing two axes (counter-clockwise).
template <class T>
Tensor<T> rot90_hw(const Tensor<T>& x, int turns = 1) {
  require(x.rank() >= 2, "rot90_hw: need rank >= 2");
  turns = ((turns % 4) + 4) % 4;
  Tensor<T> cur = x;
  for (int t = 0; t < turns; ++t) {
    const int r = cur.rank();
    const int H = cur.dims[r - 2], W = cur.dims[r - 1];
    Shape os = cur.dims;
    os[r - 2] = W;
    os[r - 1] = H;
    Tensor<T> y(os);
    const int64_t planes = cur.size() / ((int64_t)H * W);
    for (int64_t p = 0; p < planes; ++p) {
      const T* in = cur.ptr() + p * H * W;
      T* out = y.ptr() + p * H * W;
      for (int i = 0; i < W; ++i)
        for (int j = 0; j < H; ++j) out[(int64_t)i * H + j] = in[(int64_t)j * W + (W - 1 - i)];
    }
    cur = std::move(y);
  }
  return cur;
}

// Central finite differences of a scalar-valued function, the gradient oracle.
// Per-element step is h*(1+|x_i|).
template <class T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f,
                           const Tensor<T>& x, T h) {
  Tensor<T> g(x.dims);
  Tensor<T> probe = x;
  for (int64_t i = 0; i < x.size(); ++i) {
    const T step = h * (T(1) + std::abs(x[i]));
    const T orig = x[i];
    probe[i] = orig + step;
    T fp = f(probe);
    probe[i] = orig - step;
    T fm = f(probe);
    probe[i] = orig;
    g[i] = (fp - fm) / (2 * step);
  }
  return g;
}

}  // namespace ops
}  // namespace ddn
