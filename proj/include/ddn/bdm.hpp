#pragma once

#include <vector>

#include "ddn/graph.hpp"
#include "ddn/ops.hpp"
#include "ddn/tensor.hpp"

// Basis decomposition: project an original feature onto a stack of normalized
// basis rows and rebuild it as the coefficient-weighted sum of those rows.
// Shapes follow the (B, G, rows, F) convention: the original feature T is
// [B,G,1,F], the basis stack P is [B,G,c,F], coefficients S are [B,G,1,c].

namespace ddn {

enum class BasisMode { kNormalized, kOrthonormalized };

namespace bdm {

constexpr double kNormEps = 1e-8;

template <class T>
struct BasisSet {
  Tensor<T> p;  // [B,G,c,F]
  bool normalized = false;
};

template <class T>
BasisSet<T> make_basis(const Tensor<T>& p_raw, T eps = T(kNormEps)) {
  require(p_raw.rank() == 4, "make_basis: expected rank-4 [B,G,c,F], got ",
          shape_str(p_raw.dims));
  return BasisSet<T>{ops::l2_normalize_rows(p_raw, eps), true};
}

template <class T>
void check_bdm_shapes(const Shape& t, const Shape& p) {
  require(t.size() == 4 && p.size() == 4,
          "bdm: T and P must be rank-4, got ", shape_str(t), " and ",
          shape_str(p));
  require(t[0] == p[0], "bdm: batch extent mismatch: ", t[0], " vs ", p[0]);
  require(t[1] == p[1], "bdm: group extent mismatch: ", t[1], " vs ", p[1]);
  require(t[3] == p[3], "bdm: feature length mismatch: ", t[3], " vs ", p[3]);
  require(t[2] == 1, "bdm: T must have a single row, got ", t[2]);
}

// S = T . P^T, one coefficient per basis row per (batch, group).
template <class T>
Tensor<T> decompose(const Tensor<T>& t, const BasisSet<T>& basis) {
  require(basis.normalized, "decompose: basis set is not normalized");
  check_bdm_shapes<T>(t.dims, basis.p.dims);
  return ops::bmm(t, basis.p, false, true);
}

// O = S . P.
template <class T>
Tensor<T> reconstruct(const Tensor<T>& s, const BasisSet<T>& basis) {
  require(s.rank() == 4, "reconstruct: S must be rank-4, got ",
          shape_str(s.dims));
  const Shape& p = basis.p.dims;
  require(s.dims[0] == p[0] && s.dims[1] == p[1] && s.dims[2] == 1 &&
              s.dims[3] == p[2],
          "reconstruct: S ", shape_str(s.dims), " incompatible with P ",
          shape_str(p));
  return ops::bmm(s, basis.p, false, false);
}

// Normalize, project, rebuild. The fused module used everywhere.
template <class T>
Tensor<T> bdm_forward(const Tensor<T>& t_raw, const Tensor<T>& p_raw, T eps) {
  check_bdm_shapes<T>(t_raw.dims, p_raw.dims);
  BasisSet<T> basis = make_basis(p_raw, eps);
  return reconstruct(decompose(t_raw, basis), basis);
}

// Modified Gram-Schmidt over the row axis of [...,c,F]. Rows that are
// (numerically) inside the span of earlier rows come out as near-zero rows;
// `deficient_rows` reports how many, when requested. The arithmetic matches
// the tape composition in ag::orthonormalize_rows element for element.
template <class T>
Tensor<T> orthonormalize_rows(const Tensor<T>& p, T eps = T(kNormEps),
                              int64_t* deficient_rows = nullptr) {
  require(p.rank() >= 2, "orthonormalize_rows: need rank >= 2");
  const int r = p.rank();
  const int c = p.dims[r - 2];
  const int F = p.dims[r - 1];
  require(c <= F, "orthonormalize_rows: more rows (", c,
          ") than feature length (", F, ")");
  const int64_t slabs = p.size() / ((int64_t)c * F);
  Tensor<T> q = p;
  int64_t deficient = 0;
  for (int64_t s = 0; s < slabs; ++s) {
    T* base = q.ptr() + s * c * F;
    for (int i = 0; i < c; ++i) {
      T* qi = base + (int64_t)i * F;
      for (int j = 0; j < i; ++j) {
        const T* qj = base + (int64_t)j * F;
        T dot = 0;
        for (int f = 0; f < F; ++f) dot += qi[f] * qj[f];
        for (int f = 0; f < F; ++f) qi[f] -= dot * qj[f];
      }
      T ss = 0;
      for (int f = 0; f < F; ++f) ss += qi[f] * qi[f];
      if (std::sqrt((double)ss) <= 1e3 * (double)eps) ++deficient;
      T inv = T(1) / std::sqrt(ss + eps * eps);
      for (int f = 0; f < F; ++f) qi[f] *= inv;
    }
  }
  if (deficient_rows) *deficient_rows = deficient;
  return q;
}

}  // namespace bdm

namespace ag {

// Tape composition of modified Gram-Schmidt; shares its arithmetic with
// bdm::orthonormalize_rows.
template <class T>
Var<T> mgs_compose(Var<T> p, T eps) {
  const int r = val(p).rank();
  const int axis = r - 2;
  const int c = val(p).dims[axis];
  std::vector<Var<T>> q;
  q.reserve(c);
  for (int i = 0; i < c; ++i) {
    Var<T> row = slice(p, axis, i, 1);
    for (int j = 0; j < i; ++j) {
      Var<T> coeff = bmm(row, q[j], false, true);
      row = sub(row, bmm(coeff, q[j]));
    }
    q.push_back(l2_normalize_rows(row, eps));
  }
  return concat(q, axis);
}

// Orthonormalization as a single tape node. Forward runs the plain kernel;
// backward rebuilds the Gram-Schmidt chain on a scratch tape seeded with the
// upstream gradient, so the main tape never stores the O(c^2) intermediates.
template <class T>
Var<T> orthonormalize_rows(Var<T> p, T eps) {
  Graph<T>* g = p.g;
  Tensor<T> y = bdm::orthonormalize_rows(val(p), eps);
  Var<T> out = g->record(std::move(y), g->requires_grad(p));
  if (g->requires_grad(out)) {
    const int pid = p.id, oid = out.id;
    g->set_backward(out, [g, pid, oid, eps]() {
      Graph<T> scratch;
      Var<T> pp = scratch.leaf(g->value({g, pid}), true);
      Var<T> qq = mgs_compose(pp, eps);
      scratch.backward_from(qq, Tensor<T>(g->grad_ref(oid)));
      g->accum_grad(pid, scratch.grad(pp));
    });
  }
  return out;
}

// T_raw [B,G,1,F], P_raw [B,G,c,F] -> [B,G,1,F].
template <class T>
Var<T> bdm_forward(Var<T> t_raw, Var<T> p_raw, T eps,
                   BasisMode mode = BasisMode::kNormalized) {
  bdm::check_bdm_shapes<T>(val(t_raw).dims, val(p_raw).dims);
  Var<T> p = mode == BasisMode::kOrthonormalized
                 ? orthonormalize_rows(p_raw, eps)
                 : l2_normalize_rows(p_raw, eps);
  Var<T> s = bmm(t_raw, p, false, true);
  return bmm(s, p, false, false);
}

}  // namespace ag
}  // namespace ddn
