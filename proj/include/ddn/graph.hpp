#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "ddn/ops.hpp"
#include "ddn/tensor.hpp"

// Reverse-mode autodiff tape. Nodes are appended in execution order, so
// reverse id order is a topological order and backward() visits each node
// exactly once. Values are immutable once recorded; the tape is single-writer
// during forward and backward. Parallelism lives inside the op kernels.

namespace ddn {

template <class T>
class Graph;

template <class T>
struct Var {
  Graph<T>* g = nullptr;
  int id = -1;
  bool valid() const { return g != nullptr && id >= 0; }
};

template <class T>
class Graph {
 public:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::function<void()> backward;  // null for leaves
  };

  Var<T> leaf(Tensor<T> value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return {this, (int)nodes_.size() - 1};
  }

  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  Var<T> record(Tensor<T> value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return {this, (int)nodes_.size() - 1};
  }

  void set_backward(Var<T> v, std::function<void()> fn) {
    nodes_[v.id].backward = std::move(fn);
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_[v.id].value; }

  // Gradient of a node; zeros if nothing flowed into it.
  Tensor<T> grad(Var<T> v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.data.empty()) return Tensor<T>(n.value.dims);
    return n.grad;
  }
  bool has_grad(Var<T> v) const { return !nodes_[v.id].grad.data.empty(); }
  const Tensor<T>& grad_ref(int id) const { return nodes_[id].grad; }
  bool requires_grad(Var<T> v) const { return nodes_[v.id].requires_grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  size_t size() const { return nodes_.size(); }

  void accum_grad(int id, Tensor<T>&& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    require(g.dims == n.value.dims, "gradient dims ", shape_str(g.dims),
            " do not match value dims ", shape_str(n.value.dims));
    if (n.grad.data.empty()) {
      n.grad = std::move(g);
    } else {
      for (int64_t i = 0; i < n.grad.size(); ++i) n.grad[i] += g[i];
    }
  }

  // Seeds `seed` with an explicit gradient and sweeps the tape in reverse.
  void backward_from(Var<T> seed, Tensor<T> seed_grad) {
    require(seed.g == this, "backward: node belongs to another graph");
    accum_grad(seed.id, std::move(seed_grad));
    for (int id = seed.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.requires_grad || n.grad.data.empty() || !n.backward) continue;
      n.backward();
    }
  }

  // Standard entry point: scalar seed, gradient 1.
  void backward(Var<T> seed) {
    require(value(seed).size() == 1,
            "backward: seed must be scalar-valued, got shape ",
            shape_str(value(seed).dims));
    backward_from(seed, Tensor<T>::full(value(seed).dims, T(1)));
  }

  void clear() { nodes_.clear(); }

 private:
  std::deque<Node> nodes_;
};

// Tape-recording wrappers around the ops kernels.
namespace ag {

template <class T>
const Tensor<T>& val(Var<T> v) {
  return v.g->value(v);
}

template <class T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> bias, const ops::ConvSpec& spec) {
  Graph<T>* g = x.g;
  const Tensor<T>* bp = bias.valid() ? &val(bias) : nullptr;
  Tensor<T> y = ops::conv2d(val(x), val(w), bp, spec);
  const bool req = g->requires_grad(x) || g->requires_grad(w) ||
                   (bias.valid() && g->requires_grad(bias));
  Var<T> out = g->record(std::move(y), req);
  if (req) {
    const int xid = x.id, wid = w.id, bid = bias.valid() ? bias.id : -1,
              oid = out.id;
    g->set_backward(out, [g, xid, wid, bid, oid, spec]() {
      const Tensor<T>& dy = g->grad_ref(oid);
      const Tensor<T>& xv = g->value({g, xid});
      const Tensor<T>& wv = g->value({g, wid});
      if (g->requires_grad(xid))
        g->accum_grad(xid, ops::conv2d_bwd_input(dy, wv, xv.dims, spec));
      if (g->requires_grad(wid))
        g->accum_grad(wid, ops::conv2d_bwd_kernel(dy, xv, wv.dims, spec));
      if (bid >= 0 && g->requires_grad(bid))
        g->accum_grad(bid, ops::conv2d_bwd_bias(dy));
    });
  }
  return out;
}

template <class T>
Var<T> conv2d(Var<T> x, Var<T> w, const ops::ConvSpec& spec) {
  return conv2d(x, w, Var<T>{}, spec);
}

template <class T>
Var<T> max_pool2(Var<T> x) {
  Graph<T>* g = x.g;
  auto argmax = std::make_shared<std::vector<int64_t>>();
  Tensor<T> y = ops::max_pool2(val(x), argmax.get());
  Var<T> out = g->record(std::move(y), g->requires_grad(x));
  if (g->requires_grad(out)) {
    const int xid = x.id, oid = out.id;
    Shape xs = val(x).dims;
    g->set_backward(out, [g, xid, oid, xs, argmax]() {
      g->accum_grad(xid, ops::max_pool2_bwd(g->grad_ref(oid), *argmax, xs));
    });
  }
  return out;
}

template <class T>
Var<T> avg_pool2(Var<T> x) {
  Graph<T>* g = x.g;
  Tensor<T> y = ops::avg_pool2(val(x));
  Var<T> out = g->record(std::move(y), g->requires_grad(x));
  if (g->requires_grad(out)) {
    const int xid = x.id, oid = out.id;
    Shape xs = val(x).dims;
    g->set_backward(out, [g, xid, oid, xs]() {
      g->accum_grad(xid, ops::avg_pool2_bwd(g->grad_ref(oid), xs));
    });
  }
  return out;
}

template <class T>
Var<T> upsample_nearest2(Var<T> x) {
  Graph<T>* g = x.g;
  Tensor<T> y = ops::upsample_nearest2(val(x));
  Var<T> out = g->record(std::move(y), g->requires_grad(x));
  if (g->requires_grad(out)) {
    const int xid = x.id, oid = out.id;
    Shape xs = val(x).dims;
    g->set_backward(out, [g, xid, oid, xs]() {
      g->accum_grad(xid, ops::upsample_nearest2_bwd(g->grad_ref(oid), xs));
    });
  }
  return out;
}

// C = op(A) . op(B) with optional transposes of the trailing axes.
// dA and dB follow from the four transpose cases.
template <class T>
Var<T> bmm(Var<T> a, Var<T> b, bool ta = false, bool tb = false) {
  Graph<T>* g = a.g;
  Tensor<T> y = ops::bmm(val(a), val(b), ta, tb);
  const bool req = g->requires_grad(a) || g->requires_grad(b);
  Var<T> out = g->record(std::move(y), req);
  if (req) {
    const int aid = a.id, bid = b.id, oid = out.id;
    g->set_backward(out, [g, aid, bid, oid, ta, tb]() {
      const Tensor<T>& dy = g->grad_ref(oid);
      const Tensor<T>& av = g->value({g, aid});
      const Tensor<T>& bv = g->value({g, bid});
      if (g->requires_grad(aid)) {
        Tensor<T> da = ta ? ops::bmm(bv, dy, tb, true)
                          : ops::bmm(dy, bv, false, !tb);
        g->accum_grad(aid, std::move(da));
      }
      if (g->requires_grad(bid)) {
        Tensor<T> db = tb ? ops::bmm(dy, av, true, ta)
                          : ops::bmm(av, dy, !ta, false);
        g->accum_grad(bid, std::move(db));
      }
    });
  }
  return out;
}

template <class T>
Var<T> l2_normalize_rows(Var<T> p, T eps) {
  Graph<T>* g = p.g;
  Tensor<T> y = ops::l2_normalize_rows(val(p), eps);
  Var<T> out = g->record(std::move(y), g->requires_grad(p));
  if (g->requires_grad(out)) {
    const int pid = p.id, oid = out.id;
    g->set_backward(out, [g, pid, oid, eps]() {
      g->accum_grad(pid, ops::l2_normalize_rows_bwd(g->grad_ref(oid),
                                                    g->value({g, pid}), eps));
    });
  }
  return out;
}

template <class T>
Var<T> relu(Var<T> x) {
  Graph<T>* g = x.g;
  Tensor<T> y = ops::relu(val(x));
  Var<T> out = g->record(std::move(y), g->requires_grad(x));
  if (g->requires_grad(out)) {
    const int xid = x.id, oid = out.id;
    g->set_backward(out, [g, xid, oid]() {
      g->accum_grad(xid, ops::relu_bwd(g->grad_ref(oid), g->value({g, xid})));
    });
  }
  return out;
}

template <class T>
Var<T> sigmoid(Var<T> x) {
  Graph<T>* g = x.g;
  Tensor<T> y = ops::sigmoid(val(x));
  Var<T> out = g->record(std::move(y), g->requires_grad(x));
  if (g->requires_grad(out)) {
    const int xid = x.id, oid = out.id;
    g->set_backward(out, [g, xid, oid]() {
      const Tensor<T>& dy = g->grad_ref(oid);
      const Tensor<T>& s = g->value({g, oid});
      Tensor<T> dx(s.dims);
      for (int64_t i = 0; i < s.size(); ++i)
        dx[i] = dy[i] * s[i] * (T(1) - s[i]);
      g->accum_grad(xid, std::move(dx));
    });
  }
  return out;
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  Graph<T>* g = a.g;
  Tensor<T> y = ops::add(val(a), val(b));
  const bool req = g->requires_grad(a) || g->requires_grad(b);
  Var<T> out = g->record(std::move(y), req);
  if (req) {
    const int aid = a.id, bid = b.id, oid = out.id;
    g->set_backward(out, [g, aid, bid, oid]() {
      const Tensor<T>& dy = g->grad_ref(oid);
      if (g->requires_grad(aid)) g->accum_grad(aid, Tensor<T>(dy));
      if (g->requires_grad(bid)) g->accum_grad(bid, Tensor<T>(dy));
    });
  }
  return out;
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  Graph<T>* g = a.g;
  Tensor<T> y = ops::sub(val(a), val(b));
  const bool req = g->requires_grad(a) || g->requires_grad(b);
  Var<T> out = g->record(std::move(y), req);
  if (req) {
    const int aid = a.id, bid = b.id, oid = out.id;
    g->set_backward(out, [g, aid, bid, oid]() {
      const Tensor<T>& dy = g->grad_ref(oid);
      if (g->requires_grad(aid)) g->accum_grad(aid, Tensor<T>(dy));
      if (g->requires_grad(bid)) g->accum_grad(bid, ops::affine(dy, T(-1), T(0)));
    });
  }
  return out;
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  Graph<T>* g = a.g;
  Tensor<T> y = ops::mul(val(a), val(b));
  const bool req = g->requires_grad(a) || g->requires_grad(b);
  Var<T> out = g->record(std::move(y), req);
  if (req) {
    const int aid = a.id, bid = b.id, oid = out.id;
    g->set_backward(out, [g, aid, bid, oid]() {
      const Tensor<T>& dy = g->grad_ref(oid);
      if (g->requires_grad(aid))
        g->accum_grad(aid, ops::mul(dy, g->value({g, bid})));
      if (g->requires_grad(bid))
        g->accum_grad(bid, ops::mul(dy, g->value({g, aid})));
    });
  }
  return out;
}

// Elementwise a/b; in practice only used on scalar-shaped tensors.
template <class T>
Var<T> div(Var<T> a, Var<T> b) {
  Graph<T>* g = a.g;
  check_same_shape(val(a), val(b), "div");
  Tensor<T> y(val(a).dims);
  for (int64_t i = 0; i < y.size(); ++i) y[i] = val(a)[i] / val(b)[i];
  const bool req = g->requires_grad(a) || g->requires_grad(b);
  Var<T> out = g->record(std::move(y), req);
  if (req) {
    const int aid = a.id, bid = b.id, oid = out.id;
    g->set_backward(out, [g, aid, bid, oid]() {
      const Tensor<T>& dy = g->grad_ref(oid);
      const Tensor<T>& av = g->value({g, aid});
      const Tensor<T>& bv = g->value({g, bid});
      if (g->requires_grad(aid)) {
        Tensor<T> da(av.dims);
        for (int64_t i = 0; i < da.size(); ++i) da[i] = dy[i] / bv[i];
        g->accum_grad(aid, std::move(da));
      }
      if (g->requires_grad(bid)) {
        Tensor<T> db(bv.dims);
        for (int64_t i = 0; i < db.size(); ++i)
          db[i] = -dy[i] * av[i] / (bv[i] * bv[i]);
        g->accum_grad(bid, std::move(db));
      }
    });
  }
  return out;
}

template <class T>
Var<T> affine(Var<T> x, T scale, T shift) {
  Graph<T>* g = x.g;
  Tensor<T> y = ops::affine(val(x), scale, shift);
  Var<T> out = g->record(std::move(y), g->requires_grad(x));
  if (g->requires_grad(out)) {
    const int xid = x.id, oid = out.id;
    g->set_backward(out, [g, xid, oid, scale]() {
      g->accum_grad(xid, ops::affine(g->grad_ref(oid), scale, T(0)));
    });
  }
  return out;
}

template <class T>
Var<T> concat(const std::vector<Var<T>>& parts, int axis) {
  require(!parts.empty(), "concat: no inputs");
  Graph<T>* g = parts[0].g;
  std::vector<const Tensor<T>*> vs;
  bool req = false;
  for (Var<T> p : parts) {
    vs.push_back(&val(p));
    req = req || g->requires_grad(p);
  }
  Tensor<T> y = ops::concat(vs, axis);
  Var<T> out = g->record(std::move(y), req);
  if (req) {
    std::vector<int> ids;
    std::vector<int> extents;
    for (Var<T> p : parts) {
      ids.push_back(p.id);
      extents.push_back(val(p).dims[axis]);
    }
    const int oid = out.id;
    g->set_backward(out, [g, ids, extents, axis, oid]() {
      const Tensor<T>& dy = g->grad_ref(oid);
      int off = 0;
      for (size_t i = 0; i < ids.size(); ++i) {
        if (g->requires_grad(ids[i]))
          g->accum_grad(ids[i], ops::slice(dy, axis, off, extents[i]));
        off += extents[i];
      }
    });
  }
  return out;
}

template <class T>
Var<T> slice(Var<T> x, int axis, int start, int len) {
  Graph<T>* g = x.g;
  Tensor<T> y = ops::slice(val(x), axis, start, len);
  Var<T> out = g->record(std::move(y), g->requires_grad(x));
  if (g->requires_grad(out)) {
    const int xid = x.id, oid = out.id;
    Shape xs = val(x).dims;
    g->set_backward(out, [g, xid, oid, xs, axis, start]() {
      Tensor<T> dx(xs);
      ops::slice_bwd_accum(dx, g->grad_ref(oid), axis, start);
      g->accum_grad(xid, std::move(dx));
    });
  }
  return out;
}

template <class T>
Var<T> reshape(Var<T> x, Shape dims) {
  Graph<T>* g = x.g;
  Tensor<T> y = ops::reshape(val(x), dims);
  Var<T> out = g->record(std::move(y), g->requires_grad(x));
  if (g->requires_grad(out)) {
    const int xid = x.id, oid = out.id;
    Shape xs = val(x).dims;
    g->set_backward(out, [g, xid, oid, xs]() {
      g->accum_grad(xid, ops::reshape(g->grad_ref(oid), xs));
    });
  }
  return out;
}

template <class T>
Var<T> sum_all(Var<T> x) {
  Graph<T>* g = x.g;
  Tensor<T> y({1});
  y[0] = ops::sum_all(val(x));
  Var<T> out = g->record(std::move(y), g->requires_grad(x));
  if (g->requires_grad(out)) {
    const int xid = x.id, oid = out.id;
    Shape xs = val(x).dims;
    g->set_backward(out, [g, xid, oid, xs]() {
      g->accum_grad(xid, Tensor<T>::full(xs, g->grad_ref(oid)[0]));
    });
  }
  return out;
}

template <class T>
Var<T> mean_all(Var<T> x) {
  Var<T> s = sum_all(x);
  return affine(s, T(1) / T(val(x).size()), T(0));
}

}  // namespace ag
}  // namespace ddn
