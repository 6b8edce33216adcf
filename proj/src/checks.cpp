#include "ddn/checks.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>

#include "ddn/bdm.hpp"
#include "ddn/io.hpp"
#include "ddn/metrics.hpp"
#include "ddn/network.hpp"
#include "ddn/scene.hpp"
#include "ddn/spatial.hpp"
#include "ddn/temporal.hpp"
#include "ddn/training.hpp"

namespace ddn {
namespace checks {

namespace {

using D = double;

Tensor<D> random_tensor(Shape dims, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<D> t(std::move(dims));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

struct Collector {
  std::vector<CheckResult> results;
  void add(const std::string& name, bool pass, const std::string& detail) {
    results.push_back({name, pass, detail});
  }
  void add_tol(const std::string& name, double err, double tol) {
    std::ostringstream os;
    os << "max err " << err << " (tol " << tol << ")";
    add(name, err <= tol, os.str());
  }
};

// --- gradient helpers -------------------------------------------------------

// Compares the tape gradient of sum(f(x) * weights) against central
// differences; weights make the seed sensitive to every output element.
double grad_check_input(
    const std::function<Var<D>(Graph<D>&, Var<D>)>& build, const Tensor<D>& x,
    uint64_t seed) {
  Graph<D> g;
  Var<D> xv = g.leaf(x, true);
  Var<D> y = build(g, xv);
  Rng wr(seed ^ 0xABCDEF);
  Tensor<D> weights = random_tensor(g.value(y).dims, wr);
  Var<D> loss = ag::sum_all(ag::mul(y, g.constant(weights)));
  g.backward(loss);
  Tensor<D> analytic = g.grad(xv);

  auto f = [&](const Tensor<D>& probe) {
    Graph<D> gg;
    Var<D> pv = gg.leaf(probe, false);
    Var<D> yy = build(gg, pv);
    return ops::dot_all(gg.value(yy), weights);
  };
  Tensor<D> numeric = ops::finite_diff_grad<D>(f, x, 1e-5);
  return max_rel_diff(analytic, numeric, 1e-4);
}

// --- suites -----------------------------------------------------------------

void tensor_suite(Collector& c) {
  Rng rng(2024);

  {  // 1x1 identity kernel copies the input.
    Tensor<D> x = random_tensor({2, 3, 5, 7}, rng);
    Tensor<D> k = Tensor<D>::full({3, 1, 1, 1}, 1.0);
    ops::ConvSpec spec{1, 1, ops::Padding::kZero, true};
    Tensor<D> y = ops::conv2d(x, k, nullptr, spec);
    c.add_tol("conv2d identity 1x1", max_abs_diff(x, y), 0.0);
  }
  {  // Zero-sum kernels annihilate constants under replicate padding.
    Tensor<D> x = Tensor<D>::full({1, 2, 8, 8}, 3.25);
    auto bank = spatial::make_difference_bank({1, 2, 3});
    double worst = 0;
    for (int d : bank.dilations)
      for (int i = 0; i < 8; ++i) {
        Tensor<D> k =
            spatial::depthwise_const_kernel<D>(bank.kernels[i], 2, 3, 3);
        ops::ConvSpec spec{1, d, ops::Padding::kReplicate, true};
        Tensor<D> y = ops::conv2d(x, k, nullptr, spec);
        for (auto v : y.data) worst = std::max(worst, std::abs(v));
      }
    c.add_tol("zero-sum kernels on constant input", worst, 0.0);
  }
  {  // Pools commute with quarter turns on even-sided inputs.
    Tensor<D> x = random_tensor({1, 2, 6, 6}, rng);
    double e1 = max_abs_diff(ops::max_pool2(ops::rot90_hw(x)),
                             ops::rot90_hw(ops::max_pool2(x)));
    double e2 = max_abs_diff(ops::avg_pool2(ops::rot90_hw(x)),
                             ops::rot90_hw(ops::avg_pool2(x)));
    c.add_tol("pools commute with rot90", std::max(e1, e2), 0.0);
  }
  {  // Purity: identical inputs give bitwise-identical outputs.
    Tensor<D> x = random_tensor({2, 2, 6, 6}, rng);
    Tensor<D> k = random_tensor({3, 2, 3, 3}, rng);
    ops::ConvSpec spec{1, 1, ops::Padding::kReplicate, false};
    Tensor<D> y1 = ops::conv2d(x, k, nullptr, spec);
    Tensor<D> y2 = ops::conv2d(x, k, nullptr, spec);
    bool same = y1.data == y2.data;
    Tensor<D> a = random_tensor({3, 4, 5}, rng);
    Tensor<D> b = random_tensor({3, 5, 2}, rng);
    same = same && (ops::bmm(a, b).data == ops::bmm(a, b).data);
    c.add("op purity (bitwise repeatable)", same, same ? "ok" : "mismatch");
  }
}

void grad_suite(Collector& c) {
  const double tol = 1e-4;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(100 + seed);
    {
      Tensor<D> x = random_tensor({2, 3, 6, 6}, rng);
      Tensor<D> k = random_tensor({2, 3, 3, 3}, rng);
      ops::ConvSpec spec{1, 1, ops::Padding::kZero, false};
      double err = grad_check_input(
          [&](Graph<D>& g, Var<D> xv) {
            return ag::conv2d(xv, g.leaf(k, false), spec);
          },
          x, seed);
      c.add_tol("grad conv2d dense s" + std::to_string(seed), err, tol);
    }
    {
      Tensor<D> x = random_tensor({1, 2, 8, 8}, rng);
      Tensor<D> k = random_tensor({2, 1, 3, 3}, rng);
      ops::ConvSpec spec{1, 2, ops::Padding::kReplicate, true};
      double err = grad_check_input(
          [&](Graph<D>& g, Var<D> xv) {
            return ag::conv2d(xv, g.leaf(k, false), spec);
          },
          x, seed);
      c.add_tol("grad conv2d depthwise dilated s" + std::to_string(seed), err,
                tol);
    }
    {
      Tensor<D> x = random_tensor({1, 2, 6, 6}, rng);
      double e1 = grad_check_input(
          [](Graph<D>&, Var<D> xv) { return ag::max_pool2(xv); }, x, seed);
      double e2 = grad_check_input(
          [](Graph<D>&, Var<D> xv) { return ag::avg_pool2(xv); }, x, seed);
      c.add_tol("grad pools s" + std::to_string(seed), std::max(e1, e2), tol);
    }
    {
      Tensor<D> x = random_tensor({2, 3, 4, 8}, rng);
      double err = grad_check_input(
          [](Graph<D>&, Var<D> xv) {
            return ag::l2_normalize_rows(xv, (D)1e-8);
          },
          x, seed);
      c.add_tol("grad l2_normalize_rows s" + std::to_string(seed), err, tol);
    }
    {
      Tensor<D> t = random_tensor({2, 3, 1, 8}, rng);
      Tensor<D> p = random_tensor({2, 3, 4, 8}, rng);
      double e_t = grad_check_input(
          [&](Graph<D>& g, Var<D> xv) {
            return ag::bdm_forward(xv, g.leaf(p, false), (D)1e-8);
          },
          t, seed);
      double e_p = grad_check_input(
          [&](Graph<D>& g, Var<D> xv) {
            return ag::bdm_forward(g.leaf(t, false), xv, (D)1e-8);
          },
          p, seed);
      c.add_tol("grad bdm_forward s" + std::to_string(seed),
                std::max(e_t, e_p), tol);
    }
    {
      Tensor<D> p = random_tensor({1, 2, 3, 6}, rng);
      double err = grad_check_input(
          [](Graph<D>&, Var<D> xv) {
            return ag::orthonormalize_rows(xv, (D)1e-8);
          },
          p, seed);
      c.add_tol("grad orthonormalize_rows s" + std::to_string(seed), err,
                tol);
    }
  }
}

void bdm_suite(Collector& c) {
  Rng rng(7);
  {  // Completeness: full orthonormal basis reconstructs exactly.
    const int F = 32;
    Tensor<D> p_raw = random_tensor({1, 1, F, F}, rng);
    Tensor<D> p = bdm::orthonormalize_rows(p_raw, (D)1e-8);
    Tensor<D> t = random_tensor({1, 1, 1, F}, rng);
    Tensor<D> out = bdm::bdm_forward(t, p, (D)1e-8);
    c.add_tol("bdm completeness (c=F=32)", (double)max_abs_diff(out, t),
              1e-5);
  }
  {  // Flipping the sign of one basis row leaves the output unchanged.
    Tensor<D> t = random_tensor({2, 2, 1, 16}, rng);
    Tensor<D> p = random_tensor({2, 2, 5, 16}, rng);
    Tensor<D> base = bdm::bdm_forward(t, p, (D)1e-8);
    double worst = 0;
    for (int row = 0; row < 5; ++row) {
      Tensor<D> flipped = p;
      for (int b = 0; b < 2; ++b)
        for (int gdim = 0; gdim < 2; ++gdim)
          for (int f = 0; f < 16; ++f)
            flipped.at(b, gdim, row, f) = -flipped.at(b, gdim, row, f);
      worst = std::max(
          worst,
          (double)max_abs_diff(bdm::bdm_forward(t, flipped, (D)1e-8), base));
    }
    c.add_tol("bdm sign-flip invariance", worst, 1e-6);
  }
  {  // Degree-1 homogeneity in T.
    Tensor<D> t = random_tensor({1, 3, 1, 12}, rng);
    Tensor<D> p = random_tensor({1, 3, 4, 12}, rng);
    Tensor<D> base = bdm::bdm_forward(t, p, (D)1e-8);
    double worst = 0;
    for (double alpha : {-2.0, 0.5, 3.0}) {
      Tensor<D> ts = ops::affine(t, (D)alpha, (D)0);
      Tensor<D> scaled = bdm::bdm_forward(ts, p, (D)1e-8);
      Tensor<D> expect = ops::affine(base, (D)alpha, (D)0);
      worst = std::max(worst, (double)max_abs_diff(scaled, expect));
    }
    c.add_tol("bdm homogeneity in T", worst, 1e-6);
  }
  {  // Projection is idempotent over an orthonormalized basis.
    Tensor<D> t = random_tensor({1, 2, 1, 10}, rng);
    Tensor<D> p =
        bdm::orthonormalize_rows(random_tensor({1, 2, 3, 10}, rng), (D)1e-8);
    bdm::BasisSet<D> basis{p, true};
    Tensor<D> once = bdm::reconstruct(bdm::decompose(t, basis), basis);
    Tensor<D> twice = bdm::reconstruct(bdm::decompose(once, basis), basis);
    c.add_tol("bdm projection idempotence", (double)max_abs_diff(once, twice),
              1e-6);
  }
  {  // Output stays in the row span of P: residual of least squares fit.
    Tensor<D> t = random_tensor({1, 1, 1, 12}, rng);
    Tensor<D> p_raw = random_tensor({1, 1, 4, 12}, rng);
    Tensor<D> out = bdm::bdm_forward(t, p_raw, (D)1e-8);
    // Fit out onto the orthonormalized rows of p and measure the residual.
    Tensor<D> q = bdm::orthonormalize_rows(p_raw, (D)1e-8);
    Tensor<D> coeff = ops::bmm(out, q, false, true);
    Tensor<D> fit = ops::bmm(coeff, q, false, false);
    c.add_tol("bdm output lies in basis span",
              (double)max_abs_diff(fit, out), 1e-5);
  }
  {  // Orthonormalize: pairwise inner products vanish, span is preserved.
    Tensor<D> p_raw = random_tensor({1, 1, 4, 8}, rng);
    Tensor<D> q = bdm::orthonormalize_rows(p_raw, (D)1e-8);
    double worst = 0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < i; ++j) {
        double dot = 0;
        for (int f = 0; f < 8; ++f) dot += q.at(0, 0, i, f) * q.at(0, 0, j, f);
        worst = std::max(worst, std::abs(dot));
      }
    Tensor<D> coeff = ops::bmm(p_raw, q, false, true);
    Tensor<D> fit = ops::bmm(coeff, q, false, false);
    double span_err = (double)max_abs_diff(fit, p_raw);
    c.add_tol("orthonormalize pairwise orthogonality", worst, 1e-5);
    c.add_tol("orthonormalize span preservation", span_err, 1e-5);
  }
}

void spatial_suite(Collector& c) {
  Rng rng(11);
  auto bank = spatial::make_difference_bank({1, 3});
  {  // Kernel bank: zero sums and rotation closure.
    bool zero_sum = true;
    for (const auto& k : bank.kernels) {
      double s = 0;
      for (double v : k) s += v;
      zero_sum = zero_sum && s == 0.0;
    }
    bool closed = true;
    for (int i = 0; i < 8; ++i) {
      Tensor<D> k({3, 3});
      for (int j = 0; j < 9; ++j) k[j] = bank.kernels[i][j];
      Tensor<D> r = ops::rot90_hw(k);
      bool found = false;
      for (int m = 0; m < 8; ++m) {
        Tensor<D> km({3, 3});
        for (int j = 0; j < 9; ++j) km[j] = bank.kernels[m][j];
        if (max_abs_diff(r, km) == 0) found = true;
      }
      closed = closed && found;
    }
    c.add("difference bank zero-sum + rotation closure", zero_sum && closed,
          zero_sum ? (closed ? "ok" : "not rotation closed")
                   : "kernel sums nonzero");
  }
  {  // Uniform offsets leave every basis map unchanged.
    Tensor<D> x = random_tensor({1, 2, 8, 8}, rng, 0, 1);
    Tensor<D> shifted = ops::affine(x, (D)1, (D)5);
    double err = (double)max_abs_diff(spatial::dfem(x, bank),
                                      spatial::dfem(shifted, bank));
    c.add_tol("dfem offset invariance", err, 1e-6);
  }
  {  // Positive rescaling leaves the normalized bases unchanged.
    Tensor<D> x = random_tensor({1, 2, 8, 8}, rng, 0, 1);
    Tensor<D> base =
        ops::l2_normalize_rows(spatial::dfem(x, bank), (D)1e-8);
    double worst = 0;
    for (double a : {0.5, 2.0, 10.0}) {
      Tensor<D> scaled = ops::l2_normalize_rows(
          spatial::dfem(ops::affine(x, (D)a, (D)0), bank), (D)1e-8);
      worst = std::max(worst, (double)max_abs_diff(scaled, base));
    }
    c.add_tol("normalized dfem scale invariance", worst, 1e-6);
  }
  {  // SD2M commutes with quarter turns on square inputs.
    Tensor<D> x = random_tensor({1, 3, 8, 8}, rng, 0, 1);
    Tensor<D> w = random_tensor({3, 3, 1, 1}, rng);
    Tensor<D> a = spatial::sd2m(ops::rot90_hw(x), w, bank, (D)1e-8);
    Tensor<D> b = ops::rot90_hw(spatial::sd2m(x, w, bank, (D)1e-8));
    c.add_tol("sd2m rot90 equivariance", (double)max_abs_diff(a, b), 1e-5);
  }
  {  // D kernels are mutually orthogonal as 4-vectors.
    const auto& dk = spatial::downsample_kernels();
    double worst = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < i; ++j) {
        double dot = 0;
        for (int f = 0; f < 4; ++f) dot += dk[i][f] * dk[j][f];
        worst = std::max(worst, std::abs(dot));
      }
    c.add_tol("dfed kernel orthogonality", worst, 0.0);
  }
  {  // Inception pooling's first group is exactly max pooling.
    Tensor<D> x = random_tensor({1, 6, 8, 8}, rng, 0, 1);
    auto groups = ag::inception_split(6);
    Tensor<D> w = random_tensor({groups[2], groups[2], 1, 1}, rng);
    Tensor<D> pooled = spatial::inception_pool(x, w, (D)1e-8);
    Tensor<D> direct = ops::max_pool2(ops::slice(x, 1, 0, groups[0]));
    Tensor<D> head = ops::slice(pooled, 1, 0, groups[0]);
    bool bitwise = head.data == direct.data;
    c.add("inception first group == max_pool2 (bitwise)", bitwise,
          bitwise ? "ok" : "differs");
  }
  {  // SD2M/SD3M outputs stay inside the span of their basis rows.
    Tensor<D> x = random_tensor({1, 2, 8, 8}, rng, 0, 1);
    Tensor<D> w = random_tensor({2, 2, 1, 1}, rng);
    Tensor<D> out = spatial::sd2m(x, w, bank, (D)1e-8);
    Tensor<D> flat = ops::reshape(out, {1, 2, 1, 64});
    Tensor<D> q = bdm::orthonormalize_rows(
        ops::l2_normalize_rows(spatial::dfem(x, bank), (D)1e-8), (D)1e-8);
    Tensor<D> fit = ops::bmm(ops::bmm(flat, q, false, true), q);
    c.add_tol("sd2m output in basis span", (double)max_abs_diff(fit, flat),
              1e-5);
  }
}

void temporal_suite(Collector& c) {
  Rng rng(13);
  const int N = 4;
  std::vector<Tensor<D>> frames;
  for (int i = 0; i < N; ++i)
    frames.push_back(random_tensor({1, 2, 4, 4}, rng, 0, 1));
  {  // Static stacks: all difference bases vanish.
    std::vector<Tensor<D>> still(N, frames[0]);
    Tensor<D> p = temporal::tfem(still);
    double worst = 0;
    for (int b = 0; b < N - 1; ++b)
      for (int f = 0; f < 16; ++f)
        for (int ch = 0; ch < 2; ++ch)
          worst = std::max(worst, std::abs(p.at(0, ch, b, f)));
    c.add_tol("tfem static stack difference bases", worst, 0.0);
  }
  {  // Adding the same offset to every frame leaves differences unchanged.
    Tensor<D> delta = random_tensor({1, 2, 4, 4}, rng);
    std::vector<Tensor<D>> shifted;
    for (const auto& f : frames) shifted.push_back(ops::add(f, delta));
    Tensor<D> p0 = temporal::tfem(frames);
    Tensor<D> p1 = temporal::tfem(shifted);
    double worst = 0;
    for (int b = 0; b < N - 1; ++b)
      for (int ch = 0; ch < 2; ++ch)
        for (int f = 0; f < 16; ++f)
          worst = std::max(
              worst, std::abs(p0.at(0, ch, b, f) - p1.at(0, ch, b, f)));
    c.add_tol("tfem shift leaves difference bases unchanged", worst, 0.0);
  }
  {  // Degree-1 homogeneity of td2m in the stack.
    Tensor<D> w = random_tensor({2, N * 2, 1, 1}, rng);
    Tensor<D> base = temporal::td2m(frames, w, (D)1e-8);
    std::vector<Tensor<D>> scaled;
    for (const auto& f : frames) scaled.push_back(ops::affine(f, (D)2, (D)0));
    Tensor<D> out = temporal::td2m(scaled, w, (D)1e-8);
    c.add_tol("td2m homogeneity",
              (double)max_abs_diff(out, ops::affine(base, (D)2, (D)0)), 1e-6);
  }
  {  // Swapping two reference frames with matching weight blocks is a no-op.
    Tensor<D> w = random_tensor({2, N * 2, 1, 1}, rng);
    Tensor<D> base = temporal::td2m(frames, w, (D)1e-8);
    std::vector<Tensor<D>> swapped = frames;
    std::swap(swapped[0], swapped[1]);
    Tensor<D> w2 = w;  // permute the channel blocks of frames 0 and 1
    for (int co = 0; co < 2; ++co)
      for (int ci = 0; ci < 2; ++ci) {
        std::swap(w2.at(co, 0 * 2 + ci, 0, 0), w2.at(co, 1 * 2 + ci, 0, 0));
      }
    Tensor<D> out = temporal::td2m(swapped, w2, (D)1e-8);
    c.add_tol("td2m reference-frame permutation invariance",
              (double)max_abs_diff(out, base), 1e-6);
  }
  {  // td2m output stays in the span of the temporal bases.
    Tensor<D> w = random_tensor({2, N * 2, 1, 1}, rng);
    Tensor<D> out = temporal::td2m(frames, w, (D)1e-8);
    Tensor<D> flat = ops::reshape(out, {1, 2, 1, 16});
    Tensor<D> q = bdm::orthonormalize_rows(
        ops::l2_normalize_rows(temporal::tfem(frames), (D)1e-8), (D)1e-8);
    Tensor<D> fit = ops::bmm(ops::bmm(flat, q, false, true), q);
    c.add_tol("td2m output in basis span", (double)max_abs_diff(fit, flat),
              1e-5);
  }
}

void network_suite(Collector& c) {
  net::ModelConfig cfg;
  cfg.channels = {3, 6};
  cfg.dilations = {1};
  cfg.stages = 2;
  {  // Shape contract and determinism.
    auto params = net::init_params<float>(cfg, 5, net::ModelKind::kSd2net);
    Tensor<float> img({2, 1, 16, 16});
    Rng rng(5);
    for (auto& v : img.data) v = (float)rng.uniform();
    Graph<float> g1, g2;
    auto pv1 = net::make_param_vars(g1, params, false);
    auto pv2 = net::make_param_vars(g2, params, false);
    auto o1 = net::sd2net_forward(pv1, g1.leaf(img, false), cfg);
    auto o2 = net::sd2net_forward(pv2, g2.leaf(img, false), cfg);
    bool shape_ok = g1.value(o1.logits).dims == Shape{2, 1, 16, 16} &&
                    g1.value(o1.features).dims == Shape{2, 3, 16, 16};
    bool det = g1.value(o1.logits).data == g2.value(o2.logits).data;
    c.add("sd2net shape contract", shape_ok, shape_ok ? "ok" : "bad dims");
    c.add("sd2net forward determinism", det, det ? "ok" : "differs");
  }
  {  // Zero input with bias-free convolutions gives exactly zero logits.
    auto params = net::init_params<float>(cfg, 6, net::ModelKind::kSd2net);
    Graph<float> g;
    auto pv = net::make_param_vars(g, params, false);
    auto out = net::sd2net_forward(pv, g.leaf(Tensor<float>({1, 1, 8, 8}), false), cfg);
    double worst = 0;
    for (auto v : g.value(out.logits).data)
      worst = std::max(worst, std::abs((double)v));
    c.add_tol("sd2net zero input -> zero logits", worst, 0.0);
  }
  {  // All intermediates finite for [0,1] inputs across seeds.
    bool ok = true;
    for (uint64_t seed = 0; seed < 20 && ok; ++seed) {
      auto params = net::init_params<float>(cfg, seed, net::ModelKind::kSd2net);
      Tensor<float> img({1, 1, 8, 8});
      Rng rng(seed * 7 + 1);
      for (auto& v : img.data) v = (float)rng.uniform();
      Graph<float> g;
      auto pv = net::make_param_vars(g, params, false);
      auto out = net::sd2net_forward(pv, g.leaf(img, false), cfg);
      ok = g.value(out.logits).all_finite();
    }
    c.add("sd2net finite logits over seeds", ok, ok ? "ok" : "non-finite");
  }
  {  // Parameter tree round-trips bitwise through the checkpoint format.
    auto params = net::init_params<float>(cfg, 7, net::ModelKind::kSd2net);
    const std::string path =
        (std::filesystem::temp_directory_path() / "ddn_check_ckpt.bin")
            .string();
    io::Checkpoint ck;
    ck.params = params;
    ck.config = cfg;
    ck.kind = net::ModelKind::kSd2net;
    io::save_checkpoint(path, ck);
    io::Checkpoint back = io::load_checkpoint(path);
    bool same = back.params.size() == params.size();
    for (const auto& [name, t] : params)
      same = same && back.params.count(name) &&
             back.params.at(name).data == t.data;
    std::filesystem::remove(path);
    c.add("checkpoint round-trip bitwise", same, same ? "ok" : "differs");
  }
}

void training_suite(Collector& c) {
  {  // Loss endpoints.
    Tensor<D> g({1, 1, 2, 2});
    g[0] = 1;
    Tensor<D> exact = g;
    double l0 = train::soft_iou_loss(exact, g);
    Tensor<D> zero({1, 1, 2, 2});
    double l1 = train::soft_iou_loss(zero, g);
    c.add("soft_iou endpoints", l0 == 0.0 && l1 == 1.0,
          "loss(pred==gt)=" + std::to_string(l0) +
              ", loss(zero)=" + std::to_string(l1));
  }
  {  // Hand-computed 2x2 case.
    Tensor<D> p({1, 1, 2, 2}, {1, 0.5, 0, 0});
    Tensor<D> g({1, 1, 2, 2}, {1, 0, 0, 0});
    double loss = train::soft_iou_loss(p, g);
    c.add_tol("soft_iou 2x2 hand case", std::abs(loss - 1.0 / 3), 1e-12);
  }
  {  // lr schedule.
    train::TrainConfig cfg;
    cfg.epochs = 20;
    cfg.milestones = {10, 15};
    bool ok = train::lr_at(0, cfg) == 5e-4 && train::lr_at(9, cfg) == 5e-4 &&
              std::abs(train::lr_at(10, cfg) - 5e-5) < 1e-18 &&
              std::abs(train::lr_at(19, cfg) - 5e-6) < 1e-18;
    c.add("lr schedule piecewise constant", ok, ok ? "ok" : "wrong steps");
  }
  {  // Zero gradient leaves parameters unchanged; lr=0 is the identity.
    net::ParamTree<float> params;
    params.emplace("w", Tensor<float>::full({2}, 1.5f));
    train::AdamState<float> st;
    std::map<std::string, Tensor<float>> grads;
    grads.emplace("w", Tensor<float>({2}));
    train::TrainConfig cfg;
    train::adam_step(params, grads, st, 0.1f, cfg);
    bool ok = params.at("w")[0] == 1.5f && st.step == 1;
    grads.at("w")[0] = 3.f;
    train::adam_step(params, grads, st, 0.0f, cfg);
    ok = ok && params.at("w")[0] == 1.5f;
    c.add("adam zero-grad / zero-lr identity", ok, ok ? "ok" : "moved");
  }
  {  // Unit-step property on the first update.
    net::ParamTree<float> params;
    params.emplace("w", Tensor<float>::full({1}, 0.f));
    train::AdamState<float> st;
    std::map<std::string, Tensor<float>> grads;
    grads.emplace("w", Tensor<float>::full({1}, 7.f));
    train::TrainConfig cfg;
    train::adam_step(params, grads, st, 0.01f, cfg);
    c.add_tol("adam first-step magnitude ~ lr",
              std::abs((double)params.at("w")[0] + 0.01), 1e-6);
  }
}

void metrics_suite(Collector& c) {
  {  // Accumulated IoU, hand case.
    metrics::Mask p1({4, 4}), g1({4, 4}), p2({4, 4}), g2({4, 4});
    // image 1: |inter|=3, |union|=6
    for (int i = 0; i < 5; ++i) p1[i] = 1;
    for (int i = 2; i < 8; ++i) g1[i] = 1;
    // (p: 0-4, g: 2-7) -> inter {2,3,4} = 3, union {0..7} = 8. Adjust g1.
    g1 = metrics::Mask({4, 4});
    for (int i = 2; i < 6; ++i) g1[i] = 1;  // inter {2,3,4}=3, union {0..5}=6
    // image 2: inter 1, union 4
    p2[0] = 1;
    p2[1] = 1;
    g2[1] = 1;
    g2[2] = 1;
    g2[3] = 1;
    double v = metrics::miou({p1, p2}, {g1, g2});
    c.add_tol("miou accumulated hand case", std::abs(v - 0.4), 1e-12);
  }
  {  // Diagonal pixels form one 8-connected component.
    metrics::Mask m({4, 4});
    m.at(0, 0) = 1;
    m.at(1, 1) = 1;
    auto comps = metrics::connected_components(m);
    c.add("8-connectivity diagonal join", comps.size() == 1,
          std::to_string(comps.size()) + " components");
  }
  {  // pd/fa hand-constructed scene.
    metrics::Mask gt({64, 64}), pred({64, 64});
    for (int y = 9; y <= 11; ++y)
      for (int x = 9; x <= 11; ++x) gt[(int64_t)y * 64 + x] = 1;
    for (int y = 9; y <= 11; ++y)
      for (int x = 11; x <= 13; ++x) pred[(int64_t)y * 64 + x] = 1;  // centroid (10,12)
    for (int x = 40; x <= 43; ++x) pred[(int64_t)20 * 64 + x] = 1;   // 4-px spur
    auto [pd, fa] = metrics::pd_fa({pred}, {gt}, 3.0);
    bool ok = pd == 1.0 && std::abs(fa - 4.0 / 4096.0) < 1e-15;
    c.add("pd_fa hand scenario", ok,
          "pd=" + std::to_string(pd) + " fa=" + std::to_string(fa));
  }
  {  // Oracle prob map and chance-level map.
    metrics::Mask g({2, 2});
    g[0] = 1;
    g[3] = 1;
    metrics::ProbMap exact({2, 2});
    exact[0] = 1.f;
    exact[3] = 1.f;
    auto roc1 = metrics::roc_auc({exact}, {g}, {0.5});
    metrics::ProbMap half = metrics::ProbMap::full({2, 2}, 0.5f);
    auto roc2 = metrics::roc_auc({half}, {g}, {0.5});
    bool ok = std::abs(roc1.auc - 1.0) < 1e-12 &&
              std::abs(roc2.auc - 0.5) < 1e-12;
    c.add("roc_auc oracle and chance maps", ok,
          "auc=" + std::to_string(roc1.auc) + "/" + std::to_string(roc2.auc));
  }
  {  // Invariance to strictly monotone transforms.
    Rng rng(3);
    metrics::ProbMap p({8, 8});
    metrics::Mask g({8, 8});
    for (int64_t i = 0; i < p.size(); ++i) {
      p[i] = (float)rng.uniform();
      g[i] = rng.uniform() < 0.2 ? 1 : 0;
    }
    std::vector<double> thr = {0.8, 0.6, 0.4, 0.2};
    auto base = metrics::roc_auc({p}, {g}, thr);
    metrics::ProbMap sq(p.dims);
    for (int64_t i = 0; i < p.size(); ++i) sq[i] = p[i] * p[i];
    std::vector<double> thr2;
    for (double t : thr) thr2.push_back(t * t);
    auto mapped = metrics::roc_auc({sq}, {g}, thr2);
    c.add_tol("roc invariance under monotone transform",
              std::abs(base.auc - mapped.auc), 1e-12);
  }
}

void data_suite(Collector& c) {
  scene::SceneSpec spec;
  {  // Bitwise determinism.
    auto a = scene::gen_frame(spec, Rng(42));
    auto b = scene::gen_frame(spec, Rng(42));
    bool same = a.image.data == b.image.data && a.mask.data == b.mask.data;
    c.add("gen_frame determinism", same, same ? "ok" : "differs");
  }
  {  // Mask-image consistency: component peaks stand out of local background.
    bool ok = true;
    std::string why = "ok";
    for (uint64_t seed = 0; seed < 8 && ok; ++seed) {
      auto s = scene::gen_frame(spec, Rng(seed));
      auto comps = metrics::connected_components(s.mask);
      for (const auto& comp : comps) {
        float peak = 0;
        for (auto [y, x] : comp.pixels)
          peak = std::max(peak, s.image.at(0, y, x));
        // Local background: ring of radius 5..8 around the centroid.
        std::vector<float> ring;
        const int cy = (int)std::lround(comp.cy), cx = (int)std::lround(comp.cx);
        for (int y = std::max(0, cy - 8); y <= std::min(spec.height - 1, cy + 8); ++y)
          for (int x = std::max(0, cx - 8); x <= std::min(spec.width - 1, cx + 8); ++x) {
            const int d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
            if (d2 >= 25 && d2 <= 64) ring.push_back(s.image.at(0, y, x));
          }
        std::sort(ring.begin(), ring.end());
        const float median = ring[ring.size() / 2];
        if (peak - median < 0.8 * spec.amplitude_min) {
          ok = false;
          why = "peak " + std::to_string(peak) + " vs median " +
                std::to_string(median);
        }
      }
    }
    c.add("mask components stand out of background", ok, why);
  }
  {  // Split: disjoint, 80/20.
    auto [tr, te] = scene::split_indices(10, 7);
    bool ok = tr.size() == 8 && te.size() == 2;
    for (int t : te)
      ok = ok && std::find(tr.begin(), tr.end(), t) == tr.end();
    c.add("80/20 split disjoint", ok,
          std::to_string(tr.size()) + "/" + std::to_string(te.size()));
  }
  {  // Sequences: static scene when velocity and flicker are zero.
    scene::SceneSpec s = spec;
    s.velocity_min = s.velocity_max = 0;
    s.flicker_amplitude = 0;
    s.noise_sigma = 0;
    auto clip = scene::gen_sequence(s, Rng(3));
    bool same = true;
    for (size_t f = 1; f < clip.frames.size(); ++f) {
      same = same && clip.frames[f].data == clip.frames[0].data;
      same = same && clip.masks[f].data == clip.masks[0].data;
    }
    c.add("zero-velocity clip is static", same, same ? "ok" : "drifts");
  }
}

void io_suite(Collector& c) {
  namespace fsys = std::filesystem;
  const fsys::path tmp = fsys::temp_directory_path() / "ddn_check_io";
  fsys::create_directories(tmp);
  Rng rng(9);
  {  // Tensor round-trips, both widths.
    Tensor<float> tf({2, 3, 4, 5});
    for (auto& v : tf.data) v = (float)rng.uniform(-2, 2);
    io::write_tensor((tmp / "a.ddn").string(), tf);
    auto back = io::read_tensor<float>((tmp / "a.ddn").string());
    bool ok = back.data == tf.data && back.dims == tf.dims;
    Tensor<double> td({7});
    for (auto& v : td.data) v = rng.uniform(-2, 2);
    io::write_tensor((tmp / "b.ddn").string(), td);
    ok = ok && io::read_tensor<double>((tmp / "b.ddn").string()).data == td.data;
    c.add("tensor file round-trip bitwise", ok, ok ? "ok" : "differs");
  }
  {  // Truncation is detected.
    std::string raw = io::read_text_file((tmp / "a.ddn").string());
    io::write_text_file((tmp / "trunc.ddn").string(),
                        raw.substr(0, raw.size() - 8));
    bool threw = false;
    try {
      io::read_tensor<float>((tmp / "trunc.ddn").string());
    } catch (const Error&) {
      threw = true;
    }
    c.add("tensor truncation detected", threw, threw ? "ok" : "no error");
  }
  {  // PGM round-trip accuracy at both depths.
    Tensor<float> img({8, 8});
    for (auto& v : img.data) v = (float)rng.uniform();
    io::write_pgm((tmp / "x8.pgm").string(), img, 255);
    io::write_pgm((tmp / "x16.pgm").string(), img, 65535);
    auto r8 = io::read_pgm((tmp / "x8.pgm").string());
    auto r16 = io::read_pgm((tmp / "x16.pgm").string());
    double e8 = (double)max_abs_diff(r8, img);
    double e16 = (double)max_abs_diff(r16, img);
    c.add("pgm round-trip error bounds", e8 <= 0.5 / 255 && e16 <= 0.5 / 65535,
          "e8=" + std::to_string(e8) + " e16=" + std::to_string(e16));
  }
  {  // Foreign PGM with comments parses.
    std::string foreign = "P5\n# made elsewhere\n2 2\n# another note\n255\n";
    foreign += std::string("\x10\x20\x30\x40", 4);
    io::write_text_file((tmp / "foreign.pgm").string(), foreign);
    auto img = io::read_pgm((tmp / "foreign.pgm").string());
    bool ok = img.dims == Shape{2, 2} &&
              std::abs(img[0] - 16.0 / 255) < 1e-6;
    c.add("foreign pgm with comments", ok, ok ? "ok" : "parse mismatch");
  }
  {  // save -> load -> save is byte-identical.
    net::ModelConfig cfg;
    cfg.channels = {3, 6};
    cfg.dilations = {1};
    auto params = net::init_params<float>(cfg, 3, net::ModelKind::kSd2net);
    io::Checkpoint ck;
    ck.params = params;
    ck.config = cfg;
    io::save_checkpoint((tmp / "c1.ckpt").string(), ck);
    io::Checkpoint loaded = io::load_checkpoint((tmp / "c1.ckpt").string());
    io::save_checkpoint((tmp / "c2.ckpt").string(), loaded);
    bool same = io::read_text_file((tmp / "c1.ckpt").string()) ==
                io::read_text_file((tmp / "c2.ckpt").string());
    c.add("checkpoint save-load-save byte identical", same,
          same ? "ok" : "differs");
  }
  fsys::remove_all(tmp);
}

using SuiteFn = void (*)(Collector&);

const std::vector<std::pair<std::string, SuiteFn>>& suites() {
  static const std::vector<std::pair<std::string, SuiteFn>> s = {
      {"tensor", tensor_suite},   {"grad", grad_suite},
      {"bdm", bdm_suite},         {"spatial", spatial_suite},
      {"temporal", temporal_suite}, {"network", network_suite},
      {"training", training_suite}, {"metrics", metrics_suite},
      {"data", data_suite},       {"io", io_suite},
  };
  return s;
}

}  // namespace

std::vector<std::string> suite_names() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : suites()) names.push_back(name);
  names.push_back("all");
  return names;
}

std::vector<CheckResult> run_suite(const std::string& suite) {
  Collector c;
  bool found = false;
  for (const auto& [name, fn] : suites()) {
    if (suite == "all" || suite == name) {
      fn(c);
      found = true;
    }
  }
  require(found, "unknown check suite '", suite, "' (available: ",
          [] {
            std::string s;
            for (const auto& n : suite_names()) s += n + " ";
            return s;
          }(),
          ")");
  return c.results;
}

}  // namespace checks
}  // namespace ddn
