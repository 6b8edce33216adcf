#include "ddn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

namespace ddn {
namespace metrics {

namespace {

void check_mask(const Mask& m, const char* what) {
  require(m.rank() == 2, what, ": mask must be rank 2 [H,W], got ",
          shape_str(m.dims));
  for (int64_t i = 0; i < m.size(); ++i)
    require(m[i] == 0 || m[i] == 1, what, ": mask values must be 0/1");
}

void check_pair_list(const std::vector<Mask>& preds,
                     const std::vector<Mask>& gts, const char* what) {
  require(preds.size() == gts.size(), what, ": got ", preds.size(),
          " predictions vs ", gts.size(), " ground truths");
  for (size_t i = 0; i < preds.size(); ++i)
    require(preds[i].dims == gts[i].dims, what, ": image ", i,
            " dimension mismatch ", shape_str(preds[i].dims), " vs ",
            shape_str(gts[i].dims));
}

}  // namespace

std::vector<Component> connected_components(const Mask& mask) {
  check_mask(mask, "connected_components");
  const int h = mask.dim(0), w = mask.dim(1);
  std::vector<uint8_t> seen((size_t)h * w, 0);
  std::vector<Component> out;
  std::deque<std::pair<int, int>> queue;
  for (int sy = 0; sy < h; ++sy) {
    for (int sx = 0; sx < w; ++sx) {
      if (!mask[(int64_t)sy * w + sx] || seen[(size_t)sy * w + sx]) continue;
      Component comp;
      seen[(size_t)sy * w + sx] = 1;
      queue.push_back({sy, sx});
      while (!queue.empty()) {
        auto [y, x] = queue.front();
        queue.pop_front();
        comp.pixels.push_back({y, x});
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            if (!mask[(int64_t)ny * w + nx] || seen[(size_t)ny * w + nx])
              continue;
            seen[(size_t)ny * w + nx] = 1;
            queue.push_back({ny, nx});
          }
      }
      double sy_sum = 0, sx_sum = 0;
      for (auto [y, x] : comp.pixels) {
        sy_sum += y;
        sx_sum += x;
      }
      comp.cy = sy_sum / comp.pixels.size();
      comp.cx = sx_sum / comp.pixels.size();
      out.push_back(std::move(comp));
    }
  }
  return out;
}

double miou(const std::vector<Mask>& preds, const std::vector<Mask>& gts) {
  check_pair_list(preds, gts, "miou");
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    const Mask& p = preds[i];
    const Mask& g = gts[i];
    for (int64_t k = 0; k < p.size(); ++k) {
      inter += (p[k] && g[k]);
      uni += (p[k] || g[k]);
    }
  }
  return uni == 0 ? 1.0 : (double)inter / (double)uni;
}

PdFa pd_fa(const std::vector<Mask>& preds, const std::vector<Mask>& gts,
           double match_dist) {
  check_pair_list(preds, gts, "pd_fa");
  int64_t gt_total = 0, detected = 0;
  int64_t false_pixels = 0, total_pixels = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    total_pixels += preds[i].size();
    auto pred_comps = connected_components(preds[i]);
    auto gt_comps = connected_components(gts[i]);
    gt_total += (int64_t)gt_comps.size();

    // All centroid pairs within range, matched greedily by distance. Ties
    // break on (gt index, pred index) so the matching is deterministic.
    struct Cand {
      double dist;
      int gt, pred;
    };
    std::vector<Cand> cands;
    for (size_t gi = 0; gi < gt_comps.size(); ++gi)
      for (size_t pi = 0; pi < pred_comps.size(); ++pi) {
        const double dy = gt_comps[gi].cy - pred_comps[pi].cy;
        const double dx = gt_comps[gi].cx - pred_comps[pi].cx;
        const double d = std::sqrt(dy * dy + dx * dx);
        if (d <= match_dist) cands.push_back({d, (int)gi, (int)pi});
      }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.dist != b.dist) return a.dist < b.dist;
      if (a.gt != b.gt) return a.gt < b.gt;
      return a.pred < b.pred;
    });
    std::vector<uint8_t> gt_used(gt_comps.size(), 0);
    std::vector<uint8_t> pred_used(pred_comps.size(), 0);
    for (const Cand& c : cands) {
      if (gt_used[c.gt] || pred_used[c.pred]) continue;
      gt_used[c.gt] = 1;
      pred_used[c.pred] = 1;
      ++detected;
    }
    for (size_t pi = 0; pi < pred_comps.size(); ++pi)
      if (!pred_used[pi]) false_pixels += (int64_t)pred_comps[pi].pixels.size();
  }
  PdFa out;
  out.pd = gt_total == 0 ? 1.0 : (double)detected / (double)gt_total;
  out.fa = total_pixels == 0 ? 0.0
                             : (double)false_pixels / (double)total_pixels;
  return out;
}

Roc roc_auc(const std::vector<ProbMap>& prob_maps,
            const std::vector<Mask>& gts,
            const std::vector<double>& thresholds) {
  require(prob_maps.size() == gts.size(), "roc_auc: got ", prob_maps.size(),
          " probability maps vs ", gts.size(), " ground truths");
  require(!thresholds.empty(), "roc_auc: need at least one threshold");
  for (size_t i = 1; i < thresholds.size(); ++i)
    require(thresholds[i] < thresholds[i - 1],
            "roc_auc: thresholds must be strictly descending");
  for (size_t i = 0; i < prob_maps.size(); ++i) {
    require(prob_maps[i].dims == gts[i].dims, "roc_auc: image ", i,
            " dimension mismatch");
    for (int64_t k = 0; k < prob_maps[i].size(); ++k)
      require(prob_maps[i][k] >= 0.f && prob_maps[i][k] <= 1.f,
              "roc_auc: probability outside [0,1]");
  }

  int64_t pos = 0, neg = 0;
  for (const Mask& g : gts)
    for (int64_t k = 0; k < g.size(); ++k) g[k] ? ++pos : ++neg;

  Roc roc;
  roc.points.push_back({0.0, 0.0});
  for (double thr : thresholds) {
    int64_t tp = 0, fp = 0;
    for (size_t i = 0; i < prob_maps.size(); ++i) {
      const ProbMap& p = prob_maps[i];
      const Mask& g = gts[i];
      for (int64_t k = 0; k < p.size(); ++k) {
        if (p[k] >= thr)
          g[k] ? ++tp : ++fp;
      }
    }
    roc.points.push_back({neg == 0 ? 0.0 : (double)fp / (double)neg,
                          pos == 0 ? 0.0 : (double)tp / (double)pos});
  }
  roc.points.push_back({1.0, 1.0});
  std::sort(roc.points.begin(), roc.points.end(),
            [](const RocPoint& a, const RocPoint& b) {
              if (a.fpr != b.fpr) return a.fpr < b.fpr;
              return a.tpr < b.tpr;
            });
  double auc = 0;
  for (size_t i = 1; i < roc.points.size(); ++i)
    auc += (roc.points[i].fpr - roc.points[i - 1].fpr) *
           (roc.points[i].tpr + roc.points[i - 1].tpr) / 2.0;
  roc.auc = auc;
  return roc;
}

Mask binarize(const ProbMap& probs, double threshold) {
  Mask m(probs.dims);
  for (int64_t i = 0; i < probs.size(); ++i)
    m[i] = probs[i] >= threshold ? 1 : 0;
  return m;
}

MetricsReport evaluate(const std::vector<ProbMap>& prob_maps,
                       const std::vector<Mask>& gts, double threshold,
                       double match_dist,
                       const std::vector<double>& roc_thresholds) {
  std::vector<Mask> preds;
  preds.reserve(prob_maps.size());
  for (const auto& p : prob_maps) preds.push_back(binarize(p, threshold));
  MetricsReport report;
  report.threshold = threshold;
  report.miou = miou(preds, gts);
  PdFa pf = pd_fa(preds, gts, match_dist);
  report.pd = pf.pd;
  report.fa = pf.fa;
  Roc roc = roc_auc(prob_maps, gts, roc_thresholds);
  report.roc_points = std::move(roc.points);
  report.auc = roc.auc;
  return report;
}

std::vector<double> default_roc_thresholds(int count) {
  require(count >= 1, "roc thresholds: count must be >= 1");
  std::vector<double> t(count);
  for (int i = 0; i < count; ++i)
    t[i] = (double)(count - i) / (double)(count + 1);
  return t;
}

std::string MetricsReport::to_text() const {
  std::ostringstream os;
  os << "mIoU      " << miou << "\n";
  os << "Pd        " << pd << "\n";
  os << "Fa        " << fa << " (" << fa * 1e6 << " x1e-6)\n";
  os << "AUC       " << auc << "\n";
  os << "threshold " << threshold << "\n";
  return os.str();
}

std::string MetricsReport::to_key_values() const {
  std::ostringstream os;
  os.precision(17);
  os << "miou=" << miou << "\n";
  os << "pd=" << pd << "\n";
  os << "fa=" << fa << "\n";
  os << "auc=" << auc << "\n";
  os << "threshold=" << threshold << "\n";
  return os.str();
}

}  // namespace metrics
}  // namespace ddn
