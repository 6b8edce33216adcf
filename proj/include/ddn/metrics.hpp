#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ddn/tensor.hpp"

// Detection-oriented evaluation: dataset-accumulated IoU, target-level
// probability of detection / pixel-level false-alarm rate, and the pixel-level
// ROC curve with its trapezoidal AUC.

namespace ddn {
namespace metrics {

using Mask = Tensor<uint8_t>;      // [H,W], values 0/1
using ProbMap = Tensor<float>;     // [H,W], values in [0,1]

struct Component {
  std::vector<std::pair<int, int>> pixels;  // (y,x) in scan order
  double cy = 0, cx = 0;                    // centroid (mean of coordinates)
};

// 8-connectivity labeling; component order and member order follow scan
// order, so the result is deterministic.
std::vector<Component> connected_components(const Mask& mask);

// Dataset-level IoU: sum of intersections over sum of unions. A dataset with
// an empty overall union scores 1.
double miou(const std::vector<Mask>& preds, const std::vector<Mask>& gts);

struct PdFa {
  double pd = 0;  // detected gt components / total gt components
  double fa = 0;  // pixels of unmatched predicted components / total pixels
};

// A gt component counts as detected when a predicted component's centroid
// lies within match_dist of its centroid, matched one-to-one greedily by
// ascending distance.
PdFa pd_fa(const std::vector<Mask>& preds, const std::vector<Mask>& gts,
           double match_dist = 3.0);

struct RocPoint {
  double fpr = 0;
  double tpr = 0;
};

struct Roc {
  std::vector<RocPoint> points;  // sorted by fpr, endpoints (0,0) and (1,1)
  double auc = 0;
};

// Pixel-level TPR/FPR swept over the given thresholds (must be strictly
// descending); AUC by trapezoid over the closed curve.
Roc roc_auc(const std::vector<ProbMap>& prob_maps,
            const std::vector<Mask>& gts,
            const std::vector<double>& thresholds);

struct MetricsReport {
  double miou = 0;
  double pd = 0;
  double fa = 0;
  std::vector<RocPoint> roc_points;
  double auc = 0;
  double threshold = 0.5;

  std::string to_text() const;       // human-readable block
  std::string to_key_values() const; // machine-readable key=value lines
};

MetricsReport evaluate(const std::vector<ProbMap>& prob_maps,
                       const std::vector<Mask>& gts, double threshold,
                       double match_dist,
                       const std::vector<double>& roc_thresholds);

std::vector<double> default_roc_thresholds(int count = 99);

Mask binarize(const ProbMap& probs, double threshold);

}  // namespace metrics
}  // namespace ddn
