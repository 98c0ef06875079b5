#pragma once

#include <optional>
#include <span>
#include <vector>

#include "pointdet/types.hpp"

namespace pointdet {

// The ten IoU thresholds 0.50, 0.55, ..., 0.95.
std::vector<double> coco_iou_thresholds();

struct APSummary {
  std::vector<double> thresholds;
  std::vector<double> per_threshold;  // class-mean AP at each threshold
  double mean = 0.0;                  // mean over thresholds
};

// Interpolated average precision over per-image prediction / ground-truth
// lists (parallel outer vectors = images).
//
// Per class and threshold: predictions are visited in (score desc, image
// asc, insertion asc) order; each is greedily matched to the not-yet-matched
// same-class ground-truth box in its image with the highest IoU >= t. The
// precision envelope is sampled at the 101 recall points 0.00, 0.01, ...,
// 1.00 and averaged. The AP at a threshold averages over the classes that
// appear in the ground truth; with no ground truth anywhere the result is
// nullopt.
std::optional<APSummary> average_precision(
    std::span<const std::vector<LabeledBox>> preds,
    std::span<const std::vector<LabeledBox>> gts,
    std::span<const double> thresholds);

struct PseudoQuality {
  int n_pred = 0;
  int n_gt = 0;
  int tp50 = 0;            // matches at IoU 0.5
  double precision50 = 1.0;  // 1 when there are no predictions
  double recall50 = 1.0;     // 1 when there is no ground truth
  std::optional<double> ap50;
  std::optional<double> ap5095;
};

// Precision / recall of pseudo labels against ground truth at IoU 0.5, plus
// the interpolated APs. Empty predictions give recall 0 (when ground truth
// exists) and precision 1.
PseudoQuality pseudo_label_quality(std::span<const std::vector<LabeledBox>> preds,
                                   std::span<const std::vector<LabeledBox>> gts);

// Six-way error decomposition of a prediction set at IoU 0.5. Every false
// positive lands in exactly one bin, decided in this order against its best
// same-class overlap (iou_same) and best other-class overlap (iou_other):
//   duplicate      iou_same  >= 0.5   (its object is already claimed)
//   classification iou_other >= 0.5
//   localisation   iou_same  in [0.1, 0.5)
//   both           iou_other in [0.1, 0.5)
//   background     otherwise
// A ground-truth box is a miss when it is unmatched and no localisation /
// classification / both error points at it.
struct ErrorDecomposition {
  int classification = 0;
  int localisation = 0;
  int both = 0;
  int duplicate = 0;
  int background = 0;
  int missed = 0;
  int true_positives = 0;

  int false_positives() const {
    return classification + localisation + both + duplicate + background;
  }
};

ErrorDecomposition error_decomposition(std::span<const std::vector<LabeledBox>> preds,
                                       std::span<const std::vector<LabeledBox>> gts);

// Spearman rank correlation between two equal-length samples, with average
// ranks over ties. Zero when either side has no rank variance; throws on
// length mismatch or fewer than two observations.
double spearman_rank(std::span<const double> a, std::span<const double> b);

}  // namespace pointdet
