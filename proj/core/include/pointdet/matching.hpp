#pragma once

#include <span>
#include <utility>
#include <vector>

#include "pointdet/mat.hpp"
#include "pointdet/types.hpp"

namespace pointdet {

struct MatchConfig {
  // Detections with confidence below tau are discarded before matching.
  double tau = 0.05;
  // IoU threshold for class-wise non-maximum suppression.
  double nms_iou = 0.5;
};

// A ProposalSet together with the per-row hard labels and confidences derived
// from its classification logits. Rows whose argmax is the background column
// carry label kBackground; they stay in `proposals` (the losses want them)
// but are never treated as detections.
struct DetectionField {
  ProposalSet proposals;
  std::vector<int> labels;
  std::vector<double> scores;

  std::size_t size() const { return labels.size(); }
  void validate() const;
};

// Derives per-row labels by row-softmax argmax over the C+1 classification
// columns (ties break to the lowest column index). The score of a row is its
// softmax probability at the argmax column.
DetectionField make_labeled_detections(const ProposalSet& ps);

// Class-wise greedy non-maximum suppression. Background rows are removed;
// within each class, rows are visited in (score desc, index asc) order and a
// row is suppressed when its IoU with an already-kept row of the same class
// strictly exceeds `iou_threshold`. Kept rows preserve their input order.
DetectionField apply_nms(const DetectionField& field, double iou_threshold);

// Pairwise matching cost between annotated points and detections:
//   cost(i,j) = [1 - inside(i,j) * same_label(i,j)]
//             + [1 - p_cls(j, label_i) * p_pos(j)]
// where inside() is boundary-inclusive containment of point i in box j,
// p_cls is the row-softmax of s at the point's label and p_pos is the
// row-softmax of s_P at the positive column. Both terms lie in [0,1], so
// entries lie in [0,2]. Result is |points| x |detections|.
Mat build_cost_matrix(std::span<const PointAnnotation> points,
                      const ProposalSet& ps,
                      std::span<const int> det_labels);

// Minimum-cost assignment on a rectangular cost matrix. Only min(rows, cols)
// pairs are produced; the rectangle is squared up internally with an inert
// sentinel value. Among all minimum-cost assignments, returns the one whose
// pair list (sorted by row) is lexicographically smallest. Pairs are
// (row, col), sorted by row.
std::vector<std::pair<int, int>> hungarian_assign(const Mat& cost);

struct MatchedPair {
  int point_index = 0;
  int detection_index = 0;  // index into the raw detections passed in
  double cost = 0.0;
};

struct MatchResult {
  std::vector<MatchedPair> pairs;
  std::vector<int> unmatched_points;    // ascending
  std::vector<LabeledBox> pseudo_boxes;  // one per pair, same order
};

// Full point -> box pseudo-label step: drop background / sub-tau detections,
// assign the rest to points at minimum total cost, then reject any pair
// whose spatial term is 1 (the point lies outside the box or the labels
// disagree). Every point ends up in exactly one of pairs / unmatched_points.
// Each pseudo box copies the matched detection's box and confidence and the
// *point's* label.
MatchResult generate_pseudo_labels(std::span<const PointAnnotation> points,
                                   const DetectionField& raw_dets,
                                   const MatchConfig& cfg);

// Fraction of points left unmatched; 0 when there are no points.
double unmatched_fraction(const MatchResult& result);

}  // namespace pointdet
