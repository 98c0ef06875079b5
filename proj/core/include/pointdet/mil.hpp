#pragma once

#include <optional>
#include <span>
#include <vector>

#include "pointdet/mat.hpp"
#include "pointdet/types.hpp"

namespace pointdet {

// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before entering
// a log so the losses stay finite for any finite logits.
inline constexpr double kProbClamp = 1e-12;

struct LossWeights {
  double lambda1 = 1.0;   // image-level multiple-instance term
  double lambda2 = 0.05;  // point-level multiple-instance term
};

// Binary image-level class presence derived from point annotations:
// out[c] = 1 iff some point carries label c. Size C.
std::vector<int> derive_image_labels(std::span<const PointAnnotation> points, int num_classes);

// Image-level class evidence phi_c = sum_i rowsoftmax(s)(i,c) * colsoftmax(s_I)(i,c),
// c over the C foreground classes. Each phi_c lies in (0,1) for finite
// logits: the row term is < 1 (background column) and the column term sums
// to 1 over proposals. Empty proposal sets yield all zeros.
std::vector<double> image_class_scores(const ProposalSet& ps);

struct ImageMILResult {
  double value = 0.0;
  std::vector<double> phi;  // class scores, size C
  Mat d_s;                  // dL/ds,   N x (C+1)
  Mat d_s_I;                // dL/ds_I, N x C
};

// Binary cross-entropy between phi and the 0/1 image labels, summed over
// classes, with analytic gradients with respect to both logit heads.
// With no proposals the loss is the BCE of phi = 0 against the labels
// (clamped), and the gradients are empty.
ImageMILResult image_mil_loss(const ProposalSet& ps, std::span<const int> image_labels);

// bags[i] lists, ascending, the detections whose box contains point i
// (boundary inclusive) and whose label equals the point's label. Background
// rows never enter a bag.
std::vector<std::vector<int>> build_bags(std::span<const PointAnnotation> points,
                                         const ProposalSet& ps,
                                         std::span<const int> det_labels);

// Probability that exactly one member of the bag is the true positive:
//   phi = sum_k a_k * p_k * prod_{m != k} q_m
// with a_k the (treated-as-constant) classification probability at the
// member's label, p_k / q_k the positive / negative row-softmax of s_P.
// Evaluated in log space via logsumexp. Empty bags have no score.
std::optional<double> point_bag_score(const ProposalSet& ps,
                                      std::span<const int> bag,
                                      int bag_label);

struct PointMILResult {
  double value = 0.0;
  int active_bags = 0;                           // bags that were non-empty
  std::vector<std::optional<double>> bag_scores;  // per input bag
  Mat d_s_P;                                     // dL/ds_P, N x 2
};

// Mean negative log bag score over non-empty bags; bag_labels[i] is the
// class of bag i's point. The classification probabilities a_k act as
// constants, so the only gradient is through s_P; d_s and d_s_I are
// identically zero by construction and are not returned. All-empty input
// yields value 0 and a zero gradient.
PointMILResult point_mil_loss(const ProposalSet& ps,
                              const std::vector<std::vector<int>>& bags,
                              std::span<const int> bag_labels);

struct TotalLossResult {
  double value = 0.0;
  double l_det = 0.0;
  double l_img = 0.0;
  double l_pt = 0.0;
  Mat d_s;
  Mat d_s_I;
  Mat d_s_P;
};

// L = l_det + lambda1 * image + lambda2 * point, with the logit gradients
// combined under the same weights. The detection term arrives as a plain
// scalar; its own parameter gradients are the caller's business.
TotalLossResult total_loss(double l_det,
                           const ImageMILResult& image,
                           const PointMILResult& point,
                           const LossWeights& w);

}  // namespace pointdet
