#pragma once

// Independent reference implementations used only by the test suites. These
// deliberately avoid the library's own code paths: different algorithms,
// different accumulation order, long double where it helps. When a test
// compares the library against these, agreement is evidence, not tautology.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "pointdet/evaluation.hpp"
#include "pointdet/mat.hpp"
#include "pointdet/types.hpp"

namespace testsupport {

using ldvec = std::vector<long double>;
using ldmat = std::vector<ldvec>;

ldmat to_ld(const pointdet::Mat& m);

// Exhaustive minimum-cost assignment by enumerating every injective map of
// min(rows, cols) pairs. Ties resolve to the lexicographically smallest
// (row, col) list. Exponential; keep dimensions <= 8.
struct BruteAssignment {
  std::vector<std::pair<int, int>> pairs;
  double total = 0.0;
};
BruteAssignment brute_force_assignment(const pointdet::Mat& cost);

// Grid-sampling IoU estimate: cell centres at spacing `cell` over the
// bounding region. Accuracy is O(cell * perimeter / area).
double rasterized_iou(const pointdet::BBox& a, const pointdet::BBox& b, double cell);

// Independent long double forwards of the two multiple-instance losses,
// written directly from the definitions (explicit softmax sums, direct
// products, no log-space shortcuts).
long double image_mil_value(const ldmat& s, const ldmat& s_i, const std::vector<int>& labels);
long double point_mil_value(const ldmat& s, const ldmat& s_p,
                            const std::vector<std::vector<int>>& bags,
                            const std::vector<int>& bag_labels);

// Central finite differences of `f` with respect to each entry of `x`.
pointdet::Mat fd_grad(const std::function<long double(const ldmat&)>& f, const pointdet::Mat& x,
                      long double h);

// Exactly-one-positive bag score by enumerating all 2^K outcome masks;
// contributions only from masks with a single positive member.
long double enumerate_bag_score(std::span<const long double> a, std::span<const long double> p);

// Average precision via independent per-prefix re-matching: for every
// top-k prefix of the sorted predictions the matching is recomputed from
// scratch, and each 101-point sample takes an explicit maximum over the
// operating points instead of a running envelope.
std::optional<pointdet::APSummary> ap_prefix_oracle(
    std::span<const std::vector<pointdet::LabeledBox>> preds,
    std::span<const std::vector<pointdet::LabeledBox>> gts, std::span<const double> thresholds);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

// Random proposal fixture shared across suites: n boxes in a w x h scene
// with logits drawn uniformly from [-logit_range, logit_range].
pointdet::ProposalSet random_proposals(std::mt19937_64& rng, std::size_t n, int num_classes,
                                       double logit_range, double scene_w = 100.0,
                                       double scene_h = 100.0);

}  // namespace testsupport
