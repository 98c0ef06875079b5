#include "pointdet/matching.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "pointdet/softmax.hpp"

namespace pointdet {

void DetectionField::validate() const {
  proposals.validate();
  if (labels.size() != proposals.size() || scores.size() != proposals.size())
    throw std::invalid_argument("DetectionField: label/score count disagrees with proposals");
  const int c = proposals.num_classes();
  for (int l : labels)
    if (l != kBackground && (l < 0 || l >= c))
      throw std::invalid_argument("DetectionField: label out of range");
}

DetectionField make_labeled_detections(const ProposalSet& ps) {
  ps.validate();
  DetectionField out;
  out.proposals = ps;
  const Mat prob = softmax_rows(ps.s);
  const int c = ps.num_classes();
  out.labels.reserve(ps.size());
  out.scores.reserve(ps.size());
  for (std::size_t r = 0; r < ps.size(); ++r) {
    const auto row = prob.row(r);
    const std::size_t arg = std::max_element(row.begin(), row.end()) - row.begin();
    out.labels.push_back(arg == static_cast<std::size_t>(c) ? kBackground
                                                            : static_cast<int>(arg));
    out.scores.push_back(row[arg]);
  }
  return out;
}

namespace {

DetectionField select_rows(const DetectionField& field, const std::vector<int>& keep) {
  DetectionField out;
  const ProposalSet& ps = field.proposals;
  const std::size_t k = keep.size();
  out.proposals.boxes.reserve(k);
  out.proposals.s = Mat(k, ps.s.cols());
  out.proposals.s_I = Mat(k, ps.s_I.cols());
  out.proposals.s_P = Mat(k, ps.s_P.cols());
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t src = static_cast<std::size_t>(keep[r]);
    out.proposals.boxes.push_back(ps.boxes[src]);
    std::copy(ps.s.row(src).begin(), ps.s.row(src).end(), out.proposals.s.row(r).begin());
    std::copy(ps.s_I.row(src).begin(), ps.s_I.row(src).end(), out.proposals.s_I.row(r).begin());
    std::copy(ps.s_P.row(src).begin(), ps.s_P.row(src).end(), out.proposals.s_P.row(r).begin());
    out.labels.push_back(field.labels[src]);
    out.scores.push_back(field.scores[src]);
  }
  return out;
}

}  // namespace

DetectionField apply_nms(const DetectionField& field, double iou_threshold) {
  field.validate();
  const std::size_t n = field.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (field.scores[a] != field.scores[b]) return field.scores[a] > field.scores[b];
    return a < b;
  });
  std::vector<char> kept(n, 0);
  std::vector<int> kept_order;
  for (int idx : order) {
    if (field.labels[idx] == kBackground) continue;
    bool suppressed = false;
    for (int prev : kept_order) {
      if (field.labels[prev] != field.labels[idx]) continue;
      if (iou(field.proposals.boxes[prev], field.proposals.boxes[idx]) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) {
      kept_order.push_back(idx);
      kept[idx] = 1;
    }
  }
  std::vector<int> keep;
  for (std::size_t r = 0; r < n; ++r)
    if (kept[r]) keep.push_back(static_cast<int>(r));
  return select_rows(field, keep);
}

Mat build_cost_matrix(std::span<const PointAnnotation> points,
                      const ProposalSet& ps,
                      std::span<const int> det_labels) {
  ps.validate();
  if (det_labels.size() != ps.size())
    throw std::invalid_argument("build_cost_matrix: label count disagrees with proposals");
  const int c = ps.num_classes();
  for (const auto& pt : points)
    if (pt.label < 0 || pt.label >= c)
      throw std::invalid_argument("build_cost_matrix: point label out of range");

  const Mat cls = softmax_rows(ps.s);
  const Mat pos = softmax_rows(ps.s_P);
  Mat cost(points.size(), ps.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = 0; j < ps.size(); ++j) {
      const bool inside = contains(ps.boxes[j], points[i].p);
      const bool same = det_labels[j] == points[i].label;
      const double spatial = (inside && same) ? 0.0 : 1.0;
      const double quality = cls(j, points[i].label) * pos(j, 1);
      cost(i, j) = spatial + (1.0 - quality);
    }
  }
  return cost;
}

MatchResult generate_pseudo_labels(std::span<const PointAnnotation> points,
                                   const DetectionField& raw_dets,
                                   const MatchConfig& cfg) {
  raw_dets.validate();
  MatchResult out;
  if (points.empty()) return out;

  std::vector<int> survivors;
  for (std::size_t j = 0; j < raw_dets.size(); ++j)
    if (raw_dets.labels[j] != kBackground && raw_dets.scores[j] >= cfg.tau)
      survivors.push_back(static_cast<int>(j));

  if (survivors.empty()) {
    out.unmatched_points.resize(points.size());
    std::iota(out.unmatched_points.begin(), out.unmatched_points.end(), 0);
    return out;
  }

  const DetectionField sub = select_rows(raw_dets, survivors);
  const Mat cost = build_cost_matrix(points, sub.proposals, sub.labels);
  const auto pairs = hungarian_assign(cost);

  std::vector<char> matched(points.size(), 0);
  for (const auto& [pi, sj] : pairs) {
    const auto& pt = points[static_cast<std::size_t>(pi)];
    const bool inside = contains(sub.proposals.boxes[sj], pt.p);
    const bool same = sub.labels[sj] == pt.label;
    if (!(inside && same)) continue;  // spatial term is 1: reject the pair
    MatchedPair mp;
    mp.point_index = pi;
    mp.detection_index = survivors[static_cast<std::size_t>(sj)];
    mp.cost = cost(pi, sj);
    out.pairs.push_back(mp);
    out.pseudo_boxes.push_back({sub.proposals.boxes[sj], pt.label, sub.scores[sj]});
    matched[static_cast<std::size_t>(pi)] = 1;
  }
  for (std::size_t i = 0; i < points.size(); ++i)
    if (!matched[i]) out.unmatched_points.push_back(static_cast<int>(i));
  return out;
}

double unmatched_fraction(const MatchResult& result) {
  const std::size_t n = result.pairs.size() + result.unmatched_points.size();
  if (n == 0) return 0.0;
  return static_cast<double>(result.unmatched_points.size()) / static_cast<double>(n);
}

}  // namespace pointdet
