#include "pointdet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace pointdet {

std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.50 + 0.05 * i);
  return t;
}

namespace {

struct FlatPred {
  int image = 0;
  int index = 0;  // insertion index within the image
  const LabeledBox* box = nullptr;
};

// Visit order shared by every metric here: score desc, then image asc, then
// insertion asc. Deterministic for any input.
std::vector<FlatPred> flatten_sorted(std::span<const std::vector<LabeledBox>> preds, int label) {
  std::vector<FlatPred> flat;
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (std::size_t k = 0; k < preds[i].size(); ++k)
      if (preds[i][k].label == label) flat.push_back({static_cast<int>(i), static_cast<int>(k),
                                                      &preds[i][k]});
  std::stable_sort(flat.begin(), flat.end(), [](const FlatPred& a, const FlatPred& b) {
    if (a.box->score != b.box->score) return a.box->score > b.box->score;
    if (a.image != b.image) return a.image < b.image;
    return a.index < b.index;
  });
  return flat;
}

// Greedy matching of one class at one threshold. Returns the per-prediction
// true-positive flags in visit order plus the number of ground-truth boxes.
struct ClassMatch {
  std::vector<char> tp;
  std::size_t n_gt = 0;
};

ClassMatch match_class(const std::vector<FlatPred>& flat,
                       std::span<const std::vector<LabeledBox>> gts, int label,
                       double threshold) {
  ClassMatch out;
  std::vector<std::vector<int>> gt_idx(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i)
    for (std::size_t k = 0; k < gts[i].size(); ++k)
      if (gts[i][k].label == label) {
        gt_idx[i].push_back(static_cast<int>(k));
        ++out.n_gt;
      }
  std::vector<std::set<int>> taken(gts.size());
  out.tp.assign(flat.size(), 0);
  for (std::size_t p = 0; p < flat.size(); ++p) {
    const auto& fp = flat[p];
    double best = 0.0;
    int best_k = -1;
    for (int k : gt_idx[static_cast<std::size_t>(fp.image)]) {
      if (taken[static_cast<std::size_t>(fp.image)].count(k)) continue;
      const double v = iou(fp.box->box, gts[fp.image][static_cast<std::size_t>(k)].box);
      if (v >= threshold && v > best) {
        best = v;
        best_k = k;
      }
    }
    if (best_k >= 0) {
      out.tp[p] = 1;
      taken[static_cast<std::size_t>(fp.image)].insert(best_k);
    }
  }
  return out;
}

// 101-point interpolated AP from cumulative true-positive flags.
double interpolated_ap(const std::vector<char>& tp, std::size_t n_gt) {
  const std::size_t n = tp.size();
  std::vector<double> precision(n), recall(n);
  std::size_t cum = 0;
  for (std::size_t k = 0; k < n; ++k) {
    cum += tp[k] ? 1u : 0u;
    precision[k] = static_cast<double>(cum) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(cum) / static_cast<double>(n_gt);
  }
  // Right-to-left precision envelope.
  std::vector<double> env(precision);
  for (std::size_t k = n; k-- > 1;) env[k - 1] = std::max(env[k - 1], env[k]);

  double total = 0.0;
  std::size_t k = 0;
  for (int r = 0; r <= 100; ++r) {
    const double target = static_cast<double>(r) / 100.0;
    while (k < n && recall[k] < target) ++k;
    if (k < n) total += env[k];
  }
  return total / 101.0;
}

std::vector<int> gt_labels(std::span<const std::vector<LabeledBox>> gts) {
  std::set<int> labels;
  for (const auto& img : gts)
    for (const auto& b : img) labels.insert(b.label);
  return {labels.begin(), labels.end()};
}

}  // namespace

std::optional<APSummary> average_precision(std::span<const std::vector<LabeledBox>> preds,
                                           std::span<const std::vector<LabeledBox>> gts,
                                           std::span<const double> thresholds) {
  if (preds.size() != gts.size())
    throw std::invalid_argument("average_precision: image count mismatch");
  const std::vector<int> labels = gt_labels(gts);
  if (labels.empty()) return std::nullopt;

  APSummary out;
  out.thresholds.assign(thresholds.begin(), thresholds.end());
  for (double t : thresholds) {
    double sum = 0.0;
    for (int label : labels) {
      const auto flat = flatten_sorted(preds, label);
      const ClassMatch m = match_class(flat, gts, label, t);
      sum += interpolated_ap(m.tp, m.n_gt);
    }
    out.per_threshold.push_back(sum / static_cast<double>(labels.size()));
  }
  double total = 0.0;
  for (double v : out.per_threshold) total += v;
  out.mean = out.per_threshold.empty() ? 0.0 : total / static_cast<double>(out.per_threshold.size());
  return out;
}

PseudoQuality pseudo_label_quality(std::span<const std::vector<LabeledBox>> preds,
                                   std::span<const std::vector<LabeledBox>> gts) {
  if (preds.size() != gts.size())
    throw std::invalid_argument("pseudo_label_quality: image count mismatch");
  PseudoQuality q;
  for (const auto& img : preds) q.n_pred += static_cast<int>(img.size());
  for (const auto& img : gts) q.n_gt += static_cast<int>(img.size());

  for (int label : gt_labels(gts)) {
    const auto flat = flatten_sorted(preds, label);
    const ClassMatch m = match_class(flat, gts, label, 0.5);
    for (char f : m.tp) q.tp50 += f ? 1 : 0;
  }
  q.precision50 = q.n_pred == 0 ? 1.0 : static_cast<double>(q.tp50) / q.n_pred;
  q.recall50 = q.n_gt == 0 ? 1.0 : static_cast<double>(q.tp50) / q.n_gt;

  const auto thresholds = coco_iou_thresholds();
  if (auto ap = average_precision(preds, gts, thresholds)) {
    q.ap50 = ap->per_threshold.front();
    q.ap5095 = ap->mean;
  }
  return q;
}

ErrorDecomposition error_decomposition(std::span<const std::vector<LabeledBox>> preds,
                                       std::span<const std::vector<LabeledBox>> gts) {
  if (preds.size() != gts.size())
    throw std::invalid_argument("error_decomposition: image count mismatch");
  ErrorDecomposition out;

  // Matched ground truth under the same greedy rule the AP uses.
  std::vector<std::vector<char>> gt_matched(gts.size());
  std::vector<std::vector<char>> pred_tp(preds.size());
  for (std::size_t i = 0; i < gts.size(); ++i) gt_matched[i].assign(gts[i].size(), 0);
  for (std::size_t i = 0; i < preds.size(); ++i) pred_tp[i].assign(preds[i].size(), 0);

  for (int label : gt_labels(gts)) {
    const auto flat = flatten_sorted(preds, label);
    std::vector<std::set<int>> taken(gts.size());
    for (const auto& fp : flat) {
      double best = 0.0;
      int best_k = -1;
      const auto& img_gt = gts[static_cast<std::size_t>(fp.image)];
      for (std::size_t k = 0; k < img_gt.size(); ++k) {
        if (img_gt[k].label != label) continue;
        if (taken[static_cast<std::size_t>(fp.image)].count(static_cast<int>(k))) continue;
        const double v = iou(fp.box->box, img_gt[k].box);
        if (v >= 0.5 && v > best) {
          best = v;
          best_k = static_cast<int>(k);
        }
      }
      if (best_k >= 0) {
        taken[static_cast<std::size_t>(fp.image)].insert(best_k);
        gt_matched[static_cast<std::size_t>(fp.image)][static_cast<std::size_t>(best_k)] = 1;
        pred_tp[static_cast<std::size_t>(fp.image)][static_cast<std::size_t>(fp.index)] = 1;
        ++out.true_positives;
      }
    }
  }

  // Classify every false positive; remember which ground truth each
  // localisation / classification / both error points at.
  std::vector<std::vector<char>> implicated(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i) implicated[i].assign(gts[i].size(), 0);

  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (std::size_t k = 0; k < preds[i].size(); ++k) {
      if (pred_tp[i][k]) continue;
      const LabeledBox& p = preds[i][k];
      double iou_same = 0.0, iou_other = 0.0;
      int arg_same = -1, arg_other = -1;
      for (std::size_t g = 0; g < gts[i].size(); ++g) {
        const double v = iou(p.box, gts[i][g].box);
        if (gts[i][g].label == p.label) {
          if (v > iou_same) {
            iou_same = v;
            arg_same = static_cast<int>(g);
          }
        } else if (v > iou_other) {
          iou_other = v;
          arg_other = static_cast<int>(g);
        }
      }
      if (iou_same >= 0.5) {
        ++out.duplicate;
      } else if (iou_other >= 0.5) {
        ++out.classification;
        implicated[i][static_cast<std::size_t>(arg_other)] = 1;
      } else if (iou_same >= 0.1) {
        ++out.localisation;
        implicated[i][static_cast<std::size_t>(arg_same)] = 1;
      } else if (iou_other >= 0.1) {
        ++out.both;
        implicated[i][static_cast<std::size_t>(arg_other)] = 1;
      } else {
        ++out.background;
      }
    }
  }

  for (std::size_t i = 0; i < gts.size(); ++i)
    for (std::size_t g = 0; g < gts[i].size(); ++g)
      if (!gt_matched[i][g] && !implicated[i][g]) ++out.missed;
  return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman_rank(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman_rank: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("spearman_rank: need at least two samples");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) { ma += ra[i]; mb += rb[i]; }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace pointdet
