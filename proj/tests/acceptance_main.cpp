// Release gate: thirteen behavioural contracts checked end to end against
// independent oracles, a fixed synthetic benchmark and the installed
// command line tool. One line per contract, nonzero exit on any failure.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "pointdet/augment.hpp"
#include "pointdet/datasets.hpp"
#include "pointdet/evaluation.hpp"
#include "pointdet/geometry.hpp"
#include "pointdet/io.hpp"
#include "pointdet/matching.hpp"
#include "pointdet/mil.hpp"
#include "pointdet/rng.hpp"
#include "pointdet/sim.hpp"
#include "pointdet/types.hpp"
#include "support/oracles.hpp"

using namespace pointdet;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double elapsed(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string str(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

void fail(Outcome& o, const std::string& why) {
  o.pass = false;
  o.detail += o.detail.empty() ? why : "; " + why;
}

// ------------------------------------------------------------------ 1 ----
// Assignment totals match exhaustive enumeration on 1000 small matrices;
// the pair lists themselves must also agree (both sides promise the
// lexicographically smallest optimum).

Outcome assignment_optimality() {
  const auto t0 = Clock::now();
  auto rng = make_rng(9101);
  std::uniform_int_distribution<int> dim(1, 7);
  std::uniform_real_distribution<double> unit(0.0, 2.0);
  std::uniform_real_distribution<double> wide(-5.0, 5.0);
  std::uniform_int_distribution<int> grid(0, 8);

  Outcome o;
  double worst = 0.0;
  int pair_mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const int rows = dim(rng), cols = dim(rng);
    Mat cost(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        // every third matrix is drawn from a coarse grid so optima tie often
        cost(r, c) = t % 3 == 0 ? unit(rng) : t % 3 == 1 ? wide(rng) : grid(rng) * 0.25;
      }
    const auto pairs = hungarian_assign(cost);
    const auto want = testsupport::brute_force_assignment(cost);
    double total = 0.0;
    for (const auto& [r, c] : pairs) total += cost(r, c);
    worst = std::max(worst, std::abs(total - want.total));
    if (pairs != want.pairs) ++pair_mismatches;
  }
  const double secs = elapsed(t0);
  if (worst > 1e-12) fail(o, "total cost off by " + str("%.3g", worst));
  if (pair_mismatches > 0) fail(o, std::to_string(pair_mismatches) + " pair-list mismatches");
  if (secs >= 5.0) fail(o, "took " + str("%.1f", secs) + " s (budget 5)");
  o.detail = "1000 matrices <= 7x7, max |dCost| " + str("%.1e", worst) + ", pairs identical, " +
             str("%.2f", secs) + " s" + (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

// ------------------------------------------------------------------ 2 ----
// Analytic gradients of both losses against long-double central differences
// of the independent forward implementations.

bool grad_close(double a, double b, double& worst_rel, double& worst_abs) {
  if (std::abs(a) > 1e-8) {
    const double rel = std::abs(a - b) / std::abs(a);
    worst_rel = std::max(worst_rel, rel);
    return rel < 1e-6;
  }
  const double abs = std::abs(a - b);
  worst_abs = std::max(worst_abs, abs);
  return abs < 1e-9;
}

Outcome gradient_exactness() {
  const auto t0 = Clock::now();
  auto rng = make_rng(9202);
  std::uniform_int_distribution<int> nd(1, 12), cd(1, 6), kd(0, 5);
  std::uniform_real_distribution<double> coord(0.0, 100.0);
  std::bernoulli_distribution half(0.5);

  Outcome o;
  double worst_rel = 0.0, worst_abs = 0.0;
  int bad = 0;
  for (int t = 0; t < 100; ++t) {
    const int n = nd(rng), C = cd(rng);
    const ProposalSet ps = testsupport::random_proposals(rng, n, C, 6.0);
    std::vector<int> labels(C);
    for (int c = 0; c < C; ++c) labels[c] = half(rng) ? 1 : 0;

    std::vector<PointAnnotation> points;
    std::uniform_int_distribution<int> lab(0, C - 1);
    const int n_pts = kd(rng);
    for (int i = 0; i < n_pts; ++i) points.push_back({{coord(rng), coord(rng)}, lab(rng)});
    const auto dets = make_labeled_detections(ps);
    const auto bags = build_bags(points, ps, dets.labels);
    std::vector<int> bag_labels;
    for (const auto& p : points) bag_labels.push_back(p.label);

    const auto sld = testsupport::to_ld(ps.s);
    const auto ild = testsupport::to_ld(ps.s_I);

    const auto img = image_mil_loss(ps, labels);
    const Mat fd_s = testsupport::fd_grad(
        [&](const testsupport::ldmat& m) { return testsupport::image_mil_value(m, ild, labels); },
        ps.s, 1e-6L);
    const Mat fd_si = testsupport::fd_grad(
        [&](const testsupport::ldmat& m) { return testsupport::image_mil_value(sld, m, labels); },
        ps.s_I, 1e-6L);
    const auto pt = point_mil_loss(ps, bags, bag_labels);
    const Mat fd_sp = testsupport::fd_grad(
        [&](const testsupport::ldmat& m) {
          return testsupport::point_mil_value(sld, m, bags, bag_labels);
        },
        ps.s_P, 1e-6L);

    for (std::size_t r = 0; r < ps.size(); ++r) {
      for (int c = 0; c <= C; ++c)
        if (!grad_close(img.d_s(r, c), fd_s(r, c), worst_rel, worst_abs)) ++bad;
      for (int c = 0; c < C; ++c)
        if (!grad_close(img.d_s_I(r, c), fd_si(r, c), worst_rel, worst_abs)) ++bad;
      for (int c = 0; c < 2; ++c)
        if (!grad_close(pt.d_s_P(r, c), fd_sp(r, c), worst_rel, worst_abs)) ++bad;
    }
  }
  const double secs = elapsed(t0);
  if (bad > 0) fail(o, std::to_string(bad) + " entries out of tolerance");
  if (secs >= 10.0) fail(o, "took " + str("%.1f", secs) + " s (budget 10)");
  o.detail = "100 instances, worst rel " + str("%.1e", worst_rel) + ", worst abs " +
             str("%.1e", worst_abs) + ", " + str("%.2f", secs) + " s" +
             (o.pass ? "" : " | " + o.detail);
  return o;
}

// ------------------------------------------------------------------ 3 ----
// Score bounds and log-space consistency. Equivalence tolerances are
// checked for logits in [-12, 12] (all probabilities clear the 1e-12
// clamp); every tenth set uses [-40, 40] where only the open-interval
// bounds are claimed, clamp included.

Outcome score_stability() {
  auto rng = make_rng(9303);
  std::uniform_int_distribution<int> nd(1, 10), cd(1, 6);

  Outcome o;
  double worst_rel = 0.0, worst_enum = 0.0;
  int bound_viol = 0;
  for (int t = 0; t < 10000; ++t) {
    const int n = nd(rng), C = cd(rng);
    const bool wide = t % 10 == 9;
    const ProposalSet ps = testsupport::random_proposals(rng, n, C, wide ? 40.0 : 12.0);

    const auto phi = image_class_scores(ps);
    for (double v : phi)
      if (!(v > 0.0 && v < 1.0)) ++bound_viol;

    // per-proposal fused scores, recomputed directly
    std::vector<double> col_sum(C, 0.0);
    std::vector<std::vector<double>> row_sm(n), col_e(n);
    for (int i = 0; i < n; ++i) {
      double m = ps.s(i, 0);
      for (int c = 1; c <= C; ++c) m = std::max(m, ps.s(i, c));
      double den = 0.0;
      row_sm[i].resize(C + 1);
      for (int c = 0; c <= C; ++c) den += row_sm[i][c] = std::exp(ps.s(i, c) - m);
      for (int c = 0; c <= C; ++c) row_sm[i][c] /= den;
      col_e[i].resize(C);
      for (int c = 0; c < C; ++c) col_sum[c] += col_e[i][c] = std::exp(ps.s_I(i, c));
    }
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < C; ++c) {
        const double fused = row_sm[i][c] * (col_e[i][c] / col_sum[c]);
        if (!(fused > 0.0 && fused < 1.0)) ++bound_viol;
      }

    // one random bag per set
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<int> kd(1, std::min(n, 8));
    std::vector<int> bag(order.begin(), order.begin() + kd(rng));
    std::sort(bag.begin(), bag.end());
    std::uniform_int_distribution<int> ld(0, C - 1);
    const int bag_label = ld(rng);

    const auto lib = point_bag_score(ps, bag, bag_label);
    if (!lib || !(*lib > 0.0 && *lib < 1.0)) ++bound_viol;
    if (wide || !lib) continue;

    std::vector<long double> a, p;
    double direct = 0.0;
    for (int k : bag) {
      const long double pk =
          1.0L / (1.0L + std::exp(static_cast<long double>(ps.s_P(k, 0) - ps.s_P(k, 1))));
      a.push_back(static_cast<long double>(row_sm[k][bag_label]));
      p.push_back(pk);
    }
    for (std::size_t k = 0; k < bag.size(); ++k) {
      double term = static_cast<double>(a[k]) * static_cast<double>(p[k]);
      for (std::size_t m = 0; m < bag.size(); ++m)
        if (m != k) term *= 1.0 - static_cast<double>(p[m]);
      direct += term;
    }
    const double rel = std::abs(*lib - direct) / std::max(direct, 1e-300);
    worst_rel = std::max(worst_rel, rel);
    const double en = static_cast<double>(testsupport::enumerate_bag_score(a, p));
    worst_enum = std::max(worst_enum, std::abs(*lib - en));
  }
  if (bound_viol > 0) fail(o, std::to_string(bound_viol) + " bound violations");
  if (worst_rel > 1e-9) fail(o, "direct-eval rel diff " + str("%.3g", worst_rel));
  if (worst_enum > 1e-12) fail(o, "enumeration diff " + str("%.3g", worst_enum));
  o.detail = "10000 logit sets, worst rel " + str("%.1e", worst_rel) + ", worst enum |d| " +
             str("%.1e", worst_enum) + (o.pass ? "" : " | " + o.detail);
  return o;
}

// ------------------------------------------------------------------ 4 ----
// A noise-free detector plus matching at tau = 0.05 must hand back the
// hidden ground truth bit for bit (coordinates to 1e-9, labels exact) with
// nothing unmatched. The dataset seed is pinned to one where no image holds
// two same-class boxes with IoU above the suppression threshold, so
// class-wise NMS cannot orphan a click.

Outcome noiseless_recovery() {
  SyntheticDatasetConfig dc = benchmark_dataset_config();
  dc.n_images = 200;
  dc.seed = 104;
  const Dataset ds = make_synthetic_dataset(dc);

  Outcome o;
  for (const auto& img : ds.images)
    for (std::size_t i = 0; i < img.boxes.size(); ++i)
      for (std::size_t j = i + 1; j < img.boxes.size(); ++j)
        if (img.boxes[i].label == img.boxes[j].label &&
            iou(img.boxes[i].box, img.boxes[j].box) > 0.5) {
          fail(o, "dataset seed has a same-class suppression collision");
          o.detail = "collision in image " + std::to_string(img.image_id);
          return o;
        }

  OracleConfig oc;
  oc.fp_rate = 0.0;
  oc.label_flip_prob = 0.0;
  oc.miss_rate = 0.0;
  oc.coord_noise = 0.0;
  oc.box_dilation = 0.0;
  DetectorParams params;
  params.bias.assign(dc.num_classes, 0.0);
  params.temp_raw.assign(dc.num_classes, 0.0);

  auto rng = make_rng(derive_seed(dc.seed, 0xACCE));
  const MatchConfig mc{0.05, 0.5};
  std::size_t points_total = 0, unmatched = 0, boxes_total = 0;
  double worst_coord = 0.0;
  int label_errors = 0, size_errors = 0;
  for (const auto& img : ds.images) {
    const auto points = synthesize_points(img, PointMode::kRandom, 424242);
    const ProposalSet ps = oracle_detect(img, img.boxes, params, oc, dc.num_classes, rng);
    const DetectionField kept = apply_nms(make_labeled_detections(ps), mc.nms_iou);
    const MatchResult res = generate_pseudo_labels(points, kept, mc);
    points_total += points.size();
    boxes_total += img.boxes.size();
    unmatched += res.unmatched_points.size();

    auto key = [](const LabeledBox& b) {
      return std::make_tuple(b.box.x1, b.box.y1, b.box.x2, b.box.y2, b.label);
    };
    std::vector<LabeledBox> got = res.pseudo_boxes, want = img.boxes;
    auto by_key = [&](const LabeledBox& x, const LabeledBox& y) { return key(x) < key(y); };
    std::sort(got.begin(), got.end(), by_key);
    std::sort(want.begin(), want.end(), by_key);
    if (got.size() != want.size()) {
      ++size_errors;
      continue;
    }
    for (std::size_t i = 0; i < got.size(); ++i) {
      worst_coord = std::max({worst_coord, std::abs(got[i].box.x1 - want[i].box.x1),
                              std::abs(got[i].box.y1 - want[i].box.y1),
                              std::abs(got[i].box.x2 - want[i].box.x2),
                              std::abs(got[i].box.y2 - want[i].box.y2)});
      if (got[i].label != want[i].label) ++label_errors;
    }
  }
  if (size_errors > 0) fail(o, std::to_string(size_errors) + " images with a box-count mismatch");
  if (worst_coord > 1e-9) fail(o, "worst coordinate error " + str("%.3g", worst_coord));
  if (label_errors > 0) fail(o, std::to_string(label_errors) + " label mismatches");
  if (unmatched > 0) fail(o, std::to_string(unmatched) + " unmatched points");
  o.detail = std::to_string(boxes_total) + " boxes over 200 images recovered, worst |dCoord| " +
             str("%.1e", worst_coord) + ", unmatched 0" + (o.pass ? "" : " | " + o.detail);
  return o;
}

// ----------------------------------------------------------- 5/6/7/11 ----
// One shared benchmark: the pinned synthetic dataset, the pinned split and
// 600 iterations per arm. Final pseudo AP50 is reported in points (x100).

struct ArmResult {
  double ap50 = -1.0;
  double secs = 0.0;
  bool ok = false;
};

struct BenchmarkRuns {
  Dataset ds;
  SplitSpec split;
  ArmResult base, match_only, match_mil, full, thresh_all, center;
  std::vector<SweepArm> sweep;
  double sweep_secs = 0.0;
};

constexpr int kBenchIters = 600;

ArmResult run_arm(const Dataset& ds, const SplitSpec& split, bool match, bool imil, bool pmil,
                  bool paste, PointMode mode) {
  SimConfig sc = benchmark_sim_config();
  sc.use_matching = match;
  sc.use_image_mil = imil;
  sc.use_point_mil = pmil;
  sc.use_copy_paste = paste;
  sc.point_mode = mode;
  ArmResult a;
  const auto t0 = Clock::now();
  const SimulationResult res = run_simulation(ds, split, kBenchIters, sc);
  a.secs = elapsed(t0);
  if (res.final_eval && res.final_eval->ap50) {
    a.ap50 = *res.final_eval->ap50 * 100.0;
    a.ok = true;
  }
  return a;
}

const BenchmarkRuns& benchmark_runs() {
  static BenchmarkRuns r = [] {
    BenchmarkRuns b;
    b.ds = make_synthetic_dataset(benchmark_dataset_config());
    const SimConfig sc = benchmark_sim_config();
    b.split = make_splits(b.ds.images.size(), 0.01, 0.3, sc.seed);
    b.base = run_arm(b.ds, b.split, false, false, false, false, PointMode::kRandom);
    b.match_only = run_arm(b.ds, b.split, true, false, false, false, PointMode::kRandom);
    b.match_mil = run_arm(b.ds, b.split, true, true, true, false, PointMode::kRandom);
    b.full = run_arm(b.ds, b.split, true, true, true, true, PointMode::kRandom);
    b.thresh_all = run_arm(b.ds, b.split, false, true, true, true, PointMode::kRandom);
    b.center = run_arm(b.ds, b.split, true, true, true, true, PointMode::kCenter);

    SimConfig sw = benchmark_sim_config();
    // the smallest arm holds 60 point images; the shared eval prefix must
    // leave most of them trainable
    sw.eval_images = 48;
    const std::vector<double> fracs{0.05, 0.10, 0.20, 0.40};
    const auto t0 = Clock::now();
    b.sweep = sweep_point_fraction(b.ds, fracs, 0.01, kBenchIters, sw);
    b.sweep_secs = elapsed(t0);
    return b;
  }();
  return r;
}

Outcome matching_gain() {
  const auto& b = benchmark_runs();
  Outcome o;
  if (!b.full.ok || !b.thresh_all.ok) {
    fail(o, "missing final evaluation");
    return o;
  }
  const double gap = b.full.ap50 - b.thresh_all.ap50;
  const double secs = b.full.secs + b.thresh_all.secs;
  if (gap < 5.0) fail(o, "gap " + str("%.2f", gap) + " < 5 points");
  if (secs >= 60.0) fail(o, "took " + str("%.1f", secs) + " s (budget 60)");
  o.detail = "AP50 " + str("%.2f", b.thresh_all.ap50) + " (threshold) vs " +
             str("%.2f", b.full.ap50) + " (matching), gap +" + str("%.2f", gap) + ", " +
             str("%.1f", secs) + " s" + (o.pass ? "" : " | " + o.detail);
  return o;
}

Outcome ablation_monotonicity() {
  const auto& b = benchmark_runs();
  Outcome o;
  if (!b.base.ok || !b.match_only.ok || !b.match_mil.ok || !b.full.ok) {
    fail(o, "missing final evaluation");
    return o;
  }
  const double v0 = b.base.ap50, v1 = b.match_only.ap50, v2 = b.match_mil.ap50, v3 = b.full.ap50;
  const double secs = b.base.secs + b.match_only.secs + b.match_mil.secs + b.full.secs;
  if (!(v0 <= v1 && v1 <= v2 && v2 <= v3)) fail(o, "chain is not non-decreasing");
  if (!(v3 > v0 && v3 > v1 && v3 > v2)) fail(o, "full configuration is not strictly highest");
  if (secs >= 180.0) fail(o, "took " + str("%.1f", secs) + " s (budget 180)");
  o.detail = "AP50 " + str("%.2f", v0) + " -> " + str("%.2f", v1) + " -> " + str("%.2f", v2) +
             " -> " + str("%.2f", v3) + ", " + str("%.1f", secs) + " s" +
             (o.pass ? "" : " | " + o.detail);
  return o;
}

Outcome annotation_scaling() {
  const auto& b = benchmark_runs();
  Outcome o;
  std::vector<double> xs, ys;
  std::string curve;
  for (const auto& arm : b.sweep) {
    if (!arm.final_eval || !arm.final_eval->ap50) {
      fail(o, "missing arm evaluation");
      return o;
    }
    xs.push_back(arm.point_fraction);
    ys.push_back(*arm.final_eval->ap50 * 100.0);
    curve += (curve.empty() ? "" : " ") + str("%.2f", ys.back());
  }
  const double rho = spearman_rank(xs, ys);
  if (!(rho > 0.0)) fail(o, "Spearman rho " + str("%.3f", rho) + " not positive");
  o.detail = "AP50 [" + curve + "] over {5,10,20,40}%, rho " + str("%.3f", rho) + ", " +
             str("%.1f", b.sweep_secs) + " s" + (o.pass ? "" : " | " + o.detail);
  return o;
}

Outcome click_position_robustness() {
  const auto& b = benchmark_runs();
  Outcome o;
  if (!b.full.ok || !b.center.ok) {
    fail(o, "missing final evaluation");
    return o;
  }
  const double d = std::abs(b.center.ap50 - b.full.ap50);
  if (d > 1.0) fail(o, "|dAP50| " + str("%.2f", d) + " > 1 point");
  o.detail = "AP50 " + str("%.2f", b.center.ap50) + " (centre) vs " + str("%.2f", b.full.ap50) +
             " (random), |d| " + str("%.2f", d) + (o.pass ? "" : " | " + o.detail);
  return o;
}

// ------------------------------------------------------------------ 8 ----

void random_ap_instance(std::mt19937_64& rng, std::vector<std::vector<LabeledBox>>& preds,
                        std::vector<std::vector<LabeledBox>>& gts) {
  std::uniform_int_distribution<int> imgs(1, 3), ngt(0, 4), npr(0, 4), lab(0, 3);
  std::uniform_real_distribution<double> pos(0.0, 80.0), size(6.0, 30.0), jit(-6.0, 6.0);
  std::uniform_int_distribution<int> tick(1, 19);
  std::bernoulli_distribution echo(0.6), relabel(0.25);
  const int n_images = imgs(rng);
  preds.assign(n_images, {});
  gts.assign(n_images, {});
  std::size_t total_preds = 0;
  for (int i = 0; i < n_images; ++i) {
    const int g = ngt(rng);
    for (int k = 0; k < g; ++k) {
      const double x = pos(rng), y = pos(rng), w = size(rng), h = size(rng);
      gts[i].push_back({{x, y, x + w, y + h}, lab(rng), 1.0});
    }
    const int p = npr(rng);
    for (int k = 0; k < p && total_preds < 10; ++k, ++total_preds) {
      LabeledBox b;
      if (!gts[i].empty() && echo(rng)) {
        b = gts[i][static_cast<std::size_t>(k) % gts[i].size()];
        b.box.x1 += jit(rng);
        b.box.y1 += jit(rng);
        b.box.x2 += jit(rng);
        b.box.y2 += jit(rng);
        if (b.box.x2 < b.box.x1) std::swap(b.box.x1, b.box.x2);
        if (b.box.y2 < b.box.y1) std::swap(b.box.y1, b.box.y2);
        if (relabel(rng)) b.label = lab(rng);
      } else {
        const double x = pos(rng), y = pos(rng), w = size(rng), h = size(rng);
        b = {{x, y, x + w, y + h}, lab(rng), 1.0};
      }
      // scores land on a coarse grid so rank ties are routine
      b.score = tick(rng) * 0.05;
      preds[i].push_back(b);
    }
  }
}

Outcome ap_oracle_equality() {
  auto rng = make_rng(9808);
  const auto thresholds = coco_iou_thresholds();
  Outcome o;
  int mismatches = 0;
  for (int t = 0; t < 500; ++t) {
    std::vector<std::vector<LabeledBox>> preds, gts;
    random_ap_instance(rng, preds, gts);
    const auto got = average_precision(preds, gts, thresholds);
    const auto want = testsupport::ap_prefix_oracle(preds, gts, thresholds);
    if (got.has_value() != want.has_value()) {
      ++mismatches;
      continue;
    }
    if (!got) continue;
    bool same = got->mean == want->mean && got->per_threshold.size() == want->per_threshold.size();
    for (std::size_t i = 0; same && i < got->per_threshold.size(); ++i)
      same = got->per_threshold[i] == want->per_threshold[i];
    if (!same) ++mismatches;
  }

  const std::vector<std::vector<LabeledBox>> gt{{{{0, 0, 10, 10}, 0, 1.0}}};
  const std::vector<std::vector<LabeledBox>> pr{
      {{{0, 0, 10, 10}, 0, 0.8}, {{30, 30, 40, 40}, 0, 0.9}}};
  const auto half = average_precision(pr, gt, thresholds);
  const bool half_ok = half && half->per_threshold.front() == 0.5;

  if (mismatches > 0) fail(o, std::to_string(mismatches) + " instances differ from the oracle");
  if (!half_ok) fail(o, "single-TP/single-FP fixture AP50 != 0.5");
  o.detail = "500 instances bitwise equal, half-credit fixture AP50 = 0.5" +
             std::string(o.pass ? "" : " | " + o.detail);
  return o;
}

// ------------------------------------------------------------------ 9 ----
// Paste coverage: with stock available, every unmatched point ends up inside
// exactly one freshly added box of its own class; with an empty bank the
// image bytes must not move. Fixture points sit on a coarse grid (minimum
// spacing 50, patches at most 12 wide, jitter 2) so one paste can never
// cover a neighbouring point.

Outcome paste_coverage() {
  Outcome o;
  auto rng = make_rng(9909);
  std::uniform_int_distribution<int> psize(5, 12);
  std::uniform_int_distribution<int> cls(0, 2);
  std::bernoulli_distribution use_cell(0.6);
  AugmentConfig cfg;  // paste_jitter 2.0

  int trials = 0, pastes = 0;
  for (int t = 0; t < 30; ++t) {
    ImageSample img;
    img.image_id = t;
    img.width = 220;
    img.height = 160;
    img.pixels = PixelArray(img.width, img.height, 40);

    ObjectBank bank(3, 100);
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < 4; ++k)
        bank.push({PixelArray(psize(rng), psize(rng),
                              static_cast<std::uint8_t>(60 + 40 * c + k)),
                   c});

    std::vector<PointAnnotation> points;
    for (int gy = 0; gy < 3; ++gy)
      for (int gx = 0; gx < 4; ++gx)
        if (use_cell(rng))
          points.push_back({{10.0 + gx * 66.0, 8.0 + gy * 70.0}, cls(rng)});
    if (points.empty()) points.push_back({{10.0, 8.0}, cls(rng)});

    const PasteResult res = point_guided_paste(img, points, bank, cfg, rng);
    ++trials;
    pastes += static_cast<int>(res.added.size());
    if (res.added.size() != points.size())
      fail(o, "trial " + std::to_string(t) + ": " + std::to_string(res.added.size()) +
                  " pastes for " + std::to_string(points.size()) + " points");
    for (const auto& pt : points) {
      int covers = 0;
      for (const auto& add : res.added)
        if (add.label == pt.label && contains(add.box, pt.p)) ++covers;
      if (covers != 1)
        fail(o, "trial " + std::to_string(t) + ": a point is covered " + std::to_string(covers) +
                    " times");
    }

    const ObjectBank empty(3, 100);
    const PasteResult noop = point_guided_paste(img, points, empty, cfg, rng);
    if (!noop.added.empty() || noop.image.pixels->rgb != img.pixels->rgb ||
        noop.image.boxes.size() != img.boxes.size())
      fail(o, "empty bank altered the image");
  }
  o.detail = std::to_string(pastes) + " pastes over " + std::to_string(trials) +
             " scenes, every point covered exactly once; empty bank bit-identical" +
             std::string(o.pass ? "" : " | " + o.detail);
  return o;
}

// ----------------------------------------------------------------- 10 ----

Outcome ema_contraction() {
  Outcome o;
  DetectorParams t, s;
  t.bias = {0.4, -0.2, 0.9, 0.05, -0.6};
  t.temp_raw = {0.1, -0.3, 0.5, 0.0, 0.2};
  s.bias = {-0.1, 0.3, 0.2, -0.4, 0.7};
  s.temp_raw = {-0.2, 0.4, -0.1, 0.3, -0.5};

  const DetectorParams copy = ema_update(t, s, 0.0);
  if (copy.bias != s.bias || copy.temp_raw != s.temp_raw) fail(o, "alpha=0 is not the student");
  const DetectorParams hold = ema_update(t, s, 1.0);
  if (hold.bias != t.bias || hold.temp_raw != t.temp_raw) fail(o, "alpha=1 moved the teacher");

  const double alpha = 0.97;
  auto gap = [&](const DetectorParams& a) {
    double g = 0.0;
    for (std::size_t i = 0; i < a.bias.size(); ++i) {
      g = std::max(g, std::abs(a.bias[i] - s.bias[i]));
      g = std::max(g, std::abs(a.temp_raw[i] - s.temp_raw[i]));
    }
    return g;
  };
  DetectorParams cur = t;
  const double e0 = gap(cur);
  for (int k = 0; k < 100; ++k) cur = ema_update(cur, s, alpha);
  const double e100 = gap(cur);
  const double predicted = std::pow(alpha, 100) * e0;
  const double dev = std::abs(e100 - predicted);
  if (dev > 1e-12) fail(o, "contraction deviates by " + str("%.3g", dev));
  o.detail = "endpoints exact, |e100 - a^100 e0| = " + str("%.1e", dev) +
             std::string(o.pass ? "" : " | " + o.detail);
  return o;
}

// ----------------------------------------------------------------- 12 ----
// Independent recount of the six-way error split, written against the
// documented contract with its own data layout and match loop.

struct Recount {
  int cls = 0, loc = 0, both = 0, dup = 0, bkg = 0, missed = 0, tp = 0;
  int implicated = 0;  // distinct ground-truth boxes blamed by cls/loc/both
};

Recount recount_errors(const std::vector<std::vector<LabeledBox>>& preds,
                       const std::vector<std::vector<LabeledBox>>& gts) {
  Recount rc;
  const std::size_t n = gts.size();
  std::vector<std::vector<char>> matched(n), tp(n), implicated(n);
  for (std::size_t i = 0; i < n; ++i) {
    matched[i].assign(gts[i].size(), 0);
    implicated[i].assign(gts[i].size(), 0);
    tp[i].assign(preds[i].size(), 0);
  }

  std::set<int> classes;
  for (const auto& img : gts)
    for (const auto& g : img) classes.insert(g.label);

  struct Flat {
    double score;
    int image, index;
  };
  for (int label : classes) {
    std::vector<Flat> flat;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < preds[i].size(); ++k)
        if (preds[i][k].label == label)
          flat.push_back({preds[i][k].score, static_cast<int>(i), static_cast<int>(k)});
    std::sort(flat.begin(), flat.end(), [](const Flat& a, const Flat& b) {
      return std::tie(b.score, a.image, a.index) < std::tie(a.score, b.image, b.index);
    });
    for (const auto& f : flat) {
      double best = 0.0;
      int best_g = -1;
      for (std::size_t g = 0; g < gts[f.image].size(); ++g) {
        if (gts[f.image][g].label != label || matched[f.image][g]) continue;
        const double v = iou(preds[f.image][f.index].box, gts[f.image][g].box);
        if (v >= 0.5 && v > best) {
          best = v;
          best_g = static_cast<int>(g);
        }
      }
      if (best_g >= 0) {
        matched[f.image][static_cast<std::size_t>(best_g)] = 1;
        tp[f.image][static_cast<std::size_t>(f.index)] = 1;
        ++rc.tp;
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < preds[i].size(); ++k) {
      if (tp[i][k]) continue;
      const LabeledBox& p = preds[i][k];
      double same = 0.0, other = 0.0;
      int arg_same = -1, arg_other = -1;
      for (std::size_t g = 0; g < gts[i].size(); ++g) {
        const double v = iou(p.box, gts[i][g].box);
        if (gts[i][g].label == p.label) {
          if (v > same) same = v, arg_same = static_cast<int>(g);
        } else if (v > other) {
          other = v, arg_other = static_cast<int>(g);
        }
      }
      if (same >= 0.5)
        ++rc.dup;
      else if (other >= 0.5)
        ++rc.cls, implicated[i][static_cast<std::size_t>(arg_other)] = 1;
      else if (same >= 0.1)
        ++rc.loc, implicated[i][static_cast<std::size_t>(arg_same)] = 1;
      else if (other >= 0.1)
        ++rc.both, implicated[i][static_cast<std::size_t>(arg_other)] = 1;
      else
        ++rc.bkg;
    }

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t g = 0; g < gts[i].size(); ++g) {
      if (implicated[i][g]) ++rc.implicated;
      if (!matched[i][g] && !implicated[i][g]) ++rc.missed;
    }
  return rc;
}

Outcome error_accounting() {
  auto rng = make_rng(9912);
  std::uniform_int_distribution<int> imgs(2, 4), ngt(0, 5), npr(0, 6), lab(0, 4);
  std::uniform_real_distribution<double> pos(0.0, 90.0), size(8.0, 32.0);
  std::uniform_real_distribution<double> small(-2.0, 2.0), medium(-10.0, 10.0), sc(0.05, 0.99);
  std::uniform_int_distribution<int> kind(0, 4);

  Outcome o;
  int scenes_bad = 0, total_fp = 0, total_gt = 0;
  for (int t = 0; t < 200; ++t) {
    const int n_images = imgs(rng);
    std::vector<std::vector<LabeledBox>> preds(n_images), gts(n_images);
    for (int i = 0; i < n_images; ++i) {
      const int g = ngt(rng);
      for (int k = 0; k < g; ++k) {
        const double x = pos(rng), y = pos(rng), w = size(rng), h = size(rng);
        gts[i].push_back({{x, y, x + w, y + h}, lab(rng), 1.0});
      }
      const int p = npr(rng);
      for (int k = 0; k < p; ++k) {
        LabeledBox b;
        const int mode = kind(rng);
        if (!gts[i].empty() && mode <= 2) {
          b = gts[i][static_cast<std::size_t>(k) % gts[i].size()];
          auto& jd = mode == 0 ? small : medium;  // near-duplicates and loosened boxes
          b.box.x1 += jd(rng);
          b.box.y1 += jd(rng);
          b.box.x2 += jd(rng);
          b.box.y2 += jd(rng);
          if (b.box.x2 < b.box.x1) std::swap(b.box.x1, b.box.x2);
          if (b.box.y2 < b.box.y1) std::swap(b.box.y1, b.box.y2);
          if (mode == 2) b.label = lab(rng);  // wrong class on a real object
        } else {
          const double x = pos(rng), y = pos(rng), w = size(rng), h = size(rng);
          b = {{x, y, x + w, y + h}, lab(rng), 1.0};
        }
        b.score = sc(rng);
        preds[i].push_back(b);
      }
    }

    const ErrorDecomposition lib = error_decomposition(preds, gts);
    const Recount rc = recount_errors(preds, gts);

    int n_pred = 0, n_gt = 0;
    for (const auto& img : preds) n_pred += static_cast<int>(img.size());
    for (const auto& img : gts) n_gt += static_cast<int>(img.size());
    total_fp += lib.false_positives();
    total_gt += n_gt;

    const bool counts_equal = lib.classification == rc.cls && lib.localisation == rc.loc &&
                              lib.both == rc.both && lib.duplicate == rc.dup &&
                              lib.background == rc.bkg && lib.missed == rc.missed &&
                              lib.true_positives == rc.tp;
    const bool fp_identity = lib.false_positives() == n_pred - lib.true_positives;
    const bool gt_identity = lib.true_positives + rc.implicated + lib.missed == n_gt;
    if (!counts_equal || !fp_identity || !gt_identity) ++scenes_bad;
  }
  if (scenes_bad > 0) fail(o, std::to_string(scenes_bad) + " scenes disagree");
  o.detail = "200 scenes, " + std::to_string(total_fp) + " false positives partitioned, " +
             std::to_string(total_gt) + " ground-truth boxes accounted for" +
             std::string(o.pass ? "" : " | " + o.detail);
  return o;
}

// ----------------------------------------------------------------- 13 ----
// Every command is replayed from its own manifest; all declared outputs and
// the manifest itself must come back byte for byte.

struct GateTemp {
  fs::path path;
  GateTemp() {
    path = fs::temp_directory_path() / ("pointdet_gate_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~GateTemp() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

int sh(const std::string& args) {
  const std::string cmd = std::string(POINTDET_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return rc == -1 || !WIFEXITED(rc) ? -1 : WEXITSTATUS(rc);
}

std::optional<std::string> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in.good()) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

Outcome rerun_determinism() {
  Outcome o;
  GateTemp td;
  const fs::path& d = td.path;

  spit(d / "coco.json", R"({
    "images": [{"id": 1, "width": 60, "height": 40, "file_name": "a.png"},
               {"id": 2, "width": 60, "height": 40, "file_name": "b.png"}],
    "categories": [{"id": 1, "name": "thing"}, {"id": 3, "name": "other"}],
    "annotations": [
      {"id": 1, "image_id": 1, "category_id": 1, "bbox": [5, 5, 20, 12]},
      {"id": 2, "image_id": 1, "category_id": 3, "bbox": [30, 10, 14, 18]},
      {"id": 3, "image_id": 2, "category_id": 1, "bbox": [12, 8, 24, 20]}
    ]})");
  spit(d / "points.json", R"([{"image_id": 1, "x": 6.5, "y": 7.0, "label": 0},
                              {"image_id": 1, "x": 55.0, "y": 35.0, "label": 1}])");
  spit(d / "dets.json", R"([{"image_id": 1, "box": [4, 4, 22, 18], "label": 0, "score": 0.9,
                             "s_row": [2.5, -0.5, 0.0], "s_P_row": [0.0, 2.0]},
                            {"image_id": 1, "box": [28, 9, 45, 29], "label": 1, "score": 0.7,
                             "s_row": [-0.5, 2.0, 0.0], "s_P_row": [0.5, 1.5]}])");
  spit(d / "gt.json", R"([{"image_id": 1, "boxes": [{"box": [0, 0, 10, 10], "label": 0, "score": 1.0}]}])");
  spit(d / "preds.json", R"([{"image_id": 1, "boxes": [{"box": [0, 0, 10, 10], "label": 0, "score": 0.8},
                                                       {"box": [30, 30, 40, 40], "label": 0, "score": 0.9}]}])");

  // command, manifest path, output files to snapshot
  struct Step {
    std::string args;
    fs::path manifest;
    std::vector<fs::path> outputs;
  };
  const std::vector<Step> steps = {
      {"synth-points --coco " + (d / "coco.json").string() + " --mode random --seed 5 --out " +
           (d / "sp.json").string(),
       d / "sp.json.manifest.json",
       {d / "sp.json"}},
      {"match --annotations " + (d / "points.json").string() + " --detections " +
           (d / "dets.json").string() + " --out " + (d / "match.json").string(),
       d / "match.json.manifest.json",
       {d / "match.json"}},
      {"eval --preds " + (d / "preds.json").string() + " --gt " + (d / "gt.json").string() +
           " --out " + (d / "eval.json").string() + " --errors-csv " + (d / "errors.csv").string(),
       d / "eval.json.manifest.json",
       {d / "eval.json", d / "errors.csv"}},
      {"simulate --out " + (d / "sim").string() +
           " --images 40 --classes 3 --iters 6 --eval-images 4"
           " --full-frac 0.1 --point-frac 0.4 --seed 3",
       d / "sim" / "manifest.json",
       {d / "sim" / "split.json", d / "sim" / "metrics.csv", d / "sim" / "final.json"}},
      {"sweep --out " + (d / "sw").string() +
           " --images 30 --classes 3 --iters 4 --eval-images 2"
           " --fractions 0.2,0.4 --full-frac 0.1 --seed 3",
       d / "sw" / "manifest.json",
       {d / "sw" / "sweep.csv", d / "sw" / "summary.json"}},
  };

  int files_checked = 0;
  for (const auto& step : steps) {
    const std::string name = step.args.substr(0, step.args.find(' '));
    if (sh(step.args) != 0) {
      fail(o, name + " exited nonzero");
      continue;
    }
    std::vector<std::pair<fs::path, std::string>> snap;
    bool readable = true;
    for (const auto& f : step.outputs) {
      auto text = slurp(f);
      if (!text) {
        fail(o, name + " did not write " + f.filename().string());
        readable = false;
        break;
      }
      snap.emplace_back(f, *text);
    }
    auto manifest_before = slurp(step.manifest);
    if (!manifest_before) {
      fail(o, name + " wrote no manifest");
      readable = false;
    }
    if (!readable) continue;

    if (sh("rerun " + step.manifest.string()) != 0) {
      fail(o, "rerun of " + name + " exited nonzero");
      continue;
    }
    for (const auto& [f, before] : snap) {
      ++files_checked;
      const auto after = slurp(f);
      if (!after || *after != before) fail(o, name + ": " + f.filename().string() + " changed");
    }
    ++files_checked;
    const auto manifest_after = slurp(step.manifest);
    if (!manifest_after || *manifest_after != *manifest_before)
      fail(o, name + ": manifest changed");
  }
  o.detail = "5 commands replayed, " + std::to_string(files_checked) +
             " files byte-identical" + std::string(o.pass ? "" : " | " + o.detail);
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    Outcome (*run)();
  };
  const std::vector<Criterion> criteria = {
      {"assignment-optimality", assignment_optimality},
      {"mil-gradient-exactness", gradient_exactness},
      {"score-bounds-and-equivalence", score_stability},
      {"noiseless-recovery", noiseless_recovery},
      {"matching-gain", matching_gain},
      {"ablation-monotonicity", ablation_monotonicity},
      {"annotation-scaling", annotation_scaling},
      {"ap-oracle-equality", ap_oracle_equality},
      {"paste-coverage", paste_coverage},
      {"ema-contraction", ema_contraction},
      {"click-position-robustness", click_position_robustness},
      {"error-accounting", error_accounting},
      {"rerun-determinism", rerun_determinism},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const Outcome o = criteria[i].run();
    if (!o.pass) ++failures;
    std::printf("[%2zu/13] %s %-28s %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].name,
                o.detail.c_str());
    std::fflush(stdout);
  }
  if (failures == 0)
    std::printf("gate: all 13 criteria passed\n");
  else
    std::printf("gate: %d of 13 criteria FAILED\n", failures);
  return failures == 0 ? 0 : 1;
}
