// Microbenchmarks for the hot paths: assignment, suppression, the two MIL
// losses and the AP evaluator. Inputs are generated once per size outside
// the timed region.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "pointdet/evaluation.hpp"
#include "pointdet/matching.hpp"
#include "pointdet/mil.hpp"
#include "pointdet/rng.hpp"

using namespace pointdet;

namespace {

Mat random_cost(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 2.0);
  Mat m(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) m(r, c) = u(rng);
  return m;
}

ProposalSet random_proposals(std::mt19937_64& rng, int n, int C) {
  std::uniform_real_distribution<double> ux(0.0, 900.0);
  std::uniform_real_distribution<double> uw(8.0, 100.0);
  std::uniform_real_distribution<double> ul(-3.0, 3.0);
  ProposalSet ps;
  ps.s = Mat(n, C + 1);
  ps.s_I = Mat(n, C);
  ps.s_P = Mat(n, 2);
  for (int i = 0; i < n; ++i) {
    const double x = ux(rng), y = ux(rng);
    ps.boxes.push_back({x, y, x + uw(rng), y + uw(rng)});
    for (int c = 0; c <= C; ++c) ps.s(i, c) = ul(rng);
    for (int c = 0; c < C; ++c) ps.s_I(i, c) = ul(rng);
    ps.s_P(i, 0) = ul(rng);
    ps.s_P(i, 1) = ul(rng);
  }
  ps.validate();
  return ps;
}

std::vector<LabeledBox> random_labeled(std::mt19937_64& rng, int n, int C) {
  std::uniform_real_distribution<double> ux(0.0, 900.0);
  std::uniform_real_distribution<double> uw(8.0, 100.0);
  std::uniform_real_distribution<double> us(0.0, 1.0);
  std::uniform_int_distribution<int> uc(0, C - 1);
  std::vector<LabeledBox> out;
  for (int i = 0; i < n; ++i) {
    const double x = ux(rng), y = ux(rng);
    out.push_back({{x, y, x + uw(rng), y + uw(rng)}, uc(rng), us(rng)});
  }
  return out;
}

void BM_HungarianAssign(benchmark::State& state) {
  auto rng = make_rng(11);
  const Mat cost = random_cost(rng, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(hungarian_assign(cost));
}

void BM_ClasswiseNms(benchmark::State& state) {
  auto rng = make_rng(12);
  const DetectionField field =
      make_labeled_detections(random_proposals(rng, static_cast<int>(state.range(0)), 6));
  for (auto _ : state) benchmark::DoNotOptimize(apply_nms(field, 0.5));
}

void BM_ImageMilLoss(benchmark::State& state) {
  auto rng = make_rng(13);
  const int C = 6;
  const ProposalSet ps = random_proposals(rng, static_cast<int>(state.range(0)), C);
  std::vector<int> labels(C, 0);
  for (int c = 0; c < C; c += 2) labels[c] = 1;
  for (auto _ : state) benchmark::DoNotOptimize(image_mil_loss(ps, labels));
}

void BM_PointMilLoss(benchmark::State& state) {
  auto rng = make_rng(14);
  const int C = 6;
  const ProposalSet ps = random_proposals(rng, static_cast<int>(state.range(0)), C);
  const DetectionField field = make_labeled_detections(ps);
  std::uniform_real_distribution<double> ux(0.0, 1000.0);
  std::uniform_int_distribution<int> uc(0, C - 1);
  std::vector<PointAnnotation> points;
  std::vector<int> bag_labels;
  for (int i = 0; i < 8; ++i) {
    points.push_back({{ux(rng), ux(rng)}, uc(rng)});
    bag_labels.push_back(points.back().label);
  }
  const auto bags = build_bags(points, ps, field.labels);
  for (auto _ : state) benchmark::DoNotOptimize(point_mil_loss(ps, bags, bag_labels));
}

void BM_AveragePrecision(benchmark::State& state) {
  auto rng = make_rng(15);
  const int per_image = static_cast<int>(state.range(0));
  std::vector<std::vector<LabeledBox>> preds, gts;
  for (int i = 0; i < 20; ++i) {
    preds.push_back(random_labeled(rng, per_image, 6));
    gts.push_back(random_labeled(rng, per_image, 6));
  }
  const auto thresholds = coco_iou_thresholds();
  for (auto _ : state) benchmark::DoNotOptimize(average_precision(preds, gts, thresholds));
}

}  // namespace

BENCHMARK(BM_HungarianAssign)->RangeMultiplier(2)->Range(4, 64);
BENCHMARK(BM_ClasswiseNms)->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_ImageMilLoss)->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_PointMilLoss)->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_AveragePrecision)->RangeMultiplier(4)->Range(4, 64);

BENCHMARK_MAIN();
