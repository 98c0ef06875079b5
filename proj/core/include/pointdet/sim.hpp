#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "pointdet/augment.hpp"
#include "pointdet/datasets.hpp"
#include "pointdet/evaluation.hpp"
#include "pointdet/matching.hpp"
#include "pointdet/mil.hpp"
#include "pointdet/types.hpp"

namespace pointdet {

// The trainable surrogate detector: one confidence bias and one
// log-precision per class. The positivity temperature T_c = exp(temp_raw[c])
// scales the positivity logits of class-c proposals and divides the oracle's
// coordinate noise for them, so learning a larger temperature tightens that
// class's localisation. Classes that never appear in a training batch keep
// their initial (loose) temperature.
struct DetectorParams {
  std::vector<double> bias;
  std::vector<double> temp_raw;

  int num_classes() const { return static_cast<int>(bias.size()); }
  double temperature(int label) const;
};

// Elementwise exponential moving average: alpha * teacher + (1 - alpha) * student.
DetectorParams ema_update(const DetectorParams& teacher, const DetectorParams& student,
                          double alpha);

// Noise regime of the synthetic detector.
struct OracleConfig {
  double fp_rate = 1.0;           // expected spurious boxes per image (Poisson)
  double label_flip_prob = 0.15;  // chance a true box is reported with a wrong class
  double miss_rate = 0.1;         // chance a true box yields no proposal
  double coord_noise = 2.0;       // corner jitter scale in pixels, divided by T
  double box_dilation = 0.0;      // pixels added on every side before jitter
  double sharpness = 4.0;         // classification logit per unit of box quality
  double pos_margin = 0.3;        // quality level at which the positivity logit crosses 0
  // Spurious boxes take label c with weight spurious_label_decay^c, and a
  // flipped box takes label c != source with the same weights: detectors
  // hallucinate and confuse towards frequent classes. 1 = uniform.
  double spurious_label_decay = 1.0;
};

// Synthesises the proposal field a detector with `params` would produce on a
// scene whose true objects are `truth`. Per true box: dropped with
// probability miss_rate, label flipped with probability label_flip_prob,
// sides dilated by box_dilation, corners jittered by
// N(0, coord_noise / T_label). Spurious boxes arrive at
// rate fp_rate with uniform geometry and label. Classification logits encode
// sigmoid(sharpness * quality + bias[label]) where quality is the IoU
// against the box's source (best same-class truth for spurious boxes);
// positivity logits are sharpness * (quality - pos_margin) * T_label.
ProposalSet oracle_detect(const ImageSample& img, std::span<const LabeledBox> truth,
                          const DetectorParams& params, const OracleConfig& cfg,
                          int num_classes, std::mt19937_64& rng);

struct SimConfig {
  int num_classes = 1;
  OracleConfig oracle;
  MatchConfig match;
  LossWeights weights;
  AugmentConfig augment;
  double ema_alpha = 0.9996;
  double learning_rate = 0.1;
  // The log-precision gradient is a mean over point bags and is much smaller
  // than the bias gradient, so it gets its own step size. The raw values are
  // clamped after each step to keep the oracle's noise model in range.
  double temp_learning_rate = 2.0;
  double temp_raw_min = -0.5;
  double temp_raw_max = 0.8;
  int batch_full = 16;
  int batch_point = 16;
  int eval_every = 10;   // evaluate pseudo labels every K iterations
  int eval_images = 24;  // held-out prefix of the point split
  PointMode point_mode = PointMode::kRandom;
  double bias_init = 0.0;
  double temp_init = 0.0;
  // Ablation switches. With use_matching off, pseudo labels are every
  // detection above tau (the confidence-threshold baseline).
  bool use_matching = true;
  bool use_image_mil = true;
  bool use_point_mil = true;
  bool use_copy_paste = true;
  std::uint64_t seed = 0;
};

struct TrainState {
  DetectorParams teacher;
  DetectorParams student;
  ObjectBank bank;
  long long iteration = 0;
};

TrainState make_initial_state(const SimConfig& cfg);

struct IterationReport {
  long long iteration = 0;
  double l_det = 0.0;
  double l_img = 0.0;
  double l_pt = 0.0;
  double total = 0.0;
  int pseudo_count = 0;
  double unmatched_frac = 0.0;
  bool point_batch_empty = false;
  std::optional<PseudoQuality> eval;  // present on evaluation iterations
};

// Confidence-threshold pseudo labelling (the no-matching baseline): every
// detection with score >= tau becomes a pseudo box under its own label;
// unmatched points are those not covered by any same-class pseudo box.
MatchResult threshold_pseudo_labels(std::span<const PointAnnotation> points,
                                    const DetectionField& dets, double tau);

// One teacher-student iteration. `point_truth` carries the hidden ground
// truth for each point-batch image, aligned by index; only the oracle ever
// reads it. Batches may be empty; an empty point batch leaves the
// multiple-instance terms at zero and flags the report.
IterationReport train_iteration(TrainState& state,
                                std::span<const ImageSample> full_batch,
                                std::span<const ImageSample> point_batch,
                                std::span<const std::vector<LabeledBox>> point_truth,
                                const SimConfig& cfg);

struct SimulationResult {
  std::vector<IterationReport> reports;
  TrainState final_state;
  std::optional<PseudoQuality> initial_eval;  // teacher before any update
  std::optional<PseudoQuality> final_eval;
  int eval_image_count = 0;
};

// Runs the full loop on a dataset split: round-robin batches, weak/strong
// augmentation, teacher pseudo labels, point-guided copy-paste, student
// update, EMA. Pseudo-label quality is measured on a held-out prefix of the
// point split (never trained on) every eval_every iterations and at the end.
SimulationResult run_simulation(const Dataset& ds, const SplitSpec& split, int iterations,
                                const SimConfig& cfg);

struct SweepArm {
  double point_fraction = 0.0;
  int n_point_images = 0;
  std::optional<PseudoQuality> final_eval;
};

// Re-runs the simulation at several point fractions with a fixed fully
// boxed fraction. All arms share the evaluation slice: for one seed the
// split prefixes are nested, so the held-out images are identical.
std::vector<SweepArm> sweep_point_fraction(const Dataset& ds, std::span<const double> fractions,
                                           double full_fraction, int iterations,
                                           const SimConfig& cfg);

struct SyntheticDatasetConfig {
  int n_images = 200;
  int num_classes = 8;
  int image_w = 64;
  int image_h = 64;
  int min_objects = 1;
  int max_objects = 4;
  double min_size = 10.0;
  double max_size = 28.0;
  // Class weights fall off geometrically: weight(c) = label_decay^c. 1.0
  // gives a uniform distribution; smaller values produce a long tail, so
  // small point splits can miss rare classes entirely.
  double label_decay = 1.0;
  std::uint64_t seed = 0;
};

// Random rectangles on a noisy background; each object is painted in a
// class-specific colour so bank patches carry real pixels.
Dataset make_synthetic_dataset(const SyntheticDatasetConfig& cfg);

// Deterministic imagery for a sample that has boxes but no pixels: a noisy
// background plus one flat-colour rectangle per labelled box, colour keyed
// to the class. The synthetic generator uses this painter, and the simulate
// driver applies it to datasets loaded from annotation files (which carry
// geometry only) so the copy-paste bank still sees real pixels.
void paint_scene(ImageSample& img, std::uint64_t seed);

// The fixed desk-scale benchmark used by the directional checks and the
// command line defaults: a long-tailed synthetic dataset plus a noise regime
// under which the pipeline's stages are all load-bearing. Every constant is
// deliberate; see the function definitions.
SyntheticDatasetConfig benchmark_dataset_config();
SimConfig benchmark_sim_config();

}  // namespace pointdet
