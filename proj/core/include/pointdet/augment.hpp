#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "pointdet/types.hpp"

namespace pointdet {

struct AugmentConfig {
  double flip_prob = 0.5;          // horizontal flip probability (weak + strong)
  double color_gain = 0.2;         // strong: per-channel multiplicative jitter
  double brightness_shift = 16.0;  // strong: additive pixel jitter
  double paste_jitter = 2.0;       // copy-paste: max paste-centre offset, pixels
  std::size_t bank_capacity = 100;
  std::uint64_t rng_seed = 0;
};

// A cropped object: the pixels under a labelled box, on integer bounds.
struct Patch {
  PixelArray pixels;
  int label = 0;
};

// Per-class FIFO store of recently seen object crops. Pushing beyond the
// per-class capacity evicts the oldest patch of that class.
class ObjectBank {
 public:
  ObjectBank() = default;
  explicit ObjectBank(int num_classes, std::size_t capacity_per_class = 100);

  void push(Patch p);
  const std::deque<Patch>& queue(int label) const;
  std::size_t size(int label) const { return queue(label).size(); }
  std::size_t total_size() const;
  int num_classes() const { return static_cast<int>(queues_.size()); }
  std::size_t capacity_per_class() const { return capacity_; }

 private:
  std::vector<std::deque<Patch>> queues_;
  std::size_t capacity_ = 100;
};

// Crops the pixels under `box` (expanded to integer bounds, clipped to the
// image). Empty when the clipped region is degenerate. Requires pixels.
std::optional<Patch> crop_patch(const ImageSample& img, const LabeledBox& box);

// Crops every box and pushes the non-degenerate crops into the bank.
// Returns the number of patches actually enqueued.
std::size_t bank_update(ObjectBank& bank, const ImageSample& img,
                        std::span<const LabeledBox> boxes);

struct PasteResult {
  ImageSample image;                // input image with patches painted in
  std::vector<LabeledBox> added;    // one box per successful paste, score 1
};

// For each unmatched point, draws a same-class patch uniformly from the bank
// and paints it so that the patch centre sits near the point. The jitter is
// clamped per axis to half the patch extent minus half a pixel, which
// guarantees the pasted box always contains its point, including after
// clipping at the image border. Points whose class queue is empty, or whose
// patch cannot fit in the image, are skipped; with an empty bank the output
// image is bit-identical to the input. `added` boxes are also appended to
// the output sample's box list. Pasting occludes: any input box whose area
// is at least half covered by a pasted patch is dropped from the output box
// list, since its pixels are gone, and a same-class input box containing the
// paste point is dropped as the object being re-rendered. Pasted boxes never
// occlude each other.
PasteResult point_guided_paste(const ImageSample& img,
                               std::span<const PointAnnotation> unmatched_points,
                               const ObjectBank& bank,
                               const AugmentConfig& cfg,
                               std::mt19937_64& rng);
PasteResult point_guided_paste(const ImageSample& img,
                               std::span<const PointAnnotation> unmatched_points,
                               const ObjectBank& bank,
                               const AugmentConfig& cfg);

// Horizontal mirror helpers, shared by the augmentations and by callers that
// carry box lists outside the sample.
BBox flip_box_horizontal(const BBox& b, double image_w);
Point2D flip_point_horizontal(const Point2D& p, double image_w);

struct AugmentOutcome {
  ImageSample image;
  bool flipped = false;
};

// Weak augmentation: horizontal flip with probability cfg.flip_prob. Boxes
// and points embedded in the sample are transformed consistently with the
// pixels.
AugmentOutcome weak_augment(const ImageSample& img, const AugmentConfig& cfg,
                            std::mt19937_64& rng);
AugmentOutcome weak_augment(const ImageSample& img, const AugmentConfig& cfg);

// Strong augmentation: horizontal flip plus photometric jitter (per-channel
// gain and a global brightness shift, clamped to byte range). Geometry moves
// only under the flip, so labels stay aligned with the pixels.
AugmentOutcome strong_augment(const ImageSample& img, const AugmentConfig& cfg,
                              std::mt19937_64& rng);
AugmentOutcome strong_augment(const ImageSample& img, const AugmentConfig& cfg);

}  // namespace pointdet
