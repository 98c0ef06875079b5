#include "pointdet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pointdet/rng.hpp"

namespace pointdet {

ObjectBank::ObjectBank(int num_classes, std::size_t capacity_per_class)
    : queues_(static_cast<std::size_t>(std::max(0, num_classes))), capacity_(capacity_per_class) {
  if (num_classes <= 0) throw std::invalid_argument("ObjectBank: num_classes <= 0");
  if (capacity_ == 0) throw std::invalid_argument("ObjectBank: zero capacity");
}

void ObjectBank::push(Patch p) {
  if (p.label < 0 || p.label >= num_classes())
    throw std::invalid_argument("ObjectBank::push: label out of range");
  auto& q = queues_[static_cast<std::size_t>(p.label)];
  q.push_back(std::move(p));
  if (q.size() > capacity_) q.pop_front();
}

const std::deque<Patch>& ObjectBank::queue(int label) const {
  if (label < 0 || label >= num_classes())
    throw std::invalid_argument("ObjectBank::queue: label out of range");
  return queues_[static_cast<std::size_t>(label)];
}

std::size_t ObjectBank::total_size() const {
  std::size_t t = 0;
  for (const auto& q : queues_) t += q.size();
  return t;
}

std::optional<Patch> crop_patch(const ImageSample& img, const LabeledBox& box) {
  if (!img.pixels) throw std::invalid_argument("crop_patch: sample has no pixels");
  const PixelArray& px = *img.pixels;
  const int x0 = std::max(0, static_cast<int>(std::floor(box.box.x1)));
  const int y0 = std::max(0, static_cast<int>(std::floor(box.box.y1)));
  const int x1 = std::min(px.width, static_cast<int>(std::ceil(box.box.x2)));
  const int y1 = std::min(px.height, static_cast<int>(std::ceil(box.box.y2)));
  if (x1 <= x0 || y1 <= y0) return std::nullopt;
  Patch p;
  p.label = box.label;
  p.pixels = PixelArray(x1 - x0, y1 - y0);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x)
      for (int c = 0; c < 3; ++c) p.pixels.at(x - x0, y - y0, c) = px.at(x, y, c);
  return p;
}

std::size_t bank_update(ObjectBank& bank, const ImageSample& img,
                        std::span<const LabeledBox> boxes) {
  std::size_t n = 0;
  for (const auto& b : boxes) {
    auto patch = crop_patch(img, b);
    if (!patch) continue;
    bank.push(std::move(*patch));
    ++n;
  }
  return n;
}

PasteResult point_guided_paste(const ImageSample& img,
                               std::span<const PointAnnotation> unmatched_points,
                               const ObjectBank& bank,
                               const AugmentConfig& cfg,
                               std::mt19937_64& rng) {
  if (!img.pixels) throw std::invalid_argument("point_guided_paste: sample has no pixels");
  PasteResult out;
  out.image = img;
  PixelArray& px = *out.image.pixels;
  std::vector<char> occluded(img.boxes.size(), 0);

  for (const auto& pt : unmatched_points) {
    if (pt.label < 0 || pt.label >= bank.num_classes())
      throw std::invalid_argument("point_guided_paste: point label out of range");
    const auto& q = bank.queue(pt.label);
    if (q.empty()) continue;
    const auto pick = std::uniform_int_distribution<std::size_t>(0, q.size() - 1)(rng);
    const Patch& patch = q[pick];
    const int w = patch.pixels.width;
    const int h = patch.pixels.height;
    if (w > px.width || h > px.height) continue;  // cannot fit anywhere

    // Centre the patch on the point, jittered. The jitter bound of half the
    // patch extent minus half a pixel keeps the point inside the pasted box
    // even after rounding, and border clamping can only move the box
    // towards containing the point (see the rounding argument in the tests).
    const double jx = std::max(0.0, std::min(cfg.paste_jitter, 0.5 * w - 0.5));
    const double jy = std::max(0.0, std::min(cfg.paste_jitter, 0.5 * h - 0.5));
    const double cx = pt.p.x + std::uniform_real_distribution<double>(-jx, jx)(rng);
    const double cy = pt.p.y + std::uniform_real_distribution<double>(-jy, jy)(rng);
    int left = static_cast<int>(std::lround(cx - 0.5 * w));
    int top = static_cast<int>(std::lround(cy - 0.5 * h));
    left = std::clamp(left, 0, px.width - w);
    top = std::clamp(top, 0, px.height - h);

    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) px.at(left + x, top + y, c) = patch.pixels.at(x, y, c);

    LabeledBox added;
    added.box = {static_cast<double>(left), static_cast<double>(top),
                 static_cast<double>(left + w), static_cast<double>(top + h)};
    added.label = pt.label;
    added.score = 1.0;

    // The patch paints over whatever was underneath; input boxes it mostly
    // covers no longer correspond to visible objects. A same-class box that
    // contains the point is the object the annotator pointed at: the paste
    // re-renders it, so the stale box goes too even if only partly covered.
    for (std::size_t i = 0; i < img.boxes.size(); ++i) {
      const double a = area(img.boxes[i].box);
      if (a > 0.0 && intersection_area(img.boxes[i].box, added.box) >= 0.5 * a) occluded[i] = 1;
      if (img.boxes[i].label == pt.label && contains(img.boxes[i].box, pt.p)) occluded[i] = 1;
    }
    out.added.push_back(added);
  }

  out.image.boxes.clear();
  for (std::size_t i = 0; i < img.boxes.size(); ++i)
    if (!occluded[i]) out.image.boxes.push_back(img.boxes[i]);
  out.image.boxes.insert(out.image.boxes.end(), out.added.begin(), out.added.end());
  return out;
}

PasteResult point_guided_paste(const ImageSample& img,
                               std::span<const PointAnnotation> unmatched_points,
                               const ObjectBank& bank,
                               const AugmentConfig& cfg) {
  auto rng = make_rng(cfg.rng_seed);
  return point_guided_paste(img, unmatched_points, bank, cfg, rng);
}

BBox flip_box_horizontal(const BBox& b, double image_w) {
  return {image_w - b.x2, b.y1, image_w - b.x1, b.y2};
}

Point2D flip_point_horizontal(const Point2D& p, double image_w) {
  return {image_w - p.x, p.y};
}

namespace {

void flip_sample(ImageSample& s) {
  const double w = static_cast<double>(s.width);
  if (s.pixels) {
    PixelArray flipped(s.pixels->width, s.pixels->height);
    for (int y = 0; y < s.pixels->height; ++y)
      for (int x = 0; x < s.pixels->width; ++x)
        for (int c = 0; c < 3; ++c)
          flipped.at(s.pixels->width - 1 - x, y, c) = s.pixels->at(x, y, c);
    *s.pixels = std::move(flipped);
  }
  for (auto& b : s.boxes) b.box = flip_box_horizontal(b.box, w);
  for (auto& p : s.points) p.p = flip_point_horizontal(p.p, w);
}

}  // namespace

AugmentOutcome weak_augment(const ImageSample& img, const AugmentConfig& cfg,
                            std::mt19937_64& rng) {
  AugmentOutcome out;
  out.image = img;
  out.flipped = std::bernoulli_distribution(cfg.flip_prob)(rng);
  if (out.flipped) flip_sample(out.image);
  return out;
}

AugmentOutcome weak_augment(const ImageSample& img, const AugmentConfig& cfg) {
  auto rng = make_rng(cfg.rng_seed);
  return weak_augment(img, cfg, rng);
}

AugmentOutcome strong_augment(const ImageSample& img, const AugmentConfig& cfg,
                              std::mt19937_64& rng) {
  AugmentOutcome out;
  out.image = img;
  out.flipped = std::bernoulli_distribution(cfg.flip_prob)(rng);
  if (out.flipped) flip_sample(out.image);
  if (out.image.pixels) {
    double gain[3];
    for (double& g : gain)
      g = std::uniform_real_distribution<double>(1.0 - cfg.color_gain, 1.0 + cfg.color_gain)(rng);
    const double shift = std::uniform_real_distribution<double>(-cfg.brightness_shift,
                                                               cfg.brightness_shift)(rng);
    for (std::size_t i = 0; i < out.image.pixels->rgb.size(); ++i) {
      const double v = out.image.pixels->rgb[i] * gain[i % 3] + shift;
      out.image.pixels->rgb[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  }
  return out;
}

AugmentOutcome strong_augment(const ImageSample& img, const AugmentConfig& cfg) {
  auto rng = make_rng(cfg.rng_seed);
  return strong_augment(img, cfg, rng);
}

}  // namespace pointdet
