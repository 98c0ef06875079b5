#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "pointdet/geometry.hpp"
#include "pointdet/mat.hpp"

namespace pointdet {

// Label value used for rows whose classification argmax lands on the
// background column. Background rows never become detections but still
// contribute to the multiple-instance losses.
inline constexpr int kBackground = -1;

// Per-image proposal head outputs for C foreground classes:
//   s    : N x (C+1) classification logits, last column = background
//   s_I  : N x C     image-evidence logits (normalised per class, across rows)
//   s_P  : N x 2     positive/negative logits, column 1 = positive
// All three matrices are raw logits; normalisation happens inside the ops
// that consume them.
struct ProposalSet {
  std::vector<BBox> boxes;
  Mat s;
  Mat s_I;
  Mat s_P;

  std::size_t size() const { return boxes.size(); }
  int num_classes() const { return static_cast<int>(s_I.cols()); }

  // Throws std::invalid_argument unless all shapes agree:
  // |boxes| = s.rows = s_I.rows = s_P.rows, s.cols = s_I.cols + 1,
  // s_P.cols = 2. An empty set (zero proposals) is valid.
  void validate() const {
    const std::size_t n = boxes.size();
    if (s.rows() != n || s_I.rows() != n || s_P.rows() != n)
      throw std::invalid_argument("ProposalSet: row counts disagree with box count");
    if (n == 0) return;
    if (s.cols() != s_I.cols() + 1)
      throw std::invalid_argument("ProposalSet: s must have one more column than s_I");
    if (s.cols() < 2)
      throw std::invalid_argument("ProposalSet: need at least one foreground class");
    if (s_P.cols() != 2)
      throw std::invalid_argument("ProposalSet: s_P must have exactly two columns");
  }
};

// Interleaved RGB byte image, row-major. Kept deliberately tiny: the
// augmentation ops need real pixels to move around, nothing more.
struct PixelArray {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // height * width * 3

  PixelArray() = default;
  PixelArray(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::uint8_t& at(int x, int y, int c) {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  bool valid() const {
    return width >= 0 && height >= 0 &&
           rgb.size() == static_cast<std::size_t>(width) * height * 3;
  }
};

// One dataset image. Fully-labelled images carry `boxes`; point-only images
// carry `points` and an empty `boxes`. `pixels` is optional because most of
// the pipeline is geometry-only; the augmentation ops require it.
struct ImageSample {
  std::int64_t image_id = 0;
  int width = 0;
  int height = 0;
  std::optional<PixelArray> pixels;
  std::vector<LabeledBox> boxes;
  std::vector<PointAnnotation> points;
};

struct Dataset {
  std::vector<ImageSample> images;
  int num_classes = 0;
};

}  // namespace pointdet
