#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "pointdet/types.hpp"

namespace pointdet {

// Structurally bad input: JSON that does not parse, or records with missing
// or mistyped fields. Token-level failures carry the byte offset reported by
// the parser; schema failures carry offset 0 and a record path in the
// message.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, std::size_t byte_offset)
      : std::runtime_error(msg), byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_ = 0;
};

// Well-formed input whose cross-references are broken: annotations pointing
// at unknown images or categories, duplicate ids, negative extents.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CocoLoadResult {
  Dataset dataset;
  std::vector<std::string> category_names;     // index = contiguous label
  std::vector<std::int64_t> category_ids;      // original id per label
};

// Loads a COCO-style annotation file:
//   images:      [{id, width, height, ...}]
//   annotations: [{id, image_id, category_id, bbox: [x, y, w, h],
//                  optional point: [x, y]}]
//   categories:  [{id, name}]
// Category ids are remapped to contiguous labels in ascending id order.
// Boxes are converted to corner form. Annotations carrying "point" also
// yield a point annotation with the same label.
CocoLoadResult load_coco_json(const std::filesystem::path& file);
CocoLoadResult load_coco_from_string(const std::string& text);

enum class PointMode {
  kRandom,  // uniform inside the box
  kCenter,  // box centre
};

// One point per box. Random mode draws per-image from a stream derived from
// (seed, image_id), so an image receives identical points no matter which
// split or fraction it lands in.
std::vector<PointAnnotation> synthesize_points(const ImageSample& img, PointMode mode,
                                               std::uint64_t seed);

// Index split of a dataset: a fully-boxed part, a point-only part, and the
// remainder. Order within each part is selection order (a prefix of one
// seeded shuffle), so for a fixed seed the parts are nested across growing
// fractions and the first k elements of `point` are the same list for every
// fraction that selects at least k images.
struct SplitSpec {
  std::vector<int> full;
  std::vector<int> point;
  std::vector<int> unused;
  double full_fraction = 0.0;
  double point_fraction = 0.0;
  std::uint64_t seed = 0;
};

// ceil(frac * n) with a tolerance for the usual binary-fraction round-up
// artefacts (0.01 * 100 must give 1, not 2).
std::size_t fraction_count(double frac, std::size_t n);

SplitSpec make_splits(std::size_t n_images, double full_fraction, double point_fraction,
                      std::uint64_t seed);

struct SplitData {
  std::vector<ImageSample> full;   // boxes kept, points cleared
  std::vector<ImageSample> point;  // boxes dropped, points synthesised from them
};

// Materialises the two training pools. Point-only samples lose their boxes
// after point synthesis; the caller keeps the original dataset if it needs
// ground truth (for evaluation only).
SplitData materialize_split(const Dataset& ds, const SplitSpec& spec, PointMode mode,
                            std::uint64_t point_seed);

}  // namespace pointdet
