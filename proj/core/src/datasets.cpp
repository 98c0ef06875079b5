#include "pointdet/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pointdet/rng.hpp"

namespace pointdet {

namespace {

using nlohmann::json;

const json& require_field(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw ParseError(where + ": missing field '" + key + "'", 0);
  return *it;
}

double require_number(const json& obj, const char* key, const std::string& where) {
  const json& v = require_field(obj, key, where);
  if (!v.is_number()) throw ParseError(where + ": field '" + key + "' is not a number", 0);
  return v.get<double>();
}

std::int64_t require_int(const json& obj, const char* key, const std::string& where) {
  const json& v = require_field(obj, key, where);
  if (!v.is_number_integer())
    throw ParseError(where + ": field '" + key + "' is not an integer", 0);
  return v.get<std::int64_t>();
}

CocoLoadResult load_parsed(const json& root) {
  if (!root.is_object()) throw ParseError("top level is not an object", 0);
  const json& images = require_field(root, "images", "document");
  const json& annotations = require_field(root, "annotations", "document");
  const json& categories = require_field(root, "categories", "document");
  if (!images.is_array() || !annotations.is_array() || !categories.is_array())
    throw ParseError("images/annotations/categories must be arrays", 0);

  CocoLoadResult out;

  // Categories first: ascending original id -> contiguous label.
  std::map<std::int64_t, std::string> cats;
  for (std::size_t i = 0; i < categories.size(); ++i) {
    const std::string where = "categories[" + std::to_string(i) + "]";
    const json& c = categories[i];
    if (!c.is_object()) throw ParseError(where + ": not an object", 0);
    const std::int64_t id = require_int(c, "id", where);
    const json& name = require_field(c, "name", where);
    if (!name.is_string()) throw ParseError(where + ": field 'name' is not a string", 0);
    if (!cats.emplace(id, name.get<std::string>()).second)
      throw IntegrityError(where + ": duplicate category id " + std::to_string(id));
  }
  std::map<std::int64_t, int> label_of;
  for (const auto& [id, name] : cats) {
    label_of[id] = static_cast<int>(out.category_ids.size());
    out.category_ids.push_back(id);
    out.category_names.push_back(name);
  }
  out.dataset.num_classes = static_cast<int>(out.category_ids.size());

  std::map<std::int64_t, std::size_t> image_index;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string where = "images[" + std::to_string(i) + "]";
    const json& im = images[i];
    if (!im.is_object()) throw ParseError(where + ": not an object", 0);
    ImageSample s;
    s.image_id = require_int(im, "id", where);
    s.width = static_cast<int>(require_number(im, "width", where));
    s.height = static_cast<int>(require_number(im, "height", where));
    if (s.width <= 0 || s.height <= 0)
      throw IntegrityError(where + ": non-positive image extent");
    if (!image_index.emplace(s.image_id, out.dataset.images.size()).second)
      throw IntegrityError(where + ": duplicate image id " + std::to_string(s.image_id));
    out.dataset.images.push_back(std::move(s));
  }

  std::set<std::int64_t> ann_ids;
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const std::string where = "annotations[" + std::to_string(i) + "]";
    const json& a = annotations[i];
    if (!a.is_object()) throw ParseError(where + ": not an object", 0);
    const std::int64_t ann_id = require_int(a, "id", where);
    if (!ann_ids.insert(ann_id).second)
      throw IntegrityError(where + ": duplicate annotation id " + std::to_string(ann_id));
    const std::int64_t image_id = require_int(a, "image_id", where);
    const std::int64_t cat_id = require_int(a, "category_id", where);
    auto img_it = image_index.find(image_id);
    if (img_it == image_index.end())
      throw IntegrityError(where + ": unknown image id " + std::to_string(image_id));
    auto cat_it = label_of.find(cat_id);
    if (cat_it == label_of.end())
      throw IntegrityError(where + ": unknown category id " + std::to_string(cat_id));

    const json& bbox = require_field(a, "bbox", where);
    if (!bbox.is_array() || bbox.size() != 4 ||
        !std::all_of(bbox.begin(), bbox.end(), [](const json& v) { return v.is_number(); }))
      throw ParseError(where + ": bbox must be [x, y, w, h]", 0);
    const double x = bbox[0].get<double>();
    const double y = bbox[1].get<double>();
    const double w = bbox[2].get<double>();
    const double h = bbox[3].get<double>();
    if (w < 0.0 || h < 0.0) throw IntegrityError(where + ": negative box extent");

    ImageSample& img = out.dataset.images[img_it->second];
    img.boxes.push_back({{x, y, x + w, y + h}, cat_it->second, 1.0});

    if (auto pit = a.find("point"); pit != a.end()) {
      const json& pt = *pit;
      if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number())
        throw ParseError(where + ": point must be [x, y]", 0);
      img.points.push_back({{pt[0].get<double>(), pt[1].get<double>()}, cat_it->second});
    }
  }
  return out;
}

}  // namespace

CocoLoadResult load_coco_from_string(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), e.byte);
  }
  return load_parsed(root);
}

CocoLoadResult load_coco_json(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return load_coco_from_string(ss.str());
}

std::vector<PointAnnotation> synthesize_points(const ImageSample& img, PointMode mode,
                                               std::uint64_t seed) {
  std::vector<PointAnnotation> pts;
  pts.reserve(img.boxes.size());
  auto rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(img.image_id)));
  for (const auto& b : img.boxes) {
    PointAnnotation p;
    p.label = b.label;
    if (mode == PointMode::kCenter || b.box.width() <= 0.0 || b.box.height() <= 0.0) {
      p.p = {b.box.cx(), b.box.cy()};
    } else {
      p.p.x = std::uniform_real_distribution<double>(b.box.x1, b.box.x2)(rng);
      p.p.y = std::uniform_real_distribution<double>(b.box.y1, b.box.y2)(rng);
    }
    pts.push_back(p);
  }
  return pts;
}

std::size_t fraction_count(double frac, std::size_t n) {
  if (frac < 0.0 || frac > 1.0)
    throw std::invalid_argument("fraction_count: fraction outside [0,1]");
  const double raw = frac * static_cast<double>(n);
  const auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::min(k, n);
}

SplitSpec make_splits(std::size_t n_images, double full_fraction, double point_fraction,
                      std::uint64_t seed) {
  if (full_fraction < 0.0 || point_fraction < 0.0 || full_fraction + point_fraction > 1.0 + 1e-12)
    throw std::invalid_argument("make_splits: fractions must be non-negative and sum to <= 1");
  std::vector<int> order(n_images);
  for (std::size_t i = 0; i < n_images; ++i) order[i] = static_cast<int>(i);
  auto rng = make_rng(derive_seed(seed, 0x5714ULL));
  std::shuffle(order.begin(), order.end(), rng);

  SplitSpec spec;
  spec.full_fraction = full_fraction;
  spec.point_fraction = point_fraction;
  spec.seed = seed;
  const std::size_t n_full = fraction_count(full_fraction, n_images);
  const std::size_t n_point = std::min(fraction_count(point_fraction, n_images),
                                       n_images - n_full);
  spec.full.assign(order.begin(), order.begin() + n_full);
  spec.point.assign(order.begin() + n_full, order.begin() + n_full + n_point);
  spec.unused.assign(order.begin() + n_full + n_point, order.end());
  return spec;
}

SplitData materialize_split(const Dataset& ds, const SplitSpec& spec, PointMode mode,
                            std::uint64_t point_seed) {
  SplitData out;
  auto check = [&](int idx) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= ds.images.size())
      throw std::invalid_argument("materialize_split: index out of range");
    return static_cast<std::size_t>(idx);
  };
  for (int idx : spec.full) {
    ImageSample s = ds.images[check(idx)];
    s.points.clear();
    out.full.push_back(std::move(s));
  }
  for (int idx : spec.point) {
    ImageSample s = ds.images[check(idx)];
    s.points = synthesize_points(s, mode, point_seed);
    s.boxes.clear();
    out.point.push_back(std::move(s));
  }
  return out;
}

}  // namespace pointdet
