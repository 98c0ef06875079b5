#include "pointdet/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace pointdet {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json parse_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return ordered_json::parse(ss.str());
  } catch (const ordered_json::parse_error& e) {
    throw ParseError(file.string() + ": " + e.what(), e.byte);
  }
}

void write_file(const std::filesystem::path& file, const ordered_json& j) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << j.dump(2) << '\n';
}

double num(const ordered_json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number())
    throw ParseError(where + ": missing numeric field '" + key + "'", 0);
  return it->get<double>();
}

std::vector<std::vector<double>> num_matrix(const ordered_json& j, const char* key,
                                            const std::string& where) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_array())
    throw ParseError(where + ": missing array field '" + key + "'", 0);
  std::vector<std::vector<double>> rows;
  for (const auto& r : *it) {
    if (!r.is_array()) throw ParseError(where + ": '" + std::string(key) + "' rows must be arrays", 0);
    std::vector<double> row;
    for (const auto& v : r) {
      if (!v.is_number()) throw ParseError(where + ": non-numeric entry in '" + key + "'", 0);
      row.push_back(v.get<double>());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat to_mat(const std::vector<std::vector<double>>& rows, std::size_t cols,
           const std::string& where) {
  Mat m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw ParseError(where + ": ragged matrix", 0);
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = rows[r][c];
  }
  return m;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::vector<ImagePoints> load_points_json(const std::filesystem::path& file) {
  const ordered_json root = parse_file(file);
  if (!root.is_array()) throw ParseError(file.string() + ": top level must be an array", 0);
  std::vector<ImagePoints> out;
  std::map<std::int64_t, std::size_t> index;
  for (std::size_t i = 0; i < root.size(); ++i) {
    const std::string where = "points[" + std::to_string(i) + "]";
    const auto& p = root[i];
    if (!p.is_object()) throw ParseError(where + ": not an object", 0);
    const auto id = static_cast<std::int64_t>(num(p, "image_id", where));
    auto [it, inserted] = index.emplace(id, out.size());
    if (inserted) out.push_back({id, {}});
    PointAnnotation pa;
    pa.p.x = num(p, "x", where);
    pa.p.y = num(p, "y", where);
    pa.label = static_cast<int>(num(p, "label", where));
    out[it->second].points.push_back(pa);
  }
  return out;
}

void save_points_json(const std::filesystem::path& file, std::span<const ImagePoints> points) {
  ordered_json root = ordered_json::array();
  for (const auto& img : points)
    for (const auto& p : img.points) {
      ordered_json j;
      j["image_id"] = img.image_id;
      j["x"] = p.p.x;
      j["y"] = p.p.y;
      j["label"] = p.label;
      root.push_back(std::move(j));
    }
  write_file(file, root);
}

std::vector<ImageProposals> load_proposals_json(const std::filesystem::path& file) {
  const ordered_json root = parse_file(file);
  if (!root.is_array()) throw ParseError(file.string() + ": top level must be an array", 0);
  std::vector<ImageProposals> out;
  for (std::size_t i = 0; i < root.size(); ++i) {
    const std::string where = "proposals[" + std::to_string(i) + "]";
    const auto& rec = root[i];
    if (!rec.is_object()) throw ParseError(where + ": not an object", 0);
    ImageProposals ip;
    ip.image_id = static_cast<std::int64_t>(num(rec, "image_id", where));
    const auto boxes = num_matrix(rec, "boxes", where);
    for (const auto& b : boxes) {
      if (b.size() != 4) throw ParseError(where + ": boxes must have four coordinates", 0);
      ip.proposals.boxes.push_back({b[0], b[1], b[2], b[3]});
    }
    const auto s = num_matrix(rec, "s", where);
    const auto s_i = num_matrix(rec, "s_I", where);
    const auto s_p = num_matrix(rec, "s_P", where);
    const std::size_t cols = s.empty() ? 0 : s.front().size();
    const std::size_t cols_i = s_i.empty() ? (cols > 0 ? cols - 1 : 0) : s_i.front().size();
    ip.proposals.s = to_mat(s, cols, where);
    ip.proposals.s_I = to_mat(s_i, cols_i, where);
    ip.proposals.s_P = to_mat(s_p, s_p.empty() ? 0 : 2, where);
    try {
      ip.proposals.validate();
    } catch (const std::invalid_argument& e) {
      throw IntegrityError(where + ": " + e.what());
    }
    out.push_back(std::move(ip));
  }
  return out;
}

void save_proposals_json(const std::filesystem::path& file,
                         std::span<const ImageProposals> proposals) {
  ordered_json root = ordered_json::array();
  for (const auto& ip : proposals) {
    ordered_json rec;
    rec["image_id"] = ip.image_id;
    ordered_json boxes = ordered_json::array();
    for (const auto& b : ip.proposals.boxes) boxes.push_back({b.x1, b.y1, b.x2, b.y2});
    rec["boxes"] = std::move(boxes);
    auto mat_to_json = [](const Mat& m) {
      ordered_json rows = ordered_json::array();
      for (std::size_t r = 0; r < m.rows(); ++r) {
        ordered_json row = ordered_json::array();
        for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
      }
      return rows;
    };
    rec["s"] = mat_to_json(ip.proposals.s);
    rec["s_I"] = mat_to_json(ip.proposals.s_I);
    rec["s_P"] = mat_to_json(ip.proposals.s_P);
    root.push_back(std::move(rec));
  }
  write_file(file, root);
}

std::vector<ImageBoxes> load_boxes_json(const std::filesystem::path& file) {
  const ordered_json root = parse_file(file);
  if (!root.is_array()) throw ParseError(file.string() + ": top level must be an array", 0);
  std::vector<ImageBoxes> out;
  for (std::size_t i = 0; i < root.size(); ++i) {
    const std::string where = "boxes[" + std::to_string(i) + "]";
    const auto& rec = root[i];
    if (!rec.is_object()) throw ParseError(where + ": not an object", 0);
    ImageBoxes ib;
    ib.image_id = static_cast<std::int64_t>(num(rec, "image_id", where));
    auto it = rec.find("boxes");
    if (it == rec.end() || !it->is_array())
      throw ParseError(where + ": missing array field 'boxes'", 0);
    for (const auto& b : *it) {
      if (!b.is_object()) throw ParseError(where + ": box entries must be objects", 0);
      auto bit = b.find("box");
      if (bit == b.end() || !bit->is_array() || bit->size() != 4)
        throw ParseError(where + ": box must be [x1,y1,x2,y2]", 0);
      for (const auto& v : *bit)
        if (!v.is_number()) throw ParseError(where + ": box coordinates must be numbers", 0);
      LabeledBox lb;
      lb.box = {(*bit)[0].get<double>(), (*bit)[1].get<double>(), (*bit)[2].get<double>(),
                (*bit)[3].get<double>()};
      lb.label = static_cast<int>(num(b, "label", where));
      auto sit = b.find("score");
      lb.score = sit != b.end() && sit->is_number() ? sit->get<double>() : 1.0;
      ib.boxes.push_back(lb);
    }
    out.push_back(std::move(ib));
  }
  return out;
}

void save_boxes_json(const std::filesystem::path& file, std::span<const ImageBoxes> boxes) {
  ordered_json root = ordered_json::array();
  for (const auto& ib : boxes) {
    ordered_json rec;
    rec["image_id"] = ib.image_id;
    ordered_json arr = ordered_json::array();
    for (const auto& b : ib.boxes) {
      ordered_json j;
      j["box"] = {b.box.x1, b.box.y1, b.box.x2, b.box.y2};
      j["label"] = b.label;
      j["score"] = b.score;
      arr.push_back(std::move(j));
    }
    rec["boxes"] = std::move(arr);
    root.push_back(std::move(rec));
  }
  write_file(file, root);
}

void write_metrics_csv(const std::filesystem::path& file,
                       std::span<const IterationReport> reports) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "iteration,l_det,l_img,l_pt,total,pseudo_count,unmatched_fraction,"
         "pseudo_ap50,pseudo_ap5095,pseudo_precision50,pseudo_recall50,point_batch_empty\n";
  for (const auto& r : reports) {
    out << r.iteration << ',' << fmt(r.l_det) << ',' << fmt(r.l_img) << ',' << fmt(r.l_pt) << ','
        << fmt(r.total) << ',' << r.pseudo_count << ',' << fmt(r.unmatched_frac) << ',';
    if (r.eval) {
      out << (r.eval->ap50 ? fmt(*r.eval->ap50) : "") << ','
          << (r.eval->ap5095 ? fmt(*r.eval->ap5095) : "") << ',' << fmt(r.eval->precision50)
          << ',' << fmt(r.eval->recall50);
    } else {
      out << ",,,";
    }
    out << ',' << (r.point_batch_empty ? 1 : 0) << '\n';
  }
}

void write_split_manifest(const std::filesystem::path& file, const SplitSpec& spec) {
  ordered_json j;
  j["seed"] = spec.seed;
  j["full_fraction"] = spec.full_fraction;
  j["point_fraction"] = spec.point_fraction;
  j["full"] = spec.full;
  j["point"] = spec.point;
  j["unused"] = spec.unused;
  write_file(file, j);
}

SplitSpec load_split_manifest(const std::filesystem::path& file) {
  const ordered_json j = parse_file(file);
  if (!j.is_object()) throw ParseError(file.string() + ": top level must be an object", 0);
  SplitSpec spec;
  spec.seed = static_cast<std::uint64_t>(num(j, "seed", "split"));
  spec.full_fraction = num(j, "full_fraction", "split");
  spec.point_fraction = num(j, "point_fraction", "split");
  auto indices = [&](const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_array())
      throw ParseError(std::string("split: missing array field '") + key + "'", 0);
    std::vector<int> v;
    for (const auto& e : *it) {
      if (!e.is_number_integer()) throw ParseError(std::string("split: '") + key + "' must hold integers", 0);
      v.push_back(e.get<int>());
    }
    return v;
  };
  spec.full = indices("full");
  spec.point = indices("point");
  spec.unused = indices("unused");
  return spec;
}

void write_run_manifest(const std::filesystem::path& file, const RunManifest& manifest) {
  ordered_json j;
  j["tool"] = "pointdet";
  j["version"] = kToolVersion;
  j["command"] = manifest.command;
  j["seed"] = manifest.seed;
  j["arguments"] = manifest.arguments;
  ordered_json cfg = ordered_json::object();
  for (const auto& [k, v] : manifest.config) cfg[k] = v;
  j["config"] = std::move(cfg);
  j["outputs"] = manifest.outputs;
  write_file(file, j);
}

RunManifest load_run_manifest(const std::filesystem::path& file) {
  const ordered_json j = parse_file(file);
  const std::string where = file.string();
  if (!j.is_object()) throw ParseError(where + ": manifest must be an object", 0);
  RunManifest m;
  auto str = [&](const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string())
      throw ParseError(where + ": missing string field '" + std::string(key) + "'", 0);
    return it->get<std::string>();
  };
  m.command = str("command");
  auto sit = j.find("seed");
  if (sit == j.end() || !sit->is_number_unsigned())
    throw ParseError(where + ": missing unsigned field 'seed'", 0);
  m.seed = sit->get<std::uint64_t>();
  auto strings = [&](const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_array())
      throw ParseError(where + ": missing array field '" + std::string(key) + "'", 0);
    std::vector<std::string> out;
    for (const auto& v : *it) {
      if (!v.is_string()) throw ParseError(where + ": non-string entry in '" + std::string(key) + "'", 0);
      out.push_back(v.get<std::string>());
    }
    return out;
  };
  m.arguments = strings("arguments");
  m.outputs = strings("outputs");
  auto cit = j.find("config");
  if (cit == j.end() || !cit->is_object())
    throw ParseError(where + ": missing object field 'config'", 0);
  for (const auto& [k, v] : cit->items()) {
    if (!v.is_string()) throw ParseError(where + ": non-string config value '" + k + "'", 0);
    m.config[k] = v.get<std::string>();
  }
  return m;
}

}  // namespace pointdet
