// Command-line surface over the pipeline. Every subcommand that writes
// files writes a run manifest first, so an interrupted run is
// distinguishable from a finished one and any run can be replayed with
// `rerun`. All outputs are deterministic given the flags.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pointdet/datasets.hpp"
#include "pointdet/evaluation.hpp"
#include "pointdet/io.hpp"
#include "pointdet/matching.hpp"
#include "pointdet/mil.hpp"
#include "pointdet/rng.hpp"
#include "pointdet/sim.hpp"

namespace {

using namespace pointdet;
namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// Bad inputs exit 2; failed checks exit 1 (see dispatch()).
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void require_file(const fs::path& p, const std::string& flag) {
  if (!fs::exists(p)) throw InputError(flag + ": no such file: " + p.string());
}

void write_json(const fs::path& p, const ordered_json& j) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

ordered_json quality_json(const std::optional<PseudoQuality>& q) {
  if (!q) return nullptr;
  ordered_json j;
  j["n_pred"] = q->n_pred;
  j["n_gt"] = q->n_gt;
  j["tp50"] = q->tp50;
  j["precision50"] = q->precision50;
  j["recall50"] = q->recall50;
  j["ap50"] = q->ap50 ? ordered_json(*q->ap50) : ordered_json(nullptr);
  j["ap5095"] = q->ap5095 ? ordered_json(*q->ap5095) : ordered_json(nullptr);
  return j;
}

PointMode parse_point_mode(const std::string& s) {
  return s == "center" ? PointMode::kCenter : PointMode::kRandom;
}

// ---------------------------------------------------------------- match --

// Detections exchange format: a flat list of
//   {image_id, box: [x1,y1,x2,y2], label, score, s_row: [C+1], s_P_row: [2]}
// grouped here by image id in first-appearance order. The image-evidence
// logits are not part of the format (matching never reads them); they are
// filled with zeros to satisfy the shape contract.
std::vector<std::pair<std::int64_t, DetectionField>> load_detections_json(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw InputError("cannot open " + file.string());
  ordered_json root;
  try {
    root = ordered_json::parse(in);
  } catch (const ordered_json::parse_error& e) {
    throw ParseError(file.string() + ": " + e.what(), e.byte);
  }
  if (!root.is_array()) throw ParseError(file.string() + ": top level must be an array", 0);

  struct Raw {
    BBox box;
    int label = 0;
    double score = 0.0;
    std::vector<double> s_row, s_p_row;
  };
  std::vector<std::int64_t> order;
  std::map<std::int64_t, std::vector<Raw>> groups;

  for (std::size_t k = 0; k < root.size(); ++k) {
    const auto& rec = root[k];
    const std::string where = file.string() + ": detections[" + std::to_string(k) + "]";
    if (!rec.is_object()) throw ParseError(where + " must be an object", 0);
    auto id_it = rec.find("image_id");
    if (id_it == rec.end() || !id_it->is_number_integer())
      throw ParseError(where + ": missing integer field 'image_id'", 0);
    auto nums = [&](const char* key, std::size_t want, bool exact) {
      auto it = rec.find(key);
      if (it == rec.end() || !it->is_array())
        throw ParseError(where + ": missing array field '" + std::string(key) + "'", 0);
      std::vector<double> v;
      for (const auto& x : *it) {
        if (!x.is_number()) throw ParseError(where + ": non-numeric entry in '" + std::string(key) + "'", 0);
        v.push_back(x.get<double>());
      }
      if ((exact && v.size() != want) || (!exact && v.size() < want))
        throw ParseError(where + ": '" + std::string(key) + "' has wrong length", 0);
      return v;
    };
    Raw r;
    const auto b = nums("box", 4, true);
    r.box = {b[0], b[1], b[2], b[3]};
    auto lab_it = rec.find("label");
    if (lab_it == rec.end() || !lab_it->is_number_integer())
      throw ParseError(where + ": missing integer field 'label'", 0);
    r.label = lab_it->get<int>();
    auto sc_it = rec.find("score");
    if (sc_it == rec.end() || !sc_it->is_number())
      throw ParseError(where + ": missing numeric field 'score'", 0);
    r.score = sc_it->get<double>();
    r.s_row = nums("s_row", 2, false);
    r.s_p_row = nums("s_P_row", 2, true);

    const std::int64_t id = id_it->get<std::int64_t>();
    if (!groups.count(id)) order.push_back(id);
    auto& g = groups[id];
    if (!g.empty() && g.front().s_row.size() != r.s_row.size())
      throw ParseError(where + ": 's_row' length differs within image " + std::to_string(id), 0);
    const int C = static_cast<int>(r.s_row.size()) - 1;
    if (r.label < kBackground || r.label >= C)
      throw ParseError(where + ": label out of range for " + std::to_string(C) + " classes", 0);
    g.push_back(std::move(r));
  }

  std::vector<std::pair<std::int64_t, DetectionField>> out;
  for (const auto id : order) {
    const auto& g = groups[id];
    const std::size_t n = g.size();
    const std::size_t cols = g.front().s_row.size();
    DetectionField f;
    f.proposals.s = Mat(n, cols);
    f.proposals.s_I = Mat(n, cols - 1);
    f.proposals.s_P = Mat(n, 2);
    for (std::size_t r = 0; r < n; ++r) {
      f.proposals.boxes.push_back(g[r].box);
      for (std::size_t c = 0; c < cols; ++c) f.proposals.s(r, c) = g[r].s_row[c];
      f.proposals.s_P(r, 0) = g[r].s_p_row[0];
      f.proposals.s_P(r, 1) = g[r].s_p_row[1];
      f.labels.push_back(g[r].label);
      f.scores.push_back(g[r].score);
    }
    f.validate();
    out.emplace_back(id, std::move(f));
  }
  return out;
}

struct MatchOpts {
  std::string annotations, detections, out;
  double tau = 0.05;
  double nms_iou = 0.5;
  std::vector<std::string> argv;
};

void run_match(const MatchOpts& o) {
  require_file(o.annotations, "--annotations");
  require_file(o.detections, "--detections");
  const auto points = load_points_json(o.annotations);
  const auto dets = load_detections_json(o.detections);
  std::map<std::int64_t, const DetectionField*> by_id;
  for (const auto& [id, f] : dets) by_id[id] = &f;

  RunManifest m;
  m.command = "match";
  m.arguments = o.argv;
  m.config = {{"annotations", o.annotations},
              {"detections", o.detections},
              {"tau", fmt(o.tau)},
              {"nms_iou", fmt(o.nms_iou)}};
  m.outputs = {o.out};
  write_run_manifest(o.out + ".manifest.json", m);

  const MatchConfig cfg{o.tau, o.nms_iou};
  ordered_json images = ordered_json::array();
  std::size_t total_points = 0, matched = 0;
  for (const auto& ip : points) {
    const DetectionField empty;
    const DetectionField* raw = by_id.count(ip.image_id) ? by_id[ip.image_id] : &empty;
    const DetectionField kept = apply_nms(*raw, o.nms_iou);
    const MatchResult res = generate_pseudo_labels(ip.points, kept, cfg);
    total_points += ip.points.size();
    matched += res.pairs.size();

    ordered_json jim;
    jim["image_id"] = ip.image_id;
    ordered_json pairs = ordered_json::array();
    for (const auto& pr : res.pairs) {
      // detection indexes the post-suppression list handed to the matcher
      ordered_json jp;
      jp["point"] = pr.point_index;
      jp["detection"] = pr.detection_index;
      jp["cost"] = pr.cost;
      pairs.push_back(std::move(jp));
    }
    jim["pairs"] = std::move(pairs);
    ordered_json boxes = ordered_json::array();
    for (const auto& pb : res.pseudo_boxes) {
      ordered_json jb;
      jb["box"] = {pb.box.x1, pb.box.y1, pb.box.x2, pb.box.y2};
      jb["label"] = pb.label;
      jb["score"] = pb.score;
      boxes.push_back(std::move(jb));
    }
    jim["pseudo_boxes"] = std::move(boxes);
    jim["unmatched_points"] = res.unmatched_points;
    images.push_back(std::move(jim));
  }

  ordered_json out;
  out["images"] = std::move(images);
  ordered_json summary;
  summary["points"] = total_points;
  summary["matched"] = matched;
  summary["unmatched_fraction"] =
      total_points == 0 ? 0.0
                        : static_cast<double>(total_points - matched) / static_cast<double>(total_points);
  out["summary"] = std::move(summary);
  write_json(o.out, out);
  std::printf("matched %zu of %zu points (unmatched fraction %s)\n", matched, total_points,
              fmt(out["summary"]["unmatched_fraction"].get<double>()).c_str());
}

// --------------------------------------------------------------- losses --

struct LossesOpts {
  std::string proposals, points, out;
  double lambda1 = 1.0, lambda2 = 0.05, l_det = 0.0;
  bool check_grads = false;
  bool have_out = false;
  std::vector<std::string> argv;
};

// Central differences on one logit matrix of a rebuilt forward. Errors are
// measured relative to max(|analytic|, |numeric|, 1): the CLI check is a
// smoke test on O(1) fixture logits, not the long-double acceptance oracle.
template <typename Forward>
double max_fd_error(const ProposalSet& ps, Mat ProposalSet::*field, const Mat& analytic,
                    Forward fwd) {
  constexpr double h = 1e-6;
  double worst = 0.0;
  ProposalSet work = ps;
  Mat& target = work.*field;
  for (std::size_t r = 0; r < target.rows(); ++r)
    for (std::size_t c = 0; c < target.cols(); ++c) {
      const double keep = target(r, c);
      target(r, c) = keep + h;
      const double up = fwd(work);
      target(r, c) = keep - h;
      const double dn = fwd(work);
      target(r, c) = keep;
      const double fd = (up - dn) / (2.0 * h);
      const double a = analytic(r, c);
      const double err = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1.0});
      worst = std::max(worst, err);
    }
  return worst;
}

void run_losses(const LossesOpts& o) {
  require_file(o.proposals, "--proposals");
  require_file(o.points, "--points");
  const auto proposals = load_proposals_json(o.proposals);
  const auto points = load_points_json(o.points);
  std::map<std::int64_t, const std::vector<PointAnnotation>*> pts_by_id;
  for (const auto& ip : points) pts_by_id[ip.image_id] = &ip.points;

  if (o.have_out) {
    RunManifest m;
    m.command = "losses";
    m.arguments = o.argv;
    m.config = {{"proposals", o.proposals},
                {"points", o.points},
                {"lambda1", fmt(o.lambda1)},
                {"lambda2", fmt(o.lambda2)},
                {"l_det", fmt(o.l_det)},
                {"check_grads", o.check_grads ? "true" : "false"}};
    m.outputs = {o.out};
    write_run_manifest(o.out + ".manifest.json", m);
  }

  const LossWeights w{o.lambda1, o.lambda2};
  ordered_json jimages = ordered_json::array();
  double sum_total = 0.0;
  double worst = 0.0;
  for (const auto& ipr : proposals) {
    const ProposalSet& ps = ipr.proposals;
    const std::vector<PointAnnotation> none;
    const auto& pts = pts_by_id.count(ipr.image_id) ? *pts_by_id[ipr.image_id] : none;
    const int C = ps.num_classes();
    for (const auto& pa : pts)
      if (pa.label < 0 || pa.label >= C)
        throw InputError(o.points + ": image " + std::to_string(ipr.image_id) +
                         " has a point label outside [0, " + std::to_string(C) + ")");
    const auto labels = derive_image_labels(pts, C);
    const auto det_labels = make_labeled_detections(ps).labels;
    const auto bags = build_bags(pts, ps, det_labels);
    std::vector<int> bag_labels;
    for (const auto& pa : pts) bag_labels.push_back(pa.label);

    const auto img = image_mil_loss(ps, labels);
    const auto pt = point_mil_loss(ps, bags, bag_labels);
    const auto tot = total_loss(o.l_det, img, pt, w);
    sum_total += tot.value;
    std::printf("image %lld: l_det=%s l_img=%s l_pt=%s total=%s active_bags=%d\n",
                static_cast<long long>(ipr.image_id), fmt(tot.l_det).c_str(),
                fmt(tot.l_img).c_str(), fmt(tot.l_pt).c_str(), fmt(tot.value).c_str(),
                pt.active_bags);
    ordered_json ji;
    ji["image_id"] = ipr.image_id;
    ji["l_det"] = tot.l_det;
    ji["l_img"] = tot.l_img;
    ji["l_pt"] = tot.l_pt;
    ji["total"] = tot.value;
    ji["active_bags"] = pt.active_bags;
    jimages.push_back(std::move(ji));

    if (o.check_grads && ps.size() > 0) {
      // The point term's classification factors are treated as constants,
      // so its only honest derivative is through s_P; the image term owns
      // s and s_I. Each is differenced against its own forward.
      worst = std::max(worst, max_fd_error(ps, &ProposalSet::s, img.d_s, [&](const ProposalSet& p) {
                         return image_mil_loss(p, labels).value;
                       }));
      worst = std::max(worst, max_fd_error(ps, &ProposalSet::s_I, img.d_s_I, [&](const ProposalSet& p) {
                         return image_mil_loss(p, labels).value;
                       }));
      worst = std::max(worst, max_fd_error(ps, &ProposalSet::s_P, pt.d_s_P, [&](const ProposalSet& p) {
                         return point_mil_loss(p, bags, bag_labels).value;
                       }));
    }
  }
  const double mean = proposals.empty() ? 0.0 : sum_total / static_cast<double>(proposals.size());
  std::printf("mean total over %zu images: %s\n", proposals.size(), fmt(mean).c_str());

  constexpr double kGradTol = 1e-6;
  if (o.check_grads)
    std::printf("max gradient error: %.3g (tolerance %.0e)\n", worst, kGradTol);

  if (o.have_out) {
    ordered_json out;
    out["images"] = std::move(jimages);
    out["mean_total"] = mean;
    if (o.check_grads) {
      ordered_json gc;
      gc["max_error"] = worst;
      gc["tolerance"] = kGradTol;
      gc["pass"] = worst <= kGradTol;
      out["grad_check"] = std::move(gc);
    }
    write_json(o.out, out);
  }
  if (o.check_grads && worst > kGradTol)
    throw CheckFailure("gradient check failed: max error " + fmt(worst) + " > " + fmt(kGradTol));
}

// ---------------------------------------------------------- synth-points --

struct SynthOpts {
  std::string coco, out;
  std::string mode = "random";
  std::uint64_t seed = 0;
  std::vector<std::string> argv;
};

void run_synth_points(const SynthOpts& o) {
  require_file(o.coco, "--coco");
  const auto loaded = load_coco_json(o.coco);

  RunManifest m;
  m.command = "synth-points";
  m.seed = o.seed;
  m.arguments = o.argv;
  m.config = {{"coco", o.coco}, {"mode", o.mode}, {"seed", std::to_string(o.seed)}};
  m.outputs = {o.out};
  write_run_manifest(o.out + ".manifest.json", m);

  const PointMode mode = parse_point_mode(o.mode);
  std::vector<ImagePoints> out;
  std::size_t total = 0;
  for (const auto& img : loaded.dataset.images) {
    if (img.boxes.empty()) continue;
    ImagePoints ip;
    ip.image_id = img.image_id;
    ip.points = synthesize_points(img, mode, o.seed);
    total += ip.points.size();
    out.push_back(std::move(ip));
  }
  save_points_json(o.out, out);
  std::printf("wrote %zu points for %zu images\n", total, out.size());
}

// ------------------------------------------------------ simulate / sweep --

struct DatasetOpts {
  std::string dataset;  // empty: synthesise
  bool have_dataset = false;
  int images = 0;
  int classes = 0;
  double label_decay = 0.0;
};

Dataset build_dataset(const DatasetOpts& d, std::uint64_t seed) {
  if (d.have_dataset) {
    require_file(d.dataset, "--dataset");
    Dataset ds = load_coco_json(d.dataset).dataset;
    // Annotation files carry geometry only; rasterise scenes so the
    // photometric augmentations and the copy-paste bank have pixels.
    for (auto& img : ds.images)
      if (!img.pixels)
        paint_scene(img, derive_seed(seed, 0xB1A5ULL ^ static_cast<std::uint64_t>(img.image_id)));
    return ds;
  }
  SyntheticDatasetConfig dc = benchmark_dataset_config();
  dc.n_images = d.images;
  dc.num_classes = d.classes;
  dc.label_decay = d.label_decay;
  dc.seed = seed;
  return make_synthetic_dataset(dc);
}

void echo_dataset(std::map<std::string, std::string>& cfg, const DatasetOpts& d) {
  if (d.have_dataset) {
    cfg["dataset"] = d.dataset;
  } else {
    cfg["dataset"] = "synthetic";
    cfg["images"] = std::to_string(d.images);
    cfg["classes"] = std::to_string(d.classes);
    cfg["label_decay"] = fmt(d.label_decay);
  }
}

void echo_sim(std::map<std::string, std::string>& cfg, const SimConfig& sc) {
  cfg["tau"] = fmt(sc.match.tau);
  cfg["nms_iou"] = fmt(sc.match.nms_iou);
  cfg["lambda1"] = fmt(sc.weights.lambda1);
  cfg["lambda2"] = fmt(sc.weights.lambda2);
  cfg["ema_alpha"] = fmt(sc.ema_alpha);
  cfg["learning_rate"] = fmt(sc.learning_rate);
  cfg["temp_learning_rate"] = fmt(sc.temp_learning_rate);
  cfg["temp_raw_min"] = fmt(sc.temp_raw_min);
  cfg["temp_raw_max"] = fmt(sc.temp_raw_max);
  cfg["batch_full"] = std::to_string(sc.batch_full);
  cfg["batch_point"] = std::to_string(sc.batch_point);
  cfg["eval_every"] = std::to_string(sc.eval_every);
  cfg["eval_images"] = std::to_string(sc.eval_images);
  cfg["point_mode"] = sc.point_mode == PointMode::kCenter ? "center" : "random";
  cfg["bias_init"] = fmt(sc.bias_init);
  cfg["temp_init"] = fmt(sc.temp_init);
  cfg["use_matching"] = sc.use_matching ? "true" : "false";
  cfg["use_image_mil"] = sc.use_image_mil ? "true" : "false";
  cfg["use_point_mil"] = sc.use_point_mil ? "true" : "false";
  cfg["use_copy_paste"] = sc.use_copy_paste ? "true" : "false";
  cfg["fp_rate"] = fmt(sc.oracle.fp_rate);
  cfg["label_flip_prob"] = fmt(sc.oracle.label_flip_prob);
  cfg["miss_rate"] = fmt(sc.oracle.miss_rate);
  cfg["coord_noise"] = fmt(sc.oracle.coord_noise);
  cfg["box_dilation"] = fmt(sc.oracle.box_dilation);
  cfg["sharpness"] = fmt(sc.oracle.sharpness);
  cfg["pos_margin"] = fmt(sc.oracle.pos_margin);
  cfg["spurious_label_decay"] = fmt(sc.oracle.spurious_label_decay);
  cfg["flip_prob"] = fmt(sc.augment.flip_prob);
  cfg["color_gain"] = fmt(sc.augment.color_gain);
  cfg["brightness_shift"] = fmt(sc.augment.brightness_shift);
  cfg["paste_jitter"] = fmt(sc.augment.paste_jitter);
  cfg["bank_capacity"] = std::to_string(sc.augment.bank_capacity);
}

struct SimulateOpts {
  std::string out;
  DatasetOpts data;
  double full_frac = 0.01, point_frac = 0.3;
  int iters = 600;
  int eval_images = 0;  // 0 keeps the benchmark default
  std::uint64_t seed = 7;
  std::string point_mode = "random";
  bool no_matching = false, no_image_mil = false, no_point_mil = false, no_copy_paste = false;
  std::vector<std::string> argv;
};

SimConfig sim_config_from(const SimulateOpts& o, int num_classes) {
  SimConfig sc = benchmark_sim_config();
  sc.num_classes = num_classes;
  sc.seed = o.seed;
  sc.point_mode = parse_point_mode(o.point_mode);
  sc.use_matching = !o.no_matching;
  sc.use_image_mil = !o.no_image_mil;
  sc.use_point_mil = !o.no_point_mil;
  sc.use_copy_paste = !o.no_copy_paste;
  if (o.eval_images > 0) sc.eval_images = o.eval_images;
  return sc;
}

void run_simulate(const SimulateOpts& o) {
  if (o.full_frac + o.point_frac > 1.0 + 1e-12)
    throw InputError("--full-frac plus --point-frac exceeds 1");
  const Dataset ds = build_dataset(o.data, o.seed);
  const SimConfig sc = sim_config_from(o, ds.num_classes);
  const SplitSpec split =
      make_splits(ds.images.size(), o.full_frac, o.point_frac, o.seed);

  const fs::path outdir{o.out};
  fs::create_directories(outdir);
  RunManifest m;
  m.command = "simulate";
  m.seed = o.seed;
  m.arguments = o.argv;
  echo_dataset(m.config, o.data);
  echo_sim(m.config, sc);
  m.config["full_fraction"] = fmt(o.full_frac);
  m.config["point_fraction"] = fmt(o.point_frac);
  m.config["iterations"] = std::to_string(o.iters);
  m.config["seed"] = std::to_string(o.seed);
  m.outputs = {(outdir / "split.json").string(), (outdir / "metrics.csv").string(),
               (outdir / "final.json").string()};
  write_run_manifest(outdir / "manifest.json", m);

  write_split_manifest(outdir / "split.json", split);
  const SimulationResult res = run_simulation(ds, split, o.iters, sc);
  write_metrics_csv(outdir / "metrics.csv", res.reports);

  ordered_json fin;
  fin["iterations"] = o.iters;
  fin["eval_images"] = res.eval_image_count;
  fin["initial_eval"] = quality_json(res.initial_eval);
  fin["final_eval"] = quality_json(res.final_eval);
  auto params_json = [](const DetectorParams& p) {
    ordered_json j;
    j["bias"] = p.bias;
    j["temp_raw"] = p.temp_raw;
    std::vector<double> temps;
    for (int k = 0; k < p.num_classes(); ++k) temps.push_back(p.temperature(k));
    j["temperature"] = temps;
    return j;
  };
  fin["teacher"] = params_json(res.final_state.teacher);
  fin["student"] = params_json(res.final_state.student);
  fin["bank_total"] = res.final_state.bank.total_size();
  if (!res.reports.empty()) {
    const auto& last = res.reports.back();
    ordered_json lr;
    lr["iteration"] = last.iteration;
    lr["l_det"] = last.l_det;
    lr["l_img"] = last.l_img;
    lr["l_pt"] = last.l_pt;
    lr["total"] = last.total;
    lr["pseudo_count"] = last.pseudo_count;
    lr["unmatched_fraction"] = last.unmatched_frac;
    fin["last_report"] = std::move(lr);
  }
  write_json(outdir / "final.json", fin);

  if (res.final_eval && res.final_eval->ap50)
    std::printf("final pseudo AP50 = %s, AP50:95 = %s (over %d images)\n",
                fmt(*res.final_eval->ap50).c_str(),
                res.final_eval->ap5095 ? fmt(*res.final_eval->ap5095).c_str() : "n/a",
                res.eval_image_count);
  else
    std::printf("final evaluation had no ground truth\n");
}

struct SweepOpts {
  std::string out;
  DatasetOpts data;
  std::vector<double> fractions{0.05, 0.10, 0.20, 0.40};
  double full_frac = 0.01;
  int iters = 600;
  // The evaluation prefix must stay well below the smallest arm's image count
  // or the small arms have nothing left to train on.
  int eval_images = 48;
  std::uint64_t seed = 7;
  std::string point_mode = "random";
  std::vector<std::string> argv;
};

void run_sweep(const SweepOpts& o) {
  if (o.fractions.empty()) throw InputError("--fractions must name at least one fraction");
  for (const double f : o.fractions)
    if (!(f > 0.0 && f <= 1.0)) throw InputError("--fractions entries must lie in (0, 1]");
  const double top = *std::max_element(o.fractions.begin(), o.fractions.end());
  if (o.full_frac + top > 1.0 + 1e-12)
    throw InputError("--full-frac plus the largest fraction exceeds 1");

  const Dataset ds = build_dataset(o.data, o.seed);
  SimulateOpts base;
  base.seed = o.seed;
  base.point_mode = o.point_mode;
  base.eval_images = o.eval_images;
  const SimConfig sc = sim_config_from(base, ds.num_classes);

  const fs::path outdir{o.out};
  fs::create_directories(outdir);
  RunManifest m;
  m.command = "sweep";
  m.seed = o.seed;
  m.arguments = o.argv;
  echo_dataset(m.config, o.data);
  echo_sim(m.config, sc);
  std::string flist;
  for (const double f : o.fractions) flist += (flist.empty() ? "" : ",") + fmt(f);
  m.config["fractions"] = flist;
  m.config["full_fraction"] = fmt(o.full_frac);
  m.config["iterations"] = std::to_string(o.iters);
  m.config["seed"] = std::to_string(o.seed);
  m.outputs = {(outdir / "sweep.csv").string(), (outdir / "summary.json").string()};
  write_run_manifest(outdir / "manifest.json", m);

  const auto arms = sweep_point_fraction(ds, o.fractions, o.full_frac, o.iters, sc);

  std::ofstream csv(outdir / "sweep.csv", std::ios::binary | std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot write sweep.csv");
  csv << "fraction,n_point_images,n_pred,n_gt,tp50,precision50,recall50,ap50,ap5095\n";
  for (const auto& a : arms) {
    csv << fmt(a.point_fraction) << ',' << a.n_point_images << ',';
    if (a.final_eval) {
      const auto& q = *a.final_eval;
      csv << q.n_pred << ',' << q.n_gt << ',' << q.tp50 << ',' << fmt(q.precision50) << ','
          << fmt(q.recall50) << ',' << (q.ap50 ? fmt(*q.ap50) : "") << ','
          << (q.ap5095 ? fmt(*q.ap5095) : "");
    } else {
      csv << ",,,,,,";
    }
    csv << '\n';
  }
  csv.close();

  std::vector<double> xs, ys;
  for (const auto& a : arms)
    if (a.final_eval && a.final_eval->ap50) {
      xs.push_back(a.point_fraction);
      ys.push_back(*a.final_eval->ap50);
    }
  std::optional<double> rho;
  if (xs.size() >= 2) rho = spearman_rank(xs, ys);

  ordered_json summary;
  summary["fractions"] = o.fractions;
  summary["full_fraction"] = o.full_frac;
  summary["iterations"] = o.iters;
  summary["seed"] = o.seed;
  summary["spearman_ap50"] = rho ? ordered_json(*rho) : ordered_json(nullptr);
  ordered_json jarms = ordered_json::array();
  for (const auto& a : arms) {
    ordered_json ja;
    ja["fraction"] = a.point_fraction;
    ja["n_point_images"] = a.n_point_images;
    ja["eval"] = quality_json(a.final_eval);
    jarms.push_back(std::move(ja));
  }
  summary["arms"] = std::move(jarms);
  write_json(outdir / "summary.json", summary);

  for (const auto& a : arms)
    std::printf("fraction %s: %d point images, AP50 = %s\n", fmt(a.point_fraction).c_str(),
                a.n_point_images,
                a.final_eval && a.final_eval->ap50 ? fmt(*a.final_eval->ap50).c_str() : "n/a");
  if (rho) std::printf("spearman(fraction, AP50) = %s\n", fmt(*rho).c_str());
}

// ----------------------------------------------------------------- eval --

struct EvalOpts {
  std::string preds, gt, out, errors_csv;
  bool errors = false;
  bool have_out = false, have_errors_csv = false;
  std::vector<std::string> argv;
};

void run_eval(const EvalOpts& o) {
  require_file(o.preds, "--preds");
  require_file(o.gt, "--gt");
  const auto pred_images = load_boxes_json(o.preds);
  const auto gt_images = load_boxes_json(o.gt);

  // Align by image id: ground-truth file order first, then prediction-only
  // images (their boxes are all false positives).
  std::vector<std::int64_t> order;
  std::map<std::int64_t, std::size_t> slot;
  auto place = [&](std::int64_t id) {
    if (!slot.count(id)) {
      slot[id] = order.size();
      order.push_back(id);
    }
  };
  for (const auto& g : gt_images) place(g.image_id);
  for (const auto& p : pred_images) place(p.image_id);
  std::vector<std::vector<LabeledBox>> preds(order.size()), gts(order.size());
  for (const auto& g : gt_images) gts[slot[g.image_id]] = g.boxes;
  for (const auto& p : pred_images) preds[slot[p.image_id]] = p.boxes;

  if (o.have_out || o.have_errors_csv) {
    RunManifest m;
    m.command = "eval";
    m.arguments = o.argv;
    m.config = {{"preds", o.preds},
                {"gt", o.gt},
                {"errors", o.errors ? "true" : "false"}};
    if (o.have_out) m.outputs.push_back(o.out);
    if (o.have_errors_csv) m.outputs.push_back(o.errors_csv);
    const std::string anchor = o.have_out ? o.out : o.errors_csv;
    write_run_manifest(anchor + ".manifest.json", m);
  }

  const auto thresholds = coco_iou_thresholds();
  const auto ap = average_precision(preds, gts, thresholds);
  if (ap)
    std::printf("AP50 = %s, AP50:95 = %s\n", fmt(ap->per_threshold.front()).c_str(),
                fmt(ap->mean).c_str());
  else
    std::printf("no ground truth boxes; AP undefined\n");

  std::optional<ErrorDecomposition> dec;
  if (o.errors || o.have_errors_csv) {
    dec = error_decomposition(preds, gts);
    if (o.errors) {
      std::printf("true positives:  %d\n", dec->true_positives);
      std::printf("classification:  %d\n", dec->classification);
      std::printf("localisation:    %d\n", dec->localisation);
      std::printf("both:            %d\n", dec->both);
      std::printf("duplicate:       %d\n", dec->duplicate);
      std::printf("background:      %d\n", dec->background);
      std::printf("missed:          %d\n", dec->missed);
    }
  }

  if (o.have_out) {
    ordered_json j;
    if (ap) {
      j["ap50"] = ap->per_threshold.front();
      j["ap5095"] = ap->mean;
      j["per_threshold"] = ap->per_threshold;
    } else {
      j["ap50"] = nullptr;
      j["ap5095"] = nullptr;
      j["per_threshold"] = ordered_json::array();
    }
    if (dec) {
      ordered_json je;
      je["true_positives"] = dec->true_positives;
      je["classification"] = dec->classification;
      je["localisation"] = dec->localisation;
      je["both"] = dec->both;
      je["duplicate"] = dec->duplicate;
      je["background"] = dec->background;
      je["missed"] = dec->missed;
      j["errors"] = std::move(je);
    }
    write_json(o.out, j);
  }
  if (o.have_errors_csv) {
    std::ofstream csv(o.errors_csv, std::ios::binary | std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write " + o.errors_csv);
    csv << "error,count\n";
    csv << "classification," << dec->classification << '\n';
    csv << "localisation," << dec->localisation << '\n';
    csv << "both," << dec->both << '\n';
    csv << "duplicate," << dec->duplicate << '\n';
    csv << "background," << dec->background << '\n';
    csv << "missed," << dec->missed << '\n';
  }
}

// ------------------------------------------------------------- dispatch --

int dispatch(const std::vector<std::string>& args);

void run_rerun(const std::string& manifest_path) {
  require_file(manifest_path, "manifest");
  const RunManifest m = load_run_manifest(manifest_path);
  if (m.command == "rerun") throw InputError("refusing to rerun a rerun manifest");
  const int rc = dispatch(m.arguments);
  if (rc != 0) throw CheckFailure("rerun of '" + m.command + "' exited " + std::to_string(rc));
}

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Point-supervised detection pipeline"};
  app.require_subcommand(1);

  MatchOpts mo;
  auto* match = app.add_subcommand("match", "Assign annotated points to detections, emit pseudo boxes");
  match->add_option("--annotations", mo.annotations, "points JSON")->required();
  match->add_option("--detections", mo.detections, "detections JSON")->required();
  match->add_option("--tau", mo.tau, "confidence floor")->check(CLI::Range(0.0, 1.0));
  match->add_option("--nms-iou", mo.nms_iou, "suppression IoU")->check(CLI::Range(0.0, 1.0));
  match->add_option("--out", mo.out, "result JSON")->required();

  LossesOpts lo;
  auto* losses = app.add_subcommand("losses", "Evaluate the multiple-instance losses on fixtures");
  losses->add_option("--proposals", lo.proposals, "proposals JSON")->required();
  losses->add_option("--points", lo.points, "points JSON")->required();
  losses->add_option("--lambda1", lo.lambda1, "image-level weight");
  losses->add_option("--lambda2", lo.lambda2, "point-level weight");
  losses->add_option("--l-det", lo.l_det, "detection loss constant");
  losses->add_flag("--check-grads", lo.check_grads, "compare gradients to finite differences");
  auto* lo_out = losses->add_option("--out", lo.out, "result JSON");

  SynthOpts so;
  auto* synth = app.add_subcommand("synth-points", "Derive one point per box from an annotation file");
  synth->add_option("--coco", so.coco, "COCO-style JSON")->required();
  synth->add_option("--mode", so.mode, "random|center")
      ->check(CLI::IsMember({"random", "center"}));
  synth->add_option("--seed", so.seed, "point stream seed");
  synth->add_option("--out", so.out, "points JSON")->required();

  const SyntheticDatasetConfig ddef = benchmark_dataset_config();
  auto add_dataset_flags = [&](CLI::App* cmd, DatasetOpts& d) {
    d.images = ddef.n_images;
    d.classes = ddef.num_classes;
    d.label_decay = ddef.label_decay;
    auto* ds_opt = cmd->add_option("--dataset", d.dataset, "COCO-style JSON (default: synthetic)");
    auto* im = cmd->add_option("--images", d.images, "synthetic image count")->check(CLI::PositiveNumber);
    auto* cl = cmd->add_option("--classes", d.classes, "synthetic class count")->check(CLI::PositiveNumber);
    auto* de = cmd->add_option("--label-decay", d.label_decay, "geometric class weight decay")
                   ->check(CLI::Range(0.0, 1.0));
    ds_opt->excludes(im)->excludes(cl)->excludes(de);
    return ds_opt;
  };

  SimulateOpts simo;
  auto* sim = app.add_subcommand("simulate", "Teacher-student pseudo-labelling loop");
  sim->add_option("--out", simo.out, "output directory")->required();
  auto* sim_ds = add_dataset_flags(sim, simo.data);
  sim->add_option("--full-frac", simo.full_frac, "fully boxed fraction")->check(CLI::Range(0.0, 1.0));
  sim->add_option("--point-frac", simo.point_frac, "point-labelled fraction")->check(CLI::Range(0.0, 1.0));
  sim->add_option("--iters", simo.iters, "training iterations")->check(CLI::PositiveNumber);
  sim->add_option("--eval-images", simo.eval_images, "held-out evaluation image budget")
      ->check(CLI::PositiveNumber);
  sim->add_option("--seed", simo.seed, "master seed");
  sim->add_option("--point-mode", simo.point_mode, "random|center")
      ->check(CLI::IsMember({"random", "center"}));
  sim->add_flag("--no-matching", simo.no_matching, "threshold pseudo labels instead of matching");
  sim->add_flag("--no-image-mil", simo.no_image_mil, "drop the image-level term");
  sim->add_flag("--no-point-mil", simo.no_point_mil, "drop the point-level term");
  sim->add_flag("--no-copy-paste", simo.no_copy_paste, "disable point-guided pastes");

  SweepOpts swo;
  auto* sweep = app.add_subcommand("sweep", "Simulate across point-labelled fractions");
  sweep->add_option("--out", swo.out, "output directory")->required();
  auto* sweep_ds = add_dataset_flags(sweep, swo.data);
  sweep->add_option("--fractions", swo.fractions, "comma-separated point fractions")->delimiter(',');
  sweep->add_option("--full-frac", swo.full_frac, "fully boxed fraction")->check(CLI::Range(0.0, 1.0));
  sweep->add_option("--iters", swo.iters, "training iterations per arm")->check(CLI::PositiveNumber);
  sweep->add_option("--eval-images", swo.eval_images, "held-out evaluation image budget per arm")
      ->check(CLI::PositiveNumber);
  sweep->add_option("--seed", swo.seed, "master seed");
  sweep->add_option("--point-mode", swo.point_mode, "random|center")
      ->check(CLI::IsMember({"random", "center"}));

  EvalOpts eo;
  auto* eval = app.add_subcommand("eval", "Score predictions against ground truth");
  eval->add_option("--preds", eo.preds, "predictions boxes JSON")->required();
  eval->add_option("--gt", eo.gt, "ground-truth boxes JSON")->required();
  eval->add_flag("--errors", eo.errors, "print the six-way error decomposition");
  auto* eo_out = eval->add_option("--out", eo.out, "result JSON");
  auto* eo_csv = eval->add_option("--errors-csv", eo.errors_csv, "error histogram CSV");

  std::string rerun_path;
  auto* rerun = app.add_subcommand("rerun", "Replay a command from its run manifest");
  rerun->add_option("manifest", rerun_path, "manifest JSON")->required();

  match->callback([&] {
    mo.argv = args;
    run_match(mo);
  });
  losses->callback([&] {
    lo.argv = args;
    lo.have_out = lo_out->count() > 0;
    run_losses(lo);
  });
  synth->callback([&] {
    so.argv = args;
    run_synth_points(so);
  });
  sim->callback([&] {
    simo.argv = args;
    simo.data.have_dataset = sim_ds->count() > 0;
    run_simulate(simo);
  });
  sweep->callback([&] {
    swo.argv = args;
    swo.data.have_dataset = sweep_ds->count() > 0;
    run_sweep(swo);
  });
  eval->callback([&] {
    eo.argv = args;
    eo.have_out = eo_out->count() > 0;
    eo.have_errors_csv = eo_csv->count() > 0;
    run_eval(eo);
  });
  rerun->callback([&] { run_rerun(rerun_path); });

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(std::move(rev));
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const IntegrityError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const CheckFailure& e) {
    std::fprintf(stderr, "check failed: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  return dispatch(std::vector<std::string>(argv + 1, argv + argc));
}
