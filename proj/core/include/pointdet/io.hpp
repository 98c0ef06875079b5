#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pointdet/datasets.hpp"
#include "pointdet/sim.hpp"
#include "pointdet/types.hpp"

namespace pointdet {

// File formats are JSON with stable key order and CSV with a fixed header,
// so byte-identical reruns stay byte-identical. No timestamps anywhere.

struct ImagePoints {
  std::int64_t image_id = 0;
  std::vector<PointAnnotation> points;
};

struct ImageProposals {
  std::int64_t image_id = 0;
  ProposalSet proposals;
};

struct ImageBoxes {
  std::int64_t image_id = 0;
  std::vector<LabeledBox> boxes;
};

// points file: flat [{image_id, x, y, label}], grouped on load by image id
// in first-appearance order.
std::vector<ImagePoints> load_points_json(const std::filesystem::path& file);
void save_points_json(const std::filesystem::path& file, std::span<const ImagePoints> points);

// proposals file: [{image_id, boxes: [[x1,y1,x2,y2]...],
//                   s: [[C+1]...], s_I: [[C]...], s_P: [[2]...]}]
std::vector<ImageProposals> load_proposals_json(const std::filesystem::path& file);
void save_proposals_json(const std::filesystem::path& file,
                         std::span<const ImageProposals> proposals);

// boxes file: [{image_id, boxes: [{box: [x1,y1,x2,y2], label, score}...]}]
std::vector<ImageBoxes> load_boxes_json(const std::filesystem::path& file);
void save_boxes_json(const std::filesystem::path& file, std::span<const ImageBoxes> boxes);

// Training metrics table. Evaluation columns are empty on iterations without
// an evaluation pass.
void write_metrics_csv(const std::filesystem::path& file,
                       std::span<const IterationReport> reports);

void write_split_manifest(const std::filesystem::path& file, const SplitSpec& spec);
SplitSpec load_split_manifest(const std::filesystem::path& file);

inline constexpr const char* kToolVersion = "0.1.0";

// Run manifest: what ran, with which inputs, expecting which outputs.
// Written before any result file so a crashed run is distinguishable from a
// finished one.
struct RunManifest {
  std::string command;
  std::uint64_t seed = 0;
  std::vector<std::string> arguments;
  std::map<std::string, std::string> config;
  std::vector<std::string> outputs;
};

void write_run_manifest(const std::filesystem::path& file, const RunManifest& manifest);
RunManifest load_run_manifest(const std::filesystem::path& file);

}  // namespace pointdet
