#pragma once

#include "pdm/types.hpp"

#include <array>
#include <iosfwd>
#include <map>
#include <string>

namespace pdm {

enum class AugmentKind { Flip, Rotate, Scale };

struct ScenarioSpec {
  std::uint64_t seed = 0;
  int scene_count = 1;
  int min_boxes = 1, max_boxes = 3;
  // per class: {l_min, l_max, w_min, w_max, h_min, h_max}
  std::vector<std::array<double, 6>> class_sizes = {{3.0, 4.5, 1.5, 1.9, 1.4, 1.8}};
  double yaw_min = -M_PI, yaw_max = M_PI;
  int min_points_per_box = 30, max_points_per_box = 80;
  int clutter_points = 100;
  double sparsify = 0.0;   // fraction of box points dropped
  double occlusion = 0.0;  // probability a box keeps one yaw-aligned half only
  GridSpec grid;

  void check() const;
  static ScenarioSpec from_key_values(const std::map<std::string, std::string>& kv);
};

// Deterministic per (spec.seed, index). Boxes rest on the ground plane and
// carry surface-sampled points; clutter hugs the ground. Point features are
// [1, z] and are recomputed after any geometric transform.
SceneSample generate_scene(const ScenarioSpec& spec, int index);

SceneSample augment(const SceneSample& scene, AugmentKind kind, std::uint64_t seed);

// Copies donor boxes with their interior points into free space (bev IoU
// < 0.05 against existing boxes), skipping donors with fewer than
// min_points points. Best effort counts per class.
SceneSample gt_paste(const SceneSample& scene, const std::vector<SceneSample>& donors,
                     const std::vector<int>& per_class_counts, int min_points,
                     std::uint64_t seed);

// Text scene records, bit-exact round trip at 17 significant digits.
std::string scenes_to_text(const std::vector<SceneSample>& scenes);
std::vector<SceneSample> scenes_from_text(const std::string& text);
void save_scenes(const std::string& path, const std::vector<SceneSample>& scenes);
std::vector<SceneSample> load_scenes(const std::string& path);

Mat scene_features(const Mat& coords);

}  // namespace pdm
