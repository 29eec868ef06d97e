#pragma once

#include "pdm/iou.hpp"

#include <string>
#include <vector>

namespace pdm {

struct ClassAP {
  int label = 0;
  bool present = false;  // false when the class has no ground truth
  std::vector<double> precision, recall;  // along the sorted-score sweep
  double ap_r11 = 0.0, ap_r40 = 0.0;
};

struct APResult {
  double iou_thr = 0.5;
  IouMode mode = IouMode::Full3d;
  std::vector<ClassAP> per_class;
  double mean_ap_r11 = 0.0, mean_ap_r40 = 0.0;  // over present classes
};

// Greedy score-descending matching, each GT used at most once at
// IoU >= iou_thr; interpolated precision is the running maximum from the
// right, sampled at 11 (0,0.1,...,1) or 40 (1/40,...,1) recall points.
APResult average_precision(const std::vector<Detection>& dets,
                           const std::vector<Box3D>& gts, double iou_thr,
                           IouMode mode, int num_classes);

// Same metric with matching kept inside each scene; detections and GT lists
// are parallel per scene.
APResult average_precision_scenes(const std::vector<std::vector<Detection>>& dets,
                                  const std::vector<std::vector<Box3D>>& gts,
                                  double iou_thr, IouMode mode, int num_classes);

struct BenchmarkRow {
  std::string method;
  int count = 0;
  double ms = 0.0;          // median over repeats
  std::size_t bytes = 0;    // transient allocation lower bound
};

// Seeded random clouds, k = count/4 kept points, median wall time over
// >= 5 repetitions. Rows sorted by (count, method).
std::vector<BenchmarkRow> sampling_benchmark(const std::vector<int>& point_counts,
                                             std::uint64_t seed, int repeats = 5);

std::string benchmark_csv(const std::vector<BenchmarkRow>& rows);

// Central finite differences against the analytic gradients of a registered
// op: dense | sampling_loss | scale_coefficient | fusion | heatmap_loss |
// e2e. Trials that land on a relu kink, pooling tie, or other
// non-differentiable point are resampled. Returns the worst relative error.
double gradcheck(const std::string& op, int trials, std::uint64_t seed);

std::vector<std::string> gradcheck_ops();

}  // namespace pdm
