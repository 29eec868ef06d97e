#pragma once

#include "pdm/dense.hpp"
#include "pdm/iou.hpp"
#include "pdm/neck.hpp"

namespace pdm {

struct Heatmap {
  GridSpec spec;
  std::vector<Mat> planes;  // one H x W plane per class

  static Heatmap zeros(const GridSpec& spec, int num_classes);
};

enum class SeedSource { Vote, HeatmapPeak };

struct VoteSet {
  std::vector<int> origins;      // last-stage point index; -1 for peak seeds
  Mat positions;                 // n x 3
  std::vector<SeedSource> sources;
};

// Gaussian splats around each GT center cell, elementwise max across
// overlapping objects; the peak cell is exactly 1. Centers outside the grid
// range are skipped. sigma_r = max(1 cell, min(l,w) / (3 * cell)).
Heatmap heatmap_target(const std::vector<Box3D>& gt, const GridSpec& spec,
                       int num_classes);
Heatmap heatmap_target_serial(const std::vector<Box3D>& gt, const GridSpec& spec,
                              int num_classes);

struct Peak {
  int cls = 0;
  Vec2 xy = Vec2::Zero();  // cell center in world coordinates
  double score = 0;
  CellKey cell = 0;
};

// Top-k cells after 3x3 local-maximum suppression (>= against neighbors),
// ties by lowest linear index, classes pooled.
std::vector<Peak> heatmap_peaks(const Heatmap& hm, int k);

// Vote offsets from a dense head; positions = points + offsets.
VoteSet vote(const Mat& points, const Mat& feats, const Mlp& vote_head,
             std::vector<DenseCache>* caches = nullptr);

// gate = sigmoid(bottleneck([point;grid])), output = [point;grid] .* gate.
struct AttentionCache {
  Mat x;  // concat input
  std::vector<DenseCache> gate_caches;
  Mat gate;
};
Mat channel_attention(const Mat& point_feats, const Mat& grid_feats, const Mlp& gate,
                      AttentionCache* cache = nullptr);
// Returns grads wrt point_feats / grid_feats halves.
void channel_attention_backward(const Mlp& gate, const AttentionCache& cache,
                                const Mat& upstream, Mat* dpoint, Mat* dgrid,
                                std::vector<DenseGrads>* gate_grads);

// Regression head layout per seed row:
//   [ dcenter(3) | size logits(3) | bin logits(B) | bin residuals(B) ]
inline int reg_dim(int angle_bins) { return 6 + 2 * angle_bins; }

double bin_center(int bin, int angle_bins);
int yaw_to_bin(double yaw, int angle_bins);

// center = seed + delta, sizes = softplus(logits), yaw = argmax bin center +
// residual (residual scaled by half the bin width), scores = sigmoid.
std::vector<Detection> decode_boxes(const Mat& cls_logits, const Mat& reg_out,
                                    const Mat& seed_positions, int angle_bins);

std::string detections_to_csv(const std::vector<Detection>& dets);

}  // namespace pdm
