#pragma once

#include "pdm/types.hpp"

namespace pdm {

struct SampleResult {
  std::vector<int> indices;  // sampled order preserved, unique
};

struct ForegroundScores {
  Vec scores;  // one per point, in [0,1]
};

// k distinct indices drawn uniformly without replacement, deterministic per
// seed. k > n clamps to n.
SampleResult sample_random(int n_pts, int k, std::uint64_t seed);

// Greedy farthest point sampling in coordinate space. indices[0] = start;
// ties broken by lowest index. k clamps to N.
SampleResult sample_dfps(const PointCloud& cloud, int k, int start);

// Same greedy loop with distances measured between feature rows.
SampleResult sample_featfps(const PointCloud& cloud, int k, int start);

// Indices of the k largest scores, descending, ties by lowest index.
SampleResult sample_topk_foreground(const ForegroundScores& scores, int k);

// Eq-style centrality: cube root of the product of min/max ratios of
// opposing face distances in the box frame. 0 outside the box.
double centrality_mask(const Box3D& b, const Vec3& p);

// Fraction of GT boxes containing at least one kept point. 1.0 when there
// are no boxes.
double instance_recall(const SceneSample& scene, const SampleResult& kept);

}  // namespace pdm
