#pragma once

#include "pdm/config.hpp"
#include "pdm/dense.hpp"
#include "pdm/sampling.hpp"

namespace pdm {

// Per center: the first k ascending source indices within `radius`. Fewer
// than k found repeats the first hit; an empty ball falls back to the
// center's nearest source index.
IMat ball_query(const Mat& centers, const Mat& source, double radius, int k);
IMat ball_query_serial(const Mat& centers, const Mat& source, double radius, int k);

struct StageOutput {
  Mat coords;                // npoint x 3
  Mat feats;                 // npoint x C
  std::vector<int> indices;  // into the previous stage
};

// Parameters of one multi-scale grouping stage.
struct SAStageParams {
  SAStageSpec spec;
  std::vector<Mlp> branches;  // one per radius, relu throughout
  DenseLayer agg;             // relu aggregation over concatenated branches

  static SAStageParams init(const SAStageSpec& spec, int in_dim, std::mt19937_64& rng);
  int out_dim() const { return static_cast<int>(agg.b.size()); }
};

struct SACache {
  std::vector<IMat> group_idx;                    // per branch, M x k
  std::vector<std::vector<DenseCache>> branch_caches;
  std::vector<IMat> argmax;                       // per branch, M x Cb row index into grouped
  std::vector<double> pool_gap;                   // per branch, min max1-max2 gap
  DenseCache agg_cache;
  Mat concat;                                     // pooled branch concat (pre-agg)
  Eigen::Index n_src = 0;
};

struct SAGrads {
  std::vector<std::vector<DenseGrads>> branches;
  DenseGrads agg;

  static SAGrads zeros(const SAStageParams& p);
  void add_scaled(const SAGrads& other, double s);
};

// Group (feature, neighbor - center), branch MLPs, max-pool over the ball,
// concat branches, aggregate.
StageOutput set_abstraction(const SAStageParams& stage, const StageOutput& prev,
                            const Mat& centers, SACache* cache = nullptr);

// Reverse pass. dcenters collects the gradient through the relative-offset
// channels (needed when centers are themselves predicted, e.g. vote points).
void set_abstraction_backward(const SAStageParams& stage, const SACache& cache,
                              const Mat& dfeats_out, Mat* dprev_feats,
                              Mat* dcenters, SAGrads* grads);

double sa_min_kink_gap(const SAStageParams& stage, const SACache& cache);

}  // namespace pdm
