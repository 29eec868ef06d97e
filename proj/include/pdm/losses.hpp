#pragma once

#include "pdm/heads.hpp"
#include "pdm/sampling.hpp"

#include <map>

namespace pdm {

struct LossBreakdown {
  double sample = 0, vote = 0, cls = 0, loc = 0, size = 0;
  double angle_bin = 0, angle_res = 0, corner = 0, heatmap = 0, l2 = 0;
  double total = 0;

  std::map<std::string, double> parts() const;
};

inline constexpr double kProbEps = 1e-7;

// Binary cross entropy on a clamped probability.
double bce(double prob, double target);
// d bce / d prob at the same clamp.
double bce_dprob(double prob, double target);

double smooth_l1(double err);   // delta = 1
double smooth_l1_grad(double err);

// Centrality-masked foreground BCE plus unmasked background BCE, mean over
// points. `scores` are per-class sigmoid probabilities (n x num_classes);
// classes are summed. Optional grad wrt scores (same shape).
double sampling_loss(const Mat& scores, const SceneSample& scene,
                     const std::vector<int>& point_ids, Mat* dscores = nullptr);

// Mean smooth-L1 between foreground voted positions and their owning GT
// centers. `owner` is the box index per vote (-1 background). Grad wrt
// positions optional.
double vote_loss(const Mat& positions, const std::vector<int>& owner,
                 const std::vector<Box3D>& gt, Mat* dpositions = nullptr);

// Per-class BCE with centrality-soft targets for the assigned box (hard
// {0,1} with soft_targets=false), mean over seeds, summed over classes.
double cls_loss(const Mat& cls_probs, const std::vector<int>& owner,
                const std::vector<Box3D>& gt, const Mat& seed_positions,
                bool soft_targets, Mat* dprobs = nullptr);

struct RegLossParts {
  double loc = 0, size = 0, angle_bin = 0, angle_res = 0, corner = 0;
};

// Box-parameter regression against assigned GT boxes (foreground seeds
// only). Layout of reg_out rows matches reg_dim(). Corner loss decodes with
// the GT angle bin and takes the min over yaw vs yaw+pi.
RegLossParts reg_loss(const Mat& reg_out, const Mat& seed_positions,
                      const std::vector<int>& owner, const std::vector<Box3D>& gt,
                      int angle_bins, Mat* dreg = nullptr);

// Penalty-reduced focal loss (alpha=2, beta=4) normalized by GT peak count.
double heatmap_loss(const Heatmap& pred, const Heatmap& target,
                    Heatmap* dpred = nullptr);

// Weighted sum of parts plus lambda * sum(param^2). Fills breakdown.total.
double total_loss(LossBreakdown& parts, const std::map<std::string, double>& weights,
                  double l2_lambda, double param_sq_sum);

}  // namespace pdm
