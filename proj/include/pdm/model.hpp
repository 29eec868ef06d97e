#pragma once

#include "pdm/backbone.hpp"
#include "pdm/heads.hpp"
#include "pdm/losses.hpp"
#include "pdm/neck.hpp"
#include "pdm/scenegen.hpp"

namespace pdm {

struct ModelGrads;

// The whole detector: point embedding, SA encoder with optional semantic
// branches (top-k sampling stages), vote head, BEV dilation neck with
// SH/scale coefficient heads, heatmap head, and the shared cls/reg head
// behind a context SA stage (channel attention fuses grid features in joint
// mode). All forward/backward passes are hand written.
struct Model {
  ModelConfig cfg;
  bool with_neck = true;
  bool soft_cls = true;  // centrality-soft classification targets

  Mlp embed;
  std::vector<SAStageParams> stages;
  std::vector<Mlp> sem;  // per stage; empty unless the stage samples top-k
  Mlp vote_head;         // last layer linear, 3 outputs
  SAStageParams ctx;
  Mlp sh_head;     // per occupied cell -> SH coefficients
  Mlp sigma_head;  // per occupied cell -> 1 (softplus + floor applied outside)
  Mlp heat_head;   // per dilated cell -> per-class sigmoid
  Mlp att_gate;    // joint mode channel attention bottleneck
  Mlp trunk;       // shared head trunk, relu
  DenseLayer cls_head;  // linear logits; sigmoid applied where needed
  DenseLayer reg_head;  // linear, reg_dim(angle_bins) outputs

  static Model init(const ModelConfig& cfg, int in_feat_dim, bool with_neck = true);

  int head_in_dim() const;
  double param_sq_sum() const;
  std::vector<const DenseLayer*> layers() const;
  std::vector<DenseLayer*> layers();

  struct Inference {
    VoteSet seeds;
    Mat seed_positions;             // n_seed x 3
    std::vector<Detection> raw;     // decoded, pre-NMS
    std::vector<Detection> dets;    // post-NMS
    Heatmap heatmap;                // joint mode; empty otherwise
  };
  Inference infer(const PointCloud& cloud) const;

  // Forward + loss (+ optional analytic gradients, including the 2*lambda*p
  // weight-decay term). kink_gap reports the smallest distance to a relu
  // kink / pooling tie seen on the path, for finite-difference trials.
  double compute_loss(const SceneSample& scene, LossBreakdown* parts = nullptr,
                      ModelGrads* grads = nullptr, double* kink_gap = nullptr) const;

  void save(const std::string& path) const;
  static Model load(const std::string& path, const ModelConfig& cfg);
};

struct ModelGrads {
  std::vector<DenseGrads> embed, vote_head, sh_head, sigma_head, heat_head,
      att_gate, trunk;
  std::vector<std::vector<DenseGrads>> sem;
  std::vector<SAGrads> stages;
  SAGrads ctx;
  DenseGrads cls_head, reg_head;

  static ModelGrads zeros(const Model& m);
  // Same order as Model::layers().
  std::vector<DenseGrads*> flat(const Model& m);
};

struct Adam {
  double lr, beta1, beta2, eps = 1e-8;
  int t = 0;
  std::vector<DenseGrads> m, v;

  explicit Adam(const Model& model);
  void step(Model& model, ModelGrads& grads);
};

struct TrainLog {
  std::vector<LossBreakdown> epochs;
  std::string csv() const;
};

// Full-batch Adam over the scene list; grads averaged across scenes.
TrainLog train(Model& model, const std::vector<SceneSample>& scenes, int epochs);

}  // namespace pdm
