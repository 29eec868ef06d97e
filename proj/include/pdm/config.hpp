#pragma once

#include "pdm/types.hpp"

#include <map>
#include <string>

namespace pdm {

enum class Sampler { DFps, FeatFps, TopKForeground, Random };
enum class FusionMode { Split, Straight, HalfSum };
enum class HeadMode { Auxiliary, Joint };

struct SAStageSpec {
  int npoint = 0;
  std::vector<double> radii;            // strictly increasing
  std::vector<int> nquery;              // one per radius
  std::vector<std::vector<int>> dims;   // branch MLP widths, one list per radius
  int agg_dim = 0;                      // aggregation MLP output width
  Sampler sampler = Sampler::DFps;
};

// Parses the architecture syntax string, e.g.
//   SA(4096,[0.2,0.8],[16,32],[[16,16,32],[32,32,64]])
SAStageSpec parse_sa_syntax(const std::string& text);

struct ModelConfig {
  GridSpec grid;
  int num_classes = 3;
  std::vector<int> embed_dims = {16};
  std::vector<SAStageSpec> stages;
  int sem_hidden = 128;                 // semantic branch S(.) hidden width

  int sh_degree = 3;                    // L in {2,3,4}
  int se_size = 5;                      // structuring element, odd
  FusionMode fusion = FusionMode::Split;
  HeadMode head_mode = HeadMode::Joint;
  double sigma_floor = 0.1;             // cells

  int top_k_peaks = 256;
  double nms_iou = 0.1;
  double score_thr = 0.1;
  int angle_bins = 12;
  double peak_z = 0.0;                  // z assigned to heatmap-peak seeds

  std::vector<int> vote_dims = {128};   // hidden widths; output is always 3
  SAStageSpec ctx;                      // centroid-based instance aggregation
  std::vector<int> head_dims = {256, 256};  // shared cls/reg trunk widths
  int att_hidden = 64;                  // channel-attention bottleneck

  std::map<std::string, double> loss_weights;  // default 1.0 each
  double weight_decay = 0.01;
  double lr = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.85;
  std::uint64_t seed = 0;
  int fps_start = 0;

  int sh_coeff_count() const { return (sh_degree + 1) * (sh_degree + 1); }
  double loss_weight(const std::string& name) const;
  void check() const;

  // KITTI-scale defaults: 4 SA stages, D-FPS then top-K foreground.
  static ModelConfig kitti();
  // Desk-scale configuration: 16 m world, 2 D-FPS stages, narrow heads.
  static ModelConfig micro();
};

// Flat `key = value` text, `#` comments. Unknown keys are an error.
ModelConfig load_config(const std::string& path);
ModelConfig parse_config(const std::string& text);

// Raw key/value view for callers with their own schema (scene generator).
std::map<std::string, std::string> parse_key_values(const std::string& text);

std::vector<double> parse_double_list(const std::string& text);
std::vector<int> parse_int_list(const std::string& text);

}  // namespace pdm
