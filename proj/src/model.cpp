#include "pdm/model.hpp"

#include <fstream>
#include <sstream>

namespace pdm {
namespace {

int last_stage_dim(const Model& m) {
  return m.stages.empty() ? static_cast<int>(m.embed.layers.back().b.size())
                          : m.stages.back().out_dim();
}

int dilated_dim(const Model& m) {
  const int c = last_stage_dim(m);
  return m.cfg.fusion == FusionMode::HalfSum ? c / 2 : c;
}

bool contains_bev(const Box3D& b, double x, double y) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double dx = x - b.center.x(), dy = y - b.center.y();
  const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
  return std::abs(lx) <= b.size.x() / 2 && std::abs(ly) <= b.size.y() / 2;
}

struct StageState {
  Mat sem_scores;
  std::vector<DenseCache> sem_caches;
  StageOutput out;
  std::vector<int> ids;  // original cloud index per output point
  SACache cache;
};

struct ForwardState {
  std::vector<DenseCache> embed_caches;
  StageOutput s0;
  std::vector<StageState> stages;

  VoteSet votes;
  std::vector<DenseCache> vote_caches;

  bool use_neck = false;
  SparseGrid grid;
  std::vector<CellKey> occ_keys;
  std::vector<std::vector<int>> occ_points;  // last-stage point rows per cell
  Mat cell_feats;
  Mat coeffs;
  std::vector<DenseCache> sh_caches;
  Mat sigma_pre;
  std::vector<DenseCache> sigma_caches;
  Vec sigmas;
  DilatedGrid dil;
  NeckTrace fill_trace;
  std::vector<CellKey> dil_keys;
  std::map<CellKey, int> dil_row;
  Mat dil_feats;
  Mat heat_probs;
  std::vector<DenseCache> heat_caches;
  Heatmap pred;

  VoteSet seeds;
  Mat grid_feats;  // per seed, joint mode
  AttentionCache att_cache;
  StageOutput ctx_out;
  SACache ctx_cache;
  Mat head_in;
  std::vector<DenseCache> trunk_caches;
  Mat trunk_out;
  Mat cls_logits;
  DenseCache cls_cache;
  Mat reg_out;
  DenseCache reg_cache;
};

std::vector<int> choose_centers(const Model& m, size_t si, const StageOutput& in,
                                StageState& st) {
  const SAStageSpec& spec = m.stages[si].spec;
  const int n = static_cast<int>(in.coords.rows());
  switch (spec.sampler) {
    case Sampler::DFps:
      return sample_dfps(PointCloud{in.coords, in.feats}, spec.npoint, m.cfg.fps_start)
          .indices;
    case Sampler::FeatFps:
      return sample_featfps(PointCloud{in.coords, in.feats}, spec.npoint,
                            m.cfg.fps_start)
          .indices;
    case Sampler::Random:
      return sample_random(n, spec.npoint, m.cfg.seed + si).indices;
    case Sampler::TopKForeground: {
      st.sem_scores = m.sem[si].forward(in.feats, &st.sem_caches);
      ForegroundScores fg{st.sem_scores.rowwise().maxCoeff()};
      return sample_topk_foreground(fg, spec.npoint).indices;
    }
  }
  throw std::logic_error("unreachable");
}

ForwardState run_forward(const Model& m, const PointCloud& cloud, bool use_neck) {
  ForwardState f;
  f.use_neck = use_neck;
  f.s0.coords = cloud.coords;
  f.s0.feats = m.embed.forward(cloud.feats, &f.embed_caches);

  const StageOutput* prev = &f.s0;
  f.stages.resize(m.stages.size());
  for (size_t i = 0; i < m.stages.size(); ++i) {
    StageState& st = f.stages[i];
    std::vector<int> idx = choose_centers(m, i, *prev, st);
    Mat centers(static_cast<Eigen::Index>(idx.size()), 3);
    for (size_t j = 0; j < idx.size(); ++j) centers.row(static_cast<Eigen::Index>(j)) = prev->coords.row(idx[j]);
    st.out = set_abstraction(m.stages[i], *prev, centers, &st.cache);
    st.out.indices = idx;
    st.ids.resize(idx.size());
    const std::vector<int>* prev_ids = i == 0 ? nullptr : &f.stages[i - 1].ids;
    for (size_t j = 0; j < idx.size(); ++j)
      st.ids[j] = prev_ids ? (*prev_ids)[static_cast<size_t>(idx[j])] : idx[j];
    prev = &st.out;
  }
  const StageOutput& last = *prev;

  f.votes = vote(last.coords, last.feats, m.vote_head, &f.vote_caches);

  if (use_neck) {
    f.grid = project_to_grid(last.coords, last.feats, m.cfg.grid);
    const int n_occ = static_cast<int>(f.grid.cells.size());
    f.occ_keys.reserve(n_occ);
    f.cell_feats.resize(n_occ, last.feats.cols());
    int r = 0;
    std::map<CellKey, int> occ_row;
    for (const auto& [key, feat] : f.grid.cells) {
      f.occ_keys.push_back(key);
      f.cell_feats.row(r) = feat.transpose();
      occ_row[key] = r;
      ++r;
    }
    f.occ_points.assign(static_cast<size_t>(n_occ), {});
    for (Eigen::Index i = 0; i < last.coords.rows(); ++i) {
      auto cell = m.cfg.grid.world_to_cell(last.coords(i, 0), last.coords(i, 1));
      if (!cell) continue;
      f.occ_points[static_cast<size_t>(
                       occ_row.at(cell_key(cell->first, cell->second, m.cfg.grid)))]
          .push_back(static_cast<int>(i));
    }

    f.coeffs = m.sh_head.forward(f.cell_feats, &f.sh_caches);
    f.sigma_pre = m.sigma_head.forward(f.cell_feats, &f.sigma_caches);
    f.sigmas = f.sigma_pre.col(0).unaryExpr(
        [&](double v) { return softplus(v) + m.cfg.sigma_floor; });

    f.dil = pdm_fill(f.grid, f.coeffs, f.sigmas, StructuringElement::ones(m.cfg.se_size),
                     m.cfg.sh_degree, m.cfg.fusion, &f.fill_trace);
    f.dil_feats.resize(static_cast<Eigen::Index>(f.dil.cells.size()), dilated_dim(m));
    int dr = 0;
    for (const auto& [key, feat] : f.dil.cells) {
      f.dil_keys.push_back(key);
      f.dil_row[key] = dr;
      f.dil_feats.row(dr) = feat.transpose();
      ++dr;
    }
    f.heat_probs = m.heat_head.forward(f.dil_feats, &f.heat_caches);
    f.pred = Heatmap::zeros(m.cfg.grid, m.cfg.num_classes);
    for (size_t k = 0; k < f.dil_keys.size(); ++k) {
      auto [ix, iy] = key_cell(f.dil_keys[k], m.cfg.grid);
      for (int c = 0; c < m.cfg.num_classes; ++c)
        f.pred.planes[static_cast<size_t>(c)](iy, ix) =
            f.heat_probs(static_cast<Eigen::Index>(k), c);
    }
  }

  f.seeds = f.votes;
  if (use_neck && m.cfg.head_mode == HeadMode::Joint && m.cfg.top_k_peaks > 0) {
    for (const Peak& p : heatmap_peaks(f.pred, m.cfg.top_k_peaks)) {
      if (p.score < m.cfg.score_thr) continue;
      f.seeds.positions.conservativeResize(f.seeds.positions.rows() + 1, 3);
      f.seeds.positions.row(f.seeds.positions.rows() - 1)
          << p.xy.x(), p.xy.y(), m.cfg.peak_z;
      f.seeds.origins.push_back(-1);
      f.seeds.sources.push_back(SeedSource::HeatmapPeak);
    }
  }

  f.ctx_out = set_abstraction(m.ctx, last, f.seeds.positions, &f.ctx_cache);

  if (m.cfg.head_mode == HeadMode::Joint) {
    f.grid_feats = Mat::Zero(f.seeds.positions.rows(), dilated_dim(m));
    for (Eigen::Index i = 0; i < f.seeds.positions.rows(); ++i) {
      auto cell = m.cfg.grid.world_to_cell(f.seeds.positions(i, 0),
                                           f.seeds.positions(i, 1));
      if (!cell) continue;
      auto it = f.dil_row.find(cell_key(cell->first, cell->second, m.cfg.grid));
      if (it != f.dil_row.end()) f.grid_feats.row(i) = f.dil_feats.row(it->second);
    }
    f.head_in = channel_attention(f.ctx_out.feats, f.grid_feats, m.att_gate,
                                  &f.att_cache);
  } else {
    f.head_in = f.ctx_out.feats;
  }

  f.trunk_out = m.trunk.forward(f.head_in, &f.trunk_caches);
  f.cls_logits = dense_forward(m.cls_head, f.trunk_out, &f.cls_cache);
  f.reg_out = dense_forward(m.reg_head, f.trunk_out, &f.reg_cache);
  return f;
}

int act_code(Act a) { return static_cast<int>(a); }

void append_mlp(std::vector<DenseLayer*>& out, Mlp& m) {
  for (DenseLayer& l : m.layers) out.push_back(&l);
}
void append_stage(std::vector<DenseLayer*>& out, SAStageParams& s) {
  for (Mlp& b : s.branches) append_mlp(out, b);
  out.push_back(&s.agg);
}

void append_grads(std::vector<DenseGrads*>& out, std::vector<DenseGrads>& g) {
  for (DenseGrads& d : g) out.push_back(&d);
}
void append_stage_grads(std::vector<DenseGrads*>& out, SAGrads& g) {
  for (auto& b : g.branches) append_grads(out, b);
  out.push_back(&g.agg);
}

}  // namespace

Model Model::init(const ModelConfig& cfg, int in_feat_dim, bool with_neck) {
  cfg.check();
  if (cfg.stages.empty()) throw std::invalid_argument("model needs SA stages");
  if (cfg.ctx.radii.empty())
    throw std::invalid_argument("model needs a context aggregation stage");
  if (!with_neck && cfg.head_mode == HeadMode::Joint)
    throw std::invalid_argument("joint head mode requires the neck");

  Model m;
  m.cfg = cfg;
  m.with_neck = true;  // build everything, strip below
  std::mt19937_64 rng(cfg.seed);

  std::vector<int> embed_hidden(cfg.embed_dims.begin(), cfg.embed_dims.end() - 1);
  m.embed = make_mlp(static_cast<int>(in_feat_dim), embed_hidden,
                     cfg.embed_dims.back(), Act::Relu, rng);

  int dim = cfg.embed_dims.back();
  m.sem.resize(cfg.stages.size());
  for (size_t i = 0; i < cfg.stages.size(); ++i) {
    if (cfg.stages[i].sampler == Sampler::TopKForeground)
      m.sem[i] = make_mlp(dim, {cfg.sem_hidden}, cfg.num_classes, Act::Sigmoid, rng);
    m.stages.push_back(SAStageParams::init(cfg.stages[i], dim, rng));
    dim = m.stages.back().out_dim();
  }

  m.vote_head = make_mlp(dim, cfg.vote_dims, 3, Act::None, rng);
  m.ctx = SAStageParams::init(cfg.ctx, dim, rng);

  m.sh_head = make_mlp(dim, {}, cfg.sh_coeff_count(), Act::None, rng);
  m.sigma_head = make_mlp(dim, {}, 1, Act::None, rng);
  const int dil = cfg.fusion == FusionMode::HalfSum ? dim / 2 : dim;
  m.heat_head = make_mlp(dil, {}, cfg.num_classes, Act::Sigmoid, rng);

  const int head_in =
      m.ctx.out_dim() + (cfg.head_mode == HeadMode::Joint ? dil : 0);
  m.att_gate = make_mlp(head_in, {cfg.att_hidden}, head_in, Act::Sigmoid, rng);

  std::vector<int> trunk_hidden(cfg.head_dims.begin(), cfg.head_dims.end() - 1);
  m.trunk = make_mlp(head_in, trunk_hidden, cfg.head_dims.back(), Act::Relu, rng);
  m.cls_head = make_dense(cfg.head_dims.back(), cfg.num_classes, Act::None, rng);
  m.reg_head = make_dense(cfg.head_dims.back(), reg_dim(cfg.angle_bins), Act::None, rng);

  if (!with_neck) {
    m.with_neck = false;
    m.sh_head.layers.clear();
    m.sigma_head.layers.clear();
    m.heat_head.layers.clear();
  }
  return m;
}

int Model::head_in_dim() const {
  return ctx.out_dim() +
         (cfg.head_mode == HeadMode::Joint ? dilated_dim(*this) : 0);
}

std::vector<DenseLayer*> Model::layers() {
  std::vector<DenseLayer*> out;
  append_mlp(out, embed);
  for (size_t i = 0; i < stages.size(); ++i) {
    append_mlp(out, sem[i]);
    append_stage(out, stages[i]);
  }
  append_mlp(out, vote_head);
  append_stage(out, ctx);
  append_mlp(out, sh_head);
  append_mlp(out, sigma_head);
  append_mlp(out, heat_head);
  append_mlp(out, att_gate);
  append_mlp(out, trunk);
  out.push_back(&cls_head);
  out.push_back(&reg_head);
  return out;
}

std::vector<const DenseLayer*> Model::layers() const {
  auto mut = const_cast<Model*>(this)->layers();
  return {mut.begin(), mut.end()};
}

double Model::param_sq_sum() const {
  double s = 0;
  for (const DenseLayer* l : layers()) s += l->W.squaredNorm() + l->b.squaredNorm();
  return s;
}

ModelGrads ModelGrads::zeros(const Model& m) {
  ModelGrads g;
  ensure_grads(m.embed, &g.embed);
  g.sem.resize(m.sem.size());
  for (size_t i = 0; i < m.stages.size(); ++i) {
    ensure_grads(m.sem[i], &g.sem[i]);
    g.stages.push_back(SAGrads::zeros(m.stages[i]));
  }
  ensure_grads(m.vote_head, &g.vote_head);
  g.ctx = SAGrads::zeros(m.ctx);
  ensure_grads(m.sh_head, &g.sh_head);
  ensure_grads(m.sigma_head, &g.sigma_head);
  ensure_grads(m.heat_head, &g.heat_head);
  ensure_grads(m.att_gate, &g.att_gate);
  ensure_grads(m.trunk, &g.trunk);
  g.cls_head = {Mat::Zero(m.cls_head.W.rows(), m.cls_head.W.cols()),
                Vec::Zero(m.cls_head.b.size())};
  g.reg_head = {Mat::Zero(m.reg_head.W.rows(), m.reg_head.W.cols()),
                Vec::Zero(m.reg_head.b.size())};
  return g;
}

std::vector<DenseGrads*> ModelGrads::flat(const Model& m) {
  std::vector<DenseGrads*> out;
  append_grads(out, embed);
  for (size_t i = 0; i < m.stages.size(); ++i) {
    append_grads(out, sem[i]);
    append_stage_grads(out, stages[i]);
  }
  append_grads(out, vote_head);
  append_stage_grads(out, ctx);
  append_grads(out, sh_head);
  append_grads(out, sigma_head);
  append_grads(out, heat_head);
  append_grads(out, att_gate);
  append_grads(out, trunk);
  out.push_back(&cls_head);
  out.push_back(&reg_head);
  return out;
}

Model::Inference Model::infer(const PointCloud& cloud) const {
  const bool use_neck = with_neck && cfg.head_mode == HeadMode::Joint;
  ForwardState f = run_forward(*this, cloud, use_neck);
  Inference out;
  out.seeds = f.seeds;
  out.seed_positions = f.seeds.positions;
  out.raw = decode_boxes(f.cls_logits, f.reg_out, f.seeds.positions, cfg.angle_bins);
  out.dets = nms(out.raw, cfg.nms_iou, cfg.score_thr);
  if (use_neck) out.heatmap = f.pred;
  return out;
}

double Model::compute_loss(const SceneSample& scene, LossBreakdown* parts,
                           ModelGrads* grads, double* kink_gap) const {
  ForwardState f = run_forward(*this, scene.cloud, with_neck);
  const StageOutput& last = f.stages.back().out;
  const std::vector<int>& last_ids = f.stages.back().ids;

  LossBreakdown lb;

  // one sampling loss per top-k stage, scored on the stage's input points
  std::vector<Mat> dsem(stages.size());
  for (size_t i = 0; i < stages.size(); ++i) {
    if (cfg.stages[i].sampler != Sampler::TopKForeground) continue;
    std::vector<int> in_ids;
    if (i == 0) {
      in_ids.resize(static_cast<size_t>(scene.cloud.size()));
      for (size_t j = 0; j < in_ids.size(); ++j) in_ids[j] = static_cast<int>(j);
    } else {
      in_ids = f.stages[i - 1].ids;
    }
    lb.sample += sampling_loss(f.stages[i].sem_scores, scene, in_ids,
                               grads ? &dsem[i] : nullptr);
  }

  std::vector<int> vote_owner(last_ids.size());
  for (size_t i = 0; i < last_ids.size(); ++i)
    vote_owner[i] = scene.box_of_point[static_cast<size_t>(last_ids[i])];
  Mat dvote_pos;
  lb.vote = vote_loss(f.votes.positions, vote_owner, scene.gt,
                      grads ? &dvote_pos : nullptr);

  std::vector<int> seed_owner(static_cast<size_t>(f.seeds.positions.rows()), -1);
  for (size_t i = 0; i < seed_owner.size(); ++i) {
    if (f.seeds.origins[i] >= 0) {
      seed_owner[i] = vote_owner[static_cast<size_t>(f.seeds.origins[i])];
    } else {
      for (size_t b = 0; b < scene.gt.size(); ++b)
        if (contains_bev(scene.gt[b], f.seeds.positions(static_cast<Eigen::Index>(i), 0),
                         f.seeds.positions(static_cast<Eigen::Index>(i), 1))) {
          seed_owner[i] = static_cast<int>(b);
          break;
        }
    }
  }

  Mat cls_probs = f.cls_logits.unaryExpr([](double v) { return sigmoid(v); });
  Mat dprobs, dreg;
  lb.cls = cls_loss(cls_probs, seed_owner, scene.gt, f.seeds.positions, soft_cls,
                    grads ? &dprobs : nullptr);
  RegLossParts rp = reg_loss(f.reg_out, f.seeds.positions, seed_owner, scene.gt,
                             cfg.angle_bins, grads ? &dreg : nullptr);
  lb.loc = rp.loc;
  lb.size = rp.size;
  lb.angle_bin = rp.angle_bin;
  lb.angle_res = rp.angle_res;
  lb.corner = rp.corner;

  Heatmap dpred;
  if (with_neck) {
    Heatmap target = heatmap_target(scene.gt, cfg.grid, cfg.num_classes);
    lb.heatmap = heatmap_loss(f.pred, target, grads ? &dpred : nullptr);
  }

  const double total =
      total_loss(lb, cfg.loss_weights, cfg.weight_decay, param_sq_sum());
  if (parts) *parts = lb;

  if (kink_gap) {
    double gap = embed.min_abs_pre(f.embed_caches);
    gap = std::min(gap, vote_head.min_abs_pre(f.vote_caches));
    gap = std::min(gap, trunk.min_abs_pre(f.trunk_caches));
    for (size_t i = 0; i < stages.size(); ++i) {
      gap = std::min(gap, sa_min_kink_gap(stages[i], f.stages[i].cache));
      if (!f.stages[i].sem_caches.empty())
        gap = std::min(gap, sem[i].min_abs_pre(f.stages[i].sem_caches));
    }
    gap = std::min(gap, sa_min_kink_gap(ctx, f.ctx_cache));
    if (with_neck) {
      gap = std::min(gap, sh_head.min_abs_pre(f.sh_caches));
      gap = std::min(gap, sigma_head.min_abs_pre(f.sigma_caches));
      gap = std::min(gap, heat_head.min_abs_pre(f.heat_caches));
    }
    if (cfg.head_mode == HeadMode::Joint)
      gap = std::min(gap, att_gate.min_abs_pre(f.att_cache.gate_caches));
    *kink_gap = gap;
  }

  if (!grads) return total;

  // the five regression parts share one effective weight for the reverse pass
  const double w_reg = cfg.loss_weight("loc");
  for (const char* name : {"size", "angle_bin", "angle_res", "corner"})
    if (cfg.loss_weight(name) != w_reg)
      throw std::invalid_argument("regression loss parts must share one weight");

  const Eigen::Index n_seeds = f.seeds.positions.rows();
  const Eigen::Index n_votes = f.votes.positions.rows();

  Mat dlogits = (cfg.loss_weight("cls") * dprobs.array() * cls_probs.array() *
                 (1.0 - cls_probs.array()))
                    .matrix();
  Mat dtrunk_out;
  dense_backward(cls_head, f.cls_cache, dlogits, &dtrunk_out, &grads->cls_head);
  Mat dtrunk_b;
  dense_backward(reg_head, f.reg_cache, Mat(w_reg * dreg), &dtrunk_b, &grads->reg_head);
  dtrunk_out += dtrunk_b;
  Mat dhead_in = trunk.backward(f.trunk_caches, dtrunk_out, &grads->trunk);

  Mat ddil_feats;
  if (with_neck) ddil_feats = Mat::Zero(f.dil_feats.rows(), f.dil_feats.cols());

  Mat dctx_feats;
  if (cfg.head_mode == HeadMode::Joint) {
    dctx_feats = Mat::Zero(n_seeds, ctx.out_dim());
    Mat dgrid = Mat::Zero(n_seeds, dilated_dim(*this));
    channel_attention_backward(att_gate, f.att_cache, dhead_in, &dctx_feats, &dgrid,
                               &grads->att_gate);
    for (Eigen::Index i = 0; i < n_seeds; ++i) {
      auto cell = cfg.grid.world_to_cell(f.seeds.positions(i, 0), f.seeds.positions(i, 1));
      if (!cell) continue;
      auto it = f.dil_row.find(cell_key(cell->first, cell->second, cfg.grid));
      if (it != f.dil_row.end()) ddil_feats.row(it->second) += dgrid.row(i);
    }
  } else {
    dctx_feats = dhead_in;
  }

  Mat dlast_feats = Mat::Zero(last.feats.rows(), last.feats.cols());
  Mat dseed_pos = Mat::Zero(n_seeds, 3);
  set_abstraction_backward(ctx, f.ctx_cache, dctx_feats, &dlast_feats, &dseed_pos,
                           &grads->ctx);
  dseed_pos += w_reg * dreg.leftCols(3);

  Mat dvote = dseed_pos.topRows(n_votes);
  dvote += cfg.loss_weight("vote") * dvote_pos;
  dlast_feats += vote_head.backward(f.vote_caches, dvote, &grads->vote_head);

  if (with_neck) {
    const double w_heat = cfg.loss_weight("heatmap");
    Mat dheat(f.heat_probs.rows(), f.heat_probs.cols());
    for (size_t k = 0; k < f.dil_keys.size(); ++k) {
      auto [ix, iy] = key_cell(f.dil_keys[k], cfg.grid);
      for (int c = 0; c < cfg.num_classes; ++c)
        dheat(static_cast<Eigen::Index>(k), c) =
            w_heat * dpred.planes[static_cast<size_t>(c)](iy, ix);
    }
    ddil_feats += heat_head.backward(f.heat_caches, dheat, &grads->heat_head);

    Mat dcell = Mat::Zero(f.cell_feats.rows(), f.cell_feats.cols());
    Mat dcoeffs = Mat::Zero(f.coeffs.rows(), f.coeffs.cols());
    Vec dsigma = Vec::Zero(f.sigmas.size());
    const Eigen::Index c_full = f.cell_feats.cols();
    const Eigen::Index c_half = c_full / 2;
    for (const NeckContribution& rec : f.fill_trace.contributions) {
      const int ci = rec.center;
      auto g = ddil_feats.row(f.dil_row.at(rec.cell));
      auto fc = f.cell_feats.row(ci);
      if (rec.raw) {
        if (cfg.fusion == FusionMode::HalfSum) {
          dcell.row(ci).head(c_half) += g;
          dcell.row(ci).tail(c_half) += g;
        } else {
          dcell.row(ci) += g;
        }
        continue;
      }
      double dalpha = 0, dbeta = 0;
      switch (cfg.fusion) {
        case FusionMode::Straight:
          dcell.row(ci) += (rec.alpha + rec.beta) * g;
          dalpha = g.dot(fc);
          dbeta = dalpha;
          break;
        case FusionMode::Split:
          dcell.row(ci).head(c_half) += rec.alpha * g.head(c_half);
          dcell.row(ci).tail(c_half) += rec.beta * g.tail(c_half);
          dalpha = g.head(c_half).dot(fc.head(c_half));
          dbeta = g.tail(c_half).dot(fc.tail(c_half));
          break;
        case FusionMode::HalfSum:
          dcell.row(ci).head(c_half) += rec.alpha * g;
          dcell.row(ci).tail(c_half) += rec.beta * g;
          dalpha = g.dot(fc.head(c_half));
          dbeta = g.dot(fc.tail(c_half));
          break;
      }
      dcoeffs.row(ci) += dalpha * rec.basis.transpose();
      auto center_cell = key_cell(f.fill_trace.center_cells[static_cast<size_t>(ci)],
                                  cfg.grid);
      dsigma[ci] += dbeta * scale_coefficient_dsigma(f.sigmas[ci], center_cell,
                                                     key_cell(rec.cell, cfg.grid));
    }

    dcell += sh_head.backward(f.sh_caches, dcoeffs, &grads->sh_head);
    Mat dsigma_pre(f.sigma_pre.rows(), 1);
    for (Eigen::Index i = 0; i < dsigma.size(); ++i)
      dsigma_pre(i, 0) = dsigma[i] * sigmoid(f.sigma_pre(i, 0));
    dcell += sigma_head.backward(f.sigma_caches, dsigma_pre, &grads->sigma_head);

    for (size_t cidx = 0; cidx < f.occ_points.size(); ++cidx)
      for (int p : f.occ_points[cidx])
        dlast_feats.row(p) += dcell.row(static_cast<Eigen::Index>(cidx));
  }

  Mat dcur = dlast_feats;
  for (size_t ii = stages.size(); ii-- > 0;) {
    const StageOutput& prev_out = ii == 0 ? f.s0 : f.stages[ii - 1].out;
    Mat dprev = Mat::Zero(prev_out.feats.rows(), prev_out.feats.cols());
    set_abstraction_backward(stages[ii], f.stages[ii].cache, dcur, &dprev, nullptr,
                             &grads->stages[ii]);
    if (cfg.stages[ii].sampler == Sampler::TopKForeground)
      dprev += sem[ii].backward(f.stages[ii].sem_caches,
                                Mat(cfg.loss_weight("sample") * dsem[ii]),
                                &grads->sem[ii]);
    dcur = std::move(dprev);
  }
  embed.backward(f.embed_caches, dcur, &grads->embed);

  auto params = layers();
  auto gs = grads->flat(*this);
  for (size_t i = 0; i < params.size(); ++i) {
    gs[i]->gW += 2.0 * cfg.weight_decay * params[i]->W;
    gs[i]->gb += 2.0 * cfg.weight_decay * params[i]->b;
  }
  return total;
}

Adam::Adam(const Model& model)
    : lr(model.cfg.lr), beta1(model.cfg.adam_beta1), beta2(model.cfg.adam_beta2) {
  for (const DenseLayer* l : model.layers()) {
    m.push_back({Mat::Zero(l->W.rows(), l->W.cols()), Vec::Zero(l->b.size())});
    v.push_back({Mat::Zero(l->W.rows(), l->W.cols()), Vec::Zero(l->b.size())});
  }
}

void Adam::step(Model& model, ModelGrads& grads) {
  ++t;
  auto params = model.layers();
  auto gs = grads.flat(model);
  const double c1 = 1.0 - std::pow(beta1, t), c2 = 1.0 - std::pow(beta2, t);
  for (size_t i = 0; i < params.size(); ++i) {
    m[i].gW = beta1 * m[i].gW + (1 - beta1) * gs[i]->gW;
    m[i].gb = beta1 * m[i].gb + (1 - beta1) * gs[i]->gb;
    v[i].gW = beta2 * v[i].gW.array().matrix() +
              (1 - beta2) * gs[i]->gW.array().square().matrix();
    v[i].gb = beta2 * v[i].gb.array().matrix() +
              (1 - beta2) * gs[i]->gb.array().square().matrix();
    params[i]->W.array() -=
        lr * (m[i].gW.array() / c1) / ((v[i].gW.array() / c2).sqrt() + eps);
    params[i]->b.array() -=
        lr * (m[i].gb.array() / c1) / ((v[i].gb.array() / c2).sqrt() + eps);
  }
}

std::string TrainLog::csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "step,sample,vote,cls,loc,size,angle_bin,angle_res,corner,heatmap,l2,total\n";
  for (size_t e = 0; e < epochs.size(); ++e) {
    const LossBreakdown& p = epochs[e];
    out << e << ',' << p.sample << ',' << p.vote << ',' << p.cls << ',' << p.loc
        << ',' << p.size << ',' << p.angle_bin << ',' << p.angle_res << ','
        << p.corner << ',' << p.heatmap << ',' << p.l2 << ',' << p.total << '\n';
  }
  return out.str();
}

TrainLog train(Model& model, const std::vector<SceneSample>& scenes, int epochs) {
  if (scenes.empty()) throw std::invalid_argument("train: no scenes");
  TrainLog log;
  Adam opt(model);
  const double inv = 1.0 / static_cast<double>(scenes.size());
  for (int e = 0; e < epochs; ++e) {
    ModelGrads grads = ModelGrads::zeros(model);
    LossBreakdown mean;
    for (const SceneSample& s : scenes) {
      LossBreakdown p;
      model.compute_loss(s, &p, &grads);
      mean.sample += inv * p.sample;
      mean.vote += inv * p.vote;
      mean.cls += inv * p.cls;
      mean.loc += inv * p.loc;
      mean.size += inv * p.size;
      mean.angle_bin += inv * p.angle_bin;
      mean.angle_res += inv * p.angle_res;
      mean.corner += inv * p.corner;
      mean.heatmap += inv * p.heatmap;
      mean.l2 += inv * p.l2;
      mean.total += inv * p.total;
    }
    for (DenseGrads* g : grads.flat(model)) {
      g->gW *= inv;
      g->gb *= inv;
    }
    opt.step(model, grads);
    log.epochs.push_back(mean);
  }
  return log;
}

void Model::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  auto ls = layers();
  out << "pdm-checkpoint 1\n";
  out << "input_dim " << embed.layers.front().W.cols() << '\n';
  out << "with_neck " << (with_neck ? 1 : 0) << '\n';
  out << "layers " << ls.size() << '\n';
  for (const DenseLayer* l : ls)
    out << "layer " << l->W.rows() << ' ' << l->W.cols() << ' ' << act_code(l->act)
        << '\n';
  out << "data\n";
  for (const DenseLayer* l : ls) {
    for (Eigen::Index r = 0; r < l->W.rows(); ++r)
      for (Eigen::Index c = 0; c < l->W.cols(); ++c) {
        double v = l->W(r, c);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
    for (Eigen::Index i = 0; i < l->b.size(); ++i) {
      double v = l->b[i];
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
}

Model Model::load(const std::string& path, const ModelConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != "pdm-checkpoint 1") throw std::runtime_error("bad checkpoint header");
  auto expect = [&](const char* key) {
    std::getline(in, line);
    std::istringstream ss(line);
    std::string k;
    ss >> k;
    if (k != key) throw std::runtime_error("checkpoint: expected " + std::string(key));
    long v;
    ss >> v;
    return v;
  };
  const long input_dim = expect("input_dim");
  const bool with_neck = expect("with_neck") != 0;
  const long n_layers = expect("layers");

  Model m = Model::init(cfg, static_cast<int>(input_dim), with_neck);
  auto ls = m.layers();
  if (static_cast<long>(ls.size()) != n_layers)
    throw std::runtime_error("checkpoint: layer count mismatch");
  for (DenseLayer* l : ls) {
    std::getline(in, line);
    std::istringstream ss(line);
    std::string k;
    long rows, cols, act;
    ss >> k >> rows >> cols >> act;
    if (k != "layer" || rows != l->W.rows() || cols != l->W.cols() ||
        act != act_code(l->act))
      throw std::runtime_error("checkpoint: layer shape mismatch");
  }
  std::getline(in, line);
  if (line != "data") throw std::runtime_error("checkpoint: missing data section");
  for (DenseLayer* l : ls) {
    for (Eigen::Index r = 0; r < l->W.rows(); ++r)
      for (Eigen::Index c = 0; c < l->W.cols(); ++c)
        in.read(reinterpret_cast<char*>(&l->W(r, c)), sizeof(double));
    for (Eigen::Index i = 0; i < l->b.size(); ++i)
      in.read(reinterpret_cast<char*>(&l->b[i]), sizeof(double));
  }
  if (!in) throw std::runtime_error("checkpoint: truncated data");
  return m;
}

}  // namespace pdm
