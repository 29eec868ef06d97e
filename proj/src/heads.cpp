#include "pdm/heads.hpp"

#include <algorithm>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pdm {

Heatmap Heatmap::zeros(const GridSpec& spec, int num_classes) {
  Heatmap hm;
  hm.spec = spec;
  hm.planes.assign(num_classes, Mat::Zero(spec.height, spec.width));
  return hm;
}

namespace {

void splat_box(Mat& plane, const Box3D& b, const GridSpec& spec) {
  auto cell = spec.world_to_cell(b.center.x(), b.center.y());
  if (!cell) return;
  const double cell_sz = 0.5 * (spec.cell_x() + spec.cell_y());
  const double sigma =
      std::max(1.0, std::min(b.size.x(), b.size.y()) / (3.0 * cell_sz));
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  const auto [cx, cy] = *cell;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) {
      int tx = cx + dx, ty = cy + dy;
      if (!spec.in_bounds(tx, ty)) continue;
      double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      plane(ty, tx) = std::max(plane(ty, tx), v);
    }
}

Heatmap heatmap_target_impl(const std::vector<Box3D>& gt, const GridSpec& spec,
                            int num_classes, bool parallel) {
  Heatmap hm = Heatmap::zeros(spec, num_classes);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (parallel && num_classes > 1)
#endif
  for (int c = 0; c < num_classes; ++c)
    for (const Box3D& b : gt)
      if (b.label == c) splat_box(hm.planes[c], b, spec);
  return hm;
}

}  // namespace

Heatmap heatmap_target(const std::vector<Box3D>& gt, const GridSpec& spec,
                       int num_classes) {
  return heatmap_target_impl(gt, spec, num_classes, true);
}

Heatmap heatmap_target_serial(const std::vector<Box3D>& gt, const GridSpec& spec,
                              int num_classes) {
  return heatmap_target_impl(gt, spec, num_classes, false);
}

std::vector<Peak> heatmap_peaks(const Heatmap& hm, int k) {
  if (k < 1) throw std::invalid_argument("heatmap_peaks: k must be >= 1");
  std::vector<Peak> cands;
  const GridSpec& spec = hm.spec;
  for (size_t c = 0; c < hm.planes.size(); ++c) {
    const Mat& plane = hm.planes[c];
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        double v = plane(y, x);
        bool is_max = true;
        for (int dy = -1; dy <= 1 && is_max; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            int tx = x + dx, ty = y + dy;
            if (!spec.in_bounds(tx, ty)) continue;
            if (plane(ty, tx) > v) {
              is_max = false;
              break;
            }
          }
        if (!is_max) continue;
        Peak p;
        p.cls = static_cast<int>(c);
        p.cell = cell_key(x, y, spec);
        p.xy = spec.cell_center(x, y);
        p.score = v;
        cands.push_back(p);
      }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Peak& a, const Peak& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.cell != b.cell) return a.cell < b.cell;
    return a.cls < b.cls;
  });
  if (static_cast<int>(cands.size()) > k) cands.resize(k);
  return cands;
}

VoteSet vote(const Mat& points, const Mat& feats, const Mlp& vote_head,
             std::vector<DenseCache>* caches) {
  if (points.rows() == 0) throw std::invalid_argument("vote: empty input");
  Mat offsets = vote_head.forward(feats, caches);
  if (offsets.cols() != 3) throw std::invalid_argument("vote head must emit 3 offsets");
  VoteSet v;
  v.positions = points + offsets;
  v.origins.resize(points.rows());
  v.sources.assign(points.rows(), SeedSource::Vote);
  for (Eigen::Index i = 0; i < points.rows(); ++i) v.origins[i] = static_cast<int>(i);
  return v;
}

Mat channel_attention(const Mat& point_feats, const Mat& grid_feats, const Mlp& gate,
                      AttentionCache* cache) {
  if (point_feats.rows() != grid_feats.rows())
    throw std::invalid_argument("channel_attention: row mismatch");
  Mat x(point_feats.rows(), point_feats.cols() + grid_feats.cols());
  x << point_feats, grid_feats;
  std::vector<DenseCache> gc;
  Mat g = gate.forward(x, cache ? &gc : nullptr);
  if (g.cols() != x.cols())
    throw std::invalid_argument("attention gate must match concat width");
  Mat out = x.array() * g.array();
  if (cache) {
    cache->x = std::move(x);
    cache->gate_caches = std::move(gc);
    cache->gate = std::move(g);
  }
  return out;
}

void channel_attention_backward(const Mlp& gate, const AttentionCache& cache,
                                const Mat& upstream, Mat* dpoint, Mat* dgrid,
                                std::vector<DenseGrads>* gate_grads) {
  Mat dx = upstream.array() * cache.gate.array();
  Mat dgate = upstream.array() * cache.x.array();
  dx += gate.backward(cache.gate_caches, dgate, gate_grads);
  const Eigen::Index pc = dpoint ? dpoint->cols() : dx.cols() - (dgrid ? dgrid->cols() : 0);
  if (dpoint) *dpoint = dx.leftCols(pc);
  if (dgrid) *dgrid = dx.rightCols(dx.cols() - pc);
}

double bin_center(int bin, int angle_bins) {
  const double w = 2.0 * M_PI / angle_bins;
  return -M_PI + (bin + 0.5) * w;
}

int yaw_to_bin(double yaw, int angle_bins) {
  const double w = 2.0 * M_PI / angle_bins;
  int bin = static_cast<int>(std::floor((wrap_angle(yaw) + M_PI) / w));
  return std::clamp(bin, 0, angle_bins - 1);
}

std::vector<Detection> decode_boxes(const Mat& cls_logits, const Mat& reg_out,
                                    const Mat& seed_positions, int angle_bins) {
  const int n = static_cast<int>(seed_positions.rows());
  if (cls_logits.rows() != n || reg_out.rows() != n)
    throw std::invalid_argument("decode_boxes: row mismatch");
  if (reg_out.cols() != reg_dim(angle_bins))
    throw std::invalid_argument("decode_boxes: bad regression width");
  const double half_bin = M_PI / angle_bins;
  std::vector<Detection> dets;
  dets.reserve(n);
  for (int i = 0; i < n; ++i) {
    Detection d;
    d.class_scores = cls_logits.row(i).unaryExpr([](double v) { return sigmoid(v); });
    Eigen::Index best_cls;
    d.class_scores.maxCoeff(&best_cls);
    Vec3 center = seed_positions.row(i).transpose() + reg_out.row(i).head(3).transpose();
    Vec3 size = reg_out.row(i).segment(3, 3).unaryExpr([](double v) {
      return softplus(v);
    });
    Eigen::Index bin = 0;
    reg_out.row(i).segment(6, angle_bins).maxCoeff(&bin);
    double yaw = bin_center(static_cast<int>(bin), angle_bins) +
                 reg_out(i, 6 + angle_bins + bin) * half_bin;
    d.box = Box3D(center, size, yaw, static_cast<int>(best_cls),
                  std::clamp(d.class_scores[best_cls], 0.0, 1.0));
    dets.push_back(std::move(d));
  }
  return dets;
}

std::string detections_to_csv(const std::vector<Detection>& dets) {
  std::ostringstream out;
  out.precision(17);
  for (const Detection& d : dets) {
    const Box3D& b = d.box;
    out << b.center.x() << ',' << b.center.y() << ',' << b.center.z() << ','
        << b.size.x() << ',' << b.size.y() << ',' << b.size.z() << ',' << b.yaw
        << ',' << b.label << ',' << b.score << '\n';
  }
  return out.str();
}

}  // namespace pdm
