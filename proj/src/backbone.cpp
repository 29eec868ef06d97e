#include "pdm/backbone.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pdm {

namespace {

IMat ball_query_impl(const Mat& centers, const Mat& source, double radius, int k,
                     bool parallel) {
  if (source.rows() == 0) throw std::invalid_argument("empty source");
  if (radius <= 0 || k < 1) throw std::invalid_argument("ball_query: bad radius or k");
  const int m = static_cast<int>(centers.rows());
  const int n = static_cast<int>(source.rows());
  const double r2 = radius * radius;
  IMat out(m, k);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel && m > 8)
#endif
  for (int i = 0; i < m; ++i) {
    int found = 0;
    int nearest = 0;
    double nearest_d2 = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n && found < k; ++j) {
      double d2 = (source.row(j) - centers.row(i)).squaredNorm();
      if (d2 <= r2) out(i, found++) = j;
      if (d2 < nearest_d2) {
        nearest_d2 = d2;
        nearest = j;
      }
    }
    if (found == 0) {
      // the scan above may have stopped early; it only bails once the ball
      // is full, so an empty ball always scanned every source point
      out.row(i).setConstant(nearest);
    } else {
      for (int q = found; q < k; ++q) out(i, q) = out(i, 0);
    }
  }
  return out;
}

}  // namespace

IMat ball_query(const Mat& centers, const Mat& source, double radius, int k) {
  return ball_query_impl(centers, source, radius, k, true);
}

IMat ball_query_serial(const Mat& centers, const Mat& source, double radius, int k) {
  return ball_query_impl(centers, source, radius, k, false);
}

SAStageParams SAStageParams::init(const SAStageSpec& spec, int in_dim,
                                  std::mt19937_64& rng) {
  SAStageParams p;
  p.spec = spec;
  int concat_dim = 0;
  for (size_t j = 0; j < spec.radii.size(); ++j) {
    Mlp branch;
    int prev = in_dim + 3;  // feature + relative offset
    for (int w : spec.dims[j]) {
      branch.layers.push_back(make_dense(prev, w, Act::Relu, rng));
      prev = w;
    }
    concat_dim += prev;
    p.branches.push_back(std::move(branch));
  }
  p.agg = make_dense(concat_dim, spec.agg_dim, Act::Relu, rng);
  return p;
}

SAGrads SAGrads::zeros(const SAStageParams& p) {
  SAGrads g;
  g.branches.resize(p.branches.size());
  for (size_t j = 0; j < p.branches.size(); ++j)
    ensure_grads(p.branches[j], &g.branches[j]);
  g.agg.gW = Mat::Zero(p.agg.W.rows(), p.agg.W.cols());
  g.agg.gb = Vec::Zero(p.agg.b.size());
  return g;
}

void SAGrads::add_scaled(const SAGrads& other, double s) {
  for (size_t j = 0; j < branches.size(); ++j)
    for (size_t l = 0; l < branches[j].size(); ++l) {
      branches[j][l].gW += s * other.branches[j][l].gW;
      branches[j][l].gb += s * other.branches[j][l].gb;
    }
  agg.gW += s * other.agg.gW;
  agg.gb += s * other.agg.gb;
}

StageOutput set_abstraction(const SAStageParams& stage, const StageOutput& prev,
                            const Mat& centers, SACache* cache) {
  const int m = static_cast<int>(centers.rows());
  const int n_branches = static_cast<int>(stage.branches.size());
  if (cache) {
    cache->group_idx.resize(n_branches);
    cache->branch_caches.resize(n_branches);
    cache->argmax.resize(n_branches);
    cache->pool_gap.assign(n_branches, std::numeric_limits<double>::infinity());
    cache->n_src = prev.feats.rows();
  }
  std::vector<Mat> pooled(n_branches);
  for (int j = 0; j < n_branches; ++j) {
    const int k = stage.spec.nquery[j];
    IMat idx = ball_query(centers, prev.coords, stage.spec.radii[j], k);
    Mat grouped(m * k, prev.feats.cols() + 3);
    for (int i = 0; i < m; ++i)
      for (int q = 0; q < k; ++q) {
        int src = idx(i, q);
        grouped.row(i * k + q) << prev.feats.row(src),
            prev.coords.row(src) - centers.row(i);
      }
    std::vector<DenseCache> bc;
    Mat branch_out = stage.branches[j].forward(grouped, cache ? &bc : nullptr);
    const int cb = static_cast<int>(branch_out.cols());
    Mat pool(m, cb);
    IMat amax(m, cb);
    double gap = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i)
      for (int c = 0; c < cb; ++c) {
        double best = -std::numeric_limits<double>::infinity(), second = best;
        int arg = 0;
        for (int q = 0; q < k; ++q) {
          double v = branch_out(i * k + q, c);
          if (v > best) {
            second = best;
            best = v;
            arg = i * k + q;
          } else if (v > second) {
            second = v;
          }
        }
        pool(i, c) = best;
        amax(i, c) = arg;
        if (k > 1) gap = std::min(gap, best - second);
      }
    pooled[j] = std::move(pool);
    if (cache) {
      cache->group_idx[j] = std::move(idx);
      cache->branch_caches[j] = std::move(bc);
      cache->argmax[j] = std::move(amax);
      cache->pool_gap[j] = gap;
    }
  }
  Eigen::Index total = 0;
  for (const auto& p : pooled) total += p.cols();
  Mat concat(m, total);
  Eigen::Index off = 0;
  for (const auto& p : pooled) {
    concat.middleCols(off, p.cols()) = p;
    off += p.cols();
  }
  StageOutput out;
  out.coords = centers;
  out.feats = dense_forward(stage.agg, concat, cache ? &cache->agg_cache : nullptr);
  if (cache) cache->concat = std::move(concat);
  return out;
}

void set_abstraction_backward(const SAStageParams& stage, const SACache& cache,
                              const Mat& dfeats_out, Mat* dprev_feats, Mat* dcenters,
                              SAGrads* grads) {
  Mat dconcat;
  dense_backward(stage.agg, cache.agg_cache, dfeats_out, &dconcat,
                 grads ? &grads->agg : nullptr);
  const int m = static_cast<int>(dfeats_out.rows());
  Eigen::Index off = 0;
  for (size_t j = 0; j < stage.branches.size(); ++j) {
    const IMat& idx = cache.group_idx[j];
    const IMat& amax = cache.argmax[j];
    const int k = static_cast<int>(idx.cols());
    const int cb = static_cast<int>(amax.cols());
    Mat dpool = dconcat.middleCols(off, cb);
    off += cb;
    Mat dbranch_out = Mat::Zero(m * k, cb);
    for (int i = 0; i < m; ++i)
      for (int c = 0; c < cb; ++c) dbranch_out(amax(i, c), c) += dpool(i, c);
    Mat dgrouped = stage.branches[j].backward(
        cache.branch_caches[j], dbranch_out,
        grads ? &grads->branches[j] : nullptr);
    const Eigen::Index feat_dim = dgrouped.cols() - 3;
    for (int i = 0; i < m; ++i)
      for (int q = 0; q < k; ++q) {
        const auto row = dgrouped.row(i * k + q);
        if (dprev_feats) dprev_feats->row(idx(i, q)) += row.head(feat_dim);
        if (dcenters) dcenters->row(i) -= row.tail(3);
      }
  }
}

double sa_min_kink_gap(const SAStageParams& stage, const SACache& cache) {
  double gap = std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < stage.branches.size(); ++j) {
    gap = std::min(gap, cache.pool_gap[j]);
    gap = std::min(gap, stage.branches[j].min_abs_pre(cache.branch_caches[j]));
  }
  gap = std::min(gap, cache.agg_cache.min_abs_pre);
  return gap;
}

}  // namespace pdm
