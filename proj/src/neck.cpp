#include "pdm/neck.hpp"

#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pdm {

StructuringElement StructuringElement::ones(int size) {
  if (size < 1 || size % 2 == 0)
    throw std::invalid_argument("structuring element size must be odd");
  StructuringElement se;
  se.size = size;
  se.mask.assign(static_cast<size_t>(size) * size, 1);
  return se;
}

SparseGrid project_to_grid(const Mat& points, const Mat& feats, const GridSpec& spec) {
  if (points.rows() != feats.rows())
    throw std::invalid_argument("project_to_grid: row mismatch");
  SparseGrid g;
  g.spec = spec;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    auto cell = spec.world_to_cell(points(i, 0), points(i, 1));
    if (!cell) continue;
    CellKey key = cell_key(cell->first, cell->second, spec);
    auto [it, fresh] = g.cells.try_emplace(key, feats.row(i).transpose());
    if (!fresh) it->second += feats.row(i).transpose();
  }
  return g;
}

std::set<CellKey> dilate(const std::set<CellKey>& occ, const StructuringElement& se,
                         const GridSpec& spec) {
  std::set<CellKey> out;
  const int h = se.size / 2;
  for (CellKey key : occ) {
    auto [ix, iy] = key_cell(key, spec);
    for (int dy = -h; dy <= h; ++dy)
      for (int dx = -h; dx <= h; ++dx) {
        if (!se.at(dy + h, dx + h)) continue;
        int tx = ix + dx, ty = iy + dy;
        if (spec.in_bounds(tx, ty)) out.insert(cell_key(tx, ty, spec));
      }
  }
  return out;
}

double angle_coefficient(const Vec& coeffs, int degree, std::pair<int, int> center,
                         std::pair<int, int> target) {
  if (coeffs.size() != sh_count(degree))
    throw std::invalid_argument("angle_coefficient: coefficient count mismatch");
  double phi = std::atan2(static_cast<double>(target.second - center.second),
                          static_cast<double>(target.first - center.first));
  return coeffs.dot(sh_basis(degree, M_PI / 2.0, phi));
}

static double cell_dist2(std::pair<int, int> a, std::pair<int, int> b) {
  double dx = b.first - a.first, dy = b.second - a.second;
  return dx * dx + dy * dy;
}

double scale_coefficient(double sigma, std::pair<int, int> center,
                         std::pair<int, int> target) {
  if (sigma <= 0) throw std::invalid_argument("scale_coefficient: sigma must be > 0");
  double d2 = cell_dist2(center, target);
  return std::exp(-d2 / (2.0 * sigma * sigma)) / (2.0 * M_PI * sigma * sigma);
}

double scale_coefficient_dsigma(double sigma, std::pair<int, int> center,
                                std::pair<int, int> target) {
  double d2 = cell_dist2(center, target);
  double beta = scale_coefficient(sigma, center, target);
  return beta * (d2 / (sigma * sigma * sigma) - 2.0 / sigma);
}

Vec fuse_coefficients(const Vec& center_feat, double alpha, double beta,
                      FusionMode mode) {
  const Eigen::Index c = center_feat.size();
  switch (mode) {
    case FusionMode::Straight:
      return (alpha + beta) * center_feat;
    case FusionMode::Split: {
      if (c % 2 != 0)
        throw std::invalid_argument("split fusion needs an even feature dim");
      Vec out(c);
      out.head(c / 2) = alpha * center_feat.head(c / 2);
      out.tail(c / 2) = beta * center_feat.tail(c / 2);
      return out;
    }
    case FusionMode::HalfSum: {
      if (c % 2 != 0)
        throw std::invalid_argument("halfsum fusion needs an even feature dim");
      return alpha * center_feat.head(c / 2) + beta * center_feat.tail(c / 2);
    }
  }
  throw std::logic_error("unreachable");
}

void fuse_backward(const Vec& center_feat, double alpha, double beta, FusionMode mode,
                   const Vec& upstream, Vec* dfeat, double* dalpha, double* dbeta) {
  const Eigen::Index c = center_feat.size();
  switch (mode) {
    case FusionMode::Straight:
      if (dfeat) *dfeat += (alpha + beta) * upstream;
      if (dalpha) *dalpha += upstream.dot(center_feat);
      if (dbeta) *dbeta += upstream.dot(center_feat);
      return;
    case FusionMode::Split:
      if (dfeat) {
        dfeat->head(c / 2) += alpha * upstream.head(c / 2);
        dfeat->tail(c / 2) += beta * upstream.tail(c / 2);
      }
      if (dalpha) *dalpha += upstream.head(c / 2).dot(center_feat.head(c / 2));
      if (dbeta) *dbeta += upstream.tail(c / 2).dot(center_feat.tail(c / 2));
      return;
    case FusionMode::HalfSum:
      if (dfeat) {
        dfeat->head(c / 2) += alpha * upstream;
        dfeat->tail(c / 2) += beta * upstream;
      }
      if (dalpha) *dalpha += upstream.dot(center_feat.head(c / 2));
      if (dbeta) *dbeta += upstream.dot(center_feat.tail(c / 2));
      return;
  }
  throw std::logic_error("unreachable");
}

SparseGrid height_compress(const std::vector<std::pair<CellKey, Vec>>& contributions,
                           const GridSpec& spec) {
  SparseGrid g;
  g.spec = spec;
  for (const auto& [key, feat] : contributions) {
    auto [it, fresh] = g.cells.try_emplace(key, feat);
    if (!fresh) it->second += feat;
  }
  return g;
}

namespace {

struct CenterWork {
  std::vector<std::pair<CellKey, Vec>> contribs;
  std::vector<NeckContribution> records;
};

CenterWork fill_one_center(int ci, CellKey key, const Vec& feat, const Vec& coeff_row,
                           double sigma, const StructuringElement& se, int sh_degree,
                           FusionMode mode, const GridSpec& spec, bool want_trace) {
  CenterWork w;
  const int h = se.size / 2;
  auto [ix, iy] = key_cell(key, spec);
  for (int dy = -h; dy <= h; ++dy)
    for (int dx = -h; dx <= h; ++dx) {
      if (!se.at(dy + h, dx + h)) continue;
      int tx = ix + dx, ty = iy + dy;
      if (!spec.in_bounds(tx, ty)) continue;
      double phi = std::atan2(static_cast<double>(dy), static_cast<double>(dx));
      Vec basis = sh_basis(sh_degree, M_PI / 2.0, phi);
      double alpha = coeff_row.dot(basis);
      double beta = scale_coefficient(sigma, {ix, iy}, {tx, ty});
      CellKey tkey = cell_key(tx, ty, spec);
      w.contribs.emplace_back(tkey, fuse_coefficients(feat, alpha, beta, mode));
      if (want_trace) {
        NeckContribution rec;
        rec.center = ci;
        rec.cell = tkey;
        rec.alpha = alpha;
        rec.beta = beta;
        rec.basis = std::move(basis);
        w.records.push_back(std::move(rec));
      }
    }
  // raw center cell keeps its projected feature in addition (halved to the
  // fused width under halfsum)
  if (mode == FusionMode::HalfSum) {
    const Eigen::Index c = feat.size();
    w.contribs.emplace_back(key, Vec(feat.head(c / 2) + feat.tail(c / 2)));
  } else {
    w.contribs.emplace_back(key, feat);
  }
  if (want_trace) {
    NeckContribution rec;
    rec.center = ci;
    rec.cell = key;
    rec.raw = true;
    w.records.push_back(std::move(rec));
  }
  return w;
}

DilatedGrid merge(const SparseGrid& grid, std::vector<CenterWork>& work,
                  const std::vector<CellKey>& keys, NeckTrace* trace) {
  DilatedGrid out;
  out.spec = grid.spec;
  for (size_t ci = 0; ci < work.size(); ++ci) {
    std::set<CellKey> seen;
    for (auto& [key, feat] : work[ci].contribs) {
      auto [it, fresh] = out.cells.try_emplace(key, feat);
      if (!fresh) it->second += feat;
      if (seen.insert(key).second) out.contributors[key] += 1;
    }
    if (trace)
      for (auto& rec : work[ci].records) trace->contributions.push_back(std::move(rec));
  }
  if (trace) trace->center_cells = keys;
  return out;
}

DilatedGrid fill_impl(const SparseGrid& grid, const Mat& coeffs, const Vec& sigmas,
                      const StructuringElement& se, int sh_degree, FusionMode mode,
                      NeckTrace* trace, bool parallel) {
  const int n = static_cast<int>(grid.cells.size());
  if (coeffs.rows() != n || sigmas.size() != n)
    throw std::invalid_argument("pdm_fill: one coefficient row and sigma per occupied cell");
  if (coeffs.cols() != sh_count(sh_degree))
    throw std::invalid_argument("pdm_fill: coefficient count mismatch");
  std::vector<CellKey> keys;
  std::vector<const Vec*> feats;
  keys.reserve(n);
  for (const auto& [key, feat] : grid.cells) {
    keys.push_back(key);
    feats.push_back(&feat);
  }
  std::vector<CenterWork> work(n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel && n > 16)
#endif
  for (int ci = 0; ci < n; ++ci)
    work[ci] = fill_one_center(ci, keys[ci], *feats[ci], coeffs.row(ci).transpose(),
                               sigmas[ci], se, sh_degree, mode, grid.spec,
                               trace != nullptr);
  return merge(grid, work, keys, trace);
}

}  // namespace

DilatedGrid pdm_fill(const SparseGrid& grid, const Mat& coeffs, const Vec& sigmas,
                     const StructuringElement& se, int sh_degree, FusionMode mode,
                     NeckTrace* trace) {
  return fill_impl(grid, coeffs, sigmas, se, sh_degree, mode, trace, true);
}

DilatedGrid pdm_fill_serial(const SparseGrid& grid, const Mat& coeffs, const Vec& sigmas,
                            const StructuringElement& se, int sh_degree,
                            FusionMode mode, NeckTrace* trace) {
  return fill_impl(grid, coeffs, sigmas, se, sh_degree, mode, trace, false);
}

std::string dump_dense(const Mat& plane) {
  std::ostringstream out;
  out.precision(17);
  for (Eigen::Index y = 0; y < plane.rows(); ++y) {
    for (Eigen::Index x = 0; x < plane.cols(); ++x) {
      if (x) out << ' ';
      out << plane(y, x);
    }
    out << '\n';
  }
  return out.str();
}

std::string dump_sparse_csv(const SparseGrid& grid) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& [key, feat] : grid.cells) {
    auto [ix, iy] = key_cell(key, grid.spec);
    out << ix << ',' << iy;
    for (Eigen::Index c = 0; c < feat.size(); ++c) out << ',' << feat[c];
    out << '\n';
  }
  return out.str();
}

}  // namespace pdm
