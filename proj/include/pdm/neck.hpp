#pragma once

#include "pdm/config.hpp"
#include "pdm/sh.hpp"
#include "pdm/types.hpp"

#include <map>
#include <set>

namespace pdm {

// Cell key = iy * width + ix, so map iteration is y-major row order.
using CellKey = std::int64_t;

inline CellKey cell_key(int ix, int iy, const GridSpec& g) {
  return static_cast<CellKey>(iy) * g.width + ix;
}
inline std::pair<int, int> key_cell(CellKey k, const GridSpec& g) {
  return {static_cast<int>(k % g.width), static_cast<int>(k / g.width)};
}

struct SparseGrid {
  GridSpec spec;
  std::map<CellKey, Vec> cells;  // feature row per occupied cell

  Eigen::Index feat_dim() const {
    return cells.empty() ? 0 : cells.begin()->second.size();
  }
};

struct StructuringElement {
  int size = 5;
  std::vector<char> mask;  // size x size, row-major

  static StructuringElement ones(int size);
  bool at(int r, int c) const { return mask[static_cast<size_t>(r) * size + c] != 0; }
};

struct DilatedGrid {
  GridSpec spec;
  std::map<CellKey, Vec> cells;
  std::map<CellKey, int> contributors;  // distinct dilation centers per cell
};

// Eq.-6 style sparse projection; colliding points sum their features.
SparseGrid project_to_grid(const Mat& points, const Mat& feats, const GridSpec& spec);

// Minkowski dilation of an occupancy set by a centered element, clipped to
// the grid bounds.
std::set<CellKey> dilate(const std::set<CellKey>& occ, const StructuringElement& se,
                         const GridSpec& spec);

// alpha = sum_lm c_l^m Y_l^m(theta, phi) with phi the in-plane angle between
// cell centers and theta fixed to pi/2.
double angle_coefficient(const Vec& coeffs, int degree, std::pair<int, int> center,
                         std::pair<int, int> target);

// Isotropic bivariate Gaussian between cell centers, displacement in cells.
double scale_coefficient(double sigma, std::pair<int, int> center,
                         std::pair<int, int> target);
// d beta / d sigma at the same arguments.
double scale_coefficient_dsigma(double sigma, std::pair<int, int> center,
                                std::pair<int, int> target);

Vec fuse_coefficients(const Vec& center_feat, double alpha, double beta,
                      FusionMode mode);
// Reverse pass of fuse_coefficients; accumulates into the outputs.
void fuse_backward(const Vec& center_feat, double alpha, double beta, FusionMode mode,
                   const Vec& upstream, Vec* dfeat, double* dalpha, double* dbeta);

// Elementwise sum of contributions landing on each cell.
SparseGrid height_compress(const std::vector<std::pair<CellKey, Vec>>& contributions,
                           const GridSpec& spec);

// Per-contribution record kept for backprop through the filling step.
struct NeckContribution {
  int center;       // index into the sorted occupied-cell list
  CellKey cell;     // target cell
  double alpha = 0, beta = 0;
  Vec basis;        // SH basis at the center->cell angle
  bool raw = false; // un-fused feature of the center's own cell
};

struct NeckTrace {
  std::vector<CellKey> center_cells;  // sorted occupied cells of the raw grid
  std::vector<NeckContribution> contributions;
};

// Full dilation + feature filling. `coeffs` is one SH coefficient row per
// occupied cell of `grid` (sorted key order) and `sigmas` one sigma each.
// Raw center cells additionally receive their projected feature unmodified.
DilatedGrid pdm_fill(const SparseGrid& grid, const Mat& coeffs, const Vec& sigmas,
                     const StructuringElement& se, int sh_degree, FusionMode mode,
                     NeckTrace* trace = nullptr);
// Single-thread reference used by tests and the kernel benchmark.
DilatedGrid pdm_fill_serial(const SparseGrid& grid, const Mat& coeffs,
                            const Vec& sigmas, const StructuringElement& se,
                            int sh_degree, FusionMode mode, NeckTrace* trace = nullptr);

// Grid dumps: dense rows of decimal text (y-major lines) and a sparse
// triplet CSV `ix,iy,c0..cC`.
std::string dump_dense(const Mat& plane);
std::string dump_sparse_csv(const SparseGrid& grid);

}  // namespace pdm
