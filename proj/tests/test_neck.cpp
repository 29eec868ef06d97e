#include "pdm/neck.hpp"

#include <doctest.h>

#include <random>

using namespace pdm;

namespace {

GridSpec small_grid() {
  GridSpec g;
  g.range = {0.0, 0.0, -1.0, 16.0, 16.0, 1.0};
  g.width = 16;
  g.height = 16;
  return g;
}

}  // namespace

TEST_SUITE_BEGIN("neck");

TEST_CASE("projection sums colliding features and conserves mass") {
  GridSpec g = small_grid();
  Mat pts(3, 3);
  pts << 0.5, 0.5, 0.0,   // cell (0,0)
         0.6, 0.7, 0.0,   // same cell
         3.5, 2.5, 0.0;   // cell (3,2)
  Mat feats(3, 2);
  feats << 1, 2, 3, 4, 1, 2;

  SparseGrid grid = project_to_grid(pts, feats, g);
  CHECK(grid.cells.size() == 2);
  CHECK(grid.cells.at(cell_key(0, 0, g)).isApprox(Vec2(4, 6)));
  CHECK(grid.cells.at(cell_key(3, 2, g)).isApprox(Vec2(1, 2)));

  Vec total = Vec::Zero(2);
  for (const auto& [k, v] : grid.cells) total += v;
  CHECK(total.isApprox(feats.colwise().sum().transpose()));

  // out-of-range points are dropped
  Mat out_pt(1, 3);
  out_pt << -1, 0, 0;
  CHECK(project_to_grid(out_pt, Mat::Ones(1, 2), g).cells.empty());
}

TEST_CASE("binary dilation footprint") {
  GridSpec g = small_grid();
  StructuringElement se = StructuringElement::ones(5);

  std::set<CellKey> one = {cell_key(8, 8, g)};
  CHECK(dilate(one, se, g).size() == 25);

  std::set<CellKey> corner = {cell_key(0, 0, g)};
  CHECK(dilate(corner, se, g).size() == 9);  // clipped to the grid

  CHECK(dilate({}, se, g).empty());

  // extensive: A subset of dilate(A); monotone: A subset B -> D(A) subset D(B)
  std::set<CellKey> a = {cell_key(3, 4, g), cell_key(9, 2, g)};
  std::set<CellKey> da = dilate(a, se, g);
  for (CellKey k : a) CHECK(da.count(k) == 1);
  std::set<CellKey> b = a;
  b.insert(cell_key(12, 12, g));
  std::set<CellKey> db = dilate(b, se, g);
  for (CellKey k : da) CHECK(db.count(k) == 1);

  // translation equivariance away from the boundary
  std::set<CellKey> shifted;
  for (CellKey k : a) {
    auto [ix, iy] = key_cell(k, g);
    shifted.insert(cell_key(ix + 2, iy + 3, g));
  }
  std::set<CellKey> ds = dilate(shifted, se, g);
  CHECK(ds.size() == da.size());
  for (CellKey k : da) {
    auto [ix, iy] = key_cell(k, g);
    CHECK(ds.count(cell_key(ix + 2, iy + 3, g)) == 1);
  }
}

TEST_CASE("scale coefficient is a unit-mass isotropic Gaussian") {
  CHECK(scale_coefficient(1.0, {5, 5}, {5, 5}) ==
        doctest::Approx(1.0 / (2 * M_PI)));
  // monotone decrease with distance
  double prev = scale_coefficient(1.0, {5, 5}, {5, 5});
  for (int d = 1; d <= 4; ++d) {
    double cur = scale_coefficient(1.0, {5, 5}, {5 + d, 5});
    CHECK(cur < prev);
    prev = cur;
  }
  // radial symmetry
  CHECK(scale_coefficient(2.0, {5, 5}, {7, 5}) ==
        doctest::Approx(scale_coefficient(2.0, {5, 5}, {5, 7})));

  // 41x41 quadrature at sigma = 1 integrates to ~1 over cells
  double sum = 0;
  for (int dx = -20; dx <= 20; ++dx)
    for (int dy = -20; dy <= 20; ++dy)
      sum += scale_coefficient(1.0, {20, 20}, {20 + dx, 20 + dy});
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-3));

  // analytic sigma derivative matches finite differences
  for (double sigma : {0.7, 1.3, 2.5}) {
    double h = 1e-6;
    double fd = (scale_coefficient(sigma + h, {0, 0}, {2, 1}) -
                 scale_coefficient(sigma - h, {0, 0}, {2, 1})) /
                (2 * h);
    CHECK(scale_coefficient_dsigma(sigma, {0, 0}, {2, 1}) ==
          doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("angle coefficient") {
  // only the constant coefficient set: alpha is isotropic
  Vec c = Vec::Zero(9);
  c(0) = 1.0;
  double a1 = angle_coefficient(c, 2, {5, 5}, {6, 5});
  double a2 = angle_coefficient(c, 2, {5, 5}, {5, 6});
  double a3 = angle_coefficient(c, 2, {5, 5}, {3, 2});
  CHECK(a1 == doctest::Approx(0.28209479177387814));
  CHECK(a2 == doctest::Approx(a1));
  CHECK(a3 == doctest::Approx(a1));

  CHECK(angle_coefficient(Vec::Zero(9), 2, {5, 5}, {6, 5}) == doctest::Approx(0.0));

  // linear in the coefficients
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec x = Vec::NullaryExpr(9, [&](Eigen::Index) { return u(rng); });
  Vec y = Vec::NullaryExpr(9, [&](Eigen::Index) { return u(rng); });
  double ax = angle_coefficient(x, 2, {4, 4}, {7, 9});
  double ay = angle_coefficient(y, 2, {4, 4}, {7, 9});
  CHECK(angle_coefficient(x + 2 * y, 2, {4, 4}, {7, 9}) ==
        doctest::Approx(ax + 2 * ay));
}

TEST_CASE("fusion modes") {
  Vec f(2);
  f << 2, 4;
  Vec split = fuse_coefficients(f, 0.5, 0.25, FusionMode::Split);
  REQUIRE(split.size() == 2);
  CHECK(split(0) == doctest::Approx(1.0));
  CHECK(split(1) == doctest::Approx(1.0));

  Vec straight = fuse_coefficients(f, 0.5, 0.25, FusionMode::Straight);
  CHECK(straight.isApprox(0.75 * f));

  Vec half = fuse_coefficients(f, 0.5, 0.25, FusionMode::HalfSum);
  REQUIRE(half.size() == 1);
  CHECK(half(0) == doctest::Approx(0.5 * 2 + 0.25 * 4));

  CHECK(fuse_coefficients(f, 0.0, 0.0, FusionMode::Straight).norm() ==
        doctest::Approx(0.0));

  // fuse_backward matches finite differences in every slot
  for (FusionMode mode : {FusionMode::Split, FusionMode::Straight, FusionMode::HalfSum}) {
    Vec feat(4);
    feat << 0.3, -1.2, 0.8, 2.0;
    double alpha = 0.6, beta = -0.4;
    Vec up = Vec::NullaryExpr(
        fuse_coefficients(feat, alpha, beta, mode).size(),
        [](Eigen::Index i) { return 0.5 + 0.1 * i; });
    Vec dfeat = Vec::Zero(4);
    double dalpha = 0, dbeta = 0;
    fuse_backward(feat, alpha, beta, mode, up, &dfeat, &dalpha, &dbeta);

    double h = 1e-7;
    auto val = [&](const Vec& ff, double a, double b) {
      return up.dot(fuse_coefficients(ff, a, b, mode));
    };
    for (int i = 0; i < 4; ++i) {
      Vec fp = feat, fm = feat;
      fp(i) += h;
      fm(i) -= h;
      CHECK(dfeat(i) ==
            doctest::Approx((val(fp, alpha, beta) - val(fm, alpha, beta)) / (2 * h))
                .epsilon(1e-6));
    }
    CHECK(dalpha == doctest::Approx((val(feat, alpha + h, beta) -
                                     val(feat, alpha - h, beta)) /
                                    (2 * h)).epsilon(1e-6));
    CHECK(dbeta == doctest::Approx((val(feat, alpha, beta + h) -
                                    val(feat, alpha, beta - h)) /
                                   (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("height compression sums contributions per cell") {
  GridSpec g = small_grid();
  std::vector<std::pair<CellKey, Vec>> contribs = {
      {cell_key(1, 1, g), Vec2(1, 0)},
      {cell_key(1, 1, g), Vec2(2, 3)},
      {cell_key(4, 4, g), Vec2(0, 5)},
  };
  SparseGrid out = height_compress(contribs, g);
  CHECK(out.cells.size() == 2);
  CHECK(out.cells.at(cell_key(1, 1, g)).isApprox(Vec2(3, 3)));
  CHECK(out.cells.at(cell_key(4, 4, g)).isApprox(Vec2(0, 5)));
}

TEST_CASE("pdm_fill footprint and contributor counts") {
  GridSpec g = small_grid();
  StructuringElement se = StructuringElement::ones(5);

  SparseGrid grid;
  grid.spec = g;
  grid.cells[cell_key(8, 8, g)] = Vec2(1, 2);
  Mat coeffs = Mat::Zero(1, 9);
  coeffs(0, 0) = 1.0;
  Vec sigmas = Vec::Constant(1, 1.0);

  DilatedGrid d = pdm_fill(grid, coeffs, sigmas, se, 2, FusionMode::Split);
  CHECK(d.cells.size() == 25);
  CHECK(d.contributors.at(cell_key(8, 8, g)) == 1);

  // two centers 2 cells apart overlap; the mid cell sees both
  grid.cells[cell_key(10, 8, g)] = Vec2(3, 1);
  Mat coeffs2 = Mat::Zero(2, 9);
  coeffs2.col(0).setOnes();
  Vec sigmas2 = Vec::Constant(2, 1.0);
  DilatedGrid d2 = pdm_fill(grid, coeffs2, sigmas2, se, 2, FusionMode::Split);
  CHECK(d2.contributors.at(cell_key(9, 8, g)) == 2);
  CHECK(d2.contributors.at(cell_key(6, 8, g)) == 1);

  // parallel and serial fills agree exactly
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SparseGrid big;
  big.spec = g;
  for (int i = 0; i < 40; ++i) {
    big.cells[cell_key(static_cast<int>(rng() % 16), static_cast<int>(rng() % 16), g)] =
        Vec::NullaryExpr(4, [&](Eigen::Index) { return u(rng); });
  }
  Eigen::Index n = static_cast<Eigen::Index>(big.cells.size());
  Mat bc = Mat::NullaryExpr(n, 9, [&](Eigen::Index, Eigen::Index) { return u(rng); });
  Vec bs = Vec::NullaryExpr(n, [&](Eigen::Index) { return 0.5 + std::abs(u(rng)); });
  for (FusionMode mode : {FusionMode::Split, FusionMode::Straight, FusionMode::HalfSum}) {
    DilatedGrid pa = pdm_fill(big, bc, bs, se, 2, mode);
    DilatedGrid sa = pdm_fill_serial(big, bc, bs, se, 2, mode);
    REQUIRE(pa.cells.size() == sa.cells.size());
    for (const auto& [k, v] : pa.cells) CHECK(v.isApprox(sa.cells.at(k), 1e-14));
    CHECK(pa.contributors == sa.contributors);
  }
}

TEST_CASE("grid dumps") {
  Mat plane(2, 3);
  plane << 1, 2, 3, 4, 5, 6;
  std::string dense = dump_dense(plane);
  CHECK(dense.find('\n') != std::string::npos);
  CHECK(dense.find("1") != std::string::npos);

  GridSpec g = small_grid();
  SparseGrid grid;
  grid.spec = g;
  grid.cells[cell_key(3, 2, g)] = Vec2(1.5, -2.0);
  std::string csv = dump_sparse_csv(grid);
  CHECK(csv.find("3,2,") != std::string::npos);
}

TEST_SUITE_END();
