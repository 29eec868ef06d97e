#include "pdm/heads.hpp"

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

TEST_SUITE_BEGIN("heads");

TEST_CASE("heatmap target splats") {
  GridSpec g = small_grid();
  // box centered exactly on the (8,8) cell center (8.5, 8.5)
  Box3D b(Vec3(8.5, 8.5, 0), Vec3(3, 3, 1.5), 0.0, 0);
  Heatmap hm = heatmap_target({b}, g, 1);
  REQUIRE(hm.planes.size() == 1);
  const Mat& p = hm.planes[0];
  CHECK(p(8, 8) == doctest::Approx(1.0));
  // sigma_r = max(1, min(l,w)/(3*cell)) = 1 cell; neighbor = exp(-0.5)
  CHECK(p(8, 9) == doctest::Approx(std::exp(-0.5)));
  CHECK(p(9, 8) == doctest::Approx(std::exp(-0.5)));
  CHECK(p(9, 9) == doctest::Approx(std::exp(-1.0)));

  // overlapping objects combine by max
  Box3D b2(Vec3(10.5, 8.5, 0), Vec3(3, 3, 1.5), 0.0, 0);
  Heatmap two = heatmap_target({b, b2}, g, 1);
  CHECK(two.planes[0](8, 9) ==
        doctest::Approx(std::max(std::exp(-0.5), std::exp(-0.5 * 1))));
  CHECK(two.planes[0](8, 10) == doctest::Approx(1.0));

  // wider boxes widen sigma_r
  Box3D wide(Vec3(8.5, 8.5, 0), Vec3(9, 9, 1.5), 0.0, 0);
  Heatmap wh = heatmap_target({wide}, g, 1);
  double sr = 9.0 / 3.0;  // min(l,w) / (3 * cell), cell = 1
  CHECK(wh.planes[0](8, 9) == doctest::Approx(std::exp(-0.5 / (sr * sr))));

  // out-of-range centers are skipped, other classes untouched
  Box3D out(Vec3(-5, 0, 0), Vec3(3, 3, 1.5), 0.0, 1);
  Heatmap multi = heatmap_target({b, out}, g, 2);
  CHECK(multi.planes[1].maxCoeff() == doctest::Approx(0.0));

  // parallel matches serial
  std::vector<Box3D> lots;
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(1.0, 15.0);
  for (int i = 0; i < 50; ++i)
    lots.emplace_back(Vec3(u(rng), u(rng), 0), Vec3(2, 1.5, 1), 0.1 * i,
                      static_cast<int>(rng() % 2));
  Heatmap pa = heatmap_target(lots, g, 2);
  Heatmap se = heatmap_target_serial(lots, g, 2);
  for (int c = 0; c < 2; ++c)
    CHECK((pa.planes[c] - se.planes[c]).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("heatmap peaks") {
  GridSpec g = small_grid();
  Heatmap hm = Heatmap::zeros(g, 1);
  hm.planes[0](4, 3) = 0.9;  // (row, col) = (iy, ix)? depends on storage

  auto peaks = heatmap_peaks(hm, 3);
  REQUIRE(peaks.size() >= 1);
  CHECK(peaks[0].score == doctest::Approx(0.9));
  CHECK(peaks[0].cls == 0);

  // uniform plane: every cell ties with its neighbors; lowest index first
  Heatmap flat = Heatmap::zeros(g, 1);
  flat.planes[0].setConstant(0.5);
  auto fp = heatmap_peaks(flat, 2);
  REQUIRE(fp.size() == 2);
  CHECK(fp[0].cell == 0);
  CHECK(fp[1].cell == 1);

  // k = 1 returns only the strongest
  hm.planes[0](10, 10) = 0.95;
  auto one = heatmap_peaks(hm, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].score == doctest::Approx(0.95));
}

TEST_CASE("vote head with zero weights returns the points") {
  std::mt19937_64 rng(31);
  Mlp head = make_mlp(4, {8}, 3, Act::None, rng);
  for (auto& l : head.layers) {
    l.W.setZero();
    l.b.setZero();
  }
  Mat pts(5, 3);
  pts.setRandom();
  Mat feats(5, 4);
  feats.setRandom();
  VoteSet v = vote(pts, feats, head);
  CHECK(v.positions.isApprox(pts));
  CHECK(v.origins == std::vector<int>{0, 1, 2, 3, 4});
  for (auto s : v.sources) CHECK(s == SeedSource::Vote);
}

TEST_CASE("channel attention") {
  std::mt19937_64 rng(32);
  Mat pf(3, 4), gf(3, 6);
  pf.setRandom();
  gf.setRandom();

  // zero gate weights: sigmoid(0) = 1/2, output = concat / 2
  Mlp gate = make_mlp(10, {5}, 10, Act::Sigmoid, rng);
  for (auto& l : gate.layers) {
    l.W.setZero();
    l.b.setZero();
  }
  Mat out = channel_attention(pf, gf, gate);
  REQUIRE(out.rows() == 3);
  REQUIRE(out.cols() == 10);
  Mat concat(3, 10);
  concat << pf, gf;
  CHECK(out.isApprox(0.5 * concat));

  // absent grid features enter as zeros
  Mat zeros = Mat::Zero(3, 6);
  Mat out0 = channel_attention(pf, zeros, gate);
  CHECK(out0.rightCols(6).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("angle bins") {
  CHECK(bin_center(0, 12) == doctest::Approx(-M_PI + M_PI / 12));
  CHECK(yaw_to_bin(bin_center(5, 12), 12) == 5);
  for (int b = 0; b < 12; ++b) CHECK(yaw_to_bin(bin_center(b, 12), 12) == b);
}

TEST_CASE("decode with zero heads") {
  int bins = 12;
  Mat cls = Mat::Zero(2, 1);
  Mat reg = Mat::Zero(2, reg_dim(bins));
  Mat seeds(2, 3);
  seeds << 1, 2, 0.5, -3, 4, 0.0;

  auto dets = decode_boxes(cls, reg, seeds, bins);
  REQUIRE(dets.size() == 2);
  CHECK(dets[0].box.center.isApprox(Vec3(1, 2, 0.5)));
  CHECK(dets[0].box.size.x() == doctest::Approx(std::log(2.0)));  // softplus(0)
  CHECK(dets[0].box.yaw == doctest::Approx(bin_center(0, bins)));
  CHECK(dets[0].box.score == doctest::Approx(0.5));  // sigmoid(0)
  CHECK(dets[0].class_scores.size() == 1);

  // residual shifts by half-bin-width * tanh-free scaling
  Mat reg2 = reg;
  reg2(0, 6 + 3) = 10.0;          // bin 3 wins
  reg2(0, 6 + bins + 3) = 0.5;    // residual in that bin
  auto d2 = decode_boxes(cls, reg2, seeds, bins);
  CHECK(d2[0].box.yaw ==
        doctest::Approx(wrap_angle(bin_center(3, bins) + 0.5 * (M_PI / bins))));
}

TEST_CASE("detections csv") {
  Detection d;
  d.box = Box3D(Vec3(1, 2, 3), Vec3(4, 5, 6), 0.25, 1, 0.75);
  d.class_scores = Vec::Constant(2, 0.75);
  std::string csv = detections_to_csv({d});
  CHECK(csv.find("1,2,3,4,5,6,0.25,1,0.75") != std::string::npos);
}

TEST_SUITE_END();
