#include "pdm/eval.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace pdm;

namespace {

Detection det_at(double x, double score, int label = 0, double size = 2.0) {
  Detection d;
  d.box = Box3D(Vec3(x, 0, 0), Vec3(size, size, size), 0.0, label, score);
  d.class_scores = Vec::Constant(label + 1, score);
  return d;
}

Box3D gt_at(double x, int label = 0, double size = 2.0) {
  return Box3D(Vec3(x, 0, 0), Vec3(size, size, size), 0.0, label);
}

// Threshold-sweep oracle: exact AP from first principles by evaluating
// precision/recall at every score cut and integrating the interpolated
// curve at fixed recall points.
double oracle_ap(std::vector<Detection> dets, const std::vector<Box3D>& gts,
                 double iou_thr, IouMode mode, int points) {
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    return a.box.score > b.box.score;
  });
  std::vector<bool> used(gts.size(), false);
  std::vector<int> tp;
  for (const Detection& d : dets) {
    int best = -1;
    double best_iou = iou_thr;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].label != d.box.label) continue;
      double v = iou(d.box, gts[g], mode);
      if (v >= best_iou) {
        best_iou = v;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) used[static_cast<size_t>(best)] = true;
    tp.push_back(best >= 0 ? 1 : 0);
  }
  int n_gt = static_cast<int>(gts.size());
  if (n_gt == 0) return 0.0;
  auto precision_at_recall = [&](double r) {
    // max precision over prefixes whose recall >= r
    double best = 0.0;
    int cum = 0;
    for (size_t i = 0; i < tp.size(); ++i) {
      cum += tp[i];
      double rec = static_cast<double>(cum) / n_gt;
      double prec = static_cast<double>(cum) / static_cast<double>(i + 1);
      if (rec >= r - 1e-12) best = std::max(best, prec);
    }
    return best;
  };
  double sum = 0.0;
  for (int i = 0; i < points; ++i) {
    double r = points == 11 ? i / 10.0 : (i + 1) / 40.0;
    sum += precision_at_recall(r);
  }
  return sum / points;
}

}  // namespace

TEST_SUITE_BEGIN("eval");

TEST_CASE("single exact detection") {
  auto res = average_precision({det_at(0, 0.9)}, {gt_at(0)}, 0.5, IouMode::Full3d, 1);
  REQUIRE(res.per_class.size() == 1);
  CHECK(res.per_class[0].present);
  CHECK(res.per_class[0].ap_r11 == doctest::Approx(1.0));
  CHECK(res.per_class[0].ap_r40 == doctest::Approx(1.0));
  CHECK(res.mean_ap_r11 == doctest::Approx(1.0));
}

TEST_CASE("no detections, and classes without ground truth") {
  auto res = average_precision({}, {gt_at(0)}, 0.5, IouMode::Full3d, 2);
  CHECK(res.per_class[0].ap_r11 == doctest::Approx(0.0));
  CHECK(res.per_class[0].present);
  CHECK(!res.per_class[1].present);
  CHECK(res.mean_ap_r11 == doctest::Approx(0.0));  // mean over present only
}

TEST_CASE("tp fp tp at 2 gt") {
  // score .9 match, .8 miss, .7 match of the second gt
  std::vector<Detection> dets = {det_at(0, 0.9), det_at(50, 0.8), det_at(10, 0.7)};
  std::vector<Box3D> gts = {gt_at(0), gt_at(10)};
  auto res = average_precision(dets, gts, 0.5, IouMode::Full3d, 1);
  // prefix precisions 1/1, 1/2, 2/3; recall hits 0.5 then 1.0.
  // right-max interpolation: p(r<=0.5)=1, p(0.5<r<=1)=2/3
  // R11: 6 points at 1 + 5 points at 2/3 = (6 + 10/3)/11 = 28/33
  CHECK(res.per_class[0].ap_r11 == doctest::Approx(28.0 / 33.0));
  // R40: recall points 1/40..1; r<=0.5 -> 20 pts at 1, rest at 2/3
  CHECK(res.per_class[0].ap_r40 == doctest::Approx((20.0 + 20.0 * 2 / 3) / 40.0));
  CHECK(res.per_class[0].ap_r11 ==
        doctest::Approx(oracle_ap(dets, gts, 0.5, IouMode::Full3d, 11)));
}

TEST_CASE("matches the threshold-sweep oracle on random instances") {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> ux(0.0, 60.0);
  std::uniform_real_distribution<double> us(0.0, 1.0);
  for (int t = 0; t < 40; ++t) {
    int n_gt = 1 + static_cast<int>(rng() % 4);
    int n_det = static_cast<int>(rng() % 11);
    std::vector<Box3D> gts;
    for (int g = 0; g < n_gt; ++g) gts.push_back(gt_at(ux(rng)));
    std::vector<Detection> dets;
    for (int d = 0; d < n_det; ++d) {
      // half the detections sit near a gt, half are strays
      double x = (rng() % 2) ? gts[rng() % gts.size()].center.x() + 0.3 * us(rng)
                             : ux(rng);
      dets.push_back(det_at(x, us(rng)));
    }
    auto res = average_precision(dets, gts, 0.5, IouMode::Full3d, 1);
    CHECK(res.per_class[0].ap_r11 ==
          doctest::Approx(oracle_ap(dets, gts, 0.5, IouMode::Full3d, 11)).epsilon(1e-9));
    CHECK(res.per_class[0].ap_r40 ==
          doctest::Approx(oracle_ap(dets, gts, 0.5, IouMode::Full3d, 40)).epsilon(1e-9));
  }
}

TEST_CASE("invariant to monotone score rescaling") {
  std::vector<Detection> dets = {det_at(0, 0.9), det_at(50, 0.8), det_at(10, 0.7)};
  std::vector<Box3D> gts = {gt_at(0), gt_at(10)};
  auto a = average_precision(dets, gts, 0.5, IouMode::Full3d, 1);
  for (auto& d : dets) d.box.score = 0.1 * d.box.score + 0.05;
  auto b = average_precision(dets, gts, 0.5, IouMode::Full3d, 1);
  CHECK(a.per_class[0].ap_r11 == doctest::Approx(b.per_class[0].ap_r11));
  CHECK(a.per_class[0].ap_r40 == doctest::Approx(b.per_class[0].ap_r40));
}

TEST_CASE("per-scene matching stays inside the scene") {
  // one detection per scene, each overlapping the other scene's gt only
  std::vector<std::vector<Detection>> dets = {{det_at(10, 0.9)}, {det_at(0, 0.8)}};
  std::vector<std::vector<Box3D>> gts = {{gt_at(0)}, {gt_at(10)}};
  auto res = average_precision_scenes(dets, gts, 0.5, IouMode::Full3d, 1);
  CHECK(res.per_class[0].ap_r11 == doctest::Approx(0.0));

  // swap: both match
  auto good = average_precision_scenes({{det_at(0, 0.9)}, {det_at(10, 0.8)}}, gts,
                                       0.5, IouMode::Full3d, 1);
  CHECK(good.per_class[0].ap_r11 == doctest::Approx(1.0));
}

TEST_CASE("sampling benchmark table shape") {
  auto rows = sampling_benchmark({128, 256}, 3, 3);
  CHECK(rows.size() == 8);  // 4 methods x 2 counts
  for (size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i - 1].count <= rows[i].count);
    if (rows[i - 1].count == rows[i].count)
      CHECK(rows[i - 1].method <= rows[i].method);
  }
  for (const auto& r : rows) {
    CHECK(r.ms >= 0.0);
    CHECK(r.bytes > 0);
  }
  std::string csv = benchmark_csv(rows);
  CHECK(csv.find("dfps") != std::string::npos);
  CHECK(csv.find("128") != std::string::npos);
}

TEST_CASE("gradcheck ops all pass their thresholds") {
  auto ops = gradcheck_ops();
  CHECK(std::find(ops.begin(), ops.end(), "dense") != ops.end());
  CHECK(gradcheck("dense", 4, 1) < 1e-6);
  CHECK(gradcheck("sampling_loss", 4, 2) < 1e-5);
  CHECK(gradcheck("scale_coefficient", 4, 3) < 1e-5);
  CHECK(gradcheck("fusion", 4, 4) < 1e-5);
  CHECK(gradcheck("heatmap_loss", 2, 5) < 1e-5);
  CHECK_THROWS(gradcheck("no_such_op", 1, 0));
}

TEST_SUITE_END();
