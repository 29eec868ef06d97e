#include "pdm/iou.hpp"

#include <doctest.h>

#include <random>

using namespace pdm;

namespace {

// Monte Carlo IoU over a bounding region covering both boxes.
double mc_iou(const Box3D& a, const Box3D& b, IouMode mode, int samples,
              std::mt19937_64& rng) {
  auto ca = a.corners();
  auto cb = b.corners();
  Vec3 lo = ca.colwise().minCoeff().cwiseMin(cb.colwise().minCoeff()).transpose();
  Vec3 hi = ca.colwise().maxCoeff().cwiseMax(cb.colwise().maxCoeff()).transpose();
  if (mode == IouMode::Bev) {
    lo.z() = -0.5;
    hi.z() = 0.5;
  }
  std::uniform_real_distribution<double> ux(lo.x(), hi.x());
  std::uniform_real_distribution<double> uy(lo.y(), hi.y());
  std::uniform_real_distribution<double> uz(lo.z(), hi.z());
  auto inside = [&](const Box3D& box, Vec3 p) {
    if (mode == IouMode::Bev) p.z() = box.center.z();
    return box.contains(p);
  };
  int ni = 0, nu = 0;
  for (int s = 0; s < samples; ++s) {
    Vec3 p(ux(rng), uy(rng), uz(rng));
    bool ia = inside(a, p), ib = inside(b, p);
    ni += ia && ib;
    nu += ia || ib;
  }
  return nu == 0 ? 0.0 : static_cast<double>(ni) / nu;
}

}  // namespace

TEST_SUITE_BEGIN("iou");

TEST_CASE("hand-checked values") {
  Box3D a(Vec3::Zero(), Vec3(2, 2, 2), 0.0);
  CHECK(iou(a, a, IouMode::Full3d) == doctest::Approx(1.0));
  CHECK(iou(a, a, IouMode::Bev) == doctest::Approx(1.0));

  Box3D b(Vec3(1, 0, 0), Vec3(2, 2, 2), 0.0);
  // overlap 1x2x2 = 4, union 8 + 8 - 4 = 12
  CHECK(iou(a, b, IouMode::Full3d) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  CHECK(iou(a, b, IouMode::Bev) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));

  Box3D far(Vec3(10, 0, 0), Vec3(2, 2, 2), 0.0);
  CHECK(iou(a, far, IouMode::Full3d) == doctest::Approx(0.0));

  Box3D above(Vec3(0, 0, 5), Vec3(2, 2, 2), 0.0);
  CHECK(iou(a, above, IouMode::Full3d) == doctest::Approx(0.0));
  CHECK(iou(a, above, IouMode::Bev) == doctest::Approx(1.0));  // z ignored

  // square rotated 45 degrees inside an identical square:
  // intersection is the regular octagon, area 8(sqrt(2)-1)
  Box3D rot(Vec3::Zero(), Vec3(2, 2, 2), M_PI / 4);
  double inter = 8 * (std::sqrt(2.0) - 1);
  CHECK(iou(a, rot, IouMode::Bev) ==
        doctest::Approx(inter / (8 - inter)).epsilon(1e-9));
}

TEST_CASE("symmetry and Monte Carlo agreement") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    Box3D a(Vec3(u(rng), u(rng), 0.3 * u(rng)),
            Vec3(1 + std::abs(u(rng)), 1 + std::abs(u(rng)), 1 + std::abs(u(rng))),
            u(rng) * M_PI);
    Box3D b(Vec3(u(rng), u(rng), 0.3 * u(rng)),
            Vec3(1 + std::abs(u(rng)), 1 + std::abs(u(rng)), 1 + std::abs(u(rng))),
            u(rng) * M_PI);
    for (IouMode mode : {IouMode::Bev, IouMode::Full3d}) {
      double ab = iou(a, b, mode);
      CHECK(ab == doctest::Approx(iou(b, a, mode)).epsilon(1e-12));
      CHECK(std::abs(ab - mc_iou(a, b, mode, 40000, rng)) < 0.02);
    }
  }
}

TEST_CASE("nms") {
  auto det = [](double x, double score, int label) {
    Detection d;
    d.box = Box3D(Vec3(x, 0, 0), Vec3(2, 2, 2), 0.0, label, score);
    d.class_scores = Vec::Constant(2, score);
    return d;
  };

  // overlapping same-class pair: keep the higher score
  auto kept = nms({det(0, 0.9, 0), det(0.2, 0.8, 0)}, 0.1, 0.05);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].box.score == doctest::Approx(0.9));

  // different classes never suppress each other
  kept = nms({det(0, 0.9, 0), det(0.2, 0.8, 1)}, 0.1, 0.05);
  CHECK(kept.size() == 2);

  // below score_thr drops before matching
  kept = nms({det(0, 0.9, 0), det(10, 0.01, 0)}, 0.1, 0.05);
  REQUIRE(kept.size() == 1);

  // idempotence
  auto twice = nms(kept, 0.1, 0.05);
  CHECK(twice.size() == kept.size());
}

TEST_SUITE_END();
