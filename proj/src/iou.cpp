#include "pdm/iou.hpp"

#include <algorithm>

namespace pdm {
namespace {

using Poly = std::vector<Vec2>;

Poly bev_corners(const Box3D& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double hl = b.size.x() / 2, hw = b.size.y() / 2;
  Poly p;
  for (auto [sx, sy] : {std::pair{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}) {
    double lx = sx * hl, ly = sy * hw;
    p.emplace_back(b.center.x() + c * lx - s * ly, b.center.y() + s * lx + c * ly);
  }
  return p;  // counter-clockwise
}

double shoelace(const Poly& p) {
  double a = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    const Vec2& u = p[i];
    const Vec2& v = p[(i + 1) % p.size()];
    a += u.x() * v.y() - v.x() * u.y();
  }
  return 0.5 * std::abs(a);
}

// Sutherland-Hodgman clip of `subject` by the half-plane left of a->b.
Poly clip_edge(const Poly& subject, const Vec2& a, const Vec2& b) {
  auto side = [&](const Vec2& p) {
    return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
  };
  Poly out;
  for (size_t i = 0; i < subject.size(); ++i) {
    const Vec2& cur = subject[i];
    const Vec2& nxt = subject[(i + 1) % subject.size()];
    double sc = side(cur), sn = side(nxt);
    if (sc >= 0) out.push_back(cur);
    if ((sc > 0 && sn < 0) || (sc < 0 && sn > 0)) {
      double t = sc / (sc - sn);
      out.push_back(cur + t * (nxt - cur));
    }
  }
  return out;
}

double intersection_area(const Box3D& a, const Box3D& b) {
  Poly subject = bev_corners(a);
  Poly clipper = bev_corners(b);
  for (size_t i = 0; i < clipper.size() && !subject.empty(); ++i)
    subject = clip_edge(subject, clipper[i], clipper[(i + 1) % clipper.size()]);
  return subject.size() < 3 ? 0.0 : shoelace(subject);
}

}  // namespace

double iou(const Box3D& a, const Box3D& b, IouMode mode) {
  const double area_a = a.size.x() * a.size.y();
  const double area_b = b.size.x() * b.size.y();
  if (area_a <= 0 || area_b <= 0) return 0.0;
  const double inter2d = intersection_area(a, b);
  if (mode == IouMode::Bev) {
    double uni = area_a + area_b - inter2d;
    return uni <= 0 ? 0.0 : std::clamp(inter2d / uni, 0.0, 1.0);
  }
  const double zlo = std::max(a.center.z() - a.size.z() / 2, b.center.z() - b.size.z() / 2);
  const double zhi = std::min(a.center.z() + a.size.z() / 2, b.center.z() + b.size.z() / 2);
  const double inter3d = inter2d * std::max(0.0, zhi - zlo);
  const double uni = area_a * a.size.z() + area_b * b.size.z() - inter3d;
  return uni <= 0 ? 0.0 : std::clamp(inter3d / uni, 0.0, 1.0);
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_thr,
                           double score_thr) {
  std::erase_if(dets, [&](const Detection& d) { return d.box.score < score_thr; });
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    return a.box.score > b.box.score;
  });
  std::vector<Detection> kept;
  for (const Detection& d : dets) {
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (k.box.label != d.box.label) continue;
      if (iou(k.box, d.box, IouMode::Full3d) > iou_thr) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

}  // namespace pdm
