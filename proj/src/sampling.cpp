#include "pdm/sampling.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace pdm {
namespace {

// Shared greedy loop; rows(i) is the metric-space row of point i.
SampleResult greedy_fps(const Mat& rows, int k, int start) {
  const int n = static_cast<int>(rows.rows());
  if (n == 0) throw std::invalid_argument("empty input");
  if (start < 0 || start >= n) throw std::invalid_argument("bad start index");
  k = std::min(k, n);
  SampleResult out;
  out.indices.reserve(k);
  out.indices.push_back(start);
  Vec min_d2 = (rows.rowwise() - rows.row(start)).rowwise().squaredNorm();
  min_d2[start] = -1.0;
  for (int step = 1; step < k; ++step) {
    int best = -1;
    double best_d2 = -1.0;
    for (int i = 0; i < n; ++i) {
      if (min_d2[i] >= 0 && min_d2[i] > best_d2) {
        best_d2 = min_d2[i];
        best = i;
      }
    }
    out.indices.push_back(best);
    min_d2[best] = -1.0;  // chosen points never win again
    for (int i = 0; i < n; ++i) {
      if (min_d2[i] < 0) continue;
      double d2 = (rows.row(i) - rows.row(best)).squaredNorm();
      min_d2[i] = std::min(min_d2[i], d2);
    }
  }
  return out;
}

}  // namespace

SampleResult sample_random(int n_pts, int k, std::uint64_t seed) {
  if (k < 0) throw std::invalid_argument("k must be >= 0");
  std::vector<int> all(n_pts);
  std::iota(all.begin(), all.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min<size_t>(all.size(), static_cast<size_t>(k)));
  return SampleResult{std::move(all)};
}

SampleResult sample_dfps(const PointCloud& cloud, int k, int start) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  return greedy_fps(cloud.coords, k, start);
}

SampleResult sample_featfps(const PointCloud& cloud, int k, int start) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  return greedy_fps(cloud.feats, k, start);
}

SampleResult sample_topk_foreground(const ForegroundScores& scores, int k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  const int n = static_cast<int>(scores.scores.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores.scores[a] > scores.scores[b];
  });
  order.resize(std::min(n, k));
  return SampleResult{std::move(order)};
}

double centrality_mask(const Box3D& b, const Vec3& p) {
  if (!b.contains(p)) return 0.0;
  const double c = std::cos(-b.yaw), s = std::sin(-b.yaw);
  const double dx = p.x() - b.center.x();
  const double dy = p.y() - b.center.y();
  const double lx = c * dx - s * dy;
  const double ly = s * dx + c * dy;
  const double lz = p.z() - b.center.z();
  auto ratio = [](double local, double half) {
    double fwd = half - local, back = half + local;
    double hi = std::max(fwd, back);
    return hi <= 0 ? 0.0 : std::min(fwd, back) / hi;
  };
  double prod = ratio(lx, b.size.x() / 2) * ratio(ly, b.size.y() / 2) *
                ratio(lz, b.size.z() / 2);
  return std::cbrt(prod);
}

double instance_recall(const SceneSample& scene, const SampleResult& kept) {
  if (scene.gt.empty()) return 1.0;
  std::vector<char> hit(scene.gt.size(), 0);
  for (int i : kept.indices) {
    int b = scene.box_of_point[static_cast<size_t>(i)];
    if (b >= 0) hit[static_cast<size_t>(b)] = 1;
  }
  int n_hit = 0;
  for (char h : hit) n_hit += h;
  return static_cast<double>(n_hit) / static_cast<double>(scene.gt.size());
}

}  // namespace pdm
