// Compares the OpenMP kernels against their single-thread references and
// checks that both produce identical output.
#include "pdm/backbone.hpp"
#include "pdm/heads.hpp"
#include "pdm/neck.hpp"

#include <chrono>
#include <iostream>
#include <random>

using namespace pdm;

namespace {

template <typename F>
double time_ms(F&& f, int repeats = 5) {
  std::vector<double> times;
  for (int r = 0; r < repeats; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    f();
    auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

void report(const char* name, double par, double ser, bool identical) {
  std::cout << name << ": parallel " << par << " ms, serial " << ser << " ms, "
            << (identical ? "outputs identical" : "OUTPUT MISMATCH") << '\n';
}

}  // namespace

int main() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  const int n = 16384, m = 2048;
  Mat source = Mat::NullaryExpr(n, 3, [&]() { return 35.0 * u(rng); });
  Mat centers = Mat::NullaryExpr(m, 3, [&]() { return 35.0 * u(rng); });
  IMat bq_par, bq_ser;
  double t_par = time_ms([&] { bq_par = ball_query(centers, source, 4.0, 32); });
  double t_ser = time_ms([&] { bq_ser = ball_query_serial(centers, source, 4.0, 32); });
  report("ball_query", t_par, t_ser, bq_par == bq_ser);

  GridSpec grid;
  std::uniform_real_distribution<double> ux(grid.range[0], grid.range[3]);
  std::uniform_real_distribution<double> uy(grid.range[1], grid.range[4]);
  const int pts = 4096, dim = 32;
  Mat coords(pts, 3), feats = Mat::NullaryExpr(pts, dim, [&]() { return u(rng); });
  for (int i = 0; i < pts; ++i) coords.row(i) << ux(rng), uy(rng), -1.0;
  SparseGrid sparse = project_to_grid(coords, feats, grid);
  const int occ = static_cast<int>(sparse.cells.size());
  Mat coeffs = Mat::NullaryExpr(occ, 16, [&]() { return u(rng); });
  Vec sigmas = Vec::NullaryExpr(occ, [&]() { return 1.0 + 0.5 * std::abs(u(rng)); });
  StructuringElement se = StructuringElement::ones(5);
  DilatedGrid d_par, d_ser;
  t_par = time_ms([&] { d_par = pdm_fill(sparse, coeffs, sigmas, se, 3, FusionMode::Split); });
  t_ser = time_ms(
      [&] { d_ser = pdm_fill_serial(sparse, coeffs, sigmas, se, 3, FusionMode::Split); });
  bool same = d_par.cells.size() == d_ser.cells.size();
  if (same)
    for (auto a = d_par.cells.begin(), b = d_ser.cells.begin(); a != d_par.cells.end();
         ++a, ++b)
      same = same && a->first == b->first && a->second == b->second;
  report("pdm_fill", t_par, t_ser, same);

  std::vector<Box3D> boxes;
  std::uniform_real_distribution<double> uyaw(-M_PI, M_PI);
  for (int i = 0; i < 512; ++i)
    boxes.emplace_back(Vec3(ux(rng), uy(rng), -1.0), Vec3(4.0, 1.8, 1.6), uyaw(rng),
                       i % 3);
  Heatmap h_par, h_ser;
  t_par = time_ms([&] { h_par = heatmap_target(boxes, grid, 3); });
  t_ser = time_ms([&] { h_ser = heatmap_target_serial(boxes, grid, 3); });
  same = true;
  for (size_t c = 0; c < h_par.planes.size(); ++c)
    same = same && h_par.planes[c] == h_ser.planes[c];
  report("heatmap_target", t_par, t_ser, same);
  return 0;
}
