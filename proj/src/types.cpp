#include "pdm/types.hpp"

namespace pdm {

double wrap_angle(double a) {
  const double two_pi = 2.0 * M_PI;
  double w = std::fmod(a + M_PI, two_pi);
  if (w < 0) w += two_pi;
  return w - M_PI;
}

void PointCloud::check() const {
  if (coords.cols() != 3) throw std::invalid_argument("coords must be N x 3");
  if (feats.rows() != coords.rows())
    throw std::invalid_argument("coords/feats row mismatch");
  if (!coords.allFinite() || !feats.allFinite())
    throw std::invalid_argument("non-finite point cloud entries");
}

Box3D::Box3D(const Vec3& c, const Vec3& s, double y, int lbl, double sc)
    : center(c), size(s), yaw(wrap_angle(y)), label(lbl), score(sc) {
  if (!(s.array() > 0.0).all()) throw std::invalid_argument("box sizes must be > 0");
  if (sc < 0.0 || sc > 1.0) throw std::invalid_argument("score outside [0,1]");
}

bool Box3D::contains(const Vec3& p) const {
  const double c = std::cos(-yaw), s = std::sin(-yaw);
  const double dx = p.x() - center.x();
  const double dy = p.y() - center.y();
  const double lx = c * dx - s * dy;
  const double ly = s * dx + c * dy;
  const double lz = p.z() - center.z();
  return std::abs(lx) <= size.x() / 2 && std::abs(ly) <= size.y() / 2 &&
         std::abs(lz) <= size.z() / 2;
}

Eigen::Matrix<double, 8, 3> Box3D::corners() const {
  Eigen::Matrix<double, 8, 3> out;
  const double c = std::cos(yaw), s = std::sin(yaw);
  int r = 0;
  for (int sx : {-1, 1})
    for (int sy : {-1, 1})
      for (int sz : {-1, 1}) {
        const double lx = sx * size.x() / 2;
        const double ly = sy * size.y() / 2;
        const double lz = sz * size.z() / 2;
        out(r, 0) = center.x() + c * lx - s * ly;
        out(r, 1) = center.y() + s * lx + c * ly;
        out(r, 2) = center.z() + lz;
        ++r;
      }
  return out;
}

void GridSpec::check() const {
  for (int a = 0; a < 3; ++a)
    if (!(range[a + 3] > range[a]))
      throw std::invalid_argument("grid range max must exceed min");
  if (width < 1 || height < 1) throw std::invalid_argument("grid dims must be >= 1");
}

std::optional<std::pair<int, int>> GridSpec::world_to_cell(double x, double y) const {
  if (x < range[0] || x >= range[3] || y < range[1] || y >= range[4])
    return std::nullopt;
  int ix = static_cast<int>(std::floor((x - range[0]) / cell_x()));
  int iy = static_cast<int>(std::floor((y - range[1]) / cell_y()));
  // floor() of a point just below the boundary can land on W/H; clamp back.
  ix = std::min(ix, width - 1);
  iy = std::min(iy, height - 1);
  return std::make_pair(ix, iy);
}

Vec2 GridSpec::cell_center(int ix, int iy) const {
  return Vec2(range[0] + (ix + 0.5) * cell_x(), range[1] + (iy + 0.5) * cell_y());
}

std::vector<int> receptive_field(const std::vector<int>& kernel_sizes,
                                 const std::vector<int>& strides) {
  if (kernel_sizes.size() != strides.size())
    throw std::invalid_argument("kernel/stride length mismatch");
  std::vector<int> out;
  out.reserve(kernel_sizes.size());
  long rf = 1, jump = 1;
  for (size_t i = 0; i < kernel_sizes.size(); ++i) {
    if (kernel_sizes[i] < 1 || strides[i] < 1)
      throw std::invalid_argument("kernel sizes and strides must be >= 1");
    rf += static_cast<long>(kernel_sizes[i] - 1) * jump;
    jump *= strides[i];
    out.push_back(static_cast<int>(rf));
  }
  return out;
}

}  // namespace pdm
