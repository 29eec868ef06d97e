#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace pdm {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using IMat = Eigen::MatrixXi;

// Wraps an angle to [-pi, pi).
double wrap_angle(double a);

struct PointCloud {
  Mat coords;  // N x 3, meters, sensor frame
  Mat feats;   // N x C, C >= 1

  Eigen::Index size() const { return coords.rows(); }
  void check() const;
};

struct Box3D {
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();  // l, w, h; strictly positive
  double yaw = 0.0;          // wrapped to [-pi, pi)
  int label = 0;
  double score = 1.0;

  Box3D() = default;
  Box3D(const Vec3& c, const Vec3& s, double y, int lbl = 0, double sc = 1.0);

  bool contains(const Vec3& p) const;
  // 8 corners, row per corner, yaw applied about the center.
  Eigen::Matrix<double, 8, 3> corners() const;
};

struct GridSpec {
  // [x_min, y_min, z_min, x_max, y_max, z_max]
  std::array<double, 6> range{0.0, -40.0, -3.0, 70.4, 40.0, 1.0};
  int width = 176;   // cells along x
  int height = 200;  // cells along y

  double cell_x() const { return (range[3] - range[0]) / width; }
  double cell_y() const { return (range[4] - range[1]) / height; }

  // Half-open intervals; points on the max boundary are outside.
  std::optional<std::pair<int, int>> world_to_cell(double x, double y) const;
  Vec2 cell_center(int ix, int iy) const;
  bool in_bounds(int ix, int iy) const {
    return ix >= 0 && ix < width && iy >= 0 && iy < height;
  }
  void check() const;

  static GridSpec kitti() { return GridSpec{}; }
};

struct SceneSample {
  PointCloud cloud;
  std::vector<Box3D> gt;
  // One entry per point: owning box index, -1 for background.
  std::vector<int> box_of_point;

  bool is_foreground(Eigen::Index i) const { return box_of_point[i] >= 0; }
};

// Receptive-field growth of a strided kernel stack: RF_0 = 1,
// RF_{i+1} = RF_i + (k_i - 1) * prod of earlier strides.
std::vector<int> receptive_field(const std::vector<int>& kernel_sizes,
                                 const std::vector<int>& strides);

}  // namespace pdm
