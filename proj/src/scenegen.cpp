#include "pdm/scenegen.hpp"

#include "pdm/iou.hpp"

#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace pdm {
namespace {

constexpr double kPlacementIou = 0.05;

double ground_z(const GridSpec& g) { return g.range[2] + 0.3; }

Vec3 to_world(const Box3D& b, const Vec3& local) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  return Vec3(b.center.x() + c * local.x() - s * local.y(),
              b.center.y() + s * local.x() + c * local.y(),
              b.center.z() + local.z());
}

// Uniform point on the box surface, faces weighted by area.
Vec3 sample_surface_local(const Box3D& b, std::mt19937_64& rng) {
  const double l = b.size.x(), w = b.size.y(), h = b.size.z();
  const double a_lw = l * w, a_lh = l * h, a_wh = w * h;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double pick = u01(rng) * 2.0 * (a_lw + a_lh + a_wh);
  std::uniform_real_distribution<double> ul(-l / 2, l / 2), uw(-w / 2, w / 2),
      uh(-h / 2, h / 2);
  auto side = [&](double a) { return u01(rng) < 0.5 ? -a / 2 : a / 2; };
  // nudged off the exact face so containment survives rotation round-off
  const double in = 1.0 - 1e-9;
  if (pick < 2 * a_lw) return Vec3(ul(rng), uw(rng), side(h)) * in;
  if (pick < 2 * (a_lw + a_lh)) return Vec3(ul(rng), side(w), uh(rng)) * in;
  return Vec3(side(l), uw(rng), uh(rng)) * in;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t x = seed * 0x9e3779b97f4a7c15ULL + index + 1;
  x ^= x >> 31;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 29;
  return x;
}

void relabel(SceneSample& s) {
  // keep the invariant: foreground points lie inside their owning boxes
  for (size_t i = 0; i < s.box_of_point.size(); ++i) {
    int o = s.box_of_point[i];
    if (o >= 0 &&
        !s.gt[static_cast<size_t>(o)].contains(s.cloud.coords.row(static_cast<Eigen::Index>(i)).transpose()))
      throw std::logic_error("scenegen: foreground point left its box");
  }
}

}  // namespace

Mat scene_features(const Mat& coords) {
  Mat f(coords.rows(), 2);
  f.col(0).setOnes();
  f.col(1) = coords.col(2);
  return f;
}

void ScenarioSpec::check() const {
  if (scene_count < 0 || min_boxes < 0 || max_boxes < min_boxes)
    throw std::invalid_argument("bad box counts");
  if (sparsify < 0 || sparsify > 1 || occlusion < 0 || occlusion > 1)
    throw std::invalid_argument("fractions must lie in [0,1]");
  if (class_sizes.empty()) throw std::invalid_argument("need at least one class");
  grid.check();
}

ScenarioSpec ScenarioSpec::from_key_values(const std::map<std::string, std::string>& kv) {
  ScenarioSpec s;
  auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(std::string("scene.") + key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto* v = get("seed")) s.seed = std::stoull(*v);
  if (auto* v = get("count")) s.scene_count = std::stoi(*v);
  if (auto* v = get("min_boxes")) s.min_boxes = std::stoi(*v);
  if (auto* v = get("max_boxes")) s.max_boxes = std::stoi(*v);
  if (auto* v = get("points_min")) s.min_points_per_box = std::stoi(*v);
  if (auto* v = get("points_max")) s.max_points_per_box = std::stoi(*v);
  if (auto* v = get("clutter")) s.clutter_points = std::stoi(*v);
  if (auto* v = get("sparsify")) s.sparsify = std::stod(*v);
  if (auto* v = get("occlusion")) s.occlusion = std::stod(*v);
  s.check();
  return s;
}

SceneSample generate_scene(const ScenarioSpec& spec, int index) {
  spec.check();
  std::mt19937_64 rng(mix_seed(spec.seed, static_cast<std::uint64_t>(index)));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  SceneSample scene;

  const GridSpec& g = spec.grid;
  std::uniform_int_distribution<int> nbox_dist(spec.min_boxes, spec.max_boxes);
  const int n_boxes = nbox_dist(rng);
  const double margin = 3.0;
  std::uniform_real_distribution<double> ux(g.range[0] + margin, g.range[3] - margin);
  std::uniform_real_distribution<double> uy(g.range[1] + margin, g.range[4] - margin);
  std::uniform_real_distribution<double> uyaw(spec.yaw_min, spec.yaw_max);
  std::uniform_int_distribution<int> ucls(0, static_cast<int>(spec.class_sizes.size()) - 1);

  for (int b = 0; b < n_boxes; ++b) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      const int cls = ucls(rng);
      const auto& r = spec.class_sizes[static_cast<size_t>(cls)];
      Vec3 size(r[0] + u01(rng) * (r[1] - r[0]), r[2] + u01(rng) * (r[3] - r[2]),
                r[4] + u01(rng) * (r[5] - r[4]));
      Vec3 center(ux(rng), uy(rng), ground_z(g) + size.z() / 2);
      Box3D cand(center, size, uyaw(rng), cls, 1.0);
      bool free = true;
      for (const Box3D& other : scene.gt)
        if (iou(cand, other, IouMode::Bev) >= kPlacementIou) {
          free = false;
          break;
        }
      if (free) {
        scene.gt.push_back(cand);
        placed = true;
      }
    }
    if (!placed) throw std::runtime_error("cannot place boxes");
  }

  std::vector<Vec3> pts;
  std::vector<int> owner;
  std::uniform_int_distribution<int> npts_dist(spec.min_points_per_box,
                                               spec.max_points_per_box);
  for (size_t b = 0; b < scene.gt.size(); ++b) {
    const Box3D& box = scene.gt[b];
    const bool occluded = u01(rng) < spec.occlusion;
    const int target = npts_dist(rng);
    size_t first = pts.size();
    for (int p = 0; p < target; ++p) {
      Vec3 local = sample_surface_local(box, rng);
      if (occluded) local.x() = std::abs(local.x());  // keep the forward half
      if (spec.sparsify > 0 && u01(rng) < spec.sparsify) continue;
      pts.push_back(to_world(box, local));
      owner.push_back(static_cast<int>(b));
    }
    if (pts.size() == first) {  // sparse scenes must still expose each box
      pts.push_back(to_world(box, Vec3(box.size.x() / 4, 0, 0)));
      owner.push_back(static_cast<int>(b));
    }
  }

  std::uniform_real_distribution<double> cx(g.range[0], g.range[3]);
  std::uniform_real_distribution<double> cy(g.range[1], g.range[4]);
  std::normal_distribution<double> cz(ground_z(g), 0.05);
  for (int p = 0; p < spec.clutter_points; ++p) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      Vec3 c(cx(rng), cy(rng), std::clamp(cz(rng), g.range[2], g.range[5]));
      bool inside = false;
      for (const Box3D& box : scene.gt)
        if (box.contains(c)) {
          inside = true;
          break;
        }
      if (!inside) {
        pts.push_back(c);
        owner.push_back(-1);
        break;
      }
    }
  }

  scene.cloud.coords.resize(static_cast<Eigen::Index>(pts.size()), 3);
  for (size_t i = 0; i < pts.size(); ++i)
    scene.cloud.coords.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  scene.cloud.feats = scene_features(scene.cloud.coords);
  scene.box_of_point = std::move(owner);
  relabel(scene);
  return scene;
}

SceneSample augment(const SceneSample& scene, AugmentKind kind, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0));
  SceneSample out = scene;
  switch (kind) {
    case AugmentKind::Flip: {
      out.cloud.coords.col(1) *= -1.0;
      for (Box3D& b : out.gt) {
        b.center.y() *= -1.0;
        b.yaw = wrap_angle(-b.yaw);
      }
      break;
    }
    case AugmentKind::Rotate: {
      std::uniform_real_distribution<double> ua(-M_PI / 4, M_PI / 4);
      const double a = ua(rng);
      const double c = std::cos(a), s = std::sin(a);
      Mat r = out.cloud.coords;
      out.cloud.coords.col(0) = c * r.col(0) - s * r.col(1);
      out.cloud.coords.col(1) = s * r.col(0) + c * r.col(1);
      for (Box3D& b : out.gt) {
        Vec3 cc = b.center;
        b.center.x() = c * cc.x() - s * cc.y();
        b.center.y() = s * cc.x() + c * cc.y();
        b.yaw = wrap_angle(b.yaw + a);
      }
      break;
    }
    case AugmentKind::Scale: {
      std::uniform_real_distribution<double> uf(0.95, 1.05);
      const double f = uf(rng);
      out.cloud.coords *= f;
      for (Box3D& b : out.gt) {
        b.center *= f;
        b.size *= f;
      }
      break;
    }
  }
  out.cloud.feats = scene_features(out.cloud.coords);
  relabel(out);
  return out;
}

SceneSample gt_paste(const SceneSample& scene, const std::vector<SceneSample>& donors,
                     const std::vector<int>& per_class_counts, int min_points,
                     std::uint64_t seed) {
  if (donors.empty()) throw std::invalid_argument("gt_paste: donors required");
  std::mt19937_64 rng(mix_seed(seed, 1));
  SceneSample out = scene;

  struct Candidate {
    Box3D box;
    Mat points;  // local offsets from the box center, world-aligned
  };
  std::map<int, std::vector<Candidate>> by_class;
  for (const SceneSample& d : donors) {
    for (size_t b = 0; b < d.gt.size(); ++b) {
      std::vector<int> idx;
      for (size_t i = 0; i < d.box_of_point.size(); ++i)
        if (d.box_of_point[i] == static_cast<int>(b)) idx.push_back(static_cast<int>(i));
      if (static_cast<int>(idx.size()) < min_points) continue;
      Candidate c;
      c.box = d.gt[b];
      c.points.resize(static_cast<Eigen::Index>(idx.size()), 3);
      for (size_t i = 0; i < idx.size(); ++i)
        c.points.row(static_cast<Eigen::Index>(i)) =
            d.cloud.coords.row(idx[i]) - d.gt[b].center.transpose();
      by_class[c.box.label].push_back(std::move(c));
    }
  }

  const GridSpec g;  // placement bounds follow the default range
  std::uniform_real_distribution<double> ux(g.range[0] + 3, g.range[3] - 3);
  std::uniform_real_distribution<double> uy(g.range[1] + 3, g.range[4] - 3);

  std::vector<Vec3> new_pts;
  std::vector<int> new_owner;
  for (size_t cls = 0; cls < per_class_counts.size(); ++cls) {
    auto it = by_class.find(static_cast<int>(cls));
    if (it == by_class.end()) continue;
    int placed = 0;
    for (int attempt = 0; attempt < 1000 && placed < per_class_counts[cls]; ++attempt) {
      const Candidate& cand =
          it->second[std::uniform_int_distribution<size_t>(0, it->second.size() - 1)(rng)];
      Box3D box = cand.box;
      box.center.x() = ux(rng);
      box.center.y() = uy(rng);
      bool free = true;
      for (const Box3D& other : out.gt)
        if (iou(box, other, IouMode::Bev) >= kPlacementIou) {
          free = false;
          break;
        }
      if (!free) continue;
      int owner_idx = static_cast<int>(out.gt.size());
      out.gt.push_back(box);
      for (Eigen::Index i = 0; i < cand.points.rows(); ++i) {
        new_pts.push_back(box.center + cand.points.row(i).transpose());
        new_owner.push_back(owner_idx);
      }
      ++placed;
    }
  }

  const Eigen::Index n0 = out.cloud.coords.rows();
  out.cloud.coords.conservativeResize(n0 + static_cast<Eigen::Index>(new_pts.size()), 3);
  for (size_t i = 0; i < new_pts.size(); ++i)
    out.cloud.coords.row(n0 + static_cast<Eigen::Index>(i)) = new_pts[i].transpose();
  out.cloud.feats = scene_features(out.cloud.coords);
  out.box_of_point.insert(out.box_of_point.end(), new_owner.begin(), new_owner.end());
  relabel(out);
  return out;
}

std::string scenes_to_text(const std::vector<SceneSample>& scenes) {
  std::ostringstream out;
  out.precision(17);
  for (size_t id = 0; id < scenes.size(); ++id) {
    const SceneSample& s = scenes[id];
    out << "scene " << id << ' ' << s.cloud.size() << ' ' << s.gt.size() << '\n';
    for (Eigen::Index i = 0; i < s.cloud.size(); ++i) {
      int o = s.box_of_point[static_cast<size_t>(i)];
      int label = o >= 0 ? s.gt[static_cast<size_t>(o)].label : -1;
      out << s.cloud.coords(i, 0) << ' ' << s.cloud.coords(i, 1) << ' '
          << s.cloud.coords(i, 2) << ' ' << label << ' ' << o << '\n';
    }
    for (const Box3D& b : s.gt)
      out << b.center.x() << ' ' << b.center.y() << ' ' << b.center.z() << ' '
          << b.size.x() << ' ' << b.size.y() << ' ' << b.size.z() << ' ' << b.yaw
          << ' ' << b.label << '\n';
  }
  return out.str();
}

std::vector<SceneSample> scenes_from_text(const std::string& text) {
  std::istringstream in(text);
  std::vector<SceneSample> scenes;
  std::string word;
  while (in >> word) {
    if (word != "scene") throw std::runtime_error("scene file: expected 'scene'");
    long id, n_points, n_boxes;
    in >> id >> n_points >> n_boxes;
    SceneSample s;
    s.cloud.coords.resize(n_points, 3);
    s.box_of_point.resize(static_cast<size_t>(n_points));
    for (long i = 0; i < n_points; ++i) {
      int label;
      in >> s.cloud.coords(i, 0) >> s.cloud.coords(i, 1) >> s.cloud.coords(i, 2) >>
          label >> s.box_of_point[static_cast<size_t>(i)];
    }
    for (long b = 0; b < n_boxes; ++b) {
      Vec3 c, sz;
      double yaw;
      int label;
      in >> c.x() >> c.y() >> c.z() >> sz.x() >> sz.y() >> sz.z() >> yaw >> label;
      s.gt.emplace_back(c, sz, yaw, label, 1.0);
    }
    s.cloud.feats = scene_features(s.cloud.coords);
    scenes.push_back(std::move(s));
  }
  return scenes;
}

void save_scenes(const std::string& path, const std::vector<SceneSample>& scenes) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << scenes_to_text(scenes);
}

std::vector<SceneSample> load_scenes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return scenes_from_text(ss.str());
}

}  // namespace pdm
