#include "pdm/eval.hpp"

#include "pdm/model.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <random>
#include <sstream>

namespace pdm {
namespace {

double interp_ap(const std::vector<double>& precision, const std::vector<double>& recall,
                 int points) {
  double sum = 0.0;
  for (int i = 0; i < points; ++i) {
    const double r = points == 11 ? i / 10.0 : (i + 1) / 40.0;
    double best = 0.0;
    for (size_t j = 0; j < recall.size(); ++j)
      if (recall[j] >= r - 1e-12) best = std::max(best, precision[j]);
    sum += best;
  }
  return sum / points;
}

}  // namespace

APResult average_precision_scenes(const std::vector<std::vector<Detection>>& dets,
                                  const std::vector<std::vector<Box3D>>& gts,
                                  double iou_thr, IouMode mode, int num_classes) {
  if (dets.size() != gts.size())
    throw std::invalid_argument("average_precision: scene count mismatch");
  APResult res;
  res.iou_thr = iou_thr;
  res.mode = mode;

  struct Entry {
    double score;
    size_t scene;
    const Detection* det;
  };
  int n_present = 0;
  for (int cls = 0; cls < num_classes; ++cls) {
    ClassAP ca;
    ca.label = cls;

    std::vector<Entry> entries;
    int n_gt = 0;
    for (size_t s = 0; s < dets.size(); ++s) {
      for (const Detection& d : dets[s])
        if (d.box.label == cls) entries.push_back({d.box.score, s, &d});
      for (const Box3D& g : gts[s]) n_gt += g.label == cls;
    }
    ca.present = n_gt > 0;
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) { return a.score > b.score; });

    std::vector<std::vector<char>> used(gts.size());
    for (size_t s = 0; s < gts.size(); ++s) used[s].assign(gts[s].size(), 0);

    int tp = 0, fp = 0;
    for (const Entry& e : entries) {
      int best = -1;
      double best_iou = iou_thr;
      const auto& scene_gt = gts[e.scene];
      for (size_t g = 0; g < scene_gt.size(); ++g) {
        if (used[e.scene][g] || scene_gt[g].label != cls) continue;
        double v = iou(e.det->box, scene_gt[g], mode);
        if (v >= best_iou) {
          best_iou = v;
          best = static_cast<int>(g);
        }
      }
      if (best >= 0) {
        used[e.scene][static_cast<size_t>(best)] = 1;
        ++tp;
      } else {
        ++fp;
      }
      ca.precision.push_back(static_cast<double>(tp) / (tp + fp));
      ca.recall.push_back(n_gt > 0 ? static_cast<double>(tp) / n_gt : 0.0);
    }
    if (ca.present) {
      ca.ap_r11 = interp_ap(ca.precision, ca.recall, 11);
      ca.ap_r40 = interp_ap(ca.precision, ca.recall, 40);
      res.mean_ap_r11 += ca.ap_r11;
      res.mean_ap_r40 += ca.ap_r40;
      ++n_present;
    }
    res.per_class.push_back(std::move(ca));
  }
  if (n_present > 0) {
    res.mean_ap_r11 /= n_present;
    res.mean_ap_r40 /= n_present;
  }
  return res;
}

APResult average_precision(const std::vector<Detection>& dets,
                           const std::vector<Box3D>& gts, double iou_thr, IouMode mode,
                           int num_classes) {
  return average_precision_scenes({dets}, {gts}, iou_thr, mode, num_classes);
}

std::vector<BenchmarkRow> sampling_benchmark(const std::vector<int>& point_counts,
                                             std::uint64_t seed, int repeats) {
  repeats = std::max(repeats, 5);
  std::vector<BenchmarkRow> rows;
  for (int n : point_counts) {
    if (n < 1) throw std::invalid_argument("benchmark: counts must be >= 1");
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(n));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    PointCloud cloud;
    cloud.coords = Mat::NullaryExpr(n, 3, [&]() { return 35.0 * u(rng); });
    cloud.feats = Mat::NullaryExpr(n, 16, [&]() { return u(rng); });
    ForegroundScores fg{Vec::NullaryExpr(n, [&]() { return 0.5 + 0.5 * u(rng); })};
    const int k = std::max(1, n / 4);

    struct Method {
      const char* name;
      std::function<void()> run;
      std::size_t bytes;
    };
    const std::vector<Method> methods = {
        {"dfps", [&] { sample_dfps(cloud, k, 0); }, static_cast<std::size_t>(n) * 8},
        {"featfps", [&] { sample_featfps(cloud, k, 0); },
         static_cast<std::size_t>(n) * 8},
        {"random", [&] { sample_random(n, k, seed); }, static_cast<std::size_t>(n) * 4},
        {"topk", [&] { sample_topk_foreground(fg, k); },
         static_cast<std::size_t>(n) * 12},
    };
    for (const Method& m : methods) {
      std::vector<double> times;
      for (int r = 0; r < repeats; ++r) {
        auto t0 = std::chrono::steady_clock::now();
        m.run();
        auto t1 = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      }
      std::sort(times.begin(), times.end());
      rows.push_back({m.name, n, times[times.size() / 2], m.bytes});
    }
  }
  std::sort(rows.begin(), rows.end(), [](const BenchmarkRow& a, const BenchmarkRow& b) {
    return std::tie(a.count, a.method) < std::tie(b.count, b.method);
  });
  return rows;
}

std::string benchmark_csv(const std::vector<BenchmarkRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "method,count,ms,bytes\n";
  for (const BenchmarkRow& r : rows)
    out << r.method << ',' << r.count << ',' << r.ms << ',' << r.bytes << '\n';
  return out.str();
}

namespace {

double rel_err(double fd, double an) {
  return std::abs(fd - an) / std::max(std::abs(fd) + std::abs(an), 1.0);
}

// Central difference with a step-halving consistency probe; returns false
// when the two estimates disagree (a non-smooth point within the stencil).
bool central_diff(const std::function<double(double)>& f, double p, double* out) {
  const double h = 1e-6 * std::max(1.0, std::abs(p));
  const double fd1 = (f(p + h) - f(p - h)) / (2 * h);
  const double fd2 = (f(p + 2 * h) - f(p - 2 * h)) / (4 * h);
  *out = fd1;
  return std::abs(fd1 - fd2) <= 1e-4 * std::max(1.0, std::abs(fd1));
}

SceneSample micro_scene(const GridSpec& grid, std::uint64_t seed, int index) {
  ScenarioSpec ss;
  ss.grid = grid;
  ss.seed = seed;
  ss.min_boxes = 1;
  ss.max_boxes = 2;
  ss.class_sizes = {{1.5, 2.5, 1.0, 1.6, 1.0, 1.5}};
  ss.min_points_per_box = 15;
  ss.max_points_per_box = 30;
  ss.clutter_points = 15;
  return generate_scene(ss, index);
}

double check_dense(int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    for (int attempt = 0;; ++attempt) {
      Mlp mlp = make_mlp(5, {8, 8}, 4, Act::None, rng);
      Mat x = Mat::NullaryExpr(6, 5, [&]() { return u(rng); });
      Mat up = Mat::NullaryExpr(6, 4, [&]() { return u(rng); });
      std::vector<DenseCache> caches;
      Mat out = mlp.forward(x, &caches);
      if (mlp.min_abs_pre(caches) < 1e-5 && attempt < 100) continue;
      std::vector<DenseGrads> grads;
      ensure_grads(mlp, &grads);
      mlp.backward(caches, up, &grads);
      auto loss = [&]() { return (mlp.forward(x).array() * up.array()).sum(); };
      for (size_t li = 0; li < mlp.layers.size(); ++li) {
        DenseLayer& l = mlp.layers[li];
        for (Eigen::Index r = 0; r < l.W.rows(); ++r)
          for (Eigen::Index c = 0; c < l.W.cols(); ++c) {
            double fd;
            double& p = l.W(r, c);
            const double save = p;
            central_diff(
                [&](double v) {
                  p = v;
                  double L = loss();
                  p = save;
                  return L;
                },
                save, &fd);
            worst = std::max(worst, rel_err(fd, grads[li].gW(r, c)));
          }
        for (Eigen::Index i = 0; i < l.b.size(); ++i) {
          double fd;
          double& p = l.b[i];
          const double save = p;
          central_diff(
              [&](double v) {
                p = v;
                double L = loss();
                p = save;
                return L;
              },
              save, &fd);
          worst = std::max(worst, rel_err(fd, grads[li].gb[i]));
        }
      }
      break;
    }
  }
  return worst;
}

double check_sampling_loss(int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.2, 0.8);
  const GridSpec grid = ModelConfig::micro().grid;
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    SceneSample scene = micro_scene(grid, seed + 11, t);
    const int n = std::min<int>(30, static_cast<int>(scene.cloud.size()));
    std::vector<int> ids =
        sample_random(static_cast<int>(scene.cloud.size()), n, seed + t).indices;
    Mat scores = Mat::NullaryExpr(n, 1, [&]() { return u(rng); });
    Mat dscores;
    sampling_loss(scores, scene, ids, &dscores);
    for (Eigen::Index i = 0; i < scores.rows(); ++i)
      for (Eigen::Index c = 0; c < scores.cols(); ++c) {
        double fd;
        const double save = scores(i, c);
        central_diff(
            [&](double v) {
              scores(i, c) = v;
              double L = sampling_loss(scores, scene, ids);
              scores(i, c) = save;
              return L;
            },
            save, &fd);
        worst = std::max(worst, rel_err(fd, dscores(i, c)));
      }
  }
  return worst;
}

double check_scale_coefficient(int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> us(0.3, 3.0);
  std::uniform_int_distribution<int> ud(-2, 2);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const double sigma = us(rng);
    const std::pair<int, int> c{8, 8}, tgt{8 + ud(rng), 8 + ud(rng)};
    double fd;
    central_diff([&](double v) { return scale_coefficient(v, c, tgt); }, sigma, &fd);
    worst = std::max(worst, rel_err(fd, scale_coefficient_dsigma(sigma, c, tgt)));
  }
  return worst;
}

double check_fusion(int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    for (FusionMode mode :
         {FusionMode::Split, FusionMode::Straight, FusionMode::HalfSum}) {
      Vec feat = Vec::NullaryExpr(8, [&]() { return u(rng); });
      double alpha = u(rng), beta = u(rng);
      Vec up = Vec::NullaryExpr(fuse_coefficients(feat, alpha, beta, mode).size(),
                                [&]() { return u(rng); });
      Vec dfeat = Vec::Zero(8);
      double dalpha = 0, dbeta = 0;
      fuse_backward(feat, alpha, beta, mode, up, &dfeat, &dalpha, &dbeta);
      auto loss = [&]() { return up.dot(fuse_coefficients(feat, alpha, beta, mode)); };
      for (Eigen::Index i = 0; i < feat.size(); ++i) {
        double fd;
        const double save = feat[i];
        central_diff(
            [&](double v) {
              feat[i] = v;
              double L = loss();
              feat[i] = save;
              return L;
            },
            save, &fd);
        worst = std::max(worst, rel_err(fd, dfeat[i]));
      }
      double fd;
      central_diff(
          [&](double v) {
            double save = alpha;
            alpha = v;
            double L = loss();
            alpha = save;
            return L;
          },
          alpha, &fd);
      worst = std::max(worst, rel_err(fd, dalpha));
      central_diff(
          [&](double v) {
            double save = beta;
            beta = v;
            double L = loss();
            beta = save;
            return L;
          },
          beta, &fd);
      worst = std::max(worst, rel_err(fd, dbeta));
    }
  }
  return worst;
}

double check_heatmap_loss(int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  GridSpec g;
  g.range = {0, -4, -3, 8, 4, 1};
  g.width = 8;
  g.height = 8;
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    std::uniform_real_distribution<double> ux(1.0, 7.0), uy(-3.0, 3.0);
    std::vector<Box3D> gt = {
        Box3D({ux(rng), uy(rng), -2.0}, {2.0, 1.5, 1.2}, 0.3, 0)};
    Heatmap target = heatmap_target(gt, g, 1);
    Heatmap pred = Heatmap::zeros(g, 1);
    pred.planes[0] = Mat::NullaryExpr(g.height, g.width, [&]() { return u(rng); });
    Heatmap dpred;
    heatmap_loss(pred, target, &dpred);
    for (int y = 0; y < g.height; ++y)
      for (int x = 0; x < g.width; ++x) {
        double fd;
        const double save = pred.planes[0](y, x);
        central_diff(
            [&](double v) {
              pred.planes[0](y, x) = v;
              double L = heatmap_loss(pred, target);
              pred.planes[0](y, x) = save;
              return L;
            },
            save, &fd);
        worst = std::max(worst, rel_err(fd, dpred.planes[0](y, x)));
      }
  }
  return worst;
}

double check_e2e(int trials, std::uint64_t seed) {
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    ModelConfig cfg = ModelConfig::micro();
    cfg.top_k_peaks = 0;  // keep the seed set parameter-independent
    cfg.seed = seed + static_cast<std::uint64_t>(t);
    Model model = Model::init(cfg, 2);
    model.soft_cls = false;

    SceneSample scene;
    double kink = 0.0;
    ModelGrads grads = ModelGrads::zeros(model);
    int scene_idx = t * 100;
    for (int attempt = 0; attempt < 20; ++attempt, ++scene_idx) {
      scene = micro_scene(cfg.grid, seed + 5, scene_idx);
      grads = ModelGrads::zeros(model);
      model.compute_loss(scene, nullptr, &grads, &kink);
      if (kink > 1e-5) break;
    }

    auto params = model.layers();
    auto gs = grads.flat(model);
    std::mt19937_64 rng(seed + 31 * static_cast<std::uint64_t>(t));
    std::uniform_int_distribution<size_t> ul(0, params.size() - 1);
    int checked = 0;
    for (int draw = 0; draw < 200 && checked < 25; ++draw) {
      const size_t li = ul(rng);
      DenseLayer& l = *params[li];
      const Eigen::Index nw = l.W.size(), nb = l.b.size();
      std::uniform_int_distribution<Eigen::Index> ui(0, nw + nb - 1);
      const Eigen::Index pick = ui(rng);
      double* p = pick < nw ? l.W.data() + pick : l.b.data() + (pick - nw);
      const double an =
          pick < nw ? gs[li]->gW.data()[pick] : gs[li]->gb.data()[pick - nw];
      const double save = *p;
      double fd;
      const bool smooth = central_diff(
          [&](double v) {
            *p = v;
            double L = model.compute_loss(scene);
            *p = save;
            return L;
          },
          save, &fd);
      if (!smooth) continue;  // resample another coordinate
      worst = std::max(worst, rel_err(fd, an));
      ++checked;
    }
  }
  return worst;
}

}  // namespace

std::vector<std::string> gradcheck_ops() {
  return {"dense",  "sampling_loss", "scale_coefficient",
          "fusion", "heatmap_loss",  "e2e"};
}

double gradcheck(const std::string& op, int trials, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("gradcheck: trials must be >= 1");
  if (op == "dense") return check_dense(trials, seed);
  if (op == "sampling_loss") return check_sampling_loss(trials, seed);
  if (op == "scale_coefficient") return check_scale_coefficient(trials, seed);
  if (op == "fusion") return check_fusion(trials, seed);
  if (op == "heatmap_loss") return check_heatmap_loss(trials, seed);
  if (op == "e2e") return check_e2e(trials, seed);
  throw std::invalid_argument("gradcheck: unknown op " + op);
}

}  // namespace pdm
