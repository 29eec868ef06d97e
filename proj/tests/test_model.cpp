#include "pdm/model.hpp"

#include "pdm/eval.hpp"

#include <doctest.h>

#include <cstdio>

using namespace pdm;

namespace {

ScenarioSpec desk_spec() {
  ScenarioSpec s;
  s.grid.range = {0.0, -8.0, -3.0, 16.0, 8.0, 1.0};
  s.grid.width = 16;
  s.grid.height = 16;
  s.class_sizes = {{1.5, 2.5, 1.0, 1.6, 1.0, 1.5}};
  s.min_boxes = 1;
  s.max_boxes = 2;
  s.min_points_per_box = 20;
  s.max_points_per_box = 40;
  s.clutter_points = 20;
  return s;
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("checkpoint round trip is bit exact") {
  ModelConfig cfg = ModelConfig::micro();
  Model m = Model::init(cfg, 2);
  std::string path = "ckpt_roundtrip.bin";
  m.save(path);
  Model back = Model::load(path, cfg);
  std::remove(path.c_str());

  auto a = m.layers();
  auto b = back.layers();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->W == b[i]->W);
    CHECK(a[i]->b == b[i]->b);
    CHECK(a[i]->act == b[i]->act);
  }

  // identical outputs on a scene
  SceneSample s = generate_scene(desk_spec(), 0);
  auto ia = m.infer(s.cloud);
  auto ib = back.infer(s.cloud);
  REQUIRE(ia.raw.size() == ib.raw.size());
  for (size_t i = 0; i < ia.raw.size(); ++i) {
    CHECK(ia.raw[i].box.center == ib.raw[i].box.center);
    CHECK(ia.raw[i].box.score == doctest::Approx(ib.raw[i].box.score));
  }
}

TEST_CASE("auxiliary mode matches the neck-free model exactly") {
  ModelConfig cfg = ModelConfig::micro();
  cfg.head_mode = HeadMode::Auxiliary;
  Model with = Model::init(cfg, 2, true);
  Model without = Model::init(cfg, 2, false);

  SceneSample s = generate_scene(desk_spec(), 2);
  auto a = with.infer(s.cloud);
  auto b = without.infer(s.cloud);
  REQUIRE(a.raw.size() == b.raw.size());
  for (size_t i = 0; i < a.raw.size(); ++i) {
    CHECK(a.raw[i].box.center == b.raw[i].box.center);
    CHECK(a.raw[i].box.size == b.raw[i].box.size);
    CHECK(a.raw[i].box.yaw == b.raw[i].box.yaw);
    CHECK(a.raw[i].class_scores == b.raw[i].class_scores);
  }
  CHECK(a.seed_positions == b.seed_positions);
}

TEST_CASE("joint mode adds heatmap peak seeds") {
  ModelConfig cfg = ModelConfig::micro();
  cfg.head_mode = HeadMode::Joint;
  Model m = Model::init(cfg, 2);
  SceneSample s = generate_scene(desk_spec(), 3);
  auto inf = m.infer(s.cloud);
  CHECK(!inf.heatmap.planes.empty());
  int votes = 0, peaks = 0;
  for (auto src : inf.seeds.sources)
    (src == SeedSource::Vote ? votes : peaks)++;
  CHECK(votes == cfg.stages.back().npoint);
  CHECK(peaks <= cfg.top_k_peaks);
  CHECK(inf.seed_positions.rows() == votes + peaks);
}

TEST_CASE("loss breakdown is finite and training reduces it") {
  ModelConfig cfg = ModelConfig::micro();
  cfg.lr = 0.005;
  Model m = Model::init(cfg, 2);

  std::vector<SceneSample> scenes;
  for (int i = 0; i < 4; ++i) scenes.push_back(generate_scene(desk_spec(), i));

  LossBreakdown parts;
  double l0 = m.compute_loss(scenes[0], &parts);
  CHECK(std::isfinite(l0));
  CHECK(parts.total == doctest::Approx(l0));
  CHECK(parts.l2 > 0);

  TrainLog log = train(m, scenes, 30);
  REQUIRE(log.epochs.size() == 30);
  CHECK(log.epochs.back().total < log.epochs.front().total);

  std::string csv = log.csv();
  CHECK(csv.rfind("step,sample,vote,cls,loc,size,angle_bin,angle_res,corner,"
                  "heatmap,l2,total",
                  0) == 0);
}

TEST_CASE("end-to-end gradients match finite differences") {
  CHECK(gradcheck("e2e", 2, 7) < 1e-4);
}

TEST_SUITE_END();
