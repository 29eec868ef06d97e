#include "pdm/eval.hpp"
#include "pdm/model.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

pdm::ModelConfig load_or_default(const std::string& path) {
  return path.empty() ? pdm::ModelConfig::micro() : pdm::load_config(path);
}

// Desk-scale scenes sized for the default (micro) model grid.
pdm::ScenarioSpec default_scene_spec() {
  pdm::ScenarioSpec s;
  s.grid = pdm::ModelConfig::micro().grid;
  s.class_sizes = {{1.5, 2.5, 1.0, 1.6, 1.0, 1.5}};
  s.min_boxes = 1;
  s.max_boxes = 2;
  s.min_points_per_box = 20;
  s.max_points_per_box = 40;
  s.clutter_points = 20;
  s.scene_count = 20;
  return s;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Detection CSV with `# scene <i>` separators, one line per box:
// cx,cy,cz,l,w,h,yaw,label,score
std::string detections_csv(const std::vector<std::vector<pdm::Detection>>& by_scene) {
  std::ostringstream out;
  for (size_t s = 0; s < by_scene.size(); ++s) {
    out << "# scene " << s << '\n';
    out << pdm::detections_to_csv(by_scene[s]);
  }
  return out.str();
}

std::vector<std::vector<pdm::Detection>> parse_detections_csv(const std::string& text,
                                                              size_t n_scenes) {
  std::vector<std::vector<pdm::Detection>> by_scene(n_scenes);
  std::istringstream in(text);
  std::string line;
  long scene = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# scene", 0) == 0) {
      scene = std::stol(line.substr(7));
      if (scene < 0 || static_cast<size_t>(scene) >= n_scenes)
        throw std::runtime_error("detection csv references an unknown scene");
      continue;
    }
    if (scene < 0) throw std::runtime_error("detection csv missing scene header");
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    pdm::Detection d;
    pdm::Vec3 c, sz;
    double yaw, score;
    int label;
    if (!(ls >> c.x() >> c.y() >> c.z() >> sz.x() >> sz.y() >> sz.z() >> yaw >>
          label >> score))
      throw std::runtime_error("bad detection line: " + line);
    d.box = pdm::Box3D(c, sz, yaw, label, score);
    d.class_scores = pdm::Vec::Constant(1, score);
    by_scene[static_cast<size_t>(scene)].push_back(std::move(d));
  }
  return by_scene;
}

int run(int argc, char** argv) {
  CLI::App app{"PDM-SSD point cloud detector"};
  app.require_subcommand(1);

  std::string spec_path, out_path, csv_path, scenes_path, dets_path, ckpt_path,
      config_path, op = "all", mode_str = "3d", counts = "256,1024,4096,16384";
  std::uint64_t seed = 0;
  int trials = 3, epochs = 200;
  double iou_thr = 0.5;

  auto* gen = app.add_subcommand("gen", "generate synthetic scenes");
  gen->add_option("--spec", spec_path, "scene spec file (scene.* keys)");
  gen->add_option("--out", out_path, "output scene file")->required();

  auto* bench = app.add_subcommand("bench-sampling", "time the sampling methods");
  bench->add_option("--counts", counts, "comma separated point counts");
  bench->add_option("--csv", csv_path, "write rows to this CSV");
  bench->add_option("--seed", seed);

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient check");
  gc->add_option("--op", op, "op name or 'all'");
  gc->add_option("--trials", trials);
  gc->add_option("--seed", seed);

  auto* infer = app.add_subcommand("infer", "run detection over a scene file");
  infer->add_option("--scenes", scenes_path)->required();
  infer->add_option("--ckpt", ckpt_path)->required();
  infer->add_option("--config", config_path);
  infer->add_option("--csv", csv_path, "detection CSV output")->required();

  auto* ev = app.add_subcommand("eval", "average precision of a detection CSV");
  ev->add_option("--scenes", scenes_path)->required();
  ev->add_option("--dets", dets_path)->required();
  ev->add_option("--iou", iou_thr);
  ev->add_option("--mode", mode_str, "bev or 3d");
  ev->add_option("--config", config_path);

  auto* overfit = app.add_subcommand("overfit", "train on a scene file");
  overfit->add_option("--scenes", scenes_path)->required();
  overfit->add_option("--epochs", epochs);
  overfit->add_option("--config", config_path);
  overfit->add_option("--csv", csv_path, "loss log CSV");
  overfit->add_option("--ckpt", ckpt_path, "checkpoint output");

  auto* hdump = app.add_subcommand("heatmap-dump", "write dense heatmap planes");
  hdump->add_option("--scenes", scenes_path)->required();
  hdump->add_option("--ckpt", ckpt_path)->required();
  hdump->add_option("--config", config_path);
  hdump->add_option("--out", out_path, "output file prefix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << '\n' << app.help();
    return 2;
  }

  if (gen->parsed()) {
    pdm::ScenarioSpec spec = default_scene_spec();
    if (!spec_path.empty()) {
      auto kv = pdm::parse_key_values(read_file(spec_path));
      pdm::ScenarioSpec file_spec = pdm::ScenarioSpec::from_key_values(kv);
      file_spec.grid = spec.grid;  // stay on the default model's grid
      file_spec.class_sizes = spec.class_sizes;
      spec = file_spec;
    }
    std::vector<pdm::SceneSample> scenes(static_cast<size_t>(spec.scene_count));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int i = 0; i < spec.scene_count; ++i)
      scenes[static_cast<size_t>(i)] = pdm::generate_scene(spec, i);
    pdm::save_scenes(out_path, scenes);
    std::cout << "wrote " << scenes.size() << " scenes to " << out_path << '\n';
  } else if (bench->parsed()) {
    auto rows = pdm::sampling_benchmark(pdm::parse_int_list(counts), seed);
    const std::string text = pdm::benchmark_csv(rows);
    if (csv_path.empty())
      std::cout << text;
    else
      write_file(csv_path, text);
  } else if (gc->parsed()) {
    std::vector<std::string> ops =
        op == "all" ? pdm::gradcheck_ops() : std::vector<std::string>{op};
    for (const std::string& name : ops)
      std::cout << name << " max_rel_err " << pdm::gradcheck(name, trials, seed)
                << '\n';
  } else if (infer->parsed()) {
    auto scenes = pdm::load_scenes(scenes_path);
    pdm::Model model = pdm::Model::load(ckpt_path, load_or_default(config_path));
    std::vector<std::vector<pdm::Detection>> dets(scenes.size());
    for (size_t s = 0; s < scenes.size(); ++s)
      dets[s] = model.infer(scenes[s].cloud).dets;
    write_file(csv_path, detections_csv(dets));
  } else if (ev->parsed()) {
    auto scenes = pdm::load_scenes(scenes_path);
    auto dets = parse_detections_csv(read_file(dets_path), scenes.size());
    std::vector<std::vector<pdm::Box3D>> gts;
    int num_classes = 1;
    for (const auto& s : scenes) {
      gts.push_back(s.gt);
      for (const auto& b : s.gt) num_classes = std::max(num_classes, b.label + 1);
    }
    const pdm::IouMode mode =
        mode_str == "bev" ? pdm::IouMode::Bev : pdm::IouMode::Full3d;
    auto ap = pdm::average_precision_scenes(dets, gts, iou_thr, mode, num_classes);
    for (const auto& c : ap.per_class) {
      if (!c.present) continue;
      std::cout << "class " << c.label << " AP_R11 " << c.ap_r11 << " AP_R40 "
                << c.ap_r40 << '\n';
    }
    std::cout << "mean AP_R11 " << ap.mean_ap_r11 << " AP_R40 " << ap.mean_ap_r40
              << '\n';
  } else if (overfit->parsed()) {
    auto scenes = pdm::load_scenes(scenes_path);
    pdm::ModelConfig cfg = load_or_default(config_path);
    pdm::Model model = pdm::Model::init(cfg, 2);
    pdm::TrainLog log = pdm::train(model, scenes, epochs);
    if (!csv_path.empty()) write_file(csv_path, log.csv());
    if (!ckpt_path.empty()) model.save(ckpt_path);
    std::cout << "final loss " << log.epochs.back().total << '\n';
  } else if (hdump->parsed()) {
    auto scenes = pdm::load_scenes(scenes_path);
    pdm::Model model = pdm::Model::load(ckpt_path, load_or_default(config_path));
    for (size_t s = 0; s < scenes.size(); ++s) {
      auto inf = model.infer(scenes[s].cloud);
      for (size_t c = 0; c < inf.heatmap.planes.size(); ++c)
        write_file(out_path + "_s" + std::to_string(s) + "_c" + std::to_string(c) +
                       ".txt",
                   pdm::dump_dense(inf.heatmap.planes[c]));
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
