#include "pdm/config.hpp"

#include <fstream>
#include <sstream>

namespace pdm {
namespace {

std::string strip(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// Splits a bracketed list on top-level commas: "[a,[b,c],d]" -> {a, [b,c], d}.
std::vector<std::string> split_list(const std::string& text) {
  std::string body = strip(text);
  if (body.size() < 2 || body.front() != '[' || body.back() != ']')
    throw std::invalid_argument("expected bracketed list: " + text);
  body = body.substr(1, body.size() - 2);
  std::vector<std::string> out;
  int depth = 0;
  std::string cur;
  for (char c : body) {
    if (c == '[' || c == '(') ++depth;
    if (c == ']' || c == ')') --depth;
    if (c == ',' && depth == 0) {
      out.push_back(strip(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!strip(cur).empty()) out.push_back(strip(cur));
  return out;
}

double to_double(const std::string& s) {
  size_t pos = 0;
  double v = std::stod(s, &pos);
  if (pos != strip(s).size()) throw std::invalid_argument("bad number: " + s);
  return v;
}

int to_int(const std::string& s) {
  double v = to_double(s);
  int i = static_cast<int>(std::llround(v));
  if (std::abs(v - i) > 1e-12) throw std::invalid_argument("expected integer: " + s);
  return i;
}

bool to_bool_mode(const std::string& v, const char* a, const char* b) {
  if (v == a) return true;
  if (v == b) return false;
  throw std::invalid_argument("expected " + std::string(a) + "|" + b + ", got " + v);
}

}  // namespace

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& tok : split_list(text)) out.push_back(to_double(tok));
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (const auto& tok : split_list(text)) out.push_back(to_int(tok));
  return out;
}

SAStageSpec parse_sa_syntax(const std::string& text) {
  std::string body = strip(text);
  if (body.rfind("SA(", 0) != 0 || body.back() != ')')
    throw std::invalid_argument("expected SA(...) syntax: " + text);
  auto args = split_list("[" + body.substr(3, body.size() - 4) + "]");
  if (args.size() != 4) throw std::invalid_argument("SA() takes 4 arguments");
  SAStageSpec s;
  s.npoint = to_int(args[0]);
  s.radii = parse_double_list(args[1]);
  for (int q : parse_int_list(args[2])) s.nquery.push_back(q);
  for (const auto& branch : split_list(args[3])) {
    std::vector<int> dims = parse_int_list(branch);
    s.dims.push_back(dims);
  }
  if (s.radii.size() != s.nquery.size() || s.radii.size() != s.dims.size())
    throw std::invalid_argument("SA radii/nquery/dims length mismatch");
  for (size_t i = 1; i < s.radii.size(); ++i)
    if (!(s.radii[i] > s.radii[i - 1]))
      throw std::invalid_argument("SA radii must be strictly increasing");
  int sum = 0;
  for (const auto& d : s.dims) sum += d.back();
  s.agg_dim = sum;  // identity-width aggregation unless overridden
  return s;
}

double ModelConfig::loss_weight(const std::string& name) const {
  auto it = loss_weights.find(name);
  return it == loss_weights.end() ? 1.0 : it->second;
}

void ModelConfig::check() const {
  grid.check();
  if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
  if (sh_degree < 2 || sh_degree > 4)
    throw std::invalid_argument("sh_degree must be in {2,3,4}");
  if (se_size < 1 || se_size % 2 == 0)
    throw std::invalid_argument("se_size must be odd");
  if (nms_iou < 0 || nms_iou > 1 || score_thr < 0 || score_thr > 1)
    throw std::invalid_argument("thresholds must lie in [0,1]");
  if (angle_bins < 1) throw std::invalid_argument("angle_bins must be >= 1");
  if (stages.empty()) throw std::invalid_argument("at least one SA stage required");
  for (size_t i = 1; i < stages.size(); ++i)
    if (!(stages[i].npoint < stages[i - 1].npoint))
      throw std::invalid_argument("stage npoints must be strictly decreasing");
  if (sigma_floor <= 0) throw std::invalid_argument("sigma_floor must be > 0");
}

ModelConfig ModelConfig::kitti() {
  ModelConfig c;
  c.stages.push_back(parse_sa_syntax(
      "SA(4096,[0.2,0.8],[16,32],[[16,16,32],[32,32,64]])"));
  c.stages[0].agg_dim = 64;
  c.stages.push_back(parse_sa_syntax(
      "SA(1024,[0.8,1.6],[16,32],[[64,64,128],[64,96,128]])"));
  c.stages[1].agg_dim = 128;
  c.stages.push_back(parse_sa_syntax(
      "SA(512,[1.6,4.8],[16,32],[[128,128,256],[128,256,256]])"));
  c.stages[2].agg_dim = 256;
  c.stages[2].sampler = Sampler::TopKForeground;
  c.stages.push_back(parse_sa_syntax(
      "SA(256,[1.6,4.8],[16,32],[[128,128,256],[128,256,256]])"));
  c.stages[3].agg_dim = 256;
  c.stages[3].sampler = Sampler::TopKForeground;
  c.ctx = parse_sa_syntax(
      "SA(256,[4.8,6.4],[16,32],[[256,256,512],[256,512,1024]])");
  c.ctx.agg_dim = 512;
  c.head_dims = {256, 256};
  return c;
}

ModelConfig ModelConfig::micro() {
  ModelConfig c;
  c.grid.range = {0.0, -8.0, -3.0, 16.0, 8.0, 1.0};
  c.grid.width = 16;
  c.grid.height = 16;
  c.num_classes = 1;
  c.embed_dims = {8};
  c.stages.push_back(parse_sa_syntax("SA(64,[1.5],[8],[[8,16]])"));
  c.stages[0].agg_dim = 16;
  c.stages.push_back(parse_sa_syntax("SA(16,[3.0],[8],[[16,32]])"));
  c.stages[1].agg_dim = 32;
  c.ctx = parse_sa_syntax("SA(16,[4.0],[8],[[32,32]])");
  c.ctx.agg_dim = 32;
  c.sem_hidden = 8;
  c.sh_degree = 2;
  c.vote_dims = {16};
  c.head_dims = {32};
  c.att_hidden = 8;
  c.angle_bins = 12;
  c.top_k_peaks = 8;
  c.lr = 0.022;  // tuned for the desk-scale overfit demos
  return c;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = strip(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line without '=': " + line);
    kv[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
  }
  return kv;
}

ModelConfig parse_config(const std::string& text) {
  ModelConfig c = ModelConfig::kitti();
  c.stages.clear();
  std::map<int, SAStageSpec> staged;
  std::map<int, int> agg_dims;
  std::map<int, std::string> samplers;

  for (const auto& [key, val] : parse_key_values(text)) {
    if (key.rfind("sa.", 0) == 0) {
      std::string rest = key.substr(3);
      size_t dot = rest.find('.');
      int idx = to_int(dot == std::string::npos ? rest : rest.substr(0, dot));
      if (dot == std::string::npos) {
        staged[idx] = parse_sa_syntax(val);
      } else if (rest.substr(dot + 1) == "agg") {
        agg_dims[idx] = to_int(val);
      } else if (rest.substr(dot + 1) == "sampler") {
        samplers[idx] = val;
      } else {
        throw std::invalid_argument("unknown config key: " + key);
      }
    } else if (key == "ctx") {
      c.ctx = parse_sa_syntax(val);
    } else if (key == "ctx.agg") {
      c.ctx.agg_dim = to_int(val);
    } else if (key == "grid.range") {
      auto r = parse_double_list(val);
      if (r.size() != 6) throw std::invalid_argument("grid.range needs 6 values");
      std::copy(r.begin(), r.end(), c.grid.range.begin());
    } else if (key == "grid.width") {
      c.grid.width = to_int(val);
    } else if (key == "grid.height") {
      c.grid.height = to_int(val);
    } else if (key == "classes") {
      c.num_classes = to_int(val);
    } else if (key == "embed") {
      c.embed_dims = parse_int_list(val);
    } else if (key == "sem_hidden") {
      c.sem_hidden = to_int(val);
    } else if (key == "sh_degree") {
      c.sh_degree = to_int(val);
    } else if (key == "se_size") {
      c.se_size = to_int(val);
    } else if (key == "fusion") {
      c.fusion = val == "split"      ? FusionMode::Split
                 : val == "straight" ? FusionMode::Straight
                 : val == "halfsum"  ? FusionMode::HalfSum
                                     : throw std::invalid_argument("bad fusion: " + val);
    } else if (key == "head_mode") {
      c.head_mode = to_bool_mode(val, "joint", "auxiliary") ? HeadMode::Joint
                                                            : HeadMode::Auxiliary;
    } else if (key == "sigma_floor") {
      c.sigma_floor = to_double(val);
    } else if (key == "top_k_peaks") {
      c.top_k_peaks = to_int(val);
    } else if (key == "nms_iou") {
      c.nms_iou = to_double(val);
    } else if (key == "score_thr") {
      c.score_thr = to_double(val);
    } else if (key == "angle_bins") {
      c.angle_bins = to_int(val);
    } else if (key == "peak_z") {
      c.peak_z = to_double(val);
    } else if (key == "vote_dims") {
      c.vote_dims = parse_int_list(val);
    } else if (key == "head_dims") {
      c.head_dims = parse_int_list(val);
    } else if (key == "att_hidden") {
      c.att_hidden = to_int(val);
    } else if (key.rfind("loss.", 0) == 0) {
      c.loss_weights[key.substr(5)] = to_double(val);
    } else if (key == "weight_decay") {
      c.weight_decay = to_double(val);
    } else if (key == "lr") {
      c.lr = to_double(val);
    } else if (key == "adam_beta1") {
      c.adam_beta1 = to_double(val);
    } else if (key == "adam_beta2") {
      c.adam_beta2 = to_double(val);
    } else if (key == "seed") {
      c.seed = static_cast<std::uint64_t>(std::stoull(val));
    } else if (key == "fps_start") {
      c.fps_start = to_int(val);
    } else if (key.rfind("scene.", 0) == 0) {
      // scene generator keys live in the same file; handled elsewhere
    } else {
      throw std::invalid_argument("unknown config key: " + key);
    }
  }

  for (auto& [idx, spec] : staged) {
    if (agg_dims.count(idx)) spec.agg_dim = agg_dims[idx];
    if (samplers.count(idx)) {
      const std::string& s = samplers[idx];
      spec.sampler = s == "dfps"      ? Sampler::DFps
                     : s == "featfps" ? Sampler::FeatFps
                     : s == "topk"    ? Sampler::TopKForeground
                     : s == "random"  ? Sampler::Random
                                      : throw std::invalid_argument("bad sampler: " + s);
    }
    c.stages.push_back(spec);
  }
  if (c.stages.empty()) c.stages = ModelConfig::kitti().stages;
  c.check();
  return c;
}

ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace pdm
