#include "s2ct/run_config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "s2ct/error.hpp"

namespace s2ct {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

float parse_float(const std::string& key, const std::string& value) {
  char* end = nullptr;
  float v = std::strtof(value.c_str(), &end);
  if (end == value.c_str() || *end != '\0')
    throw UsageError("config: bad number for " + key + ": '" + value + "'");
  return v;
}

int parse_int(const std::string& key, const std::string& value) {
  char* end = nullptr;
  long v = std::strtol(value.c_str(), &end, 10);
  if (end == value.c_str() || *end != '\0')
    throw UsageError("config: bad integer for " + key + ": '" + value + "'");
  return static_cast<int>(v);
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
  char* end = nullptr;
  unsigned long long v = std::strtoull(value.c_str(), &end, 10);
  if (end == value.c_str() || *end != '\0')
    throw UsageError("config: bad integer for " + key + ": '" + value + "'");
  return static_cast<uint64_t>(v);
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& key, const std::string& value, F item) {
  std::vector<T> out;
  std::istringstream ss(value);
  std::string piece;
  while (std::getline(ss, piece, ',')) {
    piece = trim(piece);
    if (piece.empty()) throw UsageError("config: empty entry in " + key);
    out.push_back(item(key, piece));
  }
  if (out.empty()) throw UsageError("config: empty list for " + key);
  return out;
}

}  // namespace

void RunConfig::validate() const {
  if (out_dir.empty()) throw UsageError("config: out_dir must not be empty");
  if (n_train < 1 || n_val < 1 || n_test < 1)
    throw UsageError("config: n_train, n_val and n_test must all be at least 1");
  if (dim < 16) throw UsageError("config: dim must be at least 16");
  if (!(spacing_mm > 0.0f)) throw UsageError("config: spacing_mm must be positive");
  if (beam != "cone" && beam != "parallel")
    throw UsageError("config: beam must be 'cone' or 'parallel'");
  for (int k : view_counts) {
    if (k < 1 || k > 4) throw UsageError("config: view_counts entries must be in 1..4");
    if (static_cast<size_t>(k) > views.size())
      throw UsageError("config: view_counts entry exceeds the view pool");
  }
  if (seg_epochs < 1) throw UsageError("config: seg_epochs must be at least 1");
  if (!(seg_lr > 0.0f)) throw UsageError("config: seg_lr must be positive");
  geometry().validate();
  phantom_spec().validate();
  recon_config().validate();
  for (int k : view_counts) train_config(k).validate();
}

ViewGeometry RunConfig::geometry() const {
  ViewGeometry g;
  g.beam = beam == "cone" ? Beam::Cone : Beam::Parallel;
  g.detector_px = detector_px;
  g.source_dist = source_dist;
  g.detector_dist = detector_dist;
  return g;
}

PhantomSpec RunConfig::phantom_spec() const {
  PhantomSpec spec;
  spec.dim = dim;
  spec.spacing_mm = spacing_mm;
  return spec;
}

ReconConfig RunConfig::recon_config() const {
  ReconConfig rc;
  rc.feature_channels = feature_channels;
  rc.fourier_m = fourier_m;
  rc.fourier_sigma = fourier_sigma;
  rc.width = width;
  rc.detector_px = detector_px;
  return rc;
}

TrainConfig RunConfig::train_config(int view_count) const {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.lr = lr;
  tc.lr_after = lr_after;
  tc.lr_drop_epoch = lr_drop_epoch;
  tc.points_per_step = points_per_step;
  tc.lambda = lambda;
  tc.dice_every = dice_every;
  tc.view_angles = angles_for_count(views, view_count);
  tc.seed = seed * 1000003ull + 300 + static_cast<uint64_t>(view_count);
  tc.val_chunk = chunk;
  tc.dice_chunk = chunk;
  return tc;
}

std::vector<float> angles_for_count(const std::vector<float>& pool, int k) {
  if (k < 1 || static_cast<size_t>(k) > pool.size())
    throw UsageError("angles_for_count: count outside the view pool");
  auto has = [&pool](float a) {
    return std::find(pool.begin(), pool.end(), a) != pool.end();
  };
  if (k == 1 && has(90.0f)) return {90.0f};
  if (k == 2 && has(0.0f) && has(90.0f)) return {0.0f, 90.0f};
  std::vector<float> out(pool.begin(), pool.begin() + k);
  return out;
}

RunConfig parse_run_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(line_no) + ": expected key=value");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (key.empty() || value.empty())
      throw UsageError("config line " + std::to_string(line_no) + ": expected key=value");

    if (key == "out_dir") cfg.out_dir = value;
    else if (key == "n_train") cfg.n_train = parse_int(key, value);
    else if (key == "n_val") cfg.n_val = parse_int(key, value);
    else if (key == "n_test") cfg.n_test = parse_int(key, value);
    else if (key == "dim") cfg.dim = parse_int(key, value);
    else if (key == "spacing_mm") cfg.spacing_mm = parse_float(key, value);
    else if (key == "beam") cfg.beam = value;
    else if (key == "source_dist") cfg.source_dist = parse_float(key, value);
    else if (key == "detector_dist") cfg.detector_dist = parse_float(key, value);
    else if (key == "detector_px") cfg.detector_px = parse_int(key, value);
    else if (key == "views") cfg.views = parse_list<float>(key, value, parse_float);
    else if (key == "view_counts") cfg.view_counts = parse_list<int>(key, value, parse_int);
    else if (key == "lambda") cfg.lambda = parse_float(key, value);
    else if (key == "epochs") cfg.epochs = parse_int(key, value);
    else if (key == "lr") cfg.lr = parse_float(key, value);
    else if (key == "lr_after") cfg.lr_after = parse_float(key, value);
    else if (key == "lr_drop_epoch") cfg.lr_drop_epoch = parse_int(key, value);
    else if (key == "points_per_step") cfg.points_per_step = parse_int(key, value);
    else if (key == "dice_every") cfg.dice_every = parse_int(key, value);
    else if (key == "chunk") cfg.chunk = parse_int(key, value);
    else if (key == "seg_epochs") cfg.seg_epochs = parse_int(key, value);
    else if (key == "seg_lr") cfg.seg_lr = parse_float(key, value);
    else if (key == "feature_channels") cfg.feature_channels = parse_int(key, value);
    else if (key == "fourier_m") cfg.fourier_m = parse_int(key, value);
    else if (key == "fourier_sigma") cfg.fourier_sigma = parse_float(key, value);
    else if (key == "width") cfg.width = parse_int(key, value);
    else if (key == "seed") cfg.seed = parse_u64(key, value);
    else throw UsageError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config_text(buf.str());
}

}  // namespace s2ct
