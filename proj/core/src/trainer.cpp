#include "s2ct/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "s2ct/error.hpp"
#include "s2ct/metrics.hpp"
#include "s2ct/ops.hpp"

namespace s2ct {

namespace {

// Derived deterministic streams: one for the per-epoch case order, one for
// the per-step point sample. Keyed so a resumed run regenerates the exact
// sequence of either.
uint64_t mix(uint64_t a, uint64_t b) {
  uint64_t x = a * 0x9e3779b97f4a7c15ull + b + 0x632be59bd9b4e019ull;
  x ^= x >> 29;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 32;
  return x;
}
constexpr uint64_t kEpochSalt = 0x45504f4348ull;
constexpr uint64_t kStepSalt = 0x53414d504cull;

void require_case(const TrainCase& cs) {
  if (cs.views.empty()) throw DataError("train: case '" + cs.id + "' has no views");
  if (cs.views.size() != cs.geometries.size())
    throw DataError("train: case '" + cs.id + "' has mismatched views and geometries");
  if (cs.hu.dims[0] != cs.hu.dims[1] || cs.hu.dims[1] != cs.hu.dims[2] || cs.hu.dims[0] < 2)
    throw DataError("train: case '" + cs.id + "' volume is not cubic");
}

void require_frozen(const SegModel& seg) {
  for (const std::string& name : seg.params().names()) {
    if (seg.params().get(name).requires_grad())
      throw DataError("train_step: the segmentation model must be frozen");
  }
}

double validation_psnr(const ReconModel& model, const std::vector<TrainCase>& val_cases,
                       const TrainConfig& cfg) {
  double total = 0.0;
  for (const TrainCase& cs : val_cases) {
    Volume recon = model.reconstruct_volume(cs.views, cs.geometries, cs.hu.dims[0],
                                            cs.hu.spacing_mm[0], cfg.val_chunk);
    Volume recon_norm = recon;
    recon_norm.data = volume_to_normalized(recon);
    Volume truth_norm = cs.hu;
    truth_norm.data = volume_to_normalized(cs.hu);
    total += psnr(recon_norm, truth_norm);
  }
  return total / static_cast<double>(val_cases.size());
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw UsageError("train config: epochs must be at least 1");
  if (!(lr > 0.0f) || !(lr_after > 0.0f))
    throw UsageError("train config: learning rates must be positive");
  if (batch_cases != 1) throw UsageError("train config: only batch_cases=1 is supported");
  if (points_per_step < 1) throw UsageError("train config: points_per_step must be positive");
  if (!(lambda >= 0.0f)) throw UsageError("train config: lambda must be non-negative");
  if (dice_every < 1) throw UsageError("train config: dice_every must be at least 1");
  if (view_angles.empty() || view_angles.size() > 4)
    throw UsageError("train config: between 1 and 4 view angles required");
  for (float a : view_angles) {
    float norm = normalize_angle_deg(a);
    if (norm != 0.0f && norm != 45.0f && norm != 90.0f && norm != 135.0f)
      throw UsageError("train config: view angles must come from {0, 45, 90, 135}");
  }
  for (size_t i = 0; i < view_angles.size(); ++i)
    for (size_t j = i + 1; j < view_angles.size(); ++j)
      if (normalize_angle_deg(view_angles[i]) == normalize_angle_deg(view_angles[j]))
        throw UsageError("train config: duplicate view angle");
  if (start_epoch < 0 || start_epoch >= epochs)
    throw UsageError("train config: start_epoch out of range");
  if (val_chunk < 1 || dice_chunk < 1)
    throw UsageError("train config: chunk sizes must be positive");
}

TrainCase prepare_case(const std::string& id, const Volume& hu,
                       const std::vector<float>& angles_deg, const ViewGeometry& g_template) {
  TrainCase cs;
  cs.id = id;
  cs.hu = hu;
  Volume mu = hu_to_mu(hu);
  cs.views = render_views(mu, g_template, angles_deg);
  cs.geometries.reserve(angles_deg.size());
  for (float a : angles_deg) {
    ViewGeometry g = g_template;
    g.theta_deg = normalize_angle_deg(a);
    g.validate();
    cs.geometries.push_back(g);
  }
  return cs;
}

StepLosses train_step(ReconModel& model, const SegModel* seg, const Tensor* seg_ref,
                      const TrainCase& cs, const TrainConfig& cfg, AdamState& adam,
                      int64_t step_index) {
  cfg.validate();
  require_case(cs);
  const int dim = cs.hu.dims[0];
  const int64_t total_vox = cs.hu.numel();
  const int n = static_cast<int>(std::min<int64_t>(cfg.points_per_step, total_vox));

  const bool dice_now = cfg.lambda > 0.0f && step_index % cfg.dice_every == 0;
  if (dice_now) {
    if (!seg || !seg_ref)
      throw DataError(
          "train_step: the Dice term needs a segmentation model and reference probabilities");
    require_frozen(*seg);
  }

  // Uniform sample of voxel centers without replacement (partial
  // Fisher-Yates; the modulo bias is irrelevant at these sizes and keeps
  // the draw identical across standard libraries).
  std::vector<int64_t> idx(total_vox);
  std::iota(idx.begin(), idx.end(), int64_t{0});
  std::mt19937_64 rng(mix(cfg.seed ^ kStepSalt, static_cast<uint64_t>(step_index)));
  std::vector<Vec3> pts(n);
  std::vector<float> targets(n);
  for (int j = 0; j < n; ++j) {
    int64_t pick = j + static_cast<int64_t>(rng() % static_cast<uint64_t>(total_vox - j));
    std::swap(idx[j], idx[pick]);
    const int64_t v = idx[j];
    const int x = static_cast<int>(v % dim);
    const int y = static_cast<int>((v / dim) % dim);
    const int z = static_cast<int>(v / (int64_t(dim) * dim));
    pts[j] = voxel_to_normalized(x, y, z, dim);
    targets[j] = hu_to_normalized(cs.hu.data[v]);
  }

  Tape tape;
  std::vector<Tensor> features;
  features.reserve(cs.views.size());
  for (const DRRImage& v : cs.views) features.push_back(model.extract_features(view_to_tensor(v)));

  Tensor gamma = model.fourier_encode(pts);
  std::vector<Tensor> r_list;
  r_list.reserve(cs.views.size());
  for (size_t i = 0; i < cs.views.size(); ++i)
    r_list.push_back(
        model.per_view_embed(gamma, features[i], model.project_points(pts, cs.geometries[i])));
  Tensor yhat = model.fuse_and_decode(r_list);
  Tensor y = Tensor::from({n, 1}, targets);
  Tensor diff = sub(yhat, y);
  Tensor mse_t = mean(mul(diff, diff));

  StepLosses out;
  Tensor total_t = mse_t;
  if (dice_now) {
    Tensor voln = model.decode_volume(features, cs.geometries, dim, cfg.dice_chunk);
    Tensor pred = seg->forward(voln);
    Tensor dice_t = soft_dice_loss(pred, *seg_ref);
    total_t = add(mse_t, mul(dice_t, cfg.lambda));
    out.dice = dice_t.data()[0];
    out.dice_active = true;
  }
  out.mse = mse_t.data()[0];
  out.total = total_t.data()[0];
  if (!std::isfinite(out.total))
    throw NumericError("train_step: non-finite loss at step " + std::to_string(step_index) +
                       " on case " + cs.id);
  tape.backward(total_t);
  adam_step(model.params(), adam);
  return out;
}

std::vector<TrainLogRow> train(ReconModel& model, SegModel* seg,
                               const std::vector<TrainCase>& train_cases,
                               const std::vector<TrainCase>& val_cases, const TrainConfig& cfg,
                               const std::string& out_dir) {
  cfg.validate();
  if (train_cases.empty()) throw DataError("train: no training cases");
  if (val_cases.empty()) throw DataError("train: no validation cases");
  for (const TrainCase& cs : train_cases) require_case(cs);
  for (const TrainCase& cs : val_cases) require_case(cs);
  if (cfg.lambda > 0.0f && !seg)
    throw DataError("train: lambda > 0 requires a segmentation model");
  std::filesystem::create_directories(out_dir);

  std::vector<Tensor> seg_refs;
  if (cfg.lambda > 0.0f) {
    seg->set_trainable(false);
    seg_refs.reserve(train_cases.size());
    for (const TrainCase& cs : train_cases)
      seg_refs.push_back(seg->forward(normalized_volume_tensor(cs.hu)));
  }

  const std::string final_prefix = out_dir + "/model_final";
  const std::string best_prefix = out_dir + "/model_best";
  const std::string state_path = out_dir + "/train_state.json";

  AdamState adam;
  adam.lr = cfg.lr;
  double best_psnr = -std::numeric_limits<double>::infinity();
  if (cfg.start_epoch > 0) {
    adam = load_adam(final_prefix);
    TrainState st = load_train_state(state_path);
    if (st.next_epoch != cfg.start_epoch)
      throw DataError("train: checkpoint is at epoch " + std::to_string(st.next_epoch) +
                      ", not " + std::to_string(cfg.start_epoch));
    best_psnr = st.best_val_psnr;
  }

  const int64_t n_cases = static_cast<int64_t>(train_cases.size());
  std::vector<TrainLogRow> rows;
  for (int epoch = cfg.start_epoch; epoch < cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    adam.lr = cfg.lr_at(epoch);

    std::vector<size_t> order(train_cases.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::mt19937_64 rng(mix(cfg.seed ^ kEpochSalt, static_cast<uint64_t>(epoch)));
    for (size_t j = 0; j + 1 < order.size(); ++j) {
      size_t pick = j + static_cast<size_t>(rng() % (order.size() - j));
      std::swap(order[j], order[pick]);
    }

    double mse_sum = 0.0, dice_sum = 0.0;
    int64_t dice_n = 0;
    for (size_t i = 0; i < order.size(); ++i) {
      const size_t c = order[i];
      const Tensor* ref = seg_refs.empty() ? nullptr : &seg_refs[c];
      const int64_t step = epoch * n_cases + static_cast<int64_t>(i);
      StepLosses sl = train_step(model, seg, ref, train_cases[c], cfg, adam, step);
      mse_sum += sl.mse;
      if (sl.dice_active) {
        dice_sum += sl.dice;
        ++dice_n;
      }
    }

    TrainLogRow row;
    row.epoch = epoch;
    row.mse = mse_sum / static_cast<double>(n_cases);
    row.dice_loss = dice_n > 0 ? dice_sum / static_cast<double>(dice_n)
                               : std::numeric_limits<double>::quiet_NaN();
    row.val_psnr = validation_psnr(model, val_cases, cfg);
    row.lr = adam.lr;
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back(row);

    save_recon_model(model, final_prefix);
    save_adam(adam, final_prefix);
    if (row.val_psnr > best_psnr) {
      best_psnr = row.val_psnr;
      save_recon_model(model, best_prefix);
    }
    save_train_state({epoch + 1, best_psnr}, state_path);
  }
  return rows;
}

void write_train_log_csv(const std::vector<TrainLogRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("write_train_log_csv: cannot open " + path);
  out << "epoch,mse,dice_loss,val_psnr,seconds\n";
  for (const TrainLogRow& r : rows) {
    out << r.epoch << ',' << r.mse << ',' << r.dice_loss << ',' << r.val_psnr << ','
        << r.seconds << "\n";
  }
  if (!out.flush()) throw DataError("write_train_log_csv: write failed for " + path);
}

std::vector<TrainLogRow> read_train_log_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("read_train_log_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,mse,dice_loss,val_psnr,seconds")
    throw DataError("read_train_log_csv: unexpected header in " + path);
  std::vector<TrainLogRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::array<std::string, 5> field;
    for (int i = 0; i < 5; ++i) {
      if (!std::getline(ss, field[i], ',') || field[i].empty())
        throw DataError("read_train_log_csv: bad row in " + path + ": " + line);
    }
    // strtod handles the "nan" written for epochs without a Dice term,
    // which stream extraction would reject.
    TrainLogRow r;
    r.epoch = std::atoi(field[0].c_str());
    r.mse = std::strtod(field[1].c_str(), nullptr);
    r.dice_loss = std::strtod(field[2].c_str(), nullptr);
    r.val_psnr = std::strtod(field[3].c_str(), nullptr);
    r.seconds = std::strtod(field[4].c_str(), nullptr);
    rows.push_back(r);
  }
  return rows;
}

void save_train_state(const TrainState& state, const std::string& path) {
  nlohmann::json j;
  j["next_epoch"] = state.next_epoch;
  j["best_val_psnr"] = state.best_val_psnr;
  std::ofstream out(path);
  if (!out) throw DataError("save_train_state: cannot open " + path);
  out << j.dump(2) << "\n";
  if (!out.flush()) throw DataError("save_train_state: write failed for " + path);
}

TrainState load_train_state(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_train_state: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
    return {j.at("next_epoch").get<int>(), j.at("best_val_psnr").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_train_state: bad json in " + path + ": " + e.what());
  }
}

}  // namespace s2ct
