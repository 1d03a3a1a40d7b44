#include "s2ct/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include "s2ct/dose.hpp"
#include "s2ct/drr.hpp"
#include "s2ct/error.hpp"
#include "s2ct/metrics.hpp"
#include "s2ct/rvol.hpp"

namespace s2ct {

namespace {

namespace fs = std::filesystem;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_seg_log(const std::vector<float>& losses, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("pipeline: cannot open " + path);
  out << "epoch,loss\n";
  for (size_t e = 0; e < losses.size(); ++e) out << e << ',' << losses[e] << "\n";
}

}  // namespace

std::vector<std::string> split_ids(const RunConfig& cfg, const std::string& split) {
  int begin = 0, count = 0;
  if (split == "train") {
    begin = 0;
    count = cfg.n_train;
  } else if (split == "val") {
    begin = cfg.n_train;
    count = cfg.n_val;
  } else if (split == "test") {
    begin = cfg.n_train + cfg.n_val;
    count = cfg.n_test;
  } else {
    throw UsageError("split_ids: unknown split '" + split + "'");
  }
  std::vector<std::string> ids;
  ids.reserve(count);
  for (int i = 0; i < count; ++i) ids.push_back(case_id(begin + i));
  return ids;
}

LabeledVolume load_case(const std::string& data_dir, const std::string& id) {
  LabeledVolume lv;
  lv.hu = read_rvol_f32(data_dir + "/" + id + ".hu.rvol", RvolKind::Hu);
  lv.labels = read_rvol_labels(data_dir + "/" + id + ".labels.rvol");
  if (lv.hu.dims != lv.labels.dims)
    throw DataError("load_case: " + id + " volumes disagree on dimensions");
  return lv;
}

std::string view_path(const std::string& views_dir, const std::string& id, float angle_deg) {
  int a = static_cast<int>(std::lround(normalize_angle_deg(angle_deg)));
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", a);
  return views_dir + "/" + id + ".view" + buf + ".rimg";
}

TrainCase load_train_case(const std::string& data_dir, const std::string& id,
                          const std::vector<float>& angles_deg, const ViewGeometry& g_template) {
  TrainCase cs;
  cs.id = id;
  cs.hu = read_rvol_f32(data_dir + "/" + id + ".hu.rvol", RvolKind::Hu);
  for (float a : angles_deg) {
    cs.views.push_back(read_drr_rimg(view_path(data_dir + "/views", id, a)));
    ViewGeometry g = g_template;
    g.theta_deg = normalize_angle_deg(a);
    g.validate();
    cs.geometries.push_back(g);
  }
  return cs;
}

void write_center_slice_pgm(const Volume& hu, const std::string& path) {
  const int nx = hu.dims[0], ny = hu.dims[1];
  const int z = hu.dims[2] / 2;
  std::vector<float> slice(static_cast<size_t>(nx) * ny);
  for (int y = 0; y < ny; ++y)
    for (int x = 0; x < nx; ++x) slice[static_cast<size_t>(y) * nx + x] = hu.at(x, y, z);
  write_pgm(slice, ny, nx, -1000.0f, 1000.0f, path);
}

void train_one_view_count(const RunConfig& cfg, int k, bool resume, std::ostream& log) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::string data_dir = cfg.out_dir + "/data";
  if (!fs::exists(data_dir))
    throw DataError("no dataset at " + data_dir + "; generate phantoms and views first");
  const std::vector<float> angles = angles_for_count(cfg.views, k);
  const std::string k_dir = cfg.out_dir + "/recon_k" + std::to_string(k);
  fs::create_directories(k_dir);

  const ViewGeometry g_template = cfg.geometry();
  std::vector<TrainCase> train_cases, val_cases;
  for (const std::string& id : split_ids(cfg, "train"))
    train_cases.push_back(load_train_case(data_dir, id, angles, g_template));
  for (const std::string& id : split_ids(cfg, "val"))
    val_cases.push_back(load_train_case(data_dir, id, angles, g_template));

  std::optional<SegModel> seg;
  if (cfg.lambda > 0.0f) {
    seg = load_seg_model(cfg.out_dir + "/seg/model");
    seg->set_trainable(false);
  }

  TrainConfig tc = cfg.train_config(k);
  std::optional<ReconModel> model;
  if (resume) {
    TrainState st = load_train_state(k_dir + "/train_state.json");
    if (st.next_epoch >= tc.epochs) {
      log << "[recon_k" << k << "] already trained through epoch " << st.next_epoch - 1
          << "; nothing to resume\n";
      return;
    }
    tc.start_epoch = st.next_epoch;
    model.emplace(load_recon_model(k_dir + "/model_final"));
  } else {
    model.emplace(cfg.recon_config(), cfg.recon_init_seed(k));
  }

  std::vector<TrainLogRow> rows =
      train(*model, seg ? &*seg : nullptr, train_cases, val_cases, tc, k_dir);

  const std::string log_path = k_dir + "/trainlog.csv";
  if (tc.start_epoch > 0 && fs::exists(log_path)) {
    std::vector<TrainLogRow> merged;
    for (const TrainLogRow& r : read_train_log_csv(log_path))
      if (r.epoch < tc.start_epoch) merged.push_back(r);
    merged.insert(merged.end(), rows.begin(), rows.end());
    rows = std::move(merged);
  }
  write_train_log_csv(rows, log_path);
  log << "[recon_k" << k << "] trained epochs " << tc.start_epoch << ".." << tc.epochs - 1
      << ", val PSNR " << rows.back().val_psnr << " dB (" << seconds_since(t0)
      << "s elapsed)\n";
}

void run_pipeline(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::string data_dir = cfg.out_dir + "/data";
  const std::string views_dir = data_dir + "/views";
  fs::create_directories(views_dir);

  // dataset
  const int n_total = cfg.n_train + cfg.n_val + cfg.n_test;
  std::vector<std::string> ids = generate_dataset(n_total, cfg.seed, cfg.phantom_spec(), data_dir);
  for (const std::string& id : ids) {
    Volume hu = read_rvol_f32(data_dir + "/" + id + ".hu.rvol", RvolKind::Hu);
    write_center_slice_pgm(hu, data_dir + "/" + id + ".truth.pgm");
  }
  log << "[pipeline] dataset: " << n_total << " phantoms (" << cfg.n_train << " train, "
      << cfg.n_val << " val, " << cfg.n_test << " test) under " << data_dir << "\n";

  // views at every pool angle
  const ViewGeometry g_template = cfg.geometry();
  for (const std::string& id : ids) {
    Volume hu = read_rvol_f32(data_dir + "/" + id + ".hu.rvol", RvolKind::Hu);
    Volume mu = hu_to_mu(hu);
    std::vector<DRRImage> views = render_views(mu, g_template, cfg.views);
    for (size_t i = 0; i < cfg.views.size(); ++i)
      write_drr_rimg(views[i], view_path(views_dir, id, cfg.views[i]));
  }
  log << "[pipeline] rendered " << ids.size() * cfg.views.size() << " views ("
      << seconds_since(t0) << "s elapsed)\n";

  // segmenter pretraining on the train split
  const std::string seg_dir = cfg.out_dir + "/seg";
  fs::create_directories(seg_dir);
  std::vector<LabeledVolume> seg_cases;
  for (const std::string& id : split_ids(cfg, "train")) seg_cases.push_back(load_case(data_dir, id));
  SegModel seg(SegConfig{}, cfg.seg_init_seed());
  SegTrainOptions seg_opt;
  seg_opt.epochs = cfg.seg_epochs;
  seg_opt.lr = cfg.seg_lr;
  seg_opt.seed = cfg.seg_train_seed();
  std::vector<float> seg_losses = pretrain_seg(seg, seg_cases, seg_opt);
  save_seg_model(seg, seg_dir + "/model");
  write_seg_log(seg_losses, seg_dir + "/seg_log.csv");
  seg.set_trainable(false);
  log << "[pipeline] segmenter pretrained: loss " << seg_losses.front() << " -> "
      << seg_losses.back() << " over " << cfg.seg_epochs << " epochs (" << seconds_since(t0)
      << "s elapsed)\n";

  // reconstruction training and evaluation per view count
  std::vector<CaseMetrics> metric_rows;
  std::vector<DoseRow> dose_rows;
  for (int k : cfg.view_counts) {
    const std::vector<float> angles = angles_for_count(cfg.views, k);
    const std::string k_dir = cfg.out_dir + "/recon_k" + std::to_string(k);
    fs::create_directories(k_dir + "/test");

    train_one_view_count(cfg, k, false, log);

    ReconModel best = load_recon_model(k_dir + "/model_best");
    for (const std::string& id : split_ids(cfg, "test")) {
      TrainCase tcs = load_train_case(data_dir, id, angles, g_template);
      LabeledVolume truth = load_case(data_dir, id);
      Volume recon =
          best.reconstruct_volume(tcs.views, tcs.geometries, cfg.dim, cfg.spacing_mm, cfg.chunk);
      write_rvol_hu(recon, k_dir + "/test/" + id + ".recon.rvol");
      write_center_slice_pgm(recon, k_dir + "/test/" + id + ".recon.pgm");

      CaseMetrics m = evaluate_case(recon, truth, seg);
      m.case_id = id;
      m.views = k;
      m.lambda = cfg.lambda;
      metric_rows.push_back(m);

      DoseRow d;
      d.case_id = id;
      d.views = k;
      d.lambda = cfg.lambda;
      d.report = compare_dose(truth, recon, PlanSpec{});
      dose_rows.push_back(d);
    }
    log << "[pipeline] " << k << "-view test set reconstructed and scored ("
        << seconds_since(t0) << "s elapsed)\n";
  }

  write_metrics_csv(metric_rows, cfg.out_dir + "/metrics.csv");
  write_dose_csv(dose_rows, cfg.out_dir + "/dose.csv");
  log << "[pipeline] wrote " << cfg.out_dir << "/metrics.csv and dose.csv; done in "
      << seconds_since(t0) << "s\n";
}

}  // namespace s2ct
