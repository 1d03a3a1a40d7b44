#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2ct/adam.hpp"
#include "s2ct/drr.hpp"
#include "s2ct/recon_model.hpp"
#include "s2ct/segmentation.hpp"
#include "s2ct/volume.hpp"

namespace s2ct {

struct TrainConfig {
  int epochs = 100;
  float lr = 3e-5f;
  float lr_after = 3e-6f;
  int lr_drop_epoch = -1;  // negative means half of epochs
  int batch_cases = 1;     // one case per optimizer step
  int points_per_step = 4096;
  float lambda = 0.0f;  // weight of the Dice term; 0 disables it
  int dice_every = 4;   // apply the Dice term every n-th step
  std::vector<float> view_angles{0.0f, 45.0f, 90.0f, 135.0f};
  uint64_t seed = 0;
  int start_epoch = 0;  // resume point; model and optimizer must match
  int val_chunk = 4096;
  int dice_chunk = 4096;

  int lr_drop() const { return lr_drop_epoch >= 0 ? lr_drop_epoch : epochs / 2; }
  float lr_at(int epoch) const { return epoch < lr_drop() ? lr : lr_after; }
  void validate() const;
};

// One training subject: its rendered views with their geometries and the
// ground-truth volume the losses are computed against.
struct TrainCase {
  std::string id;
  std::vector<DRRImage> views;
  std::vector<ViewGeometry> geometries;
  Volume hu;
};

// Renders a case's planar views at the requested angles under a shared
// geometry template.
TrainCase prepare_case(const std::string& id, const Volume& hu,
                       const std::vector<float>& angles_deg, const ViewGeometry& g_template);

struct StepLosses {
  float mse = 0.0f;
  float dice = 0.0f;  // meaningful only when dice_active
  bool dice_active = false;
  float total = 0.0f;
};

// One optimizer step on one case: samples points_per_step voxel centers
// without replacement, builds the loss (MSE, plus lambda * soft Dice on a
// full chunked volume on the steps where it fires), backpropagates, and
// applies Adam. seg must be frozen; seg_ref holds its probabilities on the
// ground truth. Both may be null while the Dice term is off.
StepLosses train_step(ReconModel& model, const SegModel* seg, const Tensor* seg_ref,
                      const TrainCase& cs, const TrainConfig& cfg, AdamState& adam,
                      int64_t step_index);

struct TrainLogRow {
  int epoch = 0;
  double mse = 0.0;
  double dice_loss = 0.0;  // NaN on epochs where the term never fired
  double val_psnr = 0.0;
  double seconds = 0.0;
  float lr = 0.0f;
};

// Full training run. Writes model_best (highest validation PSNR) and
// model_final plus optimizer state under out_dir after every epoch, so an
// interrupted run can resume from the last finished epoch: reload
// model_final and its optimizer state, set cfg.start_epoch, and the
// remaining epochs reproduce the uninterrupted run exactly.
std::vector<TrainLogRow> train(ReconModel& model, SegModel* seg,
                               const std::vector<TrainCase>& train_cases,
                               const std::vector<TrainCase>& val_cases, const TrainConfig& cfg,
                               const std::string& out_dir);

// trainlog.csv: epoch,mse,dice_loss,val_psnr,seconds
void write_train_log_csv(const std::vector<TrainLogRow>& rows, const std::string& path);
std::vector<TrainLogRow> read_train_log_csv(const std::string& path);

// Resume bookkeeping saved next to the checkpoints.
struct TrainState {
  int next_epoch = 0;
  double best_val_psnr = 0.0;
};
void save_train_state(const TrainState& state, const std::string& path);
TrainState load_train_state(const std::string& path);

}  // namespace s2ct
