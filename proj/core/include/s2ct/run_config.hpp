#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2ct/geometry.hpp"
#include "s2ct/phantom.hpp"
#include "s2ct/recon_model.hpp"
#include "s2ct/segmentation.hpp"
#include "s2ct/trainer.hpp"

namespace s2ct {

// Flat key=value run configuration. Every key has the default shown here;
// a config file only needs the keys it changes. Unknown keys are rejected.
struct RunConfig {
  std::string out_dir = "runs/desk";  // out_dir: artifact root

  // dataset
  int n_train = 30;          // n_train: training phantoms
  int n_val = 2;             // n_val: validation phantoms (model selection)
  int n_test = 10;           // n_test: held-out phantoms
  int dim = 32;              // dim: voxels per volume side
  float spacing_mm = 4.0f;   // spacing_mm: voxel pitch

  // acquisition
  std::string beam = "cone";    // beam: cone | parallel
  float source_dist = 3.0f;     // source_dist: R_s in normalized units (cone)
  float detector_dist = 1.0f;   // detector_dist: R_d in normalized units (cone)
  int detector_px = 32;         // detector_px: detector pixels per side
  std::vector<float> views{0.0f, 45.0f, 90.0f, 135.0f};  // views: angle pool, degrees
  std::vector<int> view_counts{1, 2, 4};  // view_counts: models to train

  // reconstruction training
  float lambda = 0.0f;        // lambda: weight of the Dice loss term
  int epochs = 40;            // epochs: reconstruction training epochs
  float lr = 3e-5f;           // lr: initial learning rate
  float lr_after = 3e-6f;     // lr_after: rate after the drop
  int lr_drop_epoch = -1;     // lr_drop_epoch: -1 means epochs/2
  int points_per_step = 4096; // points_per_step: sampled voxels per step
  int dice_every = 4;         // dice_every: Dice term cadence in steps
  int chunk = 4096;           // chunk: decode batching hint (never changes results)

  // segmenter pretraining
  int seg_epochs = 30;   // seg_epochs: segmenter pretraining epochs
  float seg_lr = 1e-3f;  // seg_lr: segmenter learning rate

  // model size
  int feature_channels = 32;   // feature_channels: view feature width
  int fourier_m = 32;          // fourier_m: Fourier frequency count
  float fourier_sigma = 3.0f;  // fourier_sigma: frequency scale
  int width = 128;             // width: MLP width

  uint64_t seed = 0;  // seed: the single root of all randomness

  // Per-stage seeds derived from the root so stages stay decorrelated but
  // fully determined by one number.
  uint64_t seg_init_seed() const { return seed * 1000003ull + 101; }
  uint64_t seg_train_seed() const { return seed * 1000003ull + 102; }
  uint64_t recon_init_seed(int view_count) const { return seed * 1000003ull + 200 + view_count; }

  void validate() const;
  ViewGeometry geometry() const;
  PhantomSpec phantom_spec() const;
  ReconConfig recon_config() const;
  TrainConfig train_config(int view_count) const;
};

// The angles a k-view model uses, preferring the frontal view for one view
// and the lateral/frontal pair for two, falling back to the pool order.
std::vector<float> angles_for_count(const std::vector<float>& pool, int k);

RunConfig parse_run_config_text(const std::string& text);
RunConfig parse_run_config(const std::string& path);

}  // namespace s2ct
