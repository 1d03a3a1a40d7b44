#pragma once

#include <array>
#include <string>
#include <vector>

#include "s2ct/segmentation.hpp"
#include "s2ct/volume.hpp"

namespace s2ct {

// Peak signal-to-noise ratio between two volumes of normalized [0,1]
// intensities: -10*log10(MSE) with data range 1, capped at 100 dB when the
// MSE drops below 1e-10.
double psnr(const Volume& a, const Volume& b);

// Mean 2D SSIM over axial slices: 11x11 Gaussian window (sigma 1.5),
// K1=0.01, K2=0.03, data range 1, windows fully inside the slice.
double ssim(const Volume& a, const Volume& b);

// Set Dice 2|A^B|/(|A|+|B|) of one class between label volumes; both
// empty counts as perfect agreement (1.0).
double hard_dice(const LabelVolume& pred, const LabelVolume& ref, int cls);

struct CaseMetrics {
  std::string case_id;
  int views = 0;
  float lambda = 0.0f;
  double psnr_db = 0.0;
  double ssim_val = 0.0;
  std::array<double, kNumClasses> dice{};  // per class; index 0 unused
  double dice_mean = 0.0;                  // over foreground classes present in truth
};

// Mean and half-width of the normal-approximation 95% interval
// (1.96 * sd / sqrt(n), sample standard deviation).
struct Aggregate {
  double mean = 0.0;
  double ci95 = 0.0;
  int n = 0;
};
Aggregate aggregate(const std::vector<double>& values);

// Scores one reconstruction against its ground truth: voxel metrics on
// normalized intensities, structure Dice from the segmenter's argmax labels
// on the reconstruction versus the phantom's analytic labels.
CaseMetrics evaluate_case(const Volume& recon_hu, const LabeledVolume& truth,
                          const SegModel& seg);

// metrics.csv rows: case,views,lambda,psnr,ssim,dice_mean,dice_<class>...
void write_metrics_csv(const std::vector<CaseMetrics>& rows, const std::string& path);

}  // namespace s2ct
