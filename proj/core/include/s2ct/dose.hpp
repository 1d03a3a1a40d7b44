#pragma once

#include <array>
#include <string>
#include <vector>

#include "s2ct/volume.hpp"

namespace s2ct {

// Two opposed axis-aligned megavoltage beams aimed at a single point. Each
// beam delivers half the prescription at the isocenter, attenuated by the
// radiological path length from the patient surface along its central axis.
struct PlanSpec {
  std::array<float, 2> beam_angles_deg{90.0f, 270.0f};
  float prescription_cgy = 200.0f;
  float mu_mv_per_mm = 0.0025f;
  std::array<int, 3> isocenter{0, 0, 0};

  void validate() const;  // opposed axis-aligned beams, positive prescription
};

struct DoseReport {
  double dose_truth_cgy = 0.0;
  double dose_recon_cgy = 0.0;
  double percent_error = 0.0;
};

// Isocenter placement: the spine centroid rounded to the nearest voxel, or
// the spine voxel closest to the centroid when the rounded point falls
// outside the spine. No spine voxels is an error.
std::array<int, 3> place_isocenter(const LabelVolume& labels);

// Dose at the isocenter voxel in cGy. The radiological path length of each
// beam is the trapezoid integral of max(0, 1 + hu/1000) along the lattice
// column through the isocenter, from the outermost voxel center on the
// beam's entry side to the isocenter center.
double isocenter_dose(const Volume& hu, const PlanSpec& plan);

// Plans on the ground truth (isocenter from its labels), computes the dose
// on both volumes at that same point, and reports the relative error.
DoseReport compare_dose(const LabeledVolume& truth, const Volume& recon_hu,
                        PlanSpec plan);

struct DoseRow {
  std::string case_id;
  int views = 0;
  float lambda = 0.0f;
  DoseReport report;
};

// dose.csv rows: case,views,lambda,dose_truth,dose_recon,percent_error
void write_dose_csv(const std::vector<DoseRow>& rows, const std::string& path);

}  // namespace s2ct
