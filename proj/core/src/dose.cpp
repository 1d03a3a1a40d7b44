#include "s2ct/dose.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>

#include "s2ct/error.hpp"
#include "s2ct/geometry.hpp"

namespace s2ct {

namespace {

// Water-equivalent density relative to water; air floors at zero.
double relative_density(float hu) {
  double d = 1.0 + static_cast<double>(hu) / 1000.0;
  return d > 0.0 ? d : 0.0;
}

struct BeamPath {
  int axis;  // 0 marches along x, 1 along y
  int entry;  // index of the outermost voxel center on the entry side
  int step;   // +1 or -1 toward the isocenter
};

// A beam at angle a enters from the side its source sits on: the source is
// at -d(a), so 90 degrees enters anterior (low y) and 270 posterior.
BeamPath beam_path(float angle_deg, const std::array<int, 3>& dims) {
  float a = normalize_angle_deg(angle_deg);
  auto near = [a](float target) { return std::fabs(a - target) < 1e-3f; };
  if (near(0.0f)) return {0, 0, +1};
  if (near(90.0f)) return {1, 0, +1};
  if (near(180.0f)) return {0, dims[0] - 1, -1};
  if (near(270.0f)) return {1, dims[1] - 1, -1};
  throw DataError("dose: beams must be axis-aligned (0, 90, 180 or 270 degrees)");
}

double beam_rpl_mm(const Volume& hu, const PlanSpec& plan, float angle_deg) {
  const auto iso = plan.isocenter;
  BeamPath path = beam_path(angle_deg, hu.dims);
  int n = hu.dims[path.axis];
  if (n < 2) return 0.0;
  // Voxel centers span the full cube, so adjacent centers sit
  // dim*spacing/(dim-1) mm apart and the first knot lies on the surface.
  double gap = static_cast<double>(n) * hu.spacing_mm[path.axis] / (n - 1);
  auto density_at = [&](int j) {
    int x = path.axis == 0 ? j : iso[0];
    int y = path.axis == 1 ? j : iso[1];
    return relative_density(hu.at(x, y, iso[2]));
  };
  double rpl = 0.0;
  for (int j = path.entry; j != iso[path.axis]; j += path.step) {
    rpl += 0.5 * gap * (density_at(j) + density_at(j + path.step));
  }
  return rpl;
}

}  // namespace

void PlanSpec::validate() const {
  if (!(prescription_cgy > 0.0f)) throw DataError("plan: prescription must be positive");
  if (!(mu_mv_per_mm >= 0.0f)) throw DataError("plan: attenuation must be non-negative");
  float a0 = normalize_angle_deg(beam_angles_deg[0]);
  float a1 = normalize_angle_deg(beam_angles_deg[1]);
  float diff = std::fabs(a1 - a0);
  if (std::fabs(diff - 180.0f) > 1e-3f) {
    throw DataError("plan: the two beams must be opposed (180 degrees apart)");
  }
}

std::array<int, 3> place_isocenter(const LabelVolume& labels) {
  double cx = 0.0, cy = 0.0, cz = 0.0;
  int64_t count = 0;
  for (int z = 0; z < labels.dims[2]; ++z) {
    for (int y = 0; y < labels.dims[1]; ++y) {
      for (int x = 0; x < labels.dims[0]; ++x) {
        if (labels.at(x, y, z) != kClassSpine) continue;
        cx += x;
        cy += y;
        cz += z;
        ++count;
      }
    }
  }
  if (count == 0) throw DataError("place_isocenter: no spine voxels in the label volume");
  cx /= count;
  cy /= count;
  cz /= count;
  std::array<int, 3> rounded{static_cast<int>(std::lround(cx)),
                             static_cast<int>(std::lround(cy)),
                             static_cast<int>(std::lround(cz))};
  if (labels.at(rounded[0], rounded[1], rounded[2]) == kClassSpine) return rounded;

  // Concavity can push the rounded centroid off the structure; fall back to
  // the nearest spine voxel, breaking ties toward the lowest index.
  std::array<int, 3> best{0, 0, 0};
  double best_d = -1.0;
  for (int z = 0; z < labels.dims[2]; ++z) {
    for (int y = 0; y < labels.dims[1]; ++y) {
      for (int x = 0; x < labels.dims[0]; ++x) {
        if (labels.at(x, y, z) != kClassSpine) continue;
        double dx = (x - cx) * labels.spacing_mm[0];
        double dy = (y - cy) * labels.spacing_mm[1];
        double dz = (z - cz) * labels.spacing_mm[2];
        double d = dx * dx + dy * dy + dz * dz;
        if (best_d < 0.0 || d < best_d) {
          best_d = d;
          best = {x, y, z};
        }
      }
    }
  }
  return best;
}

double isocenter_dose(const Volume& hu, const PlanSpec& plan) {
  plan.validate();
  if (hu.numel() == 0) throw DataError("isocenter_dose: empty volume");
  for (int axis = 0; axis < 3; ++axis) {
    if (plan.isocenter[axis] < 0 || plan.isocenter[axis] >= hu.dims[axis]) {
      throw DataError("isocenter_dose: isocenter outside the volume");
    }
  }
  double dose = 0.0;
  for (float angle : plan.beam_angles_deg) {
    double rpl = beam_rpl_mm(hu, plan, angle);
    dose += 0.5 * plan.prescription_cgy * std::exp(-plan.mu_mv_per_mm * rpl);
  }
  return dose;
}

DoseReport compare_dose(const LabeledVolume& truth, const Volume& recon_hu,
                        PlanSpec plan) {
  if (truth.hu.dims != recon_hu.dims) {
    throw DataError("compare_dose: volumes have different dimensions");
  }
  plan.isocenter = place_isocenter(truth.labels);
  DoseReport report;
  report.dose_truth_cgy = isocenter_dose(truth.hu, plan);
  report.dose_recon_cgy = isocenter_dose(recon_hu, plan);
  report.percent_error =
      100.0 * std::fabs(report.dose_recon_cgy - report.dose_truth_cgy) / report.dose_truth_cgy;
  return report;
}

void write_dose_csv(const std::vector<DoseRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("write_dose_csv: cannot open " + path);
  out << "case,views,lambda,dose_truth,dose_recon,percent_error\n";
  for (const DoseRow& r : rows) {
    out << r.case_id << ',' << r.views << ',' << r.lambda << ',' << r.report.dose_truth_cgy
        << ',' << r.report.dose_recon_cgy << ',' << r.report.percent_error << "\n";
  }
  if (!out.flush()) throw DataError("write_dose_csv: write failed for " + path);
}

}  // namespace s2ct
