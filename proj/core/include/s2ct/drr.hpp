#pragma once

#include <string>
#include <vector>

#include "s2ct/geometry.hpp"
#include "s2ct/volume.hpp"

namespace s2ct {

constexpr float kMuWaterPerMm = 0.0227f;  // linear attenuation of water, mm^-1

// mu = mu_water * (1 + hu/1000), clamped to >= 0.
Volume hu_to_mu(const Volume& hu, float mu_water = kMuWaterPerMm);

struct DRRImage {
  int d = 0;  // detector pixels per side
  std::vector<float> line_integral;  // integral of mu dl, dimensionless
  std::vector<float> intensity;      // exp(-line_integral)
  std::vector<float> normalized;     // line_integral / image max (zeros if max 0)
};

// Marches each detector pixel's ray across the normalized cube, sampling mu
// by trilinear interpolation at uniform steps of step_vox * voxel size
// (physical lengths in mm). Rays that miss the cube get line_integral 0.
DRRImage render_drr(const Volume& mu, const ViewGeometry& g, float step_vox = 0.25f);

// One DRR per angle under a shared geometry template.
std::vector<DRRImage> render_views(const Volume& mu, const ViewGeometry& g_template,
                                   const std::vector<float>& angles_deg,
                                   float step_vox = 0.25f);

// RIMG persistence: channel 0 = normalized, channel 1 = line_integral.
void write_drr_rimg(const DRRImage& img, const std::string& path);
DRRImage read_drr_rimg(const std::string& path);

}  // namespace s2ct
