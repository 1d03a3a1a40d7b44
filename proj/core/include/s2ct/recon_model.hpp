#pragma once

#include <array>
#include <string>
#include <vector>

#include "s2ct/drr.hpp"
#include "s2ct/geometry.hpp"
#include "s2ct/params.hpp"
#include "s2ct/tensor.hpp"
#include "s2ct/volume.hpp"

namespace s2ct {

struct ReconConfig {
  int feature_channels = 32;  // c, per-pixel feature width of the view encoder
  int fourier_m = 32;         // frequency count; the encoding has 2m entries
  float fourier_sigma = 3.0f;
  int width = 128;            // MLP width
  int detector_px = 32;
  std::array<int, 3> unet_channels{16, 32, 64};

  void validate() const;
};

// Conditional neural field over the normalized cube: a 2D U-Net encodes each
// planar view into pixel-aligned features, a per-view MLP embeds a query
// point together with the feature sampled where that point projects, the
// embeddings are mean-fused across views, and a second MLP decodes the fused
// embedding to a normalized intensity.
class ReconModel {
 public:
  ReconModel(const ReconConfig& cfg, uint64_t seed);

  const ReconConfig& config() const { return cfg_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  // [1,d,d] view (normalized line integrals) -> [c,d,d] features.
  Tensor extract_features(const Tensor& view) const;

  // [sin(2 pi B p); cos(2 pi B p)] per point, shape [N,2m]. The frequency
  // matrix is frozen, so the encoding is plain data with no gradient path.
  Tensor fourier_encode(const std::vector<Vec3>& points) const;

  // Fractional detector pixel coordinates [N,2] (row, col) of each point
  // under g. Not differentiated; the geometry is fixed per view.
  Tensor project_points(const std::vector<Vec3>& points, const ViewGeometry& g) const;

  // One view's embedding [N,width] from the point encoding, the view's
  // feature image, and the point-to-pixel map.
  Tensor per_view_embed(const Tensor& gamma, const Tensor& features, const Tensor& pixels) const;

  // Mean-fuse per-view embeddings and decode to intensities [N,1] in [0,1].
  Tensor fuse_and_decode(const std::vector<Tensor>& r_list) const;

  // Full forward pass: K views with their geometries -> [N,1] intensities.
  Tensor forward(const std::vector<Tensor>& views, const std::vector<ViewGeometry>& geometries,
                 const std::vector<Vec3>& points) const;

  // Normalized intensities at every voxel center as a [1,dim,dim,dim]
  // tensor, decoded from the given per-view feature images in fixed-size
  // point blocks (chunk is validated but never changes the result).
  // Recorded on the active tape, so gradients reach the features and every
  // weight behind them.
  Tensor decode_volume(const std::vector<Tensor>& features,
                       const std::vector<ViewGeometry>& geometries, int dim,
                       int chunk = 4096) const;

  // Evaluate every voxel center and denormalize to HU. Features are
  // extracted once per view. Decoding batches points at a fixed internal
  // granularity; chunk is validated but never changes the result.
  Volume reconstruct_volume(const std::vector<DRRImage>& views,
                            const std::vector<ViewGeometry>& geometries, int dim, float spacing_mm,
                            int chunk = 4096) const;

 private:
  explicit ReconModel(const ReconConfig& cfg);  // registers zeroed parameters
  void init_weights(uint64_t seed);
  Tensor linear(const std::string& name, const Tensor& x) const;
  Tensor residual_block(const std::string& name, const Tensor& x) const;
  Tensor conv_sine(const std::string& name, const Tensor& x) const;

  ReconConfig cfg_;
  ParameterStore params_;

  friend ReconModel load_recon_model(const std::string& prefix);
};

// Turns a rendered view's normalized channel into the [1,d,d] network input.
Tensor view_to_tensor(const DRRImage& img);

// prefix.rckp holds the weights (frequency matrix included); prefix.json
// holds the hyperparameters, so a checkpoint reconstructs its own model.
void save_recon_model(const ReconModel& model, const std::string& prefix);
ReconModel load_recon_model(const std::string& prefix);

}  // namespace s2ct
