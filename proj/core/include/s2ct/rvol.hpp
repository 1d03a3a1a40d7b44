#pragma once

#include <string>
#include <vector>

#include "s2ct/volume.hpp"

namespace s2ct {

// RVOL volume container: magic `RVOL`, version u32 = 1, kind u8, dims
// u32 x 3, spacing f32 x 3 (mm), then the payload little-endian, row-major
// with x fastest. Kinds: 0 = f32 HU, 1 = u8 labels, 2 = f32 normalized
// intensity, 3 = f32 attenuation.
enum class RvolKind : uint8_t {
  Hu = 0,
  Labels = 1,
  Normalized = 2,
  Mu = 3,
};

void write_rvol_hu(const Volume& v, const std::string& path);
void write_rvol_normalized(const Volume& v, const std::string& path);
void write_rvol_mu(const Volume& v, const std::string& path);
void write_rvol_labels(const LabelVolume& v, const std::string& path);

RvolKind peek_rvol_kind(const std::string& path);
// Readers check the expected kind so a labels file cannot masquerade as HU.
Volume read_rvol_f32(const std::string& path, RvolKind expected);
LabelVolume read_rvol_labels(const std::string& path);

// RIMG planar image container: magic `RIMG`, version u32 = 1, channels u8,
// dims u32 x 2 (rows, cols), then per-channel f32 payloads.
struct PlanarImage {
  int rows = 0;
  int cols = 0;
  std::vector<std::vector<float>> channels;
};

void write_rimg(const PlanarImage& img, const std::string& path);
PlanarImage read_rimg(const std::string& path);

// Plain-text PGM (P2), 8-bit, for visual inspection; values are mapped from
// [lo, hi] to 0..255.
void write_pgm(const std::vector<float>& values, int rows, int cols, float lo, float hi,
               const std::string& path);

}  // namespace s2ct
