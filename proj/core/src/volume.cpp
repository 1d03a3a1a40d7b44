#include "s2ct/volume.hpp"

#include <algorithm>
#include <cmath>

#include "s2ct/error.hpp"

namespace s2ct {

Volume Volume::filled(int dim, float value, float spacing) {
  Volume v;
  v.dims = {dim, dim, dim};
  v.spacing_mm = {spacing, spacing, spacing};
  v.data.assign(static_cast<size_t>(v.numel()), value);
  return v;
}

const char* class_name(int id) {
  switch (id) {
    case kClassAir: return "air";
    case kClassBody: return "body";
    case kClassLeftLung: return "left_lung";
    case kClassRightLung: return "right_lung";
    case kClassHeart: return "heart";
    case kClassSpine: return "spine";
    case kClassNodule: return "nodule";
    default: return "unknown";
  }
}

float mm_per_normalized_unit(const Volume& v, int axis) {
  return static_cast<float>(v.dims[axis]) * v.spacing_mm[axis] * 0.5f;
}

float sample_trilinear(const Volume& v, const Vec3& p) {
  const int nx = v.dims[0], ny = v.dims[1], nz = v.dims[2];
  float fx, fy, fz;
  // Continuous voxel coordinates; centers span [-1,1].
  fx = (p.x + 1.0f) * 0.5f * static_cast<float>(nx - 1);
  fy = (p.y + 1.0f) * 0.5f * static_cast<float>(ny - 1);
  fz = (p.z + 1.0f) * 0.5f * static_cast<float>(nz - 1);
  fx = std::clamp(fx, 0.0f, static_cast<float>(nx - 1));
  fy = std::clamp(fy, 0.0f, static_cast<float>(ny - 1));
  fz = std::clamp(fz, 0.0f, static_cast<float>(nz - 1));
  const int x0 = std::min(static_cast<int>(fx), nx >= 2 ? nx - 2 : 0);
  const int y0 = std::min(static_cast<int>(fy), ny >= 2 ? ny - 2 : 0);
  const int z0 = std::min(static_cast<int>(fz), nz >= 2 ? nz - 2 : 0);
  const float tx = fx - static_cast<float>(x0);
  const float ty = fy - static_cast<float>(y0);
  const float tz = fz - static_cast<float>(z0);
  const int x1 = std::min(x0 + 1, nx - 1);
  const int y1 = std::min(y0 + 1, ny - 1);
  const int z1 = std::min(z0 + 1, nz - 1);
  const float c000 = v.at(x0, y0, z0), c100 = v.at(x1, y0, z0);
  const float c010 = v.at(x0, y1, z0), c110 = v.at(x1, y1, z0);
  const float c001 = v.at(x0, y0, z1), c101 = v.at(x1, y0, z1);
  const float c011 = v.at(x0, y1, z1), c111 = v.at(x1, y1, z1);
  const float c00 = c000 + (c100 - c000) * tx;
  const float c01 = c001 + (c101 - c001) * tx;
  const float c10 = c010 + (c110 - c010) * tx;
  const float c11 = c011 + (c111 - c011) * tx;
  const float c0 = c00 + (c10 - c00) * ty;
  const float c1 = c01 + (c11 - c01) * ty;
  return c0 + (c1 - c0) * tz;
}

float hu_to_normalized(float hu) {
  return std::clamp((hu + 1000.0f) / 2000.0f, 0.0f, 1.0f);
}

float normalized_to_hu(float y) { return y * 2000.0f - 1000.0f; }

std::vector<float> volume_to_normalized(const Volume& hu) {
  std::vector<float> out(hu.data.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = hu_to_normalized(hu.data[i]);
  return out;
}

Volume normalized_to_volume(const std::vector<float>& y, const std::array<int, 3>& dims,
                            const std::array<float, 3>& spacing_mm) {
  Volume v;
  v.dims = dims;
  v.spacing_mm = spacing_mm;
  if (static_cast<int64_t>(y.size()) != v.numel())
    throw DataError("normalized_to_volume: value count does not match dims");
  v.data.resize(y.size());
  for (size_t i = 0; i < y.size(); ++i) v.data[i] = normalized_to_hu(y[i]);
  return v;
}

}  // namespace s2ct
