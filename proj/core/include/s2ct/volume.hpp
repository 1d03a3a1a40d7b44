#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "s2ct/geometry.hpp"

namespace s2ct {

// Voxel grids are cubic with x fastest in memory: idx = x + nx*(y + ny*z).
// An axial slice is a fixed z.

struct Volume {
  std::array<int, 3> dims{0, 0, 0};
  std::array<float, 3> spacing_mm{1.0f, 1.0f, 1.0f};
  std::vector<float> data;

  static Volume filled(int dim, float value, float spacing = 1.0f);

  int64_t numel() const { return static_cast<int64_t>(dims[0]) * dims[1] * dims[2]; }
  int64_t index(int x, int y, int z) const {
    return x + static_cast<int64_t>(dims[0]) * (y + static_cast<int64_t>(dims[1]) * z);
  }
  float& at(int x, int y, int z) { return data[index(x, y, z)]; }
  float at(int x, int y, int z) const { return data[index(x, y, z)]; }
  bool same_grid(const Volume& o) const { return dims == o.dims; }
};

struct LabelVolume {
  std::array<int, 3> dims{0, 0, 0};
  std::array<float, 3> spacing_mm{1.0f, 1.0f, 1.0f};
  std::vector<uint8_t> data;

  int64_t numel() const { return static_cast<int64_t>(dims[0]) * dims[1] * dims[2]; }
  int64_t index(int x, int y, int z) const {
    return x + static_cast<int64_t>(dims[0]) * (y + static_cast<int64_t>(dims[1]) * z);
  }
  uint8_t& at(int x, int y, int z) { return data[index(x, y, z)]; }
  uint8_t at(int x, int y, int z) const { return data[index(x, y, z)]; }
};

// Phantom class ids.
enum : uint8_t {
  kClassAir = 0,
  kClassBody = 1,
  kClassLeftLung = 2,
  kClassRightLung = 3,
  kClassHeart = 4,
  kClassSpine = 5,
  kClassNodule = 6,
};
constexpr int kNumClasses = 7;
const char* class_name(int id);

struct LabeledVolume {
  Volume hu;
  LabelVolume labels;
};

// Millimeters per normalized unit: the cube [-1,1]^3 spans dim*spacing mm
// per side, so one normalized unit is dim*spacing/2 mm.
float mm_per_normalized_unit(const Volume& v, int axis);

// Trilinear interpolation at a normalized point, clamping to the border.
float sample_trilinear(const Volume& v, const Vec3& p);

// hu -> [0,1] with the fixed window [-1000, 1000], clamped.
float hu_to_normalized(float hu);
float normalized_to_hu(float y);

// Whole-volume conversion helpers.
std::vector<float> volume_to_normalized(const Volume& hu);
Volume normalized_to_volume(const std::vector<float>& y, const std::array<int, 3>& dims,
                            const std::array<float, 3>& spacing_mm);

}  // namespace s2ct
