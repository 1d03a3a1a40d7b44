#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2ct/volume.hpp"

namespace s2ct {

// All organ geometry is expressed in the normalized cube [-1,1]^3.
// +x = patient left, +y = posterior, +z = superior.

struct EllipsoidSpec {
  Vec3 center;
  Vec3 semi;
  float hu = 0.0f;
  float center_jitter = 0.03f;  // uniform +- per axis
  float semi_scale_min = 0.92f;
  float semi_scale_max = 1.08f;
};

// Vertical elliptic cylinder: |z - 0| <= half_z, ellipse in x-y.
struct CylinderSpec {
  float cx = 0.0f, cy = 0.0f;
  float sx = 0.0f, sy = 0.0f;
  float half_z = 0.0f;
  float hu = 0.0f;
  float center_jitter = 0.0f;
  float semi_scale_min = 1.0f;
  float semi_scale_max = 1.0f;
};

struct NoduleSpec {
  float r_min = 0.06f;
  float r_max = 0.10f;
  float hu = 30.0f;
  float probability = 0.5f;
};

struct PhantomSpec {
  uint64_t seed = 0;
  int dim = 32;
  float spacing_mm = 4.0f;
  bool smooth = true;  // one-voxel Gaussian (sigma 0.5) on hu only

  CylinderSpec body{0.0f, 0.0f, 0.84f, 0.70f, 0.90f, 40.0f, 0.0f, 0.97f, 1.03f};
  EllipsoidSpec left_lung{{0.38f, -0.06f, 0.04f}, {0.25f, 0.34f, 0.48f}, -800.0f};
  EllipsoidSpec right_lung{{-0.38f, -0.06f, 0.04f}, {0.25f, 0.34f, 0.48f}, -800.0f};
  EllipsoidSpec heart{{0.14f, -0.20f, -0.20f}, {0.22f, 0.20f, 0.24f}, 40.0f};
  CylinderSpec spine{0.0f, 0.44f, 0.13f, 0.13f, 0.78f, 700.0f, 0.03f, 0.92f, 1.08f};
  NoduleSpec nodule;

  // Rejects ranges that could place any structure outside the body envelope
  // (or a nodule outside its lung), checking worst-case jitter and scale.
  void validate() const;
};

// Deterministic: the same spec yields a bit-identical volume pair.
LabeledVolume generate_phantom(const PhantomSpec& spec);

// Phantom i uses seed base_seed + i.
std::vector<LabeledVolume> generate_cases(int n, uint64_t base_seed, const PhantomSpec& spec);

// Writes case_####.hu.rvol / case_####.labels.rvol under out_dir and returns
// the case ids ("case_0000", ...).
std::vector<std::string> generate_dataset(int n, uint64_t base_seed, const PhantomSpec& spec,
                                          const std::string& out_dir);

std::string case_id(int index);

}  // namespace s2ct
