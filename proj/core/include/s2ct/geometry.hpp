#pragma once

#include <string>

namespace s2ct {

// Coordinate conventions used throughout:
//   x: patient left-right (+x = left), y: anterior-posterior (+y = posterior),
//   z: superior-inferior. Volume points live in the normalized cube [-1,1]^3.
// The gantry rotates about z only. For angle theta (degrees):
//   ray direction  d(theta) = (cos t, sin t, 0)
//   detector axes  u(theta) = (-sin t, cos t, 0),  v = (0, 0, 1)
// theta=0 is the lateral view, theta=90 the frontal one.

struct Vec3 {
  float x = 0, y = 0, z = 0;
};

struct Vec2 {
  float u = 0, v = 0;
};

enum class Beam { Parallel, Cone };

struct ViewGeometry {
  Beam beam = Beam::Parallel;
  float theta_deg = 0.0f;  // normalized to [0, 360)
  int detector_px = 32;
  // Cone only: source and detector distances from the isocenter, in
  // normalized units. The source sits at -R_s * d(theta).
  float source_dist = 3.0f;
  float detector_dist = 1.0f;

  // Throws DataError when the fields are inconsistent (cone source or
  // detector inside the unit volume, detector_px < 2).
  void validate() const;
};

float normalize_angle_deg(float deg);

Vec3 ray_direction(float theta_deg);
Vec3 detector_axis_u(float theta_deg);

// Projects a normalized point to continuous detector coordinates in
// [-1,1]^2 (for in-volume points). Cone beams intersect the ray
// source -> p with the detector plane {x . d = R_d} and scale by
// R_s/(R_s+R_d) so the isocenter plane maps to [-1,1]^2 exactly.
Vec2 project(const Vec3& p, const ViewGeometry& g);

// col = (u+1)/2 * (d-1), row = (1-v)/2 * (d-1); v points up so row 0 is the
// top of the image.
void detector_to_pixel(const Vec2& uv, int detector_px, float& row, float& col);

// Voxel centers span [-1,1] inclusive: x = 2i/(dim-1) - 1.
Vec3 voxel_to_normalized(int i, int j, int k, int dim);
// Continuous inverse of the above, i = (x+1)/2 * (dim-1).
void normalized_to_voxel(const Vec3& p, int dim, float& i, float& j, float& k);

}  // namespace s2ct
