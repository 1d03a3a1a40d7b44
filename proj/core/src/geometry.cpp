#include "s2ct/geometry.hpp"

#include <cmath>

#include "s2ct/error.hpp"

namespace s2ct {

namespace {
constexpr float kDegToRad = 3.14159265358979323846f / 180.0f;
}

float normalize_angle_deg(float deg) {
  float a = std::fmod(deg, 360.0f);
  if (a < 0.0f) a += 360.0f;
  return a;
}

void ViewGeometry::validate() const {
  if (detector_px < 2)
    throw DataError("view geometry: detector_px must be >= 2, got " +
                    std::to_string(detector_px));
  if (beam == Beam::Cone) {
    if (!(source_dist > 1.0f))
      throw DataError("view geometry: cone source_dist must be > 1 (outside the volume), got " +
                      std::to_string(source_dist));
    if (!(detector_dist >= 1.0f))
      throw DataError("view geometry: cone detector_dist must be >= 1, got " +
                      std::to_string(detector_dist));
  }
}

Vec3 ray_direction(float theta_deg) {
  const float t = theta_deg * kDegToRad;
  return {std::cos(t), std::sin(t), 0.0f};
}

Vec3 detector_axis_u(float theta_deg) {
  const float t = theta_deg * kDegToRad;
  return {-std::sin(t), std::cos(t), 0.0f};
}

Vec2 project(const Vec3& p, const ViewGeometry& g) {
  const Vec3 d = ray_direction(g.theta_deg);
  const Vec3 u = detector_axis_u(g.theta_deg);
  const float pu = p.x * u.x + p.y * u.y;
  if (g.beam == Beam::Parallel) return {pu, p.z};

  // Cone: source S = -R_s * d; intersect S + t*(p - S) with {x . d = R_d}.
  const float pd = p.x * d.x + p.y * d.y;
  const float denom = pd + g.source_dist;  // (p - S) . d
  if (denom <= 1e-6f)
    throw DataError("cone projection: point at or behind the source");
  const float t = (g.source_dist + g.detector_dist) / denom;
  const float scale = g.source_dist / (g.source_dist + g.detector_dist);
  // S . u = 0 and S.z = 0, so the intersection's detector coordinates are
  // t * (p . u) and t * p.z.
  return {scale * t * pu, scale * t * p.z};
}

void detector_to_pixel(const Vec2& uv, int detector_px, float& row, float& col) {
  const float span = static_cast<float>(detector_px - 1);
  col = (uv.u + 1.0f) * 0.5f * span;
  row = (1.0f - uv.v) * 0.5f * span;
}

Vec3 voxel_to_normalized(int i, int j, int k, int dim) {
  if (dim < 2) throw DataError("voxel_to_normalized: dim must be >= 2");
  if (i < 0 || i >= dim || j < 0 || j >= dim || k < 0 || k >= dim)
    throw DataError("voxel_to_normalized: index (" + std::to_string(i) + "," + std::to_string(j) +
                    "," + std::to_string(k) + ") out of range for dim " + std::to_string(dim));
  const float s = 2.0f / static_cast<float>(dim - 1);
  return {static_cast<float>(i) * s - 1.0f, static_cast<float>(j) * s - 1.0f,
          static_cast<float>(k) * s - 1.0f};
}

void normalized_to_voxel(const Vec3& p, int dim, float& i, float& j, float& k) {
  const float s = static_cast<float>(dim - 1) * 0.5f;
  i = (p.x + 1.0f) * s;
  j = (p.y + 1.0f) * s;
  k = (p.z + 1.0f) * s;
}

}  // namespace s2ct
