#include "s2ct/drr.hpp"

#include <algorithm>
#include <cmath>

#include "s2ct/error.hpp"
#include "s2ct/rvol.hpp"
#include "s2ct/threads.hpp"

namespace s2ct {

Volume hu_to_mu(const Volume& hu, float mu_water) {
  Volume mu = hu;
  for (float& v : mu.data) v = std::max(0.0f, mu_water * (1.0f + v / 1000.0f));
  return mu;
}

namespace {

// Clips the line o + t*dir against the normalized cube [-1,1]^3.
bool clip_cube(const Vec3& o, const Vec3& dir, float& t0, float& t1) {
  t0 = -3.4e38f;
  t1 = 3.4e38f;
  const float oa[3] = {o.x, o.y, o.z};
  const float da[3] = {dir.x, dir.y, dir.z};
  for (int a = 0; a < 3; ++a) {
    if (std::fabs(da[a]) < 1e-9f) {
      if (std::fabs(oa[a]) > 1.0f) return false;
      continue;
    }
    float ta = (-1.0f - oa[a]) / da[a];
    float tb = (1.0f - oa[a]) / da[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t0 < t1;
}

}  // namespace

DRRImage render_drr(const Volume& mu, const ViewGeometry& g, float step_vox) {
  g.validate();
  if (!(step_vox > 0.0f) || step_vox > 1.0f)
    throw DataError("render_drr: step_vox must be in (0, 1], got " + std::to_string(step_vox));
  const int d = g.detector_px;
  DRRImage img;
  img.d = d;
  img.line_integral.assign(static_cast<size_t>(d) * d, 0.0f);
  img.intensity.assign(static_cast<size_t>(d) * d, 1.0f);
  img.normalized.assign(static_cast<size_t>(d) * d, 0.0f);

  const Vec3 dir0 = ray_direction(g.theta_deg);
  const Vec3 uax = detector_axis_u(g.theta_deg);
  const float mmx = mm_per_normalized_unit(mu, 0);
  const float mmy = mm_per_normalized_unit(mu, 1);
  const float mmz = mm_per_normalized_unit(mu, 2);
  const float step_mm =
      step_vox * std::min({mu.spacing_mm[0], mu.spacing_mm[1], mu.spacing_mm[2]});
  const float span = static_cast<float>(d - 1);
  const bool cone = g.beam == Beam::Cone;
  const float cone_scale = g.source_dist / (g.source_dist + g.detector_dist);

#pragma omp parallel for schedule(static) num_threads(worker_threads())
  for (int row = 0; row < d; ++row) {
    for (int col = 0; col < d; ++col) {
      // Invert detector_to_pixel for this pixel's detector coordinates.
      const float u = 2.0f * static_cast<float>(col) / span - 1.0f;
      const float v = 1.0f - 2.0f * static_cast<float>(row) / span;
      Vec3 origin, dir;
      float t_min_clip = -3.4e38f;
      if (!cone) {
        origin = {u * uax.x + v * 0.0f, u * uax.y, v};
        dir = dir0;
      } else {
        const Vec3 source{-g.source_dist * dir0.x, -g.source_dist * dir0.y, 0.0f};
        // Detector-plane point whose scaled coordinates are (u, v).
        const Vec3 det{g.detector_dist * dir0.x + (u / cone_scale) * uax.x,
                       g.detector_dist * dir0.y + (u / cone_scale) * uax.y, v / cone_scale};
        Vec3 delta{det.x - source.x, det.y - source.y, det.z - source.z};
        const float len =
            std::sqrt(delta.x * delta.x + delta.y * delta.y + delta.z * delta.z);
        dir = {delta.x / len, delta.y / len, delta.z / len};
        origin = source;
        t_min_clip = 0.0f;
      }
      float t0, t1;
      if (!clip_cube(origin, dir, t0, t1)) continue;
      t0 = std::max(t0, t_min_clip);
      if (!(t1 > t0)) continue;
      const float mm_per_t = std::sqrt(dir.x * mmx * dir.x * mmx + dir.y * mmy * dir.y * mmy +
                                       dir.z * mmz * dir.z * mmz);
      const float len_mm = (t1 - t0) * mm_per_t;
      const int n = std::max(1, static_cast<int>(std::ceil(len_mm / step_mm)));
      const float dt = (t1 - t0) / static_cast<float>(n);
      const float dl_mm = len_mm / static_cast<float>(n);
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        const float t = t0 + (static_cast<float>(i) + 0.5f) * dt;
        const Vec3 p{origin.x + t * dir.x, origin.y + t * dir.y, origin.z + t * dir.z};
        acc += static_cast<double>(sample_trilinear(mu, p)) * dl_mm;
      }
      img.line_integral[static_cast<size_t>(row) * d + col] = static_cast<float>(acc);
    }
  }

  float max_li = 0.0f;
  for (float v : img.line_integral) max_li = std::max(max_li, v);
  for (size_t i = 0; i < img.line_integral.size(); ++i) {
    img.intensity[i] = std::exp(-img.line_integral[i]);
    img.normalized[i] = max_li > 0.0f ? img.line_integral[i] / max_li : 0.0f;
  }
  return img;
}

std::vector<DRRImage> render_views(const Volume& mu, const ViewGeometry& g_template,
                                   const std::vector<float>& angles_deg, float step_vox) {
  if (angles_deg.empty()) throw DataError("render_views: no angles given");
  std::vector<DRRImage> out;
  out.reserve(angles_deg.size());
  for (float a : angles_deg) {
    ViewGeometry g = g_template;
    g.theta_deg = normalize_angle_deg(a);
    out.push_back(render_drr(mu, g, step_vox));
  }
  return out;
}

void write_drr_rimg(const DRRImage& img, const std::string& path) {
  PlanarImage p;
  p.rows = img.d;
  p.cols = img.d;
  p.channels = {img.normalized, img.line_integral};
  write_rimg(p, path);
}

DRRImage read_drr_rimg(const std::string& path) {
  PlanarImage p = read_rimg(path);
  if (p.rows != p.cols) throw DataError("rimg: DRR image must be square: " + path);
  if (p.channels.size() != 2)
    throw DataError("rimg: DRR image needs normalized + line_integral channels: " + path);
  DRRImage img;
  img.d = p.rows;
  img.normalized = p.channels[0];
  img.line_integral = p.channels[1];
  img.intensity.resize(img.line_integral.size());
  for (size_t i = 0; i < img.intensity.size(); ++i)
    img.intensity[i] = std::exp(-img.line_integral[i]);
  return img;
}

}  // namespace s2ct
