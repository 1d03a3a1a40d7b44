#include "s2ct/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "s2ct/error.hpp"
#include "s2ct/rvol.hpp"
#include "s2ct/threads.hpp"

namespace s2ct {

namespace {

struct Ellipsoid {
  Vec3 c;
  Vec3 s;
  bool contains(const Vec3& p) const {
    const float dx = (p.x - c.x) / s.x;
    const float dy = (p.y - c.y) / s.y;
    const float dz = (p.z - c.z) / s.z;
    return dx * dx + dy * dy + dz * dz <= 1.0f;
  }
};

struct Cylinder {
  float cx, cy, sx, sy, half_z;
  bool contains(const Vec3& p) const {
    if (std::fabs(p.z) > half_z) return false;
    const float dx = (p.x - cx) / sx;
    const float dy = (p.y - cy) / sy;
    return dx * dx + dy * dy <= 1.0f;
  }
};

struct Sphere {
  Vec3 c;
  float r;
  bool present = false;
  bool contains(const Vec3& p) const {
    if (!present) return false;
    const float dx = p.x - c.x, dy = p.y - c.y, dz = p.z - c.z;
    return dx * dx + dy * dy + dz * dz <= r * r;
  }
};

// Worst-case check that a jittered, scaled ellipsoid stays strictly inside
// the smallest body cylinder: sample the organ's x-y outline and check each
// point against a slightly shrunken body ellipse.
void check_inside_body(const EllipsoidSpec& organ, const CylinderSpec& body, const char* name) {
  const float bx = body.sx * body.semi_scale_min * 0.995f;
  const float by = body.sy * body.semi_scale_min * 0.995f;
  const float sx = organ.semi.x * organ.semi_scale_max;
  const float sy = organ.semi.y * organ.semi_scale_max;
  const float sz = organ.semi.z * organ.semi_scale_max;
  const float cx = std::fabs(organ.center.x) + organ.center_jitter;
  const float cy = std::fabs(organ.center.y) + organ.center_jitter;
  const float cz = std::fabs(organ.center.z) + organ.center_jitter;
  if (cz + sz >= body.half_z)
    throw DataError(std::string("phantom spec: ") + name + " can exceed the body extent in z");
  for (int i = 0; i < 256; ++i) {
    const float phi = static_cast<float>(i) * 6.283185307f / 256.0f;
    // Worst case: center pushed outward along both axes.
    const float x = cx + sx * std::cos(phi);
    const float y = cy + sy * std::sin(phi);
    if ((x / bx) * (x / bx) + (y / by) * (y / by) >= 1.0f)
      throw DataError(std::string("phantom spec: ") + name +
                      " can exceed the body envelope in the axial plane");
  }
}

}  // namespace

void PhantomSpec::validate() const {
  if (dim < 16) throw DataError("phantom spec: dim must be >= 16, got " + std::to_string(dim));
  if (spacing_mm <= 0.0f) throw DataError("phantom spec: spacing must be positive");
  if (body.sx <= 0 || body.sy <= 0 || body.half_z <= 0 || body.half_z >= 1.0f)
    throw DataError("phantom spec: body extents out of range");
  check_inside_body(left_lung, body, "left lung");
  check_inside_body(right_lung, body, "right lung");
  check_inside_body(heart, body, "heart");

  // Spine worst case as a circle outline.
  {
    EllipsoidSpec as_organ;
    as_organ.center = {spine.cx, spine.cy, 0.0f};
    as_organ.semi = {spine.sx, spine.sy, spine.half_z};
    as_organ.center_jitter = spine.center_jitter;
    as_organ.semi_scale_max = spine.semi_scale_max;
    const float bz = body.half_z;
    if (spine.half_z >= bz)
      throw DataError("phantom spec: spine can exceed the body extent in z");
    as_organ.semi.z = 0.0f;
    check_inside_body(as_organ, body, "spine");
  }

  // Lungs must stay disjoint across the midline under worst-case jitter.
  const float left_inner = (left_lung.center.x - left_lung.center_jitter) -
                           left_lung.semi.x * left_lung.semi_scale_max;
  const float right_inner = (right_lung.center.x + right_lung.center_jitter) +
                            right_lung.semi.x * right_lung.semi_scale_max;
  if (left_inner <= right_inner)
    throw DataError("phantom spec: lung ranges overlap across the midline");

  // A nodule of maximal radius must fit inside the smallest lung.
  const float lung_min_semi =
      std::min({left_lung.semi.x, left_lung.semi.y, left_lung.semi.z}) *
      left_lung.semi_scale_min;
  if (!(nodule.r_min > 0.0f) || nodule.r_max < nodule.r_min)
    throw DataError("phantom spec: nodule radius range is empty");
  if (nodule.r_max / lung_min_semi >= 0.9f)
    throw DataError("phantom spec: nodule radius too large for the lung");
  if (nodule.probability < 0.0f || nodule.probability > 1.0f)
    throw DataError("phantom spec: nodule probability must be in [0,1]");
}

LabeledVolume generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  auto jitter = [&](float j) { return (unit(rng) * 2.0f - 1.0f) * j; };
  auto scale = [&](float lo, float hi) { return lo + unit(rng) * (hi - lo); };

  Cylinder body{spec.body.cx, spec.body.cy,
                spec.body.sx * scale(spec.body.semi_scale_min, spec.body.semi_scale_max),
                spec.body.sy * scale(spec.body.semi_scale_min, spec.body.semi_scale_max),
                spec.body.half_z};

  auto draw_organ = [&](const EllipsoidSpec& o) {
    Ellipsoid e;
    e.c = {o.center.x + jitter(o.center_jitter), o.center.y + jitter(o.center_jitter),
           o.center.z + jitter(o.center_jitter)};
    e.s = {o.semi.x * scale(o.semi_scale_min, o.semi_scale_max),
           o.semi.y * scale(o.semi_scale_min, o.semi_scale_max),
           o.semi.z * scale(o.semi_scale_min, o.semi_scale_max)};
    return e;
  };
  Ellipsoid left = draw_organ(spec.left_lung);
  Ellipsoid right = draw_organ(spec.right_lung);
  Ellipsoid heart = draw_organ(spec.heart);

  Cylinder spine{spec.spine.cx + jitter(spec.spine.center_jitter),
                 spec.spine.cy + jitter(spec.spine.center_jitter),
                 spec.spine.sx * scale(spec.spine.semi_scale_min, spec.spine.semi_scale_max),
                 0.0f, spec.spine.half_z};
  spine.sy = spine.sx;

  // The nodule consumes a fixed number of draws whether or not it appears.
  Sphere nodule;
  {
    const float present_draw = unit(rng);
    const float side_draw = unit(rng);
    Vec3 dir{gauss(rng), gauss(rng), gauss(rng)};
    const float radial = unit(rng);
    const float r = spec.nodule.r_min + unit(rng) * (spec.nodule.r_max - spec.nodule.r_min);
    nodule.present = present_draw < spec.nodule.probability;
    nodule.r = r;
    const Ellipsoid& host = side_draw < 0.5f ? left : right;
    float norm = std::sqrt(dir.x * dir.x + dir.y * dir.y + dir.z * dir.z);
    if (norm < 1e-6f) {
      dir = {1.0f, 0.0f, 0.0f};
      norm = 1.0f;
    }
    // Place the center so the whole sphere stays inside the host lung: in
    // the lung's scaled space the nodule fits in a ball of radius
    // r/s_min, so keep |center| + r/s_min below 1.
    const float s_min = std::min({host.s.x, host.s.y, host.s.z});
    const float reach = std::max(0.0f, 0.99f - r / s_min);
    const float r_frac = std::cbrt(radial) * reach;
    nodule.c = {host.c.x + dir.x / norm * r_frac * host.s.x,
                host.c.y + dir.y / norm * r_frac * host.s.y,
                host.c.z + dir.z / norm * r_frac * host.s.z};
  }

  const int dim = spec.dim;
  LabeledVolume out;
  out.hu = Volume::filled(dim, -1000.0f, spec.spacing_mm);
  out.labels.dims = {dim, dim, dim};
  out.labels.spacing_mm = {spec.spacing_mm, spec.spacing_mm, spec.spacing_mm};
  out.labels.data.assign(static_cast<size_t>(out.labels.numel()), kClassAir);

#pragma omp parallel for schedule(static) num_threads(worker_threads())
  for (int z = 0; z < dim; ++z) {
    for (int y = 0; y < dim; ++y) {
      for (int x = 0; x < dim; ++x) {
        const Vec3 p = voxel_to_normalized(x, y, z, dim);
        uint8_t label = kClassAir;
        float hu = -1000.0f;
        if (nodule.contains(p)) {
          label = kClassNodule;
          hu = spec.nodule.hu;
        } else if (spine.contains(p)) {
          label = kClassSpine;
          hu = spec.spine.hu;
        } else if (heart.contains(p)) {
          label = kClassHeart;
          hu = spec.heart.hu;
        } else if (left.contains(p)) {
          label = kClassLeftLung;
          hu = spec.left_lung.hu;
        } else if (right.contains(p)) {
          label = kClassRightLung;
          hu = spec.right_lung.hu;
        } else if (body.contains(p)) {
          label = kClassBody;
          hu = spec.body.hu;
        }
        out.labels.at(x, y, z) = label;
        out.hu.at(x, y, z) = hu;
      }
    }
  }

  if (spec.smooth) {
    // Separable 3-tap Gaussian, sigma 0.5 voxel, replicated edges.
    const float rel = std::exp(-2.0f);  // exp(-1 / (2 sigma^2)) at offset 1
    const float w0 = 1.0f / (1.0f + 2.0f * rel);
    const float ws = rel * w0;
    auto pass = [&](const Volume& src, Volume& dst, int axis) {
      const int step[3] = {1, dim, dim * dim};
#pragma omp parallel for schedule(static) num_threads(worker_threads())
      for (int z = 0; z < dim; ++z)
        for (int y = 0; y < dim; ++y)
          for (int x = 0; x < dim; ++x) {
            const int idx3[3] = {x, y, z};
            const int64_t i = src.index(x, y, z);
            const int64_t lo = idx3[axis] > 0 ? i - step[axis] : i;
            const int64_t hi = idx3[axis] < dim - 1 ? i + step[axis] : i;
            dst.data[i] = w0 * src.data[i] + ws * (src.data[lo] + src.data[hi]);
          }
    };
    Volume a = out.hu, b = out.hu;
    pass(out.hu, a, 0);
    pass(a, b, 1);
    pass(b, out.hu, 2);
  }

  // Clip and restore the exact air floor so label 0 <=> hu == -1000.
  for (int64_t i = 0; i < out.hu.numel(); ++i) {
    float& v = out.hu.data[i];
    v = std::clamp(v, -1000.0f, 1000.0f);
    if (out.labels.data[i] == kClassAir)
      v = -1000.0f;
    else if (v <= -1000.0f)
      throw NumericError("phantom: smoothing drove a non-air voxel to the air floor");
  }
  return out;
}

std::vector<LabeledVolume> generate_cases(int n, uint64_t base_seed, const PhantomSpec& spec) {
  if (n < 1) throw DataError("generate_cases: n must be >= 1");
  std::vector<LabeledVolume> cases;
  cases.reserve(n);
  for (int i = 0; i < n; ++i) {
    PhantomSpec s = spec;
    s.seed = base_seed + static_cast<uint64_t>(i);
    cases.push_back(generate_phantom(s));
  }
  return cases;
}

std::string case_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "case_%04d", index);
  return buf;
}

std::vector<std::string> generate_dataset(int n, uint64_t base_seed, const PhantomSpec& spec,
                                          const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("generate_dataset: cannot create " + out_dir + ": " + ec.message());
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) {
    PhantomSpec s = spec;
    s.seed = base_seed + static_cast<uint64_t>(i);
    LabeledVolume v = generate_phantom(s);
    const std::string id = case_id(i);
    write_rvol_hu(v.hu, out_dir + "/" + id + ".hu.rvol");
    write_rvol_labels(v.labels, out_dir + "/" + id + ".labels.rvol");
    ids.push_back(id);
  }
  return ids;
}

}  // namespace s2ct
