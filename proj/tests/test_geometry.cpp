#include <cmath>

#include "doctest.h"
#include "s2ct/error.hpp"
#include "s2ct/geometry.hpp"

using namespace s2ct;

namespace {

// Independent cone-beam oracle: intersect the segment source->p with the
// plane {x . d = rd} by solving for the scalar parameter directly, then read
// off detector coordinates. Written against the geometric definition only.
void cone_oracle(double theta_deg, double rs, double rd, double px, double py, double pz,
                 double& u_out, double& v_out) {
  const double t = theta_deg * M_PI / 180.0;
  const double dx = std::cos(t), dy = std::sin(t);
  const double ux = -std::sin(t), uy = std::cos(t);
  const double sx = -rs * dx, sy = -rs * dy, sz = 0.0;
  // (S + s*(p - S)) . d = rd
  const double denom = (px - sx) * dx + (py - sy) * dy;
  const double s = (rd - (sx * dx + sy * dy)) / denom;
  const double ix = sx + s * (px - sx);
  const double iy = sy + s * (py - sy);
  const double iz = sz + s * (pz - sz);
  const double scale = rs / (rs + rd);
  u_out = scale * (ix * ux + iy * uy);
  v_out = scale * iz;
}

}  // namespace

TEST_CASE("parallel projection at zero angle reads off y and z") {
  ViewGeometry g;
  g.beam = Beam::Parallel;
  g.theta_deg = 0.0f;
  Vec2 uv = project({0.5f, 0.2f, -0.3f}, g);
  CHECK(uv.u == doctest::Approx(0.2));
  CHECK(uv.v == doctest::Approx(-0.3));
}

TEST_CASE("the isocenter projects to the detector center for any beam") {
  for (Beam beam : {Beam::Parallel, Beam::Cone}) {
    for (float theta : {0.0f, 37.0f, 90.0f, 215.0f}) {
      ViewGeometry g;
      g.beam = beam;
      g.theta_deg = theta;
      Vec2 uv = project({0, 0, 0}, g);
      CHECK(uv.u == doctest::Approx(0.0).epsilon(1e-6));
      CHECK(uv.v == doctest::Approx(0.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("cone projection matches the independent intersection oracle") {
  ViewGeometry g;
  g.beam = Beam::Cone;
  g.theta_deg = 0.0f;
  g.source_dist = 3.0f;
  g.detector_dist = 1.0f;
  double u, v;
  cone_oracle(0, 3, 1, 0, 0.5, 0, u, v);
  Vec2 got = project({0.0f, 0.5f, 0.0f}, g);
  CHECK(got.u == doctest::Approx(u).epsilon(1e-5));
  CHECK(got.v == doctest::Approx(v).epsilon(1e-5));

  for (float theta : {0.0f, 30.0f, 45.0f, 120.0f, 300.0f}) {
    g.theta_deg = theta;
    for (float x : {-0.8f, 0.0f, 0.6f})
      for (float y : {-0.7f, 0.1f, 0.8f})
        for (float z : {-0.9f, 0.3f}) {
          cone_oracle(theta, 3, 1, x, y, z, u, v);
          Vec2 p = project({x, y, z}, g);
          CHECK(p.u == doctest::Approx(u).epsilon(1e-4));
          CHECK(p.v == doctest::Approx(v).epsilon(1e-4));
        }
  }
}

TEST_CASE("cone projection rejects points at or behind the source") {
  ViewGeometry g;
  g.beam = Beam::Cone;
  g.theta_deg = 0.0f;
  g.source_dist = 1.5f;
  CHECK_THROWS_AS(project({-1.5f, 0.0f, 0.0f}, g), DataError);
  CHECK_THROWS_AS(project({-2.0f, 0.4f, 0.0f}, g), DataError);
}

TEST_CASE("parallel projection is invariant along the ray direction") {
  ViewGeometry g;
  g.beam = Beam::Parallel;
  for (float theta : {0.0f, 45.0f, 90.0f, 135.0f, 262.0f}) {
    g.theta_deg = theta;
    Vec3 d = ray_direction(theta);
    Vec3 p{0.2f, -0.4f, 0.6f};
    Vec2 base = project(p, g);
    for (float s : {-0.5f, 0.3f, 0.9f}) {
      Vec2 moved = project({p.x + s * d.x, p.y + s * d.y, p.z + s * d.z}, g);
      CHECK(moved.u == doctest::Approx(base.u).epsilon(1e-5));
      CHECK(moved.v == doctest::Approx(base.v).epsilon(1e-5));
    }
  }
}

TEST_CASE("opposite parallel views negate u and keep v") {
  ViewGeometry g;
  g.beam = Beam::Parallel;
  Vec3 p{0.3f, -0.2f, 0.5f};
  for (float theta : {0.0f, 10.0f, 77.0f, 90.0f}) {
    g.theta_deg = theta;
    Vec2 a = project(p, g);
    g.theta_deg = theta + 180.0f;
    Vec2 b = project(p, g);
    CHECK(b.u == doctest::Approx(-a.u).epsilon(1e-5));
    CHECK(b.v == doctest::Approx(a.v).epsilon(1e-5));
  }
}

TEST_CASE("cone projection approaches parallel as the source recedes") {
  ViewGeometry cone;
  cone.beam = Beam::Cone;
  cone.source_dist = 1e4f;
  cone.detector_dist = 1.0f;
  ViewGeometry par;
  par.beam = Beam::Parallel;
  float worst = 0.0f;
  for (float theta : {0.0f, 45.0f, 90.0f, 200.0f}) {
    cone.theta_deg = par.theta_deg = theta;
    for (float x = -1.0f; x <= 1.01f; x += 0.25f)
      for (float y = -1.0f; y <= 1.01f; y += 0.25f)
        for (float z = -1.0f; z <= 1.01f; z += 0.5f) {
          Vec2 a = project({x, y, z}, cone);
          Vec2 b = project({x, y, z}, par);
          worst = std::max({worst, std::fabs(a.u - b.u), std::fabs(a.v - b.v)});
        }
  }
  CHECK(worst < 1e-3f);
}

TEST_CASE("detector coordinates map to pixel rows and columns") {
  float row, col;
  detector_to_pixel({0, 0}, 33, row, col);
  CHECK(row == doctest::Approx(16));
  CHECK(col == doctest::Approx(16));
  detector_to_pixel({-1, 1}, 33, row, col);
  CHECK(row == doctest::Approx(0));
  CHECK(col == doctest::Approx(0));
  detector_to_pixel({1, -1}, 33, row, col);
  CHECK(row == doctest::Approx(32));
  CHECK(col == doctest::Approx(32));
}

TEST_CASE("voxel centers span the normalized cube inclusively") {
  Vec3 p = voxel_to_normalized(0, 0, 0, 32);
  CHECK(p.x == doctest::Approx(-1));
  CHECK(p.y == doctest::Approx(-1));
  CHECK(p.z == doctest::Approx(-1));
  p = voxel_to_normalized(31, 31, 31, 32);
  CHECK(p.x == doctest::Approx(1));
  p = voxel_to_normalized(16, 16, 16, 33);
  CHECK(p.x == doctest::Approx(0));
  CHECK(p.y == doctest::Approx(0));
  CHECK(p.z == doctest::Approx(0));
  CHECK_THROWS_AS(voxel_to_normalized(-1, 0, 0, 32), DataError);
  CHECK_THROWS_AS(voxel_to_normalized(0, 32, 0, 32), DataError);
}

TEST_CASE("voxel to normalized round-trips on every lattice point") {
  const int dim = 17;
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; j += 3)
      for (int k = 0; k < dim; k += 5) {
        Vec3 p = voxel_to_normalized(i, j, k, dim);
        float fi, fj, fk;
        normalized_to_voxel(p, dim, fi, fj, fk);
        CHECK(fi == doctest::Approx(i).epsilon(1e-5));
        CHECK(fj == doctest::Approx(j).epsilon(1e-5));
        CHECK(fk == doctest::Approx(k).epsilon(1e-5));
      }
}

TEST_CASE("angles normalize into [0, 360)") {
  CHECK(normalize_angle_deg(-90.0f) == doctest::Approx(270.0f));
  CHECK(normalize_angle_deg(720.0f) == doctest::Approx(0.0f));
  CHECK(normalize_angle_deg(359.5f) == doctest::Approx(359.5f));
}

TEST_CASE("view geometry validation rejects degenerate setups") {
  ViewGeometry g;
  g.detector_px = 1;
  CHECK_THROWS_AS(g.validate(), DataError);
  g.detector_px = 32;
  g.beam = Beam::Cone;
  g.source_dist = 0.5f;
  CHECK_THROWS_AS(g.validate(), DataError);
  g.source_dist = 3.0f;
  g.detector_dist = 0.2f;
  CHECK_THROWS_AS(g.validate(), DataError);
  g.detector_dist = 1.0f;
  CHECK_NOTHROW(g.validate());
}
