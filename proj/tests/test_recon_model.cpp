#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "oracle/refops.hpp"
#include "s2ct/adam.hpp"
#include "s2ct/error.hpp"
#include "s2ct/ops.hpp"
#include "s2ct/recon_model.hpp"

using namespace s2ct;

namespace {

ReconConfig small_config() {
  ReconConfig cfg;
  cfg.feature_channels = 6;
  cfg.fourier_m = 5;
  cfg.width = 16;
  cfg.detector_px = 8;
  cfg.unet_channels = {4, 6, 8};
  return cfg;
}

Tensor random_view(int d, uint64_t seed) {
  Tensor v = Tensor::zeros({1, d, d});
  refops::fill_uniform(v, seed, 0.0f, 1.0f);
  return v;
}

std::vector<Vec3> test_points(int n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-0.95f, 0.95f);
  std::vector<Vec3> pts(n);
  for (Vec3& p : pts) p = {dist(rng), dist(rng), dist(rng)};
  return pts;
}

refops::DT dt_of(const Tensor& t) { return refops::DT::from_tensor(t); }

// Double-precision mirror of extract_features built from the reference ops,
// reading the same weights.
refops::DT mirror_features(const ReconModel& model, const refops::DT& view) {
  const ParameterStore& ps = model.params();
  auto cs = [&](const char* name, const refops::DT& x) {
    refops::DT w = dt_of(ps.get(std::string(name) + ".w"));
    refops::DT b = dt_of(ps.get(std::string(name) + ".b"));
    return refops::sine(refops::conv2d(x, w, &b, 1, 1), 1.0);
  };
  refops::DT e1 = cs("unet.enc1.c2", cs("unet.enc1.c1", view));
  refops::DT e2 = cs("unet.enc2.c2", cs("unet.enc2.c1", refops::avg_pool(e1, 2)));
  refops::DT b = cs("unet.bott.c2", cs("unet.bott.c1", refops::avg_pool(e2, 2)));
  refops::DT d2 = cs("unet.dec2.c2", cs("unet.dec2.c1", refops::concat({refops::upsample(b, 2), e2}, 0)));
  refops::DT d1 = cs("unet.dec1.c2", cs("unet.dec1.c1", refops::concat({refops::upsample(d2, 2), e1}, 0)));
  refops::DT ow = dt_of(ps.get("unet.out.w"));
  refops::DT ob = dt_of(ps.get("unet.out.b"));
  return refops::conv2d(d1, ow, &ob, 1, 0);
}

refops::DT mirror_linear(const ParameterStore& ps, const std::string& name, const refops::DT& x) {
  return refops::add(refops::matmul(x, dt_of(ps.get(name + ".w"))), dt_of(ps.get(name + ".b")));
}

refops::DT mirror_res(const ParameterStore& ps, const std::string& name, const refops::DT& x) {
  refops::DT h = refops::sine(mirror_linear(ps, name + ".l1", x), 1.0);
  return refops::add(x, mirror_linear(ps, name + ".l2", h));
}

refops::DT mirror_embed(const ReconModel& model, const refops::DT& gamma, const refops::DT& feats,
                        const refops::DT& pixels) {
  const ParameterStore& ps = model.params();
  refops::DT feat = refops::bilinear_sample(feats, pixels);
  refops::DT h = refops::sine(mirror_linear(ps, "frho.in", refops::concat({gamma, feat}, 1)), 30.0);
  h = mirror_res(ps, "frho.res1", h);
  h = mirror_res(ps, "frho.res2", h);
  return mirror_res(ps, "frho.res3", h);
}

}  // namespace

TEST_CASE("feature extraction keeps the view's spatial extent") {
  ReconConfig cfg = small_config();
  ReconModel model(cfg, 1);
  Tensor view = random_view(8, 2);
  Tensor f = model.extract_features(view);
  CHECK(f.shape() == std::vector<int>{6, 8, 8});
  Tensor again = model.extract_features(random_view(8, 2));
  CHECK(std::memcmp(f.data(), again.data(), f.numel() * sizeof(float)) == 0);

  Tensor bad = Tensor::zeros({1, 6, 6});
  CHECK_THROWS_AS(model.extract_features(bad), DataError);
  ReconConfig odd = cfg;
  odd.detector_px = 10;
  CHECK_THROWS_AS(ReconModel(odd, 1), DataError);
}

TEST_CASE("feature extraction gradients match the double-precision mirror") {
  ReconConfig cfg = small_config();
  ReconModel model(cfg, 3);
  Tensor view = random_view(8, 4);

  const std::string target = "unet.bott.c1.w";
  Tensor w = model.params().get(target);
  Tensor loss_val;
  {
    Tape tape;
    Tensor out = model.extract_features(view);
    Tensor loss = mean(out);
    tape.backward(loss);
  }
  const float* analytic = w.grad_data();
  REQUIRE(analytic != nullptr);

  // Central differences on the mirror, perturbing the shared weight buffer.
  refops::DT view_d = dt_of(view);
  float* pw = w.data();
  const double h = 1e-3;
  int worse = 0;
  std::mt19937_64 pick(7);
  for (int trial = 0; trial < 12; ++trial) {
    int64_t i = static_cast<int64_t>(pick() % uint64_t(w.numel()));
    const float saved = pw[i];
    pw[i] = saved + static_cast<float>(h);
    double up = refops::mean(mirror_features(model, view_d));
    pw[i] = saved - static_cast<float>(h);
    double down = refops::mean(mirror_features(model, view_d));
    pw[i] = saved;
    double fd = (up - down) / (2.0 * h);
    double denom = std::max(std::fabs(fd), 1e-6);
    if (std::fabs(analytic[i] - fd) / denom > 1e-3) ++worse;
  }
  CHECK(worse == 0);
}

TEST_CASE("the fourier encoding obeys its closed forms") {
  ReconConfig cfg = small_config();
  ReconModel model(cfg, 5);
  const int m = cfg.fourier_m;

  Tensor enc = model.fourier_encode({{0, 0, 0}});
  for (int r = 0; r < m; ++r) {
    CHECK(enc.data()[r] == doctest::Approx(0.0));
    CHECK(enc.data()[m + r] == doctest::Approx(1.0));
  }

  // Plant a known frequency row and check the sine entry directly.
  Tensor B = model.params().get("fourier.B");
  B.data()[0] = 1.0f;
  B.data()[1] = 0.0f;
  B.data()[2] = 0.0f;
  enc = model.fourier_encode({{0.25f, 0.0f, 0.0f}});
  CHECK(enc.data()[0] == doctest::Approx(1.0));       // sin(pi/2)
  CHECK(enc.data()[m] == doctest::Approx(0.0).epsilon(1e-6));  // cos(pi/2)

  for (const Vec3& p : test_points(20, 6)) {
    Tensor e = model.fourier_encode({p});
    double norm2 = 0.0;
    for (int i = 0; i < 2 * m; ++i) norm2 += double(e.data()[i]) * e.data()[i];
    CHECK(norm2 == doctest::Approx(double(m)).epsilon(1e-5));
  }
}

TEST_CASE("per-view embeddings are deterministic and shaped by the width") {
  ReconConfig cfg = small_config();
  ReconModel model(cfg, 8);
  std::vector<Vec3> pts = test_points(9, 9);
  ViewGeometry g;
  g.detector_px = 8;
  g.theta_deg = 45.0f;
  Tensor gamma = model.fourier_encode(pts);
  Tensor feats = model.extract_features(random_view(8, 10));
  Tensor pix = model.project_points(pts, g);
  Tensor r1 = model.per_view_embed(gamma, feats, pix);
  Tensor r2 = model.per_view_embed(gamma, feats, pix);
  CHECK(r1.shape() == std::vector<int>{9, 16});
  CHECK(std::memcmp(r1.data(), r2.data(), r1.numel() * sizeof(float)) == 0);
}

TEST_CASE("per-view embedding gradients match the mirror end to end") {
  ReconConfig cfg = small_config();
  ReconModel model(cfg, 11);
  std::vector<Vec3> pts = test_points(6, 12);
  ViewGeometry g;
  g.detector_px = 8;
  g.theta_deg = 120.0f;
  Tensor view = random_view(8, 13);
  Tensor gamma = model.fourier_encode(pts);
  Tensor pix = model.project_points(pts, g);

  const std::string target = "frho.in.w";
  Tensor w = model.params().get(target);
  {
    Tape tape;
    Tensor r = model.per_view_embed(gamma, model.extract_features(view), pix);
    Tensor loss = mean(r);
    tape.backward(loss);
  }
  const float* analytic = w.grad_data();
  REQUIRE(analytic != nullptr);

  refops::DT view_d = dt_of(view);
  refops::DT gamma_d = dt_of(gamma);
  refops::DT pix_d = dt_of(pix);
  float* pw = w.data();
  // The first layer's sine runs at omega 30, so curvature scales with its
  // cube; a small step keeps the truncation term under the tolerance (the
  // double-precision mirror has no roundoff to trade against).
  const double h = 1e-4;
  std::mt19937_64 pick(14);
  for (int trial = 0; trial < 10; ++trial) {
    int64_t i = static_cast<int64_t>(pick() % uint64_t(w.numel()));
    const float saved = pw[i];
    pw[i] = saved + static_cast<float>(h);
    double up = refops::mean(mirror_embed(model, gamma_d, mirror_features(model, view_d), pix_d));
    pw[i] = saved - static_cast<float>(h);
    double down = refops::mean(mirror_embed(model, gamma_d, mirror_features(model, view_d), pix_d));
    pw[i] = saved;
    double fd = (up - down) / (2.0 * h);
    CHECK(analytic[i] == doctest::Approx(fd).epsilon(1e-3));
  }
}

TEST_CASE("fusion averages embeddings and ignores view order") {
  ReconConfig cfg = small_config();
  ReconModel model(cfg, 15);

  // Mean of one equals the embedding itself: duplicating a view must not
  // change the decoded output.
  Tensor a = Tensor::zeros({3, 16});
  Tensor b = Tensor::zeros({3, 16});
  refops::fill_uniform(a, 16, -1.0f, 1.0f);
  refops::fill_uniform(b, 17, -1.0f, 1.0f);
  Tensor one = model.fuse_and_decode({a});
  Tensor dup = model.fuse_and_decode({a, a});
  for (int64_t i = 0; i < one.numel(); ++i)
    CHECK(one.data()[i] == doctest::Approx(dup.data()[i]).epsilon(1e-6));

  // Decoding the hand-computed average matches decoding the pair, so the
  // fusion is the arithmetic mean.
  Tensor avg = Tensor::zeros({3, 16});
  for (int64_t i = 0; i < avg.numel(); ++i) avg.data()[i] = 0.5f * (a.data()[i] + b.data()[i]);
  Tensor pair = model.fuse_and_decode({a, b});
  Tensor direct = model.fuse_and_decode({avg});
  for (int64_t i = 0; i < pair.numel(); ++i)
    CHECK(pair.data()[i] == doctest::Approx(direct.data()[i]).epsilon(1e-6));

  // Permutation invariance within reassociation tolerance.
  Tensor c = Tensor::zeros({3, 16});
  refops::fill_uniform(c, 18, -1.0f, 1.0f);
  Tensor abc = model.fuse_and_decode({a, b, c});
  Tensor cba = model.fuse_and_decode({c, b, a});
  for (int64_t i = 0; i < abc.numel(); ++i)
    CHECK(abc.data()[i] == doctest::Approx(cba.data()[i]).epsilon(1e-6));

  CHECK_THROWS_AS(model.fuse_and_decode({}), DataError);
}

TEST_CASE("the full forward pass is view-order invariant and bounded") {
  ReconConfig cfg = small_config();
  ReconModel model(cfg, 19);
  std::vector<Vec3> pts = test_points(17, 20);
  std::vector<Tensor> views{random_view(8, 21), random_view(8, 22), random_view(8, 23)};
  ViewGeometry g;
  g.detector_px = 8;
  std::vector<ViewGeometry> geos(3, g);
  geos[0].theta_deg = 0.0f;
  geos[1].theta_deg = 45.0f;
  geos[2].theta_deg = 90.0f;

  Tensor y = model.forward(views, geos, pts);
  CHECK(y.shape() == std::vector<int>{17, 1});
  for (int64_t i = 0; i < y.numel(); ++i) {
    CHECK(y.data()[i] > 0.0f);
    CHECK(y.data()[i] < 1.0f);
  }

  Tensor rev = model.forward({views[2], views[1], views[0]}, {geos[2], geos[1], geos[0]}, pts);
  for (int64_t i = 0; i < y.numel(); ++i)
    CHECK(rev.data()[i] == doctest::Approx(y.data()[i]).epsilon(1e-6));

  CHECK_THROWS_AS(model.forward(views, {geos[0]}, pts), DataError);
}

TEST_CASE("end-to-end parameter gradients survive a float finite-difference check") {
  ReconConfig cfg = small_config();
  ReconModel model(cfg, 24);
  std::vector<Vec3> pts = test_points(12, 25);
  std::vector<Tensor> views{random_view(8, 26), random_view(8, 27)};
  std::vector<ViewGeometry> geos(2);
  geos[0].detector_px = geos[1].detector_px = 8;
  geos[0].theta_deg = 0.0f;
  geos[1].theta_deg = 90.0f;

  Tensor targets = Tensor::zeros({12, 1});
  refops::fill_uniform(targets, 28, 0.2f, 0.8f);

  auto loss_value = [&]() {
    Tensor y = model.forward(views, geos, pts);
    Tensor d = sub(y, targets);
    return mean(mul(d, d));
  };

  {
    Tape tape;
    Tensor loss = loss_value();
    tape.backward(loss);
  }

  for (const char* target : {"unet.enc2.c1.w", "frho.res2.l1.w", "htau.res1.l1.w"}) {
    Tensor w = model.params().get(target);
    const float* analytic = w.grad_data();
    REQUIRE(analytic != nullptr);
    float* pw = w.data();
    std::mt19937_64 pick(std::hash<std::string>{}(target));
    int checked = 0, ok = 0;
    for (int trial = 0; trial < 24 && checked < 5; ++trial) {
      int64_t i = static_cast<int64_t>(pick() % uint64_t(w.numel()));
      if (std::fabs(analytic[i]) < 1e-4f) continue;  // below float FD resolution
      ++checked;
      const float saved = pw[i];
      auto central = [&](float h) {
        pw[i] = saved + h;
        double up = loss_value().item();
        pw[i] = saved - h;
        double down = loss_value().item();
        pw[i] = saved;
        return (up - down) / (2.0 * double(h));
      };
      // Richardson-extrapolate two step sizes to cancel the quadratic
      // truncation term; float roundoff stays well below the tolerance.
      const float h = std::max(2e-3f, 0.05f * std::fabs(saved));
      double fd = (4.0 * central(0.5f * h) - central(h)) / 3.0;
      if (std::fabs(analytic[i] - fd) / std::fabs(fd) < 1e-2) ++ok;
    }
    REQUIRE(checked > 0);
    CHECK(ok == checked);
  }
}

TEST_CASE("volume reconstruction is chunk-invariant, finite, and in range") {
  ReconConfig cfg = small_config();
  ReconModel model(cfg, 29);
  Volume mu = Volume::filled(8, 0.01f, 4.0f);
  ViewGeometry g;
  g.detector_px = 8;
  std::vector<float> angles{0.0f, 90.0f};
  std::vector<DRRImage> views;
  std::vector<ViewGeometry> geos;
  for (float a : angles) {
    ViewGeometry gi = g;
    gi.theta_deg = a;
    views.push_back(render_drr(mu, gi));
    geos.push_back(gi);
  }

  Volume small_chunks = model.reconstruct_volume(views, geos, 8, 4.0f, 64);
  Volume big_chunks = model.reconstruct_volume(views, geos, 8, 4.0f, 4096);
  CHECK(small_chunks.numel() == 512);
  for (int64_t i = 0; i < small_chunks.numel(); ++i) {
    CHECK(std::isfinite(small_chunks.data[i]));
    CHECK(small_chunks.data[i] >= -1000.0f);
    CHECK(small_chunks.data[i] <= 1000.0f);
    CHECK(small_chunks.data[i] == doctest::Approx(big_chunks.data[i]).epsilon(1e-6));
  }

  CHECK_THROWS_AS(model.reconstruct_volume(views, {geos[0]}, 8, 4.0f, 64), DataError);
  CHECK_THROWS_AS(model.reconstruct_volume({}, {}, 8, 4.0f, 64), DataError);
  std::vector<DRRImage> five(5, views[0]);
  std::vector<ViewGeometry> five_g(5, geos[0]);
  CHECK_THROWS_AS(model.reconstruct_volume(five, five_g, 8, 4.0f, 64), DataError);
}

TEST_CASE("checkpoints rebuild an identical model from disk") {
  namespace fs = std::filesystem;
  ReconConfig cfg = small_config();
  ReconModel model(cfg, 31);
  std::vector<Vec3> pts = test_points(5, 32);
  std::vector<Tensor> views{random_view(8, 33)};
  ViewGeometry g;
  g.detector_px = 8;
  g.theta_deg = 30.0f;
  Tensor before = model.forward(views, {g}, pts);

  fs::path prefix = fs::temp_directory_path() / "s2ct_recon_ckpt";
  save_recon_model(model, prefix.string());
  ReconModel loaded = load_recon_model(prefix.string());
  CHECK(loaded.config().feature_channels == cfg.feature_channels);
  CHECK(loaded.config().fourier_m == cfg.fourier_m);
  CHECK(loaded.config().detector_px == cfg.detector_px);

  Tensor after = loaded.forward(views, {g}, pts);
  CHECK(std::memcmp(before.data(), after.data(), before.numel() * sizeof(float)) == 0);

  // Loaded weights can keep training: gradients still flow.
  {
    Tape tape;
    Tensor loss = mean(loaded.forward(views, {g}, pts));
    tape.backward(loss);
  }
  CHECK(loaded.params().get("frho.in.w").grad_data() != nullptr);

  fs::remove(fs::path(prefix.string() + ".rckp"));
  fs::remove(fs::path(prefix.string() + ".json"));
  CHECK_THROWS_AS(load_recon_model(prefix.string()), DataError);
}
