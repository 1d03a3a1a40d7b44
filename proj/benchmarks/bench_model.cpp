#include <benchmark/benchmark.h>

#include <random>

#include "s2ct/phantom.hpp"
#include "s2ct/recon_model.hpp"
#include "s2ct/segmentation.hpp"
#include "s2ct/tensor.hpp"
#include "s2ct/trainer.hpp"

using namespace s2ct;

namespace {

ReconConfig desk_config() {
  ReconConfig rc;
  return rc;  // the 32-pixel defaults
}

const LabeledVolume& bench_case() {
  static LabeledVolume lv = [] {
    PhantomSpec spec;
    spec.seed = 21;
    return generate_phantom(spec);
  }();
  return lv;
}

std::vector<Vec3> random_points(int n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<Vec3> pts(n);
  for (auto& p : pts) p = {dist(rng), dist(rng), dist(rng)};
  return pts;
}

void BM_feature_extraction(benchmark::State& state) {
  ReconModel model(desk_config(), 3);
  ViewGeometry g;
  g.beam = Beam::Cone;
  DRRImage view = render_drr(hu_to_mu(bench_case().hu), g);
  Tensor input = view_to_tensor(view);
  for (auto _ : state) {
    Tensor f = model.extract_features(input);
    benchmark::DoNotOptimize(f.data());
  }
}
BENCHMARK(BM_feature_extraction);

void BM_point_decode(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  ReconModel model(desk_config(), 3);
  ViewGeometry g;
  g.beam = Beam::Cone;
  ViewGeometry g2 = g;
  g2.theta_deg = 90.0f;
  Volume mu = hu_to_mu(bench_case().hu);
  std::vector<Tensor> views{view_to_tensor(render_drr(mu, g)),
                            view_to_tensor(render_drr(mu, g2))};
  std::vector<ViewGeometry> geoms{g, g2};
  std::vector<Vec3> pts = random_points(n, 5);
  for (auto _ : state) {
    Tensor y = model.forward(views, geoms, pts);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_point_decode)->Arg(1024)->Arg(4096);

void BM_reconstruct_volume(benchmark::State& state) {
  ReconModel model(desk_config(), 3);
  ViewGeometry g;
  g.beam = Beam::Cone;
  Volume mu = hu_to_mu(bench_case().hu);
  std::vector<DRRImage> views{render_drr(mu, g)};
  std::vector<ViewGeometry> geoms{g};
  for (auto _ : state) {
    Volume v = model.reconstruct_volume(views, geoms, 32, 4.0f);
    benchmark::DoNotOptimize(v.data.data());
  }
}
BENCHMARK(BM_reconstruct_volume)->Unit(benchmark::kMillisecond);

void BM_train_step(benchmark::State& state) {
  ReconModel model(desk_config(), 3);
  ViewGeometry g;
  g.beam = Beam::Cone;
  TrainConfig tc;
  tc.view_angles = {0.0f, 90.0f};
  TrainCase cs = prepare_case("bench", bench_case().hu, tc.view_angles, g);
  AdamState adam;
  adam.lr = tc.lr;
  int64_t step = 0;
  for (auto _ : state) {
    StepLosses losses = train_step(model, nullptr, nullptr, cs, tc, adam, step++);
    benchmark::DoNotOptimize(losses.total);
  }
  state.SetItemsProcessed(state.iterations() * tc.points_per_step);
}
BENCHMARK(BM_train_step)->Unit(benchmark::kMillisecond);

void BM_seg_forward(benchmark::State& state) {
  SegModel seg(SegConfig{}, 9);
  seg.set_trainable(false);
  Tensor input = normalized_volume_tensor(bench_case().hu);
  for (auto _ : state) {
    Tensor probs = seg.forward(input);
    benchmark::DoNotOptimize(probs.data());
  }
}
BENCHMARK(BM_seg_forward)->Unit(benchmark::kMillisecond);

}  // namespace
