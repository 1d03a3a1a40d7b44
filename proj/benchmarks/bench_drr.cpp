#include <benchmark/benchmark.h>

#include "s2ct/drr.hpp"
#include "s2ct/phantom.hpp"

using namespace s2ct;

namespace {

const Volume& bench_mu(int dim) {
  static Volume mu16 = [] {
    PhantomSpec spec;
    spec.seed = 11;
    spec.dim = 16;
    spec.spacing_mm = 8.0f;
    return hu_to_mu(generate_phantom(spec).hu);
  }();
  static Volume mu32 = [] {
    PhantomSpec spec;
    spec.seed = 11;
    return hu_to_mu(generate_phantom(spec).hu);
  }();
  return dim == 16 ? mu16 : mu32;
}

ViewGeometry bench_geometry(Beam beam, int px) {
  ViewGeometry g;
  g.beam = beam;
  g.theta_deg = 45.0f;
  g.detector_px = px;
  return g;
}

void BM_render_cone(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const Volume& mu = bench_mu(dim);
  ViewGeometry g = bench_geometry(Beam::Cone, dim);
  for (auto _ : state) {
    DRRImage img = render_drr(mu, g);
    benchmark::DoNotOptimize(img.normalized.data());
  }
  state.SetItemsProcessed(state.iterations() * int64_t(dim) * dim);
}
BENCHMARK(BM_render_cone)->Arg(16)->Arg(32);

void BM_render_parallel(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const Volume& mu = bench_mu(dim);
  ViewGeometry g = bench_geometry(Beam::Parallel, dim);
  for (auto _ : state) {
    DRRImage img = render_drr(mu, g);
    benchmark::DoNotOptimize(img.normalized.data());
  }
  state.SetItemsProcessed(state.iterations() * int64_t(dim) * dim);
}
BENCHMARK(BM_render_parallel)->Arg(16)->Arg(32);

void BM_render_step(benchmark::State& state) {
  const Volume& mu = bench_mu(32);
  ViewGeometry g = bench_geometry(Beam::Cone, 32);
  const float step = static_cast<float>(state.range(0)) / 100.0f;
  for (auto _ : state) {
    DRRImage img = render_drr(mu, g, step);
    benchmark::DoNotOptimize(img.normalized.data());
  }
}
BENCHMARK(BM_render_step)->Arg(50)->Arg(25)->Arg(10);

void BM_render_four_views(benchmark::State& state) {
  const Volume& mu = bench_mu(32);
  ViewGeometry g = bench_geometry(Beam::Cone, 32);
  const std::vector<float> angles{0.0f, 45.0f, 90.0f, 135.0f};
  for (auto _ : state) {
    auto views = render_views(mu, g, angles);
    benchmark::DoNotOptimize(views.data());
  }
}
BENCHMARK(BM_render_four_views);

}  // namespace
