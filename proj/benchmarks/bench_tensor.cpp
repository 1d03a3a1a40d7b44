#include <benchmark/benchmark.h>

#include <random>

#include "s2ct/ops.hpp"
#include "s2ct/tensor.hpp"

using namespace s2ct;

namespace {

Tensor random_tensor(std::vector<int> shape, uint64_t seed) {
  Tensor t = Tensor::zeros(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = dist(rng);
  return t;
}

void BM_matmul_forward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Tensor a = random_tensor({n, 96}, 1);
  Tensor b = random_tensor({96, 128}, 2);
  for (auto _ : state) {
    Tensor c = matmul(a, b);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * int64_t(n) * 96 * 128 * 2);
}
BENCHMARK(BM_matmul_forward)->Arg(1024)->Arg(4096);

void BM_matmul_train_step(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Tensor a = random_tensor({n, 96}, 1);
  Tensor b = random_tensor({96, 128}, 2);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  for (auto _ : state) {
    Tape tape;
    Tensor c = matmul(a, b);
    tape.backward(mean(c));
    a.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_matmul_train_step)->Arg(4096);

void BM_conv2d_unet_block(benchmark::State& state) {
  Tensor in = random_tensor({32, 32, 32}, 3);
  Tensor k = random_tensor({32, 32, 3, 3}, 4);
  Tensor bias = random_tensor({32}, 5);
  for (auto _ : state) {
    Tensor out = conv2d(in, k, bias, 1, 1);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_conv2d_unet_block);

void BM_conv3d_seg_block(benchmark::State& state) {
  Tensor in = random_tensor({8, 32, 32, 32}, 6);
  Tensor k = random_tensor({8, 8, 3, 3, 3}, 7);
  Tensor bias = random_tensor({8}, 8);
  for (auto _ : state) {
    Tensor out = conv3d(in, k, bias, 1, 1);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_conv3d_seg_block);

void BM_bilinear_sample(benchmark::State& state) {
  Tensor img = random_tensor({32, 32, 32}, 9);
  Tensor coords = random_tensor({4096, 2}, 10);
  for (int64_t i = 0; i < coords.numel(); ++i)
    coords.data()[i] = (coords.data()[i] + 1.0f) * 15.5f;
  for (auto _ : state) {
    Tensor out = bilinear_sample(img, coords);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_bilinear_sample);

}  // namespace

BENCHMARK_MAIN();
