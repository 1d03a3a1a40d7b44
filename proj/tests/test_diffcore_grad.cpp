// Finite-difference gradient checks for every differentiable op. The
// analytic f32 backward pass is compared against central differences of the
// double-precision references in oracle/refops.hpp (step 1e-3), over
// randomized inputs that include extents 1 through 5.
#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracle/refops.hpp"
#include "s2ct/ops.hpp"
#include "s2ct/tensor.hpp"

using namespace s2ct;
using refops::DT;

namespace {

// A fixed random weighting makes the scalarized loss sensitive to every
// output element, so transposition bugs cannot cancel out.
Tensor make_weights(const std::vector<int>& shape, uint64_t seed) {
  Tensor w = Tensor::zeros(shape);
  refops::fill_uniform(w, seed, -1.0f, 1.0f);
  return w;
}

double weighted(const DT& out, const DT& w) {
  double s = 0.0;
  for (size_t i = 0; i < out.x.size(); ++i) s += out.x[i] * w.x[i];
  return s;
}

void check_grads(const float* analytic, const std::vector<double>& fd, int64_t n,
                 double rtol = 1e-3, double atol = 1e-5) {
  for (int64_t i = 0; i < n; ++i) {
    const double a = analytic ? analytic[i] : 0.0;
    const double diff = std::abs(a - fd[i]);
    CHECK_MESSAGE(diff <= atol + rtol * std::abs(fd[i]),
                  "element " << i << ": analytic " << a << " vs fd " << fd[i]);
  }
}

// Runs the op under a tape with loss = sum(out * w), then compares each
// input's gradient against finite differences of the reference op.
template <typename OpFn, typename RefFn>
void fd_check(std::vector<Tensor> inputs, OpFn op, RefFn ref, uint64_t wseed) {
  for (auto& t : inputs) t.set_requires_grad(true);
  Tensor out;
  {
    Tape tape;
    out = op(inputs);
    Tensor w = make_weights(out.shape(), wseed);
    tape.backward(sum(mul(out, w)));
  }
  std::vector<DT> dins;
  for (const auto& t : inputs) dins.push_back(DT::from_tensor(t));
  DT dw = DT::from_tensor(make_weights(out.shape(), wseed));
  auto loss = [&](const std::vector<DT>& ins) { return weighted(ref(ins), dw); };
  for (size_t which = 0; which < inputs.size(); ++which) {
    std::vector<double> fd = refops::fd_grad(loss, dins, which);
    check_grads(inputs[which].grad_data(), fd, inputs[which].numel());
  }
}

Tensor rnd(std::vector<int> shape, uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  Tensor t = Tensor::zeros(std::move(shape));
  refops::fill_uniform(t, seed, lo, hi);
  return t;
}

}  // namespace

TEST_CASE("gradients of elementwise ops match finite differences") {
  for (int n : {1, 2, 5}) {
    for (int m : {1, 3}) {
      uint64_t s = 100 * n + m;
      fd_check({rnd({n, m}, s), rnd({m}, s + 1)},
               [](const std::vector<Tensor>& in) { return add(in[0], in[1]); },
               [](const std::vector<DT>& in) { return refops::add(in[0], in[1]); }, s + 2);
      fd_check({rnd({n, m}, s + 3), rnd({m}, s + 4)},
               [](const std::vector<Tensor>& in) { return sub(in[0], in[1]); },
               [](const std::vector<DT>& in) { return refops::sub(in[0], in[1]); }, s + 5);
      fd_check({rnd({n, m}, s + 6), rnd({m}, s + 7)},
               [](const std::vector<Tensor>& in) { return mul(in[0], in[1]); },
               [](const std::vector<DT>& in) { return refops::mul(in[0], in[1]); }, s + 8);
      // Keep divisors away from zero so the quotient stays smooth.
      fd_check({rnd({n, m}, s + 9), rnd({m}, s + 10, 0.5f, 2.0f)},
               [](const std::vector<Tensor>& in) { return divide(in[0], in[1]); },
               [](const std::vector<DT>& in) { return refops::divide(in[0], in[1]); }, s + 11);
    }
  }
}

TEST_CASE("gradients of equal-shape elementwise ops match finite differences") {
  fd_check({rnd({2, 3, 4}, 900), rnd({2, 3, 4}, 901)},
           [](const std::vector<Tensor>& in) { return mul(in[0], in[1]); },
           [](const std::vector<DT>& in) { return refops::mul(in[0], in[1]); }, 902);
}

TEST_CASE("gradients of scalar ops match finite differences") {
  fd_check({rnd({4}, 910)},
           [](const std::vector<Tensor>& in) { return mul(sub(2.5f, in[0]), 3.0f); },
           [](const std::vector<DT>& in) {
             return refops::mul(refops::add(refops::mul(in[0], -1.0), 2.5), 3.0);
           },
           911);
  fd_check({rnd({3}, 912, 0.5f, 2.0f)},
           [](const std::vector<Tensor>& in) { return divide(1.0f, in[0]); },
           [](const std::vector<DT>& in) {
             DT r = in[0];
             for (auto& v : r.x) v = 1.0 / v;
             return r;
           },
           913);
}

TEST_CASE("matmul gradients match finite differences across sizes") {
  for (auto [n, k, m] : {std::tuple{1, 1, 1}, {2, 3, 4}, {5, 2, 5}, {1, 5, 3}}) {
    uint64_t s = 1000 + n * 25 + k * 5 + m;
    fd_check({rnd({n, k}, s), rnd({k, m}, s + 1)},
             [](const std::vector<Tensor>& in) { return matmul(in[0], in[1]); },
             [](const std::vector<DT>& in) { return refops::matmul(in[0], in[1]); }, s + 2);
  }
}

TEST_CASE("reduction gradients match finite differences") {
  for (int n : {1, 5}) {
    fd_check({rnd({n, 3}, 1100 + n)},
             [](const std::vector<Tensor>& in) { return sum(in[0]); },
             [](const std::vector<DT>& in) {
               DT r = DT::zeros({1});
               r.x[0] = refops::sum(in[0]);
               return r;
             },
             1102 + n);
    fd_check({rnd({n, 3}, 1200 + n)},
             [](const std::vector<Tensor>& in) { return mean(in[0]); },
             [](const std::vector<DT>& in) {
               DT r = DT::zeros({1});
               r.x[0] = refops::mean(in[0]);
               return r;
             },
             1202 + n);
  }
  fd_check({rnd({4, 2, 3}, 1300)},
           [](const std::vector<Tensor>& in) { return sum_channels(in[0]); },
           [](const std::vector<DT>& in) { return refops::sum_channels(in[0]); }, 1301);
}

TEST_CASE("sine and sigmoid gradients match finite differences") {
  for (float omega : {1.0f, 30.0f}) {
    // Small inputs keep high-frequency sines in a well-conditioned FD regime.
    float span = omega > 1.0f ? 0.02f : 1.0f;
    fd_check({rnd({5}, 1400 + static_cast<int>(omega), -span, span)},
             [omega](const std::vector<Tensor>& in) { return sine(in[0], omega); },
             [omega](const std::vector<DT>& in) { return refops::sine(in[0], omega); },
             1402);
  }
  fd_check({rnd({2, 5}, 1500, -3.0f, 3.0f)},
           [](const std::vector<Tensor>& in) { return sigmoid(in[0]); },
           [](const std::vector<DT>& in) { return refops::sigmoid(in[0]); }, 1501);
}

TEST_CASE("softmax gradient matches finite differences") {
  fd_check({rnd({4, 5}, 1600, -2.0f, 2.0f)},
           [](const std::vector<Tensor>& in) { return softmax0(in[0]); },
           [](const std::vector<DT>& in) { return refops::softmax0(in[0]); }, 1601);
  fd_check({rnd({1, 3}, 1602)},
           [](const std::vector<Tensor>& in) { return softmax0(in[0]); },
           [](const std::vector<DT>& in) { return refops::softmax0(in[0]); }, 1603);
}

TEST_CASE("cross entropy gradient matches finite differences") {
  std::vector<uint8_t> labels = {2, 0, 1, 2, 3};
  Tensor logits = rnd({4, 5}, 1700, -2.0f, 2.0f);
  logits.set_requires_grad(true);
  {
    Tape tape;
    Tensor loss = cross_entropy_logits0(logits, labels);
    tape.backward(loss);
  }
  DT dl = DT::from_tensor(logits);
  auto loss = [&](const std::vector<DT>& in) {
    return refops::cross_entropy_logits0(in[0], labels);
  };
  std::vector<double> fd = refops::fd_grad(loss, {dl}, 0);
  for (int64_t i = 0; i < logits.numel(); ++i) {
    double a = logits.grad_data()[i];
    CHECK(std::abs(a - fd[i]) <= 1e-5 + 1e-3 * std::abs(fd[i]));
  }
}

TEST_CASE("concat and reshape gradients match finite differences") {
  fd_check({rnd({2, 2}, 1800), rnd({2, 3}, 1801), rnd({2, 1}, 1802)},
           [](const std::vector<Tensor>& in) { return concat(in, 1); },
           [](const std::vector<DT>& in) { return refops::concat(in, 1); }, 1803);
  fd_check({rnd({3, 2}, 1810), rnd({1, 2}, 1811)},
           [](const std::vector<Tensor>& in) { return concat(in, 0); },
           [](const std::vector<DT>& in) { return refops::concat(in, 0); }, 1812);
  fd_check({rnd({2, 6}, 1820)},
           [](const std::vector<Tensor>& in) { return reshape(in[0], {3, 4}); },
           [](const std::vector<DT>& in) {
             DT r = in[0];
             r.shape = {3, 4};
             return r;
           },
           1821);
}

TEST_CASE("conv2d gradients match finite differences") {
  // The 1x4x4 input with a 2x1x3x3 kernel, plus strided and padded cases,
  // and degenerate 1x1 extents.
  struct Case {
    std::vector<int> in, k;
    int stride, pad;
  };
  for (const Case& c : {Case{{1, 4, 4}, {2, 1, 3, 3}, 1, 1},
                        Case{{2, 5, 5}, {1, 2, 3, 3}, 2, 1},
                        Case{{1, 1, 1}, {1, 1, 1, 1}, 1, 0},
                        Case{{3, 4, 5}, {2, 3, 1, 1}, 1, 0}}) {
    uint64_t s = 1900 + c.in[1] * 10 + c.k[0];
    fd_check({rnd(c.in, s), rnd(c.k, s + 1), rnd({c.k[0]}, s + 2)},
             [&](const std::vector<Tensor>& in) {
               return conv2d(in[0], in[1], in[2], c.stride, c.pad);
             },
             [&](const std::vector<DT>& in) {
               return refops::conv2d(in[0], in[1], &in[2], c.stride, c.pad);
             },
             s + 3);
  }
}

TEST_CASE("conv3d gradients match finite differences") {
  fd_check({rnd({2, 3, 3, 3}, 2000), rnd({2, 2, 3, 3, 3}, 2001), rnd({2}, 2002)},
           [](const std::vector<Tensor>& in) { return conv3d(in[0], in[1], in[2], 1, 1); },
           [](const std::vector<DT>& in) { return refops::conv3d(in[0], in[1], &in[2], 1, 1); },
           2003);
  fd_check({rnd({1, 4, 4, 4}, 2010), rnd({2, 1, 3, 3, 3}, 2011)},
           [](const std::vector<Tensor>& in) { return conv3d(in[0], in[1], Tensor(), 2, 1); },
           [](const std::vector<DT>& in) { return refops::conv3d(in[0], in[1], nullptr, 2, 1); },
           2012);
}

TEST_CASE("pool and upsample gradients match finite differences") {
  fd_check({rnd({2, 4, 6}, 2100)},
           [](const std::vector<Tensor>& in) { return avg_pool2d(in[0]); },
           [](const std::vector<DT>& in) { return refops::avg_pool(in[0], 2); }, 2101);
  fd_check({rnd({1, 2, 2, 2}, 2110)},
           [](const std::vector<Tensor>& in) { return avg_pool3d(in[0]); },
           [](const std::vector<DT>& in) { return refops::avg_pool(in[0], 3); }, 2111);
  fd_check({rnd({2, 2, 3}, 2120)},
           [](const std::vector<Tensor>& in) { return upsample2d(in[0]); },
           [](const std::vector<DT>& in) { return refops::upsample(in[0], 2); }, 2121);
  fd_check({rnd({1, 2, 1, 2}, 2130)},
           [](const std::vector<Tensor>& in) { return upsample3d(in[0]); },
           [](const std::vector<DT>& in) { return refops::upsample(in[0], 3); }, 2131);
}

TEST_CASE("bilinear sample gradient w.r.t. the image matches finite differences") {
  Tensor coords = Tensor::from(
      {6, 2}, {0.0f, 0.0f, 1.25f, 2.75f, 3.0f, 3.0f, -1.0f, 5.5f, 2.5f, 0.5f, 3.9f, 3.9f});
  fd_check({rnd({3, 4, 4}, 2200)},
           [&](const std::vector<Tensor>& in) { return bilinear_sample(in[0], coords); },
           [&](const std::vector<DT>& in) {
             return refops::bilinear_sample(in[0], DT::from_tensor(coords));
           },
           2201);
}

TEST_CASE("a composite expression backpropagates through every op at once") {
  // sigmoid(conv -> pool -> reshape -> matmul) exercises chained closures.
  Tensor in = rnd({1, 4, 4}, 2300);
  Tensor k = rnd({2, 1, 3, 3}, 2301);
  Tensor w = rnd({8, 3}, 2302);
  in.set_requires_grad(true);
  k.set_requires_grad(true);
  w.set_requires_grad(true);
  Tensor out;
  {
    Tape tape;
    Tensor h = avg_pool2d(conv2d(in, k, Tensor(), 1, 1));
    out = sigmoid(matmul(reshape(h, {1, 8}), w));
    Tensor ww = make_weights(out.shape(), 2303);
    tape.backward(sum(mul(out, ww)));
  }
  DT din = DT::from_tensor(in), dk = DT::from_tensor(k), dw = DT::from_tensor(w);
  DT dww = DT::from_tensor(make_weights(out.shape(), 2303));
  auto loss = [&](const std::vector<DT>& ins) {
    DT h = refops::avg_pool(refops::conv2d(ins[0], ins[1], nullptr, 1, 1), 2);
    h.shape = {1, 8};
    DT o = refops::sigmoid(refops::matmul(h, ins[2]));
    return weighted(o, dww);
  };
  std::vector<DT> dins = {din, dk, dw};
  check_grads(in.grad_data(), refops::fd_grad(loss, dins, 0), in.numel());
  check_grads(k.grad_data(), refops::fd_grad(loss, dins, 1), k.numel());
  check_grads(w.grad_data(), refops::fd_grad(loss, dins, 2), w.numel());
}
