#include "s2ct/ops.hpp"

#include <cmath>
#include <cstring>

#include "s2ct/error.hpp"
#include "s2ct/threads.hpp"

#ifdef S2CT_HAVE_CBLAS
#include <cblas.h>
#include <mutex>
extern "C" void openblas_set_num_threads(int);
#endif

namespace s2ct {

namespace {

bool tracing(std::initializer_list<const Tensor*> ins) {
  if (!Tape::active()) return false;
  for (const Tensor* t : ins)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

void record(std::function<void()> node) { Tape::active()->record(std::move(node)); }

// b broadcasts over a's leading axes; returns {outer, inner} with
// a.numel == outer * inner and inner == b.numel.
std::pair<int64_t, int64_t> broadcast_dims(const Tensor& a, const Tensor& b, const char* op) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sb.size() > sa.size())
    throw DataError(std::string(op) + ": shape " + shape_to_string(sb) +
                    " does not broadcast onto " + shape_to_string(sa));
  size_t off = sa.size() - sb.size();
  for (size_t i = 0; i < sb.size(); ++i)
    if (sb[i] != sa[off + i])
      throw DataError(std::string(op) + ": shape " + shape_to_string(sb) +
                      " is not a trailing suffix of " + shape_to_string(sa));
  int64_t inner = b.numel();
  return {a.numel() / inner, inner};
}

// Accumulates go (shaped like a) into gb (shaped like b), summing over the
// leading axes. Single-threaded on purpose: one owner per output element.
void reduce_into(const float* go, float* gb, int64_t outer, int64_t inner, float sign = 1.0f) {
  for (int64_t o = 0; o < outer; ++o) {
    const float* row = go + o * inner;
    for (int64_t j = 0; j < inner; ++j) gb[j] += sign * row[j];
  }
}

enum class BinOp { Add, Sub, Mul, Div };

Tensor binary_op(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
  auto [outer, inner] = broadcast_dims(a, b, name);
  Tensor out = Tensor::zeros(a.shape());
  const float* pa = a.data();
  const float* pb = b.data();
  float* po = out.data();
  const int64_t n = a.numel();
#pragma omp parallel for schedule(static) num_threads(worker_threads()) if (n > 16384)
  for (int64_t i = 0; i < n; ++i) {
    float bv = pb[i % inner];
    switch (op) {
      case BinOp::Add: po[i] = pa[i] + bv; break;
      case BinOp::Sub: po[i] = pa[i] - bv; break;
      case BinOp::Mul: po[i] = pa[i] * bv; break;
      case BinOp::Div: po[i] = pa[i] / bv; break;
    }
  }
  if (tracing({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ca = a, cb = b, co = out;
    int64_t out_n = outer, in_n = inner;
    record([ca, cb, co, op, out_n, in_n]() mutable {
      const float* go = co.grad_data();
      if (!go) return;
      const int64_t n = ca.numel();
      const float* pa = ca.data();
      const float* pb = cb.data();
      if (ca.requires_grad()) {
        float* ga = ca.grad();
        switch (op) {
          case BinOp::Add:
          case BinOp::Sub:
            for (int64_t i = 0; i < n; ++i) ga[i] += go[i];
            break;
          case BinOp::Mul:
            for (int64_t i = 0; i < n; ++i) ga[i] += go[i] * pb[i % in_n];
            break;
          case BinOp::Div:
            for (int64_t i = 0; i < n; ++i) ga[i] += go[i] / pb[i % in_n];
            break;
        }
      }
      if (cb.requires_grad()) {
        float* gb = cb.grad();
        switch (op) {
          case BinOp::Add:
            reduce_into(go, gb, out_n, in_n);
            break;
          case BinOp::Sub:
            reduce_into(go, gb, out_n, in_n, -1.0f);
            break;
          case BinOp::Mul:
            for (int64_t o = 0; o < out_n; ++o)
              for (int64_t j = 0; j < in_n; ++j)
                gb[j] += go[o * in_n + j] * pa[o * in_n + j];
            break;
          case BinOp::Div:
            for (int64_t o = 0; o < out_n; ++o)
              for (int64_t j = 0; j < in_n; ++j) {
                int64_t i = o * in_n + j;
                gb[j] -= go[i] * pa[i] / (pb[j] * pb[j]);
              }
            break;
        }
      }
    });
  }
  return out;
}

Tensor scalar_op(const Tensor& a, float s, bool sub_from, BinOp op) {
  Tensor out = Tensor::zeros(a.shape());
  const float* pa = a.data();
  float* po = out.data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) {
    switch (op) {
      case BinOp::Add: po[i] = pa[i] + s; break;
      case BinOp::Sub: po[i] = sub_from ? s - pa[i] : pa[i] - s; break;
      case BinOp::Mul: po[i] = pa[i] * s; break;
      case BinOp::Div: po[i] = sub_from ? s / pa[i] : pa[i] / s; break;
    }
  }
  if (tracing({&a})) {
    out.set_requires_grad(true);
    Tensor ca = a, co = out;
    record([ca, co, s, sub_from, op]() mutable {
      const float* go = co.grad_data();
      if (!go || !ca.requires_grad()) return;
      float* ga = ca.grad();
      const float* pa = ca.data();
      const int64_t n = ca.numel();
      switch (op) {
        case BinOp::Add:
          for (int64_t i = 0; i < n; ++i) ga[i] += go[i];
          break;
        case BinOp::Sub:
          for (int64_t i = 0; i < n; ++i) ga[i] += sub_from ? -go[i] : go[i];
          break;
        case BinOp::Mul:
          for (int64_t i = 0; i < n; ++i) ga[i] += go[i] * s;
          break;
        case BinOp::Div:
          if (sub_from)
            for (int64_t i = 0; i < n; ++i) ga[i] -= go[i] * s / (pa[i] * pa[i]);
          else
            for (int64_t i = 0; i < n; ++i) ga[i] += go[i] / s;
          break;
      }
    });
  }
  return out;
}

#ifdef S2CT_HAVE_CBLAS
void blas_init_once() {
  static std::once_flag once;
  std::call_once(once, [] { openblas_set_num_threads(worker_threads()); });
}

// C[n,m] (+)= A[n,k] * B[k,m], with optional transposes on the stored
// operand shapes.
void sgemm(bool ta, bool tb, int n, int m, int k, const float* A, int lda, const float* B,
           int ldb, float beta, float* C) {
  blas_init_once();
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, n, m,
              k, 1.0f, A, lda, B, ldb, beta, C, m);
}
#else
void sgemm(bool ta, bool tb, int n, int m, int k, const float* A, int lda, const float* B,
           int ldb, float beta, float* C) {
  for (int i = 0; i < n; ++i) {
    float* crow = C + static_cast<int64_t>(i) * m;
    if (beta == 0.0f) std::memset(crow, 0, sizeof(float) * m);
    for (int kk = 0; kk < k; ++kk) {
      float av = ta ? A[static_cast<int64_t>(kk) * lda + i] : A[static_cast<int64_t>(i) * lda + kk];
      const float* brow = tb ? nullptr : B + static_cast<int64_t>(kk) * ldb;
      if (tb) {
        for (int j = 0; j < m; ++j) crow[j] += av * B[static_cast<int64_t>(j) * ldb + kk];
      } else {
        for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
      }
    }
  }
}
#endif

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Mul, "mul"); }
Tensor divide(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Div, "divide"); }

Tensor add(const Tensor& a, float s) { return scalar_op(a, s, false, BinOp::Add); }
Tensor sub(const Tensor& a, float s) { return scalar_op(a, s, false, BinOp::Sub); }
Tensor sub(float s, const Tensor& a) { return scalar_op(a, s, true, BinOp::Sub); }
Tensor mul(const Tensor& a, float s) { return scalar_op(a, s, false, BinOp::Mul); }
Tensor divide(const Tensor& a, float s) { return scalar_op(a, s, false, BinOp::Div); }
Tensor divide(float s, const Tensor& a) { return scalar_op(a, s, true, BinOp::Div); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DataError("matmul: incompatible shapes " + a.shape_string() + " x " + b.shape_string());
  const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor out = Tensor::zeros({n, m});
  sgemm(false, false, n, m, k, a.data(), k, b.data(), m, 0.0f, out.data());
  if (tracing({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ca = a, cb = b, co = out;
    record([ca, cb, co, n, m, k]() mutable {
      const float* go = co.grad_data();
      if (!go) return;
      // dA += dC * B^T, dB += A^T * dC
      if (ca.requires_grad()) sgemm(false, true, n, k, m, go, m, cb.data(), m, 1.0f, ca.grad());
      if (cb.requires_grad()) sgemm(true, false, k, m, n, ca.data(), k, go, m, 1.0f, cb.grad());
    });
  }
  return out;
}

namespace {

Tensor reduce_full(const Tensor& a, bool take_mean) {
  const int64_t n = a.numel();
  const float* pa = a.data();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += pa[i];
  if (take_mean) acc /= static_cast<double>(n);
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  if (tracing({&a})) {
    out.set_requires_grad(true);
    Tensor ca = a, co = out;
    record([ca, co, take_mean]() mutable {
      const float* go = co.grad_data();
      if (!go || !ca.requires_grad()) return;
      const int64_t n = ca.numel();
      const float g = take_mean ? go[0] / static_cast<float>(n) : go[0];
      float* ga = ca.grad();
      for (int64_t i = 0; i < n; ++i) ga[i] += g;
    });
  }
  return out;
}

}  // namespace

Tensor sum(const Tensor& a) { return reduce_full(a, false); }
Tensor mean(const Tensor& a) { return reduce_full(a, true); }

Tensor sum_channels(const Tensor& a) {
  if (a.rank() < 1) throw DataError("sum_channels: rank-0 input");
  const int C = a.dim(0);
  const int64_t inner = a.numel() / C;
  Tensor out = Tensor::zeros({C});
  const float* pa = a.data();
  float* po = out.data();
  for (int c = 0; c < C; ++c) {
    double acc = 0.0;
    const float* row = pa + c * inner;
    for (int64_t j = 0; j < inner; ++j) acc += row[j];
    po[c] = static_cast<float>(acc);
  }
  if (tracing({&a})) {
    out.set_requires_grad(true);
    Tensor ca = a, co = out;
    record([ca, co, inner]() mutable {
      const float* go = co.grad_data();
      if (!go || !ca.requires_grad()) return;
      float* ga = ca.grad();
      const int C = ca.dim(0);
      for (int c = 0; c < C; ++c) {
        float g = go[c];
        float* row = ga + c * inner;
        for (int64_t j = 0; j < inner; ++j) row[j] += g;
      }
    });
  }
  return out;
}

Tensor sine(const Tensor& x, float omega) {
  Tensor out = Tensor::zeros(x.shape());
  const float* px = x.data();
  float* po = out.data();
  const int64_t n = x.numel();
#pragma omp parallel for schedule(static) num_threads(worker_threads()) if (n > 16384)
  for (int64_t i = 0; i < n; ++i) po[i] = std::sin(omega * px[i]);
  if (tracing({&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    record([cx, co, omega]() mutable {
      const float* go = co.grad_data();
      if (!go || !cx.requires_grad()) return;
      float* gx = cx.grad();
      const float* px = cx.data();
      const int64_t n = cx.numel();
#pragma omp parallel for schedule(static) num_threads(worker_threads()) if (n > 16384)
      for (int64_t i = 0; i < n; ++i) gx[i] += go[i] * omega * std::cos(omega * px[i]);
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const float* px = x.data();
  float* po = out.data();
  const int64_t n = x.numel();
#pragma omp parallel for schedule(static) num_threads(worker_threads()) if (n > 16384)
  for (int64_t i = 0; i < n; ++i) po[i] = 1.0f / (1.0f + std::exp(-px[i]));
  if (tracing({&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    record([cx, co]() mutable {
      const float* go = co.grad_data();
      if (!go || !cx.requires_grad()) return;
      float* gx = cx.grad();
      const float* py = co.data();
      const int64_t n = cx.numel();
#pragma omp parallel for schedule(static) num_threads(worker_threads()) if (n > 16384)
      for (int64_t i = 0; i < n; ++i) gx[i] += go[i] * py[i] * (1.0f - py[i]);
    });
  }
  return out;
}

Tensor softmax0(const Tensor& x) {
  if (x.rank() < 1) throw DataError("softmax0: rank-0 input");
  const int C = x.dim(0);
  const int64_t inner = x.numel() / C;
  Tensor out = Tensor::zeros(x.shape());
  const float* px = x.data();
  float* po = out.data();
#pragma omp parallel for schedule(static) num_threads(worker_threads()) if (inner > 4096)
  for (int64_t j = 0; j < inner; ++j) {
    float mx = px[j];
    for (int c = 1; c < C; ++c) mx = std::max(mx, px[c * inner + j]);
    float denom = 0.0f;
    for (int c = 0; c < C; ++c) {
      float e = std::exp(px[c * inner + j] - mx);
      po[c * inner + j] = e;
      denom += e;
    }
    for (int c = 0; c < C; ++c) po[c * inner + j] /= denom;
  }
  if (tracing({&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    record([cx, co, inner]() mutable {
      const float* go = co.grad_data();
      if (!go || !cx.requires_grad()) return;
      float* gx = cx.grad();
      const float* py = co.data();
      const int C = cx.dim(0);
#pragma omp parallel for schedule(static) num_threads(worker_threads()) if (inner > 4096)
      for (int64_t j = 0; j < inner; ++j) {
        float dot = 0.0f;
        for (int c = 0; c < C; ++c) dot += go[c * inner + j] * py[c * inner + j];
        for (int c = 0; c < C; ++c)
          gx[c * inner + j] += py[c * inner + j] * (go[c * inner + j] - dot);
      }
    });
  }
  return out;
}

Tensor cross_entropy_logits0(const Tensor& logits, const std::vector<uint8_t>& labels) {
  if (logits.rank() < 1) throw DataError("cross_entropy_logits0: rank-0 input");
  const int C = logits.dim(0);
  const int64_t inner = logits.numel() / C;
  if (static_cast<int64_t>(labels.size()) != inner)
    throw DataError("cross_entropy_logits0: " + std::to_string(labels.size()) +
                    " labels for " + std::to_string(inner) + " positions");
  // Probabilities are kept for the backward pass.
  auto probs = std::make_shared<std::vector<float>>(static_cast<size_t>(logits.numel()));
  const float* px = logits.data();
  float* pp = probs->data();
  double total = 0.0;
  for (int64_t j = 0; j < inner; ++j) {
    if (labels[j] >= C)
      throw DataError("cross_entropy_logits0: label " + std::to_string(int(labels[j])) +
                      " out of range for " + std::to_string(C) + " classes");
    float mx = px[j];
    for (int c = 1; c < C; ++c) mx = std::max(mx, px[c * inner + j]);
    double denom = 0.0;
    for (int c = 0; c < C; ++c) {
      float e = std::exp(px[c * inner + j] - mx);
      pp[c * inner + j] = e;
      denom += e;
    }
    for (int c = 0; c < C; ++c) pp[c * inner + j] = static_cast<float>(pp[c * inner + j] / denom);
    total -= std::log(static_cast<double>(pp[labels[j] * inner + j]) + 1e-30);
  }
  Tensor out = Tensor::scalar(static_cast<float>(total / static_cast<double>(inner)));
  if (tracing({&logits})) {
    out.set_requires_grad(true);
    Tensor cx = logits, co = out;
    auto lbl = std::make_shared<std::vector<uint8_t>>(labels);
    record([cx, co, probs, lbl, inner]() mutable {
      const float* go = co.grad_data();
      if (!go || !cx.requires_grad()) return;
      float* gx = cx.grad();
      const float* pp = probs->data();
      const int C = cx.dim(0);
      const float scale = go[0] / static_cast<float>(inner);
      for (int64_t j = 0; j < inner; ++j) {
        const int t = (*lbl)[j];
        for (int c = 0; c < C; ++c) {
          float delta = (c == t) ? 1.0f : 0.0f;
          gx[c * inner + j] += scale * (pp[c * inner + j] - delta);
        }
      }
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw DataError("concat: no inputs");
  const int rank = xs[0].rank();
  if (axis < 0 || axis >= rank)
    throw DataError("concat: axis " + std::to_string(axis) + " out of range for rank " +
                    std::to_string(rank));
  std::vector<int> shape = xs[0].shape();
  int total_axis = 0;
  for (const Tensor& x : xs) {
    if (x.rank() != rank)
      throw DataError("concat: rank mismatch " + x.shape_string() + " vs " +
                      xs[0].shape_string());
    for (int d = 0; d < rank; ++d)
      if (d != axis && x.dim(d) != shape[d])
        throw DataError("concat: shape mismatch " + x.shape_string() + " vs " +
                        xs[0].shape_string() + " outside axis " + std::to_string(axis));
    total_axis += x.dim(axis);
  }
  shape[axis] = total_axis;
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= shape[d];
  for (int d = axis + 1; d < rank; ++d) inner *= shape[d];
  Tensor out = Tensor::zeros(shape);
  float* po = out.data();
  const int64_t out_stride = static_cast<int64_t>(total_axis) * inner;
  int64_t offset = 0;
  for (const Tensor& x : xs) {
    const int64_t block = static_cast<int64_t>(x.dim(axis)) * inner;
    const float* px = x.data();
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(po + o * out_stride + offset, px + o * block, sizeof(float) * block);
    offset += block;
  }
  bool any_grad = false;
  for (const Tensor& x : xs)
    if (x.requires_grad()) any_grad = true;
  if (Tape::active() && any_grad) {
    out.set_requires_grad(true);
    std::vector<Tensor> cxs = xs;
    Tensor co = out;
    record([cxs, co, outer, inner, out_stride]() mutable {
      const float* go = co.grad_data();
      if (!go) return;
      int64_t offset = 0;
      for (Tensor& x : cxs) {
        const int64_t block = x.numel() / outer;
        if (x.requires_grad()) {
          float* gx = x.grad();
          for (int64_t o = 0; o < outer; ++o) {
            const float* src = go + o * out_stride + offset;
            float* dst = gx + o * block;
            for (int64_t i = 0; i < block; ++i) dst[i] += src[i];
          }
        }
        offset += block;
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  Tensor out = Tensor::zeros(shape);
  if (out.numel() != x.numel())
    throw DataError("reshape: cannot view " + x.shape_string() + " as " +
                    shape_to_string(shape));
  std::memcpy(out.data(), x.data(), sizeof(float) * x.numel());
  if (tracing({&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    record([cx, co]() mutable {
      const float* go = co.grad_data();
      if (!go || !cx.requires_grad()) return;
      float* gx = cx.grad();
      const int64_t n = cx.numel();
      for (int64_t i = 0; i < n; ++i) gx[i] += go[i];
    });
  }
  return out;
}

namespace {

struct ConvDims {
  int ci, co, k, stride, pad;
  int in_sp[3];   // spatial extents of the input (D,H,W; D=1 for 2d)
  int out_sp[3];
};

ConvDims check_conv(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
                    int padding, int nsp, const char* name) {
  if (input.rank() != nsp + 1 || kernel.rank() != nsp + 2)
    throw DataError(std::string(name) + ": expected input rank " + std::to_string(nsp + 1) +
                    " and kernel rank " + std::to_string(nsp + 2) + ", got " +
                    input.shape_string() + " and " + kernel.shape_string());
  ConvDims d{};
  d.ci = input.dim(0);
  d.co = kernel.dim(0);
  d.k = kernel.dim(2);
  d.stride = stride;
  d.pad = padding;
  if (kernel.dim(1) != d.ci)
    throw DataError(std::string(name) + ": kernel expects " + std::to_string(kernel.dim(1)) +
                    " input channels, input has " + std::to_string(d.ci));
  for (int i = 2; i < kernel.rank(); ++i)
    if (kernel.dim(i) != d.k)
      throw DataError(std::string(name) + ": kernel must be square, got " +
                      kernel.shape_string());
  if (d.k % 2 == 0) throw DataError(std::string(name) + ": kernel size must be odd");
  if (stride < 1) throw DataError(std::string(name) + ": stride must be >= 1");
  if (padding < 0) throw DataError(std::string(name) + ": padding must be >= 0");
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != d.co))
    throw DataError(std::string(name) + ": bias shape " + bias.shape_string() +
                    " does not match " + std::to_string(d.co) + " output channels");
  for (int i = 0; i < 3; ++i) d.in_sp[i] = d.out_sp[i] = 1;
  for (int i = 0; i < nsp; ++i) {
    d.in_sp[3 - nsp + i] = input.dim(1 + i);
    int o = (d.in_sp[3 - nsp + i] + 2 * padding - d.k) / stride + 1;
    if (o < 1)
      throw DataError(std::string(name) + ": kernel does not fit input " +
                      input.shape_string());
    d.out_sp[3 - nsp + i] = o;
  }
  return d;
}

// Shared 2d/3d convolution kernels; the 2d case runs with D=1, kz=0 only.
void conv_forward(const ConvDims& d, int nsp, const float* in, const float* w, const float* b,
                  float* out) {
  const int kd = nsp == 3 ? d.k : 1;
  const int ID = d.in_sp[0], IH = d.in_sp[1], IW = d.in_sp[2];
  const int OD = d.out_sp[0], OH = d.out_sp[1], OW = d.out_sp[2];
  const int pad_d = nsp == 3 ? d.pad : 0;
  const int64_t in_ch = static_cast<int64_t>(ID) * IH * IW;
  const int64_t out_ch = static_cast<int64_t>(OD) * OH * OW;
  const int64_t w_ch = static_cast<int64_t>(kd) * d.k * d.k;
#pragma omp parallel for collapse(2) schedule(static) num_threads(worker_threads())
  for (int co = 0; co < d.co; ++co) {
    for (int oz = 0; oz < OD; ++oz) {
      for (int oy = 0; oy < OH; ++oy) {
        for (int ox = 0; ox < OW; ++ox) {
          float acc = b ? b[co] : 0.0f;
          for (int ci = 0; ci < d.ci; ++ci) {
            const float* inc = in + ci * in_ch;
            const float* wc = w + (co * d.ci + ci) * w_ch;
            for (int kz = 0; kz < kd; ++kz) {
              int iz = oz * d.stride - pad_d + kz;
              if (iz < 0 || iz >= ID) continue;
              for (int ky = 0; ky < d.k; ++ky) {
                int iy = oy * d.stride - d.pad + ky;
                if (iy < 0 || iy >= IH) continue;
                for (int kx = 0; kx < d.k; ++kx) {
                  int ix = ox * d.stride - d.pad + kx;
                  if (ix < 0 || ix >= IW) continue;
                  acc += inc[(static_cast<int64_t>(iz) * IH + iy) * IW + ix] *
                         wc[(static_cast<int64_t>(kz) * d.k + ky) * d.k + kx];
                }
              }
            }
          }
          out[((static_cast<int64_t>(co) * OD + oz) * OH + oy) * OW + ox] = acc;
        }
      }
    }
  }
}

void conv_backward_input(const ConvDims& d, int nsp, const float* go, const float* w,
                         float* gin) {
  const int kd = nsp == 3 ? d.k : 1;
  const int ID = d.in_sp[0], IH = d.in_sp[1], IW = d.in_sp[2];
  const int OD = d.out_sp[0], OH = d.out_sp[1], OW = d.out_sp[2];
  const int pad_d = nsp == 3 ? d.pad : 0;
  const int64_t out_ch = static_cast<int64_t>(OD) * OH * OW;
  const int64_t w_ch = static_cast<int64_t>(kd) * d.k * d.k;
#pragma omp parallel for collapse(2) schedule(static) num_threads(worker_threads())
  for (int ci = 0; ci < d.ci; ++ci) {
    for (int iz = 0; iz < ID; ++iz) {
      for (int iy = 0; iy < IH; ++iy) {
        for (int ix = 0; ix < IW; ++ix) {
          float acc = 0.0f;
          for (int co = 0; co < d.co; ++co) {
            const float* goc = go + co * out_ch;
            const float* wc = w + (co * d.ci + ci) * w_ch;
            for (int kz = 0; kz < kd; ++kz) {
              int nz = iz + pad_d - kz;
              if (nz < 0 || nz % d.stride) continue;
              int oz = nz / d.stride;
              if (oz >= OD) continue;
              for (int ky = 0; ky < d.k; ++ky) {
                int ny = iy + d.pad - ky;
                if (ny < 0 || ny % d.stride) continue;
                int oy = ny / d.stride;
                if (oy >= OH) continue;
                for (int kx = 0; kx < d.k; ++kx) {
                  int nx = ix + d.pad - kx;
                  if (nx < 0 || nx % d.stride) continue;
                  int ox = nx / d.stride;
                  if (ox >= OW) continue;
                  acc += goc[(static_cast<int64_t>(oz) * OH + oy) * OW + ox] *
                         wc[(static_cast<int64_t>(kz) * d.k + ky) * d.k + kx];
                }
              }
            }
          }
          gin[((static_cast<int64_t>(ci) * ID + iz) * IH + iy) * IW + ix] += acc;
        }
      }
    }
  }
}

void conv_backward_kernel(const ConvDims& d, int nsp, const float* go, const float* in,
                          float* gw) {
  const int kd = nsp == 3 ? d.k : 1;
  const int ID = d.in_sp[0], IH = d.in_sp[1], IW = d.in_sp[2];
  const int OD = d.out_sp[0], OH = d.out_sp[1], OW = d.out_sp[2];
  const int pad_d = nsp == 3 ? d.pad : 0;
  const int64_t in_ch = static_cast<int64_t>(ID) * IH * IW;
  const int64_t out_ch = static_cast<int64_t>(OD) * OH * OW;
  const int64_t w_ch = static_cast<int64_t>(kd) * d.k * d.k;
#pragma omp parallel for schedule(static) num_threads(worker_threads())
  for (int co = 0; co < d.co; ++co) {
    const float* goc = go + co * out_ch;
    for (int ci = 0; ci < d.ci; ++ci) {
      const float* inc = in + ci * in_ch;
      float* gwc = gw + (co * d.ci + ci) * w_ch;
      for (int kz = 0; kz < kd; ++kz) {
        for (int ky = 0; ky < d.k; ++ky) {
          for (int kx = 0; kx < d.k; ++kx) {
            double acc = 0.0;
            for (int oz = 0; oz < OD; ++oz) {
              int iz = oz * d.stride - pad_d + kz;
              if (iz < 0 || iz >= ID) continue;
              for (int oy = 0; oy < OH; ++oy) {
                int iy = oy * d.stride - d.pad + ky;
                if (iy < 0 || iy >= IH) continue;
                for (int ox = 0; ox < OW; ++ox) {
                  int ix = ox * d.stride - d.pad + kx;
                  if (ix < 0 || ix >= IW) continue;
                  acc += static_cast<double>(goc[(static_cast<int64_t>(oz) * OH + oy) * OW + ox]) *
                         inc[(static_cast<int64_t>(iz) * IH + iy) * IW + ix];
                }
              }
            }
            gwc[(static_cast<int64_t>(kz) * d.k + ky) * d.k + kx] += static_cast<float>(acc);
          }
        }
      }
    }
  }
}

Tensor conv_nd(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
               int padding, int nsp, const char* name) {
  ConvDims d = check_conv(input, kernel, bias, stride, padding, nsp, name);
  std::vector<int> oshape{d.co};
  for (int i = 3 - nsp; i < 3; ++i) oshape.push_back(d.out_sp[i]);
  Tensor out = Tensor::zeros(oshape);
  conv_forward(d, nsp, input.data(), kernel.data(), bias.defined() ? bias.data() : nullptr,
               out.data());
  const Tensor* maybe_bias = bias.defined() ? &bias : nullptr;
  bool trace = bias.defined() ? tracing({&input, &kernel, &bias}) : tracing({&input, &kernel});
  if (trace) {
    out.set_requires_grad(true);
    Tensor cin = input, ck = kernel, cb = bias, co = out;
    record([cin, ck, cb, co, d, nsp]() mutable {
      const float* go = co.grad_data();
      if (!go) return;
      if (cin.requires_grad()) conv_backward_input(d, nsp, go, ck.data(), cin.grad());
      if (ck.requires_grad()) conv_backward_kernel(d, nsp, go, cin.data(), ck.grad());
      if (cb.defined() && cb.requires_grad()) {
        float* gb = cb.grad();
        const int64_t out_ch = co.numel() / d.co;
        for (int c = 0; c < d.co; ++c) {
          double acc = 0.0;
          const float* src = go + c * out_ch;
          for (int64_t i = 0; i < out_ch; ++i) acc += src[i];
          gb[c] += static_cast<float>(acc);
        }
      }
    });
  }
  (void)maybe_bias;
  return out;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
              int padding) {
  return conv_nd(input, kernel, bias, stride, padding, 2, "conv2d");
}

Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
              int padding) {
  return conv_nd(input, kernel, bias, stride, padding, 3, "conv3d");
}

namespace {

Tensor pool_nd(const Tensor& x, int nsp, const char* name) {
  if (x.rank() != nsp + 1)
    throw DataError(std::string(name) + ": expected rank " + std::to_string(nsp + 1) +
                    ", got " + x.shape_string());
  std::vector<int> oshape = x.shape();
  for (int i = 1; i <= nsp; ++i) {
    if (oshape[i] % 2)
      throw DataError(std::string(name) + ": spatial extents must be even, got " +
                      x.shape_string());
    oshape[i] /= 2;
  }
  const int C = x.dim(0);
  const int D = nsp == 3 ? x.dim(1) : 1;
  const int H = x.dim(nsp - 1), W = x.dim(nsp);
  const int OD = nsp == 3 ? D / 2 : 1, OH = H / 2, OW = W / 2;
  const int kd = nsp == 3 ? 2 : 1;
  const float inv = 1.0f / static_cast<float>(4 * kd);
  Tensor out = Tensor::zeros(oshape);
  const float* px = x.data();
  float* po = out.data();
#pragma omp parallel for schedule(static) num_threads(worker_threads())
  for (int c = 0; c < C; ++c) {
    const float* xc = px + static_cast<int64_t>(c) * D * H * W;
    float* oc = po + static_cast<int64_t>(c) * OD * OH * OW;
    for (int oz = 0; oz < OD; ++oz)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          float acc = 0.0f;
          for (int dz = 0; dz < kd; ++dz)
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx)
                acc += xc[(static_cast<int64_t>(oz * kd + dz) * H + (oy * 2 + dy)) * W +
                          (ox * 2 + dx)];
          oc[(static_cast<int64_t>(oz) * OH + oy) * OW + ox] = acc * inv;
        }
  }
  if (tracing({&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    record([cx, co, nsp]() mutable {
      const float* go = co.grad_data();
      if (!go || !cx.requires_grad()) return;
      float* gx = cx.grad();
      const int C = cx.dim(0);
      const int D = nsp == 3 ? cx.dim(1) : 1;
      const int H = cx.dim(nsp - 1), W = cx.dim(nsp);
      const int OD = nsp == 3 ? D / 2 : 1, OH = H / 2, OW = W / 2;
      const int kd = nsp == 3 ? 2 : 1;
      const float inv = 1.0f / static_cast<float>(4 * kd);
#pragma omp parallel for schedule(static) num_threads(worker_threads())
      for (int c = 0; c < C; ++c) {
        const float* goc = go + static_cast<int64_t>(c) * OD * OH * OW;
        float* gxc = gx + static_cast<int64_t>(c) * D * H * W;
        for (int oz = 0; oz < OD; ++oz)
          for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox) {
              float g = goc[(static_cast<int64_t>(oz) * OH + oy) * OW + ox] * inv;
              for (int dz = 0; dz < kd; ++dz)
                for (int dy = 0; dy < 2; ++dy)
                  for (int dx = 0; dx < 2; ++dx)
                    gxc[(static_cast<int64_t>(oz * kd + dz) * H + (oy * 2 + dy)) * W +
                        (ox * 2 + dx)] += g;
            }
      }
    });
  }
  return out;
}

Tensor upsample_nd(const Tensor& x, int nsp, const char* name) {
  if (x.rank() != nsp + 1)
    throw DataError(std::string(name) + ": expected rank " + std::to_string(nsp + 1) +
                    ", got " + x.shape_string());
  std::vector<int> oshape = x.shape();
  for (int i = 1; i <= nsp; ++i) oshape[i] *= 2;
  const int C = x.dim(0);
  const int D = nsp == 3 ? x.dim(1) : 1;
  const int H = x.dim(nsp - 1), W = x.dim(nsp);
  const int kd = nsp == 3 ? 2 : 1;
  const int OD = D * kd, OH = H * 2, OW = W * 2;
  Tensor out = Tensor::zeros(oshape);
  const float* px = x.data();
  float* po = out.data();
#pragma omp parallel for schedule(static) num_threads(worker_threads())
  for (int c = 0; c < C; ++c) {
    const float* xc = px + static_cast<int64_t>(c) * D * H * W;
    float* oc = po + static_cast<int64_t>(c) * OD * OH * OW;
    for (int z = 0; z < OD; ++z)
      for (int y = 0; y < OH; ++y)
        for (int xw = 0; xw < OW; ++xw)
          oc[(static_cast<int64_t>(z) * OH + y) * OW + xw] =
              xc[(static_cast<int64_t>(z / kd) * H + y / 2) * W + xw / 2];
  }
  if (tracing({&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    record([cx, co, nsp]() mutable {
      const float* go = co.grad_data();
      if (!go || !cx.requires_grad()) return;
      float* gx = cx.grad();
      const int C = cx.dim(0);
      const int D = nsp == 3 ? cx.dim(1) : 1;
      const int H = cx.dim(nsp - 1), W = cx.dim(nsp);
      const int kd = nsp == 3 ? 2 : 1;
      const int OD = D * kd, OH = H * 2, OW = W * 2;
#pragma omp parallel for schedule(static) num_threads(worker_threads())
      for (int c = 0; c < C; ++c) {
        const float* goc = go + static_cast<int64_t>(c) * OD * OH * OW;
        float* gxc = gx + static_cast<int64_t>(c) * D * H * W;
        for (int z = 0; z < OD; ++z)
          for (int y = 0; y < OH; ++y)
            for (int xw = 0; xw < OW; ++xw)
              gxc[(static_cast<int64_t>(z / kd) * H + y / 2) * W + xw / 2] +=
                  goc[(static_cast<int64_t>(z) * OH + y) * OW + xw];
      }
    });
  }
  return out;
}

}  // namespace

Tensor avg_pool2d(const Tensor& x) { return pool_nd(x, 2, "avg_pool2d"); }
Tensor avg_pool3d(const Tensor& x) { return pool_nd(x, 3, "avg_pool3d"); }
Tensor upsample2d(const Tensor& x) { return upsample_nd(x, 2, "upsample2d"); }
Tensor upsample3d(const Tensor& x) { return upsample_nd(x, 3, "upsample3d"); }

Tensor bilinear_sample(const Tensor& img, const Tensor& coords) {
  if (img.rank() != 3) throw DataError("bilinear_sample: image must be [C,H,W], got " + img.shape_string());
  if (coords.rank() != 2 || coords.dim(1) != 2)
    throw DataError("bilinear_sample: coords must be [N,2], got " + coords.shape_string());
  if (coords.requires_grad())
    throw DataError("bilinear_sample: coordinates must not require grad");
  const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
  const int N = coords.dim(0);
  Tensor out = Tensor::zeros({N, C});
  const float* pi = img.data();
  const float* pc = coords.data();
  float* po = out.data();
#pragma omp parallel for schedule(static) num_threads(worker_threads()) if (N > 4096)
  for (int n = 0; n < N; ++n) {
    float r = std::min(std::max(pc[2 * n], 0.0f), static_cast<float>(H - 1));
    float c = std::min(std::max(pc[2 * n + 1], 0.0f), static_cast<float>(W - 1));
    int r0 = std::min(static_cast<int>(r), H - 2 >= 0 ? H - 2 : 0);
    int c0 = std::min(static_cast<int>(c), W - 2 >= 0 ? W - 2 : 0);
    float fr = r - static_cast<float>(r0);
    float fc = c - static_cast<float>(c0);
    int r1 = std::min(r0 + 1, H - 1);
    int c1 = std::min(c0 + 1, W - 1);
    const float w00 = (1.0f - fr) * (1.0f - fc);
    const float w01 = (1.0f - fr) * fc;
    const float w10 = fr * (1.0f - fc);
    const float w11 = fr * fc;
    for (int ch = 0; ch < C; ++ch) {
      const float* im = pi + static_cast<int64_t>(ch) * H * W;
      po[static_cast<int64_t>(n) * C + ch] = w00 * im[r0 * W + c0] + w01 * im[r0 * W + c1] +
                                             w10 * im[r1 * W + c0] + w11 * im[r1 * W + c1];
    }
  }
  if (tracing({&img})) {
    out.set_requires_grad(true);
    Tensor ci = img, cc = coords, co = out;
    record([ci, cc, co]() mutable {
      const float* go = co.grad_data();
      if (!go || !ci.requires_grad()) return;
      float* gi = ci.grad();
      const float* pc = cc.data();
      const int C = ci.dim(0), H = ci.dim(1), W = ci.dim(2);
      const int N = cc.dim(0);
      // One thread per channel: scatter targets are disjoint across channels.
#pragma omp parallel for schedule(static) num_threads(worker_threads()) if (C > 1)
      for (int ch = 0; ch < C; ++ch) {
        float* gim = gi + static_cast<int64_t>(ch) * H * W;
        for (int n = 0; n < N; ++n) {
          float r = std::min(std::max(pc[2 * n], 0.0f), static_cast<float>(H - 1));
          float c = std::min(std::max(pc[2 * n + 1], 0.0f), static_cast<float>(W - 1));
          int r0 = std::min(static_cast<int>(r), H - 2 >= 0 ? H - 2 : 0);
          int c0 = std::min(static_cast<int>(c), W - 2 >= 0 ? W - 2 : 0);
          float fr = r - static_cast<float>(r0);
          float fc = c - static_cast<float>(c0);
          int r1 = std::min(r0 + 1, H - 1);
          int c1 = std::min(c0 + 1, W - 1);
          const float g = go[static_cast<int64_t>(n) * C + ch];
          gim[r0 * W + c0] += g * (1.0f - fr) * (1.0f - fc);
          gim[r0 * W + c1] += g * (1.0f - fr) * fc;
          gim[r1 * W + c0] += g * fr * (1.0f - fc);
          gim[r1 * W + c1] += g * fr * fc;
        }
      }
    });
  }
  return out;
}

}  // namespace s2ct
