#pragma once

#include <cstdint>
#include <vector>

#include "s2ct/tensor.hpp"

namespace s2ct {

// Elementwise binary ops. b may broadcast over a's leading axes: b.shape
// must equal a trailing suffix of a.shape (equal shapes included).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, float s);
Tensor sub(const Tensor& a, float s);
Tensor sub(float s, const Tensor& a);
Tensor mul(const Tensor& a, float s);
Tensor divide(const Tensor& a, float s);
Tensor divide(float s, const Tensor& a);

// C[n,m] = A[n,k] * B[k,m]
Tensor matmul(const Tensor& a, const Tensor& b);

// Full reductions to a [1] tensor.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// [C, ...] -> [C], summing everything but axis 0.
Tensor sum_channels(const Tensor& a);

// y = sin(omega * x)
Tensor sine(const Tensor& x, float omega = 1.0f);
Tensor sigmoid(const Tensor& x);

// Softmax over axis 0 of [C, ...]; every other axis indexes an independent
// distribution.
Tensor softmax0(const Tensor& x);

// Mean negative log-likelihood of integer labels under softmax of logits
// [C, ...]; labels has one entry per trailing position, each in [0, C).
Tensor cross_entropy_logits0(const Tensor& logits, const std::vector<uint8_t>& labels);

Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor reshape(const Tensor& x, std::vector<int> shape);

// conv2d: input [Ci,H,W], kernel [Co,Ci,k,k] with k odd, optional bias [Co]
// (pass an undefined Tensor to skip). Zero padding.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride = 1, int padding = 0);
// conv3d: input [Ci,D,H,W], kernel [Co,Ci,k,k,k].
Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride = 1, int padding = 0);

// 2x2 (2x2x2) mean pooling; spatial extents must be even.
Tensor avg_pool2d(const Tensor& x);
Tensor avg_pool3d(const Tensor& x);
// 2x nearest-neighbor upsampling.
Tensor upsample2d(const Tensor& x);
Tensor upsample3d(const Tensor& x);

// Bilinear sampling of img [C,H,W] at coords [N,2] holding (row, col) in
// continuous pixel units; coordinates clamp to the image border. Gradients
// flow into img only; coords must not require grad.
Tensor bilinear_sample(const Tensor& img, const Tensor& coords);

}  // namespace s2ct
