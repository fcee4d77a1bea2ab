#pragma once

#include <span>
#include <vector>

#include "zsm/autograd.hpp"
#include "zsm/tensor.hpp"

namespace zsm {

//
// Differentiable primitives. Every op works on NCHW tensors, is deterministic,
// and records a backward closure when any input requires a gradient. Shape
// violations raise std::invalid_argument.
//

inline constexpr double kLeakySlope = 0.1;

/// Kernel + optional bias of a stride-1, "same"-padded convolution.
/// weight is (out, in_per_group, kh, kw), bias is (1, out, 1, 1).
template <typename T>
struct ConvWeights {
  Var<T> weight;
  Var<T> bias;  // undefined means no bias

  [[nodiscard]] int out_channels() const { return weight.shape().n; }
  [[nodiscard]] int in_channels() const { return weight.shape().c; }
  [[nodiscard]] int kernel_h() const { return weight.shape().h; }
  [[nodiscard]] int kernel_w() const { return weight.shape().w; }
  [[nodiscard]] int taps() const { return kernel_h() * kernel_w(); }
};

/// Bilinear read of feature[batch, channel] at fractional (y, x). Taps that
/// fall outside the grid read as zero.
template <typename T>
T bilinear_sample(const Tensor<T>& feature, T y, T x, int channel, int batch);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T s);
template <typename T>
Var<T> sigmoid(const Var<T>& a);
template <typename T>
Var<T> tanh(const Var<T>& a);
template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope = T(kLeakySlope));

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts);
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Var<T> parts[] = {a, b};
  return concat_channels<T>(std::span<const Var<T>>(parts));
}
template <typename T>
Var<T> slice_channels(const Var<T>& a, int begin, int count);

/// Stride-1 convolution with zero padding of kernel/2 on each side (odd kernels only).
template <typename T>
Var<T> conv2d(const Var<T>& input, const ConvWeights<T>& w);

/// Deformable convolution (no modulation mask). `offsets` has 2*K*groups
/// channels ordered group-major, then tap in row-major kernel order, then
/// (dy, dx). Output spatial size equals the input's.
template <typename T>
Var<T> deformable_conv(const Var<T>& input, const Var<T>& offsets, const ConvWeights<T>& w,
                       int groups);

/// Sub-pixel rearrangement: channel c*r*r + dy*r + dx of the input becomes
/// phase (dy, dx) of output channel c.
template <typename T>
Var<T> pixel_shuffle(const Var<T>& input, int r);
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& input, int r);

/// 2x2 mean pooling, stride 2 (odd trailing rows/columns are dropped).
template <typename T>
Var<T> avg_pool2(const Var<T>& input);

/// Bilinear resize with half-pixel centers (align_corners = false).
template <typename T>
Var<T> resize_bilinear(const Var<T>& input, int out_h, int out_w);

/// Mean over all elements of sqrt((pred - target)^2 + eps^2). Returns a 1x1x1x1 scalar.
template <typename T>
Var<T> charbonnier(const Var<T>& pred, const Var<T>& target, T eps);

/// input + conv(w2, leaky_relu(conv(w1, input))).
template <typename T>
Var<T> residual_block(const Var<T>& input, const ConvWeights<T>& w1, const ConvWeights<T>& w2);

/// Arithmetic mean of scalar vars.
template <typename T>
Var<T> mean_of(std::span<const Var<T>> scalars);

}  // namespace zsm
