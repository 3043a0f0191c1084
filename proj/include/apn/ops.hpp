#pragma once

#include <span>
#include <vector>

#include "apn/autodiff.hpp"

/// Differentiable tensor operations. Every op takes the tape it records into;
/// pass a non-recording tape for inference.
namespace apn::ops {

enum class Padding { zeros, replicate };

/// 2-D convolution over NCHW input with a [C_out, C_in, k, k] kernel.
/// Output size is floor((H + 2*pad - k) / stride) + 1 along each axis.
/// `bias` may be null.
template <typename T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad,
              Padding padding = Padding::zeros);

/// Transposed convolution with a [C_in, C_out, k, k] kernel: the adjoint of
/// conv2d with the same kernel read as [C_out_conv = C_in, C_in_conv = C_out].
/// Output size is (H - 1) * stride - 2 * pad + k + output_pad; output_pad must
/// be smaller than stride.
template <typename T>
Var<T> conv_transpose2d(Tape<T>& tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride,
                        int pad, int output_pad_h, int output_pad_w);

template <typename T>
Var<T> conv_transpose2d(Tape<T>& tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride,
                        int pad, int output_pad) {
  return conv_transpose2d(tape, x, weight, bias, stride, pad, output_pad, output_pad);
}

template <typename T>
Var<T> relu(Tape<T>& tape, const Var<T>& x);

template <typename T>
Var<T> sigmoid(Tape<T>& tape, const Var<T>& x);

/// Running statistics of a batch-norm layer. Only updated in training mode.
template <typename T>
struct BatchNormStats {
  Tensor<T> mean;
  Tensor<T> var;
  explicit BatchNormStats(int channels) : mean(Shape{channels}, T(0)), var(Shape{channels}, T(1)) {}
};

/// Per-channel batch normalization of an NCHW tensor. Training mode
/// standardizes with the biased batch variance and folds the unbiased one
/// into the running estimate; evaluation mode uses the running estimate.
template <typename T>
Var<T> batch_norm2d(Tape<T>& tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                    BatchNormStats<T>& stats, bool training, double eps = 1e-5, double momentum = 0.1);

/// Spatial mean per channel: N x C x H x W -> N x C x 1 x 1.
template <typename T>
Var<T> global_avg_pool(Tape<T>& tape, const Var<T>& x);

/// Cross-channel mean per pixel: N x C x H x W -> N x 1 x H x W.
template <typename T>
Var<T> channel_avg_pool(Tape<T>& tape, const Var<T>& x);

/// Max pooling with implicit -inf padding.
template <typename T>
Var<T> max_pool2d(Tape<T>& tape, const Var<T>& x, int kernel, int stride, int pad);

/// Bilinear resize with half-pixel centers: source coordinate
/// s = (d + 0.5) * in / out - 0.5, clamped to [0, in - 1].
template <typename T>
Var<T> bilinear_resize(Tape<T>& tape, const Var<T>& x, int target_h, int target_w);

/// Elementwise ops. Operands must have equal rank; on every axis the sizes
/// must match or one of them must be 1.
template <typename T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(Tape<T>& tape, const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> concat(Tape<T>& tape, std::span<const Var<T>> xs, int axis);
template <typename T>
Var<T> concat(Tape<T>& tape, std::initializer_list<Var<T>> xs, int axis) {
  std::vector<Var<T>> v(xs);
  return concat(tape, std::span<const Var<T>>(v), axis);
}

template <typename T>
Var<T> slice(Tape<T>& tape, const Var<T>& x, int axis, int start, int length);

template <typename T>
Var<T> reshape(Tape<T>& tape, const Var<T>& x, Shape shape);

/// y = x W^T + b for x: N x D, W: D_out x D. `bias` may be null.
template <typename T>
Var<T> linear(Tape<T>& tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

/// Mean over the batch of -log softmax(logits)[label], max-subtracted.
template <typename T>
Var<T> softmax_cross_entropy(Tape<T>& tape, const Var<T>& logits, std::span<const int> labels);

/// Sum of all elements as a 1-element tensor.
template <typename T>
Var<T> sum(Tape<T>& tape, const Var<T>& x);

}  // namespace apn::ops
