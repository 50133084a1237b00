#pragma once

#include <optional>
#include <vector>

#include "cdnas/autodiff.hpp"

namespace cdnas {

/// Spatial geometry shared by convolution, pooling and center sampling.
struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
  std::size_t groups = 1;
};

/// Output extent along one axis. Throws ConfigError when the (dilated) kernel
/// does not fit or stride is zero. Partial trailing windows are dropped.
std::size_t conv_out_size(std::size_t in, std::size_t kernel, const ConvGeometry& g);

// Elementwise and arithmetic.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T s);
template <typename T> Var<T> add_scalar(const Var<T>& a, T s);
template <typename T> Var<T> relu(const Var<T>& a);
template <typename T> Var<T> sigmoid(const Var<T>& a);
template <typename T> Var<T> square(const Var<T>& a);
template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);

// Reductions.
template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);
/// Global maximum; the gradient goes to the first maximal element.
template <typename T> Var<T> max(const Var<T>& a);
/// N x C x H x W -> N x 1 x H x W.
template <typename T> Var<T> mean_channels(const Var<T>& x);
template <typename T> Var<T> max_channels(const Var<T>& x);
/// N x C x H x W -> N x C.
template <typename T> Var<T> global_avg_pool(const Var<T>& x);

// Structural.
template <typename T> Var<T> concat_channels(const std::vector<Var<T>>& xs);
template <typename T> Var<T> gather_channels(const Var<T>& x, const std::vector<std::size_t>& idx);
template <typename T> Var<T> softmax(const Var<T>& x, int axis);
/// Sum_i w[i] * xs[i] for a 1-D weight vector w.
template <typename T> Var<T> weighted_sum(const std::vector<Var<T>>& xs, const Var<T>& w);
/// x * g with g of shape N x 1 x H x W broadcast over channels.
template <typename T> Var<T> mul_gate(const Var<T>& x, const Var<T>& g);
template <typename T> Var<T> bilinear_resize(const Var<T>& x, std::size_t out_h, std::size_t out_w);

// Layers.
/// Per-channel normalization with batch statistics over (N, H, W), then affine.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5));
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias);

/// y(p0) = sum_{pn in R} w(pn) x(p0 + pn), zero padding. w: Cout x Cin/groups x k x k.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const std::optional<Var<T>>& bias,
              const ConvGeometry& g);
/// Input sample at the center tap of every k x k window the geometry visits.
/// Output has conv2d's spatial size and the input's channel count.
template <typename T>
Var<T> center_sample(const Var<T>& x, std::size_t kernel, const ConvGeometry& g);
/// Cout x Cin x k x k -> Cout x Cin x 1 x 1 (spatial sum of each filter).
template <typename T> Var<T> kernel_sum(const Var<T>& w);

/// Max pooling with implicit -inf padding.
template <typename T>
Var<T> max_pool2d(const Var<T>& x, std::size_t kernel, std::size_t stride, std::size_t padding);
/// Average pooling with zero padding; the divisor is always kernel*kernel.
template <typename T>
Var<T> avg_pool2d(const Var<T>& x, std::size_t kernel, std::size_t stride, std::size_t padding);

/// Leaf constant with no gradient.
template <typename T> Var<T> constant(Tensor<T> t) { return Var<T>(std::move(t), false); }

}  // namespace cdnas
