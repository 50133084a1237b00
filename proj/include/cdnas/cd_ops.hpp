#pragma once

#include <utility>
#include <vector>

#include "cdnas/ops.hpp"

namespace cdnas {

inline constexpr double kDefaultTheta = 0.7;
inline constexpr double kDefaultLambda = 0.7;

/// Convolution weights plus geometry. The receptive field R is the k x k grid
/// of offsets around the window center, scaled by dilation.
template <typename T>
struct ConvParams {
  Var<T> weight;  // Cout x Cin/groups x k x k
  std::optional<Var<T>> bias;
  ConvGeometry geometry;

  std::size_t kernel() const { return weight.dim(2); }
  std::vector<std::pair<int, int>> receptive_field() const;
};

template <typename T>
struct CdcParams {
  ConvParams<T> base;
  T theta = T(kDefaultTheta);
};

struct CdpParams {
  std::size_t kernel = 3;
  std::size_t stride = 2;
  double lambda = kDefaultLambda;
  /// Zero padding; kernel/2 keeps every window centered on a real sample.
  std::size_t padding() const { return kernel / 2; }
};

void validate_theta(double theta);
void validate(const CdpParams& p);

template <typename T>
Var<T> conv2d(const Var<T>& x, const ConvParams<T>& p) {
  return conv2d(x, p.weight, p.bias, p.geometry);
}

/// Generalized central difference convolution evaluated term by term:
///   y(p0) = theta * sum w(pn) (x(p0+pn) - x(p0)) + (1-theta) * sum w(pn) x(p0+pn).
/// Straight loops with no autodiff; kept as the reference for the fast path.
template <typename T>
Tensor<T> cdc_forward(const Tensor<T>& x, const CdcParams<T>& p);

/// Same operator as one convolution minus a rescaled center map:
///   y = conv(x, w) - theta * x(p0) * sum_R w.
template <typename T>
Var<T> cdc_forward_efficient(const Var<T>& x, const CdcParams<T>& p);

/// Central difference pooling: avg_pool(x) - lambda * x(p0).
template <typename T>
Var<T> cdp_forward(const Var<T>& x, const CdpParams& p);

}  // namespace cdnas
