#include "cdnas/cd_ops.hpp"

#include <string>

namespace cdnas {

void validate_theta(double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) {
    throw ConfigError("theta must lie in [0, 1], got " + std::to_string(theta));
  }
}

void validate(const CdpParams& p) {
  if (p.kernel % 2 == 0) {
    throw ConfigError("CDP kernel must be odd so the window has a center, got " +
                      std::to_string(p.kernel));
  }
  if (p.stride == 0) throw ConfigError("CDP stride must be >= 1");
  if (!(p.lambda >= 0.0 && p.lambda <= 1.0)) {
    throw ConfigError("lambda must lie in [0, 1], got " + std::to_string(p.lambda));
  }
}

template <typename T>
std::vector<std::pair<int, int>> ConvParams<T>::receptive_field() const {
  const int k = static_cast<int>(kernel());
  const int d = static_cast<int>(geometry.dilation);
  std::vector<std::pair<int, int>> r;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) r.emplace_back((i - k / 2) * d, (j - k / 2) * d);
  return r;
}

template <typename T>
Tensor<T> cdc_forward(const Tensor<T>& x, const CdcParams<T>& p) {
  validate_theta(p.theta);
  const auto& w = p.base.weight.value();
  const auto& g = p.base.geometry;
  if (x.rank() != 4 || w.rank() != 4) throw ShapeError("cdc_forward: expected 4-D tensors");
  const auto n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const auto cout = w.dim(0), cg = w.dim(1), k = w.dim(2);
  if (k % 2 == 0) throw ConfigError("cdc_forward: kernel must be odd");
  if (cg * g.groups != cin || cout % g.groups != 0) {
    throw ShapeError("cdc_forward: input channels " + std::to_string(cin) +
                     " do not match weight " + shape_str(w.shape()));
  }
  const auto oh = conv_out_size(h, k, g), ow = conv_out_size(wd, k, g);
  const auto field = p.base.receptive_field();
  const long half = long(k / 2) * long(g.dilation);
  const T theta = p.theta;
  auto sample = [&](std::size_t b, std::size_t c, long y, long xx) -> T {
    if (y < 0 || y >= long(h) || xx < 0 || xx >= long(wd)) return T(0);
    return x.at(b, c, std::size_t(y), std::size_t(xx));
  };
  Tensor<T> out({n, cout, oh, ow});
  const auto coutg = cout / g.groups;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t co = 0; co < cout; ++co) {
      const auto group = co / coutg;
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const long cy = long(oy * g.stride) - long(g.padding) + half;
          const long cx = long(ox * g.stride) - long(g.padding) + half;
          T diff_term = 0, vanilla_term = 0;
          for (std::size_t ci = 0; ci < cg; ++ci) {
            const auto c = group * cg + ci;
            const T center = sample(b, c, cy, cx);
            for (std::size_t r = 0; r < field.size(); ++r) {
              const T wv = w[((co * cg + ci) * k + r / k) * k + r % k];
              const T v = sample(b, c, cy + field[r].first, cx + field[r].second);
              diff_term += wv * (v - center);
              vanilla_term += wv * v;
            }
          }
          T y = theta * diff_term + (T(1) - theta) * vanilla_term;
          if (p.base.bias) y += p.base.bias->value()[co];
          out.at(b, co, oy, ox) = y;
        }
    }
  return out;
}

template <typename T>
Var<T> cdc_forward_efficient(const Var<T>& x, const CdcParams<T>& p) {
  validate_theta(p.theta);
  const auto& g = p.base.geometry;
  Var<T> y = conv2d(x, p.base.weight, p.base.bias, g);
  if (p.theta == T(0)) return y;
  const auto k = p.base.kernel();
  Var<T> center = center_sample(x, k, g);
  Var<T> wsum = kernel_sum(p.base.weight);
  Var<T> center_term = conv2d<T>(center, wsum, std::nullopt, ConvGeometry{1, 0, 1, g.groups});
  return sub(y, scale(center_term, p.theta));
}

template <typename T>
Var<T> cdp_forward(const Var<T>& x, const CdpParams& p) {
  validate(p);
  Var<T> avg = avg_pool2d(x, p.kernel, p.stride, p.padding());
  if (p.lambda == 0.0) return avg;
  Var<T> center = center_sample(x, p.kernel, ConvGeometry{p.stride, p.padding(), 1, 1});
  return sub(avg, scale(center, T(p.lambda)));
}

template struct ConvParams<float>;
template struct ConvParams<double>;
template Tensor<float> cdc_forward(const Tensor<float>&, const CdcParams<float>&);
template Tensor<double> cdc_forward(const Tensor<double>&, const CdcParams<double>&);
template Var<float> cdc_forward_efficient(const Var<float>&, const CdcParams<float>&);
template Var<double> cdc_forward_efficient(const Var<double>&, const CdcParams<double>&);
template Var<float> cdp_forward(const Var<float>&, const CdpParams&);
template Var<double> cdp_forward(const Var<double>&, const CdpParams&);

}  // namespace cdnas
