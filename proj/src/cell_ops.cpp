#include "cdnas/cell_ops.hpp"

#include <regex>

namespace cdnas {

namespace {

template <typename T>
typename Conv2d<T>::Options conv_opts(std::size_t in, std::size_t out, std::size_t k,
                                      std::size_t stride, std::size_t dil, std::size_t groups,
                                      double theta = 0.0) {
  typename Conv2d<T>::Options o;
  o.in = in;
  o.out = out;
  o.kernel = k;
  o.geometry = ConvGeometry{stride, dil * (k / 2), dil, groups};
  o.theta = theta;
  return o;
}

template <typename T>
class Zero : public Layer<T> {
 public:
  explicit Zero(std::size_t stride) : stride_(stride) {}
  Var<T> forward(const Var<T>& x) override {
    const auto h = (x.dim(2) + stride_ - 1) / stride_, w = (x.dim(3) + stride_ - 1) / stride_;
    return constant(Tensor<T>({x.dim(0), x.dim(1), h, w}));
  }

 private:
  std::size_t stride_;
};

template <typename T>
class Identity : public Layer<T> {
 public:
  Var<T> forward(const Var<T>& x) override { return x; }
};

template <typename T>
class Pool : public Layer<T> {
 public:
  enum Kind { max, avg, cdp };
  Pool(Kind kind, std::size_t stride, double lambda) : kind_(kind), stride_(stride), lambda_(lambda) {}
  Var<T> forward(const Var<T>& x) override {
    switch (kind_) {
      case max: return max_pool2d(x, 3, stride_, 1);
      case avg: return avg_pool2d(x, 3, stride_, 1);
      case cdp: return cdp_forward(x, CdpParams{3, stride_, lambda_});
    }
    return x;
  }

 private:
  Kind kind_;
  std::size_t stride_;
  double lambda_;
};

// ReLU -> depthwise k x k -> pointwise -> BN.
template <typename T>
class DwPw : public Module<T> {
 public:
  DwPw(std::size_t c, std::size_t k, std::size_t stride, std::size_t dil, Rng& rng) {
    dw_ = this->register_module("dw", std::make_unique<Conv2d<T>>(conv_opts<T>(c, c, k, stride, dil, c), rng));
    pw_ = this->register_module("pw", std::make_unique<Conv2d<T>>(conv_opts<T>(c, c, 1, 1, 1, 1), rng));
    bn_ = this->register_module("bn", std::make_unique<BatchNorm2d<T>>(c));
  }
  Var<T> forward(const Var<T>& x) const { return bn_->forward(pw_->forward(dw_->forward(relu(x)))); }

 private:
  Conv2d<T>* dw_;
  Conv2d<T>* pw_;
  BatchNorm2d<T>* bn_;
};

template <typename T>
class SepConv : public Layer<T> {
 public:
  SepConv(std::size_t c, std::size_t k, std::size_t stride, Rng& rng) {
    a_ = this->register_module("a", std::make_unique<DwPw<T>>(c, k, stride, 1, rng));
    b_ = this->register_module("b", std::make_unique<DwPw<T>>(c, k, 1, 1, rng));
  }
  Var<T> forward(const Var<T>& x) override { return b_->forward(a_->forward(x)); }

 private:
  DwPw<T>* a_;
  DwPw<T>* b_;
};

template <typename T>
class DilConv : public Layer<T> {
 public:
  DilConv(std::size_t c, std::size_t stride, Rng& rng) {
    a_ = this->register_module("a", std::make_unique<DwPw<T>>(c, 3, stride, 2, rng));
  }
  Var<T> forward(const Var<T>& x) override { return a_->forward(x); }

 private:
  DwPw<T>* a_;
};

// ReLU -> CDC 3x3 -> BN (baseline-space CDC_0.7_3x3).
template <typename T>
class ReluCdcBn : public Layer<T> {
 public:
  ReluCdcBn(std::size_t c, std::size_t stride, double theta, Rng& rng) {
    conv_ = this->register_module("conv", std::make_unique<Conv2d<T>>(conv_opts<T>(c, c, 3, stride, 1, 1, theta), rng));
    bn_ = this->register_module("bn", std::make_unique<BatchNorm2d<T>>(c));
  }
  Var<T> forward(const Var<T>& x) override { return bn_->forward(conv_->forward(relu(x))); }

 private:
  Conv2d<T>* conv_;
  BatchNorm2d<T>* bn_;
};

// Two stacked 3x3 conv-BN-ReLU layers: C -> rC -> C.
template <typename T>
class ExpandConv : public Layer<T> {
 public:
  ExpandConv(std::size_t c, std::size_t ratio, double theta, Rng& rng) {
    a_ = this->register_module("expand", std::make_unique<ConvBnRelu<T>>(c, c * ratio, theta, rng));
    b_ = this->register_module("reduce", std::make_unique<ConvBnRelu<T>>(c * ratio, c, theta, rng));
  }
  Var<T> forward(const Var<T>& x) override { return b_->forward(a_->forward(x)); }

 private:
  ConvBnRelu<T>* a_;
  ConvBnRelu<T>* b_;
};

}  // namespace

template <typename T>
std::unique_ptr<Layer<T>> make_candidate_op(const std::string& name, std::size_t channels,
                                            std::size_t stride, const SearchSpace& space,
                                            Rng& rng) {
  if (stride != 1 && stride != 2) throw ConfigError("candidate ops support stride 1 or 2");
  if (name == "none") return std::make_unique<Zero<T>>(stride);
  if (name == "skip_connect") {
    if (stride == 1) return std::make_unique<Identity<T>>();
    return std::make_unique<ReluConvBn<T>>(channels, channels, 1, stride, rng);
  }
  if (name == "max_pool_3x3") return std::make_unique<Pool<T>>(Pool<T>::max, stride, 0.0);
  if (name == "avg_pool_3x3") return std::make_unique<Pool<T>>(Pool<T>::avg, stride, 0.0);
  if (name == "sep_conv_3x3") return std::make_unique<SepConv<T>>(channels, 3, stride, rng);
  if (name == "sep_conv_5x5") return std::make_unique<SepConv<T>>(channels, 5, stride, rng);
  if (name == "dil_conv_3x3") return std::make_unique<DilConv<T>>(channels, stride, rng);
  static const std::regex cdp_re(R"(CDP_([0-9.]+)_3x3)"), cdc_re(R"(CDC_([0-9.]+)_3x3)");
  std::smatch m;
  // The name carries the default coefficient; the space's
  // theta/lambda are what the operator actually uses.
  if (std::regex_match(name, m, cdp_re)) return std::make_unique<Pool<T>>(Pool<T>::cdp, stride, space.lambda);
  if (std::regex_match(name, m, cdc_re)) return std::make_unique<ReluCdcBn<T>>(channels, stride, space.theta, rng);
  if (stride != 1) throw ConfigError("operation '" + name + "' only exists at stride 1");
  if (name == "conv_3x3") return std::make_unique<ConvBnRelu<T>>(channels, channels, 0.0, rng);
  if (name == "CDC_3x3") return std::make_unique<ConvBnRelu<T>>(channels, channels, space.theta, rng);
  static const std::regex expand_re(R"((conv|CDC)_2_([0-9]+))");
  if (std::regex_match(name, m, expand_re)) {
    const auto ratio = std::stoul(m[2].str());
    if (ratio == 0) throw ConfigError("expansion ratio must be positive in '" + name + "'");
    return std::make_unique<ExpandConv<T>>(channels, ratio, m[1] == "CDC" ? space.theta : 0.0, rng);
  }
  throw ConfigError("unknown candidate operation '" + name + "'");
}

template <typename T>
SpatialAttention<T>::SpatialAttention(std::size_t kernel, Rng& rng) {
  if (kernel % 2 == 0) throw ConfigError("attention kernel must be odd");
  auto o = conv_opts<T>(2, 1, kernel, 1, 1, 1);
  o.bias = true;
  conv_ = this->register_module("conv", std::make_unique<Conv2d<T>>(o, rng));
}

template <typename T>
Var<T> SpatialAttention<T>::gate(const Var<T>& x) const {
  return sigmoid(conv_->forward(concat_channels<T>({mean_channels(x), max_channels(x)})));
}

template <typename T>
Var<T> SpatialAttention<T>::forward(const Var<T>& x) {
  return mul_gate(x, gate(x));
}

template <typename T>
ReluConvBn<T>::ReluConvBn(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                          Rng& rng) {
  conv_ = this->register_module("conv", std::make_unique<Conv2d<T>>(conv_opts<T>(in, out, kernel, stride, 1, 1), rng));
  bn_ = this->register_module("bn", std::make_unique<BatchNorm2d<T>>(out));
}

template <typename T>
Var<T> ReluConvBn<T>::forward(const Var<T>& x) {
  return bn_->forward(conv_->forward(relu(x)));
}

#define CDNAS_INSTANTIATE_CELL_OPS(T)                                                         \
  template std::unique_ptr<Layer<T>> make_candidate_op<T>(const std::string&, std::size_t,    \
                                                          std::size_t, const SearchSpace&, Rng&); \
  template class SpatialAttention<T>;                                                         \
  template class ReluConvBn<T>;

CDNAS_INSTANTIATE_CELL_OPS(float)
CDNAS_INSTANTIATE_CELL_OPS(double)

}  // namespace cdnas
