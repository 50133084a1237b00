#include "cdnas/cdn_net.hpp"

#include <cmath>

namespace cdnas {

CdnVariant parse_cdn_variant(const std::string& name) {
  if (name == "depthnet") return CdnVariant::depthnet;
  if (name == "cdn_cdc" || name == "cdc") return CdnVariant::cdn_cdc;
  if (name == "cdn_cdp" || name == "cdp") return CdnVariant::cdn_cdp;
  throw ConfigError("unknown CDN variant '" + name + "' (expected depthnet|cdn_cdc|cdn_cdp)");
}

std::string to_string(CdnVariant v) {
  switch (v) {
    case CdnVariant::depthnet: return "depthnet";
    case CdnVariant::cdn_cdc: return "cdn_cdc";
    case CdnVariant::cdn_cdp: return "cdn_cdp";
  }
  return "?";
}

std::size_t CdnConfig::scaled(std::size_t c) const {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(double(c) * width)));
}

void CdnConfig::validate() const {
  if (input_size == 0 || input_size % 8 != 0) {
    throw ConfigError("CDN input size must be a positive multiple of 8, got " +
                      std::to_string(input_size));
  }
  validate_theta(theta);
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  if (!(width > 0.0)) throw ConfigError("width multiplier must be positive");
}

nlohmann::ordered_json CdnConfig::to_json() const {
  return {{"variant", to_string(variant)}, {"theta", theta},     {"lambda", lambda},
          {"input_size", input_size},      {"width", width}};
}

CdnConfig CdnConfig::from_json(const nlohmann::ordered_json& j) {
  CdnConfig c;
  c.variant = parse_cdn_variant(j.value("variant", std::string("depthnet")));
  c.theta = j.value("theta", kDefaultTheta);
  c.lambda = j.value("lambda", kDefaultLambda);
  c.input_size = j.value("input_size", std::size_t{256});
  c.width = j.value("width", 1.0);
  return c;
}

template <typename T>
CdnNet<T>::CdnNet(const CdnConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const double theta = cfg.variant == CdnVariant::cdn_cdc ? cfg.theta : 0.0;
  const auto stem = cfg.scaled(cfg.stem), a = cfg.scaled(cfg.block_a),
             b = cfg.scaled(cfg.block_b), c = cfg.scaled(cfg.block_c);
  stem_ = this->register_module("stem", std::make_unique<ConvBnRelu<T>>(3, stem, theta, rng));
  std::size_t in = stem;
  for (int i = 0; i < 3; ++i) {
    const std::string name = "block" + std::to_string(i + 1);
    blocks_[i].a = this->register_module(name + ".conv0", std::make_unique<ConvBnRelu<T>>(in, a, theta, rng));
    blocks_[i].b = this->register_module(name + ".conv1", std::make_unique<ConvBnRelu<T>>(a, b, theta, rng));
    blocks_[i].c = this->register_module(name + ".conv2", std::make_unique<ConvBnRelu<T>>(b, c, theta, rng));
    in = c;
  }
  const auto ha = cfg.scaled(cfg.head_a), hb = cfg.scaled(cfg.head_b);
  head_a_ = this->register_module("head.conv0", std::make_unique<ConvBnRelu<T>>(3 * c, ha, theta, rng));
  head_b_ = this->register_module("head.conv1", std::make_unique<ConvBnRelu<T>>(ha, hb, theta, rng));
  typename Conv2d<T>::Options o;
  o.in = hb;
  o.out = 1;
  o.kernel = 3;
  o.geometry = ConvGeometry{1, 1, 1, 1};
  o.bias = true;
  o.bias_init = kDepthBiasInit;
  o.init_scale = kDepthInitScale;
  o.theta = theta;
  head_out_ = this->register_module("head.out", std::make_unique<Conv2d<T>>(o, rng));
}

template <typename T>
Var<T> CdnNet<T>::pool(const Var<T>& x) const {
  if (cfg_.variant == CdnVariant::cdn_cdp) {
    return cdp_forward(x, CdpParams{3, 2, cfg_.lambda});
  }
  return max_pool2d(x, 3, 2, 1);
}

template <typename T>
Var<T> CdnNet<T>::forward(const Var<T>& x) {
  if (x.value().rank() != 4 || x.dim(1) != 3 || x.dim(2) != cfg_.input_size ||
      x.dim(3) != cfg_.input_size) {
    throw ShapeError("CdnNet expects N x 3 x " + std::to_string(cfg_.input_size) + " x " +
                     std::to_string(cfg_.input_size) + ", got " + shape_str(x.shape()));
  }
  Var<T> h = stem_->forward(x);
  std::vector<Var<T>> levels;
  for (auto& blk : blocks_) {
    h = pool(blk.c->forward(blk.b->forward(blk.a->forward(h))));
    levels.push_back(h);
  }
  const auto s = levels.back().dim(2);
  for (auto& l : levels) {
    if (l.dim(2) != s) l = bilinear_resize(l, s, s);
  }
  Var<T> fused = concat_channels(levels);
  return relu(head_out_->forward(head_b_->forward(head_a_->forward(fused))));
}

template <typename T>
Tensor<T> forward_depth(MapNetwork<T>& net, const Tensor<T>& image) {
  if (image.rank() != 3) throw ShapeError("forward_depth expects a 3 x S x S image");
  Shape batched{1, image.dim(0), image.dim(1), image.dim(2)};
  NoGradGuard guard;
  auto out = net.forward(Var<T>(image.reshaped(batched))).value();
  return out.reshaped({out.dim(2), out.dim(3)});
}

template class CdnNet<float>;
template class CdnNet<double>;
template Tensor<float> forward_depth(MapNetwork<float>&, const Tensor<float>&);
template Tensor<double> forward_depth(MapNetwork<double>&, const Tensor<double>&);

}  // namespace cdnas
