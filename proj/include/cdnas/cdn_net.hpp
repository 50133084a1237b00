#pragma once

#include <string>

#include "cdnas/nn.hpp"

namespace cdnas {

enum class CdnVariant { depthnet, cdn_cdc, cdn_cdp };

CdnVariant parse_cdn_variant(const std::string& name);
std::string to_string(CdnVariant v);

/// Stem, three conv blocks (Low/Mid/High) each ending in a stride-2 pool,
/// multi-level concat at the High resolution, then a three-conv depth head.
struct CdnConfig {
  CdnVariant variant = CdnVariant::depthnet;
  double theta = kDefaultTheta;
  double lambda = kDefaultLambda;
  std::size_t input_size = 256;
  /// Scales every channel width; 1.0 gives the reference widths.
  double width = 1.0;

  // Reference widths.
  std::size_t stem = 64;
  std::size_t block_a = 128, block_b = 196, block_c = 128;
  std::size_t head_a = 128, head_b = 64;

  std::size_t scaled(std::size_t c) const;
  std::size_t output_size() const { return input_size / 8; }
  void validate() const;
  nlohmann::ordered_json to_json() const;
  static CdnConfig from_json(const nlohmann::ordered_json& j);
};

/// Anything that maps an N x 3 x S x S batch to an N x 1 x h x w map.
template <typename T>
using MapNetwork = Layer<T>;

template <typename T>
class CdnNet : public MapNetwork<T> {
 public:
  CdnNet(const CdnConfig& cfg, Rng& rng);
  /// N x 3 x S x S -> N x 1 x S/8 x S/8 (ReLU output).
  Var<T> forward(const Var<T>& x) override;
  const CdnConfig& config() const { return cfg_; }

 private:
  struct Block {
    ConvBnRelu<T>* a;
    ConvBnRelu<T>* b;
    ConvBnRelu<T>* c;
  };
  Var<T> pool(const Var<T>& x) const;

  CdnConfig cfg_;
  ConvBnRelu<T>* stem_;
  Block blocks_[3];
  ConvBnRelu<T>* head_a_;
  ConvBnRelu<T>* head_b_;
  Conv2d<T>* head_out_;
};

/// Builds the network; throws ConfigError when the input size is not a multiple of 8.
template <typename T>
std::unique_ptr<CdnNet<T>> build_cdn(const CdnConfig& cfg, Rng& rng) {
  return std::make_unique<CdnNet<T>>(cfg, rng);
}

/// Single-sample convenience: 3 x S x S -> (S/8) x (S/8).
template <typename T>
Tensor<T> forward_depth(MapNetwork<T>& net, const Tensor<T>& image);

}  // namespace cdnas
