#pragma once

#include <memory>
#include <string>

#include "cdnas/nn.hpp"
#include "cdnas/search_space.hpp"

namespace cdnas {

/// Builds candidate operation `name` for `channels` feature maps. Stride 2
/// halves the spatial size (baseline reduction cells); every op preserves
/// shape at stride 1.
template <typename T>
std::unique_ptr<Layer<T>> make_candidate_op(const std::string& name, std::size_t channels,
                                            std::size_t stride, const SearchSpace& space,
                                            Rng& rng);

/// Channel-wise mean and max maps -> k x k conv -> sigmoid gate -> x * gate.
template <typename T>
class SpatialAttention : public Layer<T> {
 public:
  SpatialAttention(std::size_t kernel, Rng& rng);
  Var<T> forward(const Var<T>& x) override;
  Var<T> gate(const Var<T>& x) const;

 private:
  Conv2d<T>* conv_;
};

/// ReLU -> 1x1 conv (optional stride) -> BN; aligns cell inputs.
template <typename T>
class ReluConvBn : public Layer<T> {
 public:
  ReluConvBn(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, Rng& rng);
  Var<T> forward(const Var<T>& x) override;

 private:
  Conv2d<T>* conv_;
  BatchNorm2d<T>* bn_;
};

}  // namespace cdnas
