#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cdnas/cd_ops.hpp"
#include "cdnas/rng.hpp"

namespace cdnas {

template <typename T>
using NamedParams = std::vector<std::pair<std::string, Var<T>>>;

/// Parameter container with hierarchical names ("block1.conv0.weight").
template <typename T>
class Module {
 public:
  Module() = default;
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  NamedParams<T> named_parameters() const {
    NamedParams<T> out;
    collect("", out);
    return out;
  }
  std::vector<Var<T>> parameters() const {
    std::vector<Var<T>> out;
    for (auto& [_, v] : named_parameters()) out.push_back(v);
    return out;
  }
  std::size_t param_count() const {
    std::size_t n = 0;
    for (auto& [_, v] : named_parameters()) n += v.numel();
    return n;
  }
  void zero_grad() {
    for (auto& [_, v] : named_parameters()) v.zero_grad();
  }

 protected:
  Var<T> register_parameter(std::string name, Tensor<T> init) {
    Var<T> v(std::move(init), true);
    params_.emplace_back(std::move(name), v);
    return v;
  }
  template <typename M>
  M* register_module(std::string name, std::unique_ptr<M> m) {
    M* raw = m.get();
    children_.emplace_back(std::move(name), std::move(m));
    return raw;
  }

 private:
  void collect(const std::string& prefix, NamedParams<T>& out) const {
    for (const auto& [n, v] : params_) out.emplace_back(prefix + n, v);
    for (const auto& [n, c] : children_) c->collect(prefix + n + ".", out);
  }

  NamedParams<T> params_;
  std::vector<std::pair<std::string, std::unique_ptr<Module<T>>>> children_;
};

/// Module with a single-input forward pass.
template <typename T>
class Layer : public Module<T> {
 public:
  virtual Var<T> forward(const Var<T>& x) = 0;
};

/// ReLU depth outputs start as a small positive, nearly constant map;
/// with the full fan-in init most output units die within a few steps.
inline constexpr double kDepthBiasInit = 0.2;
inline constexpr double kDepthInitScale = 0.1;

/// Fan-in scaled uniform init in [-sqrt(6/fan_in), sqrt(6/fan_in)].
template <typename T>
Tensor<T> fan_in_uniform(const Shape& shape, std::size_t fan_in, Rng& rng);

/// 2-D convolution; theta > 0 turns it into CDC with the same weights.
template <typename T>
class Conv2d : public Module<T> {
 public:
  struct Options {
    std::size_t in = 0, out = 0, kernel = 3;
    ConvGeometry geometry{1, 1, 1, 1};
    bool bias = false;
    double bias_init = 0.0;
    /// Multiplies the fan-in uniform weight init.
    double init_scale = 1.0;
    double theta = 0.0;
  };
  Conv2d(const Options& opt, Rng& rng);
  Var<T> forward(const Var<T>& x) const;
  const Options& options() const { return opt_; }
  CdcParams<T> cdc_params() const;

 private:
  Options opt_;
  Var<T> weight_;
  std::optional<Var<T>> bias_;
};

template <typename T>
class BatchNorm2d : public Module<T> {
 public:
  explicit BatchNorm2d(std::size_t channels);
  Var<T> forward(const Var<T>& x) const { return batch_norm(x, gamma_, beta_); }

 private:
  Var<T> gamma_, beta_;
};

/// conv (or CDC) -> batch norm -> ReLU.
template <typename T>
class ConvBnRelu : public Layer<T> {
 public:
  ConvBnRelu(std::size_t in, std::size_t out, double theta, Rng& rng, std::size_t kernel = 3,
             std::size_t stride = 1);
  Var<T> forward(const Var<T>& x) override { return relu(bn_->forward(conv_->forward(x))); }

 private:
  Conv2d<T>* conv_;
  BatchNorm2d<T>* bn_;
};

template <typename T>
class Linear : public Module<T> {
 public:
  Linear(std::size_t in, std::size_t out, Rng& rng);
  Var<T> forward(const Var<T>& x) const { return linear(x, weight_, bias_); }

 private:
  Var<T> weight_;
  std::optional<Var<T>> bias_;
};

/// Copies values of parameters whose names match; returns how many matched.
template <typename T>
std::size_t copy_matching_parameters(const Module<T>& from, Module<T>& to);

/// Archive: "CDNC", version byte, u32 header length, JSON header
/// {config, tensors:[names]}, then one CDNT snapshot per tensor in order.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Module<T>& m,
                     const nlohmann::ordered_json& config);
/// Loads values into `m` (names must match exactly) and returns the config echo.
template <typename T>
nlohmann::ordered_json load_checkpoint(const std::filesystem::path& path, Module<T>& m);
nlohmann::ordered_json read_checkpoint_config(const std::filesystem::path& path);

}  // namespace cdnas
