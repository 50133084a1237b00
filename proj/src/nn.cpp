#include "cdnas/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "cdnas/snapshot.hpp"

namespace cdnas {

template <typename T>
Tensor<T> fan_in_uniform(const Shape& shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
Conv2d<T>::Conv2d(const Options& opt, Rng& rng) : opt_(opt) {
  validate_theta(opt.theta);
  const auto groups = opt.geometry.groups;
  if (groups == 0 || opt.in % groups || opt.out % groups) {
    throw ConfigError("Conv2d: channels " + std::to_string(opt.in) + "->" +
                      std::to_string(opt.out) + " not divisible by groups " +
                      std::to_string(groups));
  }
  const auto cg = opt.in / groups;
  weight_ = this->register_parameter(
      "weight", fan_in_uniform<T>({opt.out, cg, opt.kernel, opt.kernel},
                                  cg * opt.kernel * opt.kernel, rng));
  if (opt.init_scale != 1.0)
    for (auto& w : weight_.mutable_value().data()) w *= T(opt.init_scale);
  if (opt.bias) bias_ = this->register_parameter("bias", Tensor<T>({opt.out}, T(opt.bias_init)));
}

template <typename T>
CdcParams<T> Conv2d<T>::cdc_params() const {
  return CdcParams<T>{ConvParams<T>{weight_, bias_, opt_.geometry}, T(opt_.theta)};
}

template <typename T>
Var<T> Conv2d<T>::forward(const Var<T>& x) const {
  if (opt_.theta == 0.0) return conv2d(x, weight_, bias_, opt_.geometry);
  return cdc_forward_efficient(x, cdc_params());
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::size_t channels) {
  gamma_ = this->register_parameter("gamma", Tensor<T>({channels}, T(1)));
  beta_ = this->register_parameter("beta", Tensor<T>({channels}));
}

template <typename T>
ConvBnRelu<T>::ConvBnRelu(std::size_t in, std::size_t out, double theta, Rng& rng,
                          std::size_t kernel, std::size_t stride) {
  typename Conv2d<T>::Options o;
  o.in = in;
  o.out = out;
  o.kernel = kernel;
  o.geometry = ConvGeometry{stride, kernel / 2, 1, 1};
  o.theta = theta;
  conv_ = this->register_module("conv", std::make_unique<Conv2d<T>>(o, rng));
  bn_ = this->register_module("bn", std::make_unique<BatchNorm2d<T>>(out));
}

template <typename T>
Linear<T>::Linear(std::size_t in, std::size_t out, Rng& rng) {
  weight_ = this->register_parameter("weight", fan_in_uniform<T>({out, in}, in, rng));
  bias_ = this->register_parameter("bias", Tensor<T>({out}));
}

template <typename T>
std::size_t copy_matching_parameters(const Module<T>& from, Module<T>& to) {
  std::map<std::string, Var<T>> src;
  for (auto& [n, v] : from.named_parameters()) src.emplace(n, v);
  std::size_t copied = 0;
  for (auto& [n, v] : to.named_parameters()) {
    auto it = src.find(n);
    if (it == src.end()) continue;
    if (it->second.shape() != v.shape()) {
      throw ShapeError("parameter " + n + ": " + shape_str(it->second.shape()) + " vs " +
                       shape_str(v.shape()));
    }
    Var<T> dst = v;
    dst.mutable_value() = it->second.value();
    ++copied;
  }
  return copied;
}

namespace {
constexpr char kArchiveMagic[4] = {'C', 'D', 'N', 'C'};
constexpr int kArchiveVersion = 1;

nlohmann::ordered_json read_header(std::istream& is, const std::filesystem::path& path) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kArchiveMagic, 4) != 0) {
    throw IoError(path.string() + " is not a checkpoint archive");
  }
  if (is.get() != kArchiveVersion) throw IoError(path.string() + ": unsupported archive version");
  const auto len = read_u32(is);
  std::string text(len, '\0');
  if (!is.read(text.data(), len)) throw IoError(path.string() + ": truncated header");
  return nlohmann::ordered_json::parse(text);
}
}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Module<T>& m,
                     const nlohmann::ordered_json& config) {
  nlohmann::ordered_json header;
  header["config"] = config;
  header["tensors"] = nlohmann::ordered_json::array();
  const auto params = m.named_parameters();
  for (auto& [n, _] : params) header["tensors"].push_back(n);
  const auto text = header.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kArchiveMagic, 4);
  os.put(static_cast<char>(kArchiveVersion));
  write_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (auto& [_, v] : params) write_snapshot(os, v.value().template cast<float>());
  if (!os) throw IoError("failed writing " + path.string());
}

template <typename T>
nlohmann::ordered_json load_checkpoint(const std::filesystem::path& path, Module<T>& m) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  auto header = read_header(is, path);
  auto params = m.named_parameters();
  const auto& names = header.at("tensors");
  if (names.size() != params.size()) {
    throw IoError(path.string() + ": archive holds " + std::to_string(names.size()) +
                  " tensors, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (names[i].get<std::string>() != params[i].first) {
      throw IoError(path.string() + ": tensor " + names[i].get<std::string>() +
                    " does not match model parameter " + params[i].first);
    }
    auto t = read_snapshot(is).template cast<T>();
    if (t.shape() != params[i].second.shape()) {
      throw IoError(path.string() + ": shape mismatch for " + params[i].first);
    }
    params[i].second.mutable_value() = std::move(t);
  }
  return header.at("config");
}

nlohmann::ordered_json read_checkpoint_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_header(is, path).at("config");
}

#define CDNAS_INSTANTIATE_NN(T)                                                             \
  template Tensor<T> fan_in_uniform(const Shape&, std::size_t, Rng&);                      \
  template class Conv2d<T>;                                                                 \
  template class BatchNorm2d<T>;                                                            \
  template class ConvBnRelu<T>;                                                             \
  template class Linear<T>;                                                                 \
  template std::size_t copy_matching_parameters(const Module<T>&, Module<T>&);             \
  template void save_checkpoint(const std::filesystem::path&, const Module<T>&,             \
                                const nlohmann::ordered_json&);                             \
  template nlohmann::ordered_json load_checkpoint(const std::filesystem::path&, Module<T>&);

CDNAS_INSTANTIATE_NN(float)
CDNAS_INSTANTIATE_NN(double)

}  // namespace cdnas
