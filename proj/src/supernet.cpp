#include "cdnas/supernet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cdnas/supervision.hpp"

namespace cdnas {

nlohmann::ordered_json NetworkOptions::to_json() const {
  return {{"channels", channels}, {"input_size", input_size}};
}

NetworkOptions NetworkOptions::from_json(const nlohmann::ordered_json& j) {
  NetworkOptions o;
  o.channels = j.value("channels", o.channels);
  o.input_size = j.value("input_size", o.input_size);
  return o;
}

namespace {

// Total stride of the two baseline stem layers: cells start at 64 x 64 for
// inputs of 64 and above so three reductions leave an 8 x 8 head.
std::size_t baseline_stem_stride(std::size_t input) {
  if (input < 64) return 1;
  const auto s = input / 64;
  if (input % 64 != 0 || (s != 1 && s != 2 && s != 4)) {
    throw ConfigError("baseline space input size must be below 64 or one of 64, 128, 256; got " +
                      std::to_string(input));
  }
  return s;
}

void check_options(const NetworkOptions& opt) {
  if (opt.channels == 0) throw ConfigError("network width must be positive");
  if (opt.input_size == 0 || opt.input_size % 8 != 0) {
    throw ConfigError("input size must be a positive multiple of 8, got " +
                      std::to_string(opt.input_size));
  }
}

template <typename T>
typename Conv2d<T>::Options head_conv_options(std::size_t in, std::size_t k) {
  typename Conv2d<T>::Options o;
  o.in = in;
  o.out = 1;
  o.kernel = k;
  o.geometry = ConvGeometry{1, k / 2, 1, 1};
  o.bias = true;
  return o;
}

// A single genotype op, registered under its name so parameter names line up
// with the corresponding mixed-op candidate.
template <typename T>
class ChosenOp : public Layer<T> {
 public:
  ChosenOp(const std::string& name, std::size_t channels, std::size_t stride,
           const SearchSpace& space, Rng& rng) {
    op_ = this->register_module(name, make_candidate_op<T>(name, channels, stride, space, rng));
  }
  Var<T> forward(const Var<T>& x) override { return op_->forward(x); }

 private:
  Layer<T>* op_;
};

}  // namespace

std::size_t head_size(const SearchSpace& space, const NetworkOptions& opt) {
  check_options(opt);
  if (space.kind == SpaceKind::baseline) return opt.input_size / baseline_stem_stride(opt.input_size) / 8;
  return opt.input_size / 8;
}

template <typename T>
Var<T> head_loss(HeadKind head, const Var<T>& out, const Batch<T>& batch) {
  switch (head) {
    case HeadKind::depth: return overall_depth_loss(out, constant(batch.target));
    case HeadKind::deeppixel: return deeppixel_loss(out, constant(batch.target));
    case HeadKind::cross_entropy: return cross_entropy(out, batch.labels);
  }
  throw ConfigError("unknown head");
}

template <typename T>
std::vector<double> head_scores(HeadKind head, const Tensor<T>& out) {
  if (head == HeadKind::depth) return scores_from_maps(out);
  std::vector<double> s;
  if (head == HeadKind::deeppixel) {
    const auto n = out.dim(0), per = out.numel() / n;
    for (std::size_t b = 0; b < n; ++b) {
      double acc = 0;
      for (std::size_t i = 0; i < per; ++i) acc += 1.0 / (1.0 + std::exp(-double(out[b * per + i])));
      s.push_back(acc / double(per));
    }
    return s;
  }
  for (std::size_t b = 0; b < out.dim(0); ++b) {
    const double z0 = out[b * 2], z1 = out[b * 2 + 1];
    s.push_back(1.0 / (1.0 + std::exp(z0 - z1)));
  }
  return s;
}

template <typename T>
CellNetwork<T>::CellNetwork(const SearchSpace& space, const NetworkOptions& opt,
                            const EdgeFactory<T>& factory, Rng& rng)
    : space_(space), opt_(opt) {
  space_.validate();
  check_options(opt_);
  const auto c = opt_.channels;
  auto add_edges = [&](Cell& cell, std::size_t index, std::size_t channels, bool reduction) {
    for (const auto& e : space_.edges) {
      const std::size_t stride = reduction && e.from < space_.input_nodes ? 2 : 1;
      auto m = factory(cell.type, e.to, e.from, channels, stride, rng);
      if (!m) continue;
      const std::string name = "cells." + std::to_string(index) + ".e" + std::to_string(e.to) + "_" +
                               std::to_string(e.from);
      cell.edges[{e.to, e.from}] = this->register_module(name, std::move(m));
    }
  };

  if (space_.kind == SpaceKind::baseline) {
    const auto total = baseline_stem_stride(opt_.input_size);
    const std::size_t s0 = std::min<std::size_t>(2, total), s1 = total / s0;
    stem_.push_back(this->register_module("stem.0", std::make_unique<ConvBnRelu<T>>(3, c, 0.0, rng, 3, s0)));
    stem_.push_back(this->register_module("stem.1", std::make_unique<ReluConvBn<T>>(c, c, 3, s1, rng)));
    std::size_t cpp = c, cp = c, cur = c;
    bool prev_reduction = false;
    for (std::size_t i = 0; i < 9; ++i) {
      Cell cell;
      cell.reduction = i % 3 == 2;
      cell.type = cell.reduction ? 1 : 0;
      if (cell.reduction) cur *= 2;
      const std::string prefix = "cells." + std::to_string(i);
      cell.pre0 = this->register_module(prefix + ".pre0",
                                        std::make_unique<ReluConvBn<T>>(cpp, cur, 1, prev_reduction ? 2 : 1, rng));
      cell.pre1 = this->register_module(prefix + ".pre1", std::make_unique<ReluConvBn<T>>(cp, cur, 1, 1, rng));
      add_edges(cell, i, cur, cell.reduction);
      cells_.push_back(std::move(cell));
      cpp = cp;
      cp = space_.intermediate_nodes * cur;
      prev_reduction = cells_.back().reduction;
    }
    if (space_.head == HeadKind::cross_entropy) {
      classifier_ = this->register_module("head.linear", std::make_unique<Linear<T>>(cp, 2, rng));
    } else {
      head_conv_ = this->register_module("head.conv", std::make_unique<Conv2d<T>>(head_conv_options<T>(cp, 1), rng));
    }
    return;
  }

  stem_.push_back(this->register_module("stem.0", std::make_unique<ConvBnRelu<T>>(3, c, 0.0, rng)));
  const std::size_t widths[3] = {2 * c, 3 * c, 2 * c};
  const std::size_t att_kernels[3] = {7, 5, 3};
  std::size_t prev = c;
  for (std::size_t i = 0; i < 3; ++i) {
    Cell cell;
    cell.type = i;
    const std::string prefix = "cells." + std::to_string(i);
    cell.pre0 = this->register_module(prefix + ".pre", std::make_unique<ConvBnRelu<T>>(prev, widths[i], 0.0, rng, 1, 1));
    add_edges(cell, i, widths[i], false);
    const std::string pool = space_.pooling == PoolKind::max ? "max_pool_3x3" : "CDP_0.7_3x3";
    cell.pool = this->register_module(prefix + ".pool", make_candidate_op<T>(pool, widths[i], 2, space_, rng));
    if (space_.attention) {
      cell.attention = this->register_module(prefix + ".attention",
                                             std::make_unique<SpatialAttention<T>>(att_kernels[i], rng));
    }
    cells_.push_back(std::move(cell));
    prev = widths[i];
  }
  const std::size_t fused = widths[0] + widths[1] + widths[2];
  head_.push_back(this->register_module("head.conv0", std::make_unique<ConvBnRelu<T>>(fused, 2 * c, 0.0, rng)));
  head_.push_back(this->register_module("head.conv1", std::make_unique<ConvBnRelu<T>>(2 * c, c, 0.0, rng)));
  auto out = head_conv_options<T>(c, 3);
  out.bias_init = kDepthBiasInit;
  out.init_scale = kDepthInitScale;
  head_conv_ = this->register_module("head.out", std::make_unique<Conv2d<T>>(out, rng));
}

template <typename T>
std::optional<Var<T>> CellNetwork<T>::node_weights(std::size_t, std::size_t) const {
  return std::nullopt;
}

template <typename T>
std::vector<Var<T>> CellNetwork<T>::run_nodes(const Cell& cell, std::vector<Var<T>> states) {
  const auto first = space_.input_nodes, last = space_.input_nodes + space_.intermediate_nodes;
  for (std::size_t j = first; j < last; ++j) {
    std::vector<Var<T>> outs;
    for (auto e : space_.incoming(j)) {
      const auto from = space_.edges[e].from;
      auto it = cell.edges.find({j, from});
      if (it != cell.edges.end()) outs.push_back(it->second->forward(states[from]));
    }
    if (outs.empty()) throw ConfigError("node " + std::to_string(j) + " has no incoming edge");
    if (auto w = node_weights(cell.type, j)) {
      states.push_back(weighted_sum(outs, *w));
    } else {
      Var<T> acc = outs[0];
      for (std::size_t k = 1; k < outs.size(); ++k) acc = add(acc, outs[k]);
      states.push_back(acc);
    }
  }
  return states;
}

template <typename T>
Var<T> CellNetwork<T>::forward_baseline(const Var<T>& x) {
  Var<T> s = stem_[1]->forward(stem_[0]->forward(x));
  Var<T> s0 = s, s1 = s;
  for (const auto& cell : cells_) {
    auto states = run_nodes(cell, {cell.pre0->forward(s0), cell.pre1->forward(s1)});
    std::vector<Var<T>> inter(states.begin() + long(space_.input_nodes), states.end());
    s0 = s1;
    s1 = concat_channels(inter);
  }
  if (classifier_) return classifier_->forward(global_avg_pool(s1));
  return head_conv_->forward(s1);
}

template <typename T>
Var<T> CellNetwork<T>::forward_fas(const Var<T>& x) {
  Var<T> h = stem_[0]->forward(x);
  std::vector<Var<T>> levels;
  for (const auto& cell : cells_) {
    auto states = run_nodes(cell, {cell.pre0->forward(h)});
    h = cell.pool->forward(states.back());
    if (cell.attention) h = cell.attention->forward(h);
    levels.push_back(h);
  }
  const auto s = levels.back().dim(2);
  for (auto& l : levels)
    if (l.dim(2) != s) l = bilinear_resize(l, s, s);
  Var<T> f = concat_channels(levels);
  for (auto* layer : head_) f = layer->forward(f);
  return relu(head_conv_->forward(f));
}

template <typename T>
Var<T> CellNetwork<T>::forward(const Var<T>& x) {
  if (x.value().rank() != 4 || x.dim(1) != 3 || x.dim(2) != opt_.input_size ||
      x.dim(3) != opt_.input_size) {
    throw ShapeError("network expects N x 3 x " + std::to_string(opt_.input_size) + " x " +
                     std::to_string(opt_.input_size) + ", got " + shape_str(x.shape()));
  }
  return space_.kind == SpaceKind::baseline ? forward_baseline(x) : forward_fas(x);
}

template <typename T>
MixedOp<T>::MixedOp(const SearchSpace& space, Var<T> alpha, std::size_t channels,
                    std::size_t stride, std::size_t partial, Rng& rng)
    : alpha_(std::move(alpha)), stride_(stride), partial_(partial) {
  if (partial == 0 || channels % partial != 0) {
    throw ConfigError("partial-channel factor " + std::to_string(partial) + " must divide " +
                      std::to_string(channels) + " channels");
  }
  if (alpha_.numel() != space.ops.size()) throw ShapeError("alpha size does not match op count");
  perm_.resize(channels);
  std::iota(perm_.begin(), perm_.end(), std::size_t{0});
  if (partial > 1) std::shuffle(perm_.begin(), perm_.end(), rng.engine());
  inverse_.resize(channels);
  for (std::size_t i = 0; i < channels; ++i) inverse_[perm_[i]] = i;
  const auto sub = channels / partial;
  for (const auto& name : space.ops) {
    ops_.push_back(this->register_module(name, make_candidate_op<T>(name, sub, stride, space, rng)));
  }
}

template <typename T>
Var<T> MixedOp<T>::mix(const Var<T>& x) {
  Var<T> beta = softmax(alpha_, 0);
  std::vector<Var<T>> outs;
  outs.reserve(ops_.size());
  for (auto* op : ops_) outs.push_back(op->forward(x));
  return weighted_sum(outs, beta);
}

template <typename T>
Var<T> MixedOp<T>::forward(const Var<T>& x) {
  if (partial_ == 1) return mix(x);
  const auto sub = perm_.size() / partial_;
  std::vector<std::size_t> head(perm_.begin(), perm_.begin() + long(sub));
  std::vector<std::size_t> rest(perm_.begin() + long(sub), perm_.end());
  Var<T> y = mix(gather_channels(x, head));
  Var<T> bypass = gather_channels(x, rest);
  if (stride_ != 1) bypass = max_pool2d(bypass, 3, stride_, 1);
  return gather_channels(concat_channels<T>({y, bypass}), inverse_);
}

template <typename T>
Supernet<T>::Supernet(const SearchSpace& space, const NetworkOptions& opt,
                      const SupernetOptions& sopt, Rng& rng)
    : Supernet(space, opt, sopt, rng, [&] {
        auto st = std::make_shared<ArchState<T>>();
        Rng arng = rng.substream("alpha");
        st->alpha.resize(space.cell_types);
        st->node_logits.resize(space.cell_types);
        for (std::size_t c = 0; c < space.cell_types; ++c) {
          for (std::size_t e = 0; e < space.edges.size(); ++e) {
            Tensor<T> a({space.ops.size()});
            for (auto& v : a.data()) v = T(sopt.alpha_init * arng.normal());
            st->alpha[c].emplace_back(a, true);
          }
          if (sopt.edge_normalization) {
            for (std::size_t j = space.input_nodes; j < space.input_nodes + space.intermediate_nodes; ++j)
              st->node_logits[c].emplace(j, Var<T>(Tensor<T>({space.incoming(j).size()}), true));
          }
        }
        return st;
      }()) {}

template <typename T>
Supernet<T>::Supernet(const SearchSpace& space, const NetworkOptions& opt,
                      const SupernetOptions& sopt, Rng& rng, std::shared_ptr<ArchState<T>> state)
    : CellNetwork<T>(
          space, opt,
          [state, sopt, &space](std::size_t type, std::size_t to, std::size_t from,
                                std::size_t channels, std::size_t stride,
                                Rng& r) -> std::unique_ptr<Layer<T>> {
            for (std::size_t e = 0; e < space.edges.size(); ++e) {
              if (space.edges[e].to == to && space.edges[e].from == from) {
                return std::make_unique<MixedOp<T>>(space, state->alpha[type][e], channels, stride,
                                                    sopt.partial_channels, r);
              }
            }
            return nullptr;
          },
          rng),
      state_(std::move(state)),
      sopt_(sopt) {}

template <typename T>
std::vector<Var<T>> Supernet<T>::arch() const {
  std::vector<Var<T>> out;
  for (const auto& per_type : state_->alpha)
    for (const auto& a : per_type) out.push_back(a);
  for (const auto& per_type : state_->node_logits)
    for (const auto& [_, v] : per_type) out.push_back(v);
  return out;
}

template <typename T>
Var<T> Supernet<T>::loss(const Batch<T>& batch) {
  return head_loss(this->space().head, this->forward(constant(batch.x)), batch);
}

namespace {
std::vector<double> softmax_values(const std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double z = 0;
  for (std::size_t i = 0; i < v.size(); ++i) z += out[i] = std::exp(v[i] - m);
  for (auto& o : out) o /= z;
  return out;
}
}  // namespace

template <typename T>
std::vector<std::vector<std::vector<double>>> Supernet<T>::betas() const {
  std::vector<std::vector<std::vector<double>>> out;
  for (const auto& per_type : state_->alpha) {
    out.emplace_back();
    for (const auto& a : per_type) {
      std::vector<double> v(a.value().data().begin(), a.value().data().end());
      out.back().push_back(softmax_values(v));
    }
  }
  return out;
}

template <typename T>
std::vector<std::vector<double>> Supernet<T>::edge_weights() const {
  if (!sopt_.edge_normalization) return {};
  const auto& space = this->space();
  std::vector<std::vector<double>> out(space.cell_types, std::vector<double>(space.edges.size(), 1.0));
  for (std::size_t c = 0; c < space.cell_types; ++c) {
    for (const auto& [j, logits] : state_->node_logits[c]) {
      std::vector<double> v(logits.value().data().begin(), logits.value().data().end());
      auto w = softmax_values(v);
      auto in = space.incoming(j);
      for (std::size_t k = 0; k < in.size(); ++k) out[c][in[k]] = w[k];
    }
  }
  return out;
}

template <typename T>
std::optional<Var<T>> Supernet<T>::node_weights(std::size_t cell_type, std::size_t to) const {
  if (!sopt_.edge_normalization) return std::nullopt;
  return softmax(state_->node_logits[cell_type].at(to), 0);
}

template <typename T>
Genotype Supernet<T>::discretize() const {
  return cdnas::discretize(this->space(), betas(), edge_weights());
}

Genotype discretize(const SearchSpace& space,
                    const std::vector<std::vector<std::vector<double>>>& betas,
                    const std::vector<std::vector<double>>& edge_weights) {
  if (betas.size() != space.cell_types) throw ShapeError("discretize: wrong number of cell types");
  Genotype g;
  g.space = space.id();
  for (std::size_t c = 0; c < space.cell_types; ++c) {
    if (betas[c].size() != space.edges.size()) throw ShapeError("discretize: wrong edge count");
    GenotypeCell cell;
    for (std::size_t j = space.input_nodes; j < space.input_nodes + space.intermediate_nodes; ++j) {
      struct Candidate {
        std::size_t edge, op;
        double strength;
      };
      std::vector<Candidate> cands;
      for (auto e : space.incoming(j)) {
        const auto& b = betas[c][e];
        if (b.size() != space.ops.size()) throw ShapeError("discretize: wrong op count");
        std::size_t best = 1;
        for (std::size_t o = 2; o < b.size(); ++o)
          if (b[o] > b[best]) best = o;
        const double w = edge_weights.empty() ? 1.0 : edge_weights[c][e];
        cands.push_back({e, best, b[best] * w});
      }
      std::stable_sort(cands.begin(), cands.end(),
                       [](const Candidate& a, const Candidate& b) { return a.strength > b.strength; });
      cands.resize(space.keep);
      std::sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) {
        return space.edges[a.edge].from < space.edges[b.edge].from;
      });
      for (const auto& k : cands) cell.edges.push_back({j, space.edges[k.edge].from, space.ops[k.op]});
    }
    g.cells.push_back(std::move(cell));
  }
  return g;
}

template <typename T>
std::unique_ptr<CellNetwork<T>> materialize(const Genotype& genotype, const NetworkOptions& opt,
                                            Rng& rng) {
  const SearchSpace space = SearchSpace::from_id(genotype.space);
  genotype.validate(space);
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::string> chosen;
  for (std::size_t c = 0; c < genotype.cells.size(); ++c)
    for (const auto& e : genotype.cells[c].edges) chosen[{c, e.to, e.from}] = e.op;
  EdgeFactory<T> factory = [&](std::size_t type, std::size_t to, std::size_t from,
                               std::size_t channels, std::size_t stride,
                               Rng& r) -> std::unique_ptr<Layer<T>> {
    auto it = chosen.find({type, to, from});
    if (it == chosen.end()) return nullptr;
    return std::make_unique<ChosenOp<T>>(it->second, channels, stride, space, r);
  };
  return std::make_unique<CellNetwork<T>>(space, opt, factory, rng);
}

#define CDNAS_INSTANTIATE_SUPERNET(T)                                                           \
  template Var<T> head_loss(HeadKind, const Var<T>&, const Batch<T>&);                          \
  template std::vector<double> head_scores(HeadKind, const Tensor<T>&);                         \
  template class CellNetwork<T>;                                                                \
  template class MixedOp<T>;                                                                    \
  template class Supernet<T>;                                                                   \
  template std::unique_ptr<CellNetwork<T>> materialize(const Genotype&, const NetworkOptions&, \
                                                       Rng&);

CDNAS_INSTANTIATE_SUPERNET(float)
CDNAS_INSTANTIATE_SUPERNET(double)

}  // namespace cdnas
