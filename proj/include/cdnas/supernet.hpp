#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>

#include "cdnas/cell_ops.hpp"
#include "cdnas/search_model.hpp"
#include "cdnas/search_space.hpp"

namespace cdnas {

struct NetworkOptions {
  /// Base width C. Baseline: first cell width (doubling at reductions).
  /// FAS: stem width; cells use 2C, 3C, 2C; the head uses 2C, C.
  std::size_t channels = 8;
  std::size_t input_size = 64;
  nlohmann::ordered_json to_json() const;
  static NetworkOptions from_json(const nlohmann::ordered_json& j);
};

/// Output spatial size of a network built from the space (head map side).
std::size_t head_size(const SearchSpace& space, const NetworkOptions& opt);

/// Loss for the space's head: overall depth loss, DeepPixel BCE, or CE.
template <typename T>
Var<T> head_loss(HeadKind head, const Var<T>& out, const Batch<T>& batch);

/// Liveness score per sample: mean of the predicted depth map, mean of the
/// sigmoid of DeepPixel logits, or softmax probability of "live".
template <typename T>
std::vector<double> head_scores(HeadKind head, const Tensor<T>& out);

/// Returns the module placed on edge (from -> to) of a cell of the given
/// type, or nullptr when the edge is absent.
template <typename T>
using EdgeFactory = std::function<std::unique_ptr<Layer<T>>(
    std::size_t cell_type, std::size_t to, std::size_t from, std::size_t channels,
    std::size_t stride, Rng& rng)>;

/// Stem, cells and head laid out for a search space; what sits on each edge
/// comes from the factory (mixed ops for search, single ops for retraining).
/// Edge modules are registered as "cells.<i>.e<to>_<from>".
template <typename T>
class CellNetwork : public Layer<T> {
 public:
  CellNetwork(const SearchSpace& space, const NetworkOptions& opt, const EdgeFactory<T>& factory,
              Rng& rng);
  Var<T> forward(const Var<T>& x) override;
  const SearchSpace& space() const { return space_; }
  const NetworkOptions& options() const { return opt_; }
  std::size_t cell_count() const { return cells_.size(); }
  /// Cell type (index into alpha / genotype cells) of cell i.
  std::size_t cell_type(std::size_t i) const { return cells_[i].type; }

 protected:
  /// Per-node weights over incoming edges (edge normalization); nullopt means plain sum.
  virtual std::optional<Var<T>> node_weights(std::size_t cell_type, std::size_t to) const;

 private:
  struct Cell {
    std::size_t type = 0;
    bool reduction = false;
    Layer<T>* pre0 = nullptr;
    Layer<T>* pre1 = nullptr;
    std::map<std::pair<std::size_t, std::size_t>, Layer<T>*> edges;  // (to, from)
    Layer<T>* pool = nullptr;       // FAS
    Layer<T>* attention = nullptr;  // FAS, optional
  };
  std::vector<Var<T>> run_nodes(const Cell& cell, std::vector<Var<T>> states);
  Var<T> forward_baseline(const Var<T>& x);
  Var<T> forward_fas(const Var<T>& x);

  SearchSpace space_;
  NetworkOptions opt_;
  std::vector<Layer<T>*> stem_;
  std::vector<Cell> cells_;
  std::vector<Layer<T>*> head_;
  Conv2d<T>* head_conv_ = nullptr;  // FAS depth output / DeepPixel logits
  Linear<T>* classifier_ = nullptr;  // cross-entropy head
};

struct SupernetOptions {
  /// Partial channel connection: 1/K of the channels pass through the mixed op.
  std::size_t partial_channels = 1;
  bool edge_normalization = false;
  /// alpha initialized as scale * N(0, 1).
  double alpha_init = 1e-3;
};

/// Sum_o softmax(alpha)_o * o(x), optionally on a channel slice.
template <typename T>
class MixedOp : public Layer<T> {
 public:
  MixedOp(const SearchSpace& space, Var<T> alpha, std::size_t channels, std::size_t stride,
          std::size_t partial, Rng& rng);
  Var<T> forward(const Var<T>& x) override;
  /// Channels routed through the ops (first entries of the permutation).
  const std::vector<std::size_t>& permutation() const { return perm_; }

 private:
  Var<T> mix(const Var<T>& x);

  std::vector<Layer<T>*> ops_;
  Var<T> alpha_;
  std::size_t stride_, partial_;
  std::vector<std::size_t> perm_, inverse_;
};

/// Architecture parameters: alpha[cell_type][edge] over ops, plus optional
/// edge-normalization logits per intermediate node.
template <typename T>
struct ArchState {
  std::vector<std::vector<Var<T>>> alpha;
  std::vector<std::map<std::size_t, Var<T>>> node_logits;  // [cell_type][to]
};

template <typename T>
class Supernet : public CellNetwork<T>, public SearchModel<T> {
 public:
  Supernet(const SearchSpace& space, const NetworkOptions& opt, const SupernetOptions& sopt,
           Rng& rng);

  std::vector<Var<T>> weights() const override { return this->parameters(); }
  std::vector<Var<T>> arch() const override;
  Var<T> loss(const Batch<T>& batch) override;

  Var<T>& alpha(std::size_t cell_type, std::size_t edge) { return state_->alpha[cell_type][edge]; }
  /// softmax(alpha) per [cell_type][edge].
  std::vector<std::vector<std::vector<double>>> betas() const;
  /// softmax of the edge-normalization logits per [cell_type][edge], or empty.
  std::vector<std::vector<double>> edge_weights() const;
  Genotype discretize() const;
  const SupernetOptions& supernet_options() const { return sopt_; }

 protected:
  std::optional<Var<T>> node_weights(std::size_t cell_type, std::size_t to) const override;

 private:
  Supernet(const SearchSpace& space, const NetworkOptions& opt, const SupernetOptions& sopt,
           Rng& rng, std::shared_ptr<ArchState<T>> state);
  std::shared_ptr<ArchState<T>> state_;
  SupernetOptions sopt_;
};

/// Keeps, per edge, the strongest non-none op (ties: lowest index) and, per
/// intermediate node, the `keep` edges whose kept op is strongest (ties: lower
/// source). Edge strength is beta, times the edge weight when given.
Genotype discretize(const SearchSpace& space,
                    const std::vector<std::vector<std::vector<double>>>& betas,
                    const std::vector<std::vector<double>>& edge_weights = {});

/// Discrete network for a genotype; parameter names match the supernet's
/// ("cells.<i>.e<to>_<from>.<op>...") so weights can be copied across.
template <typename T>
std::unique_ptr<CellNetwork<T>> materialize(const Genotype& genotype, const NetworkOptions& opt,
                                            Rng& rng);

}  // namespace cdnas
