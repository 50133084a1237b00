#pragma once

#include <algorithm>
#include <vector>

#include "cdnas/errors.hpp"

#include "cdnas/autodiff.hpp"

namespace cdnas {

/// Inputs plus whichever supervision the head needs: a target map (depth or
/// binary) and/or class labels (0 = attack, 1 = live).
template <typename T>
struct Batch {
  Tensor<T> x;
  Tensor<T> target;
  std::vector<int> labels;

  std::size_t size() const { return labels.empty() ? (x.rank() ? x.dim(0) : 0) : labels.size(); }
};

/// Anything with weights phi, architecture parameters alpha and a
/// differentiable loss on a batch. Supernets implement it; so do the toy
/// models used to check the bi-level and meta-learning algebra.
template <typename T>
class SearchModel {
 public:
  virtual ~SearchModel() = default;
  virtual std::vector<Var<T>> weights() const = 0;
  virtual std::vector<Var<T>> arch() const = 0;
  virtual Var<T> loss(const Batch<T>& batch) = 0;
};

/// Stacked samples ready for a network: inputs N x 3 x S x S, per-sample
/// targets for the head, labels and a group tag (domain or attack type) used
/// by the domain-aware search schemes.
template <typename T>
struct SampleSet {
  Tensor<T> x;
  Tensor<T> target;
  std::vector<int> labels;
  std::vector<int> groups;

  std::size_t size() const { return labels.size(); }
  int group_count() const {
    int n = 0;
    for (int g : groups) n = std::max(n, g + 1);
    return n;
  }
  std::vector<std::size_t> group_indices(int g) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < groups.size(); ++i)
      if (groups[i] == g) out.push_back(i);
    return out;
  }
};

namespace detail {
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& t, const std::vector<std::size_t>& idx) {
  Shape shape = t.shape();
  const std::size_t per = t.numel() / shape[0];
  shape[0] = idx.size();
  Tensor<T> out(shape);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= t.dim(0)) throw ShapeError("sample index out of range");
    std::copy_n(t.data().begin() + long(idx[k] * per), per, out.data().begin() + long(k * per));
  }
  return out;
}
}  // namespace detail

template <typename T>
Batch<T> make_batch(const SampleSet<T>& set, const std::vector<std::size_t>& idx) {
  Batch<T> b;
  b.x = detail::gather_rows(set.x, idx);
  if (!set.target.empty()) b.target = detail::gather_rows(set.target, idx);
  for (auto i : idx) b.labels.push_back(set.labels.at(i));
  return b;
}

template <typename T>
SampleSet<T> subset(const SampleSet<T>& set, const std::vector<std::size_t>& idx) {
  SampleSet<T> s;
  s.x = detail::gather_rows(set.x, idx);
  if (!set.target.empty()) s.target = detail::gather_rows(set.target, idx);
  for (auto i : idx) {
    s.labels.push_back(set.labels.at(i));
    s.groups.push_back(set.groups.empty() ? 0 : set.groups.at(i));
  }
  return s;
}

}  // namespace cdnas
