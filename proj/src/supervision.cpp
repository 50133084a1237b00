#include "cdnas/supervision.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace cdnas {

namespace {
constexpr std::array<std::pair<int, int>, 8> kDirections = {
    {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}}};

long clamp_index(long i, std::size_t n) { return std::clamp<long>(i, 0, long(n) - 1); }
}  // namespace

template <typename T>
Var<T> mse_loss(const Var<T>& pred, const Var<T>& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse_loss: prediction " + shape_str(pred.shape()) + " vs target " +
                     shape_str(target.shape()));
  }
  return mean(square(sub(pred, target)));
}

template <typename T>
Var<T> contrast_maps(const Var<T>& x) {
  if (x.value().rank() != 4 || x.dim(1) != 1) {
    throw ShapeError("contrast_maps: expected N x 1 x H x W, got " + shape_str(x.shape()));
  }
  const auto n = x.dim(0), h = x.dim(2), w = x.dim(3), hw = h * w;
  const std::size_t nd = kDirections.size();
  // Flat index of the neighbor for every (direction, pixel).
  std::vector<std::size_t> nb(nd * hw);
  for (std::size_t d = 0; d < nd; ++d)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        const long ny = clamp_index(long(y) + kDirections[d].first, h);
        const long nx = clamp_index(long(xx) + kDirections[d].second, w);
        nb[d * hw + y * w + xx] = std::size_t(ny) * w + std::size_t(nx);
      }
  Tensor<T> out({n, nd, h, w});
  const auto& xv = x.value();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t d = 0; d < nd; ++d)
      for (std::size_t i = 0; i < hw; ++i)
        out[(b * nd + d) * hw + i] = xv[b * hw + nb[d * hw + i]] - xv[b * hw + i];
  auto xn = x.node();
  return make_result<T>(std::move(out), {x}, "contrast_maps", [xn, nb, n, nd, hw](const Tensor<T>& g) {
    Tensor<T> gx(xn->value.shape());
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t d = 0; d < nd; ++d)
        for (std::size_t i = 0; i < hw; ++i) {
          const T go = g[(b * nd + d) * hw + i];
          gx[b * hw + nb[d * hw + i]] += go;
          gx[b * hw + i] -= go;
        }
    xn->accumulate(gx);
  });
}

template <typename T>
Var<T> contrastive_depth_loss(const Var<T>& pred, const Var<T>& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("contrastive_depth_loss: prediction " + shape_str(pred.shape()) +
                     " vs target " + shape_str(target.shape()));
  }
  // Mean over all eight responses times eight = sum of per-direction MSEs.
  return scale(mse_loss(contrast_maps(pred), contrast_maps(target)), T(kDirections.size()));
}

template <typename T>
Var<T> overall_depth_loss(const Var<T>& pred, const Var<T>& target) {
  return add(mse_loss(pred, target), contrastive_depth_loss(pred, target));
}

template <typename T>
Var<T> deeppixel_loss(const Var<T>& logits, const Var<T>& target) {
  if (logits.shape() != target.shape()) {
    throw ShapeError("deeppixel_loss: logits " + shape_str(logits.shape()) + " vs target " +
                     shape_str(target.shape()));
  }
  const auto count = logits.numel();
  if (count == 0) throw ShapeError("deeppixel_loss: empty map");
  const T lo = T(kProbabilityClamp), hi = T(1) - T(kProbabilityClamp);
  Tensor<T> prob(logits.shape());
  T total = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const T p = T(1) / (T(1) + std::exp(-logits.value()[i]));
    prob[i] = p;
    const T pc = std::clamp(p, lo, hi);
    const T y = target.value()[i];
    total -= y * std::log(pc) + (T(1) - y) * std::log(T(1) - pc);
  }
  auto ln = logits.node(), tn = target.node();
  return make_result<T>(Tensor<T>::scalar(total / T(count)), {logits}, "deeppixel_loss",
                        [ln, tn, prob, count, lo, hi](const Tensor<T>& g) {
                          Tensor<T> gl(ln->value.shape());
                          const T s = g.item() / T(count);
                          for (std::size_t i = 0; i < count; ++i) {
                            const T p = prob[i];
                            if (p < lo || p > hi) continue;  // clamped: flat
                            const T y = tn->value[i];
                            // d/dz of -(y log p + (1-y) log(1-p)) with p = sigmoid(z)
                            gl[i] = s * (p - y);
                          }
                          ln->accumulate(gl);
                        });
}

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, const std::vector<int>& labels) {
  if (logits.value().rank() != 2 || logits.dim(1) != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " for " +
                     std::to_string(labels.size()) + " labels");
  }
  const auto n = labels.size();
  if (n == 0) throw ShapeError("cross_entropy: empty batch");
  Tensor<T> prob({n, 2});
  T total = 0;
  for (std::size_t b = 0; b < n; ++b) {
    if (labels[b] != 0 && labels[b] != 1) throw ShapeError("cross_entropy: label must be 0 or 1");
    const T z0 = logits.value()[2 * b], z1 = logits.value()[2 * b + 1];
    const T m = std::max(z0, z1);
    const T e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
    prob[2 * b] = e0 / (e0 + e1);
    prob[2 * b + 1] = e1 / (e0 + e1);
    const T pc = std::clamp(prob[2 * b + labels[b]], T(kProbabilityClamp), T(1 - kProbabilityClamp));
    total -= std::log(pc);
  }
  auto ln = logits.node();
  return make_result<T>(Tensor<T>::scalar(total / T(n)), {logits}, "cross_entropy",
                        [ln, prob, labels, n](const Tensor<T>& g) {
                          Tensor<T> gl(ln->value.shape());
                          const T s = g.item() / T(n);
                          for (std::size_t b = 0; b < n; ++b) {
                            const T p = prob[2 * b + labels[b]];
                            if (p < T(kProbabilityClamp) || p > T(1 - kProbabilityClamp)) continue;
                            for (int k = 0; k < 2; ++k) {
                              gl[2 * b + k] = s * (prob[2 * b + k] - (k == labels[b] ? T(1) : T(0)));
                            }
                          }
                          ln->accumulate(gl);
                        });
}

template <typename T>
T score_from_map(const Tensor<T>& map) {
  if (map.numel() == 0) throw ShapeError("score_from_map: empty map");
  T s = 0;
  for (T v : map.data()) s += v;
  return s / T(map.numel());
}

template <typename T>
std::vector<double> scores_from_maps(const Tensor<T>& maps) {
  if (maps.rank() < 2 || maps.dim(0) == 0) throw ShapeError("scores_from_maps: empty batch");
  const auto n = maps.dim(0), per = maps.numel() / n;
  std::vector<double> out(n);
  for (std::size_t b = 0; b < n; ++b) {
    double s = 0;
    for (std::size_t i = 0; i < per; ++i) s += maps[b * per + i];
    out[b] = s / double(per);
  }
  return out;
}

#define CDNAS_INSTANTIATE_SUP(T)                                          \
  template Var<T> mse_loss(const Var<T>&, const Var<T>&);                 \
  template Var<T> contrast_maps(const Var<T>&);                           \
  template Var<T> contrastive_depth_loss(const Var<T>&, const Var<T>&);   \
  template Var<T> overall_depth_loss(const Var<T>&, const Var<T>&);       \
  template Var<T> deeppixel_loss(const Var<T>&, const Var<T>&);           \
  template Var<T> cross_entropy(const Var<T>&, const std::vector<int>&);  \
  template T score_from_map(const Tensor<T>&);                            \
  template std::vector<double> scores_from_maps(const Tensor<T>&);

CDNAS_INSTANTIATE_SUP(float)
CDNAS_INSTANTIATE_SUP(double)

}  // namespace cdnas
