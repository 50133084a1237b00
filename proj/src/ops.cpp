#include "cdnas/ops.hpp"

#include <cmath>
#include <limits>

namespace cdnas {

namespace {

template <typename T>
void require_rank(const Var<T>& x, std::size_t rank, const char* op) {
  if (x.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(x.shape()));
  }
}

template <typename T>
void require_same(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename T, typename F>
Tensor<T> map(const Tensor<T>& a, F f) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = f(a[i]);
  return out;
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "add");
  auto an = a.node(), bn = b.node();
  return make_result<T>(a.value() + b.value(), {a, b}, "add",
                        [an, bn](const Tensor<T>& g) {
                          an->accumulate(g);
                          bn->accumulate(g);
                        });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "sub");
  auto an = a.node(), bn = b.node();
  return make_result<T>(a.value() - b.value(), {a, b}, "sub",
                        [an, bn](const Tensor<T>& g) {
                          an->accumulate(g);
                          if (bn->requires_grad) bn->accumulate(g * T(-1));
                        });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  auto an = a.node(), bn = b.node();
  return make_result<T>(std::move(out), {a, b}, "mul", [an, bn](const Tensor<T>& g) {
    if (an->requires_grad) {
      Tensor<T> ga(g.shape());
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] = g[i] * bn->value[i];
      an->accumulate(ga);
    }
    if (bn->requires_grad) {
      Tensor<T> gb(g.shape());
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] = g[i] * an->value[i];
      bn->accumulate(gb);
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  auto an = a.node();
  return make_result<T>(a.value() * s, {a}, "scale",
                        [an, s](const Tensor<T>& g) { an->accumulate(g * s); });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
  auto an = a.node();
  return make_result<T>(map(a.value(), [s](T v) { return v + s; }), {a}, "add_scalar",
                        [an](const Tensor<T>& g) { an->accumulate(g); });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  auto an = a.node();
  return make_result<T>(map(a.value(), [](T v) { return v > T(0) ? v : T(0); }), {a}, "relu",
                        [an](const Tensor<T>& g) {
                          Tensor<T> gi(g.shape());
                          for (std::size_t i = 0; i < g.numel(); ++i) {
                            gi[i] = an->value[i] > T(0) ? g[i] : T(0);
                          }
                          an->accumulate(gi);
                        });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out = map(a.value(), [](T v) { return T(1) / (T(1) + std::exp(-v)); });
  auto an = a.node();
  auto saved = std::make_shared<Tensor<T>>(out);
  return make_result<T>(std::move(out), {a}, "sigmoid", [an, saved](const Tensor<T>& g) {
    Tensor<T> gi(g.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const T s = (*saved)[i];
      gi[i] = g[i] * s * (T(1) - s);
    }
    an->accumulate(gi);
  });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  auto an = a.node();
  return make_result<T>(map(a.value(), [](T v) { return v * v; }), {a}, "square",
                        [an](const Tensor<T>& g) {
                          Tensor<T> gi(g.shape());
                          for (std::size_t i = 0; i < g.numel(); ++i) {
                            gi[i] = T(2) * an->value[i] * g[i];
                          }
                          an->accumulate(gi);
                        });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  auto an = a.node();
  Shape old = a.shape();
  return make_result<T>(a.value().reshaped(std::move(shape)), {a}, "reshape",
                        [an, old](const Tensor<T>& g) { an->accumulate(g.reshaped(old)); });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  if (a.numel() == 0) throw ShapeError("sum: empty reduction");
  T s = 0;
  for (T v : a.value().data()) s += v;
  auto an = a.node();
  return make_result<T>(Tensor<T>::scalar(s), {a}, "sum", [an](const Tensor<T>& g) {
    an->accumulate(Tensor<T>(an->value.shape(), g.item()));
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty reduction");
  const T n = static_cast<T>(a.numel());
  T s = 0;
  for (T v : a.value().data()) s += v;
  auto an = a.node();
  return make_result<T>(Tensor<T>::scalar(s / n), {a}, "mean", [an, n](const Tensor<T>& g) {
    an->accumulate(Tensor<T>(an->value.shape(), g.item() / n));
  });
}

template <typename T>
Var<T> max(const Var<T>& a) {
  if (a.numel() == 0) throw ShapeError("max: empty reduction");
  const auto& d = a.value().data();
  std::size_t arg = 0;
  for (std::size_t i = 1; i < d.size(); ++i) {
    if (d[i] > d[arg]) arg = i;
  }
  auto an = a.node();
  return make_result<T>(Tensor<T>::scalar(d[arg]), {a}, "max", [an, arg](const Tensor<T>& g) {
    Tensor<T> gi(an->value.shape());
    gi[arg] = g.item();
    an->accumulate(gi);
  });
}

template <typename T>
Var<T> mean_channels(const Var<T>& x) {
  require_rank(x, 4, "mean_channels");
  const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (c == 0) throw ShapeError("mean_channels: empty reduction");
  Tensor<T> out({n, 1, x.dim(2), x.dim(3)});
  const auto& xv = x.value();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < hw; ++i) out[b * hw + i] += xv[(b * c + ch) * hw + i];
    }
    for (std::size_t i = 0; i < hw; ++i) out[b * hw + i] /= static_cast<T>(c);
  }
  auto xn = x.node();
  return make_result<T>(std::move(out), {x}, "mean_channels", [xn, n, c, hw](const Tensor<T>& g) {
    Tensor<T> gi(xn->value.shape());
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) gi[(b * c + ch) * hw + i] = g[b * hw + i] / T(c);
    xn->accumulate(gi);
  });
}

template <typename T>
Var<T> max_channels(const Var<T>& x) {
  require_rank(x, 4, "max_channels");
  const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (c == 0) throw ShapeError("max_channels: empty reduction");
  Tensor<T> out({n, 1, x.dim(2), x.dim(3)});
  std::vector<std::size_t> arg(n * hw, 0);
  const auto& xv = x.value();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < hw; ++i) {
      std::size_t best = 0;
      for (std::size_t ch = 1; ch < c; ++ch) {
        if (xv[(b * c + ch) * hw + i] > xv[(b * c + best) * hw + i]) best = ch;
      }
      arg[b * hw + i] = best;
      out[b * hw + i] = xv[(b * c + best) * hw + i];
    }
  }
  auto xn = x.node();
  return make_result<T>(std::move(out), {x}, "max_channels",
                        [xn, n, c, hw, arg = std::move(arg)](const Tensor<T>& g) {
                          Tensor<T> gi(xn->value.shape());
                          for (std::size_t b = 0; b < n; ++b)
                            for (std::size_t i = 0; i < hw; ++i)
                              gi[(b * c + arg[b * hw + i]) * hw + i] = g[b * hw + i];
                          xn->accumulate(gi);
                        });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  require_rank(x, 4, "global_avg_pool");
  const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (hw == 0) throw ShapeError("global_avg_pool: empty reduction");
  Tensor<T> out({n, c});
  const auto& xv = x.value();
  for (std::size_t i = 0; i < n * c; ++i) {
    T s = 0;
    for (std::size_t k = 0; k < hw; ++k) s += xv[i * hw + k];
    out[i] = s / T(hw);
  }
  auto xn = x.node();
  return make_result<T>(std::move(out), {x}, "global_avg_pool", [xn, n, c, hw](const Tensor<T>& g) {
    Tensor<T> gi(xn->value.shape());
    for (std::size_t i = 0; i < n * c; ++i)
      for (std::size_t k = 0; k < hw; ++k) gi[i * hw + k] = g[i] / T(hw);
    xn->accumulate(gi);
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  for (const auto& x : xs) require_rank(x, 4, "concat_channels");
  const auto n = xs[0].dim(0), h = xs[0].dim(2), w = xs[0].dim(3);
  std::size_t total = 0;
  for (const auto& x : xs) {
    if (x.dim(0) != n || x.dim(2) != h || x.dim(3) != w) {
      throw ShapeError("concat_channels: " + shape_str(xs[0].shape()) + " vs " +
                       shape_str(x.shape()));
    }
    total += x.dim(1);
  }
  const auto hw = h * w;
  Tensor<T> out({n, total, h, w});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& x : xs) {
    offsets.push_back(off);
    const auto c = x.dim(1);
    for (std::size_t b = 0; b < n; ++b) {
      std::copy_n(x.value().data().begin() + b * c * hw, c * hw,
                  out.data().begin() + (b * total + off) * hw);
    }
    off += c;
  }
  std::vector<std::shared_ptr<Node<T>>> nodes;
  for (const auto& x : xs) nodes.push_back(x.node());
  return make_result<T>(std::move(out), xs, "concat_channels",
                        [nodes, offsets, n, total, hw](const Tensor<T>& g) {
                          for (std::size_t k = 0; k < nodes.size(); ++k) {
                            if (!nodes[k]->requires_grad) continue;
                            const auto c = nodes[k]->value.dim(1);
                            Tensor<T> gi(nodes[k]->value.shape());
                            for (std::size_t b = 0; b < n; ++b) {
                              std::copy_n(g.data().begin() + (b * total + offsets[k]) * hw,
                                          c * hw, gi.data().begin() + b * c * hw);
                            }
                            nodes[k]->accumulate(gi);
                          }
                        });
}

template <typename T>
Var<T> gather_channels(const Var<T>& x, const std::vector<std::size_t>& idx) {
  require_rank(x, 4, "gather_channels");
  const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  for (auto i : idx) {
    if (i >= c) throw ShapeError("gather_channels: channel index out of range");
  }
  const auto m = idx.size();
  Tensor<T> out({n, m, x.dim(2), x.dim(3)});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t k = 0; k < m; ++k)
      std::copy_n(x.value().data().begin() + (b * c + idx[k]) * hw, hw,
                  out.data().begin() + (b * m + k) * hw);
  auto xn = x.node();
  return make_result<T>(std::move(out), {x}, "gather_channels",
                        [xn, idx, n, c, m, hw](const Tensor<T>& g) {
                          Tensor<T> gi(xn->value.shape());
                          for (std::size_t b = 0; b < n; ++b)
                            for (std::size_t k = 0; k < m; ++k)
                              for (std::size_t i = 0; i < hw; ++i)
                                gi[(b * c + idx[k]) * hw + i] += g[(b * m + k) * hw + i];
                          xn->accumulate(gi);
                        });
}

template <typename T>
Var<T> softmax(const Var<T>& x, int axis) {
  const auto rank = static_cast<int>(x.value().rank());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ShapeError("softmax: axis out of range");
  const auto& shape = x.shape();
  const std::size_t len = shape[axis];
  if (len == 0) throw ShapeError("softmax: empty reduction");
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  for (int i = axis + 1; i < rank; ++i) inner *= shape[i];
  Tensor<T> out(shape);
  const auto& xv = x.value();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      T m = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < len; ++k) m = std::max(m, xv[(o * len + k) * inner + in]);
      T z = 0;
      for (std::size_t k = 0; k < len; ++k) {
        const auto i = (o * len + k) * inner + in;
        out[i] = std::exp(xv[i] - m);
        z += out[i];
      }
      for (std::size_t k = 0; k < len; ++k) out[(o * len + k) * inner + in] /= z;
    }
  }
  auto xn = x.node();
  auto saved = std::make_shared<Tensor<T>>(out);
  return make_result<T>(std::move(out), {x}, "softmax",
                        [xn, saved, outer, inner, len](const Tensor<T>& g) {
                          const auto& y = *saved;
                          Tensor<T> gi(y.shape());
                          for (std::size_t o = 0; o < outer; ++o) {
                            for (std::size_t in = 0; in < inner; ++in) {
                              T dot = 0;
                              for (std::size_t k = 0; k < len; ++k) {
                                const auto i = (o * len + k) * inner + in;
                                dot += g[i] * y[i];
                              }
                              for (std::size_t k = 0; k < len; ++k) {
                                const auto i = (o * len + k) * inner + in;
                                gi[i] = y[i] * (g[i] - dot);
                              }
                            }
                          }
                          xn->accumulate(gi);
                        });
}

template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& xs, const Var<T>& w) {
  if (xs.empty()) throw ShapeError("weighted_sum: no inputs");
  if (w.value().rank() != 1 || w.numel() != xs.size()) {
    throw ShapeError("weighted_sum: weight shape " + shape_str(w.shape()) + " for " +
                     std::to_string(xs.size()) + " inputs");
  }
  for (const auto& x : xs) {
    if (x.shape() != xs[0].shape()) {
      throw ShapeError("weighted_sum: operand shape " + shape_str(x.shape()) + " vs " +
                       shape_str(xs[0].shape()));
    }
  }
  Tensor<T> out(xs[0].shape());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const T wk = w.value()[k];
    const auto& xv = xs[k].value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += wk * xv[i];
  }
  std::vector<Var<T>> inputs = xs;
  inputs.push_back(w);
  std::vector<std::shared_ptr<Node<T>>> nodes;
  for (const auto& x : xs) nodes.push_back(x.node());
  auto wn = w.node();
  return make_result<T>(std::move(out), inputs, "weighted_sum", [nodes, wn](const Tensor<T>& g) {
    Tensor<T> gw(wn->value.shape());
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const T wk = wn->value[k];
      if (nodes[k]->requires_grad) nodes[k]->accumulate(g * wk);
      T dot = 0;
      const auto& xv = nodes[k]->value;
      for (std::size_t i = 0; i < g.numel(); ++i) dot += g[i] * xv[i];
      gw[k] = dot;
    }
    wn->accumulate(gw);
  });
}

template <typename T>
Var<T> mul_gate(const Var<T>& x, const Var<T>& gate) {
  require_rank(x, 4, "mul_gate");
  require_rank(gate, 4, "mul_gate");
  const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gate.dim(0) != n || gate.dim(1) != 1 || gate.dim(2) != x.dim(2) || gate.dim(3) != x.dim(3)) {
    throw ShapeError("mul_gate: gate " + shape_str(gate.shape()) + " for " + shape_str(x.shape()));
  }
  Tensor<T> out(x.shape());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < hw; ++i)
        out[(b * c + ch) * hw + i] = x.value()[(b * c + ch) * hw + i] * gate.value()[b * hw + i];
  auto xn = x.node(), gn = gate.node();
  return make_result<T>(std::move(out), {x, gate}, "mul_gate", [xn, gn, n, c, hw](const Tensor<T>& g) {
    Tensor<T> gx(xn->value.shape());
    Tensor<T> gg(gn->value.shape());
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) {
          const auto k = (b * c + ch) * hw + i;
          gx[k] = g[k] * gn->value[b * hw + i];
          gg[b * hw + i] += g[k] * xn->value[k];
        }
    xn->accumulate(gx);
    gn->accumulate(gg);
  });
}

namespace {

struct LerpIndex {
  std::size_t lo, hi;
  double frac;
};

std::vector<LerpIndex> lerp_table(std::size_t in, std::size_t out) {
  std::vector<LerpIndex> t(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    auto lo = static_cast<std::size_t>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const std::size_t hi = std::min(lo + 1, in - 1);
    t[o] = {lo, hi, src - static_cast<double>(lo)};
  }
  return t;
}

}  // namespace

template <typename T>
Var<T> bilinear_resize(const Var<T>& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 4, "bilinear_resize");
  if (out_h == 0 || out_w == 0 || x.dim(2) == 0 || x.dim(3) == 0) {
    throw ShapeError("bilinear_resize: empty extent");
  }
  const auto n = x.dim(0), c = x.dim(1), ih = x.dim(2), iw = x.dim(3);
  auto th = lerp_table(ih, out_h);
  auto tw = lerp_table(iw, out_w);
  Tensor<T> out({n, c, out_h, out_w});
  const auto& xv = x.value();
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* src = xv.data().data() + p * ih * iw;
    for (std::size_t oh = 0; oh < out_h; ++oh) {
      const auto& a = th[oh];
      for (std::size_t ow = 0; ow < out_w; ++ow) {
        const auto& b = tw[ow];
        const T top = src[a.lo * iw + b.lo] * T(1 - b.frac) + src[a.lo * iw + b.hi] * T(b.frac);
        const T bot = src[a.hi * iw + b.lo] * T(1 - b.frac) + src[a.hi * iw + b.hi] * T(b.frac);
        out[(p * out_h + oh) * out_w + ow] = top * T(1 - a.frac) + bot * T(a.frac);
      }
    }
  }
  auto xn = x.node();
  return make_result<T>(std::move(out), {x}, "bilinear_resize",
                        [xn, th, tw, n, c, ih, iw, out_h, out_w](const Tensor<T>& g) {
                          Tensor<T> gi(xn->value.shape());
                          for (std::size_t p = 0; p < n * c; ++p) {
                            T* dst = gi.data().data() + p * ih * iw;
                            for (std::size_t oh = 0; oh < out_h; ++oh) {
                              const auto& a = th[oh];
                              for (std::size_t ow = 0; ow < out_w; ++ow) {
                                const auto& b = tw[ow];
                                const T go = g[(p * out_h + oh) * out_w + ow];
                                dst[a.lo * iw + b.lo] += go * T((1 - a.frac) * (1 - b.frac));
                                dst[a.lo * iw + b.hi] += go * T((1 - a.frac) * b.frac);
                                dst[a.hi * iw + b.lo] += go * T(a.frac * (1 - b.frac));
                                dst[a.hi * iw + b.hi] += go * T(a.frac * b.frac);
                              }
                            }
                          }
                          xn->accumulate(gi);
                        });
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  require_rank(x, 4, "batch_norm");
  const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.numel() != c || beta.numel() != c) {
    throw ShapeError("batch_norm: affine parameters sized " + std::to_string(gamma.numel()) +
                     " for " + std::to_string(c) + " channels");
  }
  const std::size_t m = n * hw;
  if (m == 0) throw ShapeError("batch_norm: empty batch");
  Tensor<T> out(x.shape());
  auto xhat = std::make_shared<Tensor<T>>(x.shape());
  auto inv_std = std::make_shared<std::vector<T>>(c);
  const auto& xv = x.value();
  for (std::size_t ch = 0; ch < c; ++ch) {
    T mu = 0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < hw; ++i) mu += xv[(b * c + ch) * hw + i];
    mu /= T(m);
    T var = 0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < hw; ++i) {
        const T d = xv[(b * c + ch) * hw + i] - mu;
        var += d * d;
      }
    var /= T(m);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[ch] = is;
    const T ga = gamma.value()[ch], be = beta.value()[ch];
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < hw; ++i) {
        const auto k = (b * c + ch) * hw + i;
        (*xhat)[k] = (xv[k] - mu) * is;
        out[k] = ga * (*xhat)[k] + be;
      }
  }
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return make_result<T>(
      std::move(out), {x, gamma, beta}, "batch_norm",
      [xn, gn, bn, xhat, inv_std, n, c, hw, m](const Tensor<T>& g) {
        Tensor<T> dg(gn->value.shape()), db(bn->value.shape());
        Tensor<T> dx(xn->value.shape());
        for (std::size_t ch = 0; ch < c; ++ch) {
          T sg = 0, sgx = 0;
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t i = 0; i < hw; ++i) {
              const auto k = (b * c + ch) * hw + i;
              sg += g[k];
              sgx += g[k] * (*xhat)[k];
            }
          dg[ch] = sgx;
          db[ch] = sg;
          if (xn->requires_grad) {
            const T coef = gn->value[ch] * (*inv_std)[ch] / T(m);
            for (std::size_t b = 0; b < n; ++b)
              for (std::size_t i = 0; i < hw; ++i) {
                const auto k = (b * c + ch) * hw + i;
                dx[k] = coef * (T(m) * g[k] - sg - (*xhat)[k] * sgx);
              }
          }
        }
        xn->accumulate(dx);
        gn->accumulate(dg);
        bn->accumulate(db);
      });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const auto n = x.dim(0), f = x.dim(1), o = weight.dim(0);
  if (weight.dim(1) != f) {
    throw ShapeError("linear: weight " + shape_str(weight.shape()) + " for input " +
                     shape_str(x.shape()));
  }
  if (bias && bias->numel() != o) throw ShapeError("linear: bias size mismatch");
  Tensor<T> out({n, o});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t j = 0; j < o; ++j) {
      T s = bias ? bias->value()[j] : T(0);
      for (std::size_t k = 0; k < f; ++k) s += x.value()[b * f + k] * weight.value()[j * f + k];
      out[b * o + j] = s;
    }
  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  auto xn = x.node(), wn = weight.node();
  std::shared_ptr<Node<T>> bnode = bias ? bias->node() : nullptr;
  return make_result<T>(std::move(out), inputs, "linear", [xn, wn, bnode, n, f, o](const Tensor<T>& g) {
    Tensor<T> gx(xn->value.shape()), gw(wn->value.shape());
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t j = 0; j < o; ++j) {
        const T go = g[b * o + j];
        for (std::size_t k = 0; k < f; ++k) {
          gx[b * f + k] += go * wn->value[j * f + k];
          gw[j * f + k] += go * xn->value[b * f + k];
        }
      }
    xn->accumulate(gx);
    wn->accumulate(gw);
    if (bnode) {
      Tensor<T> gb(bnode->value.shape());
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t j = 0; j < o; ++j) gb[j] += g[b * o + j];
      bnode->accumulate(gb);
    }
  });
}

#define CDNAS_INSTANTIATE_OPS(T)                                                          \
  template Var<T> add(const Var<T>&, const Var<T>&);                                      \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                      \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                      \
  template Var<T> scale(const Var<T>&, T);                                                \
  template Var<T> add_scalar(const Var<T>&, T);                                           \
  template Var<T> relu(const Var<T>&);                                                    \
  template Var<T> sigmoid(const Var<T>&);                                                 \
  template Var<T> square(const Var<T>&);                                                  \
  template Var<T> reshape(const Var<T>&, Shape);                                          \
  template Var<T> sum(const Var<T>&);                                                     \
  template Var<T> mean(const Var<T>&);                                                    \
  template Var<T> max(const Var<T>&);                                                     \
  template Var<T> mean_channels(const Var<T>&);                                           \
  template Var<T> max_channels(const Var<T>&);                                            \
  template Var<T> global_avg_pool(const Var<T>&);                                         \
  template Var<T> concat_channels(const std::vector<Var<T>>&);                            \
  template Var<T> gather_channels(const Var<T>&, const std::vector<std::size_t>&);        \
  template Var<T> softmax(const Var<T>&, int);                                            \
  template Var<T> weighted_sum(const std::vector<Var<T>>&, const Var<T>&);                \
  template Var<T> mul_gate(const Var<T>&, const Var<T>&);                                 \
  template Var<T> bilinear_resize(const Var<T>&, std::size_t, std::size_t);               \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);             \
  template Var<T> linear(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&);

CDNAS_INSTANTIATE_OPS(float)
CDNAS_INSTANTIATE_OPS(double)

}  // namespace cdnas
