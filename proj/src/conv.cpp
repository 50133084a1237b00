// Convolution, center sampling and pooling kernels.
//
// conv2d lowers each (sample, group) pair to one GEMM over an im2col buffer.
// Reductions run in a fixed order, so results are bitwise reproducible.

#include <Eigen/Core>
#include <limits>

#include "cdnas/ops.hpp"

namespace cdnas {

std::size_t conv_out_size(std::size_t in, std::size_t kernel, const ConvGeometry& g) {
  if (g.stride == 0) throw ConfigError("stride must be >= 1");
  if (g.dilation == 0) throw ConfigError("dilation must be >= 1");
  if (kernel == 0) throw ConfigError("kernel size must be >= 1");
  const std::size_t span = g.dilation * (kernel - 1) + 1;
  if (in + 2 * g.padding < span) {
    throw ConfigError("kernel span " + std::to_string(span) + " exceeds padded input " +
                      std::to_string(in + 2 * g.padding));
  }
  return (in + 2 * g.padding - span) / g.stride + 1;
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Plane {
  std::size_t channels, h, w, oh, ow, k;
  ConvGeometry g;
};

// cols[(c*k + kh)*k + kw][oh*ow] = x[c][oh*s - p + kh*d][ow*s - p + kw*d]
template <typename T>
void im2col(const T* x, const Plane& p, T* cols) {
  const std::size_t ohw = p.oh * p.ow;
  for (std::size_t c = 0; c < p.channels; ++c) {
    const T* xc = x + c * p.h * p.w;
    for (std::size_t kh = 0; kh < p.k; ++kh) {
      for (std::size_t kw = 0; kw < p.k; ++kw) {
        T* row = cols + ((c * p.k + kh) * p.k + kw) * ohw;
        for (std::size_t oy = 0; oy < p.oh; ++oy) {
          const long iy = long(oy * p.g.stride + kh * p.g.dilation) - long(p.g.padding);
          T* dst = row + oy * p.ow;
          if (iy < 0 || iy >= long(p.h)) {
            std::fill_n(dst, p.ow, T(0));
            continue;
          }
          const T* src = xc + iy * p.w;
          for (std::size_t ox = 0; ox < p.ow; ++ox) {
            const long ix = long(ox * p.g.stride + kw * p.g.dilation) - long(p.g.padding);
            dst[ox] = (ix < 0 || ix >= long(p.w)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const Plane& p, T* x) {
  const std::size_t ohw = p.oh * p.ow;
  for (std::size_t c = 0; c < p.channels; ++c) {
    T* xc = x + c * p.h * p.w;
    for (std::size_t kh = 0; kh < p.k; ++kh) {
      for (std::size_t kw = 0; kw < p.k; ++kw) {
        const T* row = cols + ((c * p.k + kh) * p.k + kw) * ohw;
        for (std::size_t oy = 0; oy < p.oh; ++oy) {
          const long iy = long(oy * p.g.stride + kh * p.g.dilation) - long(p.g.padding);
          if (iy < 0 || iy >= long(p.h)) continue;
          T* dst = xc + iy * p.w;
          const T* src = row + oy * p.ow;
          for (std::size_t ox = 0; ox < p.ow; ++ox) {
            const long ix = long(ox * p.g.stride + kw * p.g.dilation) - long(p.g.padding);
            if (ix >= 0 && ix < long(p.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(std::size_t k, const ConvGeometry& g) {
  return k == 1 && g.stride == 1 && g.padding == 0;
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const std::optional<Var<T>>& bias,
              const ConvGeometry& g) {
  if (x.value().rank() != 4 || w.value().rank() != 4) {
    throw ShapeError("conv2d: expected 4-D input and weight, got " + shape_str(x.shape()) +
                     " and " + shape_str(w.shape()));
  }
  if (g.groups == 0) throw ConfigError("conv2d: groups must be >= 1");
  const auto n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const auto cout = w.dim(0), cg = w.dim(1), k = w.dim(2);
  if (w.dim(3) != k) throw ShapeError("conv2d: kernel must be square, got " + shape_str(w.shape()));
  if (cin % g.groups != 0 || cout % g.groups != 0 || cg * g.groups != cin) {
    throw ShapeError("conv2d: input has " + std::to_string(cin) + " channels but weight " +
                     shape_str(w.shape()) + " expects " + std::to_string(cg * g.groups) +
                     " (groups=" + std::to_string(g.groups) + ")");
  }
  if (bias && bias->numel() != cout) throw ShapeError("conv2d: bias size mismatch");
  const Plane p{cg, h, wd, conv_out_size(h, k, g), conv_out_size(wd, k, g), k, g};
  const std::size_t ohw = p.oh * p.ow, rows = cg * k * k, coutg = cout / g.groups;
  const bool pointwise = is_pointwise(k, g);

  Tensor<T> out({n, cout, p.oh, p.ow});
  std::vector<T> cols(pointwise ? 0 : rows * ohw);
  const T* xdata = x.value().data().data();
  const T* wdata = w.value().data().data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t gi = 0; gi < g.groups; ++gi) {
      const T* xin = xdata + (b * cin + gi * cg) * h * wd;
      const T* colp = xin;
      if (!pointwise) {
        im2col(xin, p, cols.data());
        colp = cols.data();
      }
      Eigen::Map<const RowMat<T>> C(colp, rows, ohw);
      Eigen::Map<const RowMat<T>> W(wdata + gi * coutg * rows, coutg, rows);
      Eigen::Map<RowMat<T>> Y(out.data().data() + (b * cout + gi * coutg) * ohw, coutg, ohw);
      Y.noalias() = W * C;
    }
    if (bias) {
      for (std::size_t co = 0; co < cout; ++co) {
        const T bv = bias->value()[co];
        T* y = out.data().data() + (b * cout + co) * ohw;
        for (std::size_t i = 0; i < ohw; ++i) y[i] += bv;
      }
    }
  }

  std::vector<Var<T>> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  auto xn = x.node(), wn = w.node();
  std::shared_ptr<Node<T>> bn = bias ? bias->node() : nullptr;
  return make_result<T>(
      std::move(out), inputs, "conv2d",
      [xn, wn, bn, p, n, cin, cout, rows, ohw, coutg, pointwise](const Tensor<T>& gout) {
        const auto groups = p.g.groups;
        const auto cg = p.channels;
        Tensor<T> gx(xn->value.shape()), gw(wn->value.shape());
        std::vector<T> cols(pointwise ? 0 : rows * ohw);
        std::vector<T> dcols(rows * ohw);
        const T* xdata = xn->value.data().data();
        const T* wdata = wn->value.data().data();
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t gi = 0; gi < groups; ++gi) {
            Eigen::Map<const RowMat<T>> dY(gout.data().data() + (b * cout + gi * coutg) * ohw,
                                           coutg, ohw);
            if (wn->requires_grad) {
              const T* xin = xdata + (b * cin + gi * cg) * p.h * p.w;
              const T* colp = xin;
              if (!pointwise) {
                im2col(xin, p, cols.data());
                colp = cols.data();
              }
              Eigen::Map<const RowMat<T>> C(colp, rows, ohw);
              Eigen::Map<RowMat<T>> dW(gw.data().data() + gi * coutg * rows, coutg, rows);
              dW.noalias() += dY * C.transpose();
            }
            if (xn->requires_grad) {
              Eigen::Map<const RowMat<T>> W(wdata + gi * coutg * rows, coutg, rows);
              T* gxin = gx.data().data() + (b * cin + gi * cg) * p.h * p.w;
              if (pointwise) {
                Eigen::Map<RowMat<T>> dX(gxin, rows, ohw);
                dX.noalias() += W.transpose() * dY;
              } else {
                Eigen::Map<RowMat<T>> dC(dcols.data(), rows, ohw);
                dC.noalias() = W.transpose() * dY;
                col2im(dcols.data(), p, gxin);
              }
            }
          }
        }
        xn->accumulate(gx);
        wn->accumulate(gw);
        if (bn) {
          Tensor<T> gb(bn->value.shape());
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t co = 0; co < cout; ++co) {
              const T* gy = gout.data().data() + (b * cout + co) * ohw;
              T s = 0;
              for (std::size_t i = 0; i < ohw; ++i) s += gy[i];
              gb[co] += s;
            }
          bn->accumulate(gb);
        }
      });
}

template <typename T>
Var<T> center_sample(const Var<T>& x, std::size_t kernel, const ConvGeometry& g) {
  if (x.value().rank() != 4) throw ShapeError("center_sample: expected 4-D input");
  if (kernel % 2 == 0) throw ConfigError("center_sample: kernel size must be odd");
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto oh = conv_out_size(h, kernel, g), ow = conv_out_size(w, kernel, g);
  const long shift = long((kernel / 2) * g.dilation) - long(g.padding);
  // Map output position -> flat input offset, or -1 for the zero padding.
  std::vector<long> src(oh * ow, -1);
  for (std::size_t oy = 0; oy < oh; ++oy) {
    const long iy = long(oy * g.stride) + shift;
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const long ix = long(ox * g.stride) + shift;
      if (iy >= 0 && iy < long(h) && ix >= 0 && ix < long(w)) src[oy * ow + ox] = iy * long(w) + ix;
    }
  }
  Tensor<T> out({n, c, oh, ow});
  for (std::size_t pl = 0; pl < n * c; ++pl) {
    const T* xp = x.value().data().data() + pl * h * w;
    T* yp = out.data().data() + pl * oh * ow;
    for (std::size_t i = 0; i < oh * ow; ++i) yp[i] = src[i] < 0 ? T(0) : xp[src[i]];
  }
  auto xn = x.node();
  return make_result<T>(std::move(out), {x}, "center_sample",
                        [xn, src, n, c, h, w, oh, ow](const Tensor<T>& gout) {
                          Tensor<T> gx(xn->value.shape());
                          for (std::size_t pl = 0; pl < n * c; ++pl) {
                            T* gp = gx.data().data() + pl * h * w;
                            const T* go = gout.data().data() + pl * oh * ow;
                            for (std::size_t i = 0; i < oh * ow; ++i)
                              if (src[i] >= 0) gp[src[i]] += go[i];
                          }
                          xn->accumulate(gx);
                        });
}

template <typename T>
Var<T> kernel_sum(const Var<T>& w) {
  if (w.value().rank() != 4) throw ShapeError("kernel_sum: expected 4-D weight");
  const auto co = w.dim(0), ci = w.dim(1), kk = w.dim(2) * w.dim(3);
  Tensor<T> out({co, ci, 1, 1});
  for (std::size_t i = 0; i < co * ci; ++i) {
    T s = 0;
    for (std::size_t j = 0; j < kk; ++j) s += w.value()[i * kk + j];
    out[i] = s;
  }
  auto wn = w.node();
  return make_result<T>(std::move(out), {w}, "kernel_sum", [wn, co, ci, kk](const Tensor<T>& g) {
    Tensor<T> gw(wn->value.shape());
    for (std::size_t i = 0; i < co * ci; ++i)
      for (std::size_t j = 0; j < kk; ++j) gw[i * kk + j] = g[i];
    wn->accumulate(gw);
  });
}

template <typename T>
Var<T> max_pool2d(const Var<T>& x, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (x.value().rank() != 4) throw ShapeError("max_pool2d: expected 4-D input");
  const ConvGeometry g{stride, padding, 1, 1};
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto oh = conv_out_size(h, kernel, g), ow = conv_out_size(w, kernel, g);
  if (padding >= kernel) throw ConfigError("max_pool2d: padding must be smaller than kernel");
  Tensor<T> out({n, c, oh, ow});
  std::vector<std::size_t> arg(out.numel());
  for (std::size_t pl = 0; pl < n * c; ++pl) {
    const T* xp = x.value().data().data() + pl * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t bi = 0;
        for (std::size_t kh = 0; kh < kernel; ++kh) {
          const long iy = long(oy * stride + kh) - long(padding);
          if (iy < 0 || iy >= long(h)) continue;
          for (std::size_t kw = 0; kw < kernel; ++kw) {
            const long ix = long(ox * stride + kw) - long(padding);
            if (ix < 0 || ix >= long(w)) continue;
            const T v = xp[iy * w + ix];
            if (v > best) {
              best = v;
              bi = iy * w + ix;
            }
          }
        }
        const auto o = (pl * oh + oy) * ow + ox;
        out[o] = best;
        arg[o] = bi;
      }
  }
  auto xn = x.node();
  return make_result<T>(std::move(out), {x}, "max_pool2d",
                        [xn, arg = std::move(arg), n, c, h, w, oh, ow](const Tensor<T>& g) {
                          Tensor<T> gx(xn->value.shape());
                          for (std::size_t pl = 0; pl < n * c; ++pl)
                            for (std::size_t i = 0; i < oh * ow; ++i)
                              gx[pl * h * w + arg[pl * oh * ow + i]] += g[pl * oh * ow + i];
                          xn->accumulate(gx);
                        });
}

template <typename T>
Var<T> avg_pool2d(const Var<T>& x, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (x.value().rank() != 4) throw ShapeError("avg_pool2d: expected 4-D input");
  const ConvGeometry g{stride, padding, 1, 1};
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto oh = conv_out_size(h, kernel, g), ow = conv_out_size(w, kernel, g);
  const T inv = T(1) / T(kernel * kernel);
  Tensor<T> out({n, c, oh, ow});
  for (std::size_t pl = 0; pl < n * c; ++pl) {
    const T* xp = x.value().data().data() + pl * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T s = 0;
        for (std::size_t kh = 0; kh < kernel; ++kh) {
          const long iy = long(oy * stride + kh) - long(padding);
          if (iy < 0 || iy >= long(h)) continue;
          for (std::size_t kw = 0; kw < kernel; ++kw) {
            const long ix = long(ox * stride + kw) - long(padding);
            if (ix >= 0 && ix < long(w)) s += xp[iy * w + ix];
          }
        }
        out[(pl * oh + oy) * ow + ox] = s * inv;
      }
  }
  auto xn = x.node();
  return make_result<T>(
      std::move(out), {x}, "avg_pool2d",
      [xn, n, c, h, w, oh, ow, kernel, stride, padding, inv](const Tensor<T>& g) {
        Tensor<T> gx(xn->value.shape());
        for (std::size_t pl = 0; pl < n * c; ++pl) {
          T* gp = gx.data().data() + pl * h * w;
          for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const T go = g[(pl * oh + oy) * ow + ox] * inv;
              for (std::size_t kh = 0; kh < kernel; ++kh) {
                const long iy = long(oy * stride + kh) - long(padding);
                if (iy < 0 || iy >= long(h)) continue;
                for (std::size_t kw = 0; kw < kernel; ++kw) {
                  const long ix = long(ox * stride + kw) - long(padding);
                  if (ix >= 0 && ix < long(w)) gp[iy * w + ix] += go;
                }
              }
            }
        }
        xn->accumulate(gx);
      });
}

#define CDNAS_INSTANTIATE_CONV(T)                                                               \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&,            \
                         const ConvGeometry&);                                                  \
  template Var<T> center_sample(const Var<T>&, std::size_t, const ConvGeometry&);               \
  template Var<T> kernel_sum(const Var<T>&);                                                    \
  template Var<T> max_pool2d(const Var<T>&, std::size_t, std::size_t, std::size_t);             \
  template Var<T> avg_pool2d(const Var<T>&, std::size_t, std::size_t, std::size_t);

CDNAS_INSTANTIATE_CONV(float)
CDNAS_INSTANTIATE_CONV(double)

}  // namespace cdnas
