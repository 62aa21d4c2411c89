#include "sevo/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sevo {
namespace {

template <typename Scalar>
void require_same_shape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + a.shape().str() + " vs " + b.shape().str());
  }
}

template <typename Scalar>
Graph<Scalar>& graph_of(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (&a.graph() != &b.graph()) throw ContractError("operands live on different graphs");
  return a.graph();
}

struct AxisSplit {
  Index outer = 1;
  Index len = 1;
  Index inner = 1;
};

AxisSplit split_axis(const Shape& s, int axis) {
  if (axis < 0 || axis >= s.rank()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + s.str());
  AxisSplit out;
  for (int i = 0; i < axis; ++i) out.outer *= s[i];
  out.len = s[axis];
  for (int i = axis + 1; i < s.rank(); ++i) out.inner *= s[i];
  return out;
}

Shape drop_axis(const Shape& s, int axis) {
  std::array<Index, 4> d{};
  int r = 0;
  for (int i = 0; i < s.rank(); ++i) {
    if (i != axis) d[static_cast<std::size_t>(r++)] = s[i];
  }
  switch (r) {
    case 0: return Shape{};
    case 1: return Shape{d[0]};
    case 2: return Shape{d[0], d[1]};
    default: return Shape{d[0], d[1], d[2]};
  }
}

struct ConvGeometry {
  Index n, ci, h, w, co, kh, kw, ho, wo;
  int stride, pad;
  Index patch() const { return ci * kh * kw; }
  Index out_pixels() const { return ho * wo; }
};

template <typename Scalar>
void im2col(const Scalar* x, const ConvGeometry& g, Scalar* cols) {
  const Index hw_out = g.out_pixels();
  for (Index c = 0; c < g.ci; ++c) {
    for (Index ki = 0; ki < g.kh; ++ki) {
      for (Index kj = 0; kj < g.kw; ++kj) {
        Scalar* row = cols + ((c * g.kh + ki) * g.kw + kj) * hw_out;
        for (Index oh = 0; oh < g.ho; ++oh) {
          const Index ih = oh * g.stride - g.pad + ki;
          for (Index ow = 0; ow < g.wo; ++ow) {
            const Index iw = ow * g.stride - g.pad + kj;
            const bool inside = ih >= 0 && ih < g.h && iw >= 0 && iw < g.w;
            row[oh * g.wo + ow] = inside ? x[(c * g.h + ih) * g.w + iw] : Scalar(0);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im(const Scalar* cols, const ConvGeometry& g, Scalar* dx) {
  const Index hw_out = g.out_pixels();
  for (Index c = 0; c < g.ci; ++c) {
    for (Index ki = 0; ki < g.kh; ++ki) {
      for (Index kj = 0; kj < g.kw; ++kj) {
        const Scalar* row = cols + ((c * g.kh + ki) * g.kw + kj) * hw_out;
        for (Index oh = 0; oh < g.ho; ++oh) {
          const Index ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= g.h) continue;
          for (Index ow = 0; ow < g.wo; ++ow) {
            const Index iw = ow * g.stride - g.pad + kj;
            if (iw < 0 || iw >= g.w) continue;
            dx[(c * g.h + ih) * g.w + iw] += row[oh * g.wo + ow];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  require_same_shape(a, b, "add");
  Graph<Scalar>& g = graph_of(a, b);
  Tensor<Scalar> out(a.shape(), a.value().array() + b.value().array());
  return g.record("add", std::move(out), {a, b}, [a, b](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    gr.accumulate(a, go);
    gr.accumulate(b, go);
  });
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  require_same_shape(a, b, "sub");
  Graph<Scalar>& g = graph_of(a, b);
  Tensor<Scalar> out(a.shape(), a.value().array() - b.value().array());
  return g.record("sub", std::move(out), {a, b}, [a, b](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    gr.accumulate(a, go);
    gr.accumulate_expr(b, -go.array());
  });
}

template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  require_same_shape(a, b, "mul");
  Graph<Scalar>& g = graph_of(a, b);
  Tensor<Scalar> out(a.shape(), a.value().array() * b.value().array());
  return g.record("mul", std::move(out), {a, b}, [a, b](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    gr.accumulate_expr(a, go.array() * b.value().array());
    gr.accumulate_expr(b, go.array() * a.value().array());
  });
}

template <typename Scalar>
Var<Scalar> affine(Var<Scalar> a, double scale, double shift) {
  const Scalar s = static_cast<Scalar>(scale);
  Tensor<Scalar> out(a.shape(), a.value().array() * s + static_cast<Scalar>(shift));
  return a.graph().record("affine", std::move(out), {a}, [a, s](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    gr.accumulate_expr(a, go.array() * s);
  });
}

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> a) {
  double acc = 0.0;
  for (Index i = 0; i < a.value().numel(); ++i) acc += static_cast<double>(a.value()[i]);
  return a.graph().record("sum", Tensor<Scalar>::scalar(static_cast<Scalar>(acc)), {a},
                          [a](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
                            gr.accumulate(a, Tensor<Scalar>::constant(a.shape(), go.item()));
                          });
}

template <typename Scalar>
Var<Scalar> mean(Var<Scalar> a) {
  const Index n = a.value().numel();
  if (n == 0) throw DimensionError("mean of an empty tensor");
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) acc += static_cast<double>(a.value()[i]);
  return a.graph().record("mean", Tensor<Scalar>::scalar(static_cast<Scalar>(acc / static_cast<double>(n))), {a},
                          [a, n](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
                            gr.accumulate(a, Tensor<Scalar>::constant(a.shape(), go.item() / static_cast<Scalar>(n)));
                          });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> a) {
  Tensor<Scalar> out(a.shape(), a.value().array().max(Scalar(0)));
  return a.graph().record("relu", std::move(out), {a}, [a](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    gr.accumulate_expr(a, (a.value().array() > Scalar(0)).select(go.array(), Scalar(0)));
  });
}

template <typename Scalar>
Var<Scalar> softplus(Var<Scalar> a) {
  const auto& x = a.value().array();
  Tensor<Scalar> out(a.shape(), x.max(Scalar(0)) + (-x.abs()).exp().log1p());
  return a.graph().record("softplus", std::move(out), {a}, [a](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    const auto& xv = a.value().array();
    gr.accumulate_expr(a, go.array() / (Scalar(1) + (-xv).exp()));
  });
}

template <typename Scalar>
Var<Scalar> reshape(Var<Scalar> a, const Shape& shape) {
  Tensor<Scalar> out = a.value().reshaped(shape);
  return a.graph().record("reshape", std::move(out), {a}, [a](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    gr.accumulate(a, go.reshaped(a.shape()));
  });
}

template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> x, Var<Scalar> weight, Var<Scalar> bias, int stride, int padding) {
  const Tensor<Scalar>& xv = x.value();
  const Tensor<Scalar>& wv = weight.value();
  require_feature_map(xv, "conv2d input");
  if (wv.rank() != 4 || wv.dim(1) != xv.dim(1)) {
    throw DimensionError("conv2d: weight " + wv.shape().str() + " incompatible with input " + xv.shape().str());
  }
  if (stride < 1 || padding < 0) throw DimensionError("conv2d: invalid stride/padding");
  ConvGeometry geo{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(0), wv.dim(2), wv.dim(3), 0, 0, stride, padding};
  geo.ho = (geo.h + 2 * padding - geo.kh) / stride + 1;
  geo.wo = (geo.w + 2 * padding - geo.kw) / stride + 1;
  if (geo.ho <= 0 || geo.wo <= 0) throw DimensionError("conv2d: kernel larger than padded input");
  if (bias.valid() && (bias.value().rank() != 1 || bias.value().dim(0) != geo.co)) {
    throw DimensionError("conv2d: bias must have one entry per output channel");
  }

  const bool pointwise = geo.kh == 1 && geo.kw == 1 && stride == 1 && padding == 0;
  const Index in_plane = geo.ci * geo.h * geo.w;
  const Index out_plane = geo.co * geo.out_pixels();
  ConstMatrixMap<Scalar> wmat(wv.data(), geo.co, geo.patch());

  Tensor<Scalar> out(Shape{geo.n, geo.co, geo.ho, geo.wo});
  Matrix<Scalar> cols(geo.patch(), geo.out_pixels());
  for (Index b = 0; b < geo.n; ++b) {
    MatrixMap<Scalar> y(out.data() + b * out_plane, geo.co, geo.out_pixels());
    if (pointwise) {
      y.noalias() = wmat * ConstMatrixMap<Scalar>(xv.data() + b * in_plane, geo.ci, geo.out_pixels());
    } else {
      im2col(xv.data() + b * in_plane, geo, cols.data());
      y.noalias() = wmat * cols;
    }
    if (bias.valid()) y.colwise() += Eigen::Map<const Vector<Scalar>>(bias.value().data(), geo.co);
  }

  return x.graph().record(
      "conv2d", std::move(out), {x, weight, bias},
      [x, weight, bias, geo, pointwise, in_plane, out_plane](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
        const Tensor<Scalar>& xv = x.value();
        ConstMatrixMap<Scalar> wmat(weight.value().data(), geo.co, geo.patch());
        const bool need_x = gr.requires_grad(x);
        const bool need_w = gr.requires_grad(weight);
        Tensor<Scalar> dx(xv.shape());
        Tensor<Scalar> dw(weight.value().shape());
        MatrixMap<Scalar> dwmat(dw.data(), geo.co, geo.patch());
        Vector<Scalar> db = Vector<Scalar>::Zero(geo.co);
        Matrix<Scalar> cols(geo.patch(), geo.out_pixels());
        for (Index b = 0; b < geo.n; ++b) {
          ConstMatrixMap<Scalar> dy(go.data() + b * out_plane, geo.co, geo.out_pixels());
          if (bias.valid()) db += dy.rowwise().sum();
          if (pointwise) {
            ConstMatrixMap<Scalar> xin(xv.data() + b * in_plane, geo.ci, geo.out_pixels());
            if (need_w) dwmat.noalias() += dy * xin.transpose();
            if (need_x) MatrixMap<Scalar>(dx.data() + b * in_plane, geo.ci, geo.out_pixels()).noalias() = wmat.transpose() * dy;
          } else {
            if (need_w) {
              im2col(xv.data() + b * in_plane, geo, cols.data());
              dwmat.noalias() += dy * cols.transpose();
            }
            if (need_x) {
              cols.noalias() = wmat.transpose() * dy;
              col2im(cols.data(), geo, dx.data() + b * in_plane);
            }
          }
        }
        if (need_x) gr.accumulate(x, dx);
        if (need_w) gr.accumulate(weight, dw);
        if (bias.valid()) gr.accumulate(bias, Tensor<Scalar>(bias.value().shape(), db.array()));
      });
}

template <typename Scalar>
Var<Scalar> linear(Var<Scalar> x, Var<Scalar> weight, Var<Scalar> bias) {
  const Tensor<Scalar>& xv = x.value();
  const Tensor<Scalar>& wv = weight.value();
  if (xv.rank() != 2 || wv.rank() != 2 || wv.dim(1) != xv.dim(1)) {
    throw DimensionError("linear: input " + xv.shape().str() + " vs weight " + wv.shape().str());
  }
  const Index n = xv.dim(0), in = xv.dim(1), outd = wv.dim(0);
  if (bias.valid() && (bias.value().rank() != 1 || bias.value().dim(0) != outd)) {
    throw DimensionError("linear: bias size mismatch");
  }
  Tensor<Scalar> out(Shape{n, outd});
  MatrixMap<Scalar> y(out.data(), n, outd);
  y.noalias() = ConstMatrixMap<Scalar>(xv.data(), n, in) * ConstMatrixMap<Scalar>(wv.data(), outd, in).transpose();
  if (bias.valid()) y.rowwise() += Eigen::Map<const Vector<Scalar>>(bias.value().data(), outd).transpose();

  return x.graph().record("linear", std::move(out), {x, weight, bias},
                          [x, weight, bias, n, in, outd](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
                            ConstMatrixMap<Scalar> dy(go.data(), n, outd);
                            ConstMatrixMap<Scalar> xm(x.value().data(), n, in);
                            ConstMatrixMap<Scalar> wm(weight.value().data(), outd, in);
                            if (gr.requires_grad(x)) {
                              Tensor<Scalar> dx(x.shape());
                              MatrixMap<Scalar>(dx.data(), n, in).noalias() = dy * wm;
                              gr.accumulate(x, dx);
                            }
                            if (gr.requires_grad(weight)) {
                              Tensor<Scalar> dw(weight.shape());
                              MatrixMap<Scalar>(dw.data(), outd, in).noalias() = dy.transpose() * xm;
                              gr.accumulate(weight, dw);
                            }
                            if (bias.valid()) {
                              Vector<Scalar> db = dy.colwise().sum().transpose();
                              gr.accumulate(bias, Tensor<Scalar>(bias.shape(), db.array()));
                            }
                          });
}

template <typename Scalar>
Var<Scalar> concat_channels(Var<Scalar> a, Var<Scalar> b) {
  const Tensor<Scalar>& av = a.value();
  const Tensor<Scalar>& bv = b.value();
  require_feature_map(av, "concat_channels");
  require_feature_map(bv, "concat_channels");
  if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3)) {
    throw DimensionError("concat_channels: " + av.shape().str() + " vs " + bv.shape().str());
  }
  Graph<Scalar>& g = graph_of(a, b);
  const Index n = av.dim(0), ca = av.dim(1), cb = bv.dim(1), hw = av.dim(2) * av.dim(3);
  Tensor<Scalar> out(Shape{n, ca + cb, av.dim(2), av.dim(3)});
  for (Index i = 0; i < n; ++i) {
    std::copy_n(av.data() + i * ca * hw, ca * hw, out.data() + i * (ca + cb) * hw);
    std::copy_n(bv.data() + i * cb * hw, cb * hw, out.data() + i * (ca + cb) * hw + ca * hw);
  }
  return g.record("concat_channels", std::move(out), {a, b},
                  [a, b, n, ca, cb, hw](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
                    Tensor<Scalar> da(a.shape()), db(b.shape());
                    for (Index i = 0; i < n; ++i) {
                      std::copy_n(go.data() + i * (ca + cb) * hw, ca * hw, da.data() + i * ca * hw);
                      std::copy_n(go.data() + i * (ca + cb) * hw + ca * hw, cb * hw, db.data() + i * cb * hw);
                    }
                    gr.accumulate(a, da);
                    gr.accumulate(b, db);
                  });
}

template <typename Scalar>
Var<Scalar> adaptive_avg_pool2d(Var<Scalar> x, Index out_h, Index out_w) {
  const Tensor<Scalar>& xv = x.value();
  require_feature_map(xv, "adaptive_avg_pool2d");
  if (out_h <= 0 || out_w <= 0) throw DimensionError("adaptive_avg_pool2d: non-positive output size");
  const Index planes = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  auto lo = [](Index i, Index in, Index out) { return (i * in) / out; };
  auto hi = [](Index i, Index in, Index out) { return ((i + 1) * in + out - 1) / out; };

  Tensor<Scalar> out(Shape{xv.dim(0), xv.dim(1), out_h, out_w});
  for (Index p = 0; p < planes; ++p) {
    const Scalar* src = xv.data() + p * h * w;
    Scalar* dst = out.data() + p * out_h * out_w;
    for (Index oh = 0; oh < out_h; ++oh) {
      for (Index ow = 0; ow < out_w; ++ow) {
        const Index h0 = lo(oh, h, out_h), h1 = hi(oh, h, out_h);
        const Index w0 = lo(ow, w, out_w), w1 = hi(ow, w, out_w);
        double acc = 0.0;
        for (Index i = h0; i < h1; ++i)
          for (Index j = w0; j < w1; ++j) acc += static_cast<double>(src[i * w + j]);
        dst[oh * out_w + ow] = static_cast<Scalar>(acc / static_cast<double>((h1 - h0) * (w1 - w0)));
      }
    }
  }
  return x.graph().record(
      "adaptive_avg_pool2d", std::move(out), {x},
      [x, planes, h, w, out_h, out_w, lo, hi](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
        Tensor<Scalar> dx(x.shape());
        for (Index p = 0; p < planes; ++p) {
          const Scalar* src = go.data() + p * out_h * out_w;
          Scalar* dst = dx.data() + p * h * w;
          for (Index oh = 0; oh < out_h; ++oh) {
            for (Index ow = 0; ow < out_w; ++ow) {
              const Index h0 = lo(oh, h, out_h), h1 = hi(oh, h, out_h);
              const Index w0 = lo(ow, w, out_w), w1 = hi(ow, w, out_w);
              const Scalar share = src[oh * out_w + ow] / static_cast<Scalar>((h1 - h0) * (w1 - w0));
              for (Index i = h0; i < h1; ++i)
                for (Index j = w0; j < w1; ++j) dst[i * w + j] += share;
            }
          }
        }
        gr.accumulate(x, dx);
      });
}

template <typename Scalar>
Var<Scalar> broadcast_spatial(Var<Scalar> x, Index h, Index w) {
  const Tensor<Scalar>& xv = x.value();
  if (xv.rank() != 2) throw DimensionError("broadcast_spatial expects (N, C), got " + xv.shape().str());
  const Index n = xv.dim(0), c = xv.dim(1), hw = h * w;
  Tensor<Scalar> out(Shape{n, c, h, w});
  for (Index i = 0; i < n * c; ++i) std::fill_n(out.data() + i * hw, hw, xv[i]);
  return x.graph().record("broadcast_spatial", std::move(out), {x},
                          [x, n, c, hw](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
                            Tensor<Scalar> dx(x.shape());
                            for (Index i = 0; i < n * c; ++i) {
                              dx[i] = Eigen::Map<const Vector<Scalar>>(go.data() + i * hw, hw).sum();
                            }
                            gr.accumulate(x, dx);
                          });
}

template <typename Scalar>
Var<Scalar> mean_axis(Var<Scalar> x, int axis) {
  const AxisSplit s = split_axis(x.shape(), axis);
  if (s.len == 0) throw DimensionError("mean_axis over an empty axis");
  Tensor<Scalar> out(drop_axis(x.shape(), axis));
  const Tensor<Scalar>& xv = x.value();
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      double acc = 0.0;
      for (Index k = 0; k < s.len; ++k) acc += static_cast<double>(xv[(o * s.len + k) * s.inner + i]);
      out[o * s.inner + i] = static_cast<Scalar>(acc / static_cast<double>(s.len));
    }
  }
  return x.graph().record("mean_axis", std::move(out), {x}, [x, s](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    Tensor<Scalar> dx(x.shape());
    const Scalar inv = Scalar(1) / static_cast<Scalar>(s.len);
    for (Index o = 0; o < s.outer; ++o)
      for (Index k = 0; k < s.len; ++k)
        for (Index i = 0; i < s.inner; ++i) dx[(o * s.len + k) * s.inner + i] = go[o * s.inner + i] * inv;
    gr.accumulate(x, dx);
  });
}

template <typename Scalar>
Var<Scalar> softmax(Var<Scalar> x, int axis) {
  const AxisSplit s = split_axis(x.shape(), axis);
  const Tensor<Scalar>& xv = x.value();
  Tensor<Scalar> out(x.shape());
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      const Index base = o * s.len * s.inner + i;
      Scalar mx = xv[base];
      for (Index k = 1; k < s.len; ++k) mx = std::max(mx, xv[base + k * s.inner]);
      double total = 0.0;
      for (Index k = 0; k < s.len; ++k) {
        const Scalar e = std::exp(xv[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        total += static_cast<double>(e);
      }
      const Scalar inv = static_cast<Scalar>(1.0 / total);
      for (Index k = 0; k < s.len; ++k) out[base + k * s.inner] *= inv;
    }
  }
  const Tensor<Scalar> yv = out;
  return x.graph().record("softmax", std::move(out), {x}, [x, s, yv](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
    Tensor<Scalar> dx(x.shape());
    for (Index o = 0; o < s.outer; ++o) {
      for (Index i = 0; i < s.inner; ++i) {
        const Index base = o * s.len * s.inner + i;
        double dot = 0.0;
        for (Index k = 0; k < s.len; ++k) dot += static_cast<double>(go[base + k * s.inner] * yv[base + k * s.inner]);
        for (Index k = 0; k < s.len; ++k) {
          const Index at = base + k * s.inner;
          dx[at] = yv[at] * (go[at] - static_cast<Scalar>(dot));
        }
      }
    }
    gr.accumulate(x, dx);
  });
}

template <typename Scalar>
Var<Scalar> l2_normalize(Var<Scalar> x, int axis, double eps) {
  const AxisSplit s = split_axis(x.shape(), axis);
  const Tensor<Scalar>& xv = x.value();
  Tensor<Scalar> out(x.shape());
  Tensor<Scalar> denom(Shape{s.outer * s.inner});
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      const Index base = o * s.len * s.inner + i;
      double sq = 0.0;
      for (Index k = 0; k < s.len; ++k) sq += static_cast<double>(xv[base + k * s.inner]) * xv[base + k * s.inner];
      const double d = std::max(std::sqrt(sq), eps);
      denom[o * s.inner + i] = static_cast<Scalar>(d);
      for (Index k = 0; k < s.len; ++k) out[base + k * s.inner] = static_cast<Scalar>(xv[base + k * s.inner] / d);
    }
  }
  const Tensor<Scalar> yv = out;
  return x.graph().record(
      "l2_normalize", std::move(out), {x}, [x, s, yv, denom, eps](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
        Tensor<Scalar> dx(x.shape());
        for (Index o = 0; o < s.outer; ++o) {
          for (Index i = 0; i < s.inner; ++i) {
            const Index base = o * s.len * s.inner + i;
            const Scalar d = denom[o * s.inner + i];
            const bool clamped = static_cast<double>(d) <= eps;
            double dot = 0.0;
            if (!clamped) {
              for (Index k = 0; k < s.len; ++k) dot += static_cast<double>(go[base + k * s.inner] * yv[base + k * s.inner]);
            }
            for (Index k = 0; k < s.len; ++k) {
              const Index at = base + k * s.inner;
              dx[at] = (go[at] - yv[at] * static_cast<Scalar>(dot)) / d;
            }
          }
        }
        gr.accumulate(x, dx);
      });
}

template <typename Scalar>
Var<Scalar> normalize_channels(Var<Scalar> x, double eps) {
  const Tensor<Scalar>& xv = x.value();
  const ChannelStats<Scalar> st = channel_stats(xv, eps);
  const Index n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Tensor<Scalar> out(x.shape());
  for (Index b = 0; b < n; ++b) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (b * c + ch) * hw;
      out.array().segment(off, hw) = (xv.array().segment(off, hw) - st.mean[ch]) / st.std[ch];
    }
  }
  const Tensor<Scalar> xhat = out;
  return x.graph().record(
      "normalize_channels", std::move(out), {x}, [x, xhat, st, n, c, hw](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
        Tensor<Scalar> dx(x.shape());
        const double count = static_cast<double>(n * hw);
        for (Index ch = 0; ch < c; ++ch) {
          double g_mean = 0.0, gx_mean = 0.0;
          for (Index b = 0; b < n; ++b) {
            const Index off = (b * c + ch) * hw;
            for (Index i = 0; i < hw; ++i) {
              g_mean += static_cast<double>(go[off + i]);
              gx_mean += static_cast<double>(go[off + i]) * xhat[off + i];
            }
          }
          g_mean /= count;
          gx_mean /= count;
          for (Index b = 0; b < n; ++b) {
            const Index off = (b * c + ch) * hw;
            for (Index i = 0; i < hw; ++i) {
              dx[off + i] = static_cast<Scalar>((go[off + i] - g_mean - xhat[off + i] * gx_mean) / st.std[ch]);
            }
          }
        }
        gr.accumulate(x, dx);
      });
}

template <typename Scalar>
Var<Scalar> channel_affine(Var<Scalar> x, Var<Scalar> scale, Var<Scalar> shift) {
  const Tensor<Scalar>& xv = x.value();
  require_feature_map(xv, "channel_affine");
  const Index n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  if (scale.value().numel() != c || shift.value().numel() != c) {
    throw DimensionError("channel_affine: feature map has " + std::to_string(c) + " channels, style has " +
                         std::to_string(scale.value().numel()));
  }
  Tensor<Scalar> out(x.shape());
  for (Index b = 0; b < n; ++b) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (b * c + ch) * hw;
      out.array().segment(off, hw) = xv.array().segment(off, hw) * scale.value()[ch] + shift.value()[ch];
    }
  }
  return x.graph().record("channel_affine", std::move(out), {x, scale, shift},
                          [x, scale, shift, n, c, hw](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
                            const Tensor<Scalar>& xv = x.value();
                            Tensor<Scalar> dx(x.shape()), ds(scale.shape()), dt(shift.shape());
                            for (Index b = 0; b < n; ++b) {
                              for (Index ch = 0; ch < c; ++ch) {
                                const Index off = (b * c + ch) * hw;
                                const auto gseg = go.array().segment(off, hw);
                                dx.array().segment(off, hw) = gseg * scale.value()[ch];
                                ds[ch] += (gseg * xv.array().segment(off, hw)).sum();
                                dt[ch] += gseg.sum();
                              }
                            }
                            gr.accumulate(x, dx);
                            gr.accumulate(scale, ds);
                            gr.accumulate(shift, dt);
                          });
}

template <typename Scalar>
Var<Scalar> cosine_sim_map(Var<Scalar> a, Var<Scalar> b, Var<Scalar> proj) {
  const Tensor<Scalar>& av = a.value();
  require_feature_map(av, "cosine_sim_map");
  const Index n = av.dim(0), c = av.dim(1), hw = av.dim(2) * av.dim(3);
  const Tensor<Scalar>& pv = proj.value();
  const Index d = b.value().numel();
  if (pv.rank() != 2 || pv.dim(0) != d || pv.dim(1) != c) {
    throw DimensionError("cosine_sim_map: projection " + pv.shape().str() + " does not map " + std::to_string(c) +
                         " channels to " + std::to_string(d) + " dims");
  }
  if (n * hw == 0) throw DimensionError("cosine_sim_map: empty feature map");

  ConstMatrixMap<Scalar> pm(pv.data(), d, c);
  Eigen::Map<const Vector<Scalar>> bvec(b.value().data(), d);
  const double bnorm = static_cast<double>(bvec.norm());
  const double count = static_cast<double>(n * hw);

  // Per position: z = P a, cos = z.b / (|z| |b|).
  Matrix<Scalar> z(d, hw);
  double total = 0.0;
  for (Index s = 0; s < n; ++s) {
    z.noalias() = pm * ConstMatrixMap<Scalar>(av.data() + s * c * hw, c, hw);
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> dots = bvec.transpose() * z;
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> norms = z.colwise().norm();
    for (Index p = 0; p < hw; ++p) {
      const double den = static_cast<double>(norms[p]) * bnorm;
      if (den > kNormEps) total += static_cast<double>(dots[p]) / den;
    }
  }
  Graph<Scalar>& g = a.graph();
  return g.record(
      "cosine_sim_map", Tensor<Scalar>::scalar(static_cast<Scalar>(total / count)), {a, b, proj},
      [a, b, proj, n, c, hw, d, bnorm, count](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
        const Tensor<Scalar>& av = a.value();
        ConstMatrixMap<Scalar> pm(proj.value().data(), d, c);
        Eigen::Map<const Vector<Scalar>> bvec(b.value().data(), d);
        const Scalar coef = static_cast<Scalar>(static_cast<double>(go.item()) / count);
        Tensor<Scalar> da(a.shape());
        Matrix<Scalar> dp = Matrix<Scalar>::Zero(d, c);
        Vector<Scalar> db = Vector<Scalar>::Zero(d);
        Matrix<Scalar> z(d, hw), dz(d, hw);
        for (Index s = 0; s < n; ++s) {
          ConstMatrixMap<Scalar> am(av.data() + s * c * hw, c, hw);
          z.noalias() = pm * am;
          for (Index p = 0; p < hw; ++p) {
            const double zn = static_cast<double>(z.col(p).norm());
            const double den = zn * bnorm;
            if (den <= kNormEps) {
              dz.col(p).setZero();
              continue;
            }
            const double cosv = static_cast<double>(z.col(p).dot(bvec)) / den;
            dz.col(p) = coef * (bvec / static_cast<Scalar>(den) - z.col(p) * static_cast<Scalar>(cosv / (zn * zn)));
            db += coef * (z.col(p) / static_cast<Scalar>(den) - bvec * static_cast<Scalar>(cosv / (bnorm * bnorm)));
          }
          MatrixMap<Scalar>(da.data() + s * c * hw, c, hw).noalias() = pm.transpose() * dz;
          dp.noalias() += dz * am.transpose();
        }
        gr.accumulate(a, da);
        gr.accumulate(b, Tensor<Scalar>(b.shape(), db.array()));
        gr.accumulate(proj, Tensor<Scalar>(proj.shape(), Eigen::Map<const Vector<Scalar>>(dp.data(), d * c).array()));
      });
}

template <typename Scalar>
Var<Scalar> map_similarity(Var<Scalar> a, Var<Scalar> b) {
  require_same_shape(a, b, "map_similarity");
  const Tensor<Scalar>& av = a.value();
  const Tensor<Scalar>& bv = b.value();
  require_feature_map(av, "map_similarity");
  const Index n = av.dim(0), c = av.dim(1), hw = av.dim(2) * av.dim(3);
  if (n * hw == 0) throw DimensionError("map_similarity: empty feature map");
  const double count = static_cast<double>(n * hw);
  double total = 0.0;
  for (Index s = 0; s < n; ++s) {
    ConstMatrixMap<Scalar> am(av.data() + s * c * hw, c, hw);
    ConstMatrixMap<Scalar> bm(bv.data() + s * c * hw, c, hw);
    for (Index p = 0; p < hw; ++p) {
      const double den = static_cast<double>(am.col(p).norm()) * static_cast<double>(bm.col(p).norm());
      if (den > kNormEps) total += static_cast<double>(am.col(p).dot(bm.col(p))) / den;
    }
  }
  Graph<Scalar>& g = graph_of(a, b);
  return g.record("map_similarity", Tensor<Scalar>::scalar(static_cast<Scalar>(total / count)), {a, b},
                  [a, b, n, c, hw, count](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
                    const Scalar coef = static_cast<Scalar>(static_cast<double>(go.item()) / count);
                    Tensor<Scalar> da(a.shape()), db(b.shape());
                    for (Index s = 0; s < n; ++s) {
                      ConstMatrixMap<Scalar> am(a.value().data() + s * c * hw, c, hw);
                      ConstMatrixMap<Scalar> bm(b.value().data() + s * c * hw, c, hw);
                      MatrixMap<Scalar> dam(da.data() + s * c * hw, c, hw);
                      MatrixMap<Scalar> dbm(db.data() + s * c * hw, c, hw);
                      for (Index p = 0; p < hw; ++p) {
                        const double an = static_cast<double>(am.col(p).norm());
                        const double bn = static_cast<double>(bm.col(p).norm());
                        if (an * bn <= kNormEps) continue;
                        const double cosv = static_cast<double>(am.col(p).dot(bm.col(p))) / (an * bn);
                        dam.col(p) = coef * (bm.col(p) / static_cast<Scalar>(an * bn) -
                                             am.col(p) * static_cast<Scalar>(cosv / (an * an)));
                        dbm.col(p) = coef * (am.col(p) / static_cast<Scalar>(an * bn) -
                                             bm.col(p) * static_cast<Scalar>(cosv / (bn * bn)));
                      }
                    }
                    gr.accumulate(a, da);
                    gr.accumulate(b, db);
                  });
}

template <typename Scalar>
Var<Scalar> soft_residuals(Var<Scalar> f, Var<Scalar> theta, Var<Scalar> centers) {
  const Tensor<Scalar>& fv = f.value();
  const Tensor<Scalar>& tv = theta.value();
  const Tensor<Scalar>& cv = centers.value();
  require_feature_map(fv, "soft_residuals features");
  require_feature_map(tv, "soft_residuals assignment");
  const Index n = fv.dim(0), c = fv.dim(1), hw = fv.dim(2) * fv.dim(3), k = tv.dim(1);
  if (tv.dim(0) != n || tv.dim(2) * tv.dim(3) != hw || cv.rank() != 2 || cv.dim(0) != k || cv.dim(1) != c) {
    throw DimensionError("soft_residuals: features " + fv.shape().str() + ", assignment " + tv.shape().str() +
                         ", centers " + cv.shape().str());
  }
  ConstMatrixMap<Scalar> sp(cv.data(), k, c);
  Tensor<Scalar> out(Shape{n, k, c});
  for (Index s = 0; s < n; ++s) {
    ConstMatrixMap<Scalar> th(tv.data() + s * k * hw, k, hw);
    ConstMatrixMap<Scalar> fm(fv.data() + s * c * hw, c, hw);
    MatrixMap<Scalar> r(out.data() + s * k * c, k, c);
    r.noalias() = th * fm.transpose();
    r -= th.rowwise().sum().asDiagonal() * sp;
  }
  return f.graph().record(
      "soft_residuals", std::move(out), {f, theta, centers},
      [f, theta, centers, n, c, hw, k](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
        ConstMatrixMap<Scalar> sp(centers.value().data(), k, c);
        Tensor<Scalar> df(f.shape()), dt(theta.shape()), dc(centers.shape());
        MatrixMap<Scalar> dsp(dc.data(), k, c);
        for (Index s = 0; s < n; ++s) {
          ConstMatrixMap<Scalar> th(theta.value().data() + s * k * hw, k, hw);
          ConstMatrixMap<Scalar> fm(f.value().data() + s * c * hw, c, hw);
          ConstMatrixMap<Scalar> dr(go.data() + s * k * c, k, c);
          MatrixMap<Scalar> dth(dt.data() + s * k * hw, k, hw);
          dth.noalias() = dr * fm;
          dth.colwise() -= dr.cwiseProduct(sp).rowwise().sum();
          MatrixMap<Scalar>(df.data() + s * c * hw, c, hw).noalias() = dr.transpose() * th;
          dsp -= th.rowwise().sum().asDiagonal() * dr;
        }
        gr.accumulate(f, df);
        gr.accumulate(theta, dt);
        gr.accumulate(centers, dc);
      });
}

template <typename Scalar>
Var<Scalar> stack(std::span<const Var<Scalar>> scalars) {
  if (scalars.empty()) throw DimensionError("stack of zero scalars");
  Graph<Scalar>& g = scalars.front().graph();
  const Index n = static_cast<Index>(scalars.size());
  Tensor<Scalar> out(Shape{1, n});
  for (Index i = 0; i < n; ++i) {
    const Var<Scalar>& v = scalars[static_cast<std::size_t>(i)];
    if (&v.graph() != &g) throw ContractError("stack: operands live on different graphs");
    out[i] = v.value().item();
  }
  std::vector<Var<Scalar>> parts(scalars.begin(), scalars.end());
  return g.record("stack", std::move(out), std::span<const Var<Scalar>>(parts),
                  [parts](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
                    for (std::size_t i = 0; i < parts.size(); ++i) {
                      gr.accumulate(parts[i], Tensor<Scalar>::scalar(go[static_cast<Index>(i)]));
                    }
                  });
}

template <typename Scalar>
Var<Scalar> cross_entropy(Var<Scalar> logits, std::span<const int> labels) {
  const Tensor<Scalar>& lv = logits.value();
  if (lv.rank() != 2 || lv.dim(0) != static_cast<Index>(labels.size())) {
    throw DimensionError("cross_entropy: logits " + lv.shape().str() + " vs " + std::to_string(labels.size()) +
                         " labels");
  }
  const Index n = lv.dim(0), k = lv.dim(1);
  Tensor<Scalar> probs(lv.shape());
  double loss = 0.0;
  std::vector<int> lab(labels.begin(), labels.end());
  for (Index i = 0; i < n; ++i) {
    const int y = lab[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw DimensionError("cross_entropy: label out of range");
    auto row = lv.array().segment(i * k, k);
    const Scalar mx = row.maxCoeff();
    const double lse = static_cast<double>(mx) + std::log(static_cast<double>((row - mx).exp().sum()));
    loss += lse - static_cast<double>(row[y]);
    probs.array().segment(i * k, k) = (row - static_cast<Scalar>(lse)).exp();
  }
  return logits.graph().record("cross_entropy", Tensor<Scalar>::scalar(static_cast<Scalar>(loss / n)), {logits},
                               [logits, probs, lab, n, k](Graph<Scalar>& gr, const Tensor<Scalar>& go) {
                                 Tensor<Scalar> dl = probs;
                                 for (Index i = 0; i < n; ++i) dl[i * k + lab[static_cast<std::size_t>(i)]] -= Scalar(1);
                                 dl.array() *= go.item() / static_cast<Scalar>(n);
                                 gr.accumulate(logits, dl);
                               });
}

#define SEVO_INSTANTIATE_OPS(T)                                                                   \
  template Var<T> add(Var<T>, Var<T>);                                                            \
  template Var<T> sub(Var<T>, Var<T>);                                                            \
  template Var<T> mul(Var<T>, Var<T>);                                                            \
  template Var<T> affine(Var<T>, double, double);                                                 \
  template Var<T> sum(Var<T>);                                                                    \
  template Var<T> mean(Var<T>);                                                                   \
  template Var<T> relu(Var<T>);                                                                   \
  template Var<T> softplus(Var<T>);                                                               \
  template Var<T> reshape(Var<T>, const Shape&);                                                  \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>, int, int);                                       \
  template Var<T> linear(Var<T>, Var<T>, Var<T>);                                                 \
  template Var<T> concat_channels(Var<T>, Var<T>);                                                \
  template Var<T> adaptive_avg_pool2d(Var<T>, Index, Index);                                      \
  template Var<T> broadcast_spatial(Var<T>, Index, Index);                                        \
  template Var<T> mean_axis(Var<T>, int);                                                         \
  template Var<T> softmax(Var<T>, int);                                                           \
  template Var<T> l2_normalize(Var<T>, int, double);                                              \
  template Var<T> normalize_channels(Var<T>, double);                                             \
  template Var<T> channel_affine(Var<T>, Var<T>, Var<T>);                                         \
  template Var<T> cosine_sim_map(Var<T>, Var<T>, Var<T>);                                         \
  template Var<T> map_similarity(Var<T>, Var<T>);                                                 \
  template Var<T> soft_residuals(Var<T>, Var<T>, Var<T>);                                         \
  template Var<T> stack(std::span<const Var<T>>);                                                 \
  template Var<T> cross_entropy(Var<T>, std::span<const int>);

SEVO_INSTANTIATE_OPS(float)
SEVO_INSTANTIATE_OPS(double)

}  // namespace sevo
