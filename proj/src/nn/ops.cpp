#include "sfl/nn/ops.hpp"

#include <algorithm>
#include <cmath>

#include "sfl/kernels/kernels.hpp"

namespace sfl::ops {
namespace {

using kernels::Trans;

struct ConvGeom {
  std::size_t channels, height, width;  // image side
  std::size_t k, stride, pad;
  std::size_t out_h, out_w;             // column side
  std::size_t col_rows() const { return channels * k * k; }
  std::size_t col_cols() const { return out_h * out_w; }
};

template <class T>
void im2col(const ConvGeom& g, const T* img, T* cols) {
  const std::size_t ncols = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        T* dst = cols + ((c * g.k + ki) * g.k + kj) * ncols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
            const bool inside = ih >= 0 && iw >= 0 && ih < static_cast<long>(g.height) &&
                                iw < static_cast<long>(g.width);
            dst[oh * g.out_w + ow] =
                inside ? img[(c * g.height + static_cast<std::size_t>(ih)) * g.width + static_cast<std::size_t>(iw)]
                       : T(0);
          }
        }
      }
    }
  }
}

// Accumulates columns back into an image (img must be zeroed by the caller).
template <class T>
void col2im(const ConvGeom& g, const T* cols, T* img) {
  const std::size_t ncols = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const T* src = cols + ((c * g.k + ki) * g.k + kj) * ncols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
          if (ih < 0 || ih >= static_cast<long>(g.height)) continue;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
            if (iw < 0 || iw >= static_cast<long>(g.width)) continue;
            img[(c * g.height + static_cast<std::size_t>(ih)) * g.width + static_cast<std::size_t>(iw)] +=
                src[oh * g.out_w + ow];
          }
        }
      }
    }
  }
}

// Geometry of a convolution reading an image of shape `img` (C, H, W).
ConvGeom conv_geom(const UnitSpec& u, std::size_t channels, std::size_t h, std::size_t w) {
  ConvGeom g{channels, h, w, static_cast<std::size_t>(u.kernel), static_cast<std::size_t>(u.stride),
             static_cast<std::size_t>(u.pad), 0, 0};
  g.out_h = (h + 2 * g.pad - g.k) / g.stride + 1;
  g.out_w = (w + 2 * g.pad - g.k) / g.stride + 1;
  return g;
}

template <class T>
void add_channel_bias(const BasicTensor<T>& b, std::size_t spatial, T* out) {
  for (std::size_t o = 0; o < b.numel(); ++o) {
    T* p = out + o * spatial;
    for (std::size_t s = 0; s < spatial; ++s) p[s] += b[o];
  }
}

template <class T>
void accumulate_channel_sums(const T* g, std::size_t channels, std::size_t spatial, BasicTensor<T>& db) {
  for (std::size_t o = 0; o < channels; ++o) {
    T acc = 0;
    const T* p = g + o * spatial;
    for (std::size_t s = 0; s < spatial; ++s) acc += p[s];
    db[o] += acc;
  }
}

}  // namespace

template <class T>
BasicTensor<T> linear_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>* b) {
  const std::size_t batch = x.batch(), in = w.dim(1), out = w.dim(0);
  if (x.sample_numel() != in) throw ShapeError("linear input has " + std::to_string(x.sample_numel()) + " features, expected " + std::to_string(in));
  BasicTensor<T> y({batch, out});
  kernels::active<T>().gemm(Trans::No, Trans::Yes, batch, out, in, T(1), x.data(), in, w.data(), in, T(0),
                            y.data(), out);
  if (b != nullptr) {
    for (std::size_t i = 0; i < batch; ++i) {
      T* row = y.data() + i * out;
      for (std::size_t j = 0; j < out; ++j) row[j] += (*b)[j];
    }
  }
  return y;
}

template <class T>
BasicTensor<T> linear_backward_input(const BasicTensor<T>& g, const BasicTensor<T>& w, const Shape& in_dims) {
  const std::size_t batch = g.batch(), in = w.dim(1), out = w.dim(0);
  BasicTensor<T> dx(in_dims);
  kernels::active<T>().gemm(Trans::No, Trans::No, batch, in, out, T(1), g.data(), out, w.data(), in, T(0),
                            dx.data(), in);
  return dx;
}

template <class T>
void linear_param_grad(const BasicTensor<T>& x, const BasicTensor<T>& g, BasicTensor<T>& dw, BasicTensor<T>* db) {
  const std::size_t batch = g.batch(), in = dw.dim(1), out = dw.dim(0);
  kernels::active<T>().gemm(Trans::Yes, Trans::No, out, in, batch, T(1), g.data(), out, x.data(), in, T(1),
                            dw.data(), in);
  if (db != nullptr) {
    for (std::size_t i = 0; i < batch; ++i) {
      const T* row = g.data() + i * out;
      for (std::size_t j = 0; j < out; ++j) (*db)[j] += row[j];
    }
  }
}

template <class T>
BasicTensor<T> conv2d_forward(const UnitSpec& u, const BasicTensor<T>& x, const BasicTensor<T>& w,
                              const BasicTensor<T>* b) {
  const ConvGeom g = conv_geom(u, x.dim(1), x.dim(2), x.dim(3));
  const std::size_t batch = x.batch(), outc = static_cast<std::size_t>(u.out);
  BasicTensor<T> y({batch, outc, g.out_h, g.out_w});
  std::vector<T> cols(g.col_rows() * g.col_cols());
  const std::size_t in_n = x.sample_numel(), out_n = y.sample_numel();
  const auto& k = kernels::active<T>();
  for (std::size_t s = 0; s < batch; ++s) {
    im2col(g, x.data() + s * in_n, cols.data());
    T* ys = y.data() + s * out_n;
    k.gemm(Trans::No, Trans::No, outc, g.col_cols(), g.col_rows(), T(1), w.data(), g.col_rows(), cols.data(),
           g.col_cols(), T(0), ys, g.col_cols());
    if (b != nullptr) add_channel_bias(*b, g.col_cols(), ys);
  }
  return y;
}

template <class T>
BasicTensor<T> conv2d_backward_input(const UnitSpec& u, const BasicTensor<T>& gout, const BasicTensor<T>& w,
                                     const Shape& in_dims) {
  const ConvGeom g = conv_geom(u, in_dims[1], in_dims[2], in_dims[3]);
  const std::size_t batch = gout.batch(), outc = static_cast<std::size_t>(u.out);
  BasicTensor<T> dx(in_dims);
  std::vector<T> cols(g.col_rows() * g.col_cols());
  const std::size_t in_n = dx.sample_numel(), out_n = gout.sample_numel();
  const auto& k = kernels::active<T>();
  for (std::size_t s = 0; s < batch; ++s) {
    k.gemm(Trans::Yes, Trans::No, g.col_rows(), g.col_cols(), outc, T(1), w.data(), g.col_rows(),
           gout.data() + s * out_n, g.col_cols(), T(0), cols.data(), g.col_cols());
    col2im(g, cols.data(), dx.data() + s * in_n);
  }
  return dx;
}

template <class T>
void conv2d_param_grad(const UnitSpec& u, const BasicTensor<T>& x, const BasicTensor<T>& gout,
                       BasicTensor<T>& dw, BasicTensor<T>* db) {
  const ConvGeom g = conv_geom(u, x.dim(1), x.dim(2), x.dim(3));
  const std::size_t batch = x.batch(), outc = static_cast<std::size_t>(u.out);
  std::vector<T> cols(g.col_rows() * g.col_cols());
  const std::size_t in_n = x.sample_numel(), out_n = gout.sample_numel();
  const auto& k = kernels::active<T>();
  for (std::size_t s = 0; s < batch; ++s) {
    im2col(g, x.data() + s * in_n, cols.data());
    const T* gs = gout.data() + s * out_n;
    k.gemm(Trans::No, Trans::Yes, outc, g.col_rows(), g.col_cols(), T(1), gs, g.col_cols(), cols.data(),
           g.col_cols(), T(1), dw.data(), g.col_rows());
    if (db != nullptr) accumulate_channel_sums(gs, outc, g.col_cols(), *db);
  }
}

// A transposed convolution maps (Cin, H, W) to (Cout, Ho, Wo), where a
// convolution with the same (k, stride, pad) maps (Cout, Ho, Wo) back to
// (Cin, H, W). Weight layout is (Cin, Cout, k, k).
template <class T>
BasicTensor<T> conv_transpose2d_forward(const UnitSpec& u, const BasicTensor<T>& x, const BasicTensor<T>& w,
                                        const BasicTensor<T>* b) {
  const std::size_t batch = x.batch(), inc = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t outc = static_cast<std::size_t>(u.out), k = static_cast<std::size_t>(u.kernel);
  const std::size_t oh = (h - 1) * static_cast<std::size_t>(u.stride) + k - 2 * static_cast<std::size_t>(u.pad);
  const std::size_t ow = (wd - 1) * static_cast<std::size_t>(u.stride) + k - 2 * static_cast<std::size_t>(u.pad);
  ConvGeom g{outc, oh, ow, k, static_cast<std::size_t>(u.stride), static_cast<std::size_t>(u.pad), h, wd};
  BasicTensor<T> y({batch, outc, oh, ow});
  std::vector<T> cols(g.col_rows() * g.col_cols());
  const std::size_t in_n = x.sample_numel(), out_n = y.sample_numel();
  const auto& kt = kernels::active<T>();
  for (std::size_t s = 0; s < batch; ++s) {
    kt.gemm(Trans::Yes, Trans::No, g.col_rows(), g.col_cols(), inc, T(1), w.data(), g.col_rows(),
            x.data() + s * in_n, g.col_cols(), T(0), cols.data(), g.col_cols());
    T* ys = y.data() + s * out_n;
    col2im(g, cols.data(), ys);
    if (b != nullptr) add_channel_bias(*b, oh * ow, ys);
  }
  return y;
}

template <class T>
BasicTensor<T> conv_transpose2d_backward_input(const UnitSpec& u, const BasicTensor<T>& gout,
                                               const BasicTensor<T>& w, const Shape& in_dims) {
  const std::size_t batch = gout.batch(), inc = in_dims[1];
  ConvGeom g{gout.dim(1), gout.dim(2), gout.dim(3), static_cast<std::size_t>(u.kernel),
             static_cast<std::size_t>(u.stride), static_cast<std::size_t>(u.pad), in_dims[2], in_dims[3]};
  BasicTensor<T> dx(in_dims);
  std::vector<T> cols(g.col_rows() * g.col_cols());
  const std::size_t in_n = dx.sample_numel(), out_n = gout.sample_numel();
  const auto& kt = kernels::active<T>();
  for (std::size_t s = 0; s < batch; ++s) {
    im2col(g, gout.data() + s * out_n, cols.data());
    kt.gemm(Trans::No, Trans::No, inc, g.col_cols(), g.col_rows(), T(1), w.data(), g.col_rows(), cols.data(),
            g.col_cols(), T(0), dx.data() + s * in_n, g.col_cols());
  }
  return dx;
}

template <class T>
void conv_transpose2d_param_grad(const UnitSpec& u, const BasicTensor<T>& x, const BasicTensor<T>& gout,
                                 BasicTensor<T>& dw, BasicTensor<T>* db) {
  const std::size_t batch = x.batch(), inc = x.dim(1);
  ConvGeom g{gout.dim(1), gout.dim(2), gout.dim(3), static_cast<std::size_t>(u.kernel),
             static_cast<std::size_t>(u.stride), static_cast<std::size_t>(u.pad), x.dim(2), x.dim(3)};
  std::vector<T> cols(g.col_rows() * g.col_cols());
  const std::size_t in_n = x.sample_numel(), out_n = gout.sample_numel();
  const auto& kt = kernels::active<T>();
  for (std::size_t s = 0; s < batch; ++s) {
    const T* gs = gout.data() + s * out_n;
    im2col(g, gs, cols.data());
    kt.gemm(Trans::No, Trans::Yes, inc, g.col_rows(), g.col_cols(), T(1), x.data() + s * in_n, g.col_cols(),
            cols.data(), g.col_cols(), T(1), dw.data(), g.col_rows());
    if (db != nullptr) accumulate_channel_sums(gs, g.channels, g.height * g.width, *db);
  }
}

template <class T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  for (auto& v : y.storage()) v = v > T(0) ? v : T(0);
  return y;
}

template <class T>
BasicTensor<T> relu_mask(const BasicTensor<T>& x, const BasicTensor<T>& g) {
  BasicTensor<T> out = g;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    if (!(x[i] > T(0))) out[i] = T(0);
  }
  return out;
}

template <class T>
BasicTensor<T> sigmoid_forward(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  for (auto& v : y.storage()) v = T(1) / (T(1) + std::exp(-v));
  return y;
}

template <class T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& y, const BasicTensor<T>& g) {
  BasicTensor<T> out = g;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= y[i] * (T(1) - y[i]);
  return out;
}

namespace {

// Calls f(out_index, in_index_of_max) for every pooled element.
template <class T, class F>
void maxpool_visit(const BasicTensor<T>& x, F&& f) {
  const std::size_t batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  std::size_t o = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t base = (b * ch + c) * h * w;
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j, ++o) {
          std::size_t best = base + (2 * i) * w + 2 * j;
          const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
          for (std::size_t q : cand) {
            if (x[q] > x[best]) best = q;
          }
          f(o, best);
        }
      }
    }
  }
}

}  // namespace

template <class T>
BasicTensor<T> maxpool_forward(const BasicTensor<T>& x) {
  BasicTensor<T> y({x.dim(0), x.dim(1), x.dim(2) / 2, x.dim(3) / 2});
  maxpool_visit(x, [&](std::size_t o, std::size_t i) { y[o] = x[i]; });
  return y;
}

template <class T>
BasicTensor<T> maxpool_backward(const BasicTensor<T>& x, const BasicTensor<T>& g) {
  BasicTensor<T> dx(x.dims());
  maxpool_visit(x, [&](std::size_t o, std::size_t i) { dx[i] += g[o]; });
  return dx;
}

template <class T>
BasicTensor<T> maxpool_gather(const BasicTensor<T>& x, const BasicTensor<T>& v) {
  BasicTensor<T> y({x.dim(0), x.dim(1), x.dim(2) / 2, x.dim(3) / 2});
  maxpool_visit(x, [&](std::size_t o, std::size_t i) { y[o] = v[i]; });
  return y;
}

#define SFL_INSTANTIATE_OPS(T)                                                                                  \
  template BasicTensor<T> linear_forward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>*); \
  template BasicTensor<T> linear_backward_input(const BasicTensor<T>&, const BasicTensor<T>&, const Shape&);   \
  template void linear_param_grad(const BasicTensor<T>&, const BasicTensor<T>&, BasicTensor<T>&,               \
                                  BasicTensor<T>*);                                                            \
  template BasicTensor<T> conv2d_forward(const UnitSpec&, const BasicTensor<T>&, const BasicTensor<T>&,        \
                                         const BasicTensor<T>*);                                               \
  template BasicTensor<T> conv2d_backward_input(const UnitSpec&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                                const Shape&);                                                 \
  template void conv2d_param_grad(const UnitSpec&, const BasicTensor<T>&, const BasicTensor<T>&,               \
                                  BasicTensor<T>&, BasicTensor<T>*);                                           \
  template BasicTensor<T> conv_transpose2d_forward(const UnitSpec&, const BasicTensor<T>&,                     \
                                                   const BasicTensor<T>&, const BasicTensor<T>*);              \
  template BasicTensor<T> conv_transpose2d_backward_input(const UnitSpec&, const BasicTensor<T>&,              \
                                                          const BasicTensor<T>&, const Shape&);                \
  template void conv_transpose2d_param_grad(const UnitSpec&, const BasicTensor<T>&, const BasicTensor<T>&,     \
                                            BasicTensor<T>&, BasicTensor<T>*);                                 \
  template BasicTensor<T> relu_forward(const BasicTensor<T>&);                                                 \
  template BasicTensor<T> relu_mask(const BasicTensor<T>&, const BasicTensor<T>&);                             \
  template BasicTensor<T> sigmoid_forward(const BasicTensor<T>&);                                              \
  template BasicTensor<T> sigmoid_backward(const BasicTensor<T>&, const BasicTensor<T>&);                      \
  template BasicTensor<T> maxpool_forward(const BasicTensor<T>&);                                              \
  template BasicTensor<T> maxpool_backward(const BasicTensor<T>&, const BasicTensor<T>&);                      \
  template BasicTensor<T> maxpool_gather(const BasicTensor<T>&, const BasicTensor<T>&);

SFL_INSTANTIATE_OPS(float)
SFL_INSTANTIATE_OPS(double)

}  // namespace sfl::ops
