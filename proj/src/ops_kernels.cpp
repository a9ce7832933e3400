#include <algorithm>
#include <cmath>
#include <vector>

#include "kernels.hpp"

namespace tact::kernels {

namespace {

template <class T, class F>
Tensor ew_binary(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape(), a.dtype());
  const T* pa = a.data<T>();
  const T* pb = b.data<T>();
  T* po = out.data<T>();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
  return out;
}

template <class T, class F>
Tensor ew_unary(const Tensor& a, F f) {
  Tensor out(a.shape(), a.dtype());
  const T* pa = a.data<T>();
  T* po = out.data<T>();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i]);
  return out;
}

// Valid output range along one spatial axis so that the input index
// ox*stride + k - pad stays inside [0, extent).
inline void conv_bounds(int64_t out_extent, int64_t in_extent, int64_t k, int64_t stride,
                        int64_t pad, int64_t& lo, int64_t& hi) {
  const int64_t num_lo = pad - k + stride - 1;
  lo = num_lo > 0 ? num_lo / stride : 0;
  const int64_t num_hi = in_extent - 1 - k + pad;
  hi = num_hi >= 0 ? std::min(out_extent, num_hi / stride + 1) : 0;
}

template <class T>
void conv2d_impl(const Tensor& x, const Tensor& w, const Tensor* bias, int64_t stride, int64_t pad,
                 Tensor& out, int64_t n_batch, int64_t ci, int64_t h, int64_t wd, int64_t co,
                 int64_t kh, int64_t kw, int64_t oh, int64_t ow) {
  const T* px = x.data<T>();
  const T* pw = w.data<T>();
  T* po = out.data<T>();
  if (bias) {
    const T* pb = bias->data<T>();
    for (int64_t n = 0; n < n_batch; ++n)
      for (int64_t o = 0; o < co; ++o) {
        T* plane = po + ((n * co + o) * oh) * ow;
        std::fill(plane, plane + oh * ow, pb[o]);
      }
  }
  for (int64_t n = 0; n < n_batch; ++n)
    for (int64_t o = 0; o < co; ++o)
      for (int64_t c = 0; c < ci; ++c)
        for (int64_t ky = 0; ky < kh; ++ky) {
          int64_t oy_lo, oy_hi;
          conv_bounds(oh, h, ky, stride, pad, oy_lo, oy_hi);
          for (int64_t kx = 0; kx < kw; ++kx) {
            const T wv = pw[((o * ci + c) * kh + ky) * kw + kx];
            if (wv == T(0)) continue;
            int64_t ox_lo, ox_hi;
            conv_bounds(ow, wd, kx, stride, pad, ox_lo, ox_hi);
            for (int64_t oy = oy_lo; oy < oy_hi; ++oy) {
              const int64_t iy = oy * stride + ky - pad;
              const T* xrow = px + ((n * ci + c) * h + iy) * wd;
              T* orow = po + ((n * co + o) * oh + oy) * ow;
              for (int64_t ox = ox_lo; ox < ox_hi; ++ox)
                orow[ox] += wv * xrow[ox * stride + kx - pad];
            }
          }
        }
}

template <class T>
void conv2d_bwd_impl(const Tensor& x, const Tensor& w, int64_t stride, int64_t pad,
                     const Tensor& gout, Tensor* gx, Tensor* gw, Tensor* gb, int64_t n_batch,
                     int64_t ci, int64_t h, int64_t wd, int64_t co, int64_t kh, int64_t kw,
                     int64_t oh, int64_t ow) {
  const T* px = x.data<T>();
  const T* pw = w.data<T>();
  const T* pg = gout.data<T>();
  if (gb) {
    T* pgb = gb->data<T>();
    for (int64_t n = 0; n < n_batch; ++n)
      for (int64_t o = 0; o < co; ++o) {
        const T* plane = pg + ((n * co + o) * oh) * ow;
        T acc = 0;
        for (int64_t i = 0; i < oh * ow; ++i) acc += plane[i];
        pgb[o] += acc;
      }
  }
  for (int64_t n = 0; n < n_batch; ++n)
    for (int64_t o = 0; o < co; ++o)
      for (int64_t c = 0; c < ci; ++c)
        for (int64_t ky = 0; ky < kh; ++ky) {
          int64_t oy_lo, oy_hi;
          conv_bounds(oh, h, ky, stride, pad, oy_lo, oy_hi);
          for (int64_t kx = 0; kx < kw; ++kx) {
            int64_t ox_lo, ox_hi;
            conv_bounds(ow, wd, kx, stride, pad, ox_lo, ox_hi);
            const int64_t widx = ((o * ci + c) * kh + ky) * kw + kx;
            if (gw) {
              T acc = 0;
              for (int64_t oy = oy_lo; oy < oy_hi; ++oy) {
                const int64_t iy = oy * stride + ky - pad;
                const T* xrow = px + ((n * ci + c) * h + iy) * wd;
                const T* grow = pg + ((n * co + o) * oh + oy) * ow;
                for (int64_t ox = ox_lo; ox < ox_hi; ++ox)
                  acc += grow[ox] * xrow[ox * stride + kx - pad];
              }
              gw->data<T>()[widx] += acc;
            }
            if (gx) {
              const T wv = pw[widx];
              if (wv == T(0)) continue;
              T* pgx = gx->data<T>();
              for (int64_t oy = oy_lo; oy < oy_hi; ++oy) {
                const int64_t iy = oy * stride + ky - pad;
                T* xrow = pgx + ((n * ci + c) * h + iy) * wd;
                const T* grow = pg + ((n * co + o) * oh + oy) * ow;
                for (int64_t ox = ox_lo; ox < ox_hi; ++ox)
                  xrow[ox * stride + kx - pad] += wv * grow[ox];
              }
            }
          }
        }
}

template <class T>
void matmul_impl(const Tensor& a, const Tensor& b, Tensor& out) {
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const T* pa = a.data<T>();
  const T* pb = b.data<T>();
  T* po = out.data<T>();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t kk = 0; kk < k; ++kk) {
      const T av = pa[i * k + kk];
      const T* brow = pb + kk * n;
      T* orow = po + i * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
}

template <class T>
void matmul_bwd_impl(const Tensor& a, const Tensor& b, const Tensor& gout, Tensor* ga, Tensor* gb) {
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const T* pa = a.data<T>();
  const T* pb = b.data<T>();
  const T* pg = gout.data<T>();
  if (ga) {
    T* pga = ga->data<T>();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t kk = 0; kk < k; ++kk) {
        const T* grow = pg + i * n;
        const T* brow = pb + kk * n;
        T acc = 0;
        for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
        pga[i * k + kk] += acc;
      }
  }
  if (gb) {
    T* pgb = gb->data<T>();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t kk = 0; kk < k; ++kk) {
        const T av = pa[i * k + kk];
        const T* grow = pg + i * n;
        T* brow = pgb + kk * n;
        for (int64_t j = 0; j < n; ++j) brow[j] += av * grow[j];
      }
  }
}

template <class T>
void linear_impl(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& out) {
  const int64_t bs = x.dim(0), din = x.dim(1), dout = w.dim(0);
  const T* px = x.data<T>();
  const T* pw = w.data<T>();
  const T* pb = b.data<T>();
  T* po = out.data<T>();
  for (int64_t i = 0; i < bs; ++i)
    for (int64_t o = 0; o < dout; ++o) {
      const T* xrow = px + i * din;
      const T* wrow = pw + o * din;
      T acc = pb[o];
      for (int64_t j = 0; j < din; ++j) acc += xrow[j] * wrow[j];
      po[i * dout + o] = acc;
    }
}

template <class T>
void linear_bwd_impl(const Tensor& x, const Tensor& w, const Tensor& gout, Tensor* gx, Tensor* gw,
                     Tensor* gb) {
  const int64_t bs = x.dim(0), din = x.dim(1), dout = w.dim(0);
  const T* px = x.data<T>();
  const T* pw = w.data<T>();
  const T* pg = gout.data<T>();
  for (int64_t i = 0; i < bs; ++i)
    for (int64_t o = 0; o < dout; ++o) {
      const T g = pg[i * dout + o];
      if (g == T(0)) continue;
      if (gx) {
        T* gxrow = gx->data<T>() + i * din;
        const T* wrow = pw + o * din;
        for (int64_t j = 0; j < din; ++j) gxrow[j] += g * wrow[j];
      }
      if (gw) {
        T* gwrow = gw->data<T>() + o * din;
        const T* xrow = px + i * din;
        for (int64_t j = 0; j < din; ++j) gwrow[j] += g * xrow[j];
      }
      if (gb) gb->data<T>()[o] += g;
    }
}

template <class T>
void pair_concat_impl(const Tensor& a, const Tensor& b, Tensor& out) {
  const int64_t ba = a.dim(0), da = a.dim(1), bb = b.dim(0), db = b.dim(1);
  const T* pa = a.data<T>();
  const T* pb = b.data<T>();
  T* po = out.data<T>();
  for (int64_t i = 0; i < ba; ++i)
    for (int64_t j = 0; j < bb; ++j) {
      T* row = po + (i * bb + j) * (da + db);
      std::copy(pa + i * da, pa + (i + 1) * da, row);
      std::copy(pb + j * db, pb + (j + 1) * db, row + da);
    }
}

template <class T>
void pair_concat_bwd_impl(const Tensor& gout, int64_t ba, int64_t da, int64_t bb, int64_t db,
                          Tensor* ga, Tensor* gb) {
  const T* pg = gout.data<T>();
  for (int64_t i = 0; i < ba; ++i)
    for (int64_t j = 0; j < bb; ++j) {
      const T* row = pg + (i * bb + j) * (da + db);
      if (ga) {
        T* arow = ga->data<T>() + i * da;
        for (int64_t t = 0; t < da; ++t) arow[t] += row[t];
      }
      if (gb) {
        T* brow = gb->data<T>() + j * db;
        for (int64_t t = 0; t < db; ++t) brow[t] += row[da + t];
      }
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.dtype() == DType::F32) return ew_binary<float>(a, b, [](float x, float y) { return x + y; });
  return ew_binary<double>(a, b, [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.dtype() == DType::F32) return ew_binary<float>(a, b, [](float x, float y) { return x - y; });
  return ew_binary<double>(a, b, [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.dtype() == DType::F32) return ew_binary<float>(a, b, [](float x, float y) { return x * y; });
  return ew_binary<double>(a, b, [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double s) {
  if (a.dtype() == DType::F32) {
    const float fs = static_cast<float>(s);
    return ew_unary<float>(a, [fs](float x) { return x * fs; });
  }
  return ew_unary<double>(a, [s](double x) { return x * s; });
}

Tensor relu(const Tensor& x) {
  if (x.dtype() == DType::F32) return ew_unary<float>(x, [](float v) { return v > 0 ? v : 0.0f; });
  return ew_unary<double>(x, [](double v) { return v > 0 ? v : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  if (x.dtype() == DType::F32)
    return ew_unary<float>(x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); });
  return ew_unary<double>(x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

Tensor tanh_(const Tensor& x) {
  if (x.dtype() == DType::F32) return ew_unary<float>(x, [](float v) { return std::tanh(v); });
  return ew_unary<double>(x, [](double v) { return std::tanh(v); });
}

namespace {
template <class T>
void relu_bwd_impl(const Tensor& x, const Tensor& gout, Tensor& gx) {
  const T* px = x.data<T>();
  const T* pg = gout.data<T>();
  T* pgx = gx.data<T>();
  const int64_t n = x.numel();
  // subgradient at 0 is 0
  for (int64_t i = 0; i < n; ++i) pgx[i] += px[i] > 0 ? pg[i] : T(0);
}
template <class T>
void sigmoid_bwd_impl(const Tensor& y, const Tensor& gout, Tensor& gx) {
  const T* py = y.data<T>();
  const T* pg = gout.data<T>();
  T* pgx = gx.data<T>();
  const int64_t n = y.numel();
  for (int64_t i = 0; i < n; ++i) pgx[i] += pg[i] * py[i] * (T(1) - py[i]);
}
template <class T>
void tanh_bwd_impl(const Tensor& y, const Tensor& gout, Tensor& gx) {
  const T* py = y.data<T>();
  const T* pg = gout.data<T>();
  T* pgx = gx.data<T>();
  const int64_t n = y.numel();
  for (int64_t i = 0; i < n; ++i) pgx[i] += pg[i] * (T(1) - py[i] * py[i]);
}
}  // namespace

void relu_bwd(const Tensor& x, const Tensor& gout, Tensor& gx) {
  if (x.dtype() == DType::F32)
    relu_bwd_impl<float>(x, gout, gx);
  else
    relu_bwd_impl<double>(x, gout, gx);
}
void sigmoid_bwd(const Tensor& y, const Tensor& gout, Tensor& gx) {
  if (y.dtype() == DType::F32)
    sigmoid_bwd_impl<float>(y, gout, gx);
  else
    sigmoid_bwd_impl<double>(y, gout, gx);
}
void tanh_bwd(const Tensor& y, const Tensor& gout, Tensor& gx) {
  if (y.dtype() == DType::F32)
    tanh_bwd_impl<float>(y, gout, gx);
  else
    tanh_bwd_impl<double>(y, gout, gx);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor out({a.dim(0), b.dim(1)}, a.dtype());
  if (a.dtype() == DType::F32)
    matmul_impl<float>(a, b, out);
  else
    matmul_impl<double>(a, b, out);
  return out;
}

void matmul_bwd(const Tensor& a, const Tensor& b, const Tensor& gout, Tensor* ga, Tensor* gb) {
  if (a.dtype() == DType::F32)
    matmul_bwd_impl<float>(a, b, gout, ga, gb);
  else
    matmul_bwd_impl<double>(a, b, gout, ga, gb);
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, int64_t stride, int64_t pad) {
  const bool batched = x.rank() == 4;
  const int64_t n = batched ? x.dim(0) : 1;
  const int64_t ci = x.dim(batched ? 1 : 0);
  const int64_t h = x.dim(batched ? 2 : 1);
  const int64_t wd = x.dim(batched ? 3 : 2);
  const int64_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int64_t oh = (h + 2 * pad - kh) / stride + 1;
  const int64_t ow = (wd + 2 * pad - kw) / stride + 1;
  Tensor out(batched ? Shape{n, co, oh, ow} : Shape{co, oh, ow}, x.dtype());
  if (x.dtype() == DType::F32)
    conv2d_impl<float>(x, w, bias, stride, pad, out, n, ci, h, wd, co, kh, kw, oh, ow);
  else
    conv2d_impl<double>(x, w, bias, stride, pad, out, n, ci, h, wd, co, kh, kw, oh, ow);
  return out;
}

void conv2d_bwd(const Tensor& x, const Tensor& w, int64_t stride, int64_t pad, const Tensor& gout,
                Tensor* gx, Tensor* gw, Tensor* gb) {
  const bool batched = x.rank() == 4;
  const int64_t n = batched ? x.dim(0) : 1;
  const int64_t ci = x.dim(batched ? 1 : 0);
  const int64_t h = x.dim(batched ? 2 : 1);
  const int64_t wd = x.dim(batched ? 3 : 2);
  const int64_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int64_t oh = gout.dim(batched ? 2 : 1);
  const int64_t ow = gout.dim(batched ? 3 : 2);
  if (x.dtype() == DType::F32)
    conv2d_bwd_impl<float>(x, w, stride, pad, gout, gx, gw, gb, n, ci, h, wd, co, kh, kw, oh, ow);
  else
    conv2d_bwd_impl<double>(x, w, stride, pad, gout, gx, gw, gb, n, ci, h, wd, co, kh, kw, oh, ow);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor out({x.dim(0), w.dim(0)}, x.dtype());
  if (x.dtype() == DType::F32)
    linear_impl<float>(x, w, b, out);
  else
    linear_impl<double>(x, w, b, out);
  return out;
}

void linear_bwd(const Tensor& x, const Tensor& w, const Tensor& gout, Tensor* gx, Tensor* gw,
                Tensor* gb) {
  if (x.dtype() == DType::F32)
    linear_bwd_impl<float>(x, w, gout, gx, gw, gb);
  else
    linear_bwd_impl<double>(x, w, gout, gx, gw, gb);
}

Tensor pair_concat(const Tensor& a, const Tensor& b) {
  Tensor out({a.dim(0) * b.dim(0), a.dim(1) + b.dim(1)}, a.dtype());
  if (a.dtype() == DType::F32)
    pair_concat_impl<float>(a, b, out);
  else
    pair_concat_impl<double>(a, b, out);
  return out;
}

void pair_concat_bwd(const Tensor& gout, const Tensor& a, const Tensor& b, Tensor* ga, Tensor* gb) {
  if (a.dtype() == DType::F32)
    pair_concat_bwd_impl<float>(gout, a.dim(0), a.dim(1), b.dim(0), b.dim(1), ga, gb);
  else
    pair_concat_bwd_impl<double>(gout, a.dim(0), a.dim(1), b.dim(0), b.dim(1), ga, gb);
}

namespace {

template <class T>
void critic_scores_impl(const Tensor& a, const Tensor& b, const Tensor& w1, const Tensor& b1,
                        const Tensor& w2, const Tensor& b2, Tensor& out) {
  const int64_t ba = a.dim(0), da = a.dim(1), bb = b.dim(0), db = b.dim(1);
  const int64_t hidden = w1.dim(0);
  const T* pa = a.data<T>();
  const T* pb = b.data<T>();
  const T* pw1 = w1.data<T>();
  const T* pb1 = b1.data<T>();
  const T* pw2 = w2.data<T>();
  const T bias2 = b2.data<T>()[0];
  T* po = out.data<T>();
  // u_i = W1a a_i + b1; v_j = W1b b_j
  std::vector<T> u(static_cast<size_t>(ba * hidden)), v(static_cast<size_t>(bb * hidden));
  for (int64_t i = 0; i < ba; ++i)
    for (int64_t k = 0; k < hidden; ++k) {
      T acc = pb1[k];
      const T* wrow = pw1 + k * (da + db);
      const T* arow = pa + i * da;
      for (int64_t d = 0; d < da; ++d) acc += wrow[d] * arow[d];
      u[static_cast<size_t>(i * hidden + k)] = acc;
    }
  for (int64_t j = 0; j < bb; ++j)
    for (int64_t k = 0; k < hidden; ++k) {
      T acc = 0;
      const T* wrow = pw1 + k * (da + db) + da;
      const T* brow = pb + j * db;
      for (int64_t d = 0; d < db; ++d) acc += wrow[d] * brow[d];
      v[static_cast<size_t>(j * hidden + k)] = acc;
    }
  for (int64_t i = 0; i < ba; ++i) {
    const T* urow = u.data() + i * hidden;
    for (int64_t j = 0; j < bb; ++j) {
      const T* vrow = v.data() + j * hidden;
      T acc = bias2;
      for (int64_t k = 0; k < hidden; ++k)
        acc += pw2[k] * std::max(urow[k] + vrow[k], T(0));
      po[i * bb + j] = acc;
    }
  }
}

template <class T>
void critic_scores_bwd_impl(const Tensor& a, const Tensor& b, const Tensor& w1, const Tensor& b1,
                            const Tensor& w2, const Tensor& gout, Tensor* ga, Tensor* gb,
                            Tensor* gw1, Tensor* gb1, Tensor* gw2, Tensor* gb2) {
  const int64_t ba = a.dim(0), da = a.dim(1), bb = b.dim(0), db = b.dim(1);
  const int64_t hidden = w1.dim(0);
  const T* pa = a.data<T>();
  const T* pb = b.data<T>();
  const T* pw1 = w1.data<T>();
  const T* pb1 = b1.data<T>();
  const T* pw2 = w2.data<T>();
  const T* pg = gout.data<T>();
  std::vector<T> u(static_cast<size_t>(ba * hidden)), v(static_cast<size_t>(bb * hidden));
  for (int64_t i = 0; i < ba; ++i)
    for (int64_t k = 0; k < hidden; ++k) {
      T acc = pb1[k];
      const T* wrow = pw1 + k * (da + db);
      const T* arow = pa + i * da;
      for (int64_t d = 0; d < da; ++d) acc += wrow[d] * arow[d];
      u[static_cast<size_t>(i * hidden + k)] = acc;
    }
  for (int64_t j = 0; j < bb; ++j)
    for (int64_t k = 0; k < hidden; ++k) {
      T acc = 0;
      const T* wrow = pw1 + k * (da + db) + da;
      const T* brow = pb + j * db;
      for (int64_t d = 0; d < db; ++d) acc += wrow[d] * brow[d];
      v[static_cast<size_t>(j * hidden + k)] = acc;
    }
  std::vector<T> gu(static_cast<size_t>(ba * hidden), T(0)), gv(static_cast<size_t>(bb * hidden), T(0));
  std::vector<T> gw2acc(static_cast<size_t>(hidden), T(0));
  T gb2acc = 0;
  std::vector<T> ghrow(static_cast<size_t>(hidden));
  for (int64_t i = 0; i < ba; ++i) {
    const T* urow = u.data() + i * hidden;
    T* gurow = gu.data() + i * hidden;
    for (int64_t j = 0; j < bb; ++j) {
      const T g = pg[i * bb + j];
      if (g == T(0)) continue;
      const T* vrow = v.data() + j * hidden;
      T* gvrow = gv.data() + j * hidden;
      gb2acc += g;
      T* gw2p = gw2acc.data();
      for (int64_t k = 0; k < hidden; ++k) {
        const T pre = urow[k] + vrow[k];
        const T active = pre > T(0) ? T(1) : T(0);
        gw2p[k] += g * active * pre;
        const T gh = active * g * pw2[k];
        gurow[k] += gh;
        gvrow[k] += gh;
      }
    }
  }
  if (gb2) gb2->set(0, gb2->at(0) + static_cast<double>(gb2acc));
  if (gw2) {
    T* p = gw2->data<T>();
    for (int64_t k = 0; k < hidden; ++k) p[k] += gw2acc[static_cast<size_t>(k)];
  }
  if (gb1) {
    T* p = gb1->data<T>();
    for (int64_t i = 0; i < ba; ++i)
      for (int64_t k = 0; k < hidden; ++k) p[k] += gu[static_cast<size_t>(i * hidden + k)];
  }
  if (ga) {
    T* p = ga->data<T>();
    for (int64_t i = 0; i < ba; ++i)
      for (int64_t k = 0; k < hidden; ++k) {
        const T g = gu[static_cast<size_t>(i * hidden + k)];
        if (g == T(0)) continue;
        const T* wrow = pw1 + k * (da + db);
        T* row = p + i * da;
        for (int64_t d = 0; d < da; ++d) row[d] += g * wrow[d];
      }
  }
  if (gb) {
    T* p = gb->data<T>();
    for (int64_t j = 0; j < bb; ++j)
      for (int64_t k = 0; k < hidden; ++k) {
        const T g = gv[static_cast<size_t>(j * hidden + k)];
        if (g == T(0)) continue;
        const T* wrow = pw1 + k * (da + db) + da;
        T* row = p + j * db;
        for (int64_t d = 0; d < db; ++d) row[d] += g * wrow[d];
      }
  }
  if (gw1) {
    T* p = gw1->data<T>();
    for (int64_t i = 0; i < ba; ++i)
      for (int64_t k = 0; k < hidden; ++k) {
        const T g = gu[static_cast<size_t>(i * hidden + k)];
        if (g == T(0)) continue;
        const T* arow = pa + i * da;
        T* wrow = p + k * (da + db);
        for (int64_t d = 0; d < da; ++d) wrow[d] += g * arow[d];
      }
    for (int64_t j = 0; j < bb; ++j)
      for (int64_t k = 0; k < hidden; ++k) {
        const T g = gv[static_cast<size_t>(j * hidden + k)];
        if (g == T(0)) continue;
        const T* brow = pb + j * db;
        T* wrow = p + k * (da + db) + da;
        for (int64_t d = 0; d < db; ++d) wrow[d] += g * brow[d];
      }
  }
}

}  // namespace

Tensor critic_scores(const Tensor& a, const Tensor& b, const Tensor& w1, const Tensor& b1,
                     const Tensor& w2, const Tensor& b2) {
  Tensor out({a.dim(0), b.dim(0)}, a.dtype());
  if (a.dtype() == DType::F32)
    critic_scores_impl<float>(a, b, w1, b1, w2, b2, out);
  else
    critic_scores_impl<double>(a, b, w1, b1, w2, b2, out);
  return out;
}

void critic_scores_bwd(const Tensor& a, const Tensor& b, const Tensor& w1, const Tensor& b1,
                       const Tensor& w2, const Tensor& gout, Tensor* ga, Tensor* gb, Tensor* gw1,
                       Tensor* gb1, Tensor* gw2, Tensor* gb2) {
  if (a.dtype() == DType::F32)
    critic_scores_bwd_impl<float>(a, b, w1, b1, w2, gout, ga, gb, gw1, gb1, gw2, gb2);
  else
    critic_scores_bwd_impl<double>(a, b, w1, b1, w2, gout, ga, gb, gw1, gb1, gw2, gb2);
}

namespace {

template <class T>
double info_nce_impl(const Tensor& scores, int64_t b) {
  const T* p = scores.data<T>();
  const T logb = std::log(static_cast<T>(b));
  double acc = 0.0;
  for (int64_t i = 0; i < b; ++i) {
    const T* row = p + i * b;
    T m = row[0];
    for (int64_t j = 1; j < b; ++j) m = std::max(m, row[j]);
    T s = 0;
    for (int64_t j = 0; j < b; ++j) s += std::exp(row[j] - m);
    const T lse = m + std::log(s);
    acc += static_cast<double>(row[i] - lse + logb);
  }
  return acc / static_cast<double>(b);
}

template <class T>
void info_nce_bwd_impl(const Tensor& scores, const Tensor& gout, Tensor& gs, int64_t b) {
  const T* p = scores.data<T>();
  T* pg = gs.data<T>();
  const T g = static_cast<T>(gout.at(0) / static_cast<double>(b));
  for (int64_t i = 0; i < b; ++i) {
    const T* row = p + i * b;
    T* grow = pg + i * b;
    T m = row[0];
    for (int64_t j = 1; j < b; ++j) m = std::max(m, row[j]);
    T s = 0;
    for (int64_t j = 0; j < b; ++j) s += std::exp(row[j] - m);
    const T inv = T(1) / s;
    for (int64_t j = 0; j < b; ++j) grow[j] -= g * std::exp(row[j] - m) * inv;
    grow[i] += g;
  }
}

}  // namespace

Tensor info_nce(const Tensor& scores) {
  const int64_t b = scores.dim(0);
  const double v = scores.dtype() == DType::F32 ? info_nce_impl<float>(scores, b)
                                                : info_nce_impl<double>(scores, b);
  return Tensor::scalar(v, scores.dtype());
}

void info_nce_bwd(const Tensor& scores, const Tensor& gout, Tensor& gs) {
  const int64_t b = scores.dim(0);
  if (scores.dtype() == DType::F32)
    info_nce_bwd_impl<float>(scores, gout, gs, b);
  else
    info_nce_bwd_impl<double>(scores, gout, gs, b);
}

}  // namespace tact::kernels
