#include <algorithm>
#include <cmath>
#include <vector>

#include "kernels.hpp"

namespace tact::kernels {

namespace {

// Pixel-center normalization: index i in [0,W) maps to (2i+1)/W - 1, so
// the inverse takes a normalized coordinate to pixel units.
template <class T>
inline T to_pixel(T norm, int64_t extent) {
  return (norm + T(1)) * T(extent) / T(2) - T(0.5);
}

struct Taps {
  int64_t x0, y0;
  double fx, fy;
};

inline Taps make_taps(double px, double py) {
  const double fx0 = std::floor(px);
  const double fy0 = std::floor(py);
  return Taps{static_cast<int64_t>(fx0), static_cast<int64_t>(fy0), px - fx0, py - fy0};
}

template <class T>
inline double tap_value(const T* plane, int64_t h, int64_t w, int64_t y, int64_t x) {
  if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;  // zero padding
  return static_cast<double>(plane[y * w + x]);
}

template <class T>
inline double bilinear(const T* plane, int64_t h, int64_t w, const Taps& t) {
  const double a = tap_value(plane, h, w, t.y0, t.x0);
  const double b = tap_value(plane, h, w, t.y0, t.x0 + 1);
  const double c = tap_value(plane, h, w, t.y0 + 1, t.x0);
  const double d = tap_value(plane, h, w, t.y0 + 1, t.x0 + 1);
  return (1 - t.fy) * ((1 - t.fx) * a + t.fx * b) + t.fy * ((1 - t.fx) * c + t.fx * d);
}

template <class T>
inline void bilinear_scatter(T* plane, int64_t h, int64_t w, const Taps& t, double g) {
  auto put = [&](int64_t y, int64_t x, double wt) {
    if (y < 0 || y >= h || x < 0 || x >= w) return;
    plane[y * w + x] += static_cast<T>(wt * g);
  };
  put(t.y0, t.x0, (1 - t.fx) * (1 - t.fy));
  put(t.y0, t.x0 + 1, t.fx * (1 - t.fy));
  put(t.y0 + 1, t.x0, (1 - t.fx) * t.fy);
  put(t.y0 + 1, t.x0 + 1, t.fx * t.fy);
}

// d value / d px and d value / d py at the sampled point.
template <class T>
inline void bilinear_coord_grad(const T* plane, int64_t h, int64_t w, const Taps& t, double& dpx,
                                double& dpy) {
  const double a = tap_value(plane, h, w, t.y0, t.x0);
  const double b = tap_value(plane, h, w, t.y0, t.x0 + 1);
  const double c = tap_value(plane, h, w, t.y0 + 1, t.x0);
  const double d = tap_value(plane, h, w, t.y0 + 1, t.x0 + 1);
  dpx = (1 - t.fy) * (b - a) + t.fy * (d - c);
  dpy = (1 - t.fx) * (c - a) + t.fx * (d - b);
}

template <class T>
void affine_grid_impl(const Tensor& theta, int64_t oh, int64_t ow, Tensor& out) {
  const T* pt = theta.data<T>();
  T* po = out.data<T>();
  for (int64_t i = 0; i < oh; ++i) {
    const T yb = T(2 * i + 1) / T(oh) - T(1);
    for (int64_t j = 0; j < ow; ++j) {
      const T xb = T(2 * j + 1) / T(ow) - T(1);
      po[i * ow + j] = pt[0] * xb + pt[1] * yb + pt[2];
      po[oh * ow + i * ow + j] = pt[3] * xb + pt[4] * yb + pt[5];
    }
  }
}

template <class T>
void affine_grid_bwd_impl(const Tensor& gout, Tensor& gtheta) {
  const int64_t oh = gout.dim(1), ow = gout.dim(2);
  const T* pg = gout.data<T>();
  T* pt = gtheta.data<T>();
  for (int64_t i = 0; i < oh; ++i) {
    const T yb = T(2 * i + 1) / T(oh) - T(1);
    for (int64_t j = 0; j < ow; ++j) {
      const T xb = T(2 * j + 1) / T(ow) - T(1);
      const T gx = pg[i * ow + j];
      const T gy = pg[oh * ow + i * ow + j];
      pt[0] += gx * xb;
      pt[1] += gx * yb;
      pt[2] += gx;
      pt[3] += gy * xb;
      pt[4] += gy * yb;
      pt[5] += gy;
    }
  }
}

template <class T>
void grid_sample_impl(const Tensor& x, const Tensor& grid, Tensor& out) {
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int64_t gh = grid.dim(1), gw = grid.dim(2);
  const T* px = x.data<T>();
  const T* pgr = grid.data<T>();
  T* po = out.data<T>();
  for (int64_t i = 0; i < gh; ++i)
    for (int64_t j = 0; j < gw; ++j) {
      const double nx = static_cast<double>(pgr[i * gw + j]);
      const double ny = static_cast<double>(pgr[gh * gw + i * gw + j]);
      const Taps t = make_taps(to_pixel(nx, w), to_pixel(ny, h));
      for (int64_t ch = 0; ch < c; ++ch)
        po[(ch * gh + i) * gw + j] = static_cast<T>(bilinear(px + ch * h * w, h, w, t));
    }
}

template <class T>
void grid_sample_bwd_impl(const Tensor& x, const Tensor& grid, const Tensor& gout, Tensor* gx,
                          Tensor* ggrid) {
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int64_t gh = grid.dim(1), gw = grid.dim(2);
  const T* px = x.data<T>();
  const T* pgr = grid.data<T>();
  const T* pg = gout.data<T>();
  for (int64_t i = 0; i < gh; ++i)
    for (int64_t j = 0; j < gw; ++j) {
      const double nx = static_cast<double>(pgr[i * gw + j]);
      const double ny = static_cast<double>(pgr[gh * gw + i * gw + j]);
      const Taps t = make_taps(to_pixel(nx, w), to_pixel(ny, h));
      double dpx_acc = 0.0, dpy_acc = 0.0;
      for (int64_t ch = 0; ch < c; ++ch) {
        const double g = static_cast<double>(pg[(ch * gh + i) * gw + j]);
        if (gx) bilinear_scatter(gx->data<T>() + ch * h * w, h, w, t, g);
        if (ggrid) {
          double dpx, dpy;
          bilinear_coord_grad(px + ch * h * w, h, w, t, dpx, dpy);
          dpx_acc += g * dpx;
          dpy_acc += g * dpy;
        }
      }
      if (ggrid) {
        // d px / d nx = W/2 under the pixel-center map.
        T* pgg = ggrid->data<T>();
        pgg[i * gw + j] += static_cast<T>(dpx_acc * w / 2.0);
        pgg[gh * gw + i * gw + j] += static_cast<T>(dpy_acc * h / 2.0);
      }
    }
}

template <class T>
void mdcn_impl(const Tensor& x, const Tensor& off, const Tensor& mask, const Tensor& w,
               const Tensor& bias, Tensor& out) {
  const int64_t ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int64_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int64_t k = kh * kw;
  const int64_t pad_h = (kh - 1) / 2, pad_w = (kw - 1) / 2;
  const T* px = x.data<T>();
  const T* poff = off.data<T>();
  const T* pm = mask.data<T>();
  const T* pw = w.data<T>();
  const T* pb = bias.data<T>();
  T* po = out.data<T>();
  std::vector<double> vbuf(static_cast<size_t>(ci));
  for (int64_t o = 0; o < co; ++o) {
    T* plane = po + o * h * wd;
    std::fill(plane, plane + h * wd, pb[o]);
  }
  for (int64_t oy = 0; oy < h; ++oy)
    for (int64_t ox = 0; ox < wd; ++ox) {
      const int64_t p = oy * wd + ox;
      for (int64_t kk = 0; kk < k; ++kk) {
        const int64_t ky = kk / kw, kx = kk % kw;
        const double dy = static_cast<double>(poff[(2 * kk) * h * wd + p]);
        const double dx = static_cast<double>(poff[(2 * kk + 1) * h * wd + p]);
        const double m = static_cast<double>(pm[kk * h * wd + p]);
        const Taps t = make_taps(ox - pad_w + kx + dx, oy - pad_h + ky + dy);
        for (int64_t c = 0; c < ci; ++c) vbuf[c] = bilinear(px + c * h * wd, h, wd, t);
        for (int64_t o = 0; o < co; ++o) {
          double acc = 0.0;
          const T* wrow = pw + (o * ci) * k + kk;
          for (int64_t c = 0; c < ci; ++c) acc += static_cast<double>(wrow[c * k]) * vbuf[c];
          po[o * h * wd + p] += static_cast<T>(m * acc);
        }
      }
    }
}

template <class T>
void mdcn_bwd_impl(const Tensor& x, const Tensor& off, const Tensor& mask, const Tensor& w,
                   const Tensor& gout, Tensor* gx, Tensor* goff, Tensor* gmask, Tensor* gw,
                   Tensor* gb) {
  const int64_t ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int64_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int64_t k = kh * kw;
  const int64_t pad_h = (kh - 1) / 2, pad_w = (kw - 1) / 2;
  const T* px = x.data<T>();
  const T* poff = off.data<T>();
  const T* pm = mask.data<T>();
  const T* pw = w.data<T>();
  const T* pg = gout.data<T>();
  std::vector<double> vbuf(static_cast<size_t>(ci));
  std::vector<double> gsum(static_cast<size_t>(ci));
  if (gb) {
    for (int64_t o = 0; o < co; ++o) {
      const T* plane = pg + o * h * wd;
      double acc = 0.0;
      for (int64_t i = 0; i < h * wd; ++i) acc += static_cast<double>(plane[i]);
      gb->set(o, gb->at(o) + acc);
    }
  }
  for (int64_t oy = 0; oy < h; ++oy)
    for (int64_t ox = 0; ox < wd; ++ox) {
      const int64_t p = oy * wd + ox;
      for (int64_t kk = 0; kk < k; ++kk) {
        const int64_t ky = kk / kw, kx = kk % kw;
        const double dy = static_cast<double>(poff[(2 * kk) * h * wd + p]);
        const double dx = static_cast<double>(poff[(2 * kk + 1) * h * wd + p]);
        const double m = static_cast<double>(pm[kk * h * wd + p]);
        const Taps t = make_taps(ox - pad_w + kx + dx, oy - pad_h + ky + dy);
        for (int64_t c = 0; c < ci; ++c) {
          vbuf[c] = bilinear(px + c * h * wd, h, wd, t);
          gsum[c] = 0.0;
        }
        for (int64_t o = 0; o < co; ++o) {
          const double g = static_cast<double>(pg[o * h * wd + p]);
          if (g == 0.0) continue;
          const T* wrow = pw + (o * ci) * k + kk;
          for (int64_t c = 0; c < ci; ++c) gsum[c] += g * static_cast<double>(wrow[c * k]);
          if (gw) {
            T* gwrow = gw->data<T>() + (o * ci) * k + kk;
            for (int64_t c = 0; c < ci; ++c) gwrow[c * k] += static_cast<T>(g * m * vbuf[c]);
          }
        }
        double gm = 0.0, gpx = 0.0, gpy = 0.0;
        for (int64_t c = 0; c < ci; ++c) {
          gm += gsum[c] * vbuf[c];
          if (gx) bilinear_scatter(gx->data<T>() + c * h * wd, h, wd, t, m * gsum[c]);
          if (goff) {
            double dpx, dpy;
            bilinear_coord_grad(px + c * h * wd, h, wd, t, dpx, dpy);
            gpx += gsum[c] * dpx;
            gpy += gsum[c] * dpy;
          }
        }
        if (gmask) gmask->set(kk * h * wd + p, gmask->at(kk * h * wd + p) + gm);
        if (goff) {
          goff->set((2 * kk) * h * wd + p, goff->at((2 * kk) * h * wd + p) + m * gpy);
          goff->set((2 * kk + 1) * h * wd + p, goff->at((2 * kk + 1) * h * wd + p) + m * gpx);
        }
      }
    }
}

}  // namespace

Tensor affine_grid(const Tensor& theta, int64_t out_h, int64_t out_w) {
  Tensor out({2, out_h, out_w}, theta.dtype());
  if (theta.dtype() == DType::F32)
    affine_grid_impl<float>(theta, out_h, out_w, out);
  else
    affine_grid_impl<double>(theta, out_h, out_w, out);
  return out;
}

void affine_grid_bwd(const Tensor& gout, Tensor& gtheta) {
  if (gout.dtype() == DType::F32)
    affine_grid_bwd_impl<float>(gout, gtheta);
  else
    affine_grid_bwd_impl<double>(gout, gtheta);
}

Tensor grid_sample(const Tensor& x, const Tensor& grid) {
  Tensor out({x.dim(0), grid.dim(1), grid.dim(2)}, x.dtype());
  if (x.dtype() == DType::F32)
    grid_sample_impl<float>(x, grid, out);
  else
    grid_sample_impl<double>(x, grid, out);
  return out;
}

void grid_sample_bwd(const Tensor& x, const Tensor& grid, const Tensor& gout, Tensor* gx,
                     Tensor* ggrid) {
  if (x.dtype() == DType::F32)
    grid_sample_bwd_impl<float>(x, grid, gout, gx, ggrid);
  else
    grid_sample_bwd_impl<double>(x, grid, gout, gx, ggrid);
}

Tensor mod_deform_conv(const Tensor& x, const Tensor& off, const Tensor& mask, const Tensor& w,
                       const Tensor& bias) {
  Tensor out({w.dim(0), x.dim(1), x.dim(2)}, x.dtype());
  if (x.dtype() == DType::F32)
    mdcn_impl<float>(x, off, mask, w, bias, out);
  else
    mdcn_impl<double>(x, off, mask, w, bias, out);
  return out;
}

void mod_deform_conv_bwd(const Tensor& x, const Tensor& off, const Tensor& mask, const Tensor& w,
                         const Tensor& gout, Tensor* gx, Tensor* goff, Tensor* gmask, Tensor* gw,
                         Tensor* gb) {
  if (x.dtype() == DType::F32)
    mdcn_bwd_impl<float>(x, off, mask, w, gout, gx, goff, gmask, gw, gb);
  else
    mdcn_bwd_impl<double>(x, off, mask, w, gout, gx, goff, gmask, gw, gb);
}

}  // namespace tact::kernels
