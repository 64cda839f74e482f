#include "vts/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace vts::geom {

namespace {

// Normalized coordinate of pixel i on a length-n axis; -1 is the center of
// the first pixel, +1 the center of the last. The symmetric integer numerator
// makes mirrored coordinates exact negations of each other.
inline double grid_coord(int i, int n) {
  return n == 1 ? 0.0 : static_cast<double>(2 * i - (n - 1)) / (n - 1);
}

// Frame pixel coordinate sampled by glimpse cell i for a window with center
// `pos` and extent fraction `size` on an axis of `extent` pixels. Arranged so
// the identity box (pos 0, size 1, g == extent) lands exactly on integers.
inline double extract_coord(double pos, double size, int i, int g, int extent) {
  double base = (pos + 1.0) * (extent - 1);
  double grid = g == 1 ? 0.0
                       : static_cast<double>((2 * i - (g - 1)) * (extent - 1)) / (g - 1);
  return 0.5 * (base + size * grid);
}

// Glimpse pixel coordinate read back by canvas pixel i during pasting; the
// exact inverse of extract_coord's affine map.
inline double paste_coord(double pos, double size, int i, int extent, int g) {
  double num = extent == 1 ? 0.0
                           : static_cast<double>((2 * i - (extent - 1)) * (g - 1)) /
                                 (extent - 1);
  return 0.5 * ((num - pos * (g - 1)) / size + (g - 1));
}

struct BilinearTap {
  int y0, x0;
  double wy, wx;  // fractional offsets
};

inline BilinearTap tap(double fy, double fx) {
  double y0 = std::floor(fy), x0 = std::floor(fx);
  return {static_cast<int>(y0), static_cast<int>(x0), fy - y0, fx - x0};
}

inline double read0(const Tensor& img, int y, int x) {
  if (y < 0 || y >= img.dim(0) || x < 0 || x >= img.dim(1)) return 0.0;
  return img.at(y, x);
}

inline double bilinear(const Tensor& img, double fy, double fx) {
  BilinearTap t = tap(fy, fx);
  double v00 = read0(img, t.y0, t.x0);
  double v01 = read0(img, t.y0, t.x0 + 1);
  double v10 = read0(img, t.y0 + 1, t.x0);
  double v11 = read0(img, t.y0 + 1, t.x0 + 1);
  return (1 - t.wy) * ((1 - t.wx) * v00 + t.wx * v01) +
         t.wy * ((1 - t.wx) * v10 + t.wx * v11);
}

// d(bilinear)/d(fy), d(bilinear)/d(fx)
inline void bilinear_coord_grad(const Tensor& img, double fy, double fx, double& dfy,
                                double& dfx) {
  BilinearTap t = tap(fy, fx);
  double v00 = read0(img, t.y0, t.x0);
  double v01 = read0(img, t.y0, t.x0 + 1);
  double v10 = read0(img, t.y0 + 1, t.x0);
  double v11 = read0(img, t.y0 + 1, t.x0 + 1);
  dfy = (1 - t.wx) * (v10 - v00) + t.wx * (v11 - v01);
  dfx = (1 - t.wy) * (v01 - v00) + t.wy * (v11 - v10);
}

inline void scatter0(Tensor& img, int y, int x, double v) {
  if (y < 0 || y >= img.dim(0) || x < 0 || x >= img.dim(1)) return;
  img.at(y, x) += v;
}

inline void bilinear_scatter(Tensor& img, double fy, double fx, double v) {
  BilinearTap t = tap(fy, fx);
  scatter0(img, t.y0, t.x0, v * (1 - t.wy) * (1 - t.wx));
  scatter0(img, t.y0, t.x0 + 1, v * (1 - t.wy) * t.wx);
  scatter0(img, t.y0 + 1, t.x0, v * t.wy * (1 - t.wx));
  scatter0(img, t.y0 + 1, t.x0 + 1, v * t.wy * t.wx);
}

void check_frame(const Tensor& t, const char* what) {
  if (t.ndim() != 2) throw std::invalid_argument(std::string(what) + ": need rank-2 tensor");
}

}  // namespace

Tensor st_extract(const Tensor& frame, const BoxParams& box, int g) {
  check_frame(frame, "st_extract");
  int h = frame.dim(0), w = frame.dim(1);
  Tensor out({g, g});
  for (int a = 0; a < g; ++a) {
    double fy = extract_coord(box.pos[1], box.size[1], a, g, h);
    for (int b = 0; b < g; ++b) {
      double fx = extract_coord(box.pos[0], box.size[0], b, g, w);
      out.at(a, b) = bilinear(frame, fy, fx);
    }
  }
  return out;
}

Tensor st_paste(const Tensor& glimpse, const BoxParams& box, int h, int w) {
  check_frame(glimpse, "st_paste");
  int g = glimpse.dim(0);
  Tensor out({h, w});
  for (int y = 0; y < h; ++y) {
    double gy = paste_coord(box.pos[1], box.size[1], y, h, g);
    if (gy <= -1.0 || gy >= static_cast<double>(g)) continue;
    for (int x = 0; x < w; ++x) {
      double gx = paste_coord(box.pos[0], box.size[0], x, w, g);
      out.at(y, x) = bilinear(glimpse, gy, gx);
    }
  }
  return out;
}

ad::Var st_extract(ad::Var frame, ad::Var size, ad::Var pos, int g) {
  check_frame(frame.val(), "st_extract");
  if (size.size() != 2 || pos.size() != 2)
    throw std::invalid_argument("st_extract: size/pos must be 2-vectors");
  int h = frame.val().dim(0), w = frame.val().dim(1);
  BoxParams box{{size.val()[0], size.val()[1]}, {pos.val()[0], pos.val()[1]}};
  Tensor out = st_extract(frame.val(), box, g);
  ad::Graph& gr = *frame.graph();
  ad::Node *pf = frame.node(), *ps = size.node(), *pp = pos.node();
  return gr.make(std::move(out), {pf, ps, pp}, [pf, ps, pp, g, h, w, box](ad::Graph& grr,
                                                                          ad::Node& n) {
    const Tensor& img = pf->val;
    Tensor* df = pf->requires_grad ? &grr.grad_ref(pf) : nullptr;
    Tensor* ds = ps->requires_grad ? &grr.grad_ref(ps) : nullptr;
    Tensor* dp = pp->requires_grad ? &grr.grad_ref(pp) : nullptr;
    for (int a = 0; a < g; ++a) {
      double vy = grid_coord(a, g);
      double fy = extract_coord(box.pos[1], box.size[1], a, g, h);
      for (int b = 0; b < g; ++b) {
        double gy_out = n.grad.at(a, b);
        if (gy_out == 0.0) continue;
        double vx = grid_coord(b, g);
        double fx = extract_coord(box.pos[0], box.size[0], b, g, w);
        if (df != nullptr) bilinear_scatter(*df, fy, fx, gy_out);
        if (ds != nullptr || dp != nullptr) {
          double dfy, dfx;
          bilinear_coord_grad(img, fy, fx, dfy, dfx);
          double gy_n = gy_out * dfy * 0.5 * (h - 1);  // d fy / d(normalized y)
          double gx_n = gy_out * dfx * 0.5 * (w - 1);
          if (dp != nullptr) {
            dp->data[0] += gx_n;
            dp->data[1] += gy_n;
          }
          if (ds != nullptr) {
            ds->data[0] += gx_n * vx;
            ds->data[1] += gy_n * vy;
          }
        }
      }
    }
  });
}

ad::Var st_paste(ad::Var glimpse, ad::Var size, ad::Var pos, int h, int w) {
  check_frame(glimpse.val(), "st_paste");
  if (size.size() != 2 || pos.size() != 2)
    throw std::invalid_argument("st_paste: size/pos must be 2-vectors");
  int g = glimpse.val().dim(0);
  BoxParams box{{size.val()[0], size.val()[1]}, {pos.val()[0], pos.val()[1]}};
  Tensor out = st_paste(glimpse.val(), box, h, w);
  ad::Graph& gr = *glimpse.graph();
  ad::Node *pq = glimpse.node(), *ps = size.node(), *pp = pos.node();
  return gr.make(std::move(out), {pq, ps, pp}, [pq, ps, pp, g, h, w, box](ad::Graph& grr,
                                                                          ad::Node& n) {
    const Tensor& q = pq->val;
    Tensor* dq = pq->requires_grad ? &grr.grad_ref(pq) : nullptr;
    Tensor* ds = ps->requires_grad ? &grr.grad_ref(ps) : nullptr;
    Tensor* dp = pp->requires_grad ? &grr.grad_ref(pp) : nullptr;
    for (int y = 0; y < h; ++y) {
      double gy = paste_coord(box.pos[1], box.size[1], y, h, g);
      for (int x = 0; x < w; ++x) {
        double go = n.grad.at(y, x);
        if (go == 0.0) continue;
        double gx = paste_coord(box.pos[0], box.size[0], x, w, g);
        if (dq != nullptr) bilinear_scatter(*dq, gy, gx, go);
        if (ds != nullptr || dp != nullptr) {
          double dgy, dgx;
          bilinear_coord_grad(q, gy, gx, dgy, dgx);
          // gy = ((yn - pos_y)/size_y + 1)/2 * (g-1)
          double cy = go * dgy * 0.5 * (g - 1);
          double cx = go * dgx * 0.5 * (g - 1);
          if (dp != nullptr) {
            dp->data[0] += -cx / box.size[0];
            dp->data[1] += -cy / box.size[1];
          }
          if (ds != nullptr) {
            // d(g-coord)/d(size) = -(coord - (g-1)/2) / size
            ds->data[0] += -go * dgx * (gx - 0.5 * (g - 1)) / box.size[0];
            ds->data[1] += -go * dgy * (gy - 0.5 * (g - 1)) / box.size[1];
          }
        }
      }
    }
  });
}

Tensor regularization_kernel(int g, double sigma_k, double flatten_p) {
  if (!(sigma_k > 0.0)) throw std::invalid_argument("regularization_kernel: sigma_k <= 0");
  if (flatten_p < 0.0) throw std::invalid_argument("regularization_kernel: flatten_p < 0");
  if (g < 1) throw std::invalid_argument("regularization_kernel: g < 1");
  Tensor k({g, g});
  double inv = 1.0 / (2.0 * sigma_k * sigma_k);
  double mx = 0.0;
  for (int a = 0; a < g; ++a) {
    double v = grid_coord(a, g);
    for (int b = 0; b < g; ++b) {
      double u = grid_coord(b, g);
      double val = std::exp(-(u * u + v * v) * inv);
      k.at(a, b) = val;
      mx = std::max(mx, val);
    }
  }
  for (auto& x : k.data) x = (x / mx + flatten_p) / (1.0 + flatten_p);
  return k;
}

}  // namespace vts::geom
