#include "vts/graph.hpp"

#include <Eigen/Core>

#include <cmath>
#include <memory>

#include "vts/nn.hpp"

namespace vts::ad {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;
using EVMap = Eigen::Map<Eigen::VectorXd>;
using ECVMap = Eigen::Map<const Eigen::VectorXd>;

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.val().same_shape(b.val()))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.val().shape_str() +
                                " vs " + b.val().shape_str());
}

}  // namespace

Var Graph::constant(Tensor t) {
  nodes_.emplace_back();
  Node& n = nodes_.back();
  n.val = std::move(t);
  n.requires_grad = false;
  return Var(this, &n);
}

Var Graph::input(Tensor t, bool requires_grad) {
  nodes_.emplace_back();
  Node& n = nodes_.back();
  n.val = std::move(t);
  n.requires_grad = requires_grad;
  return Var(this, &n);
}

Var Graph::param(vts::Param& p) {
  nodes_.emplace_back();
  Node& n = nodes_.back();
  n.val = p.value;
  n.param = &p;
  n.requires_grad = true;
  return Var(this, &n);
}

Var Graph::make(Tensor val, std::vector<Node*> parents, BackFn back) {
  nodes_.emplace_back();
  Node& n = nodes_.back();
  n.val = std::move(val);
  n.parents = std::move(parents);
  for (Node* p : n.parents)
    if (p->requires_grad) n.requires_grad = true;
  if (n.requires_grad) n.back = std::move(back);
  return Var(this, &n);
}

Tensor& Graph::grad_ref(Node* n) {
  if (n->grad.data.empty()) n->grad = Tensor::zeros_like(n->val);
  return n->grad;
}

void Graph::backward(const Var& root) {
  if (!root.val().is_scalar()) throw std::invalid_argument("backward: root must be scalar");
  for (auto& n : nodes_) n.reachable = false;
  Node* r = root.node();
  r->reachable = true;
  grad_ref(r).data[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = *it;
    if (!n.reachable || !n.requires_grad) continue;
    for (Node* p : n.parents)
      if (p->requires_grad) p->reachable = true;
    if (n.back) n.back(*this, n);
  }
}

void Graph::accumulate_param_grads(GradBuffer& buf) const {
  for (const auto& n : nodes_) {
    if (n.param == nullptr || n.grad.data.empty()) continue;
    Tensor& dst = buf.grads[static_cast<std::size_t>(n.param->index)];
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += n.grad.data[i];
  }
}

Tensor Graph::grad_of(const Var& v) const {
  if (v.node()->grad.data.empty()) return Tensor::zeros_like(v.val());
  return v.node()->grad;
}

// ---- elementwise ------------------------------------------------------------

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Graph& g = *a.graph();
  Tensor out = a.val();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.val().data[i];
  Node *pa = a.node(), *pb = b.node();
  return g.make(std::move(out), {pa, pb}, [pa, pb](Graph& gr, Node& n) {
    if (pa->requires_grad) {
      Tensor& da = gr.grad_ref(pa);
      for (std::size_t i = 0; i < da.data.size(); ++i) da.data[i] += n.grad.data[i];
    }
    if (pb->requires_grad) {
      Tensor& db = gr.grad_ref(pb);
      for (std::size_t i = 0; i < db.data.size(); ++i) db.data[i] += n.grad.data[i];
    }
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Graph& g = *a.graph();
  Tensor out = a.val();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.val().data[i];
  Node *pa = a.node(), *pb = b.node();
  return g.make(std::move(out), {pa, pb}, [pa, pb](Graph& gr, Node& n) {
    if (pa->requires_grad) {
      Tensor& da = gr.grad_ref(pa);
      for (std::size_t i = 0; i < da.data.size(); ++i) da.data[i] += n.grad.data[i];
    }
    if (pb->requires_grad) {
      Tensor& db = gr.grad_ref(pb);
      for (std::size_t i = 0; i < db.data.size(); ++i) db.data[i] -= n.grad.data[i];
    }
  });
}

Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Graph& g = *a.graph();
  Tensor out = a.val();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.val().data[i];
  Node *pa = a.node(), *pb = b.node();
  return g.make(std::move(out), {pa, pb}, [pa, pb](Graph& gr, Node& n) {
    if (pa->requires_grad) {
      Tensor& da = gr.grad_ref(pa);
      for (std::size_t i = 0; i < da.data.size(); ++i)
        da.data[i] += n.grad.data[i] * pb->val.data[i];
    }
    if (pb->requires_grad) {
      Tensor& db = gr.grad_ref(pb);
      for (std::size_t i = 0; i < db.data.size(); ++i)
        db.data[i] += n.grad.data[i] * pa->val.data[i];
    }
  });
}

Var vdiv(Var a, Var b) {
  check_same_shape(a, b, "vdiv");
  Graph& g = *a.graph();
  Tensor out = a.val();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] /= b.val().data[i];
  Node *pa = a.node(), *pb = b.node();
  return g.make(std::move(out), {pa, pb}, [pa, pb](Graph& gr, Node& n) {
    if (pa->requires_grad) {
      Tensor& da = gr.grad_ref(pa);
      for (std::size_t i = 0; i < da.data.size(); ++i)
        da.data[i] += n.grad.data[i] / pb->val.data[i];
    }
    if (pb->requires_grad) {
      Tensor& db = gr.grad_ref(pb);
      for (std::size_t i = 0; i < db.data.size(); ++i)
        db.data[i] -= n.grad.data[i] * n.val.data[i] / pb->val.data[i];
    }
  });
}

Var neg(Var a) { return mul_scalar(a, -1.0); }

Var add_scalar(Var a, double s) {
  Graph& g = *a.graph();
  Tensor out = a.val();
  for (auto& x : out.data) x += s;
  Node* pa = a.node();
  return g.make(std::move(out), {pa}, [pa](Graph& gr, Node& n) {
    Tensor& da = gr.grad_ref(pa);
    for (std::size_t i = 0; i < da.data.size(); ++i) da.data[i] += n.grad.data[i];
  });
}

Var mul_scalar(Var a, double s) {
  Graph& g = *a.graph();
  Tensor out = a.val();
  for (auto& x : out.data) x *= s;
  Node* pa = a.node();
  return g.make(std::move(out), {pa}, [pa, s](Graph& gr, Node& n) {
    Tensor& da = gr.grad_ref(pa);
    for (std::size_t i = 0; i < da.data.size(); ++i) da.data[i] += s * n.grad.data[i];
  });
}

namespace {

template <class Fwd, class Bwd>
Var unary_op(Var a, Fwd fwd, Bwd bwd_from_xy) {
  Graph& g = *a.graph();
  Tensor out = a.val();
  for (auto& x : out.data) x = fwd(x);
  Node* pa = a.node();
  return g.make(std::move(out), {pa}, [pa, bwd_from_xy](Graph& gr, Node& n) {
    Tensor& da = gr.grad_ref(pa);
    for (std::size_t i = 0; i < da.data.size(); ++i)
      da.data[i] += n.grad.data[i] * bwd_from_xy(pa->val.data[i], n.val.data[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace

Var vexp(Var a) {
  return unary_op(a, [](double x) { return std::exp(x); },
                  [](double, double y) { return y; });
}
Var vlog(Var a) {
  return unary_op(a, [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; });
}
Var vsqrt(Var a) {
  return unary_op(a, [](double x) { return std::sqrt(x); },
                  [](double, double y) { return 0.5 / y; });
}
Var vsquare(Var a) {
  return unary_op(a, [](double x) { return x * x; },
                  [](double x, double) { return 2.0 * x; });
}
Var vtanh(Var a) {
  return unary_op(a, [](double x) { return std::tanh(x); },
                  [](double, double y) { return 1.0 - y * y; });
}
Var vsigmoid(Var a) {
  return unary_op(a, [](double x) { return stable_sigmoid(x); },
                  [](double, double y) { return y * (1.0 - y); });
}
Var vrelu(Var a) {
  return unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}
Var vsoftplus(Var a) {
  return unary_op(a, [](double x) { return stable_softplus(x); },
                  [](double x, double) { return stable_sigmoid(x); });
}

Var clamp_min(Var a, double lo) {
  return unary_op(a, [lo](double x) { return x > lo ? x : lo; },
                  [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

// ---- reductions and shape ---------------------------------------------------

Var sum(Var a) {
  Graph& g = *a.graph();
  double s = 0.0;
  for (double x : a.val().data) s += x;
  Node* pa = a.node();
  return g.make(Tensor::scalar(s), {pa}, [pa](Graph& gr, Node& n) {
    Tensor& da = gr.grad_ref(pa);
    double gy = n.grad.data[0];
    for (auto& x : da.data) x += gy;
  });
}

Var mean(Var a) { return mul_scalar(sum(a), 1.0 / static_cast<double>(a.size())); }

Var dot(Var a, Var b) { return sum(mul(a, b)); }

Var matvec(Var w, Var x) {
  const Tensor& W = w.val();
  const Tensor& X = x.val();
  if (W.ndim() != 2 || X.ndim() != 1 || W.dim(1) != X.dim(0))
    throw std::invalid_argument("matvec: need [m,n]x[n], got " + W.shape_str() + " " +
                                X.shape_str());
  int m = W.dim(0), nn = W.dim(1);
  Tensor out({m});
  ECMap Wm(W.data.data(), m, nn);
  ECVMap Xv(X.data.data(), nn);
  EVMap(out.data.data(), m) = Wm * Xv;
  Graph& g = *w.graph();
  Node *pw = w.node(), *px = x.node();
  return g.make(std::move(out), {pw, px}, [pw, px, m, nn](Graph& gr, Node& n) {
    ECVMap dy(n.grad.data.data(), m);
    if (pw->requires_grad) {
      Tensor& dw = gr.grad_ref(pw);
      EMap dWm(dw.data.data(), m, nn);
      ECVMap xv(px->val.data.data(), nn);
      dWm.noalias() += dy * xv.transpose();
    }
    if (px->requires_grad) {
      Tensor& dx = gr.grad_ref(px);
      ECMap Wm(pw->val.data.data(), m, nn);
      EVMap dxv(dx.data.data(), nn);
      dxv.noalias() += Wm.transpose() * dy;
    }
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: empty");
  Graph& g = *parts[0].graph();
  std::int64_t total = 0;
  for (const auto& p : parts) total += p.size();
  Tensor out({static_cast<int>(total)});
  std::vector<Node*> parents;
  std::vector<std::int64_t> offsets;
  std::int64_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    for (std::int64_t i = 0; i < p.size(); ++i) out.data[off + i] = p.val().data[i];
    off += p.size();
    parents.push_back(p.node());
  }
  auto offs = offsets;
  auto pars = parents;
  return g.make(std::move(out), std::move(parents), [pars, offs](Graph& gr, Node& n) {
    for (std::size_t k = 0; k < pars.size(); ++k) {
      Node* p = pars[k];
      if (!p->requires_grad) continue;
      Tensor& dp = gr.grad_ref(p);
      std::int64_t o = offs[k];
      for (std::size_t i = 0; i < dp.data.size(); ++i) dp.data[i] += n.grad.data[o + i];
    }
  });
}

Var slice(Var a, std::int64_t start, std::int64_t len) {
  if (start < 0 || start + len > a.size()) throw std::invalid_argument("slice: out of range");
  Graph& g = *a.graph();
  Tensor out({static_cast<int>(len)});
  for (std::int64_t i = 0; i < len; ++i) out.data[i] = a.val().data[start + i];
  Node* pa = a.node();
  return g.make(std::move(out), {pa}, [pa, start, len](Graph& gr, Node& n) {
    Tensor& da = gr.grad_ref(pa);
    for (std::int64_t i = 0; i < len; ++i) da.data[start + i] += n.grad.data[i];
  });
}

Var reshape(Var a, std::vector<int> shape) {
  if (shape_size(shape) != a.size()) throw std::invalid_argument("reshape: size mismatch");
  Graph& g = *a.graph();
  Tensor out;
  out.shape = std::move(shape);
  out.data = a.val().data;
  Node* pa = a.node();
  return g.make(std::move(out), {pa}, [pa](Graph& gr, Node& n) {
    Tensor& da = gr.grad_ref(pa);
    for (std::size_t i = 0; i < da.data.size(); ++i) da.data[i] += n.grad.data[i];
  });
}

Var softmax(Var a) {
  Graph& g = *a.graph();
  const Tensor& x = a.val();
  double mx = x.data[0];
  for (double v : x.data) mx = std::max(mx, v);
  Tensor out = x;
  double z = 0.0;
  for (auto& v : out.data) {
    v = std::exp(v - mx);
    z += v;
  }
  for (auto& v : out.data) v /= z;
  Node* pa = a.node();
  return g.make(std::move(out), {pa}, [pa](Graph& gr, Node& n) {
    Tensor& da = gr.grad_ref(pa);
    double d = 0.0;
    for (std::size_t i = 0; i < da.data.size(); ++i) d += n.grad.data[i] * n.val.data[i];
    for (std::size_t i = 0; i < da.data.size(); ++i)
      da.data[i] += n.val.data[i] * (n.grad.data[i] - d);
  });
}

Var stop_gradient(Var a) { return a.graph()->constant(a.val()); }

Var broadcast_mul(Var scalar_v, Var v) {
  if (!scalar_v.val().is_scalar()) throw std::invalid_argument("broadcast_mul: lhs not scalar");
  Graph& g = *scalar_v.graph();
  double s = scalar_v.scalar();
  Tensor out = v.val();
  for (auto& x : out.data) x *= s;
  Node *ps = scalar_v.node(), *pv = v.node();
  return g.make(std::move(out), {ps, pv}, [ps, pv, s](Graph& gr, Node& n) {
    if (ps->requires_grad) {
      Tensor& ds = gr.grad_ref(ps);
      double acc = 0.0;
      for (std::size_t i = 0; i < n.grad.data.size(); ++i)
        acc += n.grad.data[i] * pv->val.data[i];
      ds.data[0] += acc;
    }
    if (pv->requires_grad) {
      Tensor& dv = gr.grad_ref(pv);
      for (std::size_t i = 0; i < dv.data.size(); ++i) dv.data[i] += s * n.grad.data[i];
    }
  });
}

// ---- convolution / pooling --------------------------------------------------

Var conv2d(Var x, Var k, int pad_y, int pad_x) {
  return conv2d(x, k, pad_y, pad_y, pad_x, pad_x);
}

Var conv2d(Var x, Var k, int pad_y_lo, int pad_y_hi, int pad_x_lo, int pad_x_hi) {
  const Tensor& X = x.val();
  const Tensor& K = k.val();
  if (X.ndim() != 3 || K.ndim() != 4 || K.dim(1) != X.dim(0))
    throw std::invalid_argument("conv2d: need x[C,H,W], k[O,C,kh,kw]");
  int C = X.dim(0), H = X.dim(1), W = X.dim(2);
  int O = K.dim(0), kh = K.dim(2), kw = K.dim(3);
  int pad_y = pad_y_lo, pad_x = pad_x_lo;
  int oh = H + pad_y_lo + pad_y_hi - kh + 1;
  int ow = W + pad_x_lo + pad_x_hi - kw + 1;
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: output would be empty");
  int cols_rows = C * kh * kw;
  auto cols = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(cols_rows) * oh * ow, 0.0);
  // im2col: cols[(c,ky,kx), (oy,ox)]
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        double* row = cols->data() +
                      static_cast<std::size_t>((c * kh + ky) * kw + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy + ky - pad_y;
          if (iy < 0 || iy >= H) continue;
          const double* src = &X.data[(static_cast<std::size_t>(c) * H + iy) * W];
          double* dst = row + static_cast<std::size_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox + kx - pad_x;
            if (ix >= 0 && ix < W) dst[ox] = src[ix];
          }
        }
      }
  Tensor out({O, oh, ow});
  ECMap Km(K.data.data(), O, cols_rows);
  ECMap Cm(cols->data(), cols_rows, oh * ow);
  EMap(out.data.data(), O, oh * ow).noalias() = Km * Cm;

  Graph& g = *x.graph();
  Node *px = x.node(), *pk = k.node();
  return g.make(std::move(out), {px, pk},
                [px, pk, cols, C, H, W, O, kh, kw, oh, ow, pad_y, pad_x, cols_rows](
                    Graph& gr, Node& n) {
                  ECMap dY(n.grad.data.data(), O, oh * ow);
                  if (pk->requires_grad) {
                    Tensor& dK = gr.grad_ref(pk);
                    EMap dKm(dK.data.data(), O, cols_rows);
                    ECMap Cm(cols->data(), cols_rows, oh * ow);
                    dKm.noalias() += dY * Cm.transpose();
                  }
                  if (px->requires_grad) {
                    Tensor& dX = gr.grad_ref(px);
                    ECMap Km(pk->val.data.data(), O, cols_rows);
                    EMat dCols = Km.transpose() * dY;  // [cols_rows, oh*ow]
                    // col2im scatter-add
                    for (int c = 0; c < C; ++c)
                      for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                          const double* row =
                              dCols.data() +
                              static_cast<std::size_t>((c * kh + ky) * kw + kx) * oh * ow;
                          for (int oy = 0; oy < oh; ++oy) {
                            int iy = oy + ky - pad_y;
                            if (iy < 0 || iy >= H) continue;
                            double* dst = &dX.data[(static_cast<std::size_t>(c) * H + iy) * W];
                            const double* srow = row + static_cast<std::size_t>(oy) * ow;
                            for (int ox = 0; ox < ow; ++ox) {
                              int ix = ox + kx - pad_x;
                              if (ix >= 0 && ix < W) dst[ix] += srow[ox];
                            }
                          }
                        }
                  }
                });
}

Var bias_channels(Var x, Var b) {
  const Tensor& X = x.val();
  if (X.ndim() != 3 || b.val().ndim() != 1 || b.val().dim(0) != X.dim(0))
    throw std::invalid_argument("bias_channels: shape mismatch");
  int C = X.dim(0), H = X.dim(1), W = X.dim(2);
  Tensor out = X;
  for (int c = 0; c < C; ++c) {
    double bv = b.val().data[c];
    double* p = &out.data[static_cast<std::size_t>(c) * H * W];
    for (int i = 0; i < H * W; ++i) p[i] += bv;
  }
  Graph& g = *x.graph();
  Node *px = x.node(), *pb = b.node();
  return g.make(std::move(out), {px, pb}, [px, pb, C, H, W](Graph& gr, Node& n) {
    if (px->requires_grad) {
      Tensor& dx = gr.grad_ref(px);
      for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += n.grad.data[i];
    }
    if (pb->requires_grad) {
      Tensor& db = gr.grad_ref(pb);
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        const double* p = &n.grad.data[static_cast<std::size_t>(c) * H * W];
        for (int i = 0; i < H * W; ++i) acc += p[i];
        db.data[c] += acc;
      }
    }
  });
}

Var maxpool2(Var x) {
  const Tensor& X = x.val();
  if (X.ndim() != 3) throw std::invalid_argument("maxpool2: need [C,H,W]");
  int C = X.dim(0), H = X.dim(1), W = X.dim(2);
  int oh = H / 2, ow = W / 2;
  Tensor out({C, oh, ow});
  auto argmax = std::make_shared<std::vector<std::int32_t>>(
      static_cast<std::size_t>(C) * oh * ow);
  for (int c = 0; c < C; ++c)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        int best = ((c * H + 2 * oy) * W + 2 * ox);
        double bv = X.data[best];
        const int cand[3] = {((c * H + 2 * oy) * W + 2 * ox + 1),
                             ((c * H + 2 * oy + 1) * W + 2 * ox),
                             ((c * H + 2 * oy + 1) * W + 2 * ox + 1)};
        for (int idx : cand)
          if (X.data[idx] > bv) {
            bv = X.data[idx];
            best = idx;
          }
        out.at(c, oy, ox) = bv;
        (*argmax)[(static_cast<std::size_t>(c) * oh + oy) * ow + ox] = best;
      }
  Graph& g = *x.graph();
  Node* px = x.node();
  return g.make(std::move(out), {px}, [px, argmax](Graph& gr, Node& n) {
    Tensor& dx = gr.grad_ref(px);
    for (std::size_t i = 0; i < argmax->size(); ++i)
      dx.data[static_cast<std::size_t>((*argmax)[i])] += n.grad.data[i];
  });
}

Var dropout(Var a, double rate, Rng& rng, bool active) {
  if (!active || rate <= 0.0) return a;
  Graph& g = *a.graph();
  double keep = 1.0 - rate;
  Tensor mask = a.val();
  for (auto& m : mask.data) m = (rng.uniform() < keep) ? 1.0 / keep : 0.0;
  Var mv = g.constant(std::move(mask));
  return mul(a, mv);
}

}  // namespace vts::ad
