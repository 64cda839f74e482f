#include "vts/gaussian.hpp"

#include <cmath>
#include <stdexcept>

namespace vts {

namespace {
constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * ln(2*pi)
}

DiagGaussian::DiagGaussian(ad::Var loc_, ad::Var scale_) : loc(loc_), scale(scale_) {
  if (loc.size() != scale.size())
    throw std::invalid_argument("DiagGaussian: loc/scale dimension mismatch");
  for (double s : scale.val().data)
    if (!(s > 0.0)) throw std::invalid_argument("DiagGaussian: scale must be positive");
}

DiagGaussian DiagGaussian::constant(ad::Graph& g, std::vector<double> loc,
                                    std::vector<double> scale) {
  return DiagGaussian(g.constant(Tensor::from(std::move(loc))),
                      g.constant(Tensor::from(std::move(scale))));
}

DiagGaussian DiagGaussian::standard(ad::Graph& g, int d) {
  return DiagGaussian(g.constant(Tensor({d}, 0.0)), g.constant(Tensor({d}, 1.0)));
}

DiagGaussian DiagGaussian::fixed(ad::Graph& g, const Tensor& loc, double scale) {
  Tensor s(loc.shape, scale);
  return DiagGaussian(g.constant(loc), g.constant(std::move(s)));
}

ad::Var sample_reparam(const DiagGaussian& g, const Tensor& noise) {
  if (noise.size() != g.loc.size())
    throw std::invalid_argument("sample_reparam: noise dimension mismatch");
  ad::Graph& gr = *g.loc.graph();
  return ad::add(g.loc, ad::mul(g.scale, gr.constant(noise)));
}

ad::Var sample_reparam(const DiagGaussian& g, Rng& rng) {
  Tensor noise({g.dim()});
  for (auto& x : noise.data) x = rng.normal();
  return sample_reparam(g, noise);
}

ad::Var kl_divergence(const DiagGaussian& q, const DiagGaussian& p) {
  if (q.dim() != p.dim()) throw std::invalid_argument("kl_divergence: dimension mismatch");
  using namespace ad;
  Var d = sub(q.loc, p.loc);
  Var num = add(vsquare(q.scale), vsquare(d));
  Var den = mul_scalar(vsquare(p.scale), 2.0);
  Var per_dim = add_scalar(add(sub(vlog(p.scale), vlog(q.scale)), vdiv(num, den)), -0.5);
  return sum(per_dim);
}

ad::Var log_prob(const DiagGaussian& g, const Tensor& x) {
  if (x.size() != g.loc.size()) throw std::invalid_argument("log_prob: dimension mismatch");
  using namespace ad;
  Graph& gr = *g.loc.graph();
  Var z = vdiv(sub(gr.constant(x), g.loc), g.scale);
  Var s = sum(sub(mul_scalar(vsquare(z), -0.5), vlog(g.scale)));
  return add_scalar(s, -kHalfLog2Pi * static_cast<double>(g.dim()));
}

namespace {

bool exact_one_hot(const Tensor& w, std::size_t& hot) {
  bool found = false;
  for (std::size_t i = 0; i < w.data.size(); ++i) {
    if (w.data[i] == 1.0) {
      if (found) return false;
      found = true;
      hot = i;
    } else if (w.data[i] != 0.0) {
      return false;
    }
  }
  return found;
}

}  // namespace

DiagGaussian fuse_weighted(std::span<const DiagGaussian> vars, ad::Var weights) {
  if (vars.empty()) throw std::invalid_argument("fuse_weighted: empty input");
  std::size_t k = vars.size();
  if (static_cast<std::size_t>(weights.size()) != k)
    throw std::invalid_argument("fuse_weighted: weight count mismatch");
  int d = vars[0].dim();
  for (const auto& v : vars)
    if (v.dim() != d) throw std::invalid_argument("fuse_weighted: dimension mismatch");
  double wsum = 0.0;
  for (double w : weights.val().data) {
    if (w < 0.0) throw std::invalid_argument("fuse_weighted: negative weight");
    wsum += w;
  }
  if (std::fabs(wsum - 1.0) > 1e-6)
    throw std::invalid_argument("fuse_weighted: weights not normalized");

  std::size_t hot = 0;
  if (exact_one_hot(weights.val(), hot)) return vars[hot];

  using namespace ad;
  Var loc, var;
  for (std::size_t i = 0; i < k; ++i) {
    Var wi = slice(weights, static_cast<std::int64_t>(i), 1);
    Var li = broadcast_mul(wi, vars[i].loc);
    Var vi = broadcast_mul(vsquare(wi), vsquare(vars[i].scale));
    loc = i == 0 ? li : add(loc, li);
    var = i == 0 ? vi : add(var, vi);
  }
  return DiagGaussian(loc, vsqrt(var));
}

DiagGaussian fuse_weighted(std::span<const DiagGaussian> vars, const Tensor& weights) {
  if (vars.empty()) throw std::invalid_argument("fuse_weighted: empty input");
  ad::Graph& g = *vars[0].loc.graph();
  return fuse_weighted(vars, g.constant(weights));
}

Tensor mode(const DiagGaussian& g) { return g.loc.val(); }

ad::Var mode_var(const DiagGaussian& g) { return g.loc; }

ad::Var frame_log_prob(ad::Var canvas, const Tensor& frame, double sigma) {
  if (!canvas.val().same_shape(frame))
    throw std::invalid_argument("frame_log_prob: shape mismatch");
  using namespace ad;
  Graph& g = *canvas.graph();
  double n = static_cast<double>(frame.size());
  Var sse = sum(vsquare(sub(canvas, g.constant(frame))));
  return add_scalar(mul_scalar(sse, -0.5 / (sigma * sigma)),
                    -n * (std::log(sigma) + kHalfLog2Pi));
}

}  // namespace vts
