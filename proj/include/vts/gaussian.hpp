#pragma once

#include <span>

#include "vts/graph.hpp"
#include "vts/rng.hpp"
#include "vts/tensor.hpp"

namespace vts {

// Diagonal-covariance Gaussian over R^d, the latent-variable representation
// used everywhere in the model. `loc` and `scale` live on an autodiff graph;
// for plain numeric work wrap constants (see `constant`).
//
// Scale positivity is enforced at construction. Network heads must map raw
// outputs through a smooth positive function (softplus, see nn heads) before
// constructing one of these.
struct DiagGaussian {
  ad::Var loc;
  ad::Var scale;

  DiagGaussian() = default;
  DiagGaussian(ad::Var loc_, ad::Var scale_);

  int dim() const { return static_cast<int>(loc.size()); }

  static DiagGaussian constant(ad::Graph& g, std::vector<double> loc,
                               std::vector<double> scale);
  static DiagGaussian standard(ad::Graph& g, int d);
  // N(loc_value, fixed scale) with no gradient into either parameter.
  static DiagGaussian fixed(ad::Graph& g, const Tensor& loc, double scale);
};

// loc + scale * noise; differentiable in loc and scale.
ad::Var sample_reparam(const DiagGaussian& g, const Tensor& noise);
ad::Var sample_reparam(const DiagGaussian& g, Rng& rng);

// Closed-form KL(q || p) summed over dimensions; never sampled.
ad::Var kl_divergence(const DiagGaussian& q, const DiagGaussian& p);

// Sum of per-dimension Gaussian log densities at x.
ad::Var log_prob(const DiagGaussian& g, const Tensor& x);

// Weighted fusion: loc = sum_k w_k loc_k, scale = sqrt(sum_k w_k^2 scale_k^2)
// (independence assumption). Weights must be normalized to 1 within 1e-6.
// Exact one-hot weights return the selected input unchanged.
DiagGaussian fuse_weighted(std::span<const DiagGaussian> vars, ad::Var weights);
DiagGaussian fuse_weighted(std::span<const DiagGaussian> vars, const Tensor& weights);

// Gaussian mode = loc.
Tensor mode(const DiagGaussian& g);
ad::Var mode_var(const DiagGaussian& g);

// Log likelihood of an observed frame under a per-pixel Gaussian with mean
// `canvas` and shared fixed scale `sigma`, summed over pixels.
ad::Var frame_log_prob(ad::Var canvas, const Tensor& frame, double sigma);

}  // namespace vts
