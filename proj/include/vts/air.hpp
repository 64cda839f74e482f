#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vts/config.hpp"
#include "vts/gaussian.hpp"
#include "vts/geometry.hpp"
#include "vts/graph.hpp"
#include "vts/nn.hpp"

namespace vts::model {

// Draws reparameterized samples, or substitutes modes when evaluating
// deterministically.
struct LatentSampler {
  Rng* rng = nullptr;  // nullptr selects mode replacement
  ad::Var operator()(const DiagGaussian& g) const {
    return rng != nullptr ? sample_reparam(g, *rng) : mode_var(g);
  }
  bool sampling() const { return rng != nullptr; }
};

// Splits a float object count into unit steps plus a fractional remainder,
// e.g. 2.4 -> [1, 1, 0.4, 0, ...] (length N). Differentiable in n_tilde
// through the fractional slot; an exactly integral n_tilde yields only ones.
std::vector<ad::Var> split_count(ad::Var n_tilde, int max_objects);

struct CountInfo {
  ad::Var n_tilde;  // N * sigmoid(cnt_sample)
  int n_ceil = 0;   // ceil(n_tilde), at least 1
  int rounded = 0;  // round(n_tilde), the evaluation-time integer count
};
CountInfo count_from_latent(ad::Var cnt_sample, int max_objects);

struct ObjectLatents {
  DiagGaussian size, pos, desc;
  ad::Var size_sample, pos_sample, desc_sample;
  ad::Var glimpse;  // encoder input, exposed for verification
};

struct AirLatents {
  DiagGaussian cnt;
  ad::Var cnt_sample;
  CountInfo count;
  std::vector<ObjectLatents> objects;  // always N slots
};

// What generation needs per object: static appearance plus the position for
// the frame being rendered.
struct RenderObject {
  ad::Var size_sample;
  ad::Var desc_sample;
  ad::Var pos_sample;
};

// Modified single-frame model: feed-forward continuous counting plus the
// standard localize/encode/decode path.
class AirModel {
 public:
  AirModel(ParamStore& store, const AirConfig& cfg, int frame_h, int frame_w,
           Rng& init_rng);

  // Runs counting, localization and per-object encoding on one frame.
  // All N object slots are computed regardless of the count sample.
  AirLatents infer(ad::Graph& g, const Tensor& frame, const LatentSampler& sample,
                   bool training) const;

  // Decodes glimpses for the first ceil(n_tilde) objects, applies the
  // position-regularization mask (training only) and the count steps, and
  // pastes everything onto a zero canvas. Returns the likelihood mean.
  ad::Var generate(ad::Graph& g, ad::Var n_tilde, std::span<const RenderObject> objects,
                   double flatten_p_now, bool training) const;

  // Decoded, squashed glimpse for one object (before masking and stepping).
  ad::Var decode_glimpse(ad::Graph& g, ad::Var desc_sample) const;

  const AirConfig& config() const { return cfg_; }
  int frame_h() const { return h_; }
  int frame_w() const { return w_; }

  mutable std::int64_t infer_calls = 0;  // instrumentation

 private:
  AirConfig cfg_;
  int h_, w_;
  Conv2d cnt_conv1_, cnt_conv2_, cnt_conv3_;
  Dense cnt_fc1_, cnt_fc2_, cnt_head_;
  Conv2d pre_conv1_, pre_conv2_;
  LstmCell loc_lstm_;
  Dense size_loc_head_, size_scale_head_, pos_loc_head_, pos_scale_head_;
  Dense size_loc_out_, size_scale_out_, pos_loc_out_, pos_scale_out_;
  Dense enc_fc1_, enc_fc2_, enc_head_;
  Dense dec_fc1_, dec_fc2_, dec_head_;
};

// Positive scale from a raw head output.
ad::Var positive_scale(ad::Var raw);

// ---- ELBO bookkeeping -------------------------------------------------------

struct ElboTerm {
  std::string name;   // e.g. "obj0/pos/t3"
  std::string prior;  // e.g. "std_normal", "walk(0.1)", "transition"
  ad::Var kl;
};

struct ElboBreakdown {
  ad::Var log_likelihood;
  std::vector<ElboTerm> kls;
  ad::Var total() const;  // log_likelihood minus all KL terms
  double kl_sum() const;
};

// Per-frame ELBO of the single-frame model (used by the per-frame variant and
// the joint warm-start objective): reconstruction under the canvas likelihood
// minus KL terms against the frame-level priors.
ElboBreakdown air_frame_elbo(ad::Graph& g, const Tensor& frame, const AirLatents& lat,
                             ad::Var canvas, const AirConfig& cfg, double cnt_prior_loc_now,
                             const std::string& term_prefix);

}  // namespace vts::model
