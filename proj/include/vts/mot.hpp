#pragma once

#include <functional>
#include <span>
#include <vector>

#include "vts/air.hpp"
#include "vts/config.hpp"
#include "vts/gaussian.hpp"
#include "vts/nn.hpp"

namespace vts::model {

// Joint transition output: p(position_t, motion_t | position_{t-1}, motion_{t-1}).
struct TransitionOut {
  DiagGaussian pos;
  DiagGaussian mot;
};

// The prediction-averaging loop and rollout are written against this
// signature so tests can substitute hand-set dynamics.
using TransitionFn = std::function<TransitionOut(ad::Graph&, ad::Var pos_sample,
                                                 ad::Var mot_sample)>;

// State-space model of object motion: a recurrence infers motion latents from
// position history; two transition networks predict the next state.
class MotModel {
 public:
  MotModel(ParamStore& store, const MotConfig& cfg, int desc_dim, Rng& init_rng);

  // Motion posteriors for steps M..T (1-based M), from a recurrence over
  // [size, description, position_t] for t = 1..T. Outputs before M discarded.
  std::vector<DiagGaussian> infer_motion(ad::Graph& g,
                                         std::span<const ad::Var> pos_samples,
                                         ad::Var size_sample, ad::Var desc_sample,
                                         int m) const;

  TransitionOut transition(ad::Graph& g, ad::Var pos_sample, ad::Var mot_sample) const;
  TransitionFn transition_fn() const;

  const MotConfig& config() const { return cfg_; }

 private:
  MotConfig cfg_;
  LstmCell lstm_;
  Dense mot_loc_head_, mot_scale_head_, mot_loc_out_, mot_scale_out_;
  Dense trp_fc1_, trp_fc2_, trp_loc_head_, trp_scale_head_, trp_loc_out_, trp_scale_out_;
  Dense trm_fc1_, trm_fc2_, trm_loc_head_, trm_scale_head_, trm_loc_out_, trm_scale_out_;
};

// fuse_weighted([pred, inferred], [w, 1-w]); w must lie in [0, 1].
DiagGaussian fuse_step(const DiagGaussian& pred, const DiagGaussian& inferred, double w);

struct MotPipelineResult {
  std::vector<DiagGaussian> final_pos;        // steps 1..T
  std::vector<ad::Var> final_pos_samples;     // steps 1..T
  std::vector<DiagGaussian> final_mot;        // steps M..T
  std::vector<ad::Var> final_mot_samples;     // steps M..T
  std::vector<DiagGaussian> pred_pos;         // steps M+1..T
  std::vector<DiagGaussian> pred_mot;         // steps M+1..T
  std::vector<DiagGaussian> inferred_mot;     // steps M..T (pre-fusion posteriors)
};

// Algorithm: steps 1..M adopt the inferred positions; motion at M adopts the
// inferred motion; each later step transitions from the previous final
// samples and fuses the prediction with the inferred variables under a
// per-step weight drawn from `policy` (fixed test_w when not sampling).
MotPipelineResult mot_pipeline(ad::Graph& g, const TransitionFn& tr,
                               std::span<const DiagGaussian> inferred_pos,
                               std::span<const ad::Var> inferred_pos_samples,
                               std::span<const DiagGaussian> inferred_mot, int m,
                               const FusionPolicy& policy, Rng* w_rng,
                               const LatentSampler& sample);

struct RolloutResult {
  std::vector<DiagGaussian> pos_dist;
  std::vector<DiagGaussian> mot_dist;
  std::vector<ad::Var> pos;  // samples or modes
  std::vector<ad::Var> mot;
};

// Fully generative sampling of future states by repeated transition.
RolloutResult rollout(ad::Graph& g, const TransitionFn& tr, ad::Var pos0, ad::Var mot0,
                      int steps, const LatentSampler& sample);

}  // namespace vts::model
