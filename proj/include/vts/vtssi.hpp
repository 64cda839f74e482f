#pragma once

#include <array>
#include <memory>

#include "vts/air.hpp"
#include "vts/config.hpp"
#include "vts/datagen.hpp"
#include "vts/find.hpp"
#include "vts/mot.hpp"
#include "vts/rect.hpp"

namespace vts::model {

// Training-step-dependent quantities, owned by the trainer and passed in so
// the model stays pure.
struct StepSchedules {
  double cnt_prior_loc = -2.0;
  double flatten_p = 0.0;
};

struct ObjectScene {
  DiagGaussian size, desc;
  ad::Var size_sample, desc_sample;
  std::vector<DiagGaussian> pos_inferred;  // per step, FIND (or frame-1 AIR) posteriors
  std::vector<ad::Var> pos_inferred_samples;
  bool has_mot = false;
  MotPipelineResult mot;

  // positions used for generation: fused when the state-space model runs,
  // inferred otherwise
  const std::vector<ad::Var>& render_samples() const {
    return has_mot ? mot.final_pos_samples : pos_inferred_samples;
  }
  const std::vector<DiagGaussian>& final_pos() const {
    return has_mot ? mot.final_pos : pos_inferred;
  }
};

struct SceneResult {
  DiagGaussian cnt;
  ad::Var cnt_sample;
  CountInfo count;
  std::vector<ObjectScene> objects;     // ceil(n_tilde) entries
  std::vector<ad::Var> canvases;        // per-frame likelihood means
  std::vector<AirLatents> air_frames;   // K prefix (all frames for the per-frame variant)
  std::vector<ad::Var> air_canvases;    // per-frame reconstructions, when requested
  ad::Var rect_weights;                 // defined for rectifying variants
};

class VtssiModel {
 public:
  VtssiModel(const VtssiConfig& cfg, std::uint64_t init_seed);

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const VtssiConfig& config() const { return cfg_; }
  AirModel& air_model() { return *air_; }
  const AirModel& air_model() const { return *air_; }
  FindModel& find_model() { return *find_; }
  const FindModel& find_model() const { return *find_; }
  MotModel& mot_model() { return *mot_; }

  struct ForwardOptions {
    int t_use = 0;  // curriculum-truncated sequence length
    bool training = true;
    bool one_hot_rect = false;
    bool build_air_recon = false;  // per-frame reconstructions of the prefix
    StepSchedules sched;
  };

  SceneResult forward(ad::Graph& g, const data::FrameSequence& frames,
                      const ForwardOptions& opt, const LatentSampler& sample) const;

  // Single-sample sequential ELBO with one KL term per latent variable,
  // priors per the generative factorization. Term names and prior kinds are
  // exposed for auditing.
  ElboBreakdown elbo(ad::Graph& g, const data::FrameSequence& frames,
                     const SceneResult& scene, const ForwardOptions& opt) const;

  struct Prediction {
    CountInfo count;
    int observed = 0;
    // positions[obj][t] in normalized coordinates, t = 0..horizon-1; the
    // final (fused) estimates
    std::vector<std::vector<std::array<double, 2>>> positions;
    // pre-fusion positions from the tracking component over the observed
    // region (identical to `positions` beyond it)
    std::vector<std::vector<std::array<double, 2>>> positions_find;
    std::vector<Tensor> generated;  // rendered frames over the full horizon
    // per-object size estimates (normalized window extent fractions)
    std::vector<std::array<double, 2>> sizes;
  };

  // Inference on the first `observe` frames only (mode replacement by
  // default), then fully generative rollout out to `horizon` frames.
  Prediction predict(const data::FrameSequence& frames, int observe, int horizon,
                     bool use_modes, bool one_hot_rect, Rng* rng) const;

 private:
  VtssiConfig cfg_;
  ParamStore store_;
  std::unique_ptr<AirModel> air_;
  std::unique_ptr<FindModel> find_;
  std::unique_ptr<RectModel> rect_;
  std::unique_ptr<MotModel> mot_;
};

}  // namespace vts::model
