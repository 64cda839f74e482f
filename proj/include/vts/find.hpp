#pragma once

#include <vector>

#include "vts/air.hpp"
#include "vts/config.hpp"
#include "vts/gaussian.hpp"
#include "vts/nn.hpp"

namespace vts::model {

// Tracks a known object through frames: convolution kernels derived from the
// object description turn the frame into object-specific features, from
// which the next position is inferred given the previous one.
class FindModel {
 public:
  FindModel(ParamStore& store, const FindConfig& cfg, int desc_dim, int frame_h,
            int frame_w, Rng& init_rng);

  // Description sample -> kernel bank [n_kernels, 1, k, k]. Computed once per
  // object per sequence.
  ad::Var derive_kernels(ad::Graph& g, ad::Var desc_sample) const;

  // One tracking step: frame conv features + previous position sample ->
  // position posterior (tanh-squashed location).
  DiagGaussian step(ad::Graph& g, const Tensor& frame, ad::Var kernel_bank,
                    ad::Var prev_pos_sample) const;

  struct Track {
    std::vector<DiagGaussian> pos;
    std::vector<ad::Var> samples;
  };
  // Sequential tracking over frames[t0..t1), feeding each sampled position
  // into the next step.
  Track track(ad::Graph& g, const std::vector<Tensor>& frames, int t0, int t1,
              ad::Var kernel_bank, ad::Var init_pos_sample,
              const LatentSampler& sample) const;

  const FindConfig& config() const { return cfg_; }

  mutable std::int64_t derive_calls = 0;  // instrumentation

 private:
  FindConfig cfg_;
  int h_, w_;
  Param* bank_bias_ = nullptr;
  Conv2d conv1_, conv2_;
  Dense fc1_, fc2_, feat_out_;
  Dense ker_fc1_, ker_fc2_, ker_out_;
  Dense pos_fc1_, pos_fc2_;
  Dense loc_head_, scale_head_, loc_out_, scale_out_;
};

}  // namespace vts::model
