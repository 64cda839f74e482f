#pragma once

#include <span>
#include <vector>

#include "vts/air.hpp"
#include "vts/config.hpp"
#include "vts/gaussian.hpp"
#include "vts/nn.hpp"

namespace vts::model {

// Rectifies K per-frame latent sets into one consensus set via learned
// softmax weights over the frames. Distributions are fused, never samples.
class RectModel {
 public:
  RectModel(ParamStore& store, const RectConfig& cfg, int max_objects, int desc_dim,
            Rng& init_rng);

  struct Result {
    DiagGaussian cnt;
    ad::Var cnt_sample;
    CountInfo count;
    std::vector<DiagGaussian> size;  // N slots
    std::vector<DiagGaussian> desc;  // N slots
    ad::Var weights;                 // K rectification weights
  };

  // `one_hot` replaces the soft weights by an argmax one-hot vector
  // (evaluation option): the output then equals the selected frame's latents.
  Result rectify(ad::Graph& g, std::span<const AirLatents> intermediates,
                 const LatentSampler& sample, bool one_hot) const;

 private:
  RectConfig cfg_;
  int n_, d_;
  LstmCell fwd_, bwd_;
  Dense head1_, head2_, out_;
};

}  // namespace vts::model
