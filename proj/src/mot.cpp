#include "vts/mot.hpp"

#include <stdexcept>

namespace vts::model {

using namespace ad;

MotModel::MotModel(ParamStore& store, const MotConfig& cfg, int desc_dim, Rng& rng)
    : cfg_(cfg) {
  int in = 2 + desc_dim + 2;  // [size, desc, pos_t]
  lstm_ = LstmCell(store, "mot/lstm", in, cfg.lstm_units, rng);
  mot_loc_head_ = Dense(store, "mot/loc_head", cfg.lstm_units, cfg.head_units, rng);
  mot_scale_head_ = Dense(store, "mot/scale_head", cfg.lstm_units, cfg.head_units, rng);
  mot_loc_out_ = Dense(store, "mot/loc_out", cfg.head_units, cfg.motion_dim, rng);
  mot_scale_out_ = Dense(store, "mot/scale_out", cfg.head_units, cfg.motion_dim, rng, -2.0);

  int tin = 2 + cfg.motion_dim;
  trp_fc1_ = Dense(store, "mot/trp/fc1", tin, cfg.tr_units, rng);
  trp_fc2_ = Dense(store, "mot/trp/fc2", cfg.tr_units, cfg.tr_units, rng);
  trp_loc_head_ = Dense(store, "mot/trp/loc_head", cfg.tr_units, cfg.tr_head_units, rng);
  trp_scale_head_ = Dense(store, "mot/trp/scale_head", cfg.tr_units, cfg.tr_head_units, rng);
  trp_loc_out_ = Dense(store, "mot/trp/loc_out", cfg.tr_head_units, 2, rng);
  trp_scale_out_ = Dense(store, "mot/trp/scale_out", cfg.tr_head_units, 2, rng, -2.0);

  trm_fc1_ = Dense(store, "mot/trm/fc1", tin, cfg.tr_units, rng);
  trm_fc2_ = Dense(store, "mot/trm/fc2", cfg.tr_units, cfg.tr_units, rng);
  trm_loc_head_ = Dense(store, "mot/trm/loc_head", cfg.tr_units, cfg.tr_head_units, rng);
  trm_scale_head_ = Dense(store, "mot/trm/scale_head", cfg.tr_units, cfg.tr_head_units, rng);
  trm_loc_out_ = Dense(store, "mot/trm/loc_out", cfg.tr_head_units, cfg.motion_dim, rng);
  trm_scale_out_ =
      Dense(store, "mot/trm/scale_out", cfg.tr_head_units, cfg.motion_dim, rng, -2.0);
}

std::vector<DiagGaussian> MotModel::infer_motion(Graph& g,
                                                 std::span<const ad::Var> pos_samples,
                                                 Var size_sample, Var desc_sample,
                                                 int m) const {
  int t_total = static_cast<int>(pos_samples.size());
  if (m < 1 || t_total < m) throw std::invalid_argument("infer_motion: need T >= M >= 1");
  std::vector<DiagGaussian> out;
  auto state = lstm_.zero_state(g);
  for (int t = 0; t < t_total; ++t) {
    std::vector<Var> parts{size_sample, desc_sample, pos_samples[static_cast<std::size_t>(t)]};
    state = lstm_.step(g, concat(parts), state);
    if (t + 1 >= m) {
      Var loc = mot_loc_out_(g, vtanh(mot_loc_head_(g, state.h)));
      Var scale = positive_scale(mot_scale_out_(g, vtanh(mot_scale_head_(g, state.h))));
      out.emplace_back(loc, scale);
    }
  }
  return out;
}

TransitionOut MotModel::transition(Graph& g, Var pos_sample, Var mot_sample) const {
  std::vector<Var> parts{pos_sample, mot_sample};
  Var in = concat(parts);

  Var p = vtanh(trp_fc1_(g, in));
  p = vtanh(trp_fc2_(g, p));
  DiagGaussian pos(trp_loc_out_(g, vtanh(trp_loc_head_(g, p))),
                   positive_scale(trp_scale_out_(g, vtanh(trp_scale_head_(g, p)))));

  Var q = vtanh(trm_fc1_(g, in));
  q = vtanh(trm_fc2_(g, q));
  DiagGaussian mot(trm_loc_out_(g, vtanh(trm_loc_head_(g, q))),
                   positive_scale(trm_scale_out_(g, vtanh(trm_scale_head_(g, q)))));
  return {pos, mot};
}

TransitionFn MotModel::transition_fn() const {
  return [this](Graph& g, Var p, Var m) { return transition(g, p, m); };
}

DiagGaussian fuse_step(const DiagGaussian& pred, const DiagGaussian& inferred, double w) {
  if (w < 0.0 || w > 1.0) throw std::invalid_argument("fuse_step: w outside [0, 1]");
  std::vector<DiagGaussian> vars{pred, inferred};
  return fuse_weighted(vars, Tensor::from({w, 1.0 - w}));
}

MotPipelineResult mot_pipeline(Graph& g, const TransitionFn& tr,
                               std::span<const DiagGaussian> inferred_pos,
                               std::span<const ad::Var> inferred_pos_samples,
                               std::span<const DiagGaussian> inferred_mot, int m,
                               const FusionPolicy& policy, Rng* w_rng,
                               const LatentSampler& sample) {
  int t_total = static_cast<int>(inferred_pos.size());
  if (m < 1 || t_total < m) throw std::invalid_argument("mot_pipeline: need T >= M >= 1");
  if (static_cast<int>(inferred_mot.size()) != t_total - m + 1)
    throw std::invalid_argument("mot_pipeline: inferred motions must cover M..T");

  MotPipelineResult res;
  res.inferred_mot.assign(inferred_mot.begin(), inferred_mot.end());
  for (int t = 0; t < m; ++t) {
    res.final_pos.push_back(inferred_pos[static_cast<std::size_t>(t)]);
    res.final_pos_samples.push_back(inferred_pos_samples[static_cast<std::size_t>(t)]);
  }
  res.final_mot.push_back(inferred_mot[0]);
  res.final_mot_samples.push_back(sample(inferred_mot[0]));

  for (int t = m; t < t_total; ++t) {
    Var prev_pos = res.final_pos_samples.back();
    Var prev_mot = res.final_mot_samples.back();
    TransitionOut pred = tr(g, prev_pos, prev_mot);
    res.pred_pos.push_back(pred.pos);
    res.pred_mot.push_back(pred.mot);
    double w = w_rng != nullptr ? w_rng->uniform(policy.w_min, policy.w_max) : policy.test_w;
    DiagGaussian fused_pos =
        fuse_step(pred.pos, inferred_pos[static_cast<std::size_t>(t)], w);
    DiagGaussian fused_mot =
        fuse_step(pred.mot, inferred_mot[static_cast<std::size_t>(t - m + 1)], w);
    res.final_pos.push_back(fused_pos);
    res.final_pos_samples.push_back(sample(fused_pos));
    res.final_mot.push_back(fused_mot);
    res.final_mot_samples.push_back(sample(fused_mot));
  }
  return res;
}

RolloutResult rollout(Graph& g, const TransitionFn& tr, Var pos0, Var mot0, int steps,
                      const LatentSampler& sample) {
  RolloutResult res;
  Var p = pos0, m = mot0;
  for (int s = 0; s < steps; ++s) {
    TransitionOut out = tr(g, p, m);
    p = sample(out.pos);
    m = sample(out.mot);
    res.pos_dist.push_back(out.pos);
    res.mot_dist.push_back(out.mot);
    res.pos.push_back(p);
    res.mot.push_back(m);
  }
  return res;
}

}  // namespace vts::model
