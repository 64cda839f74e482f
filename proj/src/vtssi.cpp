#include "vts/vtssi.hpp"

#include <stdexcept>

namespace vts::model {

using namespace ad;

VtssiModel::VtssiModel(const VtssiConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(stream_seed(init_seed, "init"));
  air_ = std::make_unique<AirModel>(store_, cfg_.air, cfg_.frame_h, cfg_.frame_w, rng);
  find_ = std::make_unique<FindModel>(store_, cfg_.find, cfg_.air.desc_dim, cfg_.frame_h,
                                      cfg_.frame_w, rng);
  rect_ = std::make_unique<RectModel>(store_, cfg_.rect, cfg_.air.max_objects,
                                      cfg_.air.desc_dim, rng);
  mot_ = std::make_unique<MotModel>(store_, cfg_.mot, cfg_.air.desc_dim, rng);
}

namespace {

bool has_rect(Variant v) { return v == Variant::rect_find || v == Variant::vtssi; }
bool has_mot_component(Variant v) {
  return v == Variant::find_mot || v == Variant::vtssi;
}

}  // namespace

SceneResult VtssiModel::forward(Graph& g, const data::FrameSequence& frames,
                                const ForwardOptions& opt,
                                const LatentSampler& sample) const {
  int t_use = opt.t_use > 0 ? opt.t_use : frames.t;
  if (t_use > frames.t) throw std::invalid_argument("forward: t_use exceeds sequence");
  int k_eff = std::min(cfg_.K, t_use);
  int m_eff = std::min(cfg_.M, t_use);

  std::vector<Tensor> frame_tensors;
  frame_tensors.reserve(static_cast<std::size_t>(t_use));
  for (int t = 0; t < t_use; ++t) frame_tensors.push_back(frames.frame(t));

  SceneResult scene;

  if (cfg_.variant == Variant::air) {
    // independent per-frame inference and reconstruction
    for (int t = 0; t < t_use; ++t) {
      AirLatents lat = air_->infer(g, frame_tensors[t], sample, opt.training);
      std::vector<RenderObject> ro;
      for (int i = 0; i < lat.count.n_ceil; ++i)
        ro.push_back({lat.objects[i].size_sample, lat.objects[i].desc_sample,
                      lat.objects[i].pos_sample});
      Var canvas =
          air_->generate(g, lat.count.n_tilde, ro, opt.sched.flatten_p, opt.training);
      scene.canvases.push_back(canvas);
      scene.air_canvases.push_back(canvas);
      scene.air_frames.push_back(std::move(lat));
    }
    scene.cnt = scene.air_frames[0].cnt;
    scene.cnt_sample = scene.air_frames[0].cnt_sample;
    scene.count = scene.air_frames[0].count;
    return scene;
  }

  // --- consensus (or frame-1) appearance inference ---
  int prefix = has_rect(cfg_.variant) ? k_eff : 1;
  for (int t = 0; t < prefix; ++t)
    scene.air_frames.push_back(air_->infer(g, frame_tensors[t], sample, opt.training));

  std::vector<DiagGaussian> sizes, descs;  // N slots
  if (has_rect(cfg_.variant)) {
    auto rectified = rect_->rectify(g, scene.air_frames, sample, opt.one_hot_rect);
    scene.cnt = rectified.cnt;
    scene.cnt_sample = rectified.cnt_sample;
    scene.count = rectified.count;
    scene.rect_weights = rectified.weights;
    sizes = std::move(rectified.size);
    descs = std::move(rectified.desc);
  } else {
    const AirLatents& first = scene.air_frames[0];
    scene.cnt = first.cnt;
    scene.cnt_sample = first.cnt_sample;
    scene.count = first.count;
    for (const auto& obj : first.objects) {
      sizes.push_back(obj.size);
      descs.push_back(obj.desc);
    }
  }

  // --- per-object tracking and dynamics ---
  for (int i = 0; i < scene.count.n_ceil; ++i) {
    ObjectScene obj;
    obj.size = sizes[static_cast<std::size_t>(i)];
    obj.desc = descs[static_cast<std::size_t>(i)];
    if (has_rect(cfg_.variant)) {
      obj.size_sample = clamp_min(sample(obj.size), 0.02);
      obj.desc_sample = sample(obj.desc);
    } else {
      // reuse the single samples drawn during frame-1 inference
      obj.size_sample = scene.air_frames[0].objects[i].size_sample;
      obj.desc_sample = scene.air_frames[0].objects[i].desc_sample;
    }

    Var bank = find_->derive_kernels(g, obj.desc_sample);
    if (has_rect(cfg_.variant)) {
      // the initial position is unavailable for a rectified object: feed zero
      Var zero = g.constant(Tensor({2}, 0.0));
      auto track = find_->track(g, frame_tensors, 0, t_use, bank, zero, sample);
      obj.pos_inferred = std::move(track.pos);
      obj.pos_inferred_samples = std::move(track.samples);
    } else {
      const auto& first_obj = scene.air_frames[0].objects[i];
      obj.pos_inferred.push_back(first_obj.pos);
      obj.pos_inferred_samples.push_back(first_obj.pos_sample);
      if (t_use > 1) {
        auto track = find_->track(g, frame_tensors, 1, t_use, bank,
                                  first_obj.pos_sample, sample);
        for (auto& p : track.pos) obj.pos_inferred.push_back(std::move(p));
        for (auto& s : track.samples) obj.pos_inferred_samples.push_back(std::move(s));
      }
    }

    if (has_mot_component(cfg_.variant)) {
      obj.has_mot = true;
      auto inferred_mot = mot_->infer_motion(g, obj.pos_inferred_samples, obj.size_sample,
                                             obj.desc_sample, m_eff);
      obj.mot = mot_pipeline(g, mot_->transition_fn(), obj.pos_inferred,
                             obj.pos_inferred_samples, inferred_mot, m_eff, cfg_.fusion,
                             sample.rng, sample);
    }
    scene.objects.push_back(std::move(obj));
  }

  // --- per-frame likelihood means ---
  for (int t = 0; t < t_use; ++t) {
    std::vector<RenderObject> ro;
    for (const auto& obj : scene.objects)
      ro.push_back({obj.size_sample, obj.desc_sample, obj.render_samples()[t]});
    scene.canvases.push_back(
        air_->generate(g, scene.count.n_tilde, ro, opt.sched.flatten_p, opt.training));
  }

  if (opt.build_air_recon) {
    for (int t = 0; t < prefix; ++t) {
      const AirLatents& lat = scene.air_frames[t];
      std::vector<RenderObject> ro;
      for (int i = 0; i < lat.count.n_ceil; ++i)
        ro.push_back({lat.objects[i].size_sample, lat.objects[i].desc_sample,
                      lat.objects[i].pos_sample});
      scene.air_canvases.push_back(
          air_->generate(g, lat.count.n_tilde, ro, opt.sched.flatten_p, opt.training));
    }
  }
  return scene;
}

ElboBreakdown VtssiModel::elbo(Graph& g, const data::FrameSequence& frames,
                               const SceneResult& scene, const ForwardOptions& opt) const {
  int t_use = opt.t_use > 0 ? opt.t_use : frames.t;
  int m_eff = std::min(cfg_.M, t_use);
  const AirConfig& ac = cfg_.air;

  if (cfg_.variant == Variant::air) {
    ElboBreakdown out;
    for (int t = 0; t < t_use; ++t) {
      auto frame_terms =
          air_frame_elbo(g, frames.frame(t), scene.air_frames[t], scene.canvases[t], ac,
                         opt.sched.cnt_prior_loc, "t" + std::to_string(t + 1) + "/");
      out.log_likelihood = t == 0 ? frame_terms.log_likelihood
                                  : add(out.log_likelihood, frame_terms.log_likelihood);
      for (auto& term : frame_terms.kls) out.kls.push_back(std::move(term));
    }
    return out;
  }

  ElboBreakdown out;
  for (int t = 0; t < t_use; ++t) {
    Var ll = frame_log_prob(scene.canvases[t], frames.frame(t), ac.sigma_likelihood);
    out.log_likelihood = t == 0 ? ll : add(out.log_likelihood, ll);
  }

  DiagGaussian cnt_prior =
      DiagGaussian::constant(g, {opt.sched.cnt_prior_loc}, {ac.cnt_prior_scale});
  out.kls.push_back({"cnt", "annealed_normal", kl_divergence(scene.cnt, cnt_prior)});

  DiagGaussian size_prior =
      DiagGaussian::constant(g, {ac.size_prior_loc[0], ac.size_prior_loc[1]},
                             {ac.size_prior_scale, ac.size_prior_scale});
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const ObjectScene& obj = scene.objects[i];
    std::string op = "obj" + std::to_string(i) + "/";
    out.kls.push_back({op + "size", "size_prior", kl_divergence(obj.size, size_prior)});
    out.kls.push_back({op + "desc", "std_normal",
                       kl_divergence(obj.desc, DiagGaussian::standard(g, ac.desc_dim))});

    const auto& final_pos = obj.final_pos();
    for (int t = 0; t < t_use; ++t) {
      std::string name = op + "pos/t" + std::to_string(t + 1);
      if (t == 0) {
        out.kls.push_back({name, "std_normal",
                           kl_divergence(final_pos[0], DiagGaussian::standard(g, 2))});
      } else if (t < m_eff || !obj.has_mot) {
        // random-walk prior centered at the previous (stop-gradient) sample
        DiagGaussian prior = DiagGaussian::fixed(
            g, obj.has_mot ? obj.mot.final_pos_samples[t - 1].val()
                           : obj.pos_inferred_samples[t - 1].val(),
            cfg_.find.prior_scale);
        out.kls.push_back({name, "walk", kl_divergence(final_pos[t], prior)});
      } else {
        out.kls.push_back(
            {name, "transition",
             kl_divergence(obj.mot.final_pos[t], obj.mot.pred_pos[t - m_eff])});
      }
    }
    if (obj.has_mot) {
      for (int t = m_eff - 1; t < t_use; ++t) {
        std::string name = op + "mot/t" + std::to_string(t + 1);
        int j = t - (m_eff - 1);  // index into final_mot (M..T)
        if (j == 0) {
          out.kls.push_back(
              {name, "std_normal",
               kl_divergence(obj.mot.final_mot[0],
                             DiagGaussian::standard(g, cfg_.mot.motion_dim))});
        } else {
          out.kls.push_back({name, "transition",
                             kl_divergence(obj.mot.final_mot[j], obj.mot.pred_mot[j - 1])});
        }
      }
    }
  }
  return out;
}

VtssiModel::Prediction VtssiModel::predict(const data::FrameSequence& frames, int observe,
                                           int horizon, bool use_modes, bool one_hot_rect,
                                           Rng* rng) const {
  if (observe < 1 || observe > frames.t)
    throw std::invalid_argument("predict: bad observation horizon");
  if (observe < cfg_.K || observe < cfg_.M)
    throw std::invalid_argument("predict: need observe >= max(K, M)");
  if (horizon < observe) throw std::invalid_argument("predict: horizon < observe");
  if (cfg_.variant == Variant::air)
    throw std::invalid_argument("predict: per-frame variant cannot predict");
  if (horizon > observe && !has_mot_component(cfg_.variant))
    throw std::invalid_argument("predict: variant has no state-space model to roll out");

  Graph g;
  LatentSampler sample{use_modes ? nullptr : rng};
  ForwardOptions opt;
  opt.t_use = observe;
  opt.training = false;
  opt.one_hot_rect = one_hot_rect;
  SceneResult scene = forward(g, frames, opt, sample);

  Prediction pred;
  pred.count = scene.count;
  pred.observed = observe;

  int extra = horizon - observe;
  std::vector<std::vector<Var>> all_positions(scene.objects.size());
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const ObjectScene& obj = scene.objects[i];
    all_positions[i] = obj.render_samples();
    if (extra > 0) {
      RolloutResult roll =
          rollout(g, mot_->transition_fn(), obj.mot.final_pos_samples.back(),
                  obj.mot.final_mot_samples.back(), extra, sample);
      for (auto& p : roll.pos) all_positions[i].push_back(p);
    }
  }

  for (int t = 0; t < horizon; ++t) {
    std::vector<RenderObject> ro;
    for (std::size_t i = 0; i < scene.objects.size(); ++i)
      ro.push_back({scene.objects[i].size_sample, scene.objects[i].desc_sample,
                    all_positions[i][t]});
    // test mode: no position regularization
    Var canvas = air_->generate(g, scene.count.n_tilde, ro, 0.0, false);
    pred.generated.push_back(canvas.val());
  }

  for (const auto& obj : scene.objects)
    pred.sizes.push_back({obj.size_sample.val()[0], obj.size_sample.val()[1]});
  pred.positions.resize(scene.objects.size());
  pred.positions_find.resize(scene.objects.size());
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    for (const auto& p : all_positions[i])
      pred.positions[i].push_back({p.val()[0], p.val()[1]});
    pred.positions_find[i] = pred.positions[i];
    for (int t = 0; t < observe; ++t) {
      const Tensor& v = scene.objects[i].pos_inferred_samples[t].val();
      pred.positions_find[i][t] = {v[0], v[1]};
    }
  }
  return pred;
}

}  // namespace vts::model
