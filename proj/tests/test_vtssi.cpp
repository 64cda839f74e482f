#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "test_util.hpp"
#include "vts/vtssi.hpp"

using namespace vts;
using namespace vts::model;

namespace {

VtssiConfig tiny_config(Variant v = Variant::vtssi) {
  VtssiConfig c;
  c.frame_h = c.frame_w = 20;
  c.T = 4;
  c.K = 2;
  c.M = 2;
  c.variant = v;
  c.air.glimpse_px = 7;
  c.air.desc_dim = 6;
  c.air.cnt_conv_channels = {4, 4, 4};
  c.air.cnt_dense = {16, 12};
  c.air.pre_conv_channels = {4, 4};
  c.air.loc_lstm_units = 12;
  c.air.loc_head_units = 8;
  c.air.enc_dense = {16, 12};
  c.air.dec_dense = {12, 16};
  c.find.n_kernels = 3;
  c.find.kernel_px = 5;
  c.find.ker_dense = {8, 12};
  c.find.conv1_channels = 4;
  c.find.conv1_ksize = 5;
  c.find.conv2_channels = 6;
  c.find.conv2_ksize = 3;
  c.find.feature_dense = {12, 8};
  c.find.feature_dim = 10;
  c.find.pos_mlp_units = 8;
  c.find.pos_head_units = 6;
  c.rect.lstm_units = 8;
  c.rect.head_units = 6;
  c.mot.motion_dim = 4;
  c.mot.lstm_units = 8;
  c.mot.head_units = 6;
  c.mot.tr_units = 8;
  c.mot.tr_head_units = 6;
  return c;
}

data::FrameSequence toy_sequence(int hw, int t, std::uint64_t seed, int count = -1) {
  data::DataConfig cfg;
  cfg.frame_h = cfg.frame_w = hw;
  cfg.seq_len = t;
  cfg.count_min = count < 0 ? 1 : count;
  cfg.max_objects = count < 0 ? 2 : count;
  cfg.sprite_px_min = 5;
  cfg.sprite_px_max = 8;
  return data::gen_sequence(cfg, seed).first;
}

}  // namespace

TEST_CASE("forward is structurally consistent and counts component calls") {
  VtssiConfig cfg = tiny_config();
  VtssiModel model(cfg, 1);
  auto frames = toy_sequence(20, 4, 7);
  ad::Graph g;
  Rng noise(3);
  LatentSampler sample{&noise};
  VtssiModel::ForwardOptions opt;
  opt.t_use = 4;
  model.air_model().infer_calls = 0;
  model.find_model().derive_calls = 0;
  SceneResult scene = model.forward(g, frames, opt, sample);
  CHECK(static_cast<int>(scene.canvases.size()) == 4);
  CHECK(static_cast<int>(scene.air_frames.size()) == cfg.K);
  CHECK(model.air_model().infer_calls == cfg.K);
  CHECK(model.find_model().derive_calls == scene.count.n_ceil);
  REQUIRE(static_cast<int>(scene.objects.size()) == scene.count.n_ceil);
  for (const auto& obj : scene.objects) {
    CHECK(static_cast<int>(obj.pos_inferred.size()) == 4);
    CHECK(static_cast<int>(obj.mot.final_pos.size()) == 4);
    CHECK(static_cast<int>(obj.mot.final_mot.size()) == 4 - cfg.M + 1);
    CHECK(static_cast<int>(obj.mot.pred_pos.size()) == 4 - cfg.M);
  }
  for (const auto& c : scene.canvases) CHECK(c.val().all_finite());
}

TEST_CASE("ablation variants wire the right components") {
  auto frames = toy_sequence(20, 4, 11);
  Rng noise(5);

  for (Variant v : {Variant::air, Variant::find, Variant::rect_find, Variant::find_mot,
                    Variant::vtssi}) {
    VtssiConfig cfg = tiny_config(v);
    VtssiModel model(cfg, 2);
    ad::Graph g;
    LatentSampler sample{&noise};
    VtssiModel::ForwardOptions opt;
    opt.t_use = 4;
    model.air_model().infer_calls = 0;
    SceneResult scene = model.forward(g, frames, opt, sample);
    CHECK(static_cast<int>(scene.canvases.size()) == 4);
    if (v == Variant::air) {
      CHECK(model.air_model().infer_calls == 4);  // every frame, independently
      CHECK(scene.objects.empty());
      CHECK(static_cast<int>(scene.air_frames.size()) == 4);
    } else if (v == Variant::find || v == Variant::find_mot) {
      CHECK(model.air_model().infer_calls == 1);  // first frame only
      for (const auto& obj : scene.objects) CHECK(obj.has_mot == (v == Variant::find_mot));
    } else {
      CHECK(model.air_model().infer_calls == cfg.K);
      for (const auto& obj : scene.objects) CHECK(obj.has_mot == (v == Variant::vtssi));
      CHECK(scene.rect_weights.defined());
    }
    auto breakdown = model.elbo(g, frames, scene, opt);
    CHECK(std::isfinite(breakdown.total().scalar()));
  }
}

TEST_CASE("elbo equals a hand-assembled term sum on a 2-frame 1-object instance") {
  VtssiConfig cfg = tiny_config();
  cfg.T = 2;
  cfg.K = 1;
  cfg.M = 1;
  VtssiModel model(cfg, 3);
  auto frames = toy_sequence(20, 2, 13, 1);
  ad::Graph g;
  Rng noise(9);
  LatentSampler sample{&noise};
  VtssiModel::ForwardOptions opt;
  opt.t_use = 2;
  opt.sched.cnt_prior_loc = -2.0;
  SceneResult scene = model.forward(g, frames, opt, sample);
  auto breakdown = model.elbo(g, frames, scene, opt);

  // manual assembly: likelihood terms plus one KL per latent
  double manual = 0.0;
  for (int t = 0; t < 2; ++t)
    manual +=
        frame_log_prob(scene.canvases[t], frames.frame(t), cfg.air.sigma_likelihood)
            .scalar();
  DiagGaussian cnt_prior = DiagGaussian::constant(g, {-2.0}, {cfg.air.cnt_prior_scale});
  manual -= kl_divergence(scene.cnt, cnt_prior).scalar();
  DiagGaussian size_prior = DiagGaussian::constant(
      g, {cfg.air.size_prior_loc[0], cfg.air.size_prior_loc[1]},
      {cfg.air.size_prior_scale, cfg.air.size_prior_scale});
  for (const auto& obj : scene.objects) {
    manual -= kl_divergence(obj.size, size_prior).scalar();
    manual -= kl_divergence(obj.desc, DiagGaussian::standard(g, cfg.air.desc_dim)).scalar();
    // position at t=1: standard normal prior
    manual -= kl_divergence(obj.mot.final_pos[0], DiagGaussian::standard(g, 2)).scalar();
    // position at t=2 (M+1): predicted prior
    manual -= kl_divergence(obj.mot.final_pos[1], obj.mot.pred_pos[0]).scalar();
    // motion at M: standard normal; at M+1: predicted prior
    manual -=
        kl_divergence(obj.mot.final_mot[0], DiagGaussian::standard(g, cfg.mot.motion_dim))
            .scalar();
    manual -= kl_divergence(obj.mot.final_mot[1], obj.mot.pred_mot[0]).scalar();
  }
  CHECK(breakdown.total().scalar() == doctest::Approx(manual).epsilon(1e-5));
}

TEST_CASE("golden audit: one KL per latent with the right prior kinds") {
  VtssiConfig cfg = tiny_config();  // T=4, K=2, M=2
  VtssiModel model(cfg, 4);
  auto frames = toy_sequence(20, 4, 17);
  ad::Graph g;
  Rng noise(11);
  LatentSampler sample{&noise};
  VtssiModel::ForwardOptions opt;
  opt.t_use = 4;
  SceneResult scene = model.forward(g, frames, opt, sample);
  auto breakdown = model.elbo(g, frames, scene, opt);

  std::vector<std::pair<std::string, std::string>> golden{{"cnt", "annealed_normal"}};
  for (int i = 0; i < scene.count.n_ceil; ++i) {
    std::string op = "obj" + std::to_string(i) + "/";
    golden.push_back({op + "size", "size_prior"});
    golden.push_back({op + "desc", "std_normal"});
    golden.push_back({op + "pos/t1", "std_normal"});
    golden.push_back({op + "pos/t2", "walk"});        // t = 2..M
    golden.push_back({op + "pos/t3", "transition"});  // t = M+1..T
    golden.push_back({op + "pos/t4", "transition"});
    golden.push_back({op + "mot/t2", "std_normal"});  // t = M
    golden.push_back({op + "mot/t3", "transition"});
    golden.push_back({op + "mot/t4", "transition"});
  }
  REQUIRE(breakdown.kls.size() == golden.size());
  std::set<std::string> seen;
  for (std::size_t i = 0; i < golden.size(); ++i) {
    bool found = false;
    for (const auto& term : breakdown.kls)
      if (term.name == golden[i].first && term.prior == golden[i].second) found = true;
    CHECK_MESSAGE(found, "missing term ", golden[i].first, " [", golden[i].second, "]");
  }
  for (const auto& term : breakdown.kls) {
    CHECK(!seen.contains(term.name));  // exactly one KL per latent
    seen.insert(term.name);
  }
}

TEST_CASE("posteriors constructed equal to priors zero every KL") {
  VtssiConfig cfg = tiny_config();
  VtssiModel model(cfg, 5);
  auto frames = toy_sequence(20, 4, 19, 1);
  ad::Graph g;

  // hand-built scene whose every posterior equals the corresponding prior
  SceneResult scene;
  scene.cnt = DiagGaussian::constant(g, {-2.0}, {cfg.air.cnt_prior_scale});
  scene.cnt_sample = mode_var(scene.cnt);
  scene.count = count_from_latent(scene.cnt_sample, cfg.air.max_objects);
  REQUIRE(scene.count.n_ceil == 1);

  ObjectScene obj;
  obj.size = DiagGaussian::constant(g, {cfg.air.size_prior_loc[0], cfg.air.size_prior_loc[1]},
                                    {cfg.air.size_prior_scale, cfg.air.size_prior_scale});
  obj.desc = DiagGaussian::standard(g, cfg.air.desc_dim);
  obj.size_sample = mode_var(obj.size);
  obj.desc_sample = mode_var(obj.desc);
  obj.has_mot = true;

  // t=1: the standard-normal prior itself; t=2: walk prior at the previous
  // mode; t=3,4: make prediction and posterior the same object
  obj.pos_inferred.push_back(DiagGaussian::standard(g, 2));
  obj.mot.final_pos.push_back(obj.pos_inferred[0]);
  obj.mot.final_pos_samples.push_back(mode_var(obj.pos_inferred[0]));
  DiagGaussian walk = DiagGaussian::fixed(g, obj.mot.final_pos_samples[0].val(),
                                          cfg.find.prior_scale);
  obj.mot.final_pos.push_back(walk);
  obj.mot.final_pos_samples.push_back(mode_var(walk));
  for (int t = 2; t < 4; ++t) {
    DiagGaussian pred = DiagGaussian::constant(g, {0.1 * t, 0.0}, {0.2, 0.2});
    obj.mot.pred_pos.push_back(pred);
    obj.mot.final_pos.push_back(pred);
    obj.mot.final_pos_samples.push_back(mode_var(pred));
  }
  DiagGaussian mot0 = DiagGaussian::standard(g, cfg.mot.motion_dim);
  obj.mot.final_mot.push_back(mot0);
  obj.mot.final_mot_samples.push_back(mode_var(mot0));
  for (int j = 0; j < 2; ++j) {
    DiagGaussian predm =
        DiagGaussian::constant(g, std::vector<double>(cfg.mot.motion_dim, 0.05 * j),
                               std::vector<double>(cfg.mot.motion_dim, 0.5));
    obj.mot.pred_mot.push_back(predm);
    obj.mot.final_mot.push_back(predm);
    obj.mot.final_mot_samples.push_back(mode_var(predm));
  }
  scene.objects.push_back(std::move(obj));
  for (int t = 0; t < 4; ++t) {
    std::vector<RenderObject> ro{{scene.objects[0].size_sample,
                                  scene.objects[0].desc_sample,
                                  scene.objects[0].mot.final_pos_samples[t]}};
    scene.canvases.push_back(
        model.air_model().generate(g, scene.count.n_tilde, ro, 0.0, false));
  }

  VtssiModel::ForwardOptions opt;
  opt.t_use = 4;
  opt.sched.cnt_prior_loc = -2.0;
  auto breakdown = model.elbo(g, frames, scene, opt);
  for (const auto& term : breakdown.kls) CHECK(term.kl.scalar() == 0.0);
  CHECK(breakdown.total().scalar() ==
        doctest::Approx(breakdown.log_likelihood.scalar()).epsilon(1e-12));
}

TEST_CASE("doubling the likelihood scale changes only the likelihood term") {
  VtssiConfig cfg1 = tiny_config();
  VtssiConfig cfg2 = cfg1;
  cfg2.air.sigma_likelihood = 2.0 * cfg1.air.sigma_likelihood;
  // identical parameter init and identical noise stream
  VtssiModel m1(cfg1, 6), m2(cfg2, 6);
  auto frames = toy_sequence(20, 4, 23);
  VtssiModel::ForwardOptions opt;
  opt.t_use = 4;

  ad::Graph g1, g2;
  Rng n1(31), n2(31);
  LatentSampler s1{&n1}, s2{&n2};
  SceneResult sc1 = m1.forward(g1, frames, opt, s1);
  SceneResult sc2 = m2.forward(g2, frames, opt, s2);
  auto e1 = m1.elbo(g1, frames, sc1, opt);
  auto e2 = m2.elbo(g2, frames, sc2, opt);

  // same latents, so the KL sums agree and the likelihood difference is the
  // closed-form gaussian log-density difference
  CHECK(e1.kl_sum() == doctest::Approx(e2.kl_sum()).epsilon(1e-9));
  double sse = 0.0;
  for (int t = 0; t < 4; ++t) {
    const Tensor& c = sc1.canvases[t].val();
    Tensor f = frames.frame(t);
    for (int i = 0; i < c.size(); ++i) sse += (c[i] - f[i]) * (c[i] - f[i]);
  }
  double n_pix = 4.0 * 20 * 20;
  double s_lo = cfg1.air.sigma_likelihood, s_hi = cfg2.air.sigma_likelihood;
  double want = -n_pix * std::log(s_lo / s_hi) -
                sse * (0.5 / (s_lo * s_lo) - 0.5 / (s_hi * s_hi));
  CHECK(e1.log_likelihood.scalar() - e2.log_likelihood.scalar() ==
        doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("loss is invariant to object slot permutation at generation") {
  VtssiConfig cfg = tiny_config();
  VtssiModel model(cfg, 7);
  ad::Graph g;
  Rng rng(37);
  std::vector<RenderObject> objs;
  for (int i = 0; i < 2; ++i)
    objs.push_back({g.constant(Tensor::from({0.35, 0.3})),
                    g.constant(rng.normal_tensor({cfg.air.desc_dim})),
                    g.constant(rng.uniform_tensor({2}, -0.5, 0.5))});
  std::vector<RenderObject> swapped{objs[1], objs[0]};
  ad::Var c1 = model.air_model().generate(g, g.constant_scalar(2.0 - 1e-12), objs, 0.0, false);
  ad::Var c2 =
      model.air_model().generate(g, g.constant_scalar(2.0 - 1e-12), swapped, 0.0, false);
  CHECK(testutil::max_abs_diff(c1.val(), c2.val()) < 1e-9);
}

TEST_CASE("gradients of the full elbo are finite for every variant") {
  auto frames = toy_sequence(20, 4, 29);
  for (Variant v : {Variant::air, Variant::find, Variant::rect_find, Variant::find_mot,
                    Variant::vtssi}) {
    VtssiConfig cfg = tiny_config(v);
    VtssiModel model(cfg, 8);
    ad::Graph g;
    Rng noise(41);
    LatentSampler sample{&noise};
    VtssiModel::ForwardOptions opt;
    opt.t_use = 4;
    opt.training = true;
    opt.sched.flatten_p = 0.5;
    SceneResult scene = model.forward(g, frames, opt, sample);
    auto breakdown = model.elbo(g, frames, scene, opt);
    ad::Var loss = ad::neg(breakdown.total());
    CHECK(std::isfinite(loss.scalar()));
    g.backward(loss);
    GradBuffer buf;
    buf.init(model.params());
    g.accumulate_param_grads(buf);
    CHECK(buf.all_finite());
  }
}

TEST_CASE("predict: pure inference at horizon == observe, deterministic modes") {
  VtssiConfig cfg = tiny_config();
  VtssiModel model(cfg, 9);
  auto frames = toy_sequence(20, 4, 31, 1);
  auto p1 = model.predict(frames, 2, 4, true, false, nullptr);
  auto p2 = model.predict(frames, 2, 4, true, false, nullptr);
  REQUIRE(p1.positions.size() == p2.positions.size());
  for (std::size_t i = 0; i < p1.positions.size(); ++i)
    for (std::size_t t = 0; t < p1.positions[i].size(); ++t) {
      CHECK(p1.positions[i][t][0] == p2.positions[i][t][0]);
      CHECK(p1.positions[i][t][1] == p2.positions[i][t][1]);
    }
  CHECK(static_cast<int>(p1.generated.size()) == 4);

  auto inf_only = model.predict(frames, 4, 4, true, false, nullptr);
  for (const auto& track : inf_only.positions)
    CHECK(static_cast<int>(track.size()) == 4);

  CHECK_THROWS(model.predict(frames, 1, 4, true, false, nullptr));   // observe < max(K, M)
  CHECK_THROWS(model.predict(frames, 4, 3, true, false, nullptr));   // horizon < observe
  VtssiConfig cfg_nf = tiny_config(Variant::rect_find);
  VtssiModel no_mot(cfg_nf, 10);
  CHECK_THROWS(no_mot.predict(frames, 2, 4, true, false, nullptr));  // no rollout model
}

TEST_CASE("schedules reproduce the documented values") {
  TrainerConfig t;  // defaults
  // curriculum
  CHECK(curriculum_len(0, Variant::vtssi, t, 20) == 6);
  CHECK(curriculum_len(59999, Variant::vtssi, t, 20) == 7);
  CHECK(curriculum_len(60000, Variant::vtssi, t, 20) == 8);
  CHECK(curriculum_len(0, Variant::air, t, 20) == 1);
  CHECK(curriculum_len(20000, Variant::air, t, 20) == 2);
  CHECK(curriculum_len(1000000, Variant::vtssi, t, 20) == 20);  // capped at T
  // learning rate
  CHECK(learning_rate(0, t) == 1e-4);
  CHECK(learning_rate(200000, t) == 1e-4);
  CHECK(learning_rate(220000, t) == doctest::Approx(9e-5).epsilon(1e-12));
  CHECK(learning_rate(100000000, t) == 1e-5);
  // count prior annealing
  AirConfig a;
  CHECK(cnt_prior_loc(0, a) == -2.0);
  CHECK(cnt_prior_loc(100000, a) == -2.0);
  CHECK(cnt_prior_loc(150000, a) == doctest::Approx(-2.5));
  CHECK(cnt_prior_loc(200000, a) == -3.0);
  CHECK(cnt_prior_loc(500000, a) == -3.0);
  // mask flattening
  CHECK(flatten_p(0, a) == 0.0);
  CHECK(flatten_p(999, a) == 0.0);
  CHECK(flatten_p(1000, a) == doctest::Approx(0.1));
  CHECK(flatten_p(5000, a) == doctest::Approx(0.5));
  CHECK(flatten_p(2000000, a) == 100.0);
}

TEST_CASE("config json round-trips") {
  VtssiConfig cfg = tiny_config(Variant::find_mot);
  cfg.trainer.batch_size = 12;
  cfg.trainer.seed = 77;
  std::string text = cfg.to_json();
  VtssiConfig back = VtssiConfig::from_json(text);
  CHECK(back.variant == Variant::find_mot);
  CHECK(back.trainer.batch_size == 12);
  CHECK(back.trainer.seed == 77);
  CHECK(back.air.glimpse_px == cfg.air.glimpse_px);
  CHECK(back.find.n_kernels == cfg.find.n_kernels);
  CHECK(back.to_json() == text);
}
