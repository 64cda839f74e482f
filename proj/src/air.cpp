#include "vts/air.hpp"

#include <cmath>
#include <stdexcept>

namespace vts::model {

using namespace ad;

Var positive_scale(Var raw) { return add_scalar(vsoftplus(raw), 1e-4); }

std::vector<Var> split_count(Var n_tilde, int max_objects) {
  double v = n_tilde.scalar();
  if (!(v > 0.0) || !(v < static_cast<double>(max_objects)))
    throw std::invalid_argument("split_count: n_tilde outside (0, N)");
  Graph& g = *n_tilde.graph();
  std::vector<Var> steps;
  steps.reserve(static_cast<std::size_t>(max_objects));
  int whole = static_cast<int>(std::floor(v));
  for (int i = 0; i < whole; ++i) steps.push_back(g.constant_scalar(1.0));
  if (static_cast<double>(whole) != v)
    steps.push_back(add_scalar(n_tilde, -static_cast<double>(whole)));
  while (static_cast<int>(steps.size()) < max_objects)
    steps.push_back(g.constant_scalar(0.0));
  return steps;
}

CountInfo count_from_latent(Var cnt_sample, int max_objects) {
  if (cnt_sample.size() != 1)
    throw std::invalid_argument("count_from_latent: cnt sample must be scalar");
  CountInfo info;
  // keep the float count strictly inside (0, N) so downstream splitting stays
  // well defined even if the sigmoid saturates numerically
  Var n_tilde = mul_scalar(vsigmoid(cnt_sample), static_cast<double>(max_objects));
  info.n_tilde = clamp_min(n_tilde, 1e-9);
  double v = info.n_tilde.scalar();
  info.n_ceil = std::max(1, static_cast<int>(std::ceil(v)));
  info.n_ceil = std::min(info.n_ceil, max_objects);
  info.rounded = static_cast<int>(std::lround(v));
  return info;
}

AirModel::AirModel(ParamStore& store, const AirConfig& cfg, int frame_h, int frame_w,
                   Rng& rng)
    : cfg_(cfg), h_(frame_h), w_(frame_w) {
  auto conv_out = [](int in, int k, int pad) { return in + 2 * pad - k + 1; };

  cnt_conv1_ = Conv2d(store, "air/cnt/conv1", 1, cfg.cnt_conv_channels[0],
                      cfg.cnt_conv_ksize[0], cfg.frame_pad, rng);
  cnt_conv2_ = Conv2d(store, "air/cnt/conv2", cfg.cnt_conv_channels[0],
                      cfg.cnt_conv_channels[1], cfg.cnt_conv_ksize[1], 0, rng);
  cnt_conv3_ = Conv2d(store, "air/cnt/conv3", cfg.cnt_conv_channels[1],
                      cfg.cnt_conv_channels[2], cfg.cnt_conv_ksize[2], 0, rng);
  int ch = conv_out(frame_h, cfg.cnt_conv_ksize[0], cfg.frame_pad) / 2;
  int cw = conv_out(frame_w, cfg.cnt_conv_ksize[0], cfg.frame_pad) / 2;
  ch = conv_out(ch, cfg.cnt_conv_ksize[1], 0) / 2;
  cw = conv_out(cw, cfg.cnt_conv_ksize[1], 0) / 2;
  ch = conv_out(ch, cfg.cnt_conv_ksize[2], 0);
  cw = conv_out(cw, cfg.cnt_conv_ksize[2], 0);
  int cnt_flat = cfg.cnt_conv_channels[2] * ch * cw;
  cnt_fc1_ = Dense(store, "air/cnt/fc1", cnt_flat, cfg.cnt_dense[0], rng);
  cnt_fc2_ = Dense(store, "air/cnt/fc2", cfg.cnt_dense[0], cfg.cnt_dense[1], rng);
  cnt_head_ = Dense(store, "air/cnt/head", cfg.cnt_dense[1], 2, rng);

  pre_conv1_ = Conv2d(store, "air/pre/conv1", 1, cfg.pre_conv_channels[0],
                      cfg.pre_conv_ksize, 0, rng);
  pre_conv2_ = Conv2d(store, "air/pre/conv2", cfg.pre_conv_channels[0],
                      cfg.pre_conv_channels[1], cfg.pre_conv_ksize, 0, rng);
  int ph = conv_out(frame_h, cfg.pre_conv_ksize, 0) / 2;
  int pw = conv_out(frame_w, cfg.pre_conv_ksize, 0) / 2;
  ph = conv_out(ph, cfg.pre_conv_ksize, 0) / 2;
  pw = conv_out(pw, cfg.pre_conv_ksize, 0) / 2;
  int pre_flat = cfg.pre_conv_channels[1] * ph * pw;

  loc_lstm_ = LstmCell(store, "air/loc/lstm", pre_flat, cfg.loc_lstm_units, rng);
  size_loc_head_ = Dense(store, "air/loc/size_loc", cfg.loc_lstm_units, cfg.loc_head_units, rng);
  size_scale_head_ =
      Dense(store, "air/loc/size_scale", cfg.loc_lstm_units, cfg.loc_head_units, rng);
  pos_loc_head_ = Dense(store, "air/loc/pos_loc", cfg.loc_lstm_units, cfg.loc_head_units, rng);
  pos_scale_head_ =
      Dense(store, "air/loc/pos_scale", cfg.loc_lstm_units, cfg.loc_head_units, rng);
  size_loc_out_ = Dense(store, "air/loc/size_loc_out", cfg.loc_head_units, 2, rng);
  size_scale_out_ =
      Dense(store, "air/loc/size_scale_out", cfg.loc_head_units, 2, rng, cfg.scale_head_bias);
  pos_loc_out_ = Dense(store, "air/loc/pos_loc_out", cfg.loc_head_units, 2, rng);
  pos_scale_out_ =
      Dense(store, "air/loc/pos_scale_out", cfg.loc_head_units, 2, rng, cfg.scale_head_bias);

  int g2 = cfg.glimpse_px * cfg.glimpse_px;
  enc_fc1_ = Dense(store, "air/enc/fc1", g2, cfg.enc_dense[0], rng);
  enc_fc2_ = Dense(store, "air/enc/fc2", cfg.enc_dense[0], cfg.enc_dense[1], rng);
  enc_head_ = Dense(store, "air/enc/head", cfg.enc_dense[1], 2 * cfg.desc_dim, rng);
  dec_fc1_ = Dense(store, "air/dec/fc1", cfg.desc_dim, cfg.dec_dense[0], rng);
  dec_fc2_ = Dense(store, "air/dec/fc2", cfg.dec_dense[0], cfg.dec_dense[1], rng);
  dec_head_ = Dense(store, "air/dec/head", cfg.dec_dense[1], g2, rng);
}

AirLatents AirModel::infer(Graph& g, const Tensor& frame, const LatentSampler& sample,
                           bool training) const {
  ++infer_calls;
  if (frame.ndim() != 2 || frame.dim(0) != h_ || frame.dim(1) != w_)
    throw std::invalid_argument("air_infer: frame shape mismatch");
  Tensor frame3 = frame;
  frame3.shape = {1, h_, w_};
  Var x = g.constant(frame3);

  // counting head
  Var c = vrelu(cnt_conv1_(g, x));
  c = maxpool2(c);
  c = vrelu(cnt_conv2_(g, c));
  c = maxpool2(c);
  c = vrelu(cnt_conv3_(g, c));
  c = reshape(c, {static_cast<int>(c.size())});
  c = vrelu(cnt_fc1_(g, c));
  c = vrelu(cnt_fc2_(g, c));
  Var cnt_out = cnt_head_(g, c);
  AirLatents lat;
  lat.cnt = DiagGaussian(slice(cnt_out, 0, 1), positive_scale(slice(cnt_out, 1, 1)));
  lat.cnt_sample = sample(lat.cnt);
  lat.count = count_from_latent(lat.cnt_sample, cfg_.max_objects);

  // frame pre-processing, fed repeatedly to the localization recurrence
  Var f = vrelu(pre_conv1_(g, x));
  f = maxpool2(f);
  f = vrelu(pre_conv2_(g, f));
  f = maxpool2(f);
  f = reshape(f, {static_cast<int>(f.size())});

  Var frame_var = g.constant(frame);
  auto state = loc_lstm_.zero_state(g);
  for (int i = 0; i < cfg_.max_objects; ++i) {
    state = loc_lstm_.step(g, f, state);
    Var h = state.h;
    if (training && sample.rng != nullptr)
      h = dropout(h, cfg_.dropout, *sample.rng, true);
    ObjectLatents obj;
    Var size_loc = vsigmoid(size_loc_out_(g, vrelu(size_loc_head_(g, h))));
    Var size_scale = positive_scale(size_scale_out_(g, vrelu(size_scale_head_(g, h))));
    Var pos_loc = vtanh(pos_loc_out_(g, vrelu(pos_loc_head_(g, h))));
    Var pos_scale = positive_scale(pos_scale_out_(g, vrelu(pos_scale_head_(g, h))));
    obj.size = DiagGaussian(size_loc, size_scale);
    obj.pos = DiagGaussian(pos_loc, pos_scale);
    // sampled extents must stay positive for the attention window
    obj.size_sample = clamp_min(sample(obj.size), 0.02);
    obj.pos_sample = sample(obj.pos);

    obj.glimpse = geom::st_extract(frame_var, obj.size_sample, obj.pos_sample,
                                   cfg_.glimpse_px);
    Var e = reshape(obj.glimpse, {cfg_.glimpse_px * cfg_.glimpse_px});
    e = vrelu(enc_fc1_(g, e));
    e = vrelu(enc_fc2_(g, e));
    Var enc_out = enc_head_(g, e);
    obj.desc = DiagGaussian(slice(enc_out, 0, cfg_.desc_dim),
                            positive_scale(slice(enc_out, cfg_.desc_dim, cfg_.desc_dim)));
    obj.desc_sample = sample(obj.desc);
    lat.objects.push_back(std::move(obj));
  }
  return lat;
}

Var AirModel::decode_glimpse(Graph& g, Var desc_sample) const {
  Var d = vrelu(dec_fc1_(g, desc_sample));
  d = vrelu(dec_fc2_(g, d));
  return vsigmoid(reshape(dec_head_(g, d), {cfg_.glimpse_px, cfg_.glimpse_px}));
}

Var AirModel::generate(Graph& g, Var n_tilde, std::span<const RenderObject> objects,
                       double flatten_p_now, bool training) const {
  auto steps = split_count(n_tilde, cfg_.max_objects);
  Var canvas = g.constant(Tensor({h_, w_}));
  std::optional<Var> mask;
  if (training)
    mask = g.constant(
        geom::regularization_kernel(cfg_.glimpse_px, cfg_.sigma_reg_kernel, flatten_p_now));
  for (std::size_t i = 0; i < objects.size() && i < steps.size(); ++i) {
    if (steps[i].val()[0] == 0.0) continue;  // past-the-count slots contribute nothing
    Var glimpse = decode_glimpse(g, objects[i].desc_sample);
    if (mask) glimpse = mul(glimpse, *mask);
    glimpse = broadcast_mul(steps[i], glimpse);
    Var partial = geom::st_paste(glimpse, objects[i].size_sample, objects[i].pos_sample,
                                 h_, w_);
    canvas = add(canvas, partial);
  }
  return canvas;
}

Var ElboBreakdown::total() const {
  Var t = log_likelihood;
  for (const auto& term : kls) t = sub(t, term.kl);
  return t;
}

double ElboBreakdown::kl_sum() const {
  double s = 0.0;
  for (const auto& term : kls) s += term.kl.scalar();
  return s;
}

ElboBreakdown air_frame_elbo(Graph& g, const Tensor& frame, const AirLatents& lat,
                             Var canvas, const AirConfig& cfg, double cnt_prior_loc_now,
                             const std::string& prefix) {
  ElboBreakdown out;
  out.log_likelihood = frame_log_prob(canvas, frame, cfg.sigma_likelihood);
  DiagGaussian cnt_prior =
      DiagGaussian::constant(g, {cnt_prior_loc_now}, {cfg.cnt_prior_scale});
  out.kls.push_back({prefix + "cnt", "annealed_normal", kl_divergence(lat.cnt, cnt_prior)});
  DiagGaussian size_prior = DiagGaussian::constant(
      g, {cfg.size_prior_loc[0], cfg.size_prior_loc[1]},
      {cfg.size_prior_scale, cfg.size_prior_scale});
  for (int i = 0; i < lat.count.n_ceil; ++i) {
    const auto& obj = lat.objects[static_cast<std::size_t>(i)];
    std::string op = prefix + "obj" + std::to_string(i) + "/";
    out.kls.push_back({op + "size", "size_prior", kl_divergence(obj.size, size_prior)});
    out.kls.push_back(
        {op + "pos", "std_normal", kl_divergence(obj.pos, DiagGaussian::standard(g, 2))});
    out.kls.push_back({op + "desc", "std_normal",
                       kl_divergence(obj.desc, DiagGaussian::standard(g, cfg.desc_dim))});
  }
  return out;
}

}  // namespace vts::model
