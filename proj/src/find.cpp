#include "vts/find.hpp"

#include <stdexcept>

namespace vts::model {

using namespace ad;

namespace {
int conv_valid(int in, int k) { return in - k + 1; }
}  // namespace

FindModel::FindModel(ParamStore& store, const FindConfig& cfg, int desc_dim, int frame_h,
                     int frame_w, Rng& rng)
    : cfg_(cfg), h_(frame_h), w_(frame_w) {
  ker_fc1_ = Dense(store, "find/ker/fc1", desc_dim, cfg.ker_dense[0], rng);
  ker_fc2_ = Dense(store, "find/ker/fc2", cfg.ker_dense[0], cfg.ker_dense[1], rng);
  ker_out_ = Dense(store, "find/ker/out", cfg.ker_dense[1],
                   cfg.n_kernels * cfg.kernel_px * cfg.kernel_px, rng);

  conv1_ = Conv2d(store, "find/conv1", cfg.n_kernels, cfg.conv1_channels, cfg.conv1_ksize,
                  0, rng);
  conv2_ = Conv2d(store, "find/conv2", cfg.conv1_channels, cfg.conv2_channels,
                  cfg.conv2_ksize, 0, rng);
  bank_bias_ = store.create("find/bank_bias", {cfg.n_kernels});

  // bank conv keeps frame size ("same" padding), then pool / conv1 / pool /
  // conv2, all valid
  int fh = frame_h / 2, fw = frame_w / 2;
  fh = conv_valid(fh, cfg.conv1_ksize) / 2;
  fw = conv_valid(fw, cfg.conv1_ksize) / 2;
  fh = conv_valid(fh, cfg.conv2_ksize);
  fw = conv_valid(fw, cfg.conv2_ksize);
  int flat = cfg.conv2_channels * fh * fw;
  fc1_ = Dense(store, "find/fc1", flat, cfg.feature_dense[0], rng);
  fc2_ = Dense(store, "find/fc2", cfg.feature_dense[0], cfg.feature_dense[1], rng);
  feat_out_ = Dense(store, "find/feat_out", cfg.feature_dense[1], cfg.feature_dim, rng);

  pos_fc1_ = Dense(store, "find/pos/fc1", cfg.feature_dim + 2, cfg.pos_mlp_units, rng);
  pos_fc2_ = Dense(store, "find/pos/fc2", cfg.pos_mlp_units, cfg.pos_mlp_units, rng);
  loc_head_ = Dense(store, "find/pos/loc_head", cfg.pos_mlp_units, cfg.pos_head_units, rng);
  scale_head_ =
      Dense(store, "find/pos/scale_head", cfg.pos_mlp_units, cfg.pos_head_units, rng);
  loc_out_ = Dense(store, "find/pos/loc_out", cfg.pos_head_units, 2, rng);
  scale_out_ = Dense(store, "find/pos/scale_out", cfg.pos_head_units, 2, rng, -2.0);
}

Var FindModel::derive_kernels(Graph& g, Var desc_sample) const {
  ++derive_calls;
  Var k = vrelu(ker_fc1_(g, desc_sample));
  k = vrelu(ker_fc2_(g, k));
  k = ker_out_(g, k);
  return reshape(k, {cfg_.n_kernels, 1, cfg_.kernel_px, cfg_.kernel_px});
}

DiagGaussian FindModel::step(Graph& g, const Tensor& frame, Var kernel_bank,
                             Var prev_pos_sample) const {
  if (frame.ndim() != 2 || frame.dim(0) != h_ || frame.dim(1) != w_)
    throw std::invalid_argument("find_step: frame shape mismatch");
  Tensor frame3 = frame;
  frame3.shape = {1, h_, w_};
  Var x = g.constant(frame3);
  int pad_lo = (cfg_.kernel_px - 1) / 2;
  int pad_hi = cfg_.kernel_px - 1 - pad_lo;
  Var f = conv2d(x, kernel_bank, pad_lo, pad_hi, pad_lo, pad_hi);
  f = vrelu(bias_channels(f, g.param(*bank_bias_)));
  f = maxpool2(f);
  f = vrelu(conv1_(g, f));
  f = maxpool2(f);
  f = vrelu(conv2_(g, f));
  f = reshape(f, {static_cast<int>(f.size())});
  f = vrelu(fc1_(g, f));
  f = vrelu(fc2_(g, f));
  f = feat_out_(g, f);

  std::vector<Var> parts{f, prev_pos_sample};
  Var p = vtanh(pos_fc1_(g, concat(parts)));
  p = vtanh(pos_fc2_(g, p));
  Var loc = vtanh(loc_out_(g, vtanh(loc_head_(g, p))));
  Var scale = positive_scale(scale_out_(g, vtanh(scale_head_(g, p))));
  return DiagGaussian(loc, scale);
}

FindModel::Track FindModel::track(Graph& g, const std::vector<Tensor>& frames, int t0,
                                  int t1, Var kernel_bank, Var init_pos_sample,
                                  const LatentSampler& sample) const {
  Track tr;
  Var prev = init_pos_sample;
  for (int t = t0; t < t1; ++t) {
    DiagGaussian pos = step(g, frames[static_cast<std::size_t>(t)], kernel_bank, prev);
    Var s = sample(pos);
    tr.pos.push_back(pos);
    tr.samples.push_back(s);
    prev = s;
  }
  return tr;
}

}  // namespace vts::model
