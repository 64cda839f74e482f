#include "vts/rect.hpp"

#include <stdexcept>

namespace vts::model {

using namespace ad;

RectModel::RectModel(ParamStore& store, const RectConfig& cfg, int max_objects,
                     int desc_dim, Rng& rng)
    : cfg_(cfg), n_(max_objects), d_(desc_dim) {
  // per-step input: (loc, scale) of cnt plus N sizes and N descriptions
  int in = 2 + n_ * 4 + n_ * 2 * d_;
  fwd_ = LstmCell(store, "rect/fwd", in, cfg.lstm_units, rng);
  bwd_ = LstmCell(store, "rect/bwd", in, cfg.lstm_units, rng);
  head1_ = Dense(store, "rect/head1", 2 * cfg.lstm_units, cfg.head_units, rng);
  head2_ = Dense(store, "rect/head2", cfg.head_units, cfg.head_units, rng);
  out_ = Dense(store, "rect/out", cfg.head_units, 1, rng);
}

RectModel::Result RectModel::rectify(Graph& g, std::span<const AirLatents> intermediates,
                                     const LatentSampler& sample, bool one_hot) const {
  if (intermediates.empty()) throw std::invalid_argument("rectify: K = 0");
  int k = static_cast<int>(intermediates.size());

  std::vector<Var> inputs;
  inputs.reserve(static_cast<std::size_t>(k));
  for (const auto& lat : intermediates) {
    if (static_cast<int>(lat.objects.size()) != n_)
      throw std::invalid_argument("rectify: intermediate latents must have N slots");
    std::vector<Var> parts{lat.cnt.loc, lat.cnt.scale};
    for (const auto& obj : lat.objects) {
      parts.push_back(obj.size.loc);
      parts.push_back(obj.size.scale);
    }
    for (const auto& obj : lat.objects) {
      parts.push_back(obj.desc.loc);
      parts.push_back(obj.desc.scale);
    }
    inputs.push_back(concat(parts));
  }

  auto fs = fwd_.zero_state(g);
  auto bs = bwd_.zero_state(g);
  std::vector<Var> fh(static_cast<std::size_t>(k)), bh(static_cast<std::size_t>(k));
  for (int t = 0; t < k; ++t) {
    fs = fwd_.step(g, inputs[static_cast<std::size_t>(t)], fs);
    fh[static_cast<std::size_t>(t)] = fs.h;
  }
  for (int t = k - 1; t >= 0; --t) {
    bs = bwd_.step(g, inputs[static_cast<std::size_t>(t)], bs);
    bh[static_cast<std::size_t>(t)] = bs.h;
  }
  std::vector<Var> logits;
  logits.reserve(static_cast<std::size_t>(k));
  for (int t = 0; t < k; ++t) {
    std::vector<Var> hh{fh[static_cast<std::size_t>(t)], bh[static_cast<std::size_t>(t)]};
    Var o = vrelu(head1_(g, concat(hh)));
    o = vrelu(head2_(g, o));
    logits.push_back(out_(g, o));
  }
  Var w = softmax(concat(logits));
  if (one_hot) {
    Tensor oh({k});
    int best = 0;
    for (int i = 1; i < k; ++i)
      if (w.val()[i] > w.val()[best]) best = i;
    oh[best] = 1.0;
    w = g.constant(oh);
  }

  Result res;
  res.weights = w;
  std::vector<DiagGaussian> cnts;
  for (const auto& lat : intermediates) cnts.push_back(lat.cnt);
  res.cnt = fuse_weighted(cnts, w);
  res.cnt_sample = sample(res.cnt);
  res.count = count_from_latent(res.cnt_sample, n_);
  for (int i = 0; i < n_; ++i) {
    std::vector<DiagGaussian> sizes, descs;
    for (const auto& lat : intermediates) {
      sizes.push_back(lat.objects[static_cast<std::size_t>(i)].size);
      descs.push_back(lat.objects[static_cast<std::size_t>(i)].desc);
    }
    res.size.push_back(fuse_weighted(sizes, w));
    res.desc.push_back(fuse_weighted(descs, w));
  }
  return res;
}

}  // namespace vts::model
