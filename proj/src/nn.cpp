#include "vts/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace vts {

Param* ParamStore::create(const std::string& name, std::vector<int> shape) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate param: " + name);
  auto p = std::make_unique<Param>();
  p->name = name;
  p->value = Tensor(std::move(shape));
  p->index = static_cast<int>(items_.size());
  items_.push_back(std::move(p));
  return items_.back().get();
}

Param* ParamStore::find(const std::string& name) const {
  for (const auto& p : items_)
    if (p->name == name) return p.get();
  return nullptr;
}

std::int64_t ParamStore::total_size() const {
  std::int64_t n = 0;
  for (const auto& p : items_) n += p->value.size();
  return n;
}

void GradBuffer::init(const ParamStore& store) {
  grads.clear();
  grads.reserve(store.count());
  for (std::size_t i = 0; i < store.count(); ++i)
    grads.push_back(Tensor::zeros_like(store.at(i).value));
}

void GradBuffer::zero() {
  for (auto& g : grads) g.fill(0.0);
}

void GradBuffer::add(const GradBuffer& other) {
  for (std::size_t i = 0; i < grads.size(); ++i)
    for (std::size_t j = 0; j < grads[i].data.size(); ++j)
      grads[i].data[j] += other.grads[i].data[j];
}

double GradBuffer::global_norm() const {
  double s = 0.0;
  for (const auto& g : grads)
    for (double x : g.data) s += x * x;
  return std::sqrt(s);
}

void GradBuffer::scale(double s) {
  for (auto& g : grads)
    for (double& x : g.data) x *= s;
}

bool GradBuffer::all_finite() const {
  for (const auto& g : grads)
    if (!g.all_finite()) return false;
  return true;
}

void glorot_uniform(Tensor& t, int fan_in, int fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& x : t.data) x = rng.uniform(-limit, limit);
}

Dense::Dense(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng,
             double bias_init) {
  w = store.create(prefix + "/w", {out, in});
  b = store.create(prefix + "/b", {out});
  glorot_uniform(w->value, in, out, rng);
  b->value.fill(bias_init);
}

ad::Var Dense::operator()(ad::Graph& g, ad::Var x) const {
  return ad::add(ad::matvec(g.param(*w), x), g.param(*b));
}

Conv2d::Conv2d(ParamStore& store, const std::string& prefix, int in_ch, int out_ch,
               int ksize, int pad, Rng& rng)
    : pad_y(pad), pad_x(pad) {
  k = store.create(prefix + "/k", {out_ch, in_ch, ksize, ksize});
  b = store.create(prefix + "/b", {out_ch});
  glorot_uniform(k->value, in_ch * ksize * ksize, out_ch * ksize * ksize, rng);
}

ad::Var Conv2d::operator()(ad::Graph& g, ad::Var x) const {
  return ad::bias_channels(ad::conv2d(x, g.param(*k), pad_y, pad_x), g.param(*b));
}

LstmCell::LstmCell(ParamStore& store, const std::string& prefix, int in, int units_,
                   Rng& rng)
    : units(units_) {
  wx = store.create(prefix + "/wx", {4 * units, in});
  wh = store.create(prefix + "/wh", {4 * units, units});
  b = store.create(prefix + "/b", {4 * units});
  glorot_uniform(wx->value, in, 4 * units, rng);
  glorot_uniform(wh->value, units, 4 * units, rng);
  for (int i = units; i < 2 * units; ++i) b->value.data[i] = 1.0;  // forget gate
}

LstmCell::State LstmCell::zero_state(ad::Graph& g) const {
  return {g.constant(Tensor({units})), g.constant(Tensor({units}))};
}

LstmCell::State LstmCell::step(ad::Graph& g, ad::Var x, const State& s) const {
  using namespace ad;
  Var z = add(add(matvec(g.param(*wx), x), matvec(g.param(*wh), s.h)), g.param(*b));
  Var i = vsigmoid(slice(z, 0, units));
  Var f = vsigmoid(slice(z, units, units));
  Var gg = vtanh(slice(z, 2 * units, units));
  Var o = vsigmoid(slice(z, 3 * units, units));
  Var c = add(mul(f, s.c), mul(i, gg));
  Var h = mul(o, vtanh(c));
  return {h, c};
}

Adam::Adam(const ParamStore& store, AdamConfig cfg) : cfg_(cfg) {
  m_.reserve(store.count());
  v_.reserve(store.count());
  for (std::size_t i = 0; i < store.count(); ++i) {
    m_.push_back(Tensor::zeros_like(store.at(i).value));
    v_.push_back(Tensor::zeros_like(store.at(i).value));
  }
}

void Adam::step(ParamStore& store, const GradBuffer& grads, double lr) {
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    Tensor& p = store.at(i).value;
    const Tensor& g = grads.grads[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < p.data.size(); ++j) {
      double gj = g.data[j];
      m.data[j] = cfg_.beta1 * m.data[j] + (1.0 - cfg_.beta1) * gj;
      v.data[j] = cfg_.beta2 * v.data[j] + (1.0 - cfg_.beta2) * gj * gj;
      double mh = m.data[j] / bc1;
      double vh = v.data[j] / bc2;
      p.data[j] -= lr * mh / (std::sqrt(vh) + cfg_.eps);
    }
  }
}

double clip_global_norm(GradBuffer& grads, double max_norm) {
  double n = grads.global_norm();
  if (n > max_norm && n > 0.0) grads.scale(max_norm / n);
  return n;
}

}  // namespace vts
