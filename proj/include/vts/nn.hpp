#pragma once

#include <memory>
#include <string>
#include <vector>

#include "vts/graph.hpp"
#include "vts/rng.hpp"
#include "vts/tensor.hpp"

namespace vts {

struct Param {
  std::string name;
  Tensor value;
  int index = -1;
};

// Registry of all trainable parameters of a model. Parameters are created
// once at model construction; indices are stable afterwards and used by
// gradient buffers, the optimizer, and checkpoints.
class ParamStore {
 public:
  Param* create(const std::string& name, std::vector<int> shape);
  Param* find(const std::string& name) const;
  std::size_t count() const { return items_.size(); }
  Param& at(std::size_t i) { return *items_[i]; }
  const Param& at(std::size_t i) const { return *items_[i]; }
  std::int64_t total_size() const;

 private:
  std::vector<std::unique_ptr<Param>> items_;
};

struct GradBuffer {
  std::vector<Tensor> grads;
  void init(const ParamStore& store);
  void zero();
  void add(const GradBuffer& other);
  double global_norm() const;
  void scale(double s);
  bool all_finite() const;
};

// ---- initializers -----------------------------------------------------------

void glorot_uniform(Tensor& t, int fan_in, int fan_out, Rng& rng);

// ---- layers -----------------------------------------------------------------

// Fully connected y = W x + b.
struct Dense {
  Param* w = nullptr;
  Param* b = nullptr;
  Dense() = default;
  Dense(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng,
        double bias_init = 0.0);
  ad::Var operator()(ad::Graph& g, ad::Var x) const;
  int out_dim() const { return w->value.dim(0); }
};

// Convolution layer with owned kernels [O,C,kh,kw] and per-channel bias.
struct Conv2d {
  Param* k = nullptr;
  Param* b = nullptr;
  int pad_y = 0, pad_x = 0;
  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& prefix, int in_ch, int out_ch, int ksize,
         int pad, Rng& rng);
  ad::Var operator()(ad::Graph& g, ad::Var x) const;
};

// Vanilla LSTM cell, gate order (i, f, g, o), forget-gate bias initialized
// to 1.
struct LstmCell {
  Param* wx = nullptr;  // [4u, in]
  Param* wh = nullptr;  // [4u, u]
  Param* b = nullptr;   // [4u]
  int units = 0;
  LstmCell() = default;
  LstmCell(ParamStore& store, const std::string& prefix, int in, int units_, Rng& rng);

  struct State {
    ad::Var h;
    ad::Var c;
  };
  State zero_state(ad::Graph& g) const;
  State step(ad::Graph& g, ad::Var x, const State& s) const;
};

// ---- optimizer --------------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(const ParamStore& store, AdamConfig cfg);
  void step(ParamStore& store, const GradBuffer& grads, double lr);
  std::int64_t steps_taken() const { return t_; }

  // checkpoint access
  std::vector<Tensor>& m() { return m_; }
  std::vector<Tensor>& v() { return v_; }
  void set_steps_taken(std::int64_t t) { t_ = t; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::int64_t t_ = 0;
};

// Scales gradients in place so the global L2 norm is at most `max_norm`;
// returns the pre-clip norm.
double clip_global_norm(GradBuffer& grads, double max_norm);

}  // namespace vts
