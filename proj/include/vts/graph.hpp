#pragma once

#include <deque>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "vts/rng.hpp"
#include "vts/tensor.hpp"

namespace vts {
struct Param;
struct GradBuffer;
}  // namespace vts

namespace vts::ad {

class Graph;
struct Node;

using BackFn = std::function<void(Graph&, Node&)>;

struct Node {
  Tensor val;
  Tensor grad;  // allocated lazily during backward
  std::vector<Node*> parents;
  BackFn back;
  Param* param = nullptr;
  bool requires_grad = false;
  bool reachable = false;
};

// Handle to a node owned by a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* g, Node* n) : g_(g), n_(n) {}

  const Tensor& val() const { return n_->val; }
  double scalar() const { return n_->val.scalar_value(); }
  std::int64_t size() const { return n_->val.size(); }
  Graph* graph() const { return g_; }
  Node* node() const { return n_; }
  bool defined() const { return n_ != nullptr; }

 private:
  Graph* g_ = nullptr;
  Node* n_ = nullptr;
};

// Reverse-mode tape. Nodes are owned in creation order, which is a valid
// topological order for the dynamically built graphs used here. One graph
// per thread; not synchronized.
class Graph {
 public:
  Var constant(Tensor t);
  Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }
  Var input(Tensor t, bool requires_grad);
  Var param(vts::Param& p);

  Var make(Tensor val, std::vector<Node*> parents, BackFn back);

  // Seeds d(root)/d(root) = 1 (root must be scalar) and sweeps the tape in
  // reverse, accumulating gradients into every reachable node that needs one.
  void backward(const Var& root);

  // Adds gradients of parameter leaves into `buf` (indexed by Param::index).
  void accumulate_param_grads(GradBuffer& buf) const;

  Tensor grad_of(const Var& v) const;
  Tensor& grad_ref(Node* n);

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  std::deque<Node> nodes_;
};

// ---- primitive ops ---------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var vdiv(Var a, Var b);
Var neg(Var a);
Var add_scalar(Var a, double s);
Var mul_scalar(Var a, double s);

Var vexp(Var a);
Var vlog(Var a);
Var vsqrt(Var a);
Var vsquare(Var a);
Var vtanh(Var a);
Var vsigmoid(Var a);
Var vrelu(Var a);
Var vsoftplus(Var a);

Var sum(Var a);                    // -> scalar
Var mean(Var a);                   // -> scalar
Var dot(Var a, Var b);             // -> scalar
Var matvec(Var w, Var x);          // [m,n] x [n] -> [m]
Var concat(std::span<const Var> parts);
Var slice(Var a, std::int64_t start, std::int64_t len);
Var reshape(Var a, std::vector<int> shape);
Var softmax(Var a);
Var stop_gradient(Var a);
Var clamp_min(Var a, double lo);
Var broadcast_mul(Var scalar_v, Var v);  // scalar Var times tensor Var

// x: [C,H,W], k: [O,C,kh,kw]; zero padding, stride 1
Var conv2d(Var x, Var k, int pad_y, int pad_x);
Var conv2d(Var x, Var k, int pad_y_lo, int pad_y_hi, int pad_x_lo, int pad_x_hi);
Var bias_channels(Var x, Var b);   // adds b[c] to channel c of [C,H,W]
Var maxpool2(Var x);               // 2x2 stride-2 max pooling, floor sizes

// Inverted dropout; identity when !active. Mask drawn from `rng`.
Var dropout(Var a, double rate, Rng& rng, bool active);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return neg(a); }

}  // namespace vts::ad
