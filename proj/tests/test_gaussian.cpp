#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "vts/gaussian.hpp"
#include "vts/rng.hpp"

using namespace vts;
using vts::testutil::max_abs_diff;

namespace {

// Independent Monte-Carlo estimate of KL(q||p) for 1-d Gaussians.
double mc_kl_1d(double mq, double sq, double mp, double sp, int n, std::uint64_t seed) {
  Rng rng(seed);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = mq + sq * rng.normal();
    double lq = -0.5 * ((x - mq) / sq) * ((x - mq) / sq) - std::log(sq);
    double lp = -0.5 * ((x - mp) / sp) * ((x - mp) / sp) - std::log(sp);
    acc += lq - lp;
  }
  return acc / n;
}

// Quadrature of the density over a wide interval; checks normalization and
// pointwise log density values.
double quadrature_mass(double m, double s, int steps = 200001) {
  double lo = m - 10 * s, hi = m + 10 * s;
  double h = (hi - lo) / (steps - 1);
  double acc = 0.0;
  for (int i = 0; i < steps; ++i) {
    double x = lo + i * h;
    double w = (i == 0 || i == steps - 1) ? 0.5 : 1.0;
    acc += w * std::exp(-0.5 * ((x - m) / s) * ((x - m) / s)) / (s * std::sqrt(2 * M_PI));
  }
  return acc * h;
}

DiagGaussian make(ad::Graph& g, std::vector<double> loc, std::vector<double> scale) {
  return DiagGaussian::constant(g, std::move(loc), std::move(scale));
}

}  // namespace

TEST_CASE("sample_reparam returns loc + scale * noise") {
  ad::Graph g;
  CHECK(sample_reparam(make(g, {0}, {1}), Tensor::from({0})).val()[0] == 0.0);
  auto v = sample_reparam(make(g, {2, 3}, {1, 1}), Tensor::from({0, 0}));
  CHECK(v.val()[0] == 2.0);
  CHECK(v.val()[1] == 3.0);
  CHECK(sample_reparam(make(g, {1}, {0.5}), Tensor::from({2})).val()[0] ==
        doctest::Approx(2.0));
  CHECK_THROWS(sample_reparam(make(g, {1, 2}, {1, 1}), Tensor::from({0})));
}

TEST_CASE("sample_reparam gradients: identity wrt loc, diag(noise) wrt scale") {
  Rng rng(5);
  Tensor noise = rng.normal_tensor({3});
  Tensor loc0 = rng.normal_tensor({3});
  Tensor scale0 = rng.uniform_tensor({3}, 0.3, 1.5);
  for (int j = 0; j < 3; ++j) {
    ad::Graph g;
    ad::Var loc = g.input(loc0, true);
    ad::Var scale = g.input(scale0, true);
    DiagGaussian dg(loc, scale);
    ad::Var s = sample_reparam(dg, noise);
    ad::Var yj = ad::slice(s, j, 1);
    g.backward(ad::sum(yj));
    Tensor dl = g.grad_of(loc);
    Tensor ds = g.grad_of(scale);
    for (int i = 0; i < 3; ++i) {
      CHECK(dl[i] == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
      CHECK(ds[i] == doctest::Approx(i == j ? noise[i] : 0.0).epsilon(1e-9));
    }
  }
  // and against finite differences
  auto f = [&](const Tensor& lt) {
    ad::Graph g2;
    DiagGaussian dg(g2.input(lt, false), g2.input(scale0, false));
    return ad::sum(sample_reparam(dg, noise)).scalar();
  };
  Tensor num = testutil::numeric_grad(f, loc0);
  for (int i = 0; i < 3; ++i) CHECK(std::fabs(num[i] - 1.0) < 1e-6);
}

TEST_CASE("kl_divergence closed form against trivial and Monte-Carlo oracles") {
  ad::Graph g;
  CHECK(kl_divergence(make(g, {0}, {1}), make(g, {0}, {1})).scalar() == 0.0);
  CHECK(kl_divergence(make(g, {1}, {1}), make(g, {0}, {1})).scalar() ==
        doctest::Approx(0.5).epsilon(1e-12));
  // scale-2 vs scale-1: ln(1/2) + 4/2 - 1/2 = 0.80685...
  double kl = kl_divergence(make(g, {0}, {2}), make(g, {0}, {1})).scalar();
  CHECK(kl == doctest::Approx(0.8068528194400547).epsilon(1e-9));
  double mc = mc_kl_1d(0, 2, 0, 1, 1000000, 12345);
  CHECK(std::fabs(kl - mc) < 1e-2);
  // a random asymmetric case against MC
  double kl2 = kl_divergence(make(g, {0.7}, {0.9}), make(g, {-0.4}, {1.6})).scalar();
  double mc2 = mc_kl_1d(0.7, 0.9, -0.4, 1.6, 1000000, 999);
  CHECK(std::fabs(kl2 - mc2) < 1e-2);
  CHECK_THROWS(kl_divergence(make(g, {0, 0}, {1, 1}), make(g, {0}, {1})));
}

TEST_CASE("kl properties: identity zero, non-negative, over random pairs") {
  Rng rng(77);
  ad::Graph g;
  for (int trial = 0; trial < 1000; ++trial) {
    int d = 1 + rng.uniform_int(0, 3);
    std::vector<double> loc(d), scale(d), loc2(d), scale2(d);
    for (int i = 0; i < d; ++i) {
      loc[i] = rng.normal() * 2;
      scale[i] = 0.05 + rng.uniform() * 3;
      loc2[i] = rng.normal() * 2;
      scale2[i] = 0.05 + rng.uniform() * 3;
    }
    auto q = make(g, loc, scale);
    auto q_same = make(g, loc, scale);
    auto p = make(g, loc2, scale2);
    CHECK(kl_divergence(q, q_same).scalar() == 0.0);
    CHECK(kl_divergence(q, p).scalar() >= 0.0);
  }
}

TEST_CASE("log_prob values and quadrature normalization") {
  ad::Graph g;
  CHECK(log_prob(make(g, {0}, {1}), Tensor::from({0})).scalar() ==
        doctest::Approx(-0.9189385332046727).epsilon(1e-12));
  CHECK(log_prob(make(g, {0}, {1}), Tensor::from({1})).scalar() ==
        doctest::Approx(-1.4189385332046727).epsilon(1e-12));
  // density at a point matches direct evaluation and integrates to 1
  double lp = log_prob(make(g, {0.3}, {0.3}), Tensor::from({0.5})).scalar();
  double direct = std::log(std::exp(-0.5 * ((0.5 - 0.3) / 0.3) * ((0.5 - 0.3) / 0.3)) /
                           (0.3 * std::sqrt(2 * M_PI)));
  CHECK(lp == doctest::Approx(direct).epsilon(1e-10));
  CHECK(quadrature_mass(0.3, 0.3) == doctest::Approx(1.0).epsilon(1e-6));
  // multi-dim sums per-dimension terms
  double lp2 = log_prob(make(g, {0, 1}, {1, 2}), Tensor::from({0.5, 0.5})).scalar();
  double e1 = log_prob(make(g, {0}, {1}), Tensor::from({0.5})).scalar();
  double e2 = log_prob(make(g, {1}, {2}), Tensor::from({0.5})).scalar();
  CHECK(lp2 == doctest::Approx(e1 + e2).epsilon(1e-12));
}

TEST_CASE("fuse_weighted algebra and validation") {
  ad::Graph g;
  auto a = make(g, {0}, {1});
  auto b = make(g, {2}, {1});
  std::vector<DiagGaussian> vars{a, b};

  auto one_hot = fuse_weighted(vars, Tensor::from({1.0, 0.0}));
  CHECK(one_hot.loc.node() == a.loc.node());  // selected input, bit-for-bit
  CHECK(one_hot.scale.node() == a.scale.node());

  auto mixed = fuse_weighted(vars, Tensor::from({0.5, 0.5}));
  CHECK(mixed.loc.val()[0] == doctest::Approx(1.0));
  CHECK(mixed.scale.val()[0] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));

  auto q = make(g, {0.7, -0.2}, {0.4, 0.9});
  std::vector<DiagGaussian> four{q, q, q, q};
  auto fused = fuse_weighted(four, Tensor::from({0.25, 0.25, 0.25, 0.25}));
  CHECK(fused.loc.val()[0] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(fused.scale.val()[0] == doctest::Approx(0.4 / 2.0).epsilon(1e-12));
  CHECK(fused.scale.val()[1] == doctest::Approx(0.9 / 2.0).epsilon(1e-12));
  CHECK(max_abs_diff(mode(fused), mode(q)) == 0.0);

  CHECK_THROWS(fuse_weighted(vars, Tensor::from({0.7, 0.4})));
  CHECK_THROWS(fuse_weighted(std::span<const DiagGaussian>{}, Tensor::from({})));
}

TEST_CASE("fuse_weighted means are permutation-equivariant") {
  Rng rng(31);
  ad::Graph g;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<DiagGaussian> vars;
    std::vector<double> w = {0.2, 0.3, 0.5};
    for (int k = 0; k < 3; ++k)
      vars.push_back(make(g, {rng.normal(), rng.normal()},
                          {0.1 + rng.uniform(), 0.1 + rng.uniform()}));
    auto f1 = fuse_weighted(vars, Tensor::from(w));
    std::vector<DiagGaussian> perm{vars[2], vars[0], vars[1]};
    auto f2 = fuse_weighted(perm, Tensor::from({0.5, 0.2, 0.3}));
    CHECK(max_abs_diff(f1.loc.val(), f2.loc.val()) < 1e-15);
    CHECK(max_abs_diff(f1.scale.val(), f2.scale.val()) < 1e-15);
  }
}

TEST_CASE("mode returns loc and construction validates") {
  ad::Graph g;
  auto m = mode(make(g, {3, 4}, {9, 9}));
  CHECK(m[0] == 3.0);
  CHECK(m[1] == 4.0);
  CHECK(mode(make(g, {0}, {0.001}))[0] == 0.0);
  CHECK_THROWS(make(g, {0}, {0.0}));
  CHECK_THROWS(make(g, {0}, {-1.0}));
  CHECK_THROWS(DiagGaussian(g.constant(Tensor::from({0, 0})),
                            g.constant(Tensor::from({1.0}))));
}

TEST_CASE("frame_log_prob equals per-pixel gaussian sum") {
  ad::Graph g;
  Rng rng(3);
  Tensor canvas = rng.uniform_tensor({3, 3}, 0, 1);
  Tensor frame = rng.uniform_tensor({3, 3}, 0, 1);
  double sigma = 0.3;
  double expected = 0.0;
  for (int i = 0; i < 9; ++i) {
    double z = (frame.data[i] - canvas.data[i]) / sigma;
    expected += -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2 * M_PI);
  }
  double got = frame_log_prob(g.constant(canvas), frame, sigma).scalar();
  CHECK(got == doctest::Approx(expected).epsilon(1e-12));
}
