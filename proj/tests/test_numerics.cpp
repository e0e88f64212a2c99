#include "curatornet/numerics.hpp"

#include <doctest.h>

#include <atomic>
#include <cstdlib>

using namespace curatornet;

TEST_SUITE("numerics") {

TEST_CASE("selu reference points") {
  CHECK(selu(0.0) == 0.0);
  CHECK(selu(1.0) == doctest::Approx(1.0507009873554805).epsilon(1e-15));
  // -lambda * alpha * (1 - e^-20)
  const double expected = -1.0507009873554805 * 1.6732632423543772 * (1.0 - std::exp(-20.0));
  CHECK(selu(-20.0) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(selu(-20.0) == doctest::Approx(-1.75809934).epsilon(1e-8));
}

TEST_CASE("selu is monotone and approaches lambda*x") {
  double prev = selu(-30.0);
  for (double x = -30.0 + 0.01; x < 30.0; x += 0.01) {
    const double y = selu(x);
    CHECK(y > prev);
    prev = y;
  }
  CHECK(selu(1e6) / 1e6 == doctest::Approx(selu_constants::kLambda));
  // Continuous at zero from both sides.
  CHECK(std::abs(selu(1e-12) - selu(-1e-12)) < 1e-11);
}

TEST_CASE("selu derivative matches central differences") {
  for (double x : {-3.0, -0.5, 0.25, 1.0, 4.0}) {
    const double h = 1e-6;
    CHECK(selu_grad(x) == doctest::Approx((selu(x + h) - selu(x - h)) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("affine_forward examples") {
  const MatrixD eye = MatrixD::Identity(2, 2);
  const VectorD zero = VectorD::Zero(2);
  VectorD x(2);
  x << 3, -4;
  CHECK(affine_forward(eye, zero, x, false) == x);

  x << 1, -1;
  const VectorD y = affine_forward(eye, zero, x, true);
  CHECK(y[0] == doctest::Approx(1.0507009873554805));
  CHECK(y[1] == doctest::Approx(-1.0507009873554805 * 1.6732632423543772 * (1.0 - std::exp(-1.0))));
  CHECK(y[1] == doctest::Approx(-1.1113307).epsilon(1e-6));

  VectorD b(1);
  b << 5;
  VectorD any(3);
  any << 7, 8, 9;
  CHECK(affine_forward(MatrixD::Zero(1, 3), b, any, false)[0] == 5.0);

  CHECK_THROWS_AS(affine_forward(eye, zero, any, false), ShapeError);
}

TEST_CASE("adam: zero gradient leaves the parameter") {
  const std::vector<double> p = {1.0, -2.0};
  const std::vector<double> g = {0.0, 0.0};
  auto [p2, s] = adam_step(p, g, AdamState::zeros(2), AdamConfig{});
  CHECK(p2 == p);
  CHECK(s.t == 1);
  CHECK(s.m == std::vector<double>{0.0, 0.0});
  CHECK(s.v == std::vector<double>{0.0, 0.0});
}

TEST_CASE("adam: first step moves by lr times the sign") {
  AdamConfig cfg;
  cfg.lr = 0.1;
  const std::vector<double> p = {1.0};
  const std::vector<double> g = {1.0};
  auto [p2, s] = adam_step(p, g, AdamState::zeros(1), cfg);
  // m_hat = 1, v_hat = 1: step = 0.1 / (1 + 1e-8)
  CHECK(p2[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
  CHECK(p2[0] == doctest::Approx(0.9));
}

TEST_CASE("adam: constant positive gradient decreases the parameter strictly") {
  std::vector<double> p = {0.5};
  AdamState s = AdamState::zeros(1);
  double prev = p[0];
  for (int step = 0; step < 5; ++step) {
    auto [next, ns] = adam_step(p, std::vector<double>{0.3}, s, AdamConfig{});
    CHECK(next[0] < prev);
    CHECK(ns.t == s.t + 1);
    prev = next[0];
    p = next;
    s = ns;
  }
}

TEST_CASE("adam: bit-identical on identical inputs, errors on bad input") {
  const std::vector<double> p = {0.1, 0.2, 0.3};
  const std::vector<double> g = {0.5, -0.25, 1e-3};
  const auto a = adam_step(p, g, AdamState::zeros(3), AdamConfig{});
  const auto b = adam_step(p, g, AdamState::zeros(3), AdamConfig{});
  CHECK(a.first == b.first);
  CHECK(a.second.m == b.second.m);
  CHECK_THROWS_AS(adam_step(p, std::vector<double>{1.0, NAN, 0.0}, AdamState::zeros(3), AdamConfig{}), NumericError);
  CHECK_THROWS_AS(adam_step(p, g, AdamState::zeros(2), AdamConfig{}), ShapeError);
  AdamConfig bad;
  bad.lr = 0.0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("adam_update on float storage agrees with the pure step") {
  std::vector<float> pf = {0.25f};
  std::vector<double> m(1), v(1);
  adam_update<float>(pf, std::vector<double>{2.0}, m, v, 1, AdamConfig{});
  const auto [pd, s] = adam_step(std::vector<double>{0.25}, std::vector<double>{2.0}, AdamState::zeros(1), AdamConfig{});
  CHECK(pf[0] == static_cast<float>(pd[0]));
}

TEST_CASE("cosine") {
  VectorD v(3);
  v << 1, 2, 3;
  CHECK(cosine(v, v) == doctest::Approx(1.0));
  VectorD a(2), b(2);
  a << 1, 0;
  b << 0, 1;
  CHECK(cosine(a, b) == 0.0);
  a << 1, 1;
  b << 2, 2;
  CHECK(cosine(a, b) == doctest::Approx(1.0));
  CHECK(cosine(a, b) == cosine(b, a));
  CHECK_THROWS_AS(cosine(a, VectorD::Zero(2)), NumericError);
}

TEST_CASE("cosine is symmetric and scale invariant on random vectors") {
  Rng rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    VectorD a(5), b(5);
    for (auto& x : a) x = n(rng);
    for (auto& x : b) x = n(rng);
    const double c = cosine(a, b);
    CHECK(c >= -1.0);
    CHECK(c <= 1.0);
    CHECK(cosine(b, a) == doctest::Approx(c).epsilon(1e-14));
    CHECK(cosine(VectorD(3.5 * a), b) == doctest::Approx(c).epsilon(1e-12));
  }
}

TEST_CASE("finite_diff_check examples") {
  const ObjectiveFn half_norm = [](std::span<const double> t, std::span<double> g) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      s += t[i] * t[i] / 2.0;
      if (!g.empty()) g[i] = t[i];
    }
    return s;
  };
  const std::vector<double> theta = {0.3, -1.2, 4.0, 0.0};
  CHECK(finite_diff_check(half_norm, theta, 1e-5).max_rel_error < 1e-6);

  const ObjectiveFn selu_fn = [](std::span<const double> t, std::span<double> g) {
    if (!g.empty()) g[0] = selu_grad(t[0]);
    return selu(t[0]);
  };
  CHECK(finite_diff_check(selu_fn, std::vector<double>{1.0}, 1e-4).max_rel_error < 1e-5);

  // A wrong gradient is caught.
  const ObjectiveFn wrong = [](std::span<const double> t, std::span<double> g) {
    if (!g.empty()) g[0] = 3.0 * t[0];
    return t[0] * t[0];
  };
  CHECK(finite_diff_check(wrong, std::vector<double>{1.0}, 1e-5).max_rel_error > 0.1);

  const ObjectiveFn blows_up = [](std::span<const double> t, std::span<double> g) {
    if (!g.empty()) g[0] = 1.0;
    return t[0] > 1.0 ? INFINITY : t[0];
  };
  CHECK_THROWS_AS(finite_diff_check(blows_up, std::vector<double>{1.0}, 1e-3), NumericError);
}

TEST_CASE("finite_diff_check subsamples coordinates deterministically") {
  const ObjectiveFn f = [](std::span<const double> t, std::span<double> g) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      s += std::sin(t[i]);
      if (!g.empty()) g[i] = std::cos(t[i]);
    }
    return s;
  };
  std::vector<double> theta(100);
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = 0.01 * static_cast<double>(i);
  const auto a = finite_diff_check(f, theta, 1e-5, 10, 7);
  const auto b = finite_diff_check(f, theta, 1e-5, 10, 7);
  CHECK(a.checked == 10);
  CHECK(a.worst_index == b.worst_index);
  CHECK(a.max_rel_error < 1e-8);
}

TEST_CASE("derive_seed gives distinct streams") {
  CHECK(derive_seed(0, 1) != derive_seed(0, 2));
  CHECK(derive_seed(1, 1) != derive_seed(0, 1));
  CHECK(derive_seed(5, 9) == derive_seed(5, 9));
}

TEST_CASE("parallel_for covers every index once and propagates exceptions") {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
  for (const auto& h : hits) CHECK(h.load() == 1);
  CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) {
                    if (i == 7) throw std::runtime_error("boom");
                  }),
                  std::runtime_error);
  CHECK(worker_threads() >= 1);
}

TEST_CASE("lecun normal init has the requested spread") {
  Matrix w(200, 400);
  Rng rng(11);
  init_lecun_normal(w, rng);
  const double var = w.cast<double>().squaredNorm() / static_cast<double>(w.size());
  CHECK(var == doctest::Approx(1.0 / 400.0).epsilon(0.05));
}

}  // TEST_SUITE
