#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "flowcontrast/errors.hpp"
#include "flowcontrast/numcore.hpp"

using namespace flowcontrast;
using namespace flowcontrast::numcore;

TEST_CASE("softmax of equal logits is uniform") {
  const auto p = softmax(std::vector<double>{0, 0, 0});
  for (double x : p) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softmax of [ln 2, 0] is [2/3, 1/3]") {
  const auto p = softmax(std::vector<double>{std::log(2.0), 0.0});
  CHECK(std::abs(p[0] - 2.0 / 3.0) < 1e-15);
  CHECK(std::abs(p[1] - 1.0 / 3.0) < 1e-15);
}

TEST_CASE("softmax is shift invariant and order preserving") {
  const std::vector<double> xs{0.3, -1.2, 2.5, 0.0};
  for (double c : {-40.0, 7.5, 1000.0}) {
    std::vector<double> ys = xs;
    for (double& y : ys) y += c;
    const auto a = softmax(xs), b = softmax(ys);
    for (std::size_t i = 0; i < xs.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
  }
  const auto p = softmax(xs);
  CHECK(p[2] > p[0]);
  CHECK(p[0] > p[3]);
  CHECK(p[3] > p[1]);
}

TEST_CASE("softmax stays normalised for |x| <= 50") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> xs(1 + rng.index(12));
    for (double& x : xs) x = rng.uniform(-50, 50);
    const auto p = softmax(xs);
    double s = 0;
    for (double v : p) {
      CHECK(v > 0.0);
      CHECK(v < 1.0 + 1e-15);
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("softmax rejects empty input") {
  CHECK_THROWS_AS(softmax(std::vector<double>{}), InvalidArgument);
}

TEST_CASE("relu") {
  CHECK(relu(std::vector<double>{-1, 0, 2}) == std::vector<double>{0, 0, 2});
  CHECK(relu(std::vector<double>{-3, -0.5}) == std::vector<double>{0, 0});
  CHECK(relu(std::vector<double>{0, 1.5, 9}) == std::vector<double>{0, 1.5, 9});
  CHECK(leaky_relu(-2.0, 0.2) == doctest::Approx(-0.4));
  CHECK(leaky_relu(3.0, 0.2) == 3.0);
}

TEST_CASE("log_sum_exp matches the direct formula and survives large inputs") {
  const std::vector<double> xs{0.1, -0.7, 1.9};
  double direct = 0;
  for (double x : xs) direct += std::exp(x);
  CHECK(std::abs(log_sum_exp(xs) - std::log(direct)) < 1e-14);
  CHECK(std::abs(log_sum_exp(std::vector<double>{1000, 1000}) - (1000 + std::log(2.0))) < 1e-9);
}

TEST_CASE("matrix helpers") {
  Matrix w{{1, 2, 3}, {4, 5, 6}};
  CHECK(w.rows() == 2);
  CHECK(w.cols() == 3);
  std::vector<double> x{1, 0, -1}, y(2);
  matvec(w, x, y);
  CHECK(y == std::vector<double>{-2, -2});
  std::vector<double> xg(3, 0.0);
  matvec_t_accumulate(w, std::vector<double>{1, 1}, xg);
  CHECK(xg == std::vector<double>{5, 7, 9});
  Matrix g(2, 3);
  outer_accumulate(g, std::vector<double>{1, 2}, x);
  CHECK(g == Matrix{{1, 0, -1}, {2, 0, -2}});
  const Matrix p = project_rows(Matrix{{1, 0, -1}, {0, 1, 0}}, w);
  CHECK(p == Matrix{{-2, -2}, {2, 5}});
  CHECK_THROWS_AS(matvec(w, std::vector<double>{1, 2}, y), InvalidArgument);
  CHECK(dot(std::vector<double>{1, 2, 3, 4, 5}, std::vector<double>{5, 4, 3, 2, 1}) == 35.0);
}

TEST_CASE("adam: zero gradient on a fresh state leaves params unchanged") {
  std::vector<double> p{0.5, -1.0, 2.0};
  const auto before = p;
  AdamState s(3, {});
  adam_step(p, std::vector<double>{0, 0, 0}, s);
  CHECK(p == before);
  CHECK(s.step == 1);
}

TEST_CASE("adam: first step moves each coordinate by about the learning rate") {
  std::vector<double> p{0.0, 0.0, 0.0};
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  AdamState s(3, cfg);
  adam_step(p, std::vector<double>{0.3, -2.0, 1e-3}, s);
  // m_hat = g, v_hat = g^2 so the step is lr * g / (|g| + eps)
  CHECK(std::abs(p[0] + 0.01 * 0.3 / (0.3 + 1e-8)) < 1e-15);
  CHECK(std::abs(p[1] - 0.01 * 2.0 / (2.0 + 1e-8)) < 1e-15);
  CHECK(std::abs(p[2] + 0.01 * 1e-3 / (1e-3 + 1e-8)) < 1e-15);
  for (double x : p) CHECK(std::abs(std::abs(x) - 0.01) < 1e-6);
}

TEST_CASE("adam: two identical steps give v = (1 - beta2^2) g^2") {
  const std::vector<double> g{0.5, -3.0};
  std::vector<double> p{1.0, 1.0};
  AdamState s(2, {});
  adam_step(p, g, s);
  adam_step(p, g, s);
  CHECK(s.step == 2);
  const double b1 = s.config.beta1, b2 = s.config.beta2;
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(std::abs(s.second_moment[i] - (1 - b2 * b2) * g[i] * g[i]) < 1e-15);
    CHECK(std::abs(s.first_moment[i] - (1 - b1 * b1) * g[i]) < 1e-15);
  }
}

TEST_CASE("adam: deterministic and shape checked") {
  std::vector<double> a{1, 2}, b{1, 2};
  AdamState sa(2, {}), sb(2, {});
  for (int k = 0; k < 5; ++k) {
    adam_step(a, std::vector<double>{0.1 * k, -0.2}, sa);
    adam_step(b, std::vector<double>{0.1 * k, -0.2}, sb);
  }
  CHECK(a == b);
  CHECK(sa.first_moment == sb.first_moment);
  CHECK_THROWS_AS(adam_step(a, std::vector<double>{1, 2, 3}, sa), InvalidArgument);
}

TEST_CASE("grad_check: half squared norm") {
  const std::vector<double> p{1, 2};
  auto loss = [](std::span<const double> x) { return 0.5 * (x[0] * x[0] + x[1] * x[1]); };
  const auto r = grad_check(loss, p, std::vector<double>{1, 2}, {});
  CHECK(r.global_max_rel_error < 1e-7);
  CHECK(r.perturbation == 1e-5);
  REQUIRE(r.blocks.size() == 1);
  CHECK(r.blocks[0].name == "params");
}

TEST_CASE("grad_check: constant loss passes with zero gradients") {
  auto loss = [](std::span<const double>) { return 3.25; };
  const auto r = grad_check(loss, std::vector<double>{0.3, -7, 1e3}, std::vector<double>{0, 0, 0}, {});
  CHECK(r.global_max_rel_error == 0.0);
  CHECK(r.passed(1e-4));
}

TEST_CASE("grad_check: doubled analytic gradient gives error 1/3") {
  const std::vector<double> p{1, 2, -0.5};
  auto loss = [](std::span<const double> x) {
    return std::sin(x[0]) + x[1] * x[1] * x[2] + std::exp(x[2]);
  };
  const std::vector<double> g{std::cos(1.0), 2 * 2 * -0.5, 4 + std::exp(-0.5)};
  std::vector<double> wrong = g;
  for (double& x : wrong) x *= 2;
  CHECK(grad_check(loss, p, g, {}).global_max_rel_error < 1e-9);
  const auto r = grad_check(loss, p, wrong, {});
  CHECK(std::abs(r.global_max_rel_error - 1.0 / 3.0) < 1e-6);
  CHECK_FALSE(r.passed(1e-4));
}

TEST_CASE("grad_check: reports every block and the worst index") {
  const std::vector<double> p{1, 2, 3, 4};
  auto loss = [](std::span<const double> x) { return x[0] * x[1] + x[2] * x[3]; };
  std::vector<double> g{2, 1, 4, 3};
  g[3] = 0.0;  // wrong entry in the second block
  const std::vector<ParamBlock> blocks{{"first", 0, 2}, {"second", 2, 2}};
  const auto r = grad_check(loss, p, g, blocks);
  REQUIRE(r.blocks.size() == 2);
  CHECK(r.blocks[0].max_rel_error < 1e-9);
  CHECK(r.blocks[1].worst_index == 3);
  CHECK(r.blocks[1].max_rel_error == doctest::Approx(1.0));
}

TEST_CASE("grad_check: non-finite loss names the parameter") {
  auto loss = [](std::span<const double> x) { return x[1] > 1.0 ? NAN : x[0]; };
  try {
    grad_check(loss, std::vector<double>{0, 1}, std::vector<double>{1, 0}, {});
    FAIL("expected CheckFailed");
  } catch (const CheckFailed& e) {
    CHECK(e.index() == 1);
  }
}

TEST_CASE("grad_check: perturbation range enforced") {
  auto loss = [](std::span<const double> x) { return x[0]; };
  CHECK_THROWS_AS(grad_check(loss, std::vector<double>{0}, std::vector<double>{1}, {}, 1e-3),
                  InvalidArgument);
  CHECK_THROWS_AS(grad_check(loss, std::vector<double>{0}, std::vector<double>{1}, {}, 1e-7),
                  InvalidArgument);
  CHECK_NOTHROW(grad_check(loss, std::vector<double>{0}, std::vector<double>{1}, {}, 1e-6));
}

TEST_CASE("rng: reproducible streams and unbiased helpers") {
  Rng a(42), b(42), c(43);
  std::vector<std::uint64_t> xa, xb, xc;
  for (int i = 0; i < 8; ++i) {
    xa.push_back(a.next());
    xb.push_back(b.next());
    xc.push_back(c.next());
  }
  CHECK(xa == xb);
  CHECK(xa != xc);

  Rng r(5);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) ++counts[r.index(5)];
  for (int k : counts) CHECK(std::abs(k - 10000) < 400);

  double sum = 0, sq = 0;
  for (int i = 0; i < 50000; ++i) {
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / 50000) < 0.02);
  CHECK(std::abs(sq / 50000 - 1.0) < 0.03);

  const auto picks = r.sample_without_replacement(10, 10);
  std::vector<std::size_t> sorted = picks;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> expect(10);
  std::iota(expect.begin(), expect.end(), std::size_t{0});
  CHECK(sorted == expect);
}

TEST_CASE("glorot init stays within its bound") {
  Matrix w(16, 48);
  Rng rng(3);
  glorot_uniform(w, rng);
  const double bound = std::sqrt(6.0 / (16 + 48));
  double mx = 0;
  for (double x : w.values()) mx = std::max(mx, std::abs(x));
  CHECK(mx <= bound);
  CHECK(mx > 0.8 * bound);
}
