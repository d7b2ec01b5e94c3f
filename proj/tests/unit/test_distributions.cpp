#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "ppolab/distributions.hpp"
#include "ppolab/error.hpp"
#include "ppolab/rng.hpp"
#include "ppolab/special_functions.hpp"

using namespace ppolab;

namespace {

// Composite Simpson on [a, b] with n (even) panels.
template <class F>
double simpson(F f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// Integral over the Beta support with x = lo + (hi - lo)(1 - cos(pi t)) / 2, which
// flattens the endpoint behaviour of x^(alpha - 1).
template <class F>
double beta_quadrature(F f, const ScaledBeta& d) {
  const double w = d.hi - d.lo;
  return simpson(
      [&](double t) {
        const double x = d.lo + w * (1.0 - std::cos(std::numbers::pi * t)) / 2.0;
        const double jac = w * std::numbers::pi / 2.0 * std::sin(std::numbers::pi * t);
        return jac == 0.0 ? 0.0 : f(x) * jac;
      },
      0.0, 1.0, 20000);
}

}  // namespace

TEST_SUITE("distributions") {

TEST_CASE("log_prob examples") {
  CHECK(log_prob(Gaussian1D(0, 1), 0.0) == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)));
  CHECK(log_prob(Gaussian1D(0, 1), 0.0) == doctest::Approx(-0.91894).epsilon(1e-5));
  CHECK(log_prob(ScaledBeta(1, 1, 0, 1), 0.3) == doctest::Approx(0.0));
  CHECK(log_prob(ScaledBeta(1, 1, -1.5, 1.5), 0.3) == doctest::Approx(-std::log(3.0)));
  CHECK(log_prob(Categorical({0.2, 0.8}), std::size_t{1}) == doctest::Approx(std::log(0.8)));
  CHECK(std::isinf(log_prob(ScaledBeta(2, 2, 0, 1), 1.5)));
  CHECK(log_prob(ScaledBeta(2, 2, 0, 1), 1.5) < 0);
  CHECK_THROWS_AS(log_prob(Categorical({0.2, 0.8}), std::size_t{2}), InvalidParameter);
}

TEST_CASE("constructors validate") {
  CHECK_THROWS_AS(Gaussian1D(0, 0), InvalidParameter);
  CHECK_THROWS_AS(ScaledBeta(0.5, 1, 0, 1), InvalidParameter);
  CHECK_THROWS_AS(ScaledBeta(1, 1, 1, 1), InvalidParameter);
  CHECK_THROWS_AS(Categorical({0.3, 0.8}), InvalidParameter);
  CHECK_THROWS_AS(Categorical({-0.1, 1.1}), InvalidParameter);
}

TEST_CASE("score examples") {
  auto s = score(Gaussian1D(0, 1), 0.0);
  CHECK(s[0] == doctest::Approx(0.0));
  CHECK(s[1] == doctest::Approx(-1.0));
  s = score(Gaussian1D(0, 0.5), 1.0);
  CHECK(s[0] == doctest::Approx(4.0));
  CHECK(s[1] == doctest::Approx(6.0));
  s = score(ScaledBeta(1, 1, 0, 1), 0.5);
  CHECK(s[0] == doctest::Approx(std::log(0.5) + 1.0));
  CHECK(s[1] == doctest::Approx(0.30685).epsilon(1e-4));
  CHECK_THROWS_AS(score(ScaledBeta(2, 2, 0, 1), 0.0), InvalidParameter);
}

TEST_CASE("score matches finite differences of log_prob") {
  Rng rng(11);
  const double h = 1e-6;
  for (int t = 0; t < 200; ++t) {
    const double mu = 4 * rng.uniform01() - 2, sigma = 0.2 + 2 * rng.uniform01();
    const double a = sample(Gaussian1D(mu, sigma), rng);
    const auto s = score(Gaussian1D(mu, sigma), a);
    const double fmu = (log_prob(Gaussian1D(mu + h, sigma), a) - log_prob(Gaussian1D(mu - h, sigma), a)) / (2 * h);
    const double fsg = (log_prob(Gaussian1D(mu, sigma + h), a) - log_prob(Gaussian1D(mu, sigma - h), a)) / (2 * h);
    CHECK(std::abs(s[0] - fmu) <= 1e-5 * std::max(1.0, std::abs(fmu)));
    CHECK(std::abs(s[1] - fsg) <= 1e-5 * std::max(1.0, std::abs(fsg)));
  }
  for (int t = 0; t < 200; ++t) {
    const double al = 1.01 + 5 * rng.uniform01(), be = 1.01 + 5 * rng.uniform01();
    const ScaledBeta d(al, be, -1.5, 1.5);
    const double a = d.from_unit(0.02 + 0.96 * rng.uniform01());
    const auto s = score(d, a);
    const double fa = (log_prob(ScaledBeta(al + h, be, -1.5, 1.5), a) - log_prob(ScaledBeta(al - h, be, -1.5, 1.5), a)) / (2 * h);
    const double fb = (log_prob(ScaledBeta(al, be + h, -1.5, 1.5), a) - log_prob(ScaledBeta(al, be - h, -1.5, 1.5), a)) / (2 * h);
    CHECK(std::abs(s[0] - fa) <= 1e-5 * std::max(1.0, std::abs(fa)));
    CHECK(std::abs(s[1] - fb) <= 1e-5 * std::max(1.0, std::abs(fb)));
  }
}

TEST_CASE("score has zero mean under the distribution") {
  Rng rng(12);
  const int n = 100000;
  std::vector<Distribution> cases = {Gaussian1D(0.3, 0.7), ScaledBeta(1.5, 3.0, -1, 2), ScaledBeta(1.01815, 1.01815, -5, 5)};
  for (const auto& d : cases) {
    double s[2] = {0, 0}, s2[2] = {0, 0};
    for (int i = 0; i < n; ++i) {
      const double a = sample(d, rng);
      const auto g = std::holds_alternative<Gaussian1D>(d) ? score(std::get<Gaussian1D>(d), a)
                                                          : score(std::get<ScaledBeta>(d), a);
      for (int k = 0; k < 2; ++k) {
        s[k] += g[k];
        s2[k] += g[k] * g[k];
      }
    }
    for (int k = 0; k < 2; ++k) {
      const double m = s[k] / n;
      const double se = std::sqrt((s2[k] / n - m * m) / n);
      CHECK(std::abs(m) <= 3 * se);
    }
  }
}

TEST_CASE("densities integrate to one") {
  Rng rng(13);
  for (int t = 0; t < 10; ++t) {
    const Gaussian1D g(4 * rng.uniform01() - 2, 0.1 + 2 * rng.uniform01());
    const double z = simpson([&](double a) { return std::exp(log_prob(g, a)); }, g.mu - 14 * g.sigma, g.mu + 14 * g.sigma, 20000);
    CHECK(std::abs(z - 1.0) < 1e-6);
    const ScaledBeta b(1 + 6 * rng.uniform01(), 1 + 6 * rng.uniform01(), -3 * rng.uniform01(), 0.5 + rng.uniform01());
    const double zb = beta_quadrature([&](double a) { return std::exp(log_prob(b, a)); }, b);
    CHECK(std::abs(zb - 1.0) < 1e-6);
  }
}

TEST_CASE("kl examples") {
  CHECK(kl(Gaussian1D(0, 1), Gaussian1D(0, 1)) == 0.0);
  CHECK(kl(Gaussian1D(1, 1), Gaussian1D(0, 1)) == doctest::Approx(0.5));
  const double ref = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
  CHECK(kl(Categorical({0.5, 0.5}), Categorical({0.9, 0.1})) == doctest::Approx(ref));
  CHECK(ref == doctest::Approx(0.51083).epsilon(1e-4));
  const Distribution p = Categorical({0.5, 0.5}), q = Categorical({0.9, 0.1});
  CHECK(kl(p, q, KlDirection::kForward) == doctest::Approx(ref));
  CHECK(kl(p, q, KlDirection::kReverse) == doctest::Approx(kl(Categorical({0.9, 0.1}), Categorical({0.5, 0.5}))));
}

TEST_CASE("kl closed forms match quadrature") {
  const Gaussian1D p(0.3, 0.6), q(-0.4, 1.3);
  const double zg = simpson([&](double a) { return std::exp(log_prob(p, a)) * (log_prob(p, a) - log_prob(q, a)); }, -10, 10, 40000);
  CHECK(kl(p, q) == doctest::Approx(zg).epsilon(1e-8));
  const ScaledBeta bp(2.5, 1.2, -1.5, 1.5), bq(1.1, 3.0, -1.5, 1.5);
  const double zb = beta_quadrature(
      [&](double a) {
        const double lp = log_prob(bp, a);
        return std::isfinite(lp) ? std::exp(lp) * (lp - log_prob(bq, a)) : 0.0;
      },
      bp);
  CHECK(kl(bp, bq) == doctest::Approx(zb).epsilon(1e-6));
}

TEST_CASE("kl is non-negative and zero only on equal arguments") {
  Rng rng(14);
  for (int t = 0; t < 200; ++t) {
    const Gaussian1D a(rng.uniform01(), 0.5 + rng.uniform01()), b(rng.uniform01(), 0.5 + rng.uniform01());
    CHECK(kl(a, b) > 0.0);
    CHECK(kl(a, a) == 0.0);
    const ScaledBeta c(1 + 3 * rng.uniform01(), 1 + 3 * rng.uniform01(), 0, 1), e(1 + 3 * rng.uniform01(), 1 + 3 * rng.uniform01(), 0, 1);
    CHECK(kl(c, e) > 0.0);
    CHECK(kl(c, c) == doctest::Approx(0.0).epsilon(1e-14));
    std::vector<double> x(4), y(4);
    double sx = 0, sy = 0;
    for (int i = 0; i < 4; ++i) {
      sx += x[i] = 0.05 + rng.uniform01();
      sy += y[i] = 0.05 + rng.uniform01();
    }
    for (int i = 0; i < 4; ++i) {
      x[i] /= sx;
      y[i] /= sy;
    }
    CHECK(kl(Categorical(x), Categorical(y)) > 0.0);
    CHECK(kl(Categorical(x), Categorical(x)) == 0.0);
  }
}

TEST_CASE("kl rejects mismatched arguments") {
  CHECK_THROWS_AS(kl(ScaledBeta(2, 2, 0, 1), ScaledBeta(2, 2, 0, 2)), InvalidParameter);
  CHECK_THROWS_AS(kl(Categorical({1.0}), Categorical({0.5, 0.5})), InvalidParameter);
  CHECK_THROWS_AS(kl(Distribution(Gaussian1D(0, 1)), Distribution(ScaledBeta(2, 2, 0, 1))), InvalidParameter);
}

TEST_CASE("Beta mean and mode") {
  const ScaledBeta b(3, 2, -1, 1);
  CHECK(b.mean() == doctest::Approx(-1 + 2 * 0.6));
  CHECK(b.mode() == doctest::Approx(-1 + 2 * (2.0 / 3.0)));
  CHECK(ScaledBeta(1, 1, -5, 5).mode() == doctest::Approx(0.0));
}

}
