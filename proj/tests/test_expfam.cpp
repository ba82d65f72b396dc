#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"

#include "amps/errors.hpp"
#include "amps/expfam.hpp"
#include "amps/random.hpp"
#include "amps/special.hpp"

using namespace amps;
using expfam::Family;

namespace {

const std::vector<Family> kFamilies{Family::gaussian(), Family::dirichlet(3), Family::dirichlet(6), Family::beta(),
                                    Family::isotropic_mvn(4)};

std::vector<double> random_row(const Family& f, Rng& rng) {
  std::vector<double> row(f.width());
  if (f.kind == expfam::FamilyKind::Dirichlet || f.kind == expfam::FamilyKind::Beta) {
    for (double& b : row) b = -0.8 + 15.0 * rng.uniform();
  } else {
    for (std::size_t i = 0; i + 1 < row.size(); ++i) row[i] = rng.normal(0.0, 2.0);
    row.back() = -(0.1 + 4.0 * rng.uniform());
  }
  return row;
}

}  // namespace

TEST_SUITE("expfam") {
  TEST_CASE("log_partition of the prior rows") {
    CHECK(expfam::log_partition(Family::gaussian(), std::vector{0.0, -0.25}) ==
          doctest::Approx(-0.5 * std::log(0.5)).epsilon(1e-14));
    CHECK(expfam::log_partition(Family::gaussian(), std::vector{0.0, -0.25}) == doctest::Approx(0.346574).epsilon(1e-6));
    CHECK(expfam::log_partition(Family::dirichlet(3), std::vector{0.0, 0.0, 0.0}) ==
          doctest::Approx(-std::log(2.0)).epsilon(1e-14));
    CHECK(expfam::log_partition(Family::beta(), std::vector{0.0, 0.0}) == doctest::Approx(0.0));
  }

  TEST_CASE("Gaussian log_partition matches the closed form") {
    const double eta = 1.3, nu = -0.7;
    CHECK(expfam::log_partition(Family::gaussian(), std::vector{eta, nu}) ==
          doctest::Approx(-eta * eta / (4 * nu) - 0.5 * std::log(-2 * nu)));
    const std::vector<double> mvn{0.5, -1.0, 2.0, -0.3};
    const double sq = 0.25 + 1.0 + 4.0;
    CHECK(expfam::log_partition(Family::isotropic_mvn(3), mvn) ==
          doctest::Approx(-sq / (4 * -0.3) - 1.5 * std::log(0.6)));
  }

  TEST_CASE("out-of-domain rows raise DomainError") {
    CHECK_THROWS_AS(expfam::log_partition(Family::gaussian(), std::vector{0.0, 0.0}), DomainError);
    CHECK_THROWS_AS(expfam::log_partition(Family::gaussian(), std::vector{1.0, 0.5}), DomainError);
    CHECK_THROWS_AS(expfam::log_partition(Family::dirichlet(2), std::vector{-1.0, 0.0}), DomainError);
    CHECK_THROWS_AS(expfam::log_partition(Family::beta(), std::vector{0.0, -2.0}), DomainError);
    CHECK_THROWS_AS(expfam::grad_log_partition(Family::isotropic_mvn(2), std::vector{0.0, 0.0, 1.0}), DomainError);
    CHECK_THROWS_AS(expfam::to_natural(Family::gaussian(), std::vector{0.0, -1.0}), DomainError);
    CHECK_THROWS_AS(expfam::to_natural(Family::dirichlet(2), std::vector{1.0, 0.0}), DomainError);
    CHECK_FALSE(expfam::in_domain(Family::gaussian(), std::vector{0.0, 0.0}));
    CHECK(expfam::in_domain(Family::gaussian(), std::vector{0.0, -1.0}));
  }

  TEST_CASE("conversions") {
    auto g = expfam::to_natural(Family::gaussian(), std::vector{0.0, 2.0});
    CHECK(g[0] == 0.0);
    CHECK(g[1] == doctest::Approx(-0.25));
    g = expfam::to_natural(Family::gaussian(), std::vector{1.0, 0.5});
    CHECK(g[0] == doctest::Approx(2.0));
    CHECK(g[1] == doctest::Approx(-1.0));
    const auto d = expfam::to_natural(Family::dirichlet(3), std::vector{1.0, 1.0, 1.0});
    CHECK(d == std::vector{0.0, 0.0, 0.0});
    const auto b = expfam::to_natural(Family::beta(), std::vector{2.0, 5.0});
    CHECK(b == std::vector{1.0, 4.0});
  }

  TEST_CASE("round trip to_conventional(to_natural(x)) = x") {
    Rng rng(11);
    for (const Family& f : kFamilies) {
      for (int t = 0; t < 100; ++t) {
        const auto nat = random_row(f, rng);
        const auto conv = expfam::to_conventional(f, nat);
        const auto back = expfam::to_natural(f, conv);
        const auto again = expfam::to_conventional(f, back);
        for (std::size_t i = 0; i < conv.size(); ++i)
          CHECK(std::abs(again[i] - conv[i]) <= 1e-12 * std::max(1.0, std::abs(conv[i])));
      }
    }
  }

  TEST_CASE("Dirichlet gradient at the flat prior") {
    const auto g = expfam::grad_log_partition(Family::dirichlet(3), std::vector{0.0, 0.0, 0.0});
    for (double v : g) CHECK(v == doctest::Approx(-1.5).epsilon(1e-12));
    const auto gg = expfam::grad_log_partition(Family::gaussian(), std::vector{0.0, -0.25});
    CHECK(gg[0] == doctest::Approx(0.0));
  }

  TEST_CASE("gradient matches central finite differences") {
    Rng rng(5);
    for (const Family& f : kFamilies) {
      for (int t = 0; t < 100; ++t) {
        auto row = random_row(f, rng);
        const auto g = expfam::grad_log_partition(f, row);
        for (std::size_t i = 0; i < row.size(); ++i) {
          const double h = 1e-5 * std::max(1.0, std::abs(row[i]));
          auto up = row, down = row;
          up[i] += h;
          down[i] -= h;
          const double fd = (expfam::log_partition(f, up) - expfam::log_partition(f, down)) / (2 * h);
          CHECK(std::abs(fd - g[i]) <= 1e-5 * std::max(1.0, std::abs(g[i])));
        }
      }
    }
  }

  TEST_CASE("log_partition is convex") {
    Rng rng(7);
    for (const Family& f : kFamilies) {
      for (int t = 0; t < 500; ++t) {
        const auto x = random_row(f, rng), y = random_row(f, rng);
        const double s = rng.uniform();
        std::vector<double> mix(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) mix[i] = s * x[i] + (1 - s) * y[i];
        CHECK(expfam::log_partition(f, mix) <=
              s * expfam::log_partition(f, x) + (1 - s) * expfam::log_partition(f, y) + 1e-9);
      }
    }
  }

  TEST_CASE("Dirichlet log_partition ignores the order of entries") {
    Rng rng(3);
    const Family f = Family::dirichlet(5);
    for (int t = 0; t < 50; ++t) {
      auto row = random_row(f, rng);
      const double a = expfam::log_partition(f, row);
      rng.shuffle(row);
      CHECK(std::abs(expfam::log_partition(f, row) - a) <= 1e-12 * std::max(1.0, std::abs(a)));
    }
  }

  TEST_CASE("mean_value equals the gradient where they coincide") {
    // E[theta] for Gaussian rows is the mean; the first gradient entry is E[x].
    const std::vector<double> row{1.5, -0.5};
    CHECK(expfam::mean_value(Family::gaussian(), row)[0] == doctest::Approx(1.5));
    CHECK(expfam::grad_log_partition(Family::gaussian(), row)[0] == doctest::Approx(1.5));
    const auto m = expfam::mean_value(Family::dirichlet(3), std::vector{1.0, 0.0, 2.0});
    CHECK(m[0] == doctest::Approx(2.0 / 6.0));
    CHECK(m[2] == doctest::Approx(3.0 / 6.0));
    CHECK(expfam::mean_value(Family::beta(), std::vector{1.0, 3.0})[0] == doctest::Approx(2.0 / 6.0));
  }

  TEST_CASE("densities are normalized") {
    // Beta(2, 3) on a grid and a Gaussian on a grid.
    double total = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      const double x = (i + 0.5) / n;
      total += std::exp(expfam::log_density(Family::beta(), std::vector{1.0, 2.0}, std::vector{x})) / n;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    total = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = -10.0 + 20.0 * (i + 0.5) / n;
      total += std::exp(expfam::log_density(Family::gaussian(), std::vector{0.4, -0.5}, std::vector{x})) * 20.0 / n;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    // Dirichlet(1,1,1) is uniform on the simplex: density 2.
    CHECK(expfam::log_density(Family::dirichlet(3), std::vector{0.0, 0.0, 0.0}, std::vector{0.2, 0.3, 0.5}) ==
          doctest::Approx(std::log(2.0)));
  }

  TEST_CASE("sample moments match the mean") {
    Rng rng(42);
    const std::vector<double> beta{2.0, 0.0, 5.0};
    const auto mean = expfam::mean_value(Family::dirichlet(3), beta);
    std::vector<double> acc(3, 0.0);
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      const auto s = expfam::sample(Family::dirichlet(3), beta, rng);
      for (int k = 0; k < 3; ++k) acc[k] += s[k] / n;
    }
    for (int k = 0; k < 3; ++k) CHECK(acc[k] == doctest::Approx(mean[k]).epsilon(0.02));
  }

  TEST_CASE("special functions") {
    CHECK(special::log_gamma(1.0) == doctest::Approx(0.0));
    CHECK(special::log_gamma(11.0) == doctest::Approx(std::log(3628800.0)).epsilon(1e-14));
    CHECK(special::log_gamma(0.5) == doctest::Approx(0.5 * std::log(std::numbers::pi)).epsilon(1e-14));
    CHECK(special::digamma(1.0) == doctest::Approx(-std::numbers::egamma).epsilon(1e-13));
    CHECK(special::digamma(3.0) == doctest::Approx(1.5 - std::numbers::egamma).epsilon(1e-13));
    for (double x : {0.01, 0.3, 1.7, 9.0, 250.0}) {
      const double h = 1e-6 * x;
      const double fd = (special::log_gamma(x + h) - special::log_gamma(x - h)) / (2 * h);
      CHECK(special::digamma(x) == doctest::Approx(fd).epsilon(1e-6));
    }
    CHECK(special::log_sum_exp(std::vector{1000.0, 1000.0}) == doctest::Approx(1000.0 + std::log(2.0)));
  }
}
