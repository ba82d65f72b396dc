#pragma once

// Exponential-family natural parameterizations used by the merge objectives.
//
// Row layouts (natural form):
//   GaussianKnownVar   (eta, nu)            eta = mu / s2, nu = -1 / (2 s2)
//   Dirichlet(W)       (beta_1..beta_W)     beta = alpha - 1
//   Beta               (beta_a, beta_b)     beta = (a - 1, b - 1)
//   IsotropicMVN(D)    (eta_1..eta_D, nu)   eta = mu / s2, nu = -1 / (2 s2)
//
// Conventional layouts: (mu, s2), alpha, (a, b), (mu_1..mu_D, s2).
//
// log_partition drops family-constant terms, matching the merge objectives:
//   Gaussian      -eta^2 / (4 nu) - 1/2 log(-2 nu)
//   Dirichlet     sum lgamma(beta_w + 1) - lgamma(sum (beta_w + 1))
//   IsotropicMVN  -|eta|^2 / (4 nu) - D/2 log(-2 nu)

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "amps/random.hpp"

namespace amps::expfam {

enum class FamilyKind { GaussianKnownVar, Dirichlet, Beta, IsotropicMVN };

struct Family {
  FamilyKind kind = FamilyKind::GaussianKnownVar;
  /// Dirichlet width or MVN dimension; unused otherwise.
  std::size_t dim = 0;

  static Family gaussian() { return {FamilyKind::GaussianKnownVar, 1}; }
  static Family dirichlet(std::size_t width) { return {FamilyKind::Dirichlet, width}; }
  static Family beta() { return {FamilyKind::Beta, 2}; }
  static Family isotropic_mvn(std::size_t d) { return {FamilyKind::IsotropicMVN, d}; }

  /// Number of natural parameters in one row.
  std::size_t width() const;
  /// Number of entries in one value (a draw) of the distribution.
  std::size_t value_width() const;
  std::string name() const;

  friend bool operator==(const Family&, const Family&) = default;
};

using Row = std::span<const double>;

bool in_domain(const Family& family, Row row);
/// Throws DomainError describing the first violated constraint.
void check_domain(const Family& family, Row row);

double log_partition(const Family& family, Row row);
std::vector<double> grad_log_partition(const Family& family, Row row);

std::vector<double> to_natural(const Family& family, Row conventional);
std::vector<double> to_conventional(const Family& family, Row natural);

/// E[theta] under the distribution with the given natural row.
std::vector<double> mean_value(const Family& family, Row row);

/// Normalized log density (w.r.t. Lebesgue measure on the support; the
/// Dirichlet uses the first W-1 coordinates of the simplex as chart).
double log_density(const Family& family, Row row, std::span<const double> value);

std::vector<double> sample(const Family& family, Row row, Rng& rng);

namespace testing {
/// Adds a non-convex bump to every log_partition result. Used to check that
/// the self-test battery detects a corrupted log-partition.
void set_log_partition_fault(bool enabled);
bool log_partition_fault();
}  // namespace testing

}  // namespace amps::expfam
