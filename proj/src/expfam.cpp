#include "amps/expfam.hpp"

#include <atomic>
#include <cmath>
#include <numbers>
#include <sstream>

#include "amps/errors.hpp"
#include "amps/special.hpp"

namespace amps::expfam {

namespace {

std::atomic<bool> g_fault{false};

using special::digamma;
using special::log_gamma;

void require_width(const Family& family, std::size_t got) {
  if (got != family.width()) {
    std::ostringstream os;
    os << family.name() << ": expected row width " << family.width() << ", got " << got;
    throw ShapeMismatch(os.str());
  }
}

std::string format_row(Row row) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < row.size() && i < 6; ++i) os << (i ? ", " : "") << row[i];
  if (row.size() > 6) os << ", ...";
  os << ")";
  return os.str();
}

// Shared Dirichlet form over natural row beta = alpha - 1.
double dirichlet_log_partition(Row beta) {
  double total = 0.0;
  double sum_alpha = 0.0;
  for (double b : beta) {
    total += log_gamma(b + 1.0);
    sum_alpha += b + 1.0;
  }
  return total - log_gamma(sum_alpha);
}

double squared_norm(Row v, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += v[i] * v[i];
  return s;
}

}  // namespace

std::size_t Family::width() const {
  switch (kind) {
    case FamilyKind::GaussianKnownVar: return 2;
    case FamilyKind::Dirichlet: return dim;
    case FamilyKind::Beta: return 2;
    case FamilyKind::IsotropicMVN: return dim + 1;
  }
  return 0;
}

std::size_t Family::value_width() const {
  switch (kind) {
    case FamilyKind::GaussianKnownVar: return 1;
    case FamilyKind::Dirichlet: return dim;
    case FamilyKind::Beta: return 1;
    case FamilyKind::IsotropicMVN: return dim;
  }
  return 0;
}

std::string Family::name() const {
  switch (kind) {
    case FamilyKind::GaussianKnownVar: return "gaussian";
    case FamilyKind::Dirichlet: return "dirichlet(" + std::to_string(dim) + ")";
    case FamilyKind::Beta: return "beta";
    case FamilyKind::IsotropicMVN: return "isotropic_mvn(" + std::to_string(dim) + ")";
  }
  return "unknown";
}

bool in_domain(const Family& family, Row row) {
  if (row.size() != family.width()) return false;
  for (double v : row)
    if (!std::isfinite(v)) return false;
  switch (family.kind) {
    case FamilyKind::GaussianKnownVar:
    case FamilyKind::IsotropicMVN:
      return row.back() < 0.0;
    case FamilyKind::Dirichlet:
    case FamilyKind::Beta:
      for (double b : row)
        if (!(b > -1.0)) return false;
      return true;
  }
  return false;
}

void check_domain(const Family& family, Row row) {
  require_width(family, row.size());
  if (in_domain(family, row)) return;
  std::string what;
  switch (family.kind) {
    case FamilyKind::GaussianKnownVar:
    case FamilyKind::IsotropicMVN:
      what = "requires finite entries and nu < 0";
      break;
    case FamilyKind::Dirichlet:
    case FamilyKind::Beta:
      what = "requires finite entries > -1 (alpha > 0)";
      break;
  }
  throw DomainError(family.name() + " row " + format_row(row) + " outside domain: " + what);
}

double log_partition(const Family& family, Row row) {
  check_domain(family, row);
  double value = 0.0;
  switch (family.kind) {
    case FamilyKind::GaussianKnownVar: {
      const double eta = row[0], nu = row[1];
      value = -eta * eta / (4.0 * nu) - 0.5 * std::log(-2.0 * nu);
      break;
    }
    case FamilyKind::Dirichlet:
    case FamilyKind::Beta:
      value = dirichlet_log_partition(row);
      break;
    case FamilyKind::IsotropicMVN: {
      const std::size_t d = family.dim;
      const double nu = row[d];
      value = -squared_norm(row, d) / (4.0 * nu) - 0.5 * static_cast<double>(d) * std::log(-2.0 * nu);
      break;
    }
  }
  if (g_fault.load(std::memory_order_relaxed)) value += 0.3 * std::sin(5.0 * row[0]);
  return value;
}

std::vector<double> grad_log_partition(const Family& family, Row row) {
  check_domain(family, row);
  std::vector<double> g(row.size());
  switch (family.kind) {
    case FamilyKind::GaussianKnownVar: {
      const double eta = row[0], nu = row[1];
      g[0] = -eta / (2.0 * nu);
      g[1] = eta * eta / (4.0 * nu * nu) - 1.0 / (2.0 * nu);
      break;
    }
    case FamilyKind::Dirichlet:
    case FamilyKind::Beta: {
      double sum_alpha = 0.0;
      for (double b : row) sum_alpha += b + 1.0;
      const double psi_total = digamma(sum_alpha);
      for (std::size_t i = 0; i < row.size(); ++i) g[i] = digamma(row[i] + 1.0) - psi_total;
      break;
    }
    case FamilyKind::IsotropicMVN: {
      const std::size_t d = family.dim;
      const double nu = row[d];
      for (std::size_t i = 0; i < d; ++i) g[i] = -row[i] / (2.0 * nu);
      g[d] = squared_norm(row, d) / (4.0 * nu * nu) - static_cast<double>(d) / (2.0 * nu);
      break;
    }
  }
  return g;
}

std::vector<double> to_natural(const Family& family, Row conventional) {
  require_width(family, conventional.size());
  std::vector<double> out(conventional.size());
  switch (family.kind) {
    case FamilyKind::GaussianKnownVar:
    case FamilyKind::IsotropicMVN: {
      const double s2 = conventional.back();
      if (!(s2 > 0.0) || !std::isfinite(s2))
        throw DomainError(family.name() + ": variance must be positive, got " + format_row(conventional));
      for (std::size_t i = 0; i + 1 < conventional.size(); ++i) out[i] = conventional[i] / s2;
      out.back() = -1.0 / (2.0 * s2);
      break;
    }
    case FamilyKind::Dirichlet:
    case FamilyKind::Beta:
      for (std::size_t i = 0; i < conventional.size(); ++i) {
        if (!(conventional[i] > 0.0) || !std::isfinite(conventional[i]))
          throw DomainError(family.name() + ": concentrations must be positive, got " +
                            format_row(conventional));
        out[i] = conventional[i] - 1.0;
      }
      break;
  }
  return out;
}

std::vector<double> to_conventional(const Family& family, Row natural) {
  check_domain(family, natural);
  std::vector<double> out(natural.size());
  switch (family.kind) {
    case FamilyKind::GaussianKnownVar:
    case FamilyKind::IsotropicMVN: {
      const double s2 = -1.0 / (2.0 * natural.back());
      for (std::size_t i = 0; i + 1 < natural.size(); ++i) out[i] = natural[i] * s2;
      out.back() = s2;
      break;
    }
    case FamilyKind::Dirichlet:
    case FamilyKind::Beta:
      for (std::size_t i = 0; i < natural.size(); ++i) out[i] = natural[i] + 1.0;
      break;
  }
  return out;
}

std::vector<double> mean_value(const Family& family, Row row) {
  std::vector<double> conv = to_conventional(family, row);
  switch (family.kind) {
    case FamilyKind::GaussianKnownVar:
    case FamilyKind::IsotropicMVN:
      conv.pop_back();
      return conv;
    case FamilyKind::Dirichlet: {
      double total = 0.0;
      for (double a : conv) total += a;
      for (double& a : conv) a /= total;
      return conv;
    }
    case FamilyKind::Beta:
      return {conv[0] / (conv[0] + conv[1])};
  }
  return {};
}

double log_density(const Family& family, Row row, std::span<const double> value) {
  if (value.size() != family.value_width())
    throw ShapeMismatch(family.name() + ": value has wrong width");
  const std::vector<double> conv = to_conventional(family, row);
  switch (family.kind) {
    case FamilyKind::GaussianKnownVar:
    case FamilyKind::IsotropicMVN: {
      const std::size_t d = value.size();
      const double s2 = conv.back();
      double sq = 0.0;
      for (std::size_t i = 0; i < d; ++i) sq += (value[i] - conv[i]) * (value[i] - conv[i]);
      return -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi * s2) - sq / (2.0 * s2);
    }
    case FamilyKind::Dirichlet: {
      double sum_alpha = 0.0, acc = 0.0;
      for (std::size_t i = 0; i < conv.size(); ++i) {
        sum_alpha += conv[i];
        acc += (conv[i] - 1.0) * std::log(value[i]) - log_gamma(conv[i]);
      }
      return acc + log_gamma(sum_alpha);
    }
    case FamilyKind::Beta: {
      const double a = conv[0], b = conv[1], p = value[0];
      return log_gamma(a + b) - log_gamma(a) - log_gamma(b) + (a - 1.0) * std::log(p) +
             (b - 1.0) * std::log1p(-p);
    }
  }
  return 0.0;
}

std::vector<double> sample(const Family& family, Row row, Rng& rng) {
  const std::vector<double> conv = to_conventional(family, row);
  switch (family.kind) {
    case FamilyKind::GaussianKnownVar:
    case FamilyKind::IsotropicMVN: {
      const double sd = std::sqrt(conv.back());
      std::vector<double> out(conv.size() - 1);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = rng.normal(conv[i], sd);
      return out;
    }
    case FamilyKind::Dirichlet:
      return rng.dirichlet(conv);
    case FamilyKind::Beta:
      return {rng.beta(conv[0], conv[1])};
  }
  return {};
}

namespace testing {
void set_log_partition_fault(bool enabled) { g_fault.store(enabled); }
bool log_partition_fault() { return g_fault.load(); }
}  // namespace testing

}  // namespace amps::expfam
