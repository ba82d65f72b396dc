#include "amps/posterior.hpp"

#include <algorithm>
#include <set>

#include "amps/errors.hpp"

namespace amps {

void NaturalParams::validate() const {
  if (rows.rows() < 1) throw ShapeMismatch("factor has no component rows");
  if (layout == Layout::Joint) {
    if (rows.cols() != 1 || family.width() != static_cast<std::size_t>(rows.rows()))
      throw ShapeMismatch("joint factor must be K x 1 with family width K");
    expfam::check_domain(family, std::span<const double>(rows.data(), rows.size()));
    return;
  }
  if (static_cast<std::size_t>(rows.cols()) != family.width())
    throw ShapeMismatch(family.name() + ": row width " + std::to_string(rows.cols()) +
                        " does not match family width " + std::to_string(family.width()));
  for (Eigen::Index k = 0; k < rows.rows(); ++k) expfam::check_domain(family, row_span(rows, k));
}

double NaturalParams::log_partition() const {
  if (layout == Layout::Joint)
    return expfam::log_partition(family, std::span<const double>(rows.data(), rows.size()));
  double total = 0.0;
  for (Eigen::Index k = 0; k < rows.rows(); ++k) total += expfam::log_partition(family, row_span(rows, k));
  return total;
}

RowMatrix NaturalParams::family_rows() const {
  if (layout == Layout::Joint) {
    RowMatrix out(1, rows.rows());
    for (Eigen::Index k = 0; k < rows.rows(); ++k) out(0, k) = rows(k, 0);
    return out;
  }
  return rows;
}

const NaturalParams& FactorizedPosterior::at(const std::string& name) const {
  auto it = factors.find(name);
  if (it == factors.end()) throw ShapeMismatch("missing factor '" + name + "'");
  return it->second;
}

NaturalParams& FactorizedPosterior::at(const std::string& name) {
  auto it = factors.find(name);
  if (it == factors.end()) throw ShapeMismatch("missing factor '" + name + "'");
  return it->second;
}

void FactorizedPosterior::validate() const {
  std::set<std::string> seen;
  for (const auto& group : symmetry_groups) {
    if (group.empty()) throw ShapeMismatch("empty symmetry group");
    for (const auto& name : group) {
      if (!seen.insert(name).second)
        throw ShapeMismatch("factor '" + name + "' appears in more than one symmetry group");
      at(name);
    }
    group_components(group);
  }
  for (const auto& [name, factor] : factors) {
    try {
      factor.validate();
    } catch (const DomainError& e) {
      throw DomainError("factor '" + name + "': " + e.what());
    } catch (const ShapeMismatch& e) {
      throw ShapeMismatch("factor '" + name + "': " + e.what());
    }
  }
}

bool FactorizedPosterior::same_structure(const FactorizedPosterior& other) const {
  try {
    require_same_structure(other);
    return true;
  } catch (const ShapeMismatch&) {
    return false;
  }
}

void FactorizedPosterior::require_same_structure(const FactorizedPosterior& other) const {
  if (factors.size() != other.factors.size()) throw ShapeMismatch("different number of factors");
  for (const auto& [name, factor] : factors) {
    auto it = other.factors.find(name);
    if (it == other.factors.end()) throw ShapeMismatch("factor '" + name + "' missing");
    const NaturalParams& o = it->second;
    if (!(factor.family == o.family) || factor.layout != o.layout)
      throw ShapeMismatch("factor '" + name + "' has a different family or layout");
    if (factor.rows.rows() != o.rows.rows() || factor.rows.cols() != o.rows.cols())
      throw ShapeMismatch("factor '" + name + "' has a different shape");
  }
}

std::size_t FactorizedPosterior::group_components(const std::vector<std::string>& group) const {
  std::size_t k = 0;
  for (const auto& name : group) {
    const std::size_t kj = at(name).components();
    if (k == 0) k = kj;
    if (kj != k) throw ShapeMismatch("symmetry group members have different component counts");
  }
  return k;
}

FactorizedPosterior FactorizedPosterior::permuted(const std::vector<std::string>& group,
                                                  const Permutation& perm) const {
  const std::size_t k = group_components(group);
  if (!is_permutation(perm, k)) throw ShapeMismatch("not a permutation of the group components");
  FactorizedPosterior out = *this;
  for (const auto& name : group) {
    const RowMatrix& src = at(name).rows;
    RowMatrix& dst = out.at(name).rows;
    for (std::size_t r = 0; r < k; ++r) dst.row(r) = src.row(perm[r]);
  }
  return out;
}

bool is_permutation(const Permutation& perm, std::size_t k) {
  if (perm.size() != k) return false;
  std::vector<bool> hit(k, false);
  for (std::size_t v : perm) {
    if (v >= k || hit[v]) return false;
    hit[v] = true;
  }
  return true;
}

Permutation identity_permutation(std::size_t k) {
  Permutation p(k);
  for (std::size_t i = 0; i < k; ++i) p[i] = i;
  return p;
}

}  // namespace amps
