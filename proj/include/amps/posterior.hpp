#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "amps/expfam.hpp"

namespace amps {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::span<const double> row_span(const RowMatrix& m, Eigen::Index k) {
  return {m.data() + k * m.cols(), static_cast<std::size_t>(m.cols())};
}

/// How a factor's distribution is laid out over its K component rows.
enum class Layout {
  /// Each row is an independent distribution of the family.
  PerRow,
  /// One distribution spans the component axis: rows are K x 1 and the
  /// family width is K (e.g. Dirichlet mixture weights).
  Joint,
};

/// K x S natural parameters; row k belongs to component k.
struct NaturalParams {
  expfam::Family family;
  Layout layout = Layout::PerRow;
  RowMatrix rows;

  std::size_t components() const { return static_cast<std::size_t>(rows.rows()); }

  /// Shape and domain checks; throws ShapeMismatch or DomainError.
  void validate() const;
  /// Sum of log-partitions over the factor (one term for Joint layout).
  double log_partition() const;
  /// Component-axis view of the natural parameters, laid out as rows of the
  /// family (Joint factors become a single row).
  RowMatrix family_rows() const;
};

using Permutation = std::vector<std::size_t>;

/// Named factors plus the coupled-symmetry groups that permute jointly.
struct FactorizedPosterior {
  std::map<std::string, NaturalParams> factors;
  std::vector<std::vector<std::string>> symmetry_groups;

  const NaturalParams& at(const std::string& name) const;
  NaturalParams& at(const std::string& name);

  /// Group invariants plus every factor's validate().
  void validate() const;
  /// Same factor names, families, layouts and shapes.
  bool same_structure(const FactorizedPosterior& other) const;
  /// Throws ShapeMismatch naming the first structural difference.
  void require_same_structure(const FactorizedPosterior& other) const;
  /// Component count shared by a symmetry group.
  std::size_t group_components(const std::vector<std::string>& group) const;
  /// Returns a copy whose group factors have row k replaced by row perm[k].
  FactorizedPosterior permuted(const std::vector<std::string>& group, const Permutation& perm) const;
};

bool is_permutation(const Permutation& perm, std::size_t k);
Permutation identity_permutation(std::size_t k);

}  // namespace amps
