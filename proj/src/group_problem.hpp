#pragma once

// Shared machinery for evaluating the AMPS objective of one symmetry group.

#include <cstddef>
#include <vector>

#include "amps/merge.hpp"

namespace amps::detail {

class GroupProblem {
 public:
  GroupProblem(const FactorizedPosterior& prior, const std::vector<FactorizedPosterior>& locals,
               const SymmetryGroup& group);

  std::size_t agents() const { return locals_.size(); }
  std::size_t components() const { return k_; }
  std::size_t factors() const { return prior_.size(); }
  const NaturalParams& prior(std::size_t j) const { return *prior_[j]; }
  const NaturalParams& local(std::size_t i, std::size_t j) const { return *locals_[i][j]; }

  /// Merged rows of every group factor for the given permutations.
  std::vector<RowMatrix> merge(const PermutationSet& perms) const;
  /// Merged rows with agent `skip` left out.
  std::vector<RowMatrix> merge_without(const PermutationSet& perms, std::size_t skip) const;
  void add_agent(std::vector<RowMatrix>& merged, std::size_t agent, const Permutation& perm, double sign) const;

  /// Sum of log-partitions over the merged factors.
  double objective(const std::vector<RowMatrix>& merged) const;

  bool additive() const { return additive_; }
  /// Per-component term of factor j at merged row data (one entry for Joint).
  double slot_term(std::size_t j, const double* row) const;
  /// Sum over factors of slot_term for component slot k.
  double slot_value(const std::vector<RowMatrix>& merged, std::size_t k) const;

 private:
  std::vector<const NaturalParams*> prior_;
  std::vector<std::vector<const NaturalParams*>> locals_;
  std::size_t k_ = 0;
  bool additive_ = true;
};

}  // namespace amps::detail
