#pragma once

// Posterior combination.
//
// The Bayes-rule merge of N local posteriors against a shared prior is
//   lambda = (1 - N) lambda_0 + sum_i P_i lambda_i
// in natural coordinates, where P_i relabels agent i's component rows
// (slot k receives agent row perm_i[k]). The symmetry-aware merge picks the
// permutations maximizing the sum of log-partitions of the merged factors in
// each coupled symmetry group.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "amps/posterior.hpp"

namespace amps {

using SymmetryGroup = std::vector<std::string>;

struct PermutationSet {
  std::vector<Permutation> perms;  // one per agent

  static PermutationSet identity(std::size_t agents, std::size_t k);
  bool valid(std::size_t k) const;
  /// Lexicographic order on the tuple of permutations.
  friend bool operator<(const PermutationSet& a, const PermutationSet& b) { return a.perms < b.perms; }
  friend bool operator==(const PermutationSet&, const PermutationSet&) = default;
};

struct TracePoint {
  std::size_t iteration = 0;
  double objective = 0.0;
};

struct GroupMerge {
  SymmetryGroup group;
  PermutationSet perms;
  double objective = 0.0;
  std::vector<TracePoint> trace;
};

struct MergeResult {
  FactorizedPosterior merged;
  std::vector<GroupMerge> groups;
  /// Sum of the group objectives.
  double objective = 0.0;
};

/// (1 - N) lambda_0 + sum_i lambda_i for every factor. Throws ShapeMismatch or
/// DomainError (naming the factor) when the merged rows are invalid.
FactorizedPosterior naive_merge(const FactorizedPosterior& prior, const std::vector<FactorizedPosterior>& locals);

/// sum_j A_j((1 - N) lambda_0j + sum_i P_i lambda_ij) over the group's factors.
double amps_objective(const FactorizedPosterior& prior, const std::vector<FactorizedPosterior>& locals,
                      const PermutationSet& perms, const SymmetryGroup& group);

/// Merges the group's factors with the given permutations and the remaining
/// factors naively.
FactorizedPosterior merge_with_permutations(const FactorizedPosterior& prior,
                                            const std::vector<FactorizedPosterior>& locals,
                                            const std::vector<std::pair<SymmetryGroup, PermutationSet>>& choices);

/// True when every factor in the group decomposes into per-component terms
/// (up to a permutation-invariant constant).
bool row_additive(const FactorizedPosterior& posterior, const SymmetryGroup& group);

/// True when the prior's component rows are identical within every group factor.
bool exchangeable_prior(const FactorizedPosterior& prior, const SymmetryGroup& group);

struct SwapOptions {
  std::uint64_t seed = 0;
  /// Restart 0 starts from `init` (or identity); the rest start at random.
  std::size_t restarts = 10;
  std::optional<PermutationSet> init;
  /// Minimum increase for accepting a swap.
  double accept_threshold = 1e-12;
};

MergeResult optimize_swap(const FactorizedPosterior& prior, const std::vector<FactorizedPosterior>& locals,
                          const SymmetryGroup& group, const SwapOptions& options = {});

struct MatchingOptions {
  std::uint64_t seed = 0;
  std::optional<PermutationSet> init;
  /// A sweep improving the objective by less than this terminates the search.
  double threshold = 1e-10;
  std::size_t max_sweeps = 1000;
};

/// Iterated per-agent maximum-weight bipartite matching. Throws
/// NotRowAdditive if the group objective does not decompose over components.
MergeResult optimize_matching(const FactorizedPosterior& prior, const std::vector<FactorizedPosterior>& locals,
                              const SymmetryGroup& group, const MatchingOptions& options = {});

struct ExhaustiveOptions {
  double max_candidates = 1e7;
};

/// Global optimum by enumeration. With an exchangeable prior agent 0 is fixed
/// to the identity; otherwise all (K!)^N tuples are searched. Throws TooLarge
/// when the candidate count exceeds the bound.
MergeResult optimize_exhaustive(const FactorizedPosterior& prior, const std::vector<FactorizedPosterior>& locals,
                                const SymmetryGroup& group, const ExhaustiveOptions& options = {});

enum class MergeMethod { Swap, Matching, Exhaustive };

struct AmpsOptions {
  MergeMethod method = MergeMethod::Matching;
  std::uint64_t seed = 0;
  std::size_t swap_restarts = 10;
};

/// Runs the optimizer independently for each symmetry group and merges all
/// other factors naively.
MergeResult amps_merge(const FactorizedPosterior& prior, const std::vector<FactorizedPosterior>& locals,
                       const AmpsOptions& options = {});

/// Permutation maximizing sum_k weights(k, perm[k]); ties resolve to the
/// lexicographically smallest optimal permutation.
Permutation assignment_solve(const RowMatrix& weights);

/// Uniform mixture over the K! jointly permuted copies of a posterior's group
/// factors. Values passed to the density are per-factor matrices: one row per
/// component for PerRow factors, a single row of K entries for Joint factors.
class SymmetrizedPosterior {
 public:
  static constexpr std::size_t kMaxComponents = 6;

  SymmetrizedPosterior(FactorizedPosterior posterior, SymmetryGroup group);

  std::size_t components() const { return k_; }
  std::size_t mixture_size() const { return perms_.size(); }
  const std::vector<Permutation>& permutations() const { return perms_; }
  /// Mixture weights; equal by construction.
  std::vector<double> weights() const;

  using Value = std::map<std::string, RowMatrix>;
  double log_density(const Value& value) const;
  Value sample(Rng& rng) const;
  /// Applies a component permutation to a value (row perm[k] -> row k).
  Value permute_value(const Value& value, const Permutation& perm) const;

 private:
  double component_log_density(const Value& value, const Permutation& perm) const;

  FactorizedPosterior posterior_;
  SymmetryGroup group_;
  std::size_t k_;
  std::vector<Permutation> perms_;
};

/// Throws TooManyComponents when K exceeds SymmetrizedPosterior::kMaxComponents.
SymmetrizedPosterior symmetrize(const FactorizedPosterior& posterior, const SymmetryGroup& group);

}  // namespace amps
