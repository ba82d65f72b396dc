#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "amps/errors.hpp"
#include "amps/merge.hpp"
#include "group_problem.hpp"

namespace amps {

namespace {

double tie_eps(double value) { return std::isfinite(value) ? 1e-12 * std::max(1.0, std::abs(value)) : 0.0; }

// Better objective, or an equal objective with a lexicographically smaller
// permutation tuple.
bool preferred(double value, const PermutationSet& perms, double best, const PermutationSet& best_perms) {
  if (value > best + tie_eps(best)) return true;
  if (value >= best - tie_eps(best)) return perms < best_perms;
  return false;
}

MergeResult finish(const FactorizedPosterior& prior, const std::vector<FactorizedPosterior>& locals,
                   const SymmetryGroup& group, PermutationSet perms, std::vector<TracePoint> trace) {
  MergeResult result;
  result.merged = merge_with_permutations(prior, locals, {{group, perms}});
  GroupMerge g;
  g.group = group;
  g.objective = amps_objective(prior, locals, perms, group);
  g.perms = std::move(perms);
  g.trace = std::move(trace);
  result.objective = g.objective;
  result.groups.push_back(std::move(g));
  return result;
}

// Objective change from swapping slots a and b of agent i's permutation.
double swap_delta(const detail::GroupProblem& problem, const std::vector<RowMatrix>& merged,
                  const PermutationSet& perms, std::size_t i, std::size_t a, std::size_t b) {
  const Permutation& p = perms.perms[i];
  if (!problem.additive()) {
    PermutationSet next = perms;
    std::swap(next.perms[i][a], next.perms[i][b]);
    return problem.objective(problem.merge(next)) - problem.objective(merged);
  }
  double delta = 0.0;
  for (std::size_t j = 0; j < problem.factors(); ++j) {
    const RowMatrix& local = problem.local(i, j).rows;
    const Eigen::RowVectorXd diff = local.row(p[b]) - local.row(p[a]);
    const Eigen::RowVectorXd row_a = merged[j].row(a) + diff;
    const Eigen::RowVectorXd row_b = merged[j].row(b) - diff;
    delta += problem.slot_term(j, row_a.data()) + problem.slot_term(j, row_b.data());
    delta -= problem.slot_term(j, merged[j].row(a).data()) + problem.slot_term(j, merged[j].row(b).data());
  }
  return delta;
}

double count_candidates(std::size_t k, std::size_t free_agents) {
  double factorial = 1.0;
  for (std::size_t i = 2; i <= k; ++i) factorial *= static_cast<double>(i);
  return std::pow(factorial, static_cast<double>(free_agents));
}

}  // namespace

MergeResult optimize_swap(const FactorizedPosterior& prior, const std::vector<FactorizedPosterior>& locals,
                          const SymmetryGroup& group, const SwapOptions& options) {
  const detail::GroupProblem problem(prior, locals, group);
  const std::size_t k = problem.components(), n = problem.agents();
  if (options.init && (options.init->perms.size() != n || !options.init->valid(k)))
    throw ShapeMismatch("optimize_swap: invalid initial permutations");

  std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> proposals;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = a + 1; b < k; ++b) proposals.emplace_back(i, a, b);

  PermutationSet best_perms;
  std::vector<TracePoint> best_trace;
  double best = -std::numeric_limits<double>::infinity();

  for (std::size_t restart = 0; restart < std::max<std::size_t>(1, options.restarts); ++restart) {
    Rng rng(derive_seed(options.seed, 0x73776170, restart));
    PermutationSet perms = PermutationSet::identity(n, k);
    if (restart == 0 && options.init) perms = *options.init;
    if (restart > 0)
      for (auto& p : perms.perms) rng.shuffle(p);

    std::vector<RowMatrix> merged = problem.merge(perms);
    double current = problem.objective(merged);
    std::vector<TracePoint> trace{{0, current}};
    std::size_t accepted = 0;
    for (bool improved = true; improved;) {
      improved = false;
      rng.shuffle(proposals);
      for (const auto& [i, a, b] : proposals) {
        if (swap_delta(problem, merged, perms, i, a, b) > options.accept_threshold) {
          std::swap(perms.perms[i][a], perms.perms[i][b]);
          merged = problem.merge(perms);
          current = problem.objective(merged);
          trace.push_back({++accepted, current});
          improved = true;
        }
      }
    }
    if (preferred(current, perms, best, best_perms)) {
      best = current;
      best_perms = perms;
      best_trace = std::move(trace);
    }
  }
  return finish(prior, locals, group, std::move(best_perms), std::move(best_trace));
}

MergeResult optimize_matching(const FactorizedPosterior& prior, const std::vector<FactorizedPosterior>& locals,
                              const SymmetryGroup& group, const MatchingOptions& options) {
  const detail::GroupProblem problem(prior, locals, group);
  if (!problem.additive())
    throw NotRowAdditive("optimize_matching: group objective does not decompose over components");
  const std::size_t k = problem.components(), n = problem.agents();
  PermutationSet perms = options.init.value_or(PermutationSet::identity(n, k));
  if (perms.perms.size() != n || !perms.valid(k))
    throw ShapeMismatch("optimize_matching: invalid initial permutations");

  double current = problem.objective(problem.merge(perms));
  std::vector<TracePoint> trace{{0, current}};
  RowMatrix weights(k, k);
  for (std::size_t sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::vector<RowMatrix> partial = problem.merge_without(perms, i);
      for (std::size_t slot = 0; slot < k; ++slot) {
        for (std::size_t source = 0; source < k; ++source) {
          double w = 0.0;
          for (std::size_t j = 0; j < problem.factors(); ++j) {
            const Eigen::RowVectorXd row = partial[j].row(slot) + problem.local(i, j).rows.row(source);
            w += problem.slot_term(j, row.data());
          }
          weights(slot, source) = w;
        }
      }
      const Permutation candidate = assignment_solve(weights);
      double old_value = 0.0, new_value = 0.0;
      for (std::size_t slot = 0; slot < k; ++slot) {
        old_value += weights(slot, perms.perms[i][slot]);
        new_value += weights(slot, candidate[slot]);
      }
      if (new_value > old_value + tie_eps(old_value)) perms.perms[i] = candidate;
    }
    const double next = problem.objective(problem.merge(perms));
    trace.push_back({sweep, next});
    const bool stalled = next - current < options.threshold;
    current = std::max(current, next);
    if (stalled) break;
  }
  return finish(prior, locals, group, std::move(perms), std::move(trace));
}

MergeResult optimize_exhaustive(const FactorizedPosterior& prior, const std::vector<FactorizedPosterior>& locals,
                                const SymmetryGroup& group, const ExhaustiveOptions& options) {
  const detail::GroupProblem problem(prior, locals, group);
  const std::size_t k = problem.components(), n = problem.agents();
  const bool fix_first = exchangeable_prior(prior, group);
  const double candidates = count_candidates(k, fix_first ? n - 1 : n);
  if (candidates > options.max_candidates)
    throw TooLarge("optimize_exhaustive: " + std::to_string(candidates) + " candidates exceed bound");

  std::vector<Permutation> all;
  Permutation p = identity_permutation(k);
  do {
    all.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));

  // acc[i] holds (1 - N) lambda_0 + agents 0..i-1, summed in agent order.
  std::vector<std::vector<RowMatrix>> acc(n + 1);
  for (std::size_t j = 0; j < problem.factors(); ++j)
    acc[0].push_back((1.0 - static_cast<double>(n)) * problem.prior(j).rows);

  PermutationSet current = PermutationSet::identity(n, k);
  PermutationSet best_perms = current;
  double best = -std::numeric_limits<double>::infinity();

  auto recurse = [&](auto&& self, std::size_t i) -> void {
    if (i == n) {
      const double value = problem.objective(acc[n]);
      if (value > best + tie_eps(best)) {
        best = value;
        best_perms = current;
      }
      return;
    }
    const std::size_t choices = (i == 0 && fix_first) ? 1 : all.size();
    for (std::size_t c = 0; c < choices; ++c) {
      current.perms[i] = all[c];
      acc[i + 1] = acc[i];
      problem.add_agent(acc[i + 1], i, all[c], 1.0);
      self(self, i + 1);
    }
  };
  recurse(recurse, 0);
  return finish(prior, locals, group, std::move(best_perms), {{0, best}});
}

MergeResult amps_merge(const FactorizedPosterior& prior, const std::vector<FactorizedPosterior>& locals,
                       const AmpsOptions& options) {
  if (locals.empty()) throw ShapeMismatch("amps_merge requires at least one local posterior");
  std::vector<GroupMerge> groups;
  std::vector<std::pair<SymmetryGroup, PermutationSet>> choices;
  for (std::size_t g = 0; g < prior.symmetry_groups.size(); ++g) {
    const SymmetryGroup& group = prior.symmetry_groups[g];
    const std::uint64_t seed = derive_seed(options.seed, g);
    MergeResult r;
    switch (options.method) {
      case MergeMethod::Swap:
        r = optimize_swap(prior, locals, group, SwapOptions{seed, options.swap_restarts, std::nullopt});
        break;
      case MergeMethod::Matching:
        r = optimize_matching(prior, locals, group, MatchingOptions{seed, std::nullopt});
        break;
      case MergeMethod::Exhaustive:
        r = optimize_exhaustive(prior, locals, group);
        break;
    }
    choices.emplace_back(group, r.groups.front().perms);
    groups.push_back(std::move(r.groups.front()));
  }
  MergeResult result;
  result.merged = merge_with_permutations(prior, locals, choices);
  result.groups = std::move(groups);
  for (const auto& g : result.groups) result.objective += g.objective;
  return result;
}

}  // namespace amps
