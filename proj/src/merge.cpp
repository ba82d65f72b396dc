#include <algorithm>
#include <set>

#include "amps/errors.hpp"
#include "amps/merge.hpp"
#include "amps/special.hpp"
#include "group_problem.hpp"

namespace amps {

PermutationSet PermutationSet::identity(std::size_t agents, std::size_t k) {
  return PermutationSet{std::vector<Permutation>(agents, identity_permutation(k))};
}

bool PermutationSet::valid(std::size_t k) const {
  return std::all_of(perms.begin(), perms.end(), [k](const Permutation& p) { return is_permutation(p, k); });
}

namespace {

void require_inputs(const FactorizedPosterior& prior, const std::vector<FactorizedPosterior>& locals) {
  if (locals.empty()) throw ShapeMismatch("merge requires at least one local posterior");
  for (std::size_t i = 0; i < locals.size(); ++i) {
    try {
      prior.require_same_structure(locals[i]);
    } catch (const ShapeMismatch& e) {
      throw ShapeMismatch("local posterior " + std::to_string(i) + ": " + e.what());
    }
  }
}

bool joint_decomposes(const expfam::Family& family) {
  return family.kind == expfam::FamilyKind::Dirichlet || family.kind == expfam::FamilyKind::Beta;
}

// (1 - N) lambda_0 + sum_i lambda_i[perm_i], summed in agent order.
RowMatrix merge_factor(const NaturalParams& prior, const std::vector<const NaturalParams*>& locals,
                       const std::vector<const Permutation*>& perms) {
  const double n = static_cast<double>(locals.size());
  RowMatrix out = (1.0 - n) * prior.rows;
  for (std::size_t i = 0; i < locals.size(); ++i) {
    const RowMatrix& rows = locals[i]->rows;
    if (perms[i] == nullptr) {
      out += rows;
    } else {
      const Permutation& p = *perms[i];
      for (Eigen::Index k = 0; k < out.rows(); ++k) out.row(k) += rows.row(p[k]);
    }
  }
  return out;
}

NaturalParams checked(const std::string& name, NaturalParams params) {
  try {
    params.validate();
  } catch (const DomainError& e) {
    throw DomainError("merged factor '" + name + "' invalid: " + e.what());
  }
  return params;
}

}  // namespace

namespace detail {

GroupProblem::GroupProblem(const FactorizedPosterior& prior, const std::vector<FactorizedPosterior>& locals,
                           const SymmetryGroup& group) {
  require_inputs(prior, locals);
  if (group.empty()) throw ShapeMismatch("empty symmetry group");
  k_ = prior.group_components(group);
  for (const auto& name : group) {
    const NaturalParams& p = prior.at(name);
    prior_.push_back(&p);
    if (p.layout == Layout::Joint && !joint_decomposes(p.family)) additive_ = false;
  }
  locals_.resize(locals.size());
  for (std::size_t i = 0; i < locals.size(); ++i)
    for (const auto& name : group) locals_[i].push_back(&locals[i].at(name));
}

std::vector<RowMatrix> GroupProblem::merge(const PermutationSet& perms) const {
  if (perms.perms.size() != agents() || !perms.valid(k_))
    throw ShapeMismatch("permutation set does not match agents/components");
  std::vector<RowMatrix> out;
  std::vector<const Permutation*> p;
  for (const auto& perm : perms.perms) p.push_back(&perm);
  for (std::size_t j = 0; j < factors(); ++j) {
    std::vector<const NaturalParams*> ls;
    for (std::size_t i = 0; i < agents(); ++i) ls.push_back(locals_[i][j]);
    out.push_back(merge_factor(*prior_[j], ls, p));
  }
  return out;
}

std::vector<RowMatrix> GroupProblem::merge_without(const PermutationSet& perms, std::size_t skip) const {
  const double n = static_cast<double>(agents());
  std::vector<RowMatrix> out;
  for (std::size_t j = 0; j < factors(); ++j) {
    RowMatrix m = (1.0 - n) * prior_[j]->rows;
    for (std::size_t i = 0; i < agents(); ++i) {
      if (i == skip) continue;
      const RowMatrix& rows = locals_[i][j]->rows;
      for (std::size_t k = 0; k < k_; ++k) m.row(k) += rows.row(perms.perms[i][k]);
    }
    out.push_back(std::move(m));
  }
  return out;
}

void GroupProblem::add_agent(std::vector<RowMatrix>& merged, std::size_t agent, const Permutation& perm,
                             double sign) const {
  for (std::size_t j = 0; j < factors(); ++j) {
    const RowMatrix& rows = locals_[agent][j]->rows;
    for (std::size_t k = 0; k < k_; ++k) merged[j].row(k) += sign * rows.row(perm[k]);
  }
}

double GroupProblem::objective(const std::vector<RowMatrix>& merged) const {
  double total = 0.0;
  for (std::size_t j = 0; j < factors(); ++j) {
    const NaturalParams& p = *prior_[j];
    if (p.layout == Layout::Joint) {
      total += expfam::log_partition(p.family, std::span<const double>(merged[j].data(), merged[j].size()));
    } else {
      for (Eigen::Index k = 0; k < merged[j].rows(); ++k)
        total += expfam::log_partition(p.family, row_span(merged[j], k));
    }
  }
  return total;
}

double GroupProblem::slot_term(std::size_t j, const double* row) const {
  const NaturalParams& p = *prior_[j];
  if (p.layout == Layout::Joint) {
    // Dirichlet/Beta over components: lgamma(beta_k + 1) per slot; the
    // normalizer over the total is invariant under relabeling.
    if (!(row[0] > -1.0)) throw DomainError("merged weight entry outside domain");
    return special::log_gamma(row[0] + 1.0);
  }
  return expfam::log_partition(p.family, std::span<const double>(row, p.family.width()));
}

double GroupProblem::slot_value(const std::vector<RowMatrix>& merged, std::size_t k) const {
  double total = 0.0;
  for (std::size_t j = 0; j < factors(); ++j) total += slot_term(j, merged[j].data() + k * merged[j].cols());
  return total;
}

}  // namespace detail

FactorizedPosterior naive_merge(const FactorizedPosterior& prior, const std::vector<FactorizedPosterior>& locals) {
  return merge_with_permutations(prior, locals, {});
}

FactorizedPosterior merge_with_permutations(const FactorizedPosterior& prior,
                                            const std::vector<FactorizedPosterior>& locals,
                                            const std::vector<std::pair<SymmetryGroup, PermutationSet>>& choices) {
  require_inputs(prior, locals);
  std::map<std::string, const PermutationSet*> perm_of;
  for (const auto& [group, perms] : choices) {
    const std::size_t k = prior.group_components(group);
    if (perms.perms.size() != locals.size() || !perms.valid(k))
      throw ShapeMismatch("permutation set does not match agents/components");
    for (const auto& name : group) perm_of[name] = &perms;
  }
  FactorizedPosterior out;
  out.symmetry_groups = prior.symmetry_groups;
  for (const auto& [name, p] : prior.factors) {
    std::vector<const NaturalParams*> ls;
    for (const auto& local : locals) ls.push_back(&local.at(name));
    std::vector<const Permutation*> perms(locals.size(), nullptr);
    if (auto it = perm_of.find(name); it != perm_of.end())
      for (std::size_t i = 0; i < locals.size(); ++i) perms[i] = &it->second->perms[i];
    out.factors.emplace(name, checked(name, NaturalParams{p.family, p.layout, merge_factor(p, ls, perms)}));
  }
  return out;
}

double amps_objective(const FactorizedPosterior& prior, const std::vector<FactorizedPosterior>& locals,
                      const PermutationSet& perms, const SymmetryGroup& group) {
  detail::GroupProblem problem(prior, locals, group);
  return problem.objective(problem.merge(perms));
}

bool row_additive(const FactorizedPosterior& posterior, const SymmetryGroup& group) {
  for (const auto& name : group) {
    const NaturalParams& p = posterior.at(name);
    if (p.layout == Layout::Joint && !joint_decomposes(p.family)) return false;
  }
  return true;
}

bool exchangeable_prior(const FactorizedPosterior& prior, const SymmetryGroup& group) {
  for (const auto& name : group) {
    const RowMatrix& rows = prior.at(name).rows;
    for (Eigen::Index k = 1; k < rows.rows(); ++k)
      if (rows.row(k) != rows.row(0)) return false;
  }
  return true;
}

}  // namespace amps
