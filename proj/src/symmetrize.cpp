#include <algorithm>
#include <cmath>

#include "amps/errors.hpp"
#include "amps/merge.hpp"
#include "amps/special.hpp"

namespace amps {

SymmetrizedPosterior::SymmetrizedPosterior(FactorizedPosterior posterior, SymmetryGroup group)
    : posterior_(std::move(posterior)), group_(std::move(group)) {
  k_ = posterior_.group_components(group_);
  if (k_ > kMaxComponents)
    throw TooManyComponents("symmetrize: K = " + std::to_string(k_) + " exceeds " +
                            std::to_string(kMaxComponents));
  Permutation p = identity_permutation(k_);
  do {
    perms_.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
}

std::vector<double> SymmetrizedPosterior::weights() const {
  return std::vector<double>(perms_.size(), 1.0 / static_cast<double>(perms_.size()));
}

double SymmetrizedPosterior::component_log_density(const Value& value, const Permutation& perm) const {
  double total = 0.0;
  for (const auto& name : group_) {
    const NaturalParams& f = posterior_.at(name);
    auto it = value.find(name);
    if (it == value.end()) throw ShapeMismatch("symmetrized density: missing value for '" + name + "'");
    const RowMatrix& v = it->second;
    if (f.layout == Layout::Joint) {
      std::vector<double> row(k_);
      for (std::size_t k = 0; k < k_; ++k) row[k] = f.rows(perm[k], 0);
      total += expfam::log_density(f.family, row, row_span(v, 0));
    } else {
      for (std::size_t k = 0; k < k_; ++k)
        total += expfam::log_density(f.family, row_span(f.rows, perm[k]), row_span(v, k));
    }
  }
  return total;
}

double SymmetrizedPosterior::log_density(const Value& value) const {
  std::vector<double> terms;
  terms.reserve(perms_.size());
  for (const auto& perm : perms_) terms.push_back(component_log_density(value, perm));
  // Sorting makes the reduction independent of the order terms were produced,
  // so permuted inputs reduce identically.
  std::sort(terms.begin(), terms.end());
  return special::log_sum_exp(terms) - std::log(static_cast<double>(perms_.size()));
}

SymmetrizedPosterior::Value SymmetrizedPosterior::sample(Rng& rng) const {
  const Permutation& perm = perms_[rng.uniform_index(perms_.size())];
  Value out;
  for (const auto& name : group_) {
    const NaturalParams& f = posterior_.at(name);
    if (f.layout == Layout::Joint) {
      std::vector<double> row(k_);
      for (std::size_t k = 0; k < k_; ++k) row[k] = f.rows(perm[k], 0);
      const auto draw = expfam::sample(f.family, row, rng);
      RowMatrix v(1, k_);
      for (std::size_t k = 0; k < k_; ++k) v(0, k) = draw[k];
      out.emplace(name, std::move(v));
    } else {
      RowMatrix v(k_, f.family.value_width());
      for (std::size_t k = 0; k < k_; ++k) {
        const auto draw = expfam::sample(f.family, row_span(f.rows, perm[k]), rng);
        for (std::size_t c = 0; c < draw.size(); ++c) v(k, c) = draw[c];
      }
      out.emplace(name, std::move(v));
    }
  }
  return out;
}

SymmetrizedPosterior::Value SymmetrizedPosterior::permute_value(const Value& value, const Permutation& perm) const {
  Value out = value;
  for (const auto& name : group_) {
    const NaturalParams& f = posterior_.at(name);
    const RowMatrix& src = value.at(name);
    RowMatrix& dst = out.at(name);
    for (std::size_t k = 0; k < k_; ++k) {
      if (f.layout == Layout::Joint)
        dst(0, k) = src(0, perm[k]);
      else
        dst.row(k) = src.row(perm[k]);
    }
  }
  return out;
}

SymmetrizedPosterior symmetrize(const FactorizedPosterior& posterior, const SymmetryGroup& group) {
  return SymmetrizedPosterior(posterior, group);
}

}  // namespace amps
