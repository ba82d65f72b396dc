#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include "amps/merge.hpp"
#include "amps/posterior.hpp"
#include "amps/random.hpp"

namespace amps::test {

inline FactorizedPosterior dirichlet_posterior(const RowMatrix& beta) {
  FactorizedPosterior p;
  p.factors["topics"] =
      NaturalParams{expfam::Family::dirichlet(static_cast<std::size_t>(beta.cols())), Layout::PerRow, beta};
  p.symmetry_groups = {{"topics"}};
  return p;
}

inline RowMatrix rows(std::initializer_list<std::initializer_list<double>> values) {
  RowMatrix m(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(values.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : values) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

// Random Dirichlet merge instance with an all-zero (exchangeable) prior.
struct Instance {
  FactorizedPosterior prior;
  std::vector<FactorizedPosterior> locals;
};

inline Instance random_dirichlet_instance(Rng& rng, std::size_t k, std::size_t n, std::size_t w) {
  Instance out;
  out.prior = dirichlet_posterior(RowMatrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(w)));
  for (std::size_t i = 0; i < n; ++i) {
    RowMatrix beta(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(w));
    for (Eigen::Index r = 0; r < beta.rows(); ++r)
      for (Eigen::Index c = 0; c < beta.cols(); ++c) beta(r, c) = 10.0 * rng.uniform() * rng.uniform();
    out.locals.push_back(dirichlet_posterior(beta));
  }
  return out;
}

inline std::vector<Permutation> all_permutations(std::size_t k) {
  std::vector<Permutation> out;
  Permutation p = identity_permutation(k);
  do out.push_back(p);
  while (std::next_permutation(p.begin(), p.end()));
  return out;
}

}  // namespace amps::test
