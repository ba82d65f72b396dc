#include "amps/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "amps/errors.hpp"
#include "amps/expfam.hpp"
#include "amps/merge.hpp"
#include "amps/models.hpp"
#include "amps/random.hpp"

namespace amps {

namespace {

using expfam::Family;

struct Failure {
  std::string what;
};

class Checker {
 public:
  void require(bool ok, const std::function<std::string()>& what) {
    ++checks;
    if (!ok) throw Failure{what()};
  }
  std::size_t checks = 0;
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

// Random in-domain natural row, kept away from the domain boundary so that
// finite differences stay well conditioned.
std::vector<double> random_row(const Family& f, Rng& rng) {
  std::vector<double> row(f.width());
  switch (f.kind) {
    case expfam::FamilyKind::GaussianKnownVar:
    case expfam::FamilyKind::IsotropicMVN:
      for (std::size_t i = 0; i + 1 < row.size(); ++i) row[i] = rng.normal(0.0, 3.0);
      row.back() = -(0.05 + 5.0 * rng.uniform());
      break;
    case expfam::FamilyKind::Dirichlet:
    case expfam::FamilyKind::Beta:
      for (double& b : row) b = -0.9 + 20.0 * rng.uniform();
      break;
  }
  return row;
}

const std::vector<Family>& families() {
  static const std::vector<Family> all{Family::gaussian(), Family::dirichlet(4), Family::beta(),
                                       Family::isotropic_mvn(3)};
  return all;
}

void convexity(Checker& c, Rng& rng) {
  for (const Family& f : families()) {
    for (int t = 0; t < 1000; ++t) {
      const auto x = random_row(f, rng), y = random_row(f, rng);
      std::vector<double> mid(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) mid[i] = 0.5 * (x[i] + y[i]);
      const double ax = expfam::log_partition(f, x), ay = expfam::log_partition(f, y);
      const double am = expfam::log_partition(f, mid);
      const double slack = 1e-12 * std::max({1.0, std::abs(ax), std::abs(ay)});
      c.require(am <= 0.5 * (ax + ay) + slack, [&] {
        return f.name() + ": A(midpoint) = " + fmt(am) + " exceeds the chord value " + fmt(0.5 * (ax + ay));
      });
    }
  }
}

void gradients(Checker& c, Rng& rng) {
  for (const Family& f : families()) {
    for (int t = 0; t < 200; ++t) {
      auto x = random_row(f, rng);
      const auto g = expfam::grad_log_partition(f, x);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double h = 1e-5 * std::max(1.0, std::abs(x[i]));
        auto up = x, down = x;
        up[i] += h;
        down[i] -= h;
        const double fd = (expfam::log_partition(f, up) - expfam::log_partition(f, down)) / (2.0 * h);
        c.require(std::abs(fd - g[i]) <= 1e-5 * std::max(1.0, std::abs(g[i])), [&] {
          return f.name() + ": coordinate " + std::to_string(i) + " gradient " + fmt(g[i]) +
                 " vs finite difference " + fmt(fd);
        });
      }
    }
  }
}

Permutation random_permutation(std::size_t k, Rng& rng) {
  Permutation p = identity_permutation(k);
  rng.shuffle(p);
  return p;
}

// A GMM-shaped problem: shared exchangeable prior, agents whose group rows
// are prior plus random evidence.
std::pair<FactorizedPosterior, std::vector<FactorizedPosterior>> random_gmm_problem(std::size_t k, std::size_t n,
                                                                                     Rng& rng) {
  GmmSpec spec;
  spec.components = k;
  spec.dirichlet_prior.assign(k, 1.0);
  FactorizedPosterior prior = gmm_prior(spec);
  std::vector<FactorizedPosterior> locals(n, prior);
  for (auto& local : locals) {
    auto& mu = local.at("mu").rows;
    auto& pi = local.at("pi").rows;
    for (std::size_t j = 0; j < k; ++j) {
      const double count = 3.0 * rng.uniform();
      mu(j, 0) += count * rng.normal(0.0, 2.0) / spec.component_variance;
      mu(j, 1) -= count / (2.0 * spec.component_variance);
      pi(j, 0) += count;
    }
  }
  return {prior, locals};
}

std::pair<FactorizedPosterior, std::vector<FactorizedPosterior>> random_dirichlet_problem(std::size_t k,
                                                                                           std::size_t n,
                                                                                           std::size_t w,
                                                                                           Rng& rng) {
  LdaSpec spec;
  spec.topics = k;
  spec.vocabulary = w;
  FactorizedPosterior prior = lda_prior(spec);
  std::vector<FactorizedPosterior> locals(n, prior);
  for (auto& local : locals) {
    auto& rows = local.at("topics").rows;
    for (Eigen::Index j = 0; j < rows.rows(); ++j)
      for (Eigen::Index v = 0; v < rows.cols(); ++v) rows(j, v) += rng.gamma(0.7) * 4.0;
  }
  return {prior, locals};
}

void common_relabel(Checker& c, Rng& rng) {
  for (int t = 0; t < 100; ++t) {
    const std::size_t k = 2 + rng.uniform_index(4), n = 2 + rng.uniform_index(4);
    auto [prior, locals] = t % 2 ? random_gmm_problem(k, n, rng) : random_dirichlet_problem(k, n, 6, rng);
    const SymmetryGroup group = prior.symmetry_groups.front();
    PermutationSet perms, relabeled;
    const Permutation sigma = random_permutation(k, rng);
    for (std::size_t i = 0; i < n; ++i) {
      perms.perms.push_back(random_permutation(k, rng));
      Permutation composed(k);
      for (std::size_t j = 0; j < k; ++j) composed[j] = perms.perms[i][sigma[j]];
      relabeled.perms.push_back(composed);
    }
    const double a = amps_objective(prior, locals, perms, group);
    const double b = amps_objective(prior, locals, relabeled, group);
    c.require(std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)),
              [&] { return "objective changed under a common relabeling: " + fmt(a) + " vs " + fmt(b); });
  }
}

void symmetrization(Checker& c, Rng& rng) {
  for (std::size_t k = 2; k <= 4; ++k) {
    for (int t = 0; t < 5; ++t) {
      auto [prior, locals] = random_gmm_problem(k, 1, rng);
      const FactorizedPosterior post = naive_merge(prior, locals);
      const SymmetrizedPosterior sym = symmetrize(post, post.symmetry_groups.front());
      const auto value = sym.sample(rng);
      const double base = sym.log_density(value);
      for (const Permutation& p : sym.permutations()) {
        const double d = sym.log_density(sym.permute_value(value, p));
        c.require(std::abs(d - base) <= 1e-9 * std::max(1.0, std::abs(base)), [&] {
          return "K=" + std::to_string(k) + ": log density " + fmt(d) + " after relabeling vs " + fmt(base);
        });
      }
    }
  }
}

void assignment(Checker& c, Rng& rng) {
  for (std::size_t k = 1; k <= 6; ++k) {
    for (int t = 0; t < 20; ++t) {
      RowMatrix w(k, k);
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
          w(i, j) = t % 4 == 0 ? static_cast<double>(rng.uniform_index(3)) : rng.normal(0.0, 10.0);
      auto value = [&](const Permutation& p) {
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i) s += w(i, p[i]);
        return s;
      };
      Permutation p = identity_permutation(k), best = p;
      double best_value = value(p);
      while (std::next_permutation(p.begin(), p.end()))
        if (const double v = value(p); v > best_value) best_value = v, best = p;
      const Permutation got = assignment_solve(w);
      c.require(got == best && value(got) == best_value, [&] {
        return "K=" + std::to_string(k) + ": solver value " + fmt(value(got)) + " vs brute force " + fmt(best_value);
      });
    }
  }
}

void naive_identity(Checker& c, Rng& rng) {
  for (int t = 0; t < 20; ++t) {
    auto [prior, locals] = t % 2 ? random_gmm_problem(3, 1, rng) : random_dirichlet_problem(3, 1, 5, rng);
    const FactorizedPosterior merged = naive_merge(prior, locals);
    for (const auto& [name, f] : merged.factors)
      c.require(f.rows == locals[0].at(name).rows, [&] { return "factor '" + name + "' changed by an N=1 merge"; });
  }
}

void dirichlet_coordinates(Checker& c, Rng& rng) {
  for (int t = 0; t < 50; ++t) {
    const std::size_t k = 2 + rng.uniform_index(3), n = 1 + rng.uniform_index(5), w = k + rng.uniform_index(6);
    auto [prior, locals] = random_dirichlet_problem(k, n, w, rng);
    const Family fam = Family::dirichlet(w);
    const FactorizedPosterior merged = naive_merge(prior, locals);
    const RowMatrix& rows = merged.at("topics").rows;
    for (std::size_t j = 0; j < k; ++j) {
      // Bayes rule applied to the conventional concentrations.
      const auto a0 = expfam::to_conventional(fam, row_span(prior.at("topics").rows, j));
      std::vector<double> alpha(w);
      for (std::size_t v = 0; v < w; ++v) alpha[v] = (1.0 - static_cast<double>(n)) * a0[v];
      for (const auto& local : locals) {
        const auto a = expfam::to_conventional(fam, row_span(local.at("topics").rows, j));
        for (std::size_t v = 0; v < w; ++v) alpha[v] += a[v];
      }
      const auto natural = expfam::to_conventional(fam, row_span(rows, j));
      for (std::size_t v = 0; v < w; ++v)
        c.require(std::abs(natural[v] - alpha[v]) <= 1e-12 * std::max(1.0, std::abs(alpha[v])),
                  [&] { return "natural merge " + fmt(natural[v]) + " vs conventional " + fmt(alpha[v]); });
    }
  }
}

void exact_gaussian(Checker& c, Rng& rng) {
  const GaussianMeanSpec spec;
  const FactorizedPosterior prior = gaussian_mean_prior(spec);
  std::vector<double> all;
  std::vector<FactorizedPosterior> locals;
  for (int a = 0; a < 10; ++a) {
    std::vector<double> shard;
    for (int i = 0; i < 10; ++i) shard.push_back(rng.normal(1.5, std::sqrt(spec.known_variance)));
    all.insert(all.end(), shard.begin(), shard.end());
    locals.push_back(fit_gaussian_mean(shard, spec));
  }
  const RowMatrix merged = naive_merge(prior, locals).at("mu").rows;
  const RowMatrix batch = fit_gaussian_mean(all, spec).at("mu").rows;
  for (Eigen::Index i = 0; i < merged.cols(); ++i)
    c.require(std::abs(merged(0, i) - batch(0, i)) <= 1e-9 * std::max(1.0, std::abs(batch(0, i))),
              [&] { return "merged " + fmt(merged(0, i)) + " vs batch " + fmt(batch(0, i)); });
}

void oracle_dominance(Checker& c, Rng& rng) {
  for (int t = 0; t < 30; ++t) {
    const std::size_t k = 2 + rng.uniform_index(3), n = 2 + rng.uniform_index(2);
    auto [prior, locals] = random_dirichlet_problem(k, n, 5, rng);
    const SymmetryGroup group = prior.symmetry_groups.front();
    const double identity = amps_objective(prior, locals, PermutationSet::identity(n, k), group);
    const double exhaustive = optimize_exhaustive(prior, locals, group).objective;
    const double matching = optimize_matching(prior, locals, group).objective;
    SwapOptions so;
    so.seed = rng.next_u64();
    const double swap = optimize_swap(prior, locals, group, so).objective;
    const double slack = 1e-9 * std::max(1.0, std::abs(exhaustive));
    c.require(exhaustive + slack >= matching && matching + slack >= identity && exhaustive + slack >= swap, [&] {
      return "exhaustive " + fmt(exhaustive) + ", matching " + fmt(matching) + ", swap " + fmt(swap) +
             ", identity " + fmt(identity);
    });
  }
}

}  // namespace

std::vector<SuiteResult> run_selftest(std::uint64_t seed) {
  const std::vector<std::pair<std::string, void (*)(Checker&, Rng&)>> suites{
      {"log_partition_convexity", convexity},
      {"gradient_finite_difference", gradients},
      {"common_relabel_invariance", common_relabel},
      {"symmetrization_invariance", symmetrization},
      {"assignment_brute_force", assignment},
      {"naive_merge_identity", naive_identity},
      {"dirichlet_natural_vs_conventional", dirichlet_coordinates},
      {"exact_gaussian_merge", exact_gaussian},
      {"oracle_dominance", oracle_dominance},
  };
  std::vector<SuiteResult> results;
  for (std::size_t s = 0; s < suites.size(); ++s) {
    SuiteResult r;
    r.name = suites[s].first;
    Checker checker;
    Rng rng(derive_seed(seed, s));
    const auto start = std::chrono::steady_clock::now();
    try {
      suites[s].second(checker, rng);
      r.passed = true;
    } catch (const Failure& f) {
      r.detail = f.what;
    } catch (const std::exception& e) {
      r.detail = std::string("unexpected error: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    r.checks = checker.checks;
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace amps
