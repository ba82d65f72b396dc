#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"

#include "amps/data.hpp"
#include "amps/errors.hpp"
#include "amps/merge.hpp"
#include "amps/models.hpp"
#include "amps/special.hpp"
#include "support.hpp"

using namespace amps;
using test::dirichlet_posterior;
using test::rows;

namespace {

const SymmetryGroup kTopics{"topics"};

// Flat prior; both agents hold the rows (5,0) and (0,5).
test::Instance aligned_pair() {
  test::Instance in;
  in.prior = dirichlet_posterior(RowMatrix::Zero(2, 2));
  in.locals = {dirichlet_posterior(rows({{5, 0}, {0, 5}})), dirichlet_posterior(rows({{5, 0}, {0, 5}}))};
  return in;
}

std::vector<FactorizedPosterior> gmm_locals(std::uint64_t seed, FactorizedPosterior& prior) {
  const GmmSpec spec;
  prior = gmm_prior(spec);
  const auto ds = gen_gmm(seed, 30);
  std::vector<FactorizedPosterior> out;
  for (std::size_t a = 0; a < 10; ++a) {
    const std::vector<double> shard(ds.points.begin() + 3 * a, ds.points.begin() + 3 * a + 3);
    FitOptions opts;
    opts.seed = derive_seed(seed, a);
    out.push_back(fit_gmm_vb(shard, spec, opts).posterior);
  }
  return out;
}

double brute_force_assignment(const RowMatrix& w, Permutation& arg) {
  double best = -1e300;
  for (const auto& p : test::all_permutations(static_cast<std::size_t>(w.rows()))) {
    double v = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) v += w(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p[k]));
    if (v > best) best = v, arg = p;
  }
  return best;
}

}  // namespace

TEST_SUITE("merge") {
  TEST_CASE("naive merge arithmetic") {
    const auto prior = dirichlet_posterior(rows({{0, 0}}));
    const auto merged =
        naive_merge(prior, {dirichlet_posterior(rows({{3, 1}})), dirichlet_posterior(rows({{1, 3}}))});
    CHECK(merged.at("topics").rows == rows({{4, 4}}));

    const auto prior1 = dirichlet_posterior(rows({{1, 2}}));
    const auto merged2 = naive_merge(prior1, {dirichlet_posterior(rows({{3, 1}})), dirichlet_posterior(rows({{1, 3}}))});
    CHECK(merged2.at("topics").rows == rows({{3, 2}}));
  }

  TEST_CASE("naive merge with one agent is the identity") {
    Rng rng(1);
    const auto in = test::random_dirichlet_instance(rng, 3, 1, 4);
    CHECK(naive_merge(in.prior, in.locals).at("topics").rows == in.locals[0].at("topics").rows);
  }

  TEST_CASE("naive merge errors") {
    const auto prior = dirichlet_posterior(rows({{0, 0}}));
    CHECK_THROWS_AS(naive_merge(prior, {dirichlet_posterior(rows({{0, 0, 0}}))}), ShapeMismatch);
    // (1 - 3) * 2 + 0 = -4 leaves the Dirichlet domain.
    const auto strong = dirichlet_posterior(rows({{2, 2}}));
    CHECK_THROWS_AS(naive_merge(strong, {dirichlet_posterior(rows({{0, 0}})), dirichlet_posterior(rows({{0, 0}})),
                                         dirichlet_posterior(rows({{0, 0}}))}),
                    DomainError);
  }

  TEST_CASE("exact conjugate Gaussian merge equals the batch posterior") {
    const GaussianMeanSpec spec;
    const auto prior = gaussian_mean_prior(spec);
    Rng rng(8);
    std::vector<double> all;
    std::vector<FactorizedPosterior> locals;
    for (int a = 0; a < 10; ++a) {
      std::vector<double> shard;
      for (int i = 0; i < 10; ++i) shard.push_back(rng.normal(1.0, 1.0));
      all.insert(all.end(), shard.begin(), shard.end());
      locals.push_back(fit_gaussian_mean(shard, spec));
    }
    const RowMatrix merged = naive_merge(prior, locals).at("mu").rows;
    const RowMatrix batch = fit_gaussian_mean(all, spec).at("mu").rows;
    CHECK(std::abs(merged(0, 0) - batch(0, 0)) <= 1e-9);
    CHECK(std::abs(merged(0, 1) - batch(0, 1)) <= 1e-9);
  }

  TEST_CASE("objective of the two-agent Dirichlet instance") {
    const auto in = aligned_pair();
    const auto id = PermutationSet::identity(2, 2);
    CHECK(amps_objective(in.prior, in.locals, id, kTopics) ==
          doctest::Approx(2 * (special::log_gamma(11) - special::log_gamma(12))));
    PermutationSet crossed = id;
    crossed.perms[1] = {1, 0};
    const double c = amps_objective(in.prior, in.locals, crossed, kTopics);
    CHECK(c == doctest::Approx(2 * (2 * special::log_gamma(6) - special::log_gamma(12))));
    // Per row: -ln 11 aligned against 2 lnGamma(6) - lnGamma(12) crossed.
    CHECK(special::log_gamma(11) - special::log_gamma(12) == doctest::Approx(-2.3979).epsilon(1e-4));
    CHECK(2 * special::log_gamma(6) - special::log_gamma(12) == doctest::Approx(-7.9273).epsilon(1e-4));
  }

  TEST_CASE("every optimizer repairs a crossed start") {
    auto in = aligned_pair();
    in.locals[1] = in.locals[1].permuted(kTopics, {1, 0});
    const double aligned = 2 * (special::log_gamma(11) - special::log_gamma(12));
    PermutationSet crossed = PermutationSet::identity(2, 2);

    SwapOptions so;
    so.restarts = 1;
    so.init = crossed;
    const auto s = optimize_swap(in.prior, in.locals, kTopics, so);
    CHECK(s.objective == doctest::Approx(aligned));

    const auto m = optimize_matching(in.prior, in.locals, kTopics);
    CHECK(m.objective == doctest::Approx(aligned));
    const auto e = optimize_exhaustive(in.prior, in.locals, kTopics);
    CHECK(e.objective == doctest::Approx(aligned));
    CHECK(e.groups[0].perms.perms[0] == Permutation{0, 1});
    CHECK(e.groups[0].perms.perms[1] == Permutation{1, 0});
  }

  TEST_CASE("identity permutations reproduce the naive objective") {
    Rng rng(2);
    for (int t = 0; t < 20; ++t) {
      const auto in = test::random_dirichlet_instance(rng, 3, 3, 4);
      const auto naive = naive_merge(in.prior, in.locals);
      CHECK(amps_objective(in.prior, in.locals, PermutationSet::identity(3, 3), kTopics) ==
            naive.at("topics").log_partition());
    }
  }

  TEST_CASE("common relabeling leaves the objective unchanged") {
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
      const auto in = test::random_dirichlet_instance(rng, 3, 3, 3);
      PermutationSet ps = PermutationSet::identity(3, 3);
      for (auto& p : ps.perms) rng.shuffle(p);
      const double base = amps_objective(in.prior, in.locals, ps, kTopics);
      for (const auto& q : test::all_permutations(3)) {
        PermutationSet shifted = ps;
        for (auto& p : shifted.perms) {
          Permutation composed(3);
          for (std::size_t k = 0; k < 3; ++k) composed[k] = p[q[k]];
          p = composed;
        }
        CHECK(std::abs(amps_objective(in.prior, in.locals, shifted, kTopics) - base) <= 1e-9);
      }
    }
  }

  TEST_CASE("single component and single agent cases") {
    Rng rng(4);
    const auto one = test::random_dirichlet_instance(rng, 1, 3, 3);
    const double naive = naive_merge(one.prior, one.locals).at("topics").log_partition();
    CHECK(optimize_swap(one.prior, one.locals, kTopics).objective == doctest::Approx(naive));
    CHECK(optimize_exhaustive(one.prior, one.locals, kTopics).objective == doctest::Approx(naive));

    const auto solo = test::random_dirichlet_instance(rng, 3, 1, 3);
    const double solo_naive = naive_merge(solo.prior, solo.locals).at("topics").log_partition();
    CHECK(optimize_matching(solo.prior, solo.locals, kTopics).objective == doctest::Approx(solo_naive));
    const auto ex = optimize_exhaustive(solo.prior, solo.locals, kTopics);
    CHECK(ex.objective == doctest::Approx(solo_naive));
    CHECK(ex.groups[0].perms == PermutationSet::identity(1, 3));
  }

  TEST_CASE("oracle dominance on random instances") {
    Rng rng(5);
    for (int t = 0; t < 100; ++t) {
      const auto in = test::random_dirichlet_instance(rng, 4, 3, 5);
      const double id = amps_objective(in.prior, in.locals, PermutationSet::identity(3, 4), kTopics);
      const auto m = optimize_matching(in.prior, in.locals, kTopics);
      const auto s = optimize_swap(in.prior, in.locals, kTopics);
      const auto e = optimize_exhaustive(in.prior, in.locals, kTopics);
      CHECK(m.objective >= id - 1e-9);
      CHECK(e.objective >= m.objective - 1e-9);
      CHECK(e.objective >= s.objective - 1e-9);
      CHECK(amps_objective(in.prior, in.locals, e.groups[0].perms, kTopics) == doctest::Approx(e.objective));
    }
  }

  TEST_CASE("matching trace is monotone") {
    Rng rng(6);
    for (int t = 0; t < 30; ++t) {
      const auto in = test::random_dirichlet_instance(rng, 5, 6, 4);
      const auto m = optimize_matching(in.prior, in.locals, kTopics);
      const auto& trace = m.groups[0].trace;
      REQUIRE(!trace.empty());
      for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i].objective >= trace[i - 1].objective);
    }
  }

  TEST_CASE("swap output admits no improving transposition") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      FactorizedPosterior prior;
      const auto locals = gmm_locals(seed, prior);
      const SymmetryGroup group = prior.symmetry_groups[0];
      SwapOptions so;
      so.seed = seed;
      const auto r = optimize_swap(prior, locals, group, so);
      const PermutationSet best = r.groups[0].perms;
      CHECK(r.objective >= amps_objective(prior, locals, PermutationSet::identity(10, 3), group) - 1e-12);
      for (std::size_t a = 0; a < best.perms.size(); ++a)
        for (std::size_t i = 0; i < 3; ++i)
          for (std::size_t j = i + 1; j < 3; ++j) {
            PermutationSet moved = best;
            std::swap(moved.perms[a][i], moved.perms[a][j]);
            CHECK(amps_objective(prior, locals, moved, group) <= r.objective + 1e-10);
          }
    }
  }

  TEST_CASE("exhaustive search refuses oversized problems") {
    Rng rng(7);
    const auto in = test::random_dirichlet_instance(rng, 6, 4, 3);
    CHECK_THROWS_AS(optimize_exhaustive(in.prior, in.locals, kTopics), TooLarge);
    ExhaustiveOptions small;
    small.max_candidates = 10;
    const auto in2 = test::random_dirichlet_instance(rng, 3, 3, 3);
    CHECK_THROWS_AS(optimize_exhaustive(in2.prior, in2.locals, kTopics, small), TooLarge);
  }

  TEST_CASE("amps_merge without groups is the naive merge") {
    Rng rng(8);
    auto in = test::random_dirichlet_instance(rng, 3, 3, 3);
    in.prior.symmetry_groups.clear();
    for (auto& l : in.locals) l.symmetry_groups.clear();
    const auto r = amps_merge(in.prior, in.locals);
    CHECK(r.groups.empty());
    CHECK(r.merged.at("topics").rows == naive_merge(in.prior, in.locals).at("topics").rows);
  }

  TEST_CASE("assignment solver") {
    CHECK(assignment_solve(RowMatrix::Identity(2, 2)) == Permutation{0, 1});
    CHECK(assignment_solve(rows({{0, 1}, {1, 0}})) == Permutation{1, 0});
    CHECK(assignment_solve(rows({{0, 0, 1}, {0, 1, 0}, {1, 0, 0}})) == Permutation{2, 1, 0});
    // Ties resolve to the lexicographically smallest optimum.
    CHECK(assignment_solve(RowMatrix::Ones(3, 3)) == Permutation{0, 1, 2});

    Rng rng(9);
    for (int t = 0; t < 100; ++t) {
      const std::size_t k = 1 + t % 6;
      RowMatrix w(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal(0.0, 5.0);
      Permutation oracle;
      const double best = brute_force_assignment(w, oracle);
      const auto p = assignment_solve(w);
      double v = 0.0;
      for (std::size_t i = 0; i < k; ++i) v += w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p[i]));
      CHECK(v == doctest::Approx(best).epsilon(1e-12));
      CHECK(p == oracle);
    }
  }

  TEST_CASE("symmetrized density is permutation invariant") {
    Rng rng(10);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      FitOptions opts;
      opts.seed = seed;
      const auto post = fit_gmm_vb(gen_gmm(seed, 30).points, GmmSpec{}, opts).posterior;
      const auto sym = symmetrize(post, post.symmetry_groups[0]);
      CHECK(sym.mixture_size() == 6);
      for (double w : sym.weights()) CHECK(w == doctest::Approx(1.0 / 6.0));
      const auto value = sym.sample(rng);
      const double base = sym.log_density(value);
      for (const auto& p : sym.permutations())
        CHECK(std::abs(sym.log_density(sym.permute_value(value, p)) - base) <= 1e-9);
    }
    for (std::size_t k = 2; k <= 4; ++k) {
      const auto in = test::random_dirichlet_instance(rng, k, 1, 3);
      const auto sym = symmetrize(in.locals[0], kTopics);
      const auto value = sym.sample(rng);
      const double base = sym.log_density(value);
      for (const auto& p : test::all_permutations(k))
        CHECK(std::abs(sym.log_density(sym.permute_value(value, p)) - base) <= 1e-9);
    }
  }

  TEST_CASE("symmetrization edge cases") {
    Rng rng(11);
    const auto one = test::random_dirichlet_instance(rng, 1, 1, 3);
    const auto sym = symmetrize(one.locals[0], kTopics);
    CHECK(sym.mixture_size() == 1);
    const auto v = sym.sample(rng);
    CHECK(sym.log_density(v) ==
          doctest::Approx(expfam::log_density(expfam::Family::dirichlet(3), row_span(one.locals[0].at("topics").rows, 0),
                                              row_span(v.at("topics"), 0))));
    const auto big = test::random_dirichlet_instance(rng, 7, 1, 3);
    CHECK_THROWS_AS(symmetrize(big.locals[0], kTopics), TooManyComponents);
  }
}
