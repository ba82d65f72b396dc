#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"

#include "amps/data.hpp"
#include "amps/errors.hpp"
#include "amps/eval.hpp"
#include "amps/models.hpp"
#include "support.hpp"

using namespace amps;

namespace {

// GMM posterior with near-certain means and weights.
FactorizedPosterior sharp_gmm(const std::vector<double>& means, const std::vector<double>& weights) {
  GmmSpec spec;
  spec.components = means.size();
  spec.dirichlet_prior.assign(means.size(), 1.0);
  FactorizedPosterior p = gmm_prior(spec);
  for (std::size_t k = 0; k < means.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    p.at("mu").rows(r, 0) = means[k] * 1e8;
    p.at("mu").rows(r, 1) = -0.5 * 1e8;
    p.at("pi").rows(r, 0) = weights[k] * 1e8;
  }
  return p;
}

FactorizedPosterior lfm_posterior(const RowMatrix& features, const std::vector<double>& weights) {
  LfmSpec spec;
  spec.features = static_cast<std::size_t>(features.rows());
  spec.dim = static_cast<std::size_t>(features.cols());
  FactorizedPosterior p = lfm_prior(spec);
  for (Eigen::Index k = 0; k < features.rows(); ++k) {
    for (Eigen::Index d = 0; d < features.cols(); ++d) p.at("features").rows(k, d) = features(k, d) * 1e6;
    p.at("features").rows(k, features.cols()) = -0.5 * 1e6;
    p.at("weights").rows(k, 0) = weights[static_cast<std::size_t>(k)] * 1e4;
    p.at("weights").rows(k, 1) = (1.0 - weights[static_cast<std::size_t>(k)]) * 1e4;
  }
  return p;
}

double brute_feature_error(const RowMatrix& est, const RowMatrix& truth) {
  double best = 1e300;
  for (const auto& p : test::all_permutations(static_cast<std::size_t>(est.rows()))) {
    double e = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k)
      e += (est.row(static_cast<Eigen::Index>(p[k])) - truth.row(static_cast<Eigen::Index>(k))).norm();
    best = std::min(best, e);
  }
  return best;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("GMM test likelihood at the mode of a dominant component") {
    const auto p = sharp_gmm({1.0, -5.0}, {1.0, 0.0});
    const std::vector<double> pt{1.0};
    CHECK(gmm_test_ll(p, pt, 0.09) == doctest::Approx(std::log(1.0 / std::sqrt(2 * std::numbers::pi * 0.09))).epsilon(1e-6));
  }

  TEST_CASE("metrics ignore joint relabeling") {
    FitOptions opts;
    opts.seed = 2;
    const auto gmm = fit_gmm_vb(gen_gmm(2, 30).points, GmmSpec{}, opts).posterior;
    const auto test_points = gen_gmm(99, 200).points;
    const double ll = gmm_test_ll(gmm, test_points, 0.09);
    for (const auto& p : test::all_permutations(3))
      CHECK(std::abs(gmm_test_ll(gmm.permuted(gmm.symmetry_groups[0], p), test_points, 0.09) - ll) <= 1e-12);

    const auto lda = gen_lda(1, 4, 40, 60, 40, 0.2, 0.5);
    LdaSpec ls;
    ls.topics = 4;
    ls.vocabulary = 40;
    const auto [train, test_docs] = split_docs(lda.corpus, 20, 3);
    const auto topics = fit_lda_vb(train, ls, opts).posterior;
    LdaEvalOptions eo;
    eo.seed = 4;
    const double base = lda_predictive_ll(topics, test_docs, eo).per_word;
    CHECK(std::abs(lda_predictive_ll(topics.permuted({"topics"}, {3, 1, 0, 2}), test_docs, eo).per_word - base) <=
          1e-12);

    LfmGenOptions g;
    g.n_train = 300;
    g.n_test = 50;
    const auto data = gen_lfm(5, g);
    const auto lfm = fit_lfm_vb(data.train, LfmSpec{}, opts).posterior;
    for (LfmHoldout mode : {LfmHoldout::OneOfD, LfmHoldout::PixelFraction}) {
      LfmEvalOptions lo;
      lo.mode = mode;
      lo.seed = 6;
      const double b = lfm_predictive_ll(lfm, data.test, lo);
      CHECK(std::abs(lfm_predictive_ll(lfm.permuted({"features", "weights"}, {4, 2, 0, 1, 3}), data.test, lo) - b) <=
            1e-12);
    }
  }

  TEST_CASE("uniform topics give -ln W per word") {
    LdaSpec ls;
    ls.topics = 3;
    ls.vocabulary = 25;
    const auto prior = lda_prior(ls);
    const auto lda = gen_lda(2, 3, 25, 30, 40, 0.2, 0.5);
    const auto r = lda_predictive_ll(prior, lda.corpus);
    CHECK(r.per_word == doctest::Approx(-std::log(25.0)).epsilon(1e-12));
    CHECK(r.scored_docs == 30);
    CHECK(r.heldout_words == 30 * 4);
  }

  TEST_CASE("short documents are skipped and counted") {
    LdaSpec ls;
    ls.topics = 2;
    ls.vocabulary = 5;
    Corpus c;
    c.vocabulary_size = 5;
    c.documents = {Document{{{0, 1}}}, Document{{{1, 20}}}};
    const auto r = lda_predictive_ll(lda_prior(ls), c);
    CHECK(r.skipped_docs == 1);
    CHECK(r.scored_docs == 1);
    c.documents = {Document{{{0, 1}}}};
    CHECK_THROWS_AS(lda_predictive_ll(lda_prior(ls), c), EmptyHoldout);
  }

  TEST_CASE("fitted topics predict better than the prior") {
    const auto lda = gen_lda(3, 5, 200, 500, 50, 0.1, 0.5);
    LdaSpec ls;
    const auto [train, test_docs] = split_docs(lda.corpus, 100, 1);
    FitOptions opts;
    opts.seed = 3;
    const auto fit = fit_lda_vb(train, ls, opts).posterior;
    CHECK(lda_predictive_ll(fit, test_docs).per_word > lda_predictive_ll(lda_prior(ls), test_docs).per_word);
  }

  TEST_CASE("LFM predictive with zero features on zero data") {
    const RowMatrix zeros = RowMatrix::Zero(3, 10);
    const auto p = lfm_posterior(RowMatrix::Zero(3, 10), {0.5, 0.5, 0.5});
    LfmEvalOptions lo;
    CHECK(lfm_predictive_ll(p, RowMatrix::Zero(20, 10), lo) ==
          doctest::Approx(-0.5 * std::log(2 * std::numbers::pi * 0.04)).epsilon(1e-9));
    lo.mode = LfmHoldout::PixelFraction;
    CHECK(lfm_predictive_ll(p, RowMatrix::Zero(20, 10), lo) ==
          doctest::Approx(-0.5 * std::log(2 * std::numbers::pi * 0.04)).epsilon(1e-9));
  }

  TEST_CASE("LFM predictive with the true features is near the noise floor") {
    const auto data = gen_lfm(7);
    const auto p = lfm_posterior(data.truth.features, data.truth.weights);
    const double floor = -0.5 * std::log(2 * std::numbers::pi * 0.04) - 0.5;
    CHECK(lfm_predictive_ll(p, data.test) > floor - 0.3);
  }

  TEST_CASE("feature error") {
    Rng rng(1);
    RowMatrix truth(5, 10);
    for (Eigen::Index i = 0; i < truth.size(); ++i) truth.data()[i] = rng.bernoulli(0.5);
    CHECK(feature_error_2norm(truth, truth) == 0.0);
    RowMatrix shuffled = truth;
    shuffled.row(0).swap(shuffled.row(3));
    shuffled.row(1).swap(shuffled.row(4));
    CHECK(feature_error_2norm(shuffled, truth) == doctest::Approx(0.0));
    for (int t = 0; t < 50; ++t) {
      RowMatrix est(5, 10);
      for (Eigen::Index i = 0; i < est.size(); ++i) est.data()[i] = rng.normal();
      CHECK(feature_error_2norm(est, truth) == doctest::Approx(brute_feature_error(est, truth)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(feature_error_2norm(RowMatrix::Zero(4, 10), truth), ShapeMismatch);
    CHECK(aligned_mean_error(std::vector{3.0, 1.0, -1.0}, std::vector{1.0, -1.0, 3.0}) == doctest::Approx(0.0));
  }

  TEST_CASE("summaries use interpolated quantiles") {
    const std::vector<double> v{4, 1, 3, 2, 5};
    const Summary s = summarize(v);
    CHECK(s.median == 3);
    CHECK(s.q25 == 2);
    CHECK(s.q75 == 4);
    CHECK(s.min == 1);
    CHECK(s.max == 5);
    CHECK(summarize(std::vector<double>{1, 2}).median == doctest::Approx(1.5));
    CHECK(make_report("x", v).summary.median == 3);
  }

  TEST_CASE("holdout splits are reproducible") {
    const auto data = gen_lfm(8);
    FitOptions opts;
    opts.seed = 1;
    const auto fit = fit_lfm_vb(data.train.topRows(200), LfmSpec{}, opts).posterior;
    LfmEvalOptions lo;
    lo.seed = 3;
    CHECK(lfm_predictive_ll(fit, data.test, lo) == lfm_predictive_ll(fit, data.test, lo));
  }
}
