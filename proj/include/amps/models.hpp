#pragma once

// Mean-field variational Bayes for the local posteriors each agent computes.
// Every fitter accepts an explicit prior posterior so that a shared
// streaming state can serve as the prior; the spec-only overloads use the
// model's default prior.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "amps/corpus.hpp"
#include "amps/posterior.hpp"

namespace amps {

struct FitOptions {
  std::uint64_t seed = 0;
  std::size_t max_iters = 200;
  /// Relative ELBO change that counts as converged.
  double tol = 1e-6;
  /// Independent initializations; the highest final ELBO wins.
  std::size_t restarts = 1;
};

struct FitResult {
  FactorizedPosterior posterior;
  /// ELBO after each full coordinate-ascent sweep.
  std::vector<double> elbo;
  std::size_t iterations = 0;
  /// False when max_iters was reached first.
  bool converged = false;
};

// --- Gaussian with unknown mean (exact conjugate case) -------------------

struct GaussianMeanSpec {
  double prior_mean = 0.0;
  double prior_variance = 2.0;
  double known_variance = 1.0;
};

/// Factor "mu": one GaussianKnownVar row, no symmetry.
FactorizedPosterior gaussian_mean_prior(const GaussianMeanSpec& spec);
FactorizedPosterior fit_gaussian_mean(std::span<const double> data, const GaussianMeanSpec& spec,
                                      const FactorizedPosterior& prior);
FactorizedPosterior fit_gaussian_mean(std::span<const double> data, const GaussianMeanSpec& spec);

// --- Gaussian mixture with known component variance ----------------------

struct GmmSpec {
  std::size_t components = 3;
  double component_variance = 0.09;
  double prior_mean = 0.0;
  double prior_variance = 2.0;
  std::vector<double> dirichlet_prior{1.0, 1.0, 1.0};

  void validate() const;
};

/// Factors "mu" (K GaussianKnownVar rows) and "pi" (joint Dirichlet over the
/// K components); symmetry group {mu, pi}.
FactorizedPosterior gmm_prior(const GmmSpec& spec);
FitResult fit_gmm_vb(std::span<const double> data, const GmmSpec& spec, const FactorizedPosterior& prior,
                     const FitOptions& options);
FitResult fit_gmm_vb(std::span<const double> data, const GmmSpec& spec, const FitOptions& options);

/// Posterior means E[mu_k] and E[pi_k] of a GMM posterior.
std::vector<double> gmm_component_means(const FactorizedPosterior& posterior);
std::vector<double> gmm_weight_means(const FactorizedPosterior& posterior);

// --- Latent Dirichlet allocation ------------------------------------------

struct LdaSpec {
  std::size_t topics = 5;
  std::size_t vocabulary = 200;
  double topic_word_prior = 0.05;
  double doc_topic_prior = 0.5;
  std::size_t local_max_iters = 100;
  double local_tol = 1e-5;

  void validate() const;
};

/// Factor "topics": K Dirichlet(W) rows; symmetry group {topics}.
FactorizedPosterior lda_prior(const LdaSpec& spec);
FitResult fit_lda_vb(const Corpus& corpus, const LdaSpec& spec, const FactorizedPosterior& prior,
                     const FitOptions& options);
FitResult fit_lda_vb(const Corpus& corpus, const LdaSpec& spec, const FitOptions& options);

/// Posterior-mean topic-word probabilities, K x W.
RowMatrix lda_topic_means(const FactorizedPosterior& posterior);

/// Fold-in: variational doc-topic proportions E[theta] for one document under
/// fixed topic-word probabilities.
std::vector<double> infer_doc_topics(const Document& doc, const RowMatrix& topic_probs, double doc_topic_prior,
                                     std::size_t max_iters = 100, double tol = 1e-6);

// --- Finite latent feature model ------------------------------------------

struct LfmSpec {
  std::size_t features = 5;
  std::size_t dim = 10;
  double feature_prior_variance = 1.0;
  double beta_a = 1.0;
  double beta_b = 1.0;
  double noise_variance = 0.04;
  /// Fraction of the optimal Bernoulli step applied per z update.
  double damping = 0.8;

  void validate() const;
};

/// Factors "features" (K IsotropicMVN(D) rows) and "weights" (K Beta rows);
/// symmetry group {features, weights}.
FactorizedPosterior lfm_prior(const LfmSpec& spec);
FitResult fit_lfm_vb(const RowMatrix& data, const LfmSpec& spec, const FactorizedPosterior& prior,
                     const FitOptions& options);
FitResult fit_lfm_vb(const RowMatrix& data, const LfmSpec& spec, const FitOptions& options);

/// Posterior-mean feature vectors (K x D) and inclusion probabilities.
RowMatrix lfm_feature_means(const FactorizedPosterior& posterior);
std::vector<double> lfm_weight_means(const FactorizedPosterior& posterior);

}  // namespace amps
