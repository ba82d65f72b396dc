#pragma once

// Held-out predictive metrics and permutation-aligned parameter errors. All
// predictives are plug-in: posterior means stand in for the parameters.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "amps/corpus.hpp"
#include "amps/posterior.hpp"

namespace amps {

/// Mean per-point log of sum_k E[pi_k] N(y; E[mu_k], variance).
double gmm_test_ll(const FactorizedPosterior& posterior, std::span<const double> test_points,
                   double component_variance);

/// sqrt(min_P sum_k (estimate_{P(k)} - truth_k)^2).
double aligned_mean_error(std::span<const double> estimates, std::span<const double> truth);

struct LdaEvalOptions {
  double holdout_fraction = 0.1;
  std::uint64_t seed = 0;
  double doc_topic_prior = 0.5;
  std::size_t fold_in_iters = 100;
};

struct HeldOutLikelihood {
  /// Mean log probability per held-out word.
  double per_word = 0.0;
  std::size_t scored_docs = 0;
  /// Documents too short to split.
  std::size_t skipped_docs = 0;
  std::size_t heldout_words = 0;
};

/// Document completion with fold-in VB: doc-topic proportions are inferred
/// on the observed part of each document, then the held-out words are scored
/// under sum_k E[theta_k] E[phi_kw].
HeldOutLikelihood lda_predictive_ll(const FactorizedPosterior& posterior, const Corpus& test_docs,
                                    const LdaEvalOptions& options = {});

enum class LfmHoldout {
  /// One random component per observation.
  OneOfD,
  /// A random fraction of the components per observation.
  PixelFraction,
};

struct LfmEvalOptions {
  LfmHoldout mode = LfmHoldout::OneOfD;
  double fraction = 0.1;
  std::uint64_t seed = 0;
  double noise_variance = 0.04;
  std::size_t inference_iters = 50;
};

/// Mean held-out log density per held-out component, with q(z) inferred on
/// the observed components and the predictive summed over z exactly.
double lfm_predictive_ll(const FactorizedPosterior& posterior, const RowMatrix& test_obs,
                         const LfmEvalOptions& options = {});

/// min_P sum_k || estimate_{P(k)} - truth_k ||_2.
double feature_error_2norm(const RowMatrix& estimates, const RowMatrix& truth);

struct Summary {
  double median = 0.0, q25 = 0.0, q75 = 0.0, min = 0.0, max = 0.0;
};

/// Linearly interpolated quantiles.
Summary summarize(std::span<const double> values);

struct EvalReport {
  std::string metric;
  std::vector<double> values;
  Summary summary;
  double seconds = 0.0;
};

EvalReport make_report(std::string metric, std::vector<double> values, double seconds = 0.0);

}  // namespace amps
