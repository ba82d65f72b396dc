#include "amps/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "amps/errors.hpp"
#include "amps/merge.hpp"
#include "amps/models.hpp"
#include "amps/random.hpp"
#include "amps/special.hpp"

namespace amps {

double gmm_test_ll(const FactorizedPosterior& posterior, std::span<const double> test_points,
                   double component_variance) {
  posterior.validate();
  if (test_points.empty()) throw EmptyData("gmm_test_ll: no test points");
  const std::vector<double> means = gmm_component_means(posterior);
  const std::vector<double> weights = gmm_weight_means(posterior);
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * component_variance);
  std::vector<double> terms(means.size());
  double total = 0.0;
  for (double y : test_points) {
    for (std::size_t k = 0; k < means.size(); ++k) {
      const double d = y - means[k];
      terms[k] = std::log(weights[k]) + log_norm - d * d / (2.0 * component_variance);
    }
    total += special::log_sum_exp(terms);
  }
  return total / static_cast<double>(test_points.size());
}

double aligned_mean_error(std::span<const double> estimates, std::span<const double> truth) {
  if (estimates.size() != truth.size()) throw ShapeMismatch("aligned_mean_error: size mismatch");
  const std::size_t k = truth.size();
  RowMatrix w(k, k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) w(a, b) = -(estimates[b] - truth[a]) * (estimates[b] - truth[a]);
  const Permutation p = assignment_solve(w);
  double sq = 0.0;
  for (std::size_t a = 0; a < k; ++a) sq += (estimates[p[a]] - truth[a]) * (estimates[p[a]] - truth[a]);
  return std::sqrt(sq);
}

HeldOutLikelihood lda_predictive_ll(const FactorizedPosterior& posterior, const Corpus& test_docs,
                                    const LdaEvalOptions& options) {
  if (test_docs.documents.empty()) throw EmptyCorpus("lda_predictive_ll: no test documents");
  const RowMatrix topics = lda_topic_means(posterior);
  const std::size_t k = static_cast<std::size_t>(topics.rows());
  HeldOutLikelihood out;
  double total = 0.0;
  for (std::size_t d = 0; d < test_docs.documents.size(); ++d) {
    const Document& doc = test_docs.documents[d];
    std::vector<std::size_t> tokens;
    for (const auto& [w, c] : doc.entries) tokens.insert(tokens.end(), c, w);
    const std::size_t held = static_cast<std::size_t>(std::llround(options.holdout_fraction * tokens.size()));
    if (tokens.size() < 2 || held == 0 || held >= tokens.size()) {
      ++out.skipped_docs;
      continue;
    }
    Rng rng(derive_seed(options.seed, d));
    rng.shuffle(tokens);
    std::vector<std::size_t> observed_counts(topics.cols(), 0);
    for (std::size_t t = held; t < tokens.size(); ++t) ++observed_counts[tokens[t]];
    Document observed;
    for (std::size_t w = 0; w < observed_counts.size(); ++w)
      if (observed_counts[w] > 0) observed.entries.emplace_back(w, observed_counts[w]);
    const std::vector<double> theta =
        infer_doc_topics(observed, topics, options.doc_topic_prior, options.fold_in_iters);
    for (std::size_t t = 0; t < held; ++t) {
      double p = 0.0;
      for (std::size_t c = 0; c < k; ++c) p += theta[c] * topics(c, tokens[t]);
      total += std::log(p);
    }
    out.heldout_words += held;
    ++out.scored_docs;
  }
  if (out.scored_docs == 0) throw EmptyHoldout("lda_predictive_ll: every test document is too short to split");
  out.per_word = total / static_cast<double>(out.heldout_words);
  return out;
}

namespace {

// log sum_z prod_k q(z_k) prod_{d in held} N(y_d; sum_k z_k m_kd, var)
double lfm_heldout_log_density(const RowMatrix& means, const std::vector<double>& rho,
                               const std::vector<std::size_t>& held, std::span<const double> y, double var) {
  const std::size_t k = rho.size();
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * var);
  if (k > 16) {
    // Moment-matched Gaussian per held-out component.
    double total = 0.0;
    for (std::size_t d : held) {
      double mean = 0.0, v = var;
      for (std::size_t c = 0; c < k; ++c) {
        mean += rho[c] * means(c, d);
        v += rho[c] * (1.0 - rho[c]) * means(c, d) * means(c, d);
      }
      total += -0.5 * std::log(2.0 * std::numbers::pi * v) - (y[d] - mean) * (y[d] - mean) / (2.0 * v);
    }
    return total;
  }
  std::vector<double> terms;
  terms.reserve(std::size_t{1} << k);
  for (std::size_t mask = 0; mask < (std::size_t{1} << k); ++mask) {
    double lw = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double p = (mask >> c & 1) ? rho[c] : 1.0 - rho[c];
      lw += std::log(std::max(p, 1e-300));
    }
    for (std::size_t d : held) {
      double mean = 0.0;
      for (std::size_t c = 0; c < k; ++c)
        if (mask >> c & 1) mean += means(c, d);
      lw += log_norm - (y[d] - mean) * (y[d] - mean) / (2.0 * var);
    }
    terms.push_back(lw);
  }
  return special::log_sum_exp(terms);
}

// Starting point for q(z): the most probable binary assignment given the
// observed components, by enumeration when K is small. Coordinate ascent
// from all-zeros can lock onto a poor configuration when the noise is small.
std::vector<double> map_assignment(const RowMatrix& means, const std::vector<double>& weights,
                                   const std::vector<bool>& observed, std::span<const double> y, double var) {
  const std::size_t k = weights.size();
  std::vector<double> rho(k, 0.0);
  if (k > 16) return rho;
  double best = -std::numeric_limits<double>::infinity();
  std::size_t best_mask = 0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << k); ++mask) {
    double lw = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double w = std::clamp(weights[c], 1e-12, 1.0 - 1e-12);
      lw += (mask >> c & 1) ? std::log(w) : std::log1p(-w);
    }
    for (std::size_t d = 0; d < observed.size(); ++d) {
      if (!observed[d]) continue;
      double mean = 0.0;
      for (std::size_t c = 0; c < k; ++c)
        if (mask >> c & 1) mean += means(c, d);
      lw -= (y[d] - mean) * (y[d] - mean) / (2.0 * var);
    }
    if (lw > best) best = lw, best_mask = mask;
  }
  for (std::size_t c = 0; c < k; ++c) rho[c] = (best_mask >> c & 1) ? 1.0 : 0.0;
  return rho;
}

}  // namespace

double lfm_predictive_ll(const FactorizedPosterior& posterior, const RowMatrix& test_obs,
                         const LfmEvalOptions& options) {
  if (test_obs.rows() == 0) throw EmptyData("lfm_predictive_ll: no test observations");
  posterior.validate();
  const RowMatrix means = lfm_feature_means(posterior);
  const std::vector<double> weights = lfm_weight_means(posterior);
  const std::size_t k = static_cast<std::size_t>(means.rows()), dim = static_cast<std::size_t>(means.cols());
  if (static_cast<std::size_t>(test_obs.cols()) != dim) throw ShapeMismatch("lfm_predictive_ll: width mismatch");
  const double var = options.noise_variance;

  double total = 0.0;
  std::size_t scored = 0;
  for (Eigen::Index n = 0; n < test_obs.rows(); ++n) {
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(n)));
    std::vector<std::size_t> dims(dim);
    std::iota(dims.begin(), dims.end(), 0);
    rng.shuffle(dims);
    std::size_t n_held = 1;
    if (options.mode == LfmHoldout::PixelFraction)
      n_held = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(options.fraction * dim)), 1, dim - 1);
    std::vector<std::size_t> held(dims.begin(), dims.begin() + static_cast<std::ptrdiff_t>(n_held));
    std::vector<bool> observed(dim, true);
    for (std::size_t d : held) observed[d] = false;

    const auto y = row_span(test_obs, n);
    std::vector<double> rho = map_assignment(means, weights, observed, y, var);
    std::vector<double> residual(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      residual[d] = observed[d] ? y[d] : 0.0;
      for (std::size_t c = 0; c < k; ++c) residual[d] -= rho[c] * means(c, d);
    }
    for (std::size_t it = 0; it < options.inference_iters; ++it) {
      double change = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        double dot = 0.0, sq = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
          if (!observed[d]) continue;
          const double r = residual[d] + rho[c] * means(c, d);
          dot += means(c, d) * r;
          sq += means(c, d) * means(c, d);
        }
        const double w = std::clamp(weights[c], 1e-12, 1.0 - 1e-12);
        const double logit = std::log(w) - std::log1p(-w) + (dot - 0.5 * sq) / var;
        const double next = 1.0 / (1.0 + std::exp(-logit));
        for (std::size_t d = 0; d < dim; ++d)
          if (observed[d]) residual[d] += (rho[c] - next) * means(c, d);
        change += std::abs(next - rho[c]);
        rho[c] = next;
      }
      if (change < 1e-10) break;
    }
    total += lfm_heldout_log_density(means, rho, held, y, var);
    scored += held.size();
  }
  return total / static_cast<double>(scored);
}

double feature_error_2norm(const RowMatrix& estimates, const RowMatrix& truth) {
  if (estimates.rows() != truth.rows() || estimates.cols() != truth.cols())
    throw ShapeMismatch("feature_error_2norm: shape mismatch");
  const Eigen::Index k = truth.rows();
  RowMatrix w(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < k; ++b) w(a, b) = -(estimates.row(b) - truth.row(a)).norm();
  const Permutation p = assignment_solve(w);
  double total = 0.0;
  for (Eigen::Index a = 0; a < k; ++a) total += (estimates.row(p[a]) - truth.row(a)).norm();
  return total;
}

Summary summarize(std::span<const double> values) {
  if (values.empty()) return {};
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  return {quantile(0.5), quantile(0.25), quantile(0.75), v.front(), v.back()};
}

EvalReport make_report(std::string metric, std::vector<double> values, double seconds) {
  EvalReport r;
  r.metric = std::move(metric);
  r.summary = summarize(values);
  r.values = std::move(values);
  r.seconds = seconds;
  return r;
}

}  // namespace amps
