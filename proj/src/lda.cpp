#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "amps/errors.hpp"
#include "amps/models.hpp"
#include "amps/special.hpp"

namespace amps {

using expfam::Family;
using special::digamma;
using special::log_gamma;

void LdaSpec::validate() const {
  if (topics < 2) throw DomainError("LdaSpec: need at least 2 topics");
  if (vocabulary < topics) throw DomainError("LdaSpec: vocabulary must be at least the topic count");
  if (!(topic_word_prior > 0.0) || !(doc_topic_prior > 0.0)) throw DomainError("LdaSpec: priors must be positive");
}

FactorizedPosterior lda_prior(const LdaSpec& spec) {
  spec.validate();
  NaturalParams topics{Family::dirichlet(spec.vocabulary), Layout::PerRow,
                       RowMatrix::Constant(spec.topics, spec.vocabulary, spec.topic_word_prior - 1.0)};
  FactorizedPosterior p;
  p.factors.emplace("topics", std::move(topics));
  p.symmetry_groups = {{"topics"}};
  return p;
}

RowMatrix lda_topic_means(const FactorizedPosterior& posterior) {
  RowMatrix alpha = posterior.at("topics").rows.array() + 1.0;
  for (Eigen::Index k = 0; k < alpha.rows(); ++k) alpha.row(k) /= alpha.row(k).sum();
  return alpha;
}

std::vector<double> infer_doc_topics(const Document& doc, const RowMatrix& topic_probs, double doc_topic_prior,
                                     std::size_t max_iters, double tol) {
  const std::size_t k = static_cast<std::size_t>(topic_probs.rows());
  std::vector<double> gamma(k, doc_topic_prior + static_cast<double>(doc.length()) / static_cast<double>(k));
  std::vector<double> exp_elog_theta(k), next(k);
  for (std::size_t it = 0; it < max_iters; ++it) {
    const double psi_total = digamma(std::accumulate(gamma.begin(), gamma.end(), 0.0));
    for (std::size_t t = 0; t < k; ++t) exp_elog_theta[t] = std::exp(digamma(gamma[t]) - psi_total);
    std::fill(next.begin(), next.end(), doc_topic_prior);
    for (const auto& [w, count] : doc.entries) {
      double norm = 0.0;
      for (std::size_t t = 0; t < k; ++t) norm += exp_elog_theta[t] * topic_probs(t, w);
      if (norm <= 0.0) continue;
      for (std::size_t t = 0; t < k; ++t)
        next[t] += static_cast<double>(count) * exp_elog_theta[t] * topic_probs(t, w) / norm;
    }
    double change = 0.0;
    for (std::size_t t = 0; t < k; ++t) change += std::abs(next[t] - gamma[t]);
    gamma.swap(next);
    if (change / static_cast<double>(k) < tol) break;
  }
  const double total = std::accumulate(gamma.begin(), gamma.end(), 0.0);
  for (double& g : gamma) g /= total;
  return gamma;
}

namespace {

// Batch mean-field VB. `lambda` holds conventional Dirichlet parameters of
// q(topics); the per-document factors q(theta_d) are warm-started across
// sweeps so every step is an exact coordinate-ascent update.
constexpr double kInitSmoothing = 1.0;

class LdaFitter {
 public:
  LdaFitter(const Corpus& corpus, const LdaSpec& spec, const RowMatrix& prior_alpha)
      : corpus_(corpus), spec_(spec), k_(spec.topics), w_(spec.vocabulary), prior_(prior_alpha) {}

  // Each topic starts from the word counts of one random document plus one
  // pseudo-count per word. Without the pseudo-count a word missing from the
  // seed documents keeps E[log phi] near digamma(prior), so the first sweep
  // hands every token of a seeded word to one topic and no other topic can
  // recover it.
  void initialize(Rng& rng) {
    lambda_ = prior_.array() + kInitSmoothing;
    std::vector<std::size_t> order(corpus_.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (std::size_t t = 0; t < k_; ++t) {
      const Document& doc = corpus_.documents[order[t % order.size()]];
      for (const auto& [w, count] : doc.entries) lambda_(t, w) += static_cast<double>(count);
    }
    gamma_.assign(corpus_.size() * k_, 0.0);
    for (std::size_t d = 0; d < corpus_.size(); ++d)
      for (std::size_t t = 0; t < k_; ++t)
        gamma_[d * k_ + t] =
            spec_.doc_topic_prior + static_cast<double>(corpus_.documents[d].length()) / static_cast<double>(k_);
  }

  // One full sweep: local updates for every document, then the global topic
  // update. Returns the ELBO at the new state.
  double sweep() {
    compute_expectations();
    RowMatrix stats = RowMatrix::Zero(k_, w_);
    double local_terms = 0.0;
    for (std::size_t d = 0; d < corpus_.size(); ++d) local_terms += update_document(d, stats);
    lambda_ = prior_ + stats;
    compute_expectations();
    double total = local_terms + (stats.array() * elog_beta_.array()).sum();
    for (std::size_t t = 0; t < k_; ++t) {
      double prior_norm = log_gamma(prior_.row(t).sum()), post_norm = log_gamma(lambda_.row(t).sum());
      for (std::size_t w = 0; w < w_; ++w) {
        prior_norm -= log_gamma(prior_(t, w));
        post_norm -= log_gamma(lambda_(t, w));
        total += (prior_(t, w) - lambda_(t, w)) * elog_beta_(t, w);
      }
      total += prior_norm - post_norm;
    }
    return total;
  }

  const RowMatrix& lambda() const { return lambda_; }

 private:
  void compute_expectations() {
    elog_beta_.resize(k_, w_);
    for (std::size_t t = 0; t < k_; ++t) {
      const double psi_total = digamma(lambda_.row(t).sum());
      for (std::size_t w = 0; w < w_; ++w) elog_beta_(t, w) = digamma(lambda_(t, w)) - psi_total;
    }
    exp_elog_beta_ = elog_beta_.array().exp();
  }

  // Coordinate ascent on (phi_d, gamma_d). Accumulates sufficient statistics
  // and returns the document's ELBO terms that do not involve q(topics).
  double update_document(std::size_t d, RowMatrix& stats) {
    const Document& doc = corpus_.documents[d];
    const double a = spec_.doc_topic_prior;
    double* gamma = &gamma_[d * k_];
    std::vector<double> elog_theta(k_), exp_elog_theta(k_), next(k_), phinorm(doc.entries.size());

    auto refresh_theta = [&] {
      const double psi_total = digamma(std::accumulate(gamma, gamma + k_, 0.0));
      for (std::size_t t = 0; t < k_; ++t) {
        elog_theta[t] = digamma(gamma[t]) - psi_total;
        exp_elog_theta[t] = std::exp(elog_theta[t]);
      }
    };
    auto update_phi = [&] {
      for (std::size_t i = 0; i < doc.entries.size(); ++i) {
        const std::size_t w = doc.entries[i].first;
        double norm = 0.0;
        for (std::size_t t = 0; t < k_; ++t) norm += exp_elog_theta[t] * exp_elog_beta_(t, w);
        phinorm[i] = norm;
      }
    };

    for (std::size_t it = 0; it < spec_.local_max_iters; ++it) {
      refresh_theta();
      update_phi();
      std::fill(next.begin(), next.end(), a);
      for (std::size_t i = 0; i < doc.entries.size(); ++i) {
        const auto [w, count] = doc.entries[i];
        const double scale = static_cast<double>(count) / phinorm[i];
        for (std::size_t t = 0; t < k_; ++t) next[t] += scale * exp_elog_theta[t] * exp_elog_beta_(t, w);
      }
      double change = 0.0;
      for (std::size_t t = 0; t < k_; ++t) {
        change += std::abs(next[t] - gamma[t]);
        gamma[t] = next[t];
      }
      if (change / static_cast<double>(k_) < spec_.local_tol) break;
    }

    // phi is the one that produced the final gamma; expectations of theta
    // below use the final gamma.
    std::vector<double> phi_theta = exp_elog_theta;  // exp(E log theta) used in phi
    std::vector<double> phi_elog_theta = elog_theta;
    refresh_theta();

    double terms = 0.0;
    for (std::size_t i = 0; i < doc.entries.size(); ++i) {
      const auto [w, count] = doc.entries[i];
      const double n = static_cast<double>(count);
      const double log_norm = std::log(phinorm[i]);
      for (std::size_t t = 0; t < k_; ++t) {
        const double phi = phi_theta[t] * exp_elog_beta_(t, w) / phinorm[i];
        if (phi <= 0.0) continue;
        const double log_phi = phi_elog_theta[t] + elog_beta_(t, w) - log_norm;
        stats(t, w) += n * phi;
        terms += n * phi * (elog_theta[t] - log_phi);
      }
    }
    // E[log p(theta | a)] - E[log q(theta | gamma)]
    const double gamma_total = std::accumulate(gamma, gamma + k_, 0.0);
    terms += log_gamma(a * static_cast<double>(k_)) - static_cast<double>(k_) * log_gamma(a);
    terms -= log_gamma(gamma_total);
    for (std::size_t t = 0; t < k_; ++t) terms += log_gamma(gamma[t]) + (a - gamma[t]) * elog_theta[t];
    return terms;
  }

  const Corpus& corpus_;
  const LdaSpec& spec_;
  std::size_t k_, w_;
  RowMatrix prior_;
  RowMatrix lambda_;
  RowMatrix elog_beta_, exp_elog_beta_;
  std::vector<double> gamma_;
};

}  // namespace

FitResult fit_lda_vb(const Corpus& corpus, const LdaSpec& spec, const FactorizedPosterior& prior,
                     const FitOptions& options) {
  spec.validate();
  if (corpus.documents.empty()) throw EmptyCorpus("fit_lda_vb: corpus has no documents");
  if (corpus.vocabulary_size > spec.vocabulary)
    throw ShapeMismatch("fit_lda_vb: corpus vocabulary exceeds spec vocabulary");
  const NaturalParams& topics = prior.at("topics");
  if (topics.components() != spec.topics || static_cast<std::size_t>(topics.rows.cols()) != spec.vocabulary)
    throw ShapeMismatch("fit_lda_vb: prior shape does not match spec");
  const RowMatrix prior_alpha = topics.rows.array() + 1.0;

  FitResult best;
  double best_elbo = -std::numeric_limits<double>::infinity();
  for (std::size_t restart = 0; restart < std::max<std::size_t>(1, options.restarts); ++restart) {
    Rng rng(derive_seed(options.seed, 0x6c6461, restart));
    LdaFitter fitter(corpus, spec, prior_alpha);
    fitter.initialize(rng);
    FitResult result;
    for (std::size_t it = 0; it < options.max_iters; ++it) {
      const double value = fitter.sweep();
      result.elbo.push_back(value);
      result.iterations = it + 1;
      if (result.elbo.size() >= 2) {
        const double prev = result.elbo[result.elbo.size() - 2];
        if (std::abs(value - prev) <= options.tol * std::abs(value)) {
          result.converged = true;
          break;
        }
      }
    }
    result.posterior = prior;
    result.posterior.at("topics").rows = fitter.lambda().array() - 1.0;
    if (result.elbo.back() > best_elbo) {
      best_elbo = result.elbo.back();
      best = std::move(result);
    }
  }
  return best;
}

FitResult fit_lda_vb(const Corpus& corpus, const LdaSpec& spec, const FitOptions& options) {
  return fit_lda_vb(corpus, spec, lda_prior(spec), options);
}

}  // namespace amps
