#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "amps/errors.hpp"
#include "amps/models.hpp"
#include "amps/special.hpp"

namespace amps {

using expfam::Family;
using special::digamma;
using special::log_gamma;

FactorizedPosterior gaussian_mean_prior(const GaussianMeanSpec& spec) {
  NaturalParams mu{Family::gaussian(), Layout::PerRow, RowMatrix(1, 2)};
  const auto nat = expfam::to_natural(mu.family, std::vector<double>{spec.prior_mean, spec.prior_variance});
  mu.rows << nat[0], nat[1];
  FactorizedPosterior p;
  p.factors.emplace("mu", std::move(mu));
  return p;
}

FactorizedPosterior fit_gaussian_mean(std::span<const double> data, const GaussianMeanSpec& spec,
                                      const FactorizedPosterior& prior) {
  if (!(spec.known_variance > 0.0)) throw DomainError("known_variance must be positive");
  FactorizedPosterior post = prior;
  RowMatrix& row = post.at("mu").rows;
  double sum = 0.0;
  for (double y : data) sum += y;
  row(0, 0) += sum / spec.known_variance;
  row(0, 1) -= static_cast<double>(data.size()) / (2.0 * spec.known_variance);
  return post;
}

FactorizedPosterior fit_gaussian_mean(std::span<const double> data, const GaussianMeanSpec& spec) {
  return fit_gaussian_mean(data, spec, gaussian_mean_prior(spec));
}

void GmmSpec::validate() const {
  if (components < 2) throw DomainError("GmmSpec: need at least 2 components");
  if (!(component_variance > 0.0) || !(prior_variance > 0.0))
    throw DomainError("GmmSpec: variances must be positive");
  if (dirichlet_prior.size() != components)
    throw ShapeMismatch("GmmSpec: dirichlet_prior must have one entry per component");
  for (double a : dirichlet_prior)
    if (!(a > 0.0)) throw DomainError("GmmSpec: dirichlet_prior entries must be positive");
}

FactorizedPosterior gmm_prior(const GmmSpec& spec) {
  spec.validate();
  const std::size_t k = spec.components;
  NaturalParams mu{Family::gaussian(), Layout::PerRow, RowMatrix(k, 2)};
  const auto nat = expfam::to_natural(mu.family, std::vector<double>{spec.prior_mean, spec.prior_variance});
  for (std::size_t c = 0; c < k; ++c) mu.rows.row(c) << nat[0], nat[1];
  NaturalParams pi{Family::dirichlet(k), Layout::Joint, RowMatrix(k, 1)};
  for (std::size_t c = 0; c < k; ++c) pi.rows(c, 0) = spec.dirichlet_prior[c] - 1.0;
  FactorizedPosterior p;
  p.factors.emplace("mu", std::move(mu));
  p.factors.emplace("pi", std::move(pi));
  p.symmetry_groups = {{"mu", "pi"}};
  return p;
}

std::vector<double> gmm_component_means(const FactorizedPosterior& posterior) {
  const RowMatrix& mu = posterior.at("mu").rows;
  std::vector<double> out(mu.rows());
  for (Eigen::Index k = 0; k < mu.rows(); ++k) out[k] = -mu(k, 0) / (2.0 * mu(k, 1));
  return out;
}

std::vector<double> gmm_weight_means(const FactorizedPosterior& posterior) {
  const RowMatrix& pi = posterior.at("pi").rows;
  std::vector<double> out(pi.rows());
  double total = 0.0;
  for (Eigen::Index k = 0; k < pi.rows(); ++k) total += pi(k, 0) + 1.0;
  for (Eigen::Index k = 0; k < pi.rows(); ++k) out[k] = (pi(k, 0) + 1.0) / total;
  return out;
}

namespace {

struct GmmState {
  std::vector<double> m, s2, alpha;
};

struct GmmPrior {
  std::vector<double> m0, s02, alpha0;
};

GmmPrior read_gmm_prior(const FactorizedPosterior& prior, std::size_t k) {
  const RowMatrix& mu = prior.at("mu").rows;
  const RowMatrix& pi = prior.at("pi").rows;
  if (static_cast<std::size_t>(mu.rows()) != k || static_cast<std::size_t>(pi.rows()) != k)
    throw ShapeMismatch("GMM prior does not match component count");
  GmmPrior p;
  for (std::size_t c = 0; c < k; ++c) {
    const double s2 = -1.0 / (2.0 * mu(c, 1));
    p.m0.push_back(mu(c, 0) * s2);
    p.s02.push_back(s2);
    p.alpha0.push_back(pi(c, 0) + 1.0);
  }
  return p;
}

double dirichlet_log_norm(const std::vector<double>& alpha) {
  double total = 0.0, acc = 0.0;
  for (double a : alpha) {
    total += a;
    acc -= log_gamma(a);
  }
  return acc + log_gamma(total);
}

class GmmFitter {
 public:
  GmmFitter(std::span<const double> data, const GmmSpec& spec, GmmPrior prior)
      : y_(data), spec_(spec), prior_(std::move(prior)), k_(spec.components),
        resp_(data.size() * spec.components) {}

  void initialize(Rng& rng) {
    state_.m.resize(k_);
    state_.s2 = prior_.s02;
    state_.alpha = prior_.alpha0;
    for (std::size_t c = 0; c < k_; ++c) state_.m[c] = rng.normal(prior_.m0[c], std::sqrt(prior_.s02[c]));
  }

  void update_responsibilities() {
    const double var = spec_.component_variance;
    std::vector<double> elog_pi = expected_log_pi();
    std::vector<double> logits(k_);
    for (std::size_t n = 0; n < y_.size(); ++n) {
      for (std::size_t c = 0; c < k_; ++c) {
        const double m = state_.m[c];
        logits[c] = elog_pi[c] + (y_[n] * m - 0.5 * (m * m + state_.s2[c])) / var;
      }
      const double norm = special::log_sum_exp(logits);
      for (std::size_t c = 0; c < k_; ++c) resp_[n * k_ + c] = std::exp(logits[c] - norm);
    }
  }

  void update_globals() {
    const double var = spec_.component_variance;
    for (std::size_t c = 0; c < k_; ++c) {
      double count = 0.0, sum = 0.0;
      for (std::size_t n = 0; n < y_.size(); ++n) {
        count += resp_[n * k_ + c];
        sum += resp_[n * k_ + c] * y_[n];
      }
      const double precision = 1.0 / prior_.s02[c] + count / var;
      state_.s2[c] = 1.0 / precision;
      state_.m[c] = state_.s2[c] * (prior_.m0[c] / prior_.s02[c] + sum / var);
      state_.alpha[c] = prior_.alpha0[c] + count;
    }
  }

  double elbo() const {
    const double var = spec_.component_variance;
    const std::vector<double> elog_pi = expected_log_pi();
    const double log_norm_lik = -0.5 * std::log(2.0 * std::numbers::pi * var);
    double total = 0.0;
    for (std::size_t n = 0; n < y_.size(); ++n) {
      for (std::size_t c = 0; c < k_; ++c) {
        const double r = resp_[n * k_ + c];
        if (r <= 0.0) continue;
        const double d = y_[n] - state_.m[c];
        total += r * (elog_pi[c] + log_norm_lik - (d * d + state_.s2[c]) / (2.0 * var) - std::log(r));
      }
    }
    total += dirichlet_log_norm(prior_.alpha0) - dirichlet_log_norm(state_.alpha);
    for (std::size_t c = 0; c < k_; ++c) {
      total += (prior_.alpha0[c] - state_.alpha[c]) * elog_pi[c];
      const double d = state_.m[c] - prior_.m0[c];
      total += -0.5 * std::log(2.0 * std::numbers::pi * prior_.s02[c]) - (d * d + state_.s2[c]) / (2.0 * prior_.s02[c]);
      total += 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * state_.s2[c]);
    }
    return total;
  }

  FactorizedPosterior posterior(const FactorizedPosterior& prior) const {
    FactorizedPosterior out = prior;
    RowMatrix& mu = out.at("mu").rows;
    RowMatrix& pi = out.at("pi").rows;
    for (std::size_t c = 0; c < k_; ++c) {
      mu(c, 0) = state_.m[c] / state_.s2[c];
      mu(c, 1) = -1.0 / (2.0 * state_.s2[c]);
      pi(c, 0) = state_.alpha[c] - 1.0;
    }
    return out;
  }

 private:
  std::vector<double> expected_log_pi() const {
    double total = 0.0;
    for (double a : state_.alpha) total += a;
    const double psi_total = digamma(total);
    std::vector<double> out(k_);
    for (std::size_t c = 0; c < k_; ++c) out[c] = digamma(state_.alpha[c]) - psi_total;
    return out;
  }

  std::span<const double> y_;
  const GmmSpec& spec_;
  GmmPrior prior_;
  std::size_t k_;
  std::vector<double> resp_;
  GmmState state_;
};

}  // namespace

FitResult fit_gmm_vb(std::span<const double> data, const GmmSpec& spec, const FactorizedPosterior& prior,
                     const FitOptions& options) {
  spec.validate();
  if (data.empty()) throw EmptyData("fit_gmm_vb: no data");
  const GmmPrior p = read_gmm_prior(prior, spec.components);

  FitResult best;
  double best_elbo = -std::numeric_limits<double>::infinity();
  for (std::size_t restart = 0; restart < std::max<std::size_t>(1, options.restarts); ++restart) {
    Rng rng(derive_seed(options.seed, 0x676d6d, restart));
    GmmFitter fitter(data, spec, p);
    fitter.initialize(rng);
    FitResult result;
    for (std::size_t it = 0; it < options.max_iters; ++it) {
      fitter.update_responsibilities();
      fitter.update_globals();
      const double value = fitter.elbo();
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
    result.posterior = fitter.posterior(prior);
    if (result.elbo.back() > best_elbo) {
      best_elbo = result.elbo.back();
      best = std::move(result);
    }
  }
  return best;
}

FitResult fit_gmm_vb(std::span<const double> data, const GmmSpec& spec, const FitOptions& options) {
  return fit_gmm_vb(data, spec, gmm_prior(spec), options);
}

}  // namespace amps
