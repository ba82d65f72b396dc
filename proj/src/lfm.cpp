#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <utility>

#include "amps/errors.hpp"
#include "amps/models.hpp"
#include "amps/special.hpp"

namespace amps {

using expfam::Family;
using special::digamma;
using special::log_gamma;

void LfmSpec::validate() const {
  if (features < 1 || dim < 1) throw DomainError("LfmSpec: need K >= 1 and D >= 1");
  if (!(noise_variance > 0.0) || !(feature_prior_variance > 0.0))
    throw DomainError("LfmSpec: variances must be positive");
  if (!(beta_a > 0.0) || !(beta_b > 0.0)) throw DomainError("LfmSpec: beta prior must be positive");
  if (!(damping > 0.0) || damping > 1.0) throw DomainError("LfmSpec: damping must lie in (0, 1]");
}

FactorizedPosterior lfm_prior(const LfmSpec& spec) {
  spec.validate();
  const std::size_t k = spec.features, d = spec.dim;
  NaturalParams features{Family::isotropic_mvn(d), Layout::PerRow, RowMatrix::Zero(k, d + 1)};
  features.rows.col(d).setConstant(-1.0 / (2.0 * spec.feature_prior_variance));
  NaturalParams weights{Family::beta(), Layout::PerRow, RowMatrix(k, 2)};
  weights.rows.col(0).setConstant(spec.beta_a - 1.0);
  weights.rows.col(1).setConstant(spec.beta_b - 1.0);
  FactorizedPosterior p;
  p.factors.emplace("features", std::move(features));
  p.factors.emplace("weights", std::move(weights));
  p.symmetry_groups = {{"features", "weights"}};
  return p;
}

RowMatrix lfm_feature_means(const FactorizedPosterior& posterior) {
  const RowMatrix& f = posterior.at("features").rows;
  const Eigen::Index d = f.cols() - 1;
  RowMatrix out(f.rows(), d);
  for (Eigen::Index k = 0; k < f.rows(); ++k) out.row(k) = f.row(k).head(d) * (-1.0 / (2.0 * f(k, d)));
  return out;
}

std::vector<double> lfm_weight_means(const FactorizedPosterior& posterior) {
  const RowMatrix& w = posterior.at("weights").rows;
  std::vector<double> out(w.rows());
  for (Eigen::Index k = 0; k < w.rows(); ++k) out[k] = (w(k, 0) + 1.0) / (w(k, 0) + w(k, 1) + 2.0);
  return out;
}

namespace {

struct LfmPrior {
  RowMatrix m0;             // K x D prior means
  std::vector<double> s02;  // prior variances
  std::vector<double> a0, b0;
};

LfmPrior read_lfm_prior(const FactorizedPosterior& prior, const LfmSpec& spec) {
  const RowMatrix& f = prior.at("features").rows;
  const RowMatrix& w = prior.at("weights").rows;
  const std::size_t k = spec.features, d = spec.dim;
  if (static_cast<std::size_t>(f.rows()) != k || static_cast<std::size_t>(f.cols()) != d + 1 ||
      static_cast<std::size_t>(w.rows()) != k)
    throw ShapeMismatch("LFM prior does not match spec");
  LfmPrior p;
  p.m0.resize(k, d);
  for (std::size_t c = 0; c < k; ++c) {
    const double s2 = -1.0 / (2.0 * f(c, d));
    p.s02.push_back(s2);
    p.m0.row(c) = f.row(c).head(d) * s2;
    p.a0.push_back(w(c, 0) + 1.0);
    p.b0.push_back(w(c, 1) + 1.0);
  }
  return p;
}

double log_beta_fn(double a, double b) { return log_gamma(a) + log_gamma(b) - log_gamma(a + b); }

class LfmFitter {
 public:
  LfmFitter(const RowMatrix& y, const LfmSpec& spec, LfmPrior prior)
      : y_(&y), spec_(&spec), prior_(std::move(prior)), n_(static_cast<std::size_t>(y.rows())),
        k_(spec.features), d_(spec.dim) {}

  void initialize(Rng& rng) {
    m_.resize(k_, d_);
    std::vector<std::size_t> order(n_);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (std::size_t c = 0; c < k_; ++c) {
      // Smoothed statistics of one random observation.
      const double w = 1.0 / (1.0 + spec_->noise_variance / prior_.s02[c]);
      m_.row(c) = w * y_->row(order[c % n_]) + (1.0 - w) * prior_.m0.row(c);
    }
    s2_.assign(k_, spec_->noise_variance);
    a_ = prior_.a0;
    b_ = prior_.b0;
    rho_ = RowMatrix::Zero(n_, k_);
    residual_ = *y_;
  }

  void step() {
    update_assignments();
    update_features();
    update_weights();
  }

  double sweep() {
    step();
    return elbo();
  }

  std::size_t components() const { return k_; }

  /// Expected number of observations using each feature.
  std::vector<double> usage() const {
    std::vector<double> out(k_);
    for (std::size_t c = 0; c < k_; ++c) out[c] = rho_.col(c).sum();
    return out;
  }

  /// Moves feature c onto the residual of the worst-explained observation,
  /// smoothed toward the prior like the initial seeds.
  void reseed(std::size_t c, std::size_t rank) {
    for (std::size_t n = 0; n < n_; ++n) {
      residual_.row(n) += rho_(n, c) * m_.row(c);
      rho_(n, c) = 0.0;
    }
    const Eigen::VectorXd norms = residual_.rowwise().squaredNorm();
    std::vector<std::size_t> idx(n_);
    std::iota(idx.begin(), idx.end(), 0);
    rank = std::min(rank, n_ - 1);
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(rank), idx.end(),
                     [&](std::size_t a, std::size_t b) { return norms[a] > norms[b] || (norms[a] == norms[b] && a < b); });
    const std::size_t worst = idx[rank];
    const double w = 1.0 / (1.0 + spec_->noise_variance / prior_.s02[c]);
    m_.row(c) = w * residual_.row(worst) + (1.0 - w) * prior_.m0.row(c);
    s2_[c] = spec_->noise_variance;
    a_[c] = prior_.a0[c];
    b_[c] = prior_.b0[c];
  }

  /// Replaces feature j by m_j + sign * m_k, keeping its assignments.
  void combine(std::size_t j, std::size_t k, double sign) {
    const Eigen::RowVectorXd delta = sign * m_.row(k);
    m_.row(j) += delta;
    for (std::size_t n = 0; n < n_; ++n) residual_.row(n) -= rho_(n, j) * delta;
  }

  FactorizedPosterior posterior(const FactorizedPosterior& prior) const {
    FactorizedPosterior out = prior;
    RowMatrix& f = out.at("features").rows;
    RowMatrix& w = out.at("weights").rows;
    for (std::size_t c = 0; c < k_; ++c) {
      f.row(c).head(d_) = m_.row(c) / s2_[c];
      f(c, d_) = -1.0 / (2.0 * s2_[c]);
      w(c, 0) = a_[c] - 1.0;
      w(c, 1) = b_[c] - 1.0;
    }
    return out;
  }

 private:
  // Sequential damped updates of the Bernoulli factors. The ELBO is concave
  // in each rho_nk, so a partial step toward the optimum never decreases it.
  void update_assignments() {
    const double var = spec_->noise_variance;
    std::vector<double> logit_prior(k_), second_moment(k_);
    for (std::size_t c = 0; c < k_; ++c) {
      logit_prior[c] = digamma(a_[c]) - digamma(b_[c]);
      second_moment[c] = m_.row(c).squaredNorm() + static_cast<double>(d_) * s2_[c];
    }
    for (std::size_t n = 0; n < n_; ++n) {
      auto r = residual_.row(n);
      for (std::size_t c = 0; c < k_; ++c) {
        const double old = rho_(n, c);
        r += old * m_.row(c);
        const double logit = logit_prior[c] + (m_.row(c).dot(r) - 0.5 * second_moment[c]) / var;
        const double target = 1.0 / (1.0 + std::exp(-logit));
        const double next = old + spec_->damping * (target - old);
        rho_(n, c) = next;
        r -= next * m_.row(c);
      }
    }
  }

  void update_features() {
    const double var = spec_->noise_variance;
    for (std::size_t c = 0; c < k_; ++c) {
      const Eigen::RowVectorXd old = m_.row(c);
      double count = 0.0;
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(d_);
      for (std::size_t n = 0; n < n_; ++n) {
        const double r = rho_(n, c);
        count += r;
        acc += r * (residual_.row(n) + r * old);
      }
      const double precision = 1.0 / prior_.s02[c] + count / var;
      s2_[c] = 1.0 / precision;
      m_.row(c) = s2_[c] * (prior_.m0.row(c) / prior_.s02[c] + acc / var);
      const Eigen::RowVectorXd delta = old - m_.row(c);
      for (std::size_t n = 0; n < n_; ++n) residual_.row(n) += rho_(n, c) * delta;
    }
  }

  void update_weights() {
    for (std::size_t c = 0; c < k_; ++c) {
      const double on = rho_.col(c).sum();
      a_[c] = prior_.a0[c] + on;
      b_[c] = prior_.b0[c] + static_cast<double>(n_) - on;
    }
  }

  double elbo() const {
    const double var = spec_->noise_variance;
    const double dd = static_cast<double>(d_);
    double total = -0.5 * dd * static_cast<double>(n_) * std::log(2.0 * std::numbers::pi * var);
    std::vector<double> norm2(k_), second_moment(k_), elog_pi(k_), elog_1m(k_);
    for (std::size_t c = 0; c < k_; ++c) {
      norm2[c] = m_.row(c).squaredNorm();
      second_moment[c] = norm2[c] + dd * s2_[c];
      const double psi_total = digamma(a_[c] + b_[c]);
      elog_pi[c] = digamma(a_[c]) - psi_total;
      elog_1m[c] = digamma(b_[c]) - psi_total;
    }
    for (std::size_t n = 0; n < n_; ++n) {
      double sq = residual_.row(n).squaredNorm();
      for (std::size_t c = 0; c < k_; ++c) {
        const double r = rho_(n, c);
        sq += r * second_moment[c] - r * r * norm2[c];
        total += r * elog_pi[c] + (1.0 - r) * elog_1m[c];
        if (r > 0.0) total -= r * std::log(r);
        if (r < 1.0) total -= (1.0 - r) * std::log1p(-r);
      }
      total -= sq / (2.0 * var);
    }
    for (std::size_t c = 0; c < k_; ++c) {
      total += -log_beta_fn(prior_.a0[c], prior_.b0[c]) + (prior_.a0[c] - 1.0) * elog_pi[c] +
               (prior_.b0[c] - 1.0) * elog_1m[c];
      total -= -log_beta_fn(a_[c], b_[c]) + (a_[c] - 1.0) * elog_pi[c] + (b_[c] - 1.0) * elog_1m[c];
      const double dist = (m_.row(c) - prior_.m0.row(c)).squaredNorm();
      total += -0.5 * dd * std::log(2.0 * std::numbers::pi * prior_.s02[c]) -
               (dist + dd * s2_[c]) / (2.0 * prior_.s02[c]);
      total += 0.5 * dd * std::log(2.0 * std::numbers::pi * std::numbers::e * s2_[c]);
    }
    return total;
  }

  const RowMatrix* y_;
  const LfmSpec* spec_;
  LfmPrior prior_;
  std::size_t n_, k_, d_;
  RowMatrix m_;
  std::vector<double> s2_, a_, b_;
  RowMatrix rho_;
  RowMatrix residual_;  // y_n - sum_k rho_nk m_k
};

constexpr std::size_t kMaxBirths = 4;
constexpr std::size_t kScreenSweeps = 5;
constexpr std::size_t kBirthSites = 5;

// Coordinate ascent cannot revive a feature nobody uses: its mean sits at
// the prior and carries no signal. At convergence each unused feature is
// re-seeded in turn; the proposal is kept only if, run to convergence, it
// raises the ELBO. Rejected proposals leave no trace, so the recorded ELBO
// sequence stays non-decreasing.
std::optional<std::pair<LfmFitter, double>> try_birth(const LfmFitter& fitter, double current) {
  std::vector<LfmFitter> candidates;
  const std::size_t k = fitter.components();
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t rank = 0; rank < kBirthSites; ++rank) {
      candidates.push_back(fitter);
      candidates.back().reseed(c, rank);
    }
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < k; ++i)
      for (double sign : {1.0, -1.0}) {
        if (i == j) continue;
        candidates.push_back(fitter);
        candidates.back().combine(j, i, sign);
      }
  std::optional<std::pair<LfmFitter, double>> best;
  for (auto& candidate : candidates) {
    for (std::size_t s = 0; s + 1 < kScreenSweeps; ++s) candidate.step();
    const double value = candidate.sweep();
    if (value > current && (!best || value > best->second)) best = std::pair{std::move(candidate), value};
  }
  return best;
}

}  // namespace

FitResult fit_lfm_vb(const RowMatrix& data, const LfmSpec& spec, const FactorizedPosterior& prior,
                     const FitOptions& options) {
  spec.validate();
  if (data.rows() == 0) throw EmptyData("fit_lfm_vb: no observations");
  if (static_cast<std::size_t>(data.cols()) != spec.dim) throw ShapeMismatch("fit_lfm_vb: data width != D");
  const LfmPrior p = read_lfm_prior(prior, spec);

  FitResult best;
  double best_elbo = -std::numeric_limits<double>::infinity();
  for (std::size_t restart = 0; restart < std::max<std::size_t>(1, options.restarts); ++restart) {
    Rng rng(derive_seed(options.seed, 0x6c666d, restart));
    LfmFitter fitter(data, spec, p);
    fitter.initialize(rng);
    FitResult result;
    std::size_t births = 0;
    for (std::size_t it = 0; it < options.max_iters; ++it) {
      const double value = fitter.sweep();
      result.elbo.push_back(value);
      result.iterations = it + 1;
      if (result.elbo.size() >= 2) {
        const double prev = result.elbo[result.elbo.size() - 2];
        if (std::abs(value - prev) <= options.tol * std::abs(value)) {
          if (births < kMaxBirths * spec.features) {
            if (auto reborn = try_birth(fitter, value)) {
              fitter = std::move(reborn->first);
              result.elbo.push_back(reborn->second);
              ++births;
              continue;
            }
          }
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

FitResult fit_lfm_vb(const RowMatrix& data, const LfmSpec& spec, const FitOptions& options) {
  return fit_lfm_vb(data, spec, lfm_prior(spec), options);
}

}  // namespace amps
