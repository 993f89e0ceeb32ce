#pragma once

// Most-powerful decision processes for the Gaussian shift model and the
// randomized p-value statistic they induce.

#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "powermt/error.hpp"
#include "powermt/numerics.hpp"

namespace powermt {

/// Simple null N(mu0, sigma0^2) against a simple alternative shifted by
/// gamma * sigma0.
struct GaussianHypothesis {
  double mu0 = 0.0;
  double sigma0 = 1.0;
  double gamma = 0.0;  ///< effect size (mu1 - mu0) / sigma0

  void validate() const {
    if (!std::isfinite(mu0)) throw ValidationError("hypothesis: mu0 must be finite");
    if (!(std::isfinite(sigma0) && sigma0 > 0.0)) throw ValidationError("hypothesis: sigma0 must be positive");
    if (!(std::isfinite(gamma) && gamma >= 0.0))
      throw ValidationError("hypothesis: gamma must be finite and nonnegative");
  }
};

/// The M hypotheses of a multiple testing problem.
class RocModel {
public:
  explicit RocModel(std::vector<GaussianHypothesis> hypotheses) : hypotheses_(std::move(hypotheses)) {
    if (hypotheses_.empty()) throw ValidationError("RocModel: need at least one hypothesis");
    for (const auto& h : hypotheses_) h.validate();
  }

  /// Standardized hypotheses (mu0 = 0, sigma0 = 1) with the given effect sizes.
  static RocModel from_gammas(std::span<const double> gammas) {
    std::vector<GaussianHypothesis> hs;
    hs.reserve(gammas.size());
    for (double g : gammas) hs.push_back({0.0, 1.0, g});
    return RocModel(std::move(hs));
  }

  std::size_t size() const noexcept { return hypotheses_.size(); }
  const GaussianHypothesis& operator[](std::size_t m) const { return hypotheses_[m]; }
  const std::vector<GaussianHypothesis>& hypotheses() const noexcept { return hypotheses_; }

  std::vector<double> gammas() const {
    std::vector<double> g;
    g.reserve(hypotheses_.size());
    for (const auto& h : hypotheses_) g.push_back(h.gamma);
    return g;
  }

  /// All ROC functions identical.
  bool exchangeable() const {
    for (const auto& h : hypotheses_)
      if (h.gamma != hypotheses_.front().gamma) return false;
    return true;
  }

private:
  std::vector<GaussianHypothesis> hypotheses_;
};

/// Observed statistic together with its auxiliary U(0,1) randomizer.
struct RandomizedSample {
  double x = 0.0;
  double u = 0.0;
};

namespace detail {
inline void require_size(double eta, const char* who) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw ValidationError(std::string(who) + ": size must lie in [0, 1]");
}
}  // namespace detail

/// Size-eta most powerful test: reject iff x >= mu0 + sigma0 * Phi^{-1}(1 - eta).
inline bool mp_test(const GaussianHypothesis& h, double x, double eta) {
  detail::require_size(eta, "mp_test");
  if (eta == 0.0) return false;
  if (eta == 1.0) return true;
  return x >= h.mu0 - h.sigma0 * norm_quantile(eta);
}

/// Power of the size-eta MP test, Phi(gamma - Phi^{-1}(1 - eta)).
inline double roc(double gamma, double eta) {
  detail::require_size(eta, "roc");
  if (eta == 0.0) return 0.0;
  if (eta == 1.0) return 1.0;
  return norm_cdf(gamma + norm_quantile(eta));
}

inline double roc(const GaussianHypothesis& h, double eta) { return roc(h.gamma, eta); }

/// Type II error 1 - rho(eta), accurate where the power is close to one.
inline double roc_complement(double gamma, double eta) {
  detail::require_size(eta, "roc_complement");
  if (eta == 0.0) return 1.0;
  if (eta == 1.0) return 0.0;
  return norm_cdf(-gamma - norm_quantile(eta));
}

/// Slope of the ROC function on (0, 1): exp(gamma z - gamma^2/2) with
/// z = Phi^{-1}(1 - eta). Never formed as a ratio of densities.
inline double roc_deriv(double gamma, double eta) {
  if (!(eta > 0.0 && eta < 1.0)) throw ValidationError("roc_deriv: size must lie in (0, 1)");
  const double z = -norm_quantile(eta);
  return std::exp(gamma * z - 0.5 * gamma * gamma);
}

inline double roc_deriv(const GaussianHypothesis& h, double eta) { return roc_deriv(h.gamma, eta); }

// ---------------------------------------------------------------------------
// Decision processes

/// A family of test functions indexed by size. `test(x, eta)` is the
/// rejection probability, nondecreasing and right-continuous in eta.
template <class P>
concept DecisionProcess = requires(const P& p, double x, double eta) {
  { p.test(x, eta) } -> std::convertible_to<double>;
  { p.size(eta) } -> std::convertible_to<double>;
  { p.roc(eta) } -> std::convertible_to<double>;
};

/// The nonrandomized Gaussian MP process.
struct GaussianProcess {
  GaussianHypothesis hypothesis;

  double test(double x, double eta) const { return mp_test(hypothesis, x, eta) ? 1.0 : 0.0; }
  double size(double eta) const {
    detail::require_size(eta, "size");
    return eta;
  }
  double roc(double eta) const { return powermt::roc(hypothesis, eta); }
};

/// S = inf{eta : u <= delta_eta(x)}, located by bisection on eta.
template <DecisionProcess P>
double randomized_pvalue(const P& process, const RandomizedSample& sample) {
  if (!(sample.u >= 0.0 && sample.u <= 1.0)) throw ValidationError("randomized_pvalue: u must lie in [0, 1]");
  const auto rejects = [&](double eta) { return sample.u <= process.test(sample.x, eta); };
  if (rejects(0.0)) return 0.0;
  double lo = 0.0;
  double hi = 1.0;
  for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
    const double mid = lo + 0.5 * (hi - lo);
    if (mid <= lo || mid >= hi) break;
    (rejects(mid) ? hi : lo) = mid;
  }
  return hi;
}

/// Closed form for the Gaussian process: the upper-tail probability, free of u.
inline double randomized_pvalue(const GaussianProcess& process, const RandomizedSample& sample) {
  if (!(sample.u >= 0.0 && sample.u <= 1.0)) throw ValidationError("randomized_pvalue: u must lie in [0, 1]");
  const auto& h = process.hypothesis;
  return norm_cdf(-(sample.x - h.mu0) / h.sigma0);
}

}  // namespace powermt
