#pragma once

// Per-test size vectors under a weak FWER budget alpha, i.e. on the set
//   sum_m log(1 - eta_m) = log(1 - alpha).
//
// The optimal allocation maximizes the total power sum_m rho_m(eta_m). Its
// Lagrange conditions read g_m(eta_m) = rho_m'(eta_m) (1 - eta_m) = d for a
// common multiplier d. Under the Gaussian model, writing v_m = Phi^{-1}(1 - eta_m),
//   log Phi(v_m) + gamma_m v_m - log d - gamma_m^2 / 2 = 0,
// which is increasing in v_m. Everything below works with t = log d, and with
// log Phi(v_m) = log(1 - eta_m) directly, so sizes of order 1e-12 and below
// keep full precision.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "powermt/error.hpp"
#include "powermt/model.hpp"
#include "powermt/numerics.hpp"

namespace powermt {

enum class AllocationMethod { sidak, bonferroni, optimal, clustered };

inline const char* to_string(AllocationMethod m) {
  switch (m) {
    case AllocationMethod::sidak: return "sidak";
    case AllocationMethod::bonferroni: return "bonferroni";
    case AllocationMethod::optimal: return "optimal";
    case AllocationMethod::clustered: return "clustered";
  }
  return "?";
}

struct SizeAllocation {
  AllocationMethod method = AllocationMethod::optimal;
  double alpha = 0.0;
  std::vector<double> sizes;
  /// Common value d of rho_m'(eta_m)(1 - eta_m). Empty for the closed-form
  /// allocations and for alpha = 0.
  std::optional<double> lagrange;
  /// sum_m log(1 - eta_m) - log(1 - alpha)
  double constraint_residual = 0.0;
  /// max_m |g_m(eta_m) / d - 1| over sizes in [1e-300, 1); 0 for closed forms.
  double stationarity_residual = 0.0;
};

struct ClusterSpec {
  std::vector<double> cluster_gammas;
  std::vector<std::size_t> cluster_counts;

  std::size_t total() const {
    return std::accumulate(cluster_counts.begin(), cluster_counts.end(), std::size_t{0});
  }

  void validate() const {
    if (cluster_gammas.empty()) throw ValidationError("ClusterSpec: need at least one cluster");
    if (cluster_gammas.size() != cluster_counts.size())
      throw ValidationError("ClusterSpec: gammas and counts differ in length");
    for (double g : cluster_gammas)
      if (!(std::isfinite(g) && g >= 0.0)) throw ValidationError("ClusterSpec: gamma must be finite and >= 0");
    for (auto c : cluster_counts)
      if (c == 0) throw ValidationError("ClusterSpec: cluster counts must be positive");
  }
};

/// Common size per cluster, plus the residuals of the weighted system.
struct ClusteredAllocation {
  SizeAllocation per_cluster;  ///< sizes has one entry per cluster
  std::vector<std::size_t> counts;

  /// One size per hypothesis, clusters laid out consecutively.
  std::vector<double> expand() const {
    std::vector<double> out;
    for (std::size_t k = 0; k < counts.size(); ++k) out.insert(out.end(), counts[k], per_cluster.sizes[k]);
    return out;
  }
};

struct SizeConditionReport {
  bool satisfied = true;
  double worst_alpha = 0.0;
  /// max over the grid of (M - 1) max_m eta_m(alpha) / sum_m eta_m(alpha)
  double worst_ratio = 0.0;
};

namespace detail {

inline void require_budget(double alpha, const char* who) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ValidationError(std::string(who) + ": alpha must lie in [0, 1)");
}

inline double constraint_residual(std::span<const double> sizes, std::span<const double> weights,
                                  double alpha) {
  double total = 0.0;
  for (std::size_t k = 0; k < sizes.size(); ++k)
    total += (weights.empty() ? 1.0 : weights[k]) * std::log1p(-sizes[k]);
  return total - std::log1p(-alpha);
}

/// One hypothesis' response to the log-multiplier t.
struct InnerSolution {
  double v = 0.0;              ///< Phi^{-1}(1 - eta)
  double eta = 0.0;            ///< size
  double log_complement = 0.0; ///< log(1 - eta) = log Phi(v)
  double dlog_dt = 0.0;        ///< derivative of log_complement in t
};

inline constexpr double kSizeFloor = 1e-300;
inline constexpr double kInnerHi = 40.0;
inline constexpr double kInnerLo = -40.0;

inline RootOptions inner_options() {
  RootOptions o;
  o.f_tol = 1e-13;
  o.x_tol = 1e-15;
  o.max_iter = 200;
  return o;
}

/// Solve log Phi(v) + gamma v - t - gamma^2/2 = 0 for v.
inline InnerSolution solve_inner(double gamma, double t) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (t == inf) return {inf, 0.0, 0.0, 0.0};
  if (t == -inf) return {-inf, 1.0, -inf, 0.0};

  if (gamma == 0.0) {
    // g(eta) = 1 - eta, so eta = 1 - d on d < 1 and 0 otherwise.
    if (t >= 0.0) return {inf, 0.0, 0.0, 0.0};
    const double eta = -std::expm1(t);
    return {-norm_quantile(eta), eta, t, 1.0};
  }

  const double shift = t + 0.5 * gamma * gamma;
  const auto fdf = [&](double v) {
    const double lc = log_norm_cdf(v);
    return std::pair<double, double>{lc + gamma * v - shift, inverse_mills(v) + gamma};
  };

  const double f_hi = fdf(kInnerHi).first;
  if (f_hi <= 0.0) {
    // Root beyond the upper end: the size underflows to zero.
    return {kInnerHi, norm_cdf(-kInnerHi), log_norm_cdf(kInnerHi), 0.0};
  }
  double lo = kInnerLo;
  double f_lo = fdf(lo).first;
  while (f_lo > 0.0) {
    lo *= 2.0;
    if (lo < -1e8) throw NumericalError("solve_inner: lower bracket expansion failed");
    f_lo = fdf(lo).first;
  }
  const double guess = std::clamp(shift / gamma, lo, kInnerHi);
  const auto r = find_root_newton(fdf, Bracket{lo, kInnerHi, f_lo, f_hi}, inner_options(), guess);
  const double v = r.root;
  const double mills = inverse_mills(v);
  return {v, norm_cdf(-v), log_norm_cdf(v), mills / (mills + gamma)};
}

/// log g(eta) = log(rho'(eta)(1 - eta)); the log-multiplier at which a
/// hypothesis with effect size gamma is assigned size eta.
inline double log_multiplier_for_size(double gamma, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw ValidationError("log_multiplier_for_size: size must lie in [0, 1]");
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (eta == 0.0) return inf;
  if (eta == 1.0) return -inf;
  const double z = -norm_quantile(eta);
  return gamma * z - 0.5 * gamma * gamma + std::log1p(-eta);
}

struct LagrangeSolution {
  double log_multiplier = 0.0;
  std::vector<InnerSolution> inner;
};

/// Weighted outer solve: find t with sum_k w_k log(1 - eta_k(t)) = log(1 - alpha).
inline LagrangeSolution solve_lagrange(std::span<const double> gammas, std::span<const double> weights,
                                       double alpha) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  for (double g : gammas)
    if (!(std::isfinite(g) && g >= 0.0)) throw ValidationError("optimal_sizes: gamma must be finite and >= 0");

  LagrangeSolution sol;
  sol.inner.resize(gammas.size());
  if (alpha == 0.0) {
    sol.log_multiplier = inf;
    for (auto& s : sol.inner) s = solve_inner(0.0, inf);
    return sol;
  }

  const double target = std::log1p(-alpha);
  const auto weight = [&](std::size_t k) { return weights.empty() ? 1.0 : weights[k]; };
  const auto fdf = [&](double t) {
    double h = -target;
    double dh = 0.0;
    for (std::size_t k = 0; k < gammas.size(); ++k) {
      sol.inner[k] = solve_inner(gammas[k], t);
      h += weight(k) * sol.inner[k].log_complement;
      dh += weight(k) * sol.inner[k].dlog_dt;
    }
    return std::pair<double, double>{h, dh};
  };

  // The outer function is nondecreasing in t: larger d means smaller sizes.
  const double step = std::log(4.0);
  double t0 = 0.0;
  double h0 = fdf(t0).first;
  double t1 = t0;
  double h1 = h0;
  for (int i = 0; (h0 < 0.0) == (h1 < 0.0) && h1 != 0.0; ++i) {
    if (i > 1000) throw BracketError("optimal_sizes: could not bracket the Lagrange multiplier", t0, t1, h0, h1);
    t0 = t1;
    h0 = h1;
    t1 = h0 < 0.0 ? t0 + step : t0 - step;
    h1 = fdf(t1).first;
  }
  if (h1 == 0.0) {
    fdf(t1);
    sol.log_multiplier = t1;
    return sol;
  }
  Bracket b = t0 < t1 ? Bracket{t0, t1, h0, h1} : Bracket{t1, t0, h1, h0};
  RootOptions opt;
  opt.f_tol = 1e-13;
  opt.x_tol = 1e-15;
  const auto r = find_root_newton(fdf, b, opt);
  fdf(r.root);  // leave `inner` at the accepted iterate
  sol.log_multiplier = r.root;
  return sol;
}

inline double stationarity_residual(std::span<const double> gammas, std::span<const double> sizes,
                                    double log_multiplier) {
  if (!std::isfinite(log_multiplier)) return 0.0;
  double worst = 0.0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    // Boundary sizes satisfy the inequality form of the conditions only.
    // Sizes under kSizeFloor count as boundary: near the subnormal range a
    // stored size keeps too few digits to be differentiated back.
    if (!(sizes[k] >= kSizeFloor && sizes[k] < 1.0)) continue;
    const double dev = std::fabs(std::expm1(log_multiplier_for_size(gammas[k], sizes[k]) - log_multiplier));
    worst = std::max(worst, dev);
  }
  return worst;
}

inline SizeAllocation finish_allocation(AllocationMethod method, std::span<const double> gammas,
                                        std::span<const double> weights, double alpha,
                                        const LagrangeSolution& sol) {
  SizeAllocation out;
  out.method = method;
  out.alpha = alpha;
  out.sizes.reserve(sol.inner.size());
  for (const auto& s : sol.inner) out.sizes.push_back(s.eta);
  if (std::isfinite(sol.log_multiplier)) out.lagrange = std::exp(sol.log_multiplier);
  out.constraint_residual = constraint_residual(out.sizes, weights, alpha);
  out.stationarity_residual = stationarity_residual(gammas, out.sizes, sol.log_multiplier);
  return out;
}

}  // namespace detail

/// Equal sizes 1 - (1 - alpha)^{1/M}.
inline SizeAllocation sidak_sizes(std::size_t M, double alpha) {
  if (M == 0) throw ValidationError("sidak_sizes: M must be >= 1");
  detail::require_budget(alpha, "sidak_sizes");
  SizeAllocation out;
  out.method = AllocationMethod::sidak;
  out.alpha = alpha;
  out.sizes.assign(M, -std::expm1(std::log1p(-alpha) / static_cast<double>(M)));
  out.constraint_residual = detail::constraint_residual(out.sizes, {}, alpha);
  return out;
}

/// Equal sizes alpha / M (conservative: residual >= 0).
inline SizeAllocation bonferroni_sizes(std::size_t M, double alpha) {
  if (M == 0) throw ValidationError("bonferroni_sizes: M must be >= 1");
  detail::require_budget(alpha, "bonferroni_sizes");
  SizeAllocation out;
  out.method = AllocationMethod::bonferroni;
  out.alpha = alpha;
  out.sizes.assign(M, alpha / static_cast<double>(M));
  out.constraint_residual = detail::constraint_residual(out.sizes, {}, alpha);
  return out;
}

/// Power-maximizing sizes on the weak FWER boundary.
inline SizeAllocation optimal_sizes(const RocModel& model, double alpha) {
  detail::require_budget(alpha, "optimal_sizes");
  const auto gammas = model.gammas();
  const auto sol = detail::solve_lagrange(gammas, {}, alpha);
  return detail::finish_allocation(AllocationMethod::optimal, gammas, {}, alpha, sol);
}

/// Optimal sizes when hypotheses come in clusters sharing one ROC function:
/// sum_k |cluster_k| log(1 - zeta_k) = log(1 - alpha).
inline ClusteredAllocation optimal_sizes_clustered(const ClusterSpec& spec, double alpha) {
  spec.validate();
  detail::require_budget(alpha, "optimal_sizes_clustered");
  std::vector<double> weights(spec.cluster_counts.begin(), spec.cluster_counts.end());
  const auto sol = detail::solve_lagrange(spec.cluster_gammas, weights, alpha);
  return {detail::finish_allocation(AllocationMethod::clustered, spec.cluster_gammas, weights, alpha, sol),
          spec.cluster_counts};
}

/// The map alpha -> eta(alpha) for one model, memoizing solves by exact alpha.
/// Safe for concurrent use.
class SizeMap {
public:
  explicit SizeMap(RocModel model) : model_(std::move(model)) {}

  const RocModel& model() const noexcept { return model_; }

  SizeAllocation allocation(double alpha) const {
    detail::require_budget(alpha, "size_map");
    {
      std::lock_guard lock(mutex_);
      if (auto it = cache_.find(alpha); it != cache_.end()) return it->second;
    }
    auto alloc = optimal_sizes(model_, alpha);
    std::lock_guard lock(mutex_);
    return cache_.emplace(alpha, std::move(alloc)).first->second;
  }

  double size(double alpha, std::size_t m) const {
    check_index(m);
    return allocation(alpha).sizes[m];
  }

  /// Budget W with eta_m(W) = s, by bisection on alpha over [0, 1 - 1e-12].
  double inverse(std::size_t m, double s) const {
    check_index(m);
    if (!(s >= 0.0 && s < 1.0)) throw ValidationError("size_map_inverse: s must lie in [0, 1)");
    if (s == 0.0) return 0.0;
    double lo = 0.0;
    double hi = kAlphaCap;
    const double top = size(hi, m);
    if (top < s)
      throw SaturationError("size_map_inverse: size " + std::to_string(s) + " exceeds attainable " +
                                std::to_string(top),
                            top);
    if (top == s) return hi;
    for (int i = 0; i < 200; ++i) {
      const double mid = lo + 0.5 * (hi - lo);
      if (mid <= lo || mid >= hi) break;
      const double eta = size(mid, m);
      if (std::fabs(eta - s) <= 1e-13) return mid;
      (eta < s ? lo : hi) = mid;
    }
    return lo + 0.5 * (hi - lo);
  }

  std::size_t cached() const {
    std::lock_guard lock(mutex_);
    return cache_.size();
  }

  static constexpr double kAlphaCap = 1.0 - 1e-12;

private:
  void check_index(std::size_t m) const {
    if (m >= model_.size()) throw ValidationError("size_map: hypothesis index out of range");
  }

  RocModel model_;
  mutable std::mutex mutex_;
  mutable std::map<double, SizeAllocation> cache_;
};

/// eta_m(alpha) for the optimal allocation.
inline double size_map(const RocModel& model, double alpha, std::size_t m) {
  return SizeMap(model).size(alpha, m);
}

inline double size_map_inverse(const RocModel& model, std::size_t m, double s) {
  return SizeMap(model).inverse(m, s);
}

/// Checks (M - 1) max_m eta_m(alpha) <= sum_m eta_m(alpha) over the grid, the
/// worst case over proper subsets of true nulls of the FDR size condition.
inline SizeConditionReport check_size_condition(const RocModel& model, std::span<const double> alpha_grid) {
  if (alpha_grid.empty()) throw ValidationError("check_size_condition: empty alpha grid");
  SizeConditionReport report;
  report.worst_ratio = -1.0;
  const double M = static_cast<double>(model.size());
  for (double alpha : alpha_grid) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("check_size_condition: grid must lie in (0, 1)");
    const auto alloc = optimal_sizes(model, alpha);
    const double total = std::accumulate(alloc.sizes.begin(), alloc.sizes.end(), 0.0);
    const double biggest = *std::max_element(alloc.sizes.begin(), alloc.sizes.end());
    const double ratio = total > 0.0 ? (M - 1.0) * biggest / total : 0.0;
    if (ratio > report.worst_ratio) {
      report.worst_ratio = ratio;
      report.worst_alpha = alpha;
    }
  }
  report.satisfied = report.worst_ratio <= 1.0;
  return report;
}

/// The grid used when a size-condition report is attached to an FDR decision.
inline std::vector<double> default_condition_grid() {
  return {0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9};
}

}  // namespace powermt
