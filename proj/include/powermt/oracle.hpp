#pragma once

// Brute-force checks that share no code path with the allocator's solver.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "powermt/error.hpp"
#include "powermt/model.hpp"

namespace powermt {

struct GridSearchResult {
  std::vector<double> best_sizes;
  double best_objective = 0.0;  ///< sum_m rho_m(eta_m)
  double grid_step = 0.0;
};

/// Exhaustive search of the FWER boundary for M in {2, 3}. The free
/// coordinates y_m = -log(1 - eta_m) run over a uniform grid of width `step`
/// and the last one takes up the remaining budget -log(1 - alpha), so every
/// candidate lies exactly on the boundary. Ties keep the lexicographically
/// first candidate.
inline GridSearchResult grid_optimal_sizes(const RocModel& model, double alpha, double step) {
  const std::size_t M = model.size();
  if (M < 2 || M > 3) throw ValidationError("grid_optimal_sizes: only M = 2 or 3 is supported");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("grid_optimal_sizes: alpha must lie in (0, 1)");
  if (!(step > 0.0 && step <= 0.01)) throw ValidationError("grid_optimal_sizes: step must lie in (0, 0.01]");

  const double budget = -std::log1p(-alpha);
  const auto n = static_cast<std::size_t>(std::floor(budget / step));
  const auto size_of = [](double y) { return -std::expm1(-y); };

  GridSearchResult best;
  best.grid_step = step;
  best.best_objective = -1.0;
  std::vector<double> eta(M);
  const auto consider = [&]() {
    double obj = 0.0;
    for (std::size_t m = 0; m < M; ++m) obj += roc(model[m], eta[m]);
    if (obj > best.best_objective) {
      best.best_objective = obj;
      best.best_sizes = eta;
    }
  };

  for (std::size_t i = 0; i <= n; ++i) {
    const double y1 = static_cast<double>(i) * step;
    eta[0] = size_of(y1);
    if (M == 2) {
      eta[1] = size_of(std::max(0.0, budget - y1));
      consider();
      continue;
    }
    for (std::size_t j = 0; i + j <= n; ++j) {
      const double y2 = static_cast<double>(j) * step;
      eta[1] = size_of(y2);
      eta[2] = size_of(std::max(0.0, budget - y1 - y2));
      consider();
    }
  }
  return best;
}

/// Exact P{sum_m V_m >= a sum_m eta_m} for independent V_m ~ Bernoulli(eta_m),
/// summed over all 2^M outcomes.
inline double bernoulli_tail_enumerate(std::span<const double> etas, double a) {
  const std::size_t M = etas.size();
  if (M > 20) throw ValidationError("bernoulli_tail_enumerate: M must be <= 20");
  for (double e : etas)
    if (!(e >= 0.0 && e <= 1.0)) throw ValidationError("bernoulli_tail_enumerate: sizes must lie in [0, 1]");
  if (!(a >= 0.0)) throw ValidationError("bernoulli_tail_enumerate: a must be >= 0");

  double total_eta = 0.0;
  for (double e : etas) total_eta += e;
  const double cut = a * total_eta;

  double prob = 0.0;
  const std::uint32_t outcomes = std::uint32_t{1} << M;
  for (std::uint32_t mask = 0; mask < outcomes; ++mask) {
    const int successes = std::popcount(mask);
    if (static_cast<double>(successes) < cut) continue;
    double p = 1.0;
    for (std::size_t m = 0; m < M; ++m) p *= (mask >> m) & 1u ? etas[m] : 1.0 - etas[m];
    prob += p;
  }
  return prob;
}

struct ConcavityReport {
  bool passed = true;
  double worst_violation = 0.0;  ///< largest amount by which any check failed
  std::string failed_check;      ///< first property that failed, empty if none
};

/// Checks rho(eta) >= eta, monotonicity, and midpoint concavity on the grid
/// eta_i = i / (n - 1), all to within 1e-12.
inline ConcavityReport concavity_check(const std::function<double(double)>& rho, std::size_t grid) {
  if (grid < 3) throw ValidationError("concavity_check: grid must have at least 3 points");
  constexpr double tol = 1e-12;
  ConcavityReport rep;
  const auto note = [&](double violation, const char* what) {
    if (violation > tol) {
      if (rep.passed) rep.failed_check = what;
      rep.passed = false;
      rep.worst_violation = std::max(rep.worst_violation, violation);
    }
  };

  std::vector<double> eta(grid), val(grid);
  for (std::size_t i = 0; i < grid; ++i) {
    eta[i] = static_cast<double>(i) / static_cast<double>(grid - 1);
    val[i] = rho(eta[i]);
    note(eta[i] - val[i], "dominates-diagonal");
    if (i > 0) note(val[i - 1] - val[i], "nondecreasing");
  }
  for (std::size_t i = 0; i < grid; ++i)
    for (std::size_t j = i + 2; j < grid; ++j)
      note(0.5 * (val[i] + val[j]) - rho(0.5 * (eta[i] + eta[j])), "midpoint-concave");
  return rep;
}

}  // namespace powermt
