#pragma once

// Multiple decision procedures built on the optimal weak-FWER size map, and
// the classical baselines they reduce to in the exchangeable case.
//
// Generalized p-values. For hypothesis m with ordinary p-value s_m, W_m is the
// smallest budget alpha whose optimal allocation gives eta_m(alpha) >= s_m.
// Since every size is a decreasing function of the common log-multiplier t,
// W_m is found without search: t_m = log g_m(s_m) is the multiplier at which
// hypothesis m receives size s_m, and W_m = 1 - prod_j (1 - eta_j(t_m)).
// Ordering hypotheses by decreasing t_m is ordering them by increasing W_m.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "powermt/allocator.hpp"
#include "powermt/error.hpp"
#include "powermt/model.hpp"

namespace powermt {

enum class Procedure { weak_fwer_opt, strong_fwer_opt, fdr_opt, bh, stepdown_sidak, bonferroni };

inline constexpr Procedure kAllProcedures[] = {Procedure::weak_fwer_opt, Procedure::strong_fwer_opt,
                                               Procedure::fdr_opt,       Procedure::bh,
                                               Procedure::stepdown_sidak, Procedure::bonferroni};

inline const char* to_string(Procedure p) {
  switch (p) {
    case Procedure::weak_fwer_opt: return "weak-fwer-opt";
    case Procedure::strong_fwer_opt: return "strong-fwer-opt";
    case Procedure::fdr_opt: return "fdr-opt";
    case Procedure::bh: return "bh";
    case Procedure::stepdown_sidak: return "stepdown-sidak";
    case Procedure::bonferroni: return "bonferroni";
  }
  return "?";
}

inline std::optional<Procedure> parse_procedure(std::string_view name) {
  for (auto p : kAllProcedures)
    if (name == to_string(p)) return p;
  return std::nullopt;
}

/// Procedures that need effect sizes.
inline bool uses_model(Procedure p) {
  return p == Procedure::weak_fwer_opt || p == Procedure::strong_fwer_opt || p == Procedure::fdr_opt;
}

/// Stepwise procedures reject a prefix of the ordered p-values.
inline bool is_stepwise(Procedure p) {
  return p == Procedure::strong_fwer_opt || p == Procedure::fdr_opt || p == Procedure::bh ||
         p == Procedure::stepdown_sidak;
}

/// Unknown truth theta_m = 1 iff the alternative holds. Only used to score
/// decisions, never to make them.
struct TruthAssignment {
  std::vector<std::uint8_t> theta;

  std::size_t size() const noexcept { return theta.size(); }
  std::size_t alternatives() const {
    return static_cast<std::size_t>(std::count(theta.begin(), theta.end(), std::uint8_t{1}));
  }
  std::size_t nulls() const { return size() - alternatives(); }
};

struct PValuePanel {
  std::vector<double> s;                 ///< ordinary p-values
  std::vector<double> u;                 ///< randomizers (empty when unused)
  std::vector<double> w;                 ///< generalized p-values
  std::vector<double> log_multipliers;   ///< t_m = log g_m(s_m)
  std::vector<std::size_t> antiranks;    ///< 0-based; w[antiranks[i]] nondecreasing in i
  /// Indexed by rank i (0-based):
  ///   log prod_{r >= i} (1 - eta_{antiranks[r]}(W_(i)))   (step-down statistic)
  std::vector<double> stepdown_log_product;
  ///   sum_j eta_j(W_(i))                                   (step-up statistic)
  std::vector<double> size_sum;

  std::size_t size() const noexcept { return s.size(); }
};

struct TraceStep {
  std::size_t rank = 0;       ///< 1-based position in the ordering
  std::size_t index = 0;      ///< 0-based hypothesis index
  double ordered_value = 0.0; ///< W_(i), or S_(i) for the p-value baselines
  double statistic = 0.0;     ///< compared against `threshold`
  double threshold = 0.0;
  bool passed = false;
};

/// Per-step record of a decision. For strong-fwer-opt the statistic is the
/// product prod_{m >= i}(1 - eta_(m)(W_(i))) against 1 - q*; for fdr-opt it
/// is sum_j eta_j(W_(i)) against q* i; the baselines compare S_(i) with their
/// step thresholds.
struct ProcedureTrace {
  std::vector<TraceStep> steps;
};

struct Decision {
  Procedure procedure = Procedure::bh;
  std::vector<std::uint8_t> reject;
  /// Number of ordered hypotheses rejected (J). For single-step procedures
  /// this is just the rejection count.
  std::size_t cutoff_index = 0;
  /// Realized threshold: W_(J) or S_(J) for stepwise rules (0 when J = 0);
  /// any value in [W_(J), W_(J+1)) yields the same decision.
  double alpha_threshold = 0.0;
  ProcedureTrace trace;
  std::optional<SizeConditionReport> size_condition;

  std::size_t rejections() const {
    return static_cast<std::size_t>(std::count(reject.begin(), reject.end(), std::uint8_t{1}));
  }
};

namespace detail {

// The optimal procedures compare solver outputs (accurate to ~1e-13) against
// budgets; values this close to a boundary are treated as on it.
inline constexpr double kBoundarySlack = 1e-10;

inline void require_pvalues(std::span<const double> s) {
  if (s.empty()) throw ValidationError("need at least one p-value");
  for (double v : s)
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("p-values must lie in [0, 1]");
}

inline void require_level(double q, const char* who) {
  if (!(q >= 0.0 && q <= 1.0)) throw ValidationError(std::string(who) + ": level must lie in [0, 1]");
}

inline std::vector<std::size_t> ascending_order(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  return order;
}

inline Decision prefix_decision(Procedure proc, std::span<const std::size_t> order, std::size_t cutoff,
                                double threshold, ProcedureTrace trace) {
  Decision d;
  d.procedure = proc;
  d.reject.assign(order.size(), 0);
  for (std::size_t i = 0; i < cutoff; ++i) d.reject[order[i]] = 1;
  d.cutoff_index = cutoff;
  d.alpha_threshold = threshold;
  d.trace = std::move(trace);
  return d;
}

}  // namespace detail

/// Generalized p-values W, their anti-ranks, and the stepwise statistics at
/// each W_(i). Ties are broken by ascending index. Cost is O(M^2) inner solves.
inline PValuePanel generalized_pvalues(const RocModel& model, std::span<const double> s) {
  detail::require_pvalues(s);
  if (s.size() != model.size()) throw ValidationError("generalized_pvalues: p-value count differs from model size");
  const std::size_t M = s.size();
  const auto gammas = model.gammas();

  PValuePanel panel;
  panel.s.assign(s.begin(), s.end());
  panel.log_multipliers.resize(M);
  for (std::size_t m = 0; m < M; ++m) panel.log_multipliers[m] = detail::log_multiplier_for_size(gammas[m], s[m]);

  auto& order = panel.antiranks;
  order.resize(M);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto& t = panel.log_multipliers;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return t[a] > t[b]; });

  panel.w.assign(M, 0.0);
  panel.stepdown_log_product.assign(M, 0.0);
  panel.size_sum.assign(M, 0.0);
  std::vector<double> log_complement(M);
  double running_max = 0.0;
  for (std::size_t i = 0; i < M; ++i) {
    const double ti = t[order[i]];
    if (i == 0 || ti != t[order[i - 1]]) {
      double total = 0.0;
      double sizes = 0.0;
      for (std::size_t j = 0; j < M; ++j) {
        const auto sol = detail::solve_inner(gammas[j], ti);
        log_complement[j] = sol.log_complement;
        total += sol.log_complement;
        sizes += sol.eta;
      }
      // Rounding can nudge W below its predecessor; W is monotone in rank.
      running_max = std::max(running_max, -std::expm1(total));
      panel.size_sum[i] = sizes;
    } else {
      panel.size_sum[i] = panel.size_sum[i - 1];
    }
    panel.w[order[i]] = running_max;
    double tail = 0.0;
    for (std::size_t r = i; r < M; ++r) tail += log_complement[order[r]];
    panel.stepdown_log_product[i] = tail;
  }
  return panel;
}

/// Single-step optimal weak-FWER rule: reject m iff s_m <= eta_m(alpha).
inline Decision decide_weak_fwer(const RocModel& model, std::span<const double> s, double alpha) {
  detail::require_pvalues(s);
  if (s.size() != model.size()) throw ValidationError("decide_weak_fwer: p-value count differs from model size");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ValidationError("decide_weak_fwer: alpha must lie in [0, 1)");
  const auto alloc = optimal_sizes(model, alpha);
  Decision d;
  d.procedure = Procedure::weak_fwer_opt;
  d.reject.assign(s.size(), 0);
  const auto order = detail::ascending_order(s);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::size_t m = order[i];
    const bool hit = alpha > 0.0 && s[m] <= alloc.sizes[m];
    d.reject[m] = hit ? 1 : 0;
    d.trace.steps.push_back({i + 1, m, s[m], s[m], alloc.sizes[m], hit});
  }
  d.cutoff_index = d.rejections();
  d.alpha_threshold = alpha;
  return d;
}

/// Step-down strong-FWER rule:
///   J = max{j : prod_{m >= i}(1 - eta_(m)(W_(i))) >= 1 - q* for all i <= j}.
inline Decision decide_strong_fwer(const PValuePanel& panel, double qstar) {
  detail::require_level(qstar, "decide_strong_fwer");
  const std::size_t M = panel.size();
  const double bound = std::log1p(-qstar) * (1.0 + detail::kBoundarySlack);
  ProcedureTrace trace;
  std::size_t cutoff = 0;
  bool open = qstar > 0.0;
  for (std::size_t i = 0; i < M; ++i) {
    const std::size_t m = panel.antiranks[i];
    const bool pass = open && panel.stepdown_log_product[i] >= bound;
    if (pass) cutoff = i + 1;
    else open = false;
    trace.steps.push_back({i + 1, m, panel.w[m], std::exp(panel.stepdown_log_product[i]), 1.0 - qstar, pass});
  }
  const double threshold = cutoff == 0 ? 0.0 : panel.w[panel.antiranks[cutoff - 1]];
  return detail::prefix_decision(Procedure::strong_fwer_opt, panel.antiranks, cutoff, threshold, std::move(trace));
}

inline Decision decide_strong_fwer(const RocModel& model, std::span<const double> s, double qstar) {
  detail::require_level(qstar, "decide_strong_fwer");
  return decide_strong_fwer(generalized_pvalues(model, s), qstar);
}

/// Step-up FDR rule: J* = max{m : sum_j eta_j(W_(m)) <= q* m}.
inline Decision decide_fdr_opt(const PValuePanel& panel, double qstar) {
  detail::require_level(qstar, "decide_fdr_opt");
  const std::size_t M = panel.size();
  ProcedureTrace trace;
  std::size_t cutoff = 0;
  for (std::size_t i = 0; i < M; ++i) {
    const std::size_t m = panel.antiranks[i];
    const double budget = qstar * static_cast<double>(i + 1);
    const bool pass = qstar > 0.0 && panel.size_sum[i] <= budget * (1.0 + detail::kBoundarySlack);
    if (pass) cutoff = i + 1;
    trace.steps.push_back({i + 1, m, panel.w[m], panel.size_sum[i], budget, pass});
  }
  const double threshold = cutoff == 0 ? 0.0 : panel.w[panel.antiranks[cutoff - 1]];
  return detail::prefix_decision(Procedure::fdr_opt, panel.antiranks, cutoff, threshold, std::move(trace));
}

/// As above from raw p-values. The size-condition diagnostic is attached but
/// never blocks the decision.
inline Decision decide_fdr_opt(const RocModel& model, std::span<const double> s, double qstar,
                               bool attach_size_condition = true) {
  detail::require_level(qstar, "decide_fdr_opt");
  auto d = decide_fdr_opt(generalized_pvalues(model, s), qstar);
  if (attach_size_condition) {
    const auto grid = default_condition_grid();
    d.size_condition = check_size_condition(model, grid);
  }
  return d;
}

/// Benjamini-Hochberg step-up: J = max{m : S_(m) <= q* m / M}.
inline Decision decide_bh(std::span<const double> s, double qstar) {
  detail::require_pvalues(s);
  detail::require_level(qstar, "decide_bh");
  const std::size_t M = s.size();
  const auto order = detail::ascending_order(s);
  ProcedureTrace trace;
  std::size_t cutoff = 0;
  for (std::size_t i = 0; i < M; ++i) {
    const double threshold = qstar * static_cast<double>(i + 1) / static_cast<double>(M);
    const bool pass = qstar > 0.0 && s[order[i]] <= threshold;
    if (pass) cutoff = i + 1;
    trace.steps.push_back({i + 1, order[i], s[order[i]], s[order[i]], threshold, pass});
  }
  const double threshold = cutoff == 0 ? 0.0 : s[order[cutoff - 1]];
  return detail::prefix_decision(Procedure::bh, order, cutoff, threshold, std::move(trace));
}

/// Step-down Sidak: J = max{j : S_(i) <= 1 - (1 - q*)^{1/(M-i+1)} for all i <= j}.
inline Decision decide_stepdown_sidak(std::span<const double> s, double qstar) {
  detail::require_pvalues(s);
  detail::require_level(qstar, "decide_stepdown_sidak");
  const std::size_t M = s.size();
  const auto order = detail::ascending_order(s);
  const double log_keep = std::log1p(-qstar);
  ProcedureTrace trace;
  std::size_t cutoff = 0;
  bool open = qstar > 0.0;
  for (std::size_t i = 0; i < M; ++i) {
    const double threshold = -std::expm1(log_keep / static_cast<double>(M - i));
    const bool pass = open && s[order[i]] <= threshold;
    if (pass) cutoff = i + 1;
    else open = false;
    trace.steps.push_back({i + 1, order[i], s[order[i]], s[order[i]], threshold, pass});
  }
  const double threshold = cutoff == 0 ? 0.0 : s[order[cutoff - 1]];
  return detail::prefix_decision(Procedure::stepdown_sidak, order, cutoff, threshold, std::move(trace));
}

/// Single-step Bonferroni: reject iff s_m <= alpha / M.
inline Decision decide_bonferroni(std::span<const double> s, double alpha) {
  detail::require_pvalues(s);
  detail::require_level(alpha, "decide_bonferroni");
  const double threshold = alpha / static_cast<double>(s.size());
  const auto order = detail::ascending_order(s);
  Decision d;
  d.procedure = Procedure::bonferroni;
  d.reject.assign(s.size(), 0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const bool hit = alpha > 0.0 && s[order[i]] <= threshold;
    d.reject[order[i]] = hit ? 1 : 0;
    d.trace.steps.push_back({i + 1, order[i], s[order[i]], s[order[i]], threshold, hit});
  }
  d.cutoff_index = d.rejections();
  d.alpha_threshold = threshold;
  return d;
}

/// Range of the FDR of the step-up optimal rule when every null is true:
/// [1 - (1 - q*/M)^M, q*].
inline std::pair<double, double> fdr_null_bounds(std::size_t M, double qstar) {
  if (M == 0) throw ValidationError("fdr_null_bounds: M must be >= 1");
  detail::require_level(qstar, "fdr_null_bounds");
  const double lower = -std::expm1(static_cast<double>(M) * std::log1p(-qstar / static_cast<double>(M)));
  return {lower, qstar};
}

/// Dispatch by tag. `level` is alpha for the weak/Bonferroni rules and q*
/// for the others; `model` may be null for the p-value-only baselines.
inline Decision decide(Procedure proc, const RocModel* model, std::span<const double> s, double level) {
  if (uses_model(proc) && model == nullptr)
    throw ValidationError(std::string("procedure ") + to_string(proc) + " needs effect sizes (gamma)");
  switch (proc) {
    case Procedure::weak_fwer_opt: return decide_weak_fwer(*model, s, level);
    case Procedure::strong_fwer_opt: return decide_strong_fwer(*model, s, level);
    case Procedure::fdr_opt: return decide_fdr_opt(*model, s, level);
    case Procedure::bh: return decide_bh(s, level);
    case Procedure::stepdown_sidak: return decide_stepdown_sidak(s, level);
    case Procedure::bonferroni: return decide_bonferroni(s, level);
  }
  throw ValidationError("unknown procedure");
}

}  // namespace powermt
