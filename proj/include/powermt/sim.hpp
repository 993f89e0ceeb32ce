#pragma once

// Seeded Monte Carlo harness for the Gaussian simulation design:
//   theta_m ~ Bernoulli(p), xi_m ~ |N(nu, 1)|, X_m ~ N(xi_m theta_m, 1),
// one-sided tests of mu_m <= 0 with p-values s_m = 1 - Phi(X_m). Procedures
// that need effect sizes are given gamma_m = xi_m for every m.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "powermt/allocator.hpp"
#include "powermt/error.hpp"
#include "powermt/model.hpp"
#include "powermt/procedures.hpp"
#include "powermt/rng.hpp"

namespace powermt {

struct ScenarioConfig {
  std::size_t M = 20;
  double p = 0.1;    ///< proportion of true alternatives
  double nu = 1.0;   ///< mean of the effect-size generator
  double qstar = 0.1;
  std::size_t reps = 1000;
  std::uint64_t seed = 42;
  std::vector<Procedure> procedures{Procedure::fdr_opt, Procedure::bh};
  std::size_t kfwer_k = 2;  ///< k of the "at least k false discoveries" rate
  unsigned threads = 1;

  void validate() const {
    if (M == 0) throw ValidationError("scenario: M must be >= 1");
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("scenario: p must lie in [0, 1]");
    if (!std::isfinite(nu)) throw ValidationError("scenario: nu must be finite");
    if (!(qstar >= 0.0 && qstar < 1.0)) throw ValidationError("scenario: q* must lie in [0, 1)");
    if (reps == 0) throw ValidationError("scenario: reps must be >= 1");
    if (procedures.empty()) throw ValidationError("scenario: no procedures requested");
    if (kfwer_k == 0) throw ValidationError("scenario: k must be >= 1");
  }
};

struct Panel {
  TruthAssignment theta;
  std::vector<double> xi;  ///< effect sizes
  std::vector<double> x;   ///< observations
  std::vector<double> s;   ///< p-values
};

/// Losses of one decision against the truth.
struct ReplicateLoss {
  double fdp = 0.0;       ///< false rejections / rejections, 0/0 = 0
  double missed = 0.0;    ///< true alternatives not rejected
  double mdr_std = 0.0;   ///< missed / |alternatives|, 0/0 = 0
  double fwer = 0.0;      ///< indicator of >= 1 false rejection
  double kfwer = 0.0;     ///< indicator of >= k false rejections
  double tp = 0.0;
  double fp = 0.0;
};

struct RiskEstimates {
  Procedure procedure = Procedure::bh;
  std::size_t reps = 0;
  double fdr = 0.0, se_fdr = 0.0;
  double mdr_std = 0.0, se_mdr = 0.0;
  double fwer = 0.0, se_fwer = 0.0;
  double kfwer = 0.0, se_kfwer = 0.0;
  double etp = 0.0, se_etp = 0.0;
  double efp = 0.0, se_efp = 0.0;
};

namespace detail {
enum Stream : std::uint32_t { kThetaStream = 0, kEffectStream = 1, kNoiseStream = 2 };
}

/// Deterministic in (seed, rep_index); theta, xi and noise come from three
/// independent streams.
inline Panel generate_panel(const ScenarioConfig& config, std::size_t rep_index) {
  StreamRng theta_rng(config.seed, rep_index, detail::kThetaStream);
  StreamRng effect_rng(config.seed, rep_index, detail::kEffectStream);
  StreamRng noise_rng(config.seed, rep_index, detail::kNoiseStream);
  Panel panel;
  panel.theta.theta.resize(config.M);
  panel.xi.resize(config.M);
  panel.x.resize(config.M);
  panel.s.resize(config.M);
  for (std::size_t m = 0; m < config.M; ++m) {
    panel.theta.theta[m] = theta_rng.uniform() < config.p ? 1 : 0;
    panel.xi[m] = std::fabs(config.nu + effect_rng.normal());
    panel.x[m] = panel.xi[m] * panel.theta.theta[m] + noise_rng.normal();
    panel.s[m] = norm_cdf(-panel.x[m]);
  }
  return panel;
}

inline ReplicateLoss risk_metrics(const Decision& decision, const TruthAssignment& truth, std::size_t k = 2) {
  if (decision.reject.size() != truth.size()) throw ValidationError("risk_metrics: length mismatch");
  std::size_t tp = 0, fp = 0, alternatives = 0;
  for (std::size_t m = 0; m < truth.size(); ++m) {
    const bool alt = truth.theta[m] != 0;
    const bool rej = decision.reject[m] != 0;
    alternatives += alt;
    tp += alt && rej;
    fp += !alt && rej;
  }
  ReplicateLoss loss;
  const std::size_t rejected = tp + fp;
  loss.fdp = rejected == 0 ? 0.0 : static_cast<double>(fp) / static_cast<double>(rejected);
  loss.missed = static_cast<double>(alternatives - tp);
  loss.mdr_std = alternatives == 0 ? 0.0 : loss.missed / static_cast<double>(alternatives);
  loss.fwer = fp >= 1 ? 1.0 : 0.0;
  loss.kfwer = fp >= k ? 1.0 : 0.0;
  loss.tp = static_cast<double>(tp);
  loss.fp = static_cast<double>(fp);
  return loss;
}

/// 100 * (average power at the optimal sizes) / (average power at Sidak sizes).
inline double efficiency_vs_sidak(const RocModel& model, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("efficiency_vs_sidak: alpha must lie in (0, 1)");
  const auto opt = optimal_sizes(model, alpha);
  const auto sid = sidak_sizes(model.size(), alpha);
  double power_opt = 0.0, power_sid = 0.0;
  for (std::size_t m = 0; m < model.size(); ++m) {
    power_opt += roc(model[m], opt.sizes[m]);
    power_sid += roc(model[m], sid.sizes[m]);
  }
  return 100.0 * power_opt / power_sid;
}

/// Every requested decision for one replicate.
inline std::vector<Decision> decide_replicate(const ScenarioConfig& config, const Panel& panel) {
  std::optional<RocModel> model;
  std::optional<PValuePanel> generalized;
  std::vector<Decision> out;
  out.reserve(config.procedures.size());
  for (auto proc : config.procedures) {
    if (uses_model(proc) && !model) model.emplace(RocModel::from_gammas(panel.xi));
    switch (proc) {
      case Procedure::strong_fwer_opt:
      case Procedure::fdr_opt:
        if (!generalized) generalized.emplace(generalized_pvalues(*model, panel.s));
        out.push_back(proc == Procedure::fdr_opt ? decide_fdr_opt(*generalized, config.qstar)
                                                 : decide_strong_fwer(*generalized, config.qstar));
        break;
      default:
        out.push_back(decide(proc, model ? &*model : nullptr, panel.s, config.qstar));
    }
  }
  return out;
}

namespace detail {

inline void mean_and_se(const std::vector<ReplicateLoss>& losses, double ReplicateLoss::*field, double& mean,
                        double& se) {
  const double n = static_cast<double>(losses.size());
  double sum = 0.0;
  for (const auto& l : losses) sum += l.*field;
  mean = sum / n;
  if (losses.size() < 2) {
    se = 0.0;
    return;
  }
  double ss = 0.0;
  for (const auto& l : losses) ss += (l.*field - mean) * (l.*field - mean);
  se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
}

}  // namespace detail

/// Averages the losses of each requested procedure over `reps` replicates.
/// Results do not depend on the thread count.
inline std::vector<RiskEstimates> run_cell(const ScenarioConfig& config) {
  config.validate();
  const std::size_t P = config.procedures.size();
  // losses[proc][rep]
  std::vector<std::vector<ReplicateLoss>> losses(P, std::vector<ReplicateLoss>(config.reps));

  std::mutex failure_mutex;
  std::exception_ptr failure;
  std::size_t failed_rep = 0;
  const auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t rep = begin; rep < end; ++rep) {
      try {
        const auto panel = generate_panel(config, rep);
        const auto decisions = decide_replicate(config, panel);
        for (std::size_t j = 0; j < P; ++j) losses[j][rep] = risk_metrics(decisions[j], panel.theta, config.kfwer_k);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure || rep < failed_rep) {
          failure = std::current_exception();
          failed_rep = rep;
        }
        return;
      }
    }
  };

  const std::size_t threads = std::clamp<std::size_t>(config.threads, 1, config.reps);
  if (threads == 1) {
    work(0, config.reps);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (config.reps + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(config.reps, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  if (failure) {
    try {
      std::rethrow_exception(failure);
    } catch (const NumericalError& e) {
      throw NumericalError("replicate " + std::to_string(failed_rep) + " (M=" + std::to_string(config.M) +
                           ", p=" + std::to_string(config.p) + ", nu=" + std::to_string(config.nu) +
                           "): " + e.what());
    }
  }

  std::vector<RiskEstimates> out(P);
  for (std::size_t j = 0; j < P; ++j) {
    auto& r = out[j];
    r.procedure = config.procedures[j];
    r.reps = config.reps;
    detail::mean_and_se(losses[j], &ReplicateLoss::fdp, r.fdr, r.se_fdr);
    detail::mean_and_se(losses[j], &ReplicateLoss::mdr_std, r.mdr_std, r.se_mdr);
    detail::mean_and_se(losses[j], &ReplicateLoss::fwer, r.fwer, r.se_fwer);
    detail::mean_and_se(losses[j], &ReplicateLoss::kfwer, r.kfwer, r.se_kfwer);
    detail::mean_and_se(losses[j], &ReplicateLoss::tp, r.etp, r.se_etp);
    detail::mean_and_se(losses[j], &ReplicateLoss::fp, r.efp, r.se_efp);
  }
  return out;
}

struct TableGrid {
  std::vector<std::size_t> Ms{20, 50, 100};
  std::vector<double> ps{0.1, 0.2, 0.4};
  std::vector<double> nus{1.0, 2.0, 4.0};
  double qstar = 0.1;
  std::size_t reps = 1000;
  std::uint64_t seed = 42;
  std::vector<Procedure> procedures{Procedure::fdr_opt, Procedure::bh};
  std::size_t kfwer_k = 2;
  unsigned threads = 1;
};

struct TableRow {
  std::size_t M = 0;
  double p = 0.0;
  double nu = 0.0;
  double qstar = 0.0;
  RiskEstimates estimates;
};

/// One row per (M, p, nu, procedure), in that nesting order. Every cell uses
/// the same seed, so cells share their random streams.
inline std::vector<TableRow> run_table(const TableGrid& grid) {
  if (grid.Ms.empty() || grid.ps.empty() || grid.nus.empty()) throw ValidationError("run_table: empty grid axis");
  std::vector<TableRow> rows;
  for (auto M : grid.Ms)
    for (double p : grid.ps)
      for (double nu : grid.nus) {
        ScenarioConfig c;
        c.M = M;
        c.p = p;
        c.nu = nu;
        c.qstar = grid.qstar;
        c.reps = grid.reps;
        c.seed = grid.seed;
        c.procedures = grid.procedures;
        c.kfwer_k = grid.kfwer_k;
        c.threads = grid.threads;
        for (const auto& est : run_cell(c)) rows.push_back({M, p, nu, grid.qstar, est});
      }
  return rows;
}

}  // namespace powermt
