#pragma once

// Normal-distribution kernels and a safeguarded scalar root finder.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>

#include "powermt/error.hpp"

namespace powermt {

namespace detail {

inline void require_finite(double z, const char* who) {
  if (!std::isfinite(z)) throw ValidationError(std::string(who) + ": argument must be finite");
}

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2*pi))
// Below this the erfc form drifts toward subnormals; the 12-term series is
// good to about 1e-20 relative from here down.
inline constexpr double kTailSwitch = -20.0;

// log Phi(z) for z well into the lower tail, from the Mills-ratio series
//   Phi(z) = phi(z)/|z| * (1 - 1/z^2 + 3/z^4 - 15/z^6 + ...).
inline double log_norm_cdf_asymptotic(double z) {
  const double inv_z2 = 1.0 / (z * z);
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k <= 12; ++k) {
    term *= -(2.0 * k - 1.0) * inv_z2;
    sum += term;
  }
  return -0.5 * z * z - std::log(-z) - kLogSqrt2Pi + std::log(sum);
}

}  // namespace detail

/// Standard normal density.
inline double norm_pdf(double z) {
  return std::exp(-0.5 * z * z - detail::kLogSqrt2Pi);
}

/// Standard normal CDF. Evaluated as erfc(-z/sqrt(2))/2 so both tails keep
/// full relative precision.
inline double norm_cdf(double z) {
  detail::require_finite(z, "norm_cdf");
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

/// log Phi(z) without underflow.
inline double log_norm_cdf(double z) {
  detail::require_finite(z, "log_norm_cdf");
  if (z > 0.0) return std::log1p(-0.5 * std::erfc(z / std::numbers::sqrt2));
  if (z >= detail::kTailSwitch) return std::log(0.5 * std::erfc(-z / std::numbers::sqrt2));
  return detail::log_norm_cdf_asymptotic(z);
}

/// phi(z)/Phi(z), the inverse Mills ratio of the lower tail.
inline double inverse_mills(double z) {
  return std::exp(-0.5 * z * z - detail::kLogSqrt2Pi - log_norm_cdf(z));
}

/// Standard normal quantile (Wichura's AS 241, about 1e-16 relative).
/// Returns -inf / +inf for p = 0 / 1; throws for p outside [0, 1].
inline double norm_quantile(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("norm_quantile: p must lie in [0, 1]");
  if (p == 0.0) return -std::numeric_limits<double>::infinity();
  if (p == 1.0) return std::numeric_limits<double>::infinity();

  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num =
        (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
             45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
          133.14166789178437745) * r + 3.387132872796366608);
    const double den =
        (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
             21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
          42.313330701600911252) * r + 1.0);
    return q * num / den;
  }

  double r = std::sqrt(-std::log(q < 0.0 ? p : 1.0 - p));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    const double num =
        (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
             1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
          4.6303378461565452959) * r + 1.42343711074968357734);
    const double den =
        (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
             0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
          2.05319162663775882187) * r + 1.0);
    val = num / den;
  } else {
    r -= 5.0;
    const double num =
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
             0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
          5.4637849111641143699) * r + 6.6579046435011037772);
    const double den =
        (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
             7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
          0.59983220655588793769) * r + 1.0);
    val = num / den;
  }
  return q < 0.0 ? -val : val;
}

// ---------------------------------------------------------------------------
// Root finding

struct Bracket {
  double lo;
  double hi;
  double f_lo;
  double f_hi;
};

struct RootResult {
  double root;
  double residual;
  int iterations;
};

struct RootOptions {
  double f_tol = 1e-12;  ///< accept when |f(x)| <= f_tol
  double x_tol = 1e-15;  ///< or when the bracket / last step is below x_tol * max(1, |x|)
  int max_iter = 200;
};

/// Evaluate f at both ends and check for a sign change.
template <class F>
Bracket make_bracket(F&& f, double lo, double hi) {
  if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi))
    throw ValidationError("make_bracket: need finite lo < hi");
  const double f_lo = f(lo);
  const double f_hi = f(hi);
  if (std::isnan(f_lo) || std::isnan(f_hi) || (f_lo > 0.0 && f_hi > 0.0) || (f_lo < 0.0 && f_hi < 0.0))
    throw BracketError("make_bracket: no sign change on [lo, hi]", lo, hi, f_lo, f_hi);
  return {lo, hi, f_lo, f_hi};
}

namespace detail {

// Shared safeguarded iteration. `eval(x)` returns {f(x), f'(x)}; with
// use_newton == false the derivative is ignored and secant steps are used.
// Interpolated steps are kept only when they land strictly inside the current
// bracket and shrink at least geometrically; otherwise the bracket is bisected.
template <class Eval>
RootResult safeguarded_root(Eval&& eval, Bracket b, const RootOptions& opt, bool use_newton,
                            double x0) {
  if (!(b.lo < b.hi)) throw ValidationError("find_root: bracket must satisfy lo < hi");
  if ((b.f_lo > 0.0 && b.f_hi > 0.0) || (b.f_lo < 0.0 && b.f_hi < 0.0) || std::isnan(b.f_lo) ||
      std::isnan(b.f_hi))
    throw BracketError("find_root: no sign change on bracket", b.lo, b.hi, b.f_lo, b.f_hi);
  if (b.f_lo == 0.0) return {b.lo, 0.0, 0};
  if (b.f_hi == 0.0) return {b.hi, 0.0, 0};

  double a = b.lo, fa = b.f_lo;
  double c = b.hi, fc = b.f_hi;
  const auto converged_width = [&](double x) {
    return (c - a) <= opt.x_tol * std::max(1.0, std::fabs(x));
  };

  double x;
  if (std::isfinite(x0) && x0 > a && x0 < c) {
    x = x0;
  } else if (use_newton) {
    x = a + 0.5 * (c - a);
  } else {
    x = a - fa * (c - a) / (fc - fa);
    if (!(x > a && x < c)) x = a + 0.5 * (c - a);
  }
  double x_prev = std::fabs(fa) < std::fabs(fc) ? a : c;
  double f_prev = std::fabs(fa) < std::fabs(fc) ? fa : fc;
  double step_old = c - a;
  double step = c - a;

  for (int it = 1;; ++it) {
    const auto [fx, dfx] = eval(x);
    if (std::isnan(fx)) throw NumericalError("find_root: function returned NaN");
    if (std::fabs(fx) <= opt.f_tol) return {x, fx, it};

    if ((fx < 0.0) == (fa < 0.0)) {
      a = x;
      fa = fx;
    } else {
      c = x;
      fc = fx;
    }
    if (converged_width(x) || (use_newton && std::fabs(step) <= opt.x_tol * std::max(1.0, std::fabs(x)) &&
                               it > 1)) {
      return {x, fx, it};
    }
    if (it >= opt.max_iter) {
      const bool lo_better = std::fabs(fa) < std::fabs(fc);
      throw ConvergenceError("find_root: iteration cap exceeded", lo_better ? a : c,
                             lo_better ? fa : fc, it);
    }

    double cand = std::numeric_limits<double>::quiet_NaN();
    if (use_newton) {
      if (dfx != 0.0 && std::isfinite(dfx)) cand = x - fx / dfx;
    } else if (fx != f_prev) {
      cand = x - fx * (x - x_prev) / (fx - f_prev);
    }
    const double proposed = cand - x;
    if (std::isfinite(cand) && cand > a && cand < c && std::fabs(proposed) <= 0.5 * std::fabs(step_old)) {
      step_old = step;
      step = proposed;
    } else {
      cand = a + 0.5 * (c - a);
      step_old = step;
      step = cand - x;
    }
    x_prev = x;
    f_prev = fx;
    x = cand;
  }
}

}  // namespace detail

/// Bracketed secant/bisection hybrid. Throws BracketError if the bracket has
/// no sign change and ConvergenceError (with the best iterate) past the cap.
template <class F>
RootResult find_root(F&& f, const Bracket& bracket, const RootOptions& opt = {}) {
  auto eval = [&](double x) { return std::pair<double, double>{f(x), 0.0}; };
  return detail::safeguarded_root(eval, bracket, opt, false, std::numeric_limits<double>::quiet_NaN());
}

/// Bracketed Newton/bisection hybrid; `fdf(x)` returns {f(x), f'(x)}.
/// `x0` is an optional starting point inside the bracket.
template <class FdF>
RootResult find_root_newton(FdF&& fdf, const Bracket& bracket, const RootOptions& opt = {},
                            double x0 = std::numeric_limits<double>::quiet_NaN()) {
  return detail::safeguarded_root(fdf, bracket, opt, true, x0);
}

}  // namespace powermt
