#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "ks.hpp"
#include "powermt/oracle.hpp"
#include "powermt/procedures.hpp"

using namespace powermt;

namespace {

std::set<std::size_t> rejected(const Decision& d) {
  std::set<std::size_t> out;
  for (std::size_t m = 0; m < d.reject.size(); ++m)
    if (d.reject[m]) out.insert(m);
  return out;
}

RocModel model_of(std::vector<double> g) { return RocModel::from_gammas(g); }

std::vector<double> uniform_pvalues(std::mt19937_64& gen, std::size_t M) {
  // Mixture of small and ordinary p-values so decisions are nontrivial.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> s(M);
  for (auto& v : s) v = unit(gen) < 0.3 ? std::pow(unit(gen), 4.0) * 0.05 : unit(gen);
  return s;
}

}  // namespace

TEST(Names, RoundTrip) {
  for (auto p : kAllProcedures) EXPECT_EQ(parse_procedure(to_string(p)), p);
  EXPECT_FALSE(parse_procedure("holm").has_value());
  EXPECT_TRUE(uses_model(Procedure::fdr_opt));
  EXPECT_FALSE(uses_model(Procedure::bh));
  EXPECT_TRUE(is_stepwise(Procedure::stepdown_sidak));
  EXPECT_FALSE(is_stepwise(Procedure::bonferroni));
}

TEST(GeneralizedPValues, ExchangeableClosedForm) {
  const auto p = generalized_pvalues(model_of({1.0, 1.0}), std::vector<double>{0.01, 0.05});
  EXPECT_NEAR(p.w[0], 0.0199, 1e-12);
  EXPECT_NEAR(p.w[1], 0.0975, 1e-12);
  EXPECT_EQ(p.antiranks, (std::vector<std::size_t>{0, 1}));

  const auto ten = generalized_pvalues(model_of(std::vector<double>(10, 2.0)), std::vector<double>(10, 0.01));
  for (double w : ten.w) EXPECT_NEAR(w, 0.09561792499119550999, 1e-12);
}

TEST(GeneralizedPValues, Boundaries) {
  const auto zero = generalized_pvalues(model_of({1.0, 2.0, 3.0}), std::vector<double>(3, 0.0));
  for (double w : zero.w) EXPECT_EQ(w, 0.0);
  const auto one = generalized_pvalues(model_of({1.0, 2.0}), std::vector<double>{1.0, 0.2});
  EXPECT_EQ(one.w[0], 1.0);
  EXPECT_THROW(generalized_pvalues(model_of({1.0}), std::vector<double>{1.2}), ValidationError);
  EXPECT_THROW(generalized_pvalues(model_of({1.0, 2.0}), std::vector<double>{0.2}), ValidationError);
}

TEST(GeneralizedPValues, RoundTripThroughSizeMap) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> g(0.1, 5.0);
  for (int panel = 0; panel < 30; ++panel) {
    std::vector<double> gammas(6);
    for (auto& v : gammas) v = g(gen);
    const auto model = model_of(gammas);
    const auto s = uniform_pvalues(gen, 6);
    const auto p = generalized_pvalues(model, s);
    const SizeMap map(model);
    for (std::size_t m = 0; m < 6; ++m) {
      // Within 1e-9 of one, 1 - W itself carries a relative rounding error
      // above 1e-7 and the budget no longer pins the sizes to 1e-8.
      if (p.w[m] > 1.0 - 1e-9) continue;
      EXPECT_NEAR(map.size(p.w[m], m), s[m], 1e-8) << panel << " " << m;
    }
    for (std::size_t i = 1; i < 6; ++i) EXPECT_LE(p.w[p.antiranks[i - 1]], p.w[p.antiranks[i]]);
  }
}

TEST(GeneralizedPValues, HeterogeneousAtTableScale) {
  const auto model = model_of({0.5, 0.5, 1.0, 1.0});
  const std::vector<double> s{0.0009, 0.0245, 0.0245, 0.0009};
  const auto p = generalized_pvalues(model, s);
  const SizeMap map(model);
  for (std::size_t m = 0; m < 4; ++m) EXPECT_NEAR(map.size(p.w[m], m), s[m], 1e-8);
  // The sizes at alpha = 0.05 give W close to 0.05 for hypotheses sitting on them.
  EXPECT_NEAR(p.w[2], 0.05, 2e-3);
  EXPECT_NEAR(p.w[0], 0.05, 5e-3);
}

TEST(WeakFwer, Examples) {
  const auto model = model_of({0.5, 0.5, 1.0, 1.0});
  const auto d = decide_weak_fwer(model, std::vector<double>{0.0005, 0.5, 0.02, 0.5}, 0.05);
  EXPECT_EQ(rejected(d), (std::set<std::size_t>{0, 2}));
  EXPECT_EQ(d.cutoff_index, 2u);
  EXPECT_EQ(decide_weak_fwer(model, std::vector<double>(4, 1.0), 0.05).rejections(), 0u);
}

TEST(WeakFwer, ExchangeableIsSidak) {
  std::mt19937_64 gen(8);
  for (int panel = 0; panel < 200; ++panel) {
    const auto s = uniform_pvalues(gen, 7);
    const double thr = sidak_sizes(7, 0.1).sizes[0];
    const auto d = decide_weak_fwer(model_of(std::vector<double>(7, 1.7)), s, 0.1);
    for (std::size_t m = 0; m < 7; ++m) EXPECT_EQ(d.reject[m] != 0, s[m] <= thr);
  }
}

TEST(WeakFwer, NonTransitive) {
  // A smaller p-value on a low-power hypothesis is kept while a larger one
  // on a high-power hypothesis is rejected.
  const std::vector<double> s{0.001, 0.5, 0.02, 0.5};
  const auto d = decide_weak_fwer(model_of({0.5, 0.5, 1.0, 1.0}), s, 0.05);
  EXPECT_LT(s[0], s[2]);
  EXPECT_FALSE(d.reject[0]);
  EXPECT_TRUE(d.reject[2]);
}

TEST(StrongFwer, ExchangeableExample) {
  const auto d = decide_strong_fwer(model_of({2.0, 2.0, 2.0}), std::vector<double>{0.001, 0.02, 0.5}, 0.05);
  EXPECT_EQ(rejected(d), (std::set<std::size_t>{0, 1}));
  EXPECT_EQ(d.cutoff_index, 2u);
  EXPECT_NEAR(d.trace.steps[0].statistic, std::pow(0.999, 3), 1e-12);
  EXPECT_EQ(decide_strong_fwer(model_of({2.0, 2.0, 2.0}), std::vector<double>{0.001, 0.02, 0.5}, 0.0).rejections(),
            0u);
}

TEST(FdrOpt, ExchangeableExample) {
  const auto model = model_of(std::vector<double>(4, 1.0));
  const std::vector<double> s{0.01, 0.02, 0.04, 0.05};
  const auto d = decide_fdr_opt(model, s, 0.05);
  EXPECT_EQ(d.rejections(), 4u);
  ASSERT_TRUE(d.size_condition.has_value());
  EXPECT_TRUE(d.size_condition->satisfied);
  EXPECT_EQ(decide_fdr_opt(model, s, 1.0).rejections(), 4u);
  EXPECT_EQ(decide_fdr_opt(model, s, 0.0).rejections(), 0u);
  EXPECT_EQ(decide_fdr_opt(model_of({1.0, 2.0, 3.0}), std::vector<double>{0.9, 0.95, 1.0}, 1.0).rejections(), 3u);
}

TEST(FdrOpt, SizeConditionAnnotatesWithoutBlocking) {
  const auto model = model_of({0.5, 0.5, 1.0, 1.0});
  const std::vector<double> s{1e-6, 1e-5, 1e-5, 0.9};
  const auto d = decide_fdr_opt(model, s, 0.1);
  ASSERT_TRUE(d.size_condition.has_value());
  EXPECT_FALSE(d.size_condition->satisfied);
  EXPECT_GT(d.rejections(), 0u);
  EXPECT_EQ(d.reject, decide_fdr_opt(generalized_pvalues(model, s), 0.1).reject);
}

TEST(FdrOpt, TwoHypothesisEnumeration) {
  // Direct evaluation of max{m : sum_j eta_j(W_(m)) <= q m} from the size map.
  const auto model = model_of({1.0, 2.0});
  const SizeMap map(model);
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> unit(0.0, 0.12);
  for (int trial = 0; trial < 40; ++trial) {
    const std::vector<double> s{unit(gen), unit(gen)};
    const double q = 0.05;
    std::vector<double> w{size_map_inverse(model, 0, s[0]), size_map_inverse(model, 1, s[1])};
    std::vector<std::size_t> order{0, 1};
    if (w[1] < w[0]) std::swap(order[0], order[1]);
    std::size_t J = 0;
    for (std::size_t m = 1; m <= 2; ++m) {
      const auto alloc = map.allocation(w[order[m - 1]]);
      if (alloc.sizes[0] + alloc.sizes[1] <= q * m * (1.0 + 1e-9)) J = m;
    }
    std::set<std::size_t> expect(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(J));
    EXPECT_EQ(rejected(decide_fdr_opt(model, s, q, false)), expect) << s[0] << " " << s[1];
  }
}

TEST(Bh, Examples) {
  EXPECT_EQ(rejected(decide_bh(std::vector<double>{0.01, 0.04, 0.2, 0.5}, 0.1)), (std::set<std::size_t>{0, 1}));
  EXPECT_EQ(decide_bh(std::vector<double>{0.01, 0.02, 0.04, 0.05}, 0.05).rejections(), 4u);
  EXPECT_EQ(decide_bh(std::vector<double>{0.9, 0.95}, 0.05).rejections(), 0u);
  // step-up: an early failure does not stop later passes
  EXPECT_EQ(decide_bh(std::vector<double>{0.03, 0.035, 0.04}, 0.04).rejections(), 3u);
  const auto d = decide_bh(std::vector<double>{0.5, 0.01, 0.04, 0.2}, 0.1);
  EXPECT_EQ(d.alpha_threshold, 0.04);
  EXPECT_EQ(d.cutoff_index, 2u);
}

TEST(StepdownSidak, Examples) {
  const auto d = decide_stepdown_sidak(std::vector<double>{0.001, 0.02, 0.5}, 0.05);
  EXPECT_EQ(d.rejections(), 2u);
  EXPECT_NEAR(d.trace.steps[0].threshold, 0.016952427508441499022, 1e-16);
  EXPECT_NEAR(d.trace.steps[1].threshold, 0.025320565519103609316, 1e-16);
  EXPECT_NEAR(d.trace.steps[2].threshold, 0.05, 1e-16);
  EXPECT_EQ(decide_stepdown_sidak(std::vector<double>{0.001, 0.02, 0.5}, 0.0).rejections(), 0u);
  EXPECT_EQ(decide_stepdown_sidak(std::vector<double>{0.05}, 0.05).rejections(), 1u);
  EXPECT_EQ(decide_stepdown_sidak(std::vector<double>{0.0501}, 0.05).rejections(), 0u);
  // step-down: stops at the first failure
  EXPECT_EQ(decide_stepdown_sidak(std::vector<double>{0.04, 0.001, 0.045}, 0.05).rejections(), 1u);
}

TEST(Bonferroni, Examples) {
  const auto d = decide_bonferroni(std::vector<double>{0.01, 0.0125, 0.02, 0.5}, 0.05);
  EXPECT_EQ(rejected(d), (std::set<std::size_t>{0, 1}));
  EXPECT_DOUBLE_EQ(d.alpha_threshold, 0.0125);
}

TEST(FdrNullBounds, Examples) {
  const auto [lo, hi] = fdr_null_bounds(20, 0.1);
  EXPECT_NEAR(lo, 0.09538951972538236922, 1e-15);
  EXPECT_EQ(hi, 0.1);
  const auto one = fdr_null_bounds(1, 0.1);
  EXPECT_NEAR(one.first, 0.1, 1e-16);
  EXPECT_EQ(fdr_null_bounds(5, 0.0), (std::pair<double, double>{0.0, 0.0}));
  EXPECT_THROW(fdr_null_bounds(0, 0.1), ValidationError);
}

TEST(Dispatch, NeedsModelForOptimalProcedures) {
  const std::vector<double> s{0.01, 0.2};
  EXPECT_THROW(decide(Procedure::fdr_opt, nullptr, s, 0.1), ValidationError);
  EXPECT_EQ(decide(Procedure::bh, nullptr, s, 0.1).procedure, Procedure::bh);
  const auto model = model_of({1.0, 1.0});
  for (auto p : kAllProcedures) EXPECT_EQ(decide(p, &model, s, 0.1).procedure, p);
}

TEST(Properties, ExchangeableReductions) {
  std::mt19937_64 gen(1234);
  std::uniform_int_distribution<std::size_t> count(1, 25);
  std::uniform_real_distribution<double> g(0.0, 6.0);
  std::uniform_real_distribution<double> q(0.01, 0.3);
  for (int panel = 0; panel < 1000; ++panel) {
    const std::size_t M = count(gen);
    const auto model = model_of(std::vector<double>(M, g(gen)));
    const auto s = uniform_pvalues(gen, M);
    const double level = q(gen);
    const auto p = generalized_pvalues(model, s);
    ASSERT_EQ(decide_fdr_opt(p, level).reject, decide_bh(s, level).reject) << panel;
    ASSERT_EQ(decide_strong_fwer(p, level).reject, decide_stepdown_sidak(s, level).reject) << panel;
  }
}

TEST(Properties, PrefixAndBudgetMonotone) {
  std::mt19937_64 gen(555);
  std::uniform_real_distribution<double> g(0.1, 5.0);
  for (int panel = 0; panel < 1000; ++panel) {
    const std::size_t M = 2 + panel % 9;
    std::vector<double> gammas(M);
    for (auto& v : gammas) v = g(gen);
    const auto model = model_of(gammas);
    const auto s = uniform_pvalues(gen, M);
    const auto p = generalized_pvalues(model, s);
    const double q1 = 0.02 + 0.1 * (panel % 5) / 5.0, q2 = q1 + 0.05;

    const auto f1 = decide_fdr_opt(p, q1), f2 = decide_fdr_opt(p, q2);
    const auto s1 = decide_strong_fwer(p, q1), s2 = decide_strong_fwer(p, q2);
    EXPECT_LE(f1.cutoff_index, f2.cutoff_index);
    EXPECT_LE(s1.cutoff_index, s2.cutoff_index);
    EXPECT_LE(decide_bh(s, q1).cutoff_index, decide_bh(s, q2).cutoff_index);
    EXPECT_LE(decide_stepdown_sidak(s, q1).cutoff_index, decide_stepdown_sidak(s, q2).cutoff_index);

    for (const auto* d : {&f1, &f2, &s1, &s2}) {
      std::set<std::size_t> prefix(p.antiranks.begin(),
                                   p.antiranks.begin() + static_cast<std::ptrdiff_t>(d->cutoff_index));
      EXPECT_EQ(rejected(*d), prefix);
    }
  }
}

TEST(Properties, SmallestGeneralizedPValueUniformUnderGlobalNull) {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto model = model_of({0.3, 0.6, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0});
  std::vector<double> w1(10000);
  std::vector<double> s(10);
  for (auto& v : w1) {
    for (auto& x : s) x = unit(gen);
    const auto p = generalized_pvalues(model, s);
    v = p.w[p.antiranks[0]];
  }
  EXPECT_LT(test_support::ks_uniform_statistic(w1), test_support::ks_critical_1pct(w1.size()));
}

TEST(Properties, TiesBrokenByIndex) {
  const auto p = generalized_pvalues(model_of({1.0, 1.0, 1.0}), std::vector<double>{0.02, 0.01, 0.02});
  EXPECT_EQ(p.antiranks, (std::vector<std::size_t>{1, 0, 2}));
  const auto d = decide_bh(std::vector<double>{0.02, 0.01, 0.02}, 0.03);
  EXPECT_EQ(d.trace.steps[1].index, 0u);
  EXPECT_EQ(d.trace.steps[2].index, 2u);
}
