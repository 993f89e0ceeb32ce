#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "powermt/allocator.hpp"
#include "powermt/oracle.hpp"

using namespace powermt;

namespace {

double objective(const RocModel& model, const std::vector<double>& sizes) {
  double total = 0.0;
  for (std::size_t m = 0; m < model.size(); ++m) total += roc(model[m], sizes[m]);
  return total;
}

// Random point on the boundary sum log(1 - eta) = log(1 - alpha).
std::vector<double> boundary_point(std::mt19937_64& gen, std::size_t M, double alpha) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> w(M);
  double total = 0.0;
  for (auto& v : w) total += (v = e(gen));
  const double budget = -std::log1p(-alpha);
  for (auto& v : w) v = -std::expm1(-budget * v / total);
  return w;
}

}  // namespace

TEST(GridSearch, SymmetricSplit) {
  const auto r = grid_optimal_sizes(RocModel::from_gammas(std::vector<double>{1.0, 1.0}), 0.05, 1e-4);
  EXPECT_NEAR(r.best_sizes[0], 0.0253, 1e-4);
  EXPECT_NEAR(r.best_sizes[1], 0.0253, 1e-4);
  EXPECT_EQ(r.grid_step, 1e-4);
}

TEST(GridSearch, BeatsSidak) {
  const auto model = RocModel::from_gammas(std::vector<double>{1.0, 2.0});
  const auto r = grid_optimal_sizes(model, 0.05, 1e-4);
  EXPECT_GE(r.best_objective, objective(model, sidak_sizes(2, 0.05).sizes));
}

TEST(GridSearch, AgreesWithSolverForThree) {
  const auto model = RocModel::from_gammas(std::vector<double>{0.5, 1.0, 2.0});
  const auto r = grid_optimal_sizes(model, 0.05, 1e-4);
  const double solver = objective(model, optimal_sizes(model, 0.05).sizes);
  EXPECT_NEAR(r.best_objective, solver, 1e-5);
  EXPECT_GE(solver, r.best_objective - 1e-6);
}

TEST(GridSearch, CandidatesOnBoundary) {
  const auto r = grid_optimal_sizes(RocModel::from_gammas(std::vector<double>{0.7, 3.0, 1.0}), 0.1, 1e-3);
  EXPECT_LT(std::fabs(detail::constraint_residual(r.best_sizes, {}, 0.1)), 1e-12);
}

TEST(GridSearch, Validation) {
  EXPECT_THROW(grid_optimal_sizes(RocModel::from_gammas(std::vector<double>(4, 1.0)), 0.05, 1e-3), ValidationError);
  EXPECT_THROW(grid_optimal_sizes(RocModel::from_gammas(std::vector<double>{1.0}), 0.05, 1e-3), ValidationError);
  EXPECT_THROW(grid_optimal_sizes(RocModel::from_gammas(std::vector<double>{1.0, 2.0}), 0.05, 0.1), ValidationError);
}

TEST(BernoulliTail, Examples) {
  EXPECT_DOUBLE_EQ(bernoulli_tail_enumerate(std::vector<double>{0.5, 0.5}, 1.0), 0.75);
  EXPECT_DOUBLE_EQ(bernoulli_tail_enumerate(std::vector<double>{0.2, 0.7, 0.1}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(bernoulli_tail_enumerate(std::vector<double>{0.3}, 1.0), 0.3);
  // P{V1 + V2 >= 2 * 0.5}: cut is 1
  EXPECT_NEAR(bernoulli_tail_enumerate(std::vector<double>{0.2, 0.3}, 2.0), 1.0 - 0.8 * 0.7, 1e-15);
  EXPECT_THROW(bernoulli_tail_enumerate(std::vector<double>(21, 0.1), 1.0), ValidationError);
  EXPECT_THROW(bernoulli_tail_enumerate(std::vector<double>{1.1}, 1.0), ValidationError);
}

TEST(BernoulliTail, SidakIsExtremal) {
  std::mt19937_64 gen(42);
  int checked = 0;
  for (std::size_t M = 2; M <= 6; ++M)
    for (double alpha : {0.1, 0.3})
      for (double a : {1.0, 1.5, 2.0}) {
        const double sid = bernoulli_tail_enumerate(sidak_sizes(M, alpha).sizes, a);
        for (int k = 0; k < 20; ++k) {
          EXPECT_LE(bernoulli_tail_enumerate(boundary_point(gen, M, alpha), a), sid * (1.0 + 1e-12))
              << M << " " << alpha << " " << a;
          ++checked;
        }
      }
  EXPECT_EQ(checked, 5 * 2 * 3 * 20);
}

TEST(Concavity, GaussianPasses) {
  for (double g : {0.0, 1.0, 8.0}) {
    const auto rep = concavity_check([g](double eta) { return roc(g, eta); }, 201);
    EXPECT_TRUE(rep.passed) << g << " " << rep.failed_check << " " << rep.worst_violation;
  }
}

TEST(Concavity, SquareFails) {
  const auto rep = concavity_check([](double eta) { return eta * eta; }, 101);
  EXPECT_FALSE(rep.passed);
  EXPECT_EQ(rep.failed_check, "dominates-diagonal");
  EXPECT_GT(rep.worst_violation, 0.2);
}

TEST(Concavity, DetectsNonMonotone) {
  const auto rep = concavity_check([](double eta) { return std::min(1.0, 2.0 * eta) - (eta > 0.9 ? 0.1 : 0.0); }, 101);
  EXPECT_FALSE(rep.passed);
}

TEST(Concavity, Validation) {
  EXPECT_THROW(concavity_check([](double e) { return e; }, 2), ValidationError);
}
