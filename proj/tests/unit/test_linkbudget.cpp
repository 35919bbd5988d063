#include <gtest/gtest.h>

#include <cmath>

#include "mmwg/linkbudget.hpp"

using namespace mmwg;

TEST(Sensitivity, CalibratedReferencePoint) {
  EXPECT_NEAR(sensitivity(38, 60, 53.7), -3.0, 0.1);
  EXPECT_NEAR(sensitivity(38, 60, default_q_factor), -3.0, 1e-12);
  // 53.7 * 38e-12 W * sqrt(6e10) = 0.49986 mW
  EXPECT_NEAR(sensitivity(38, 60, 53.7), 10 * std::log10(53.7 * 38e-12 * std::sqrt(6e10) * 1e3), 1e-12);
}

TEST(Sensitivity, Scaling) {
  const double s = sensitivity(38, 60, 20);
  EXPECT_NEAR(sensitivity(38, 240, 20) - s, 10 * std::log10(2.0), 1e-12);
  EXPECT_NEAR(sensitivity(38, 60, 40) - s, 10 * std::log10(2.0), 1e-12);
  EXPECT_NEAR(sensitivity(76, 60, 20) - s, 10 * std::log10(2.0), 1e-12);
  EXPECT_THROW(sensitivity(0, 60, 20), ValidationError);
  EXPECT_THROW(sensitivity(38, -1, 20), ValidationError);
  EXPECT_THROW(sensitivity(38, 60, 0), ValidationError);
}

TEST(Budget, PaperScenario) {
  const auto r = budget(BudgetSpec{});
  EXPECT_EQ(r.budget_db, 9.0);
  EXPECT_EQ(r.path_loss_db, 4.0);
  EXPECT_EQ(r.margin_db, 5.0);
  EXPECT_TRUE(r.feasible);
}

TEST(Budget, ZeroLengthAndExtraLoss) {
  BudgetSpec s;
  s.length = 0;
  auto r = budget(s);
  EXPECT_EQ(r.margin_db, r.budget_db);
  s = BudgetSpec{};
  s.other_losses = 10;
  r = budget(s);
  EXPECT_DOUBLE_EQ(r.margin_db, -5.0);
  EXPECT_FALSE(r.feasible);
}

TEST(Budget, BookkeepingAndMonotonicity) {
  BudgetSpec base;
  base.launch_power = 3.3;
  base.wg_loss = 0.07;
  base.length = 37;
  base.other_losses = 1.1;
  const auto r0 = budget(base);
  EXPECT_EQ(r0.margin_db + r0.path_loss_db, r0.budget_db);
  const auto worse = [&](auto mutate) {
    BudgetSpec s = base;
    mutate(s);
    return budget(s).margin_db <= r0.margin_db;
  };
  EXPECT_TRUE(worse([](BudgetSpec& s) { s.length *= 2; }));
  EXPECT_TRUE(worse([](BudgetSpec& s) { s.nep *= 1.5; }));
  EXPECT_TRUE(worse([](BudgetSpec& s) { s.q_factor *= 3; }));
  EXPECT_TRUE(worse([](BudgetSpec& s) { s.other_losses += 0.5; }));
}

TEST(Budget, Rejections) {
  BudgetSpec s;
  s.rx_bandwidth = 0;
  EXPECT_THROW(budget(s), ValidationError);
  s = BudgetSpec{};
  s.length = -1;
  EXPECT_THROW(budget(s), ValidationError);
  s = BudgetSpec{};
  s.nep = -1;
  EXPECT_THROW(budget(s), ValidationError);
  s = BudgetSpec{};
  s.q_factor = 0;
  EXPECT_THROW(budget(s), ValidationError);
}
