#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"

namespace agepatch {
namespace {

using testing::grid;
using testing::one_patch;

NewbornTrajectory constant_series(double delta, std::size_t patches, long nodes, double value) {
  NewbornTrajectory rho(delta, patches);
  rho.values.assign(static_cast<std::size_t>(nodes) * patches, value);
  return rho;
}

TEST(ApplyK, VanishesAtTimeZero) {
  const DiscreteModel model(one_patch(0.5, 1.0, 100.0, grid(0.05, 20, 10)));
  const auto rho = constant_series(0.05, 1, 201, 5.0);
  EXPECT_EQ(apply_K(model, rho, 0)[0], 0.0);
}

TEST(ApplyK, NoContributionBeforeFertileAges) {
  auto s = one_patch(0.5, 1.0, 100.0, grid(0.05, 20, 10));
  s.patches[0].m = Rate{RateProfile::window(1.0, 2.0, 3.0)};
  const DiscreteModel model(s);
  const auto rho = constant_series(0.05, 1, 201, 5.0);
  EXPECT_EQ(apply_K(model, rho, 20)[0], 0.0);  // t = 1
  EXPECT_GT(apply_K(model, rho, 60)[0], 0.0);  // t = 3
}

TEST(ApplyK, ConstantInputPastMaximalAgeMatchesStationaryMap) {
  const auto s = testing::symmetric_pair(0.5, 1.0, 100.0, 0.1, grid(0.1, 10, 15));
  const DiscreteModel model(s);
  const auto rho = constant_series(0.1, 2, 151, 20.0);
  const Vector c{20.0, 20.0};
  const auto k = apply_K(model, rho, 120);
  const auto kbar = apply_Kbar(model, c);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(k[i], kbar[i], 1e-12 * kbar[i]);
}

TEST(ApplyK, VolterraCausality) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  const auto s = testing::source_sink(grid(0.1, 10, 10));
  const DiscreteModel model(s);
  NewbornTrajectory rho(0.1, 2);
  for (int i = 0; i < 101 * 2; ++i) rho.values.push_back(u(rng));
  for (long n : {0L, 7L, 40L, 99L}) {
    const auto before = apply_K(model, rho, n);
    auto changed = rho;
    for (std::size_t i = static_cast<std::size_t>(n + 1) * 2; i < changed.values.size(); ++i) changed.values[i] = u(rng);
    EXPECT_EQ(apply_K(model, changed, n), before) << n;
  }
}

TEST(ApplyF, ZeroDataAndPastMaximalAge) {
  const DiscreteModel model(one_patch(0.5, 1.0, 100.0, grid(0.05, 20, 30)));
  const std::vector<RateProfile> zero{RateProfile::constant(0.0)};
  EXPECT_EQ(apply_F(model, zero, 30)[0], 0.0);
  EXPECT_EQ(apply_F(model, 400)[0], 0.0);
  EXPECT_EQ(apply_F(model, 500)[0], 0.0);
}

TEST(ApplyF, LinearAnalyticIntegral) {
  // f = c, L huge: (F f)(t) = c e^{-mu t} (a_max - t).
  const double c = 3.0;
  const DiscreteModel model(one_patch(0.5, 1.0, 1e12, grid(0.02, 40, 30), RateProfile::constant(c)));
  for (long n : {0L, 250L, 875L, 1500L}) {
    const double t = 0.02 * static_cast<double>(n);
    const double exact = c * std::exp(-0.5 * t) * (40.0 - t);
    EXPECT_NEAR(apply_F(model, n)[0], exact, 1e-4 * exact) << t;
  }
}

TEST(March, ZeroDataGivesZeroNewborns) {
  const DiscreteModel model(one_patch(0.5, 1.0, 100.0, grid(0.05, 20, 20), RateProfile::constant(0.0)));
  const auto run = march(model);
  for (double v : run.newborns.values) EXPECT_EQ(v, 0.0);
  for (double v : run.totals.values) EXPECT_EQ(v, 0.0);
}

TEST(March, SubcriticalDecay) {
  // sigma = 0.5
  const DiscreteModel model(one_patch(1.0, 0.5, 100.0, grid(0.05, 30, 80)));
  const auto run = march(model);
  double peak = 0.0;
  for (double v : run.newborns.values) peak = std::max(peak, v);
  EXPECT_LE(run.newborns.values.back(), 1e-3 * peak);
}

TEST(March, SupercriticalApproachesScalarEquilibrium) {
  const DiscreteModel model(one_patch(0.5, 1.0, 100.0, grid(0.05, 40, 120)));
  const auto run = march(model);
  const double target = 100.0 * testing::log_ratio_root(0.5);
  EXPECT_NEAR(run.newborns.values.back(), target, 0.01 * target);
  // Stationary total population: (L / mu) ln(1 + rho* / L).
  const double total = 100.0 / 0.5 * std::log1p(target / 100.0);
  EXPECT_NEAR(run.totals.values.back(), total, 1e-3 * total);
}

TEST(March, SolvesTheDiscreteRenewalEquation) {
  const auto s = testing::source_sink(grid(0.1, 10, 15));
  const DiscreteModel model(s);
  const auto run = march(model);
  for (long n : {1L, 50L, 100L, 101L, 150L}) {
    const auto k = apply_K(model, run.newborns, n);
    const auto f = apply_F(model, n);
    const auto rho = run.newborns.at(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(rho[i], k[i] + f[i], 1e-10 * std::max(1.0, rho[i])) << n;
  }
}

TEST(March, FieldAgreesWithNewbornsInitialDataAndTotals) {
  const auto s = testing::source_sink(grid(0.1, 10, 15));
  const DiscreteModel model(s);
  const auto run = march(model, {true, {0, 75, 150}});
  ASSERT_TRUE(run.field);
  const auto& field = *run.field;
  for (long n = 1; n < field.time_nodes; ++n)
    for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(field(k, 0, n), run.newborns.at(static_cast<std::size_t>(n))[k]);
  for (long i = 0; i < field.age_nodes; ++i)
    for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(field(k, i, 0), model.initial(k, i));
  EXPECT_EQ(total_population(field), run.totals);
  ASSERT_EQ(run.snapshots.size(), 3u);
  EXPECT_DOUBLE_EQ(run.snapshots[1].time, 7.5);
  for (long i = 0; i < field.age_nodes; ++i)
    EXPECT_EQ(run.snapshots[1].values(static_cast<std::size_t>(i), 1), field(1, i, 75));
}

TEST(March, BoundaryMatchesBirthIntegralOfTheField) {
  // Past t = a_max no cohort straddles the a = t diagonal, so the stored
  // field reproduces the boundary value to quadrature accuracy.
  const double d = 0.05;
  const auto s = testing::source_sink(grid(d, 10, 20));
  const DiscreteModel model(s);
  const auto run = march(model, {true, {}});
  const auto& field = *run.field;
  for (long n = model.age_steps() + 1; n < field.time_nodes; n += 17) {
    for (std::size_t k = 0; k < 2; ++k) {
      double birth = 0.0;
      for (long i = 0; i < field.age_nodes; ++i)
        birth += trapezoid_weight(i, field.age_nodes - 1, d) * model.birth(k, i, n) * field(k, i, n);
      const double rho = field(k, 0, n);
      EXPECT_NEAR(rho, birth, 10.0 * d * d * std::max(1.0, rho)) << n;
    }
  }
}

TEST(March, PositiveNewbornsUnderEssentiallyPositiveDispersal) {
  auto s = testing::symmetric_pair(0.5, 1.0, 100.0, 0.1, grid(0.1, 10, 10));
  s.patches[1].initial = RateProfile::constant(0.0);
  const auto run = march(DiscreteModel(s));
  for (std::size_t n = 1; n < run.newborns.size(); ++n)
    for (double v : run.newborns.at(n)) EXPECT_GT(v, 0.0);
}

TEST(March, MonotoneInInitialData) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 6; ++trial) {
    auto lo = testing::random_constant(rng, grid(0.1, 20, 20), 3);
    auto hi = lo;
    for (auto& p : hi.patches) p.initial = RateProfile::table({0.0, 10.0, 20.0}, {30.0, 40.0, 5.0});
    for (auto& p : lo.patches) p.initial = RateProfile::table({0.0, 10.0, 20.0}, {20.0, 40.0, 0.0});
    const auto a = march(DiscreteModel(lo));
    const auto b = march(DiscreteModel(hi));
    for (std::size_t i = 0; i < a.newborns.values.size(); ++i)
      EXPECT_LE(a.newborns.values[i], b.newborns.values[i] * (1 + 1e-12) + 1e-300);
  }
}

TEST(March, SecondOrderInDelta) {
  std::vector<double> values;
  for (double d : {0.1, 0.05, 0.025}) {
    const auto s = one_patch(0.5, 1.0, 100.0, grid(d, 20, 10));
    values.push_back(march(DiscreteModel(s)).newborns.values.back());
  }
  const double d1 = std::abs(values[0] - values[1]);
  const double d2 = std::abs(values[1] - values[2]);
  EXPECT_GT(d1 / d2, 3.0);
  EXPECT_LT(d1 / d2, 5.0);
}

TEST(March, InfeasibleStepRejected) {
  // delta m(0) / 2 = 1.5
  auto s = one_patch(0.5, 150.0, 100.0, grid(0.02, 20, 5));
  EXPECT_THROW(march(DiscreteModel(s)), ConfigurationError);
}

TEST(TotalPopulation, ZeroAndConstantFields) {
  PopulationField f;
  f.delta = 0.5;
  f.age_nodes = 81;
  f.time_nodes = 3;
  f.patches = 2;
  f.values.assign(81 * 3 * 2, 0.0);
  for (double v : total_population(f).values) EXPECT_EQ(v, 0.0);
  f.values.assign(81 * 3 * 2, 4.0);
  for (double v : total_population(f).values) EXPECT_NEAR(v, 160.0, 1e-12);
}

}  // namespace
}  // namespace agepatch
