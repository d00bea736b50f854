#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "colflux/column_model.hpp"

using namespace colflux;

namespace {

const ColumnParams kP{};

ColumnState perturbed_state() {
  ColumnState s(25);
  for (std::size_t k = 0; k < 25; ++k) {
    const double i = static_cast<double>(k + 1);
    s.holdups()[k] = 0.5 + 0.01 * std::sin(i);
    s.fractions()[k] = 0.05 + 0.9 * (i - 1.0) / 24.0 + 0.01 * std::cos(i);
  }
  return s;
}

ColumnState random_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> m(0.3, 0.7), x(0.0, 1.0);
  ColumnState s(25);
  for (double& v : s.holdups()) v = m(rng);
  for (double& v : s.fractions()) v = x(rng);
  return s;
}

}  // namespace

TEST(Vle, BoundaryAndMidpoint) {
  EXPECT_EQ(vle(0.0, 1.75), 0.0);
  EXPECT_EQ(vle(1.0, 1.75), 1.0);
  EXPECT_NEAR(vle(0.5, 1.75), 0.875 / 1.375, 1e-15);
}

TEST(Vle, RejectsOutOfRange) {
  EXPECT_THROW(vle(-1e-9, 1.75), DomainError);
  EXPECT_THROW(vle(1.0 + 1e-9, 1.75), DomainError);
  EXPECT_NO_THROW(vle(1.0 + 1e-13, 1.75));
}

TEST(Vle, StrictlyMonotone) {
  double prev = vle(0.0, 1.75);
  for (int i = 1; i <= 1000; ++i) {
    const double y = vle(i / 1000.0, 1.75);
    EXPECT_GT(y, prev);
    prev = y;
  }
}

TEST(StageTemperature, BoilingPointsAndMidpoint) {
  EXPECT_DOUBLE_EQ(stage_temperature(1.0, kP), 341.9);
  EXPECT_DOUBLE_EQ(stage_temperature(0.0, kP), 357.4);
  EXPECT_NEAR(stage_temperature(0.5, kP), 349.65, 1e-12);
  EXPECT_THROW(stage_temperature(1.5, kP), DomainError);
}

TEST(InternalFlows, NominalHoldupGivesNominalLiquid) {
  const ColumnState s = ColumnState::uniform(25, 0.5, 0.5);
  const auto f = internal_flows(kP, s, kP.nominal_controls(), kP.nominal_feed());
  for (std::size_t k = 1; k + 1 < 25; ++k) {
    EXPECT_DOUBLE_EQ(f.L[k], k + 1 <= 13 ? 3.564 : 2.564) << "stage " << k + 1;
  }
  EXPECT_DOUBLE_EQ(f.L[24], kP.L0_above);
}

TEST(InternalFlows, LiquidFeedAddsNoVapour) {
  const ColumnState s = ColumnState::uniform(25, 0.5, 0.5);
  const auto f = internal_flows(kP, s, {2.5, 3.0}, {1.0, 0.5, 1.0});
  EXPECT_EQ(f.V[12], f.V[11]);
  const auto g = internal_flows(kP, s, {2.5, 3.0}, {1.0, 0.5, 0.8});
  EXPECT_NEAR(g.V[12] - g.V[11], 0.2, 1e-15);
  EXPECT_EQ(g.V[24], g.V[23]);
}

TEST(InternalFlows, DistillateLevelLaw) {
  ColumnState s = ColumnState::uniform(25, 0.5, 0.5);
  s.holdups()[24] = 0.6;
  const auto f = internal_flows(kP, s, kP.nominal_controls(), kP.nominal_feed());
  EXPECT_NEAR(f.D, 1.5, 1e-12);
  EXPECT_DOUBLE_EQ(f.B, 0.5);
}

TEST(Derivatives, MatchesIndependentTranscription) {
  // Frozen output of a separate Python transcription of the stage balances at
  // a non-symmetric state, off-nominal controls and a partly vaporised feed.
  const std::vector<double> expected = {
      -0.07581417358782461,   -0.12193292361362129,  -0.1425273814869521,   -0.032082822119874344,
      0.10785853594670014,    0.1486352534790023,    0.05275740442930088,   -0.09162535894946533,
      -0.15176818986208307,   -0.07237604693037047,  0.07355829976988426,   0.15186348489318746,
      0.08054608236003613,    -0.05401897072027895,  -0.14891923124161632,  -0.10690383733563324,
      0.033398451604425006,   0.142994358164227,     0.12112191128010696,   -0.012109462252630099,
      -0.13420745203594597,   -0.13291572934678797,  -0.00942189806848548,  0.27974259714390914,
      0.12323517500977743,    -0.03342847039069453,  -0.05392434907429701,  -0.026665068206983403,
      -0.05822133835344122,   -0.09823070231730989,  -0.10361938325826558,  -0.06331895588654787,
      0.0029612542075920035,  0.049586054226684995,  0.0479251268208322,    0.015888398047215143,
      -0.011232314271212728,  -0.22419915239877883,  -0.025167745000463534, 0.013571271451737737,
      0.015080485200964474,   -0.009123496044064441, -0.02968432770493711,  -0.028520294878791316,
      0.00040354346898989203, 0.03956389038968459,   0.057218629066335944,  0.046171009018306744,
      0.038240034193458956,   -0.061388091631472894};
  const ColumnState d = derivatives(kP, perturbed_state(), {2.7, 3.2}, {1.1, 0.45, 0.9});
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(d.flat()[i], expected[i], 1e-12) << "index " << i;
}

TEST(Derivatives, EquimolarReboilerComposition) {
  // Reboiler component balance written out by hand: every liquid is at 0.5, so
  // only the vapour leaving with y(0.5) changes the composition.
  const ColumnState s = ColumnState::uniform(25, 0.5, 0.5);
  const ColumnState d = derivatives(kP, s, kP.nominal_controls(), kP.nominal_feed());
  const double y = 1.75 * 0.5 / (1.0 + 0.75 * 0.5);
  const double L2 = 3.564, V1 = 3.065, B = 0.5, x = 0.5;
  const double dM1 = L2 - V1 - B;
  const double dx1 = (L2 * x - V1 * y - B * x - x * dM1) / 0.5;
  EXPECT_NEAR(d.x(0), dx1, 1e-12);
}

TEST(Derivatives, SingularHoldupRejected) {
  ColumnState s = ColumnState::uniform(25, 0.5, 0.5);
  s.holdups()[7] = 5e-7;
  EXPECT_THROW(derivatives(kP, s, kP.nominal_controls(), kP.nominal_feed()), SingularityError);
}

TEST(Derivatives, TotalAndComponentMassConservation) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uF(0.8, 1.2), uz(0.4, 0.6), uq(0.8, 1.0), uL(0.5, 2.75), uV(0.5, 3.25);
  for (int trial = 0; trial < 200; ++trial) {
    const ColumnState s = random_state(rng);
    const Controls u{uL(rng), uV(rng)};
    const FeedConditions feed{uF(rng), uz(rng), uq(rng)};
    const ColumnState d = derivatives(kP, s, u, feed);
    const auto flows = internal_flows(kP, s, u, feed);
    double sum_dM = 0.0, sum_dMx = 0.0;
    for (std::size_t k = 0; k < 25; ++k) {
      sum_dM += d.M(k);
      sum_dMx += d.M(k) * s.x(k) + s.M(k) * d.x(k);
    }
    EXPECT_NEAR(sum_dM, feed.F - flows.D - flows.B, 1e-12);
    EXPECT_NEAR(sum_dMx, feed.F * feed.zF - flows.D * s.x(24) - flows.B * s.x(0), 1e-10);
  }
}

TEST(Derivatives, VjpMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  const ColumnState s = random_state(rng);
  const Controls u{2.1, 2.9};
  const FeedConditions feed{1.05, 0.47, 0.92};
  std::normal_distribution<double> g;
  std::vector<double> w(50);
  for (double& v : w) v = g(rng);
  std::vector<double> zb(50, 0.0);
  Controls ub{};
  derivatives_vjp(kP, s.flat(), u, feed, w, zb, ub);
  auto proj = [&](const ColumnState& st, Controls uu) {
    const ColumnState d = derivatives(kP, st, uu, feed);
    return std::inner_product(w.begin(), w.end(), d.flat().begin(), 0.0);
  };
  const double eps = 1e-6;
  for (std::size_t i = 0; i < 50; ++i) {
    ColumnState a = s, b = s;
    a.flat()[i] += eps;
    b.flat()[i] -= eps;
    const double fd = (proj(a, u) - proj(b, u)) / (2 * eps);
    EXPECT_NEAR(zb[i], fd, 1e-6 * std::max(1.0, std::abs(fd))) << "state " << i;
  }
  const double fdL = (proj(s, {u.L_T + eps, u.V_B}) - proj(s, {u.L_T - eps, u.V_B})) / (2 * eps);
  const double fdV = (proj(s, {u.L_T, u.V_B + eps}) - proj(s, {u.L_T, u.V_B - eps})) / (2 * eps);
  EXPECT_NEAR(ub.L_T, fdL, 1e-6 * std::max(1.0, std::abs(fdL)));
  EXPECT_NEAR(ub.V_B, fdV, 1e-6 * std::max(1.0, std::abs(fdV)));
}

TEST(Measure, LayoutAndValues) {
  ColumnState s = ColumnState::uniform(25, 0.5, 0.5);
  s.fractions()[0] = 0.01;
  s.holdups()[0] = 0.45;
  s.holdups()[24] = 0.55;
  const auto m = measure(kP, s, {1.1, 0.5, 0.9});
  ASSERT_EQ(m.size(), 30u);
  EXPECT_NEAR(m[0], 357.245, 1e-12);
  EXPECT_NEAR(m[26], 349.65, 1e-12);
  EXPECT_DOUBLE_EQ(m[25], 1.1);
  EXPECT_DOUBLE_EQ(m[27], 0.9);
  EXPECT_DOUBLE_EQ(m[28], 0.45);
  EXPECT_DOUBLE_EQ(m[29], 0.55);
  const MeasurementLayout lay = measurement_layout(kP);
  EXPECT_EQ(lay.name(4), "T5");
  EXPECT_EQ(lay.name(26), "T_F");
  EXPECT_EQ(lay.name(29), "M25");
}

TEST(Noise, TableValues) {
  const NoiseSpec ns = NoiseSpec::for_column(kP);
  const MeasurementLayout lay = measurement_layout(kP);
  EXPECT_NEAR(ns.sigma(lay, 3), 0.2325, 1e-12);
  EXPECT_NEAR(ns.sigma(lay, lay.feed_temperature()), 0.2325, 1e-12);
  EXPECT_DOUBLE_EQ(ns.bound(lay, 3), 0.775);
  for (std::size_t slot : {lay.feed_rate(), lay.feed_liquid_fraction(), lay.reboiler_holdup(), lay.condenser_holdup()}) {
    EXPECT_DOUBLE_EQ(ns.sigma(lay, slot), 0.03);
    EXPECT_DOUBLE_EQ(ns.bound(lay, slot), 0.1);
  }
}

TEST(Noise, ZeroIsIdentity) {
  const auto m = measure(kP, perturbed_state(), kP.nominal_feed());
  const std::vector<double> eta(30, 0.0);
  EXPECT_EQ(apply_noise(m, eta, NoiseSpec::for_column(kP), measurement_layout(kP)), m);
}

TEST(Noise, TruncationBoundsEnforced) {
  const auto m = measure(kP, perturbed_state(), kP.nominal_feed());
  const NoiseSpec ns = NoiseSpec::for_column(kP);
  const MeasurementLayout lay = measurement_layout(kP);
  std::vector<double> eta(30, 0.0);
  eta[3] = 0.775;
  EXPECT_NO_THROW(apply_noise(m, eta, ns, lay));
  eta[3] = 0.776;
  EXPECT_THROW(apply_noise(m, eta, ns, lay), DomainError);
  eta[3] = 0.0;
  eta[lay.reboiler_holdup()] = -0.1;
  const auto noisy = apply_noise(m, eta, ns, lay);
  EXPECT_DOUBLE_EQ(noisy[28], m[28] - 0.1);
}

TEST(Noise, NoisyTemperatureIsNotClamped) {
  ColumnState s = ColumnState::uniform(25, 0.5, 0.5);
  s.fractions()[0] = 0.0;
  const auto m = measure(kP, s, kP.nominal_feed());
  std::vector<double> eta(30, 0.0);
  eta[0] = 0.5;
  const auto noisy = apply_noise(m, eta, NoiseSpec::for_column(kP), measurement_layout(kP));
  EXPECT_GT(noisy[0], kP.T_bH);
}

TEST(SteadyState, NominalOperatingPoint) {
  const ColumnState ss = nominal_steady_state(kP);
  // Long-horizon stiff integration plus root polish in SciPy.
  EXPECT_NEAR(ss.x(0), 0.008737589846148454, 1e-8);
  EXPECT_NEAR(ss.x(24), 0.9893012827680089, 1e-8);
  EXPECT_NEAR(ss.x(0), 0.01, 0.01);
  EXPECT_NEAR(ss.x(24), 0.99, 0.01);
  const ColumnState d = derivatives(kP, ss, kP.nominal_controls(), kP.nominal_feed());
  double worst = 0.0;
  for (double v : d.flat()) worst = std::max(worst, std::abs(v));
  EXPECT_LT(worst, 1e-10);
  const auto f = internal_flows(kP, ss, kP.nominal_controls(), kP.nominal_feed());
  EXPECT_NEAR(f.D + f.B, 1.0, 1e-10);
}

TEST(SteadyState, OffNominalFeed) {
  const FeedConditions feed{1.15, 0.43, 0.85};
  const ColumnState ss = steady_state(kP, {2.4, 3.1}, feed);
  const ColumnState d = derivatives(kP, ss, {2.4, 3.1}, feed);
  for (double v : d.flat()) EXPECT_LT(std::abs(v), 1e-10);
  for (std::size_t k = 0; k < 25; ++k) {
    EXPECT_GT(ss.M(k), 0.0);
    EXPECT_GE(ss.x(k), 0.0);
    EXPECT_LE(ss.x(k), 1.0);
  }
}

TEST(ColumnParams, ValidationRejectsBadValues) {
  ColumnParams p;
  p.N_F = 25;
  EXPECT_THROW(p.validate(), ConfigError);
  p = ColumnParams{};
  p.alpha = 1.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = ColumnParams{};
  p.T_bH = 300.0;
  EXPECT_THROW(p.validate(), ConfigError);
  EXPECT_NO_THROW(ColumnParams{}.validate());
}
