#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include "colflux/scenarios.hpp"

using namespace colflux;

namespace {

const ColumnParams kP{};

DisturbanceSequence short_sequence(std::uint64_t seed = 3) {
  DisturbanceRanges r;
  r.gap = {0.5, 2.0};
  r.start = 2.0;
  return generate_disturbance_sequence(seed, r, 4);
}

/// A policy whose outputs sit near the nominal controls.
PolicyParams nominal_policy(std::uint64_t seed = 1) {
  PolicyParams pp = init_params(roster_entry(PolicyKind::all, kP).spec, seed);
  for (double& w : pp.W(1)) w *= 0.1;
  const Controls u = kP.nominal_controls();
  pp.b(1)[0] = std::log(u.L_T / (kP.u_max[0] - u.L_T));
  pp.b(1)[1] = std::log(u.V_B / (kP.u_max[1] - u.V_B));
  return pp;
}

ScenarioOptions fast_options() {
  ScenarioOptions o;
  o.h = 0.01;
  o.exclude_before = 2.0;
  o.noise_spec = NoiseSpec::for_column(kP);
  return o;
}

OcpConfig fast_mpc() {
  OcpConfig c;
  c.h = 0.025;
  c.horizon = 5.0;
  c.max_iterations = 15;
  return c;
}

}  // namespace

TEST(Disturbances, GridsCountsAndDuration) {
  const DisturbanceRanges r;
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    const DisturbanceSequence s = generate_disturbance_sequence(seed);
    ASSERT_EQ(s.events.size(), 100u);
    EXPECT_EQ(s.events.front().time, 15.0);
    EXPECT_GE(s.duration, 300.0);
    EXPECT_LE(s.duration, 700.0);
    for (std::size_t i = 0; i < s.events.size(); ++i) {
      const auto& e = s.events[i];
      bool on_grid = false;
      for (std::size_t l = 0; l < 15; ++l) on_grid |= e.level == r.level(e.channel, l);
      EXPECT_TRUE(on_grid) << i;
      if (i > 0) {
        const double gap = e.time - s.events[i - 1].time;
        bool gap_on_grid = false;
        for (std::size_t l = 0; l < 10; ++l) gap_on_grid |= std::abs(gap - r.gap_level(l)) < 1e-9;
        EXPECT_TRUE(gap_on_grid) << i;
      }
    }
    EXPECT_GT(s.duration, s.events.back().time);
  }
  EXPECT_DOUBLE_EQ(r.level(FeedChannel::F, 0), 0.8);
  EXPECT_DOUBLE_EQ(r.level(FeedChannel::zF, 14), 0.6);
  EXPECT_DOUBLE_EQ(r.gap_level(9), 10.0);
}

TEST(Disturbances, SeedDeterminismAndCsvRoundTrip) {
  const DisturbanceSequence a = generate_disturbance_sequence(7), b = generate_disturbance_sequence(7);
  std::ostringstream sa, sb;
  write_disturbance_sequence(sa, a);
  write_disturbance_sequence(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  std::ostringstream sc;
  write_disturbance_sequence(sc, generate_disturbance_sequence(8));
  EXPECT_NE(sa.str(), sc.str());
  std::istringstream in(sa.str());
  const DisturbanceSequence back = read_disturbance_sequence(in);
  std::ostringstream again;
  write_disturbance_sequence(again, back);
  EXPECT_EQ(again.str(), sa.str());
}

TEST(Disturbances, FeedIsNominalUntilStartThenStepwise) {
  const DisturbanceSequence s = generate_disturbance_sequence(4);
  EXPECT_EQ(s.feed_at(0.0), kP.nominal_feed());
  EXPECT_EQ(s.feed_at(14.999), kP.nominal_feed());
  FeedConditions f = kP.nominal_feed();
  DisturbanceSequence::apply(f, s.events[0]);
  EXPECT_EQ(s.feed_at(15.0), f);
  DisturbanceSequence::apply(f, s.events[1]);
  EXPECT_EQ(s.feed_at(s.events[1].time), f);
}

TEST(ClosedLoop, RecordingGridBoundsAndObjective) {
  const DisturbanceSequence seq = short_sequence();
  const ClosedLoopResult r = simulate_closed_loop(nominal_policy(), seq, fast_options(), kP);
  EXPECT_EQ(r.trajectory.points(), static_cast<std::size_t>(std::round(seq.duration / 0.1)) + 1);
  EXPECT_GT(r.objective, 0.0);
  for (std::size_t k = 0; k < r.trajectory.points(); ++k) {
    const Controls u = r.trajectory.controls[k];
    EXPECT_GT(u.L_T, 0.0);
    EXPECT_LT(u.L_T, kP.u_max[0]);
    EXPECT_GT(u.V_B, 0.0);
    EXPECT_LT(u.V_B, kP.u_max[1]);
    for (std::size_t i = 0; i < kP.stages(); ++i) {
      EXPECT_GT(r.trajectory.state(k)[i], 0.0);
      EXPECT_GE(r.trajectory.state(k)[kP.stages() + i], 0.0);
      EXPECT_LE(r.trajectory.state(k)[kP.stages() + i], 1.0);
    }
  }
  // The integration-grid objective and the recorded-grid trapezoid agree closely.
  EXPECT_NEAR(cumulative_objective(r.trajectory, 2.0), r.objective, 0.02 * r.objective);
}

TEST(ClosedLoop, UnitMismatchAndZeroBiasMatchNominal) {
  const DisturbanceSequence seq = short_sequence();
  ScenarioOptions o = fast_options();
  const ClosedLoopResult nominal = simulate_closed_loop(nominal_policy(), seq, o, kP);
  o.mismatch = {1.0, 1.0};
  EXPECT_EQ(simulate_closed_loop(nominal_policy(), seq, o, kP).objective, nominal.objective);
  o.noise = NoiseMode::bias;
  o.bias.assign(30, 0.0);
  const ClosedLoopResult zero = simulate_closed_loop(nominal_policy(), seq, o, kP);
  EXPECT_EQ(zero.objective, nominal.objective);
  EXPECT_EQ(zero.trajectory.states, nominal.trajectory.states);
  o.mismatch = InputMismatch::reference();
  o.bias.clear();
  o.noise = NoiseMode::none;
  const ClosedLoopResult off = simulate_closed_loop(nominal_policy(), seq, o, kP);
  EXPECT_NE(off.objective, nominal.objective);
  // Recorded controls are those delivered to the plant.
  EXPECT_NEAR(off.trajectory.controls[0].L_T / 1.1, nominal.trajectory.controls[0].L_T, 1e-12);
}

TEST(ClosedLoop, NoiseModes) {
  const DisturbanceSequence seq = short_sequence();
  ScenarioOptions o = fast_options();
  o.noise_seed = 17;
  o.noise = NoiseMode::extreme;
  const ClosedLoopResult ex = simulate_closed_loop(nominal_policy(), seq, o, kP);
  const MeasurementLayout lay = measurement_layout(kP);
  ASSERT_EQ(ex.bias.size(), 30u);
  std::set<double> signs;
  for (std::size_t j = 0; j < 30; ++j) {
    EXPECT_EQ(std::abs(ex.bias[j]), o.noise_spec.bound(lay, j));
    signs.insert(ex.bias[j] > 0 ? 1.0 : -1.0);
  }
  EXPECT_EQ(signs.size(), 2u);
  o.noise = NoiseMode::bias;
  const ClosedLoopResult b1 = simulate_closed_loop(nominal_policy(), seq, o, kP);
  const ClosedLoopResult b2 = simulate_closed_loop(nominal_policy(), seq, o, kP);
  EXPECT_EQ(b1.objective, b2.objective);
  for (std::size_t j = 0; j < 30; ++j) EXPECT_LE(std::abs(b1.bias[j]), o.noise_spec.bound(lay, j));
  o.noise = NoiseMode::per_step;
  const ClosedLoopResult s1 = simulate_closed_loop(nominal_policy(), seq, o, kP);
  const ClosedLoopResult s2 = simulate_closed_loop(nominal_policy(), seq, o, kP);
  EXPECT_EQ(s1.objective, s2.objective);
  EXPECT_TRUE(s1.bias.empty());
  EXPECT_NE(s1.objective, b1.objective);
}

TEST(CumulativeObjective, PinnedZeroQuadraticScalingAndWindow) {
  const TrackingCost c = TrackingCost::for_column(kP);
  const auto build = [&](double dev) {
    Trajectory traj;
    traj.stages = kP.stages();
    for (int k = 0; k <= 300; ++k) {
      ColumnState z = ColumnState::uniform(kP.stages(), kP.M0, 0.5);
      z.fractions()[0] = c.x_bottom_setpoint + dev * std::sin(0.1 * k);
      z.fractions()[kP.stages() - 1] = c.x_top_setpoint - dev * std::cos(0.1 * k);
      traj.push(0.1 * k, z.flat(), c.reference, c.value(z.flat(), c.reference), kP.nominal_feed());
    }
    return traj;
  };
  EXPECT_EQ(cumulative_objective(build(0.0)), 0.0);
  const double one = cumulative_objective(build(0.004)), two = cumulative_objective(build(0.008));
  EXPECT_GT(one, 0.0);
  EXPECT_NEAR(two, 4.0 * one, 1e-15);
  // Only the part after the window start counts.
  EXPECT_LT(cumulative_objective(build(0.004), 20.0), one);
  EXPECT_THROW(cumulative_objective(build(0.004), 31.0), DomainError);
}

TEST(Mpc, ClosedLoopIsPiecewiseConstantAndDeterministic) {
  const DisturbanceSequence seq = short_sequence();
  ScenarioOptions o = fast_options();
  o.h = 0.005;
  MpcController mpc(kP, fast_mpc());
  const ClosedLoopResult a = simulate_closed_loop(mpc, seq, o, kP);
  const ClosedLoopResult b = simulate_closed_loop(mpc, seq, o, kP);
  EXPECT_EQ(a.objective, b.objective);
  for (std::size_t k = 0; k + 1 < a.trajectory.points(); ++k) {
    const double t0 = a.trajectory.t[k], t1 = a.trajectory.t[k + 1];
    if (std::floor(t0 / 0.5 + 1e-9) == std::floor(t1 / 0.5 + 1e-9)) {
      EXPECT_EQ(a.trajectory.controls[k].L_T, a.trajectory.controls[k + 1].L_T) << t0;
    }
  }
  // Noise settings do not reach the benchmark, which uses the true state.
  o.noise = NoiseMode::extreme;
  EXPECT_EQ(simulate_closed_loop(mpc, seq, o, kP).objective, a.objective);
}

TEST(Region, RowsBoundsAndQuantiles) {
  DisturbanceRanges r;
  r.gap = {2.0, 6.0};
  r.start = 5.0;
  const DisturbanceSequence seq = generate_disturbance_sequence(5, r, 6);
  MpcController mpc(kP, fast_mpc());
  const RegionRun run = estimate_operating_region(seq, mpc, kP, 0.01);
  EXPECT_EQ(run.data.rows(), static_cast<std::size_t>(std::round(seq.duration / 0.1)) + 1);
  EXPECT_GE(run.data.temperatures.minCoeff(), kP.T_bL);
  EXPECT_LE(run.data.temperatures.maxCoeff(), kP.T_bH);
  ASSERT_EQ(run.quantiles.q.size(), 25u);
  for (const auto& q : run.quantiles.q) {
    for (int i = 0; i + 1 < 5; ++i) EXPECT_LE(q[i], q[i + 1]);
  }
  const auto iqr = [&](std::size_t k) { return run.quantiles.q[k][3] - run.quantiles.q[k][1]; };
  EXPECT_LT(iqr(0), iqr(12));
  EXPECT_LT(iqr(24), iqr(12));
  std::ostringstream os;
  write_quantiles(os, run.quantiles);
  EXPECT_EQ(read_csv_string(os.str()).rows(), 25u);
}

TEST(Envelope, ZeroNoiseAndBounds) {
  const DisturbanceSequence seq = short_sequence();
  const PolicyParams pol = nominal_policy();
  const ClosedLoopResult r = simulate_closed_loop(pol, seq, fast_options(), kP);
  NoiseSpec quiet = NoiseSpec::for_column(kP);
  quiet.temperature_sigma = quiet.flow_sigma = quiet.fraction_sigma = quiet.holdup_sigma = 0.0;
  const ControlEnvelope flat = control_noise_envelope(pol, r.trajectory, 10, 1, quiet, kP);
  EXPECT_EQ(flat.mean_width(), 0.0);
  EXPECT_NEAR(flat.nominal[5].L_T, r.trajectory.controls[5].L_T, 1e-9);
  const ControlEnvelope env = control_noise_envelope(pol, r.trajectory, 100, 1, NoiseSpec::for_column(kP), kP);
  EXPECT_GT(env.mean_width(), 0.0);
  for (std::size_t i = 0; i < env.size(); ++i) {
    EXPECT_GT(env.lo[i].L_T, 0.0);
    EXPECT_LT(env.hi[i].L_T, kP.u_max[0]);
    EXPECT_GT(env.lo[i].V_B, 0.0);
    EXPECT_LT(env.hi[i].V_B, kP.u_max[1]);
    EXPECT_LE(env.lo[i].L_T, env.nominal[i].L_T + 1e-12);
  }
  const ControlEnvelope again = control_noise_envelope(pol, r.trajectory, 100, 1, NoiseSpec::for_column(kP), kP, 3);
  EXPECT_EQ(again.mean_width(), env.mean_width());
}

TEST(TrajectoryCsv, ColumnOrderAndRoundTrip) {
  const DisturbanceSequence seq = short_sequence();
  const PolicyParams pol = nominal_policy();
  const ClosedLoopResult r = simulate_closed_loop(pol, seq, fast_options(), kP);
  std::ostringstream os;
  write_trajectory(os, r.trajectory, kP);
  const CsvTable t = read_csv_string(os.str());
  EXPECT_EQ(t.columns[0], "t");
  EXPECT_EQ(t.columns[1], "M_1");
  EXPECT_EQ(t.columns[26], "x_1");
  EXPECT_EQ(t.columns[51], "T_1");
  EXPECT_EQ(t.columns[76], "L_T");
  EXPECT_EQ(t.columns[77], "V_B");
  EXPECT_EQ(t.columns[78], "stage_cost");
  EXPECT_FALSE(t.has_column("L_T_min"));
  std::istringstream in(os.str());
  const Trajectory back = read_trajectory(in);
  EXPECT_EQ(back.states, r.trajectory.states);
  EXPECT_EQ(back.stage_cost, r.trajectory.stage_cost);
  const ControlEnvelope env = control_noise_envelope(pol, r.trajectory, 5, 1, NoiseSpec::for_column(kP), kP);
  std::ostringstream oe;
  write_trajectory(oe, r.trajectory, kP, &env);
  EXPECT_TRUE(read_csv_string(oe.str()).has_column("V_B_max"));
}

TEST(Report, Table4LayoutAndWorkerInvariance) {
  const DisturbanceSequence seq = short_sequence();
  const std::vector<NamedPolicy> pols{{"all", nominal_policy(1)}, {"other", nominal_policy(2)}};
  MpcController mpc(kP, fast_mpc());
  const EvalReport a = run_table4(pols, seq, &mpc, 3, 11, kP, fast_options(), 1);
  const EvalReport b = run_table4(pols, seq, nullptr, 3, 11, kP, fast_options(), 4);
  ASSERT_EQ(a.rows.size(), 3u);
  EXPECT_EQ(a.rows[0].name, "mpc");
  EXPECT_FALSE(a.rows[0].with_noise.has_value());
  EXPECT_FALSE(a.rows[0].averaged.has_value());
  for (const auto& row : a.rows) EXPECT_GE(row.no_noise, 0.0);
  EXPECT_EQ(a.row("all").no_noise, b.row("all").no_noise);
  EXPECT_EQ(*a.row("other").averaged, *b.row("other").averaged);
  EXPECT_GE(*a.row("all").with_noise, 0.0);
  std::ostringstream csv, table;
  write_report_csv(csv, a);
  write_report_table(table, a);
  EXPECT_EQ(read_csv_string(csv.str()).rows(), 7u);
  EXPECT_NE(table.str().find("mpc"), std::string::npos);
  EXPECT_THROW((void)a.row("missing"), ConfigError);
}
