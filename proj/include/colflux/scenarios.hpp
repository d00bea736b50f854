#pragma once

// Test scenarios: multi-level disturbance sequences, closed-loop runs of the
// neural policies and the MPC benchmark under noise and plant mismatch,
// operating-region estimation, control-noise envelopes and the cumulative
// objective report.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "colflux/column_model.hpp"
#include "colflux/csv.hpp"
#include "colflux/diff_sim.hpp"
#include "colflux/errors.hpp"
#include "colflux/mpc.hpp"
#include "colflux/parallel.hpp"
#include "colflux/policy.hpp"
#include "colflux/random.hpp"
#include "colflux/sampling.hpp"

namespace colflux {

// --- disturbances -------------------------------------------------------------

enum class FeedChannel { F, zF, qF };

inline std::string to_string(FeedChannel c) {
  switch (c) {
    case FeedChannel::F:
      return "F";
    case FeedChannel::zF:
      return "zF";
    case FeedChannel::qF:
      return "qF";
  }
  return "?";
}

inline FeedChannel feed_channel_from_string(const std::string& s) {
  if (s == "F") return FeedChannel::F;
  if (s == "zF") return FeedChannel::zF;
  if (s == "qF") return FeedChannel::qF;
  throw FormatError("unknown feed channel '" + s + "'");
}

struct DisturbanceRanges {
  std::array<double, 2> F{0.8, 1.2};
  std::array<double, 2> zF{0.4, 0.6};
  std::array<double, 2> qF{0.8, 1.0};
  std::size_t levels = 15;
  std::array<double, 2> gap{0.5, 10.0};
  std::size_t gap_levels = 10;
  double start = 15.0;
  double duration_grid = 0.5;  ///< total duration is rounded up to this grid

  [[nodiscard]] const std::array<double, 2>& range(FeedChannel c) const {
    return c == FeedChannel::F ? F : (c == FeedChannel::zF ? zF : qF);
  }
  [[nodiscard]] double level(FeedChannel c, std::size_t i) const {
    const auto& r = range(c);
    return r[0] + (r[1] - r[0]) * static_cast<double>(i) / static_cast<double>(levels - 1);
  }
  [[nodiscard]] double gap_level(std::size_t i) const {
    return gap[0] + (gap[1] - gap[0]) * static_cast<double>(i) / static_cast<double>(gap_levels - 1);
  }

  void validate() const {
    for (FeedChannel c : {FeedChannel::F, FeedChannel::zF, FeedChannel::qF}) {
      if (!(range(c)[1] > range(c)[0])) throw ConfigError("disturbance range for " + to_string(c) + " is empty");
    }
    if (levels < 2 || gap_levels < 2) throw ConfigError("disturbance grids need at least two levels");
    if (!(gap[0] > 0.0 && gap[1] > gap[0])) throw ConfigError("disturbance gaps must be positive and increasing");
    if (!(start >= 0.0) || !(duration_grid > 0.0)) throw ConfigError("invalid start-up time or duration grid");
  }
};

struct DisturbanceEvent {
  double time = 0.0;
  FeedChannel channel = FeedChannel::F;
  double level = 0.0;
};

/// Piecewise-constant feed conditions: nominal until `start`, then one
/// channel changes at each event.
struct DisturbanceSequence {
  std::vector<DisturbanceEvent> events;
  FeedConditions initial;
  double start = 15.0;
  double duration = 0.0;
  std::uint64_t seed = 0;

  /// Feed in force at time t. Events take effect at the first time on or
  /// after their nominal time (within 1e-9 min).
  [[nodiscard]] FeedConditions feed_at(double t) const {
    FeedConditions f = initial;
    for (const auto& e : events) {
      if (e.time > t + 1e-9) break;
      apply(f, e);
    }
    return f;
  }

  static void apply(FeedConditions& f, const DisturbanceEvent& e) {
    switch (e.channel) {
      case FeedChannel::F:
        f.F = e.level;
        break;
      case FeedChannel::zF:
        f.zF = e.level;
        break;
      case FeedChannel::qF:
        f.qF = e.level;
        break;
    }
  }
};

/// Events start after the start-up period; gaps, channels and levels are
/// uniform over their grids. The run continues one further gap after the
/// last event.
inline DisturbanceSequence generate_disturbance_sequence(std::uint64_t seed, const DisturbanceRanges& ranges = {},
                                                         std::size_t n_events = 100, const ColumnParams& p = {}) {
  ranges.validate();
  if (n_events == 0) throw ConfigError("generate_disturbance_sequence: need at least one event");
  DisturbanceSequence s;
  s.seed = seed;
  s.start = ranges.start;
  s.initial = p.nominal_feed();
  Rng rng(derive_seed(seed, 0x64697374ULL));
  double t = ranges.start;
  for (std::size_t i = 0; i < n_events; ++i) {
    const auto channel = static_cast<FeedChannel>(uniform_index(rng, 3));
    const std::size_t level = uniform_index(rng, ranges.levels);
    s.events.push_back({t, channel, ranges.level(channel, level)});
    t += ranges.gap_level(uniform_index(rng, ranges.gap_levels));
  }
  s.duration = std::ceil(t / ranges.duration_grid - 1e-9) * ranges.duration_grid;
  return s;
}

inline void write_disturbance_sequence(std::ostream& os, const DisturbanceSequence& s) {
  CsvWriter w(os);
  w.meta("kind", "disturbances");
  w.meta("seed", std::to_string(s.seed));
  w.meta("start", format_double(s.start));
  w.meta("duration", format_double(s.duration));
  w.meta("initial", format_double(s.initial.F) + ";" + format_double(s.initial.zF) + ";" + format_double(s.initial.qF));
  const std::vector<std::string> cols{"time", "channel", "level"};
  w.header(cols);
  for (const auto& e : s.events) {
    const std::vector<std::string> row{format_double(e.time), to_string(e.channel), format_double(e.level)};
    w.row(row);
  }
}

inline DisturbanceSequence read_disturbance_sequence(std::istream& is) {
  const CsvTable t = read_csv(is);
  if (t.meta_value("kind") != "disturbances") throw FormatError("not a disturbance sequence file");
  DisturbanceSequence s;
  try {
    s.seed = std::stoull(t.meta_value("seed", "0"));
  } catch (const std::exception&) {
    throw FormatError("disturbance file: bad seed");
  }
  s.start = parse_double(t.meta_value("start"));
  s.duration = parse_double(t.meta_value("duration"));
  std::vector<std::string> parts;
  std::stringstream ss(t.meta_value("initial"));
  for (std::string tok; std::getline(ss, tok, ';');) parts.push_back(tok);
  if (parts.size() != 3) throw FormatError("disturbance file: bad initial feed");
  s.initial = {parse_double(parts[0]), parse_double(parts[1]), parse_double(parts[2])};
  const std::size_t ct = t.column("time"), cc = t.column("channel"), cl = t.column("level");
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const DisturbanceEvent e{t.number(r, ct), feed_channel_from_string(t.cells[r][cc]), t.number(r, cl)};
    if (!s.events.empty() && !(e.time > s.events.back().time)) throw FormatError("disturbance times must increase");
    s.events.push_back(e);
  }
  if (!s.events.empty() && s.duration < s.events.back().time) throw FormatError("disturbance duration too short");
  return s;
}

// --- closed-loop runs ----------------------------------------------------------

enum class NoiseMode { none, bias, per_step, extreme };

inline std::string to_string(NoiseMode m) {
  switch (m) {
    case NoiseMode::none:
      return "none";
    case NoiseMode::bias:
      return "bias";
    case NoiseMode::per_step:
      return "per-step";
    case NoiseMode::extreme:
      return "extreme";
  }
  return "?";
}

/// Multiplicative error between commanded and delivered controls.
struct InputMismatch {
  double L_T = 1.0;
  double V_B = 1.0;

  static InputMismatch none() { return {}; }
  static InputMismatch reference() { return {1.1, 0.9}; }
  [[nodiscard]] std::array<double, 2> gain() const {
    if (!(L_T > 0.0 && V_B > 0.0)) throw ConfigError("input mismatch factors must be positive");
    return {L_T, V_B};
  }
};

struct ScenarioOptions {
  NoiseMode noise = NoiseMode::none;
  std::uint64_t noise_seed = 0;
  std::vector<double> bias;  ///< explicit constant bias for NoiseMode::bias; drawn from noise_seed if empty
  NoiseSpec noise_spec;
  InputMismatch mismatch;
  double h = 0.005;
  double record_stride = 0.1;
  double exclude_before = 15.0;
};

struct ClosedLoopResult {
  Trajectory trajectory;            ///< sampled every record_stride; controls as delivered to the plant
  double objective = 0.0;           ///< trapezoid sum over integration steps starting at or after exclude_before
  std::vector<double> bias;         ///< constant measurement error used (empty when none)
  std::vector<std::string> events;  ///< controller or integrator incidents
};

/// Constant-bias measurement error drawn once from the truncated normals.
inline std::vector<double> draw_bias(const NoiseSpec& spec, const MeasurementLayout& lay, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> eta(lay.size());
  for (std::size_t j = 0; j < eta.size(); ++j) {
    eta[j] = TruncatedNormal::symmetric(0.0, spec.sigma(lay, j), spec.bound(lay, j)).draw(rng);
  }
  return eta;
}

/// Measurement error at the truncation bounds with one fair-coin sign per slot.
inline std::vector<double> draw_extreme(const NoiseSpec& spec, const MeasurementLayout& lay, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> eta(lay.size());
  for (std::size_t j = 0; j < eta.size(); ++j) eta[j] = (uniform_index(rng, 2) == 0 ? -1.0 : 1.0) * spec.bound(lay, j);
  return eta;
}

inline ColumnState equimolar_state(const ColumnParams& p) { return ColumnState::uniform(p.stages(), p.M0, 0.5); }

namespace detail {

inline std::size_t grid_count(double span, double h, const char* what) {
  const double r = span / h;
  if (!(h > 0.0) || std::abs(r - std::round(r)) > 1e-6) {
    throw ConfigError(std::string(what) + " is not a multiple of the integration step");
  }
  return static_cast<std::size_t>(std::round(r));
}

inline void check_state(std::span<const double> z, double t, std::vector<std::string>& events) {
  for (double v : z) {
    if (!std::isfinite(v)) {
      events.push_back("t=" + format_double(t) + " integrator produced a non-finite state");
      throw DomainError("closed loop: non-finite state at t=" + format_double(t));
    }
  }
}

/// Shared integration loop. `decide(k, t, z, feed)` returns the commanded
/// controls for step k; `right(z_next)` the commanded controls used for the
/// right end of the step's cost trapezoid; `advance` integrates one step.
template <class Decide, class Right, class Advance>
ClosedLoopResult run_loop(const ColumnParams& p, const DisturbanceSequence& seq, const ScenarioOptions& opt,
                          Decide&& decide, Right&& right, Advance&& advance) {
  const std::size_t steps = grid_count(seq.duration, opt.h, "scenario duration");
  const std::size_t stride = grid_count(opt.record_stride, opt.h, "record stride");
  const std::array<double, 2> gain = opt.mismatch.gain();
  const TrackingCost cost = TrackingCost::for_column(p);
  const std::size_t n = p.state_size();
  ClosedLoopResult r;
  r.trajectory.h = opt.record_stride;
  r.trajectory.reserve(steps / stride + 1, p.stages());
  const ColumnState z0 = equimolar_state(p);
  std::vector<double> z(z0.flat().begin(), z0.flat().end()), next(n);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * opt.h;
    const FeedConditions feed = seq.feed_at(t);
    const Controls u = apply_gain(decide(k, t, std::span<const double>(z), feed), gain);
    const double l_left = cost.value(z, u);
    if (k % stride == 0) r.trajectory.push(t, z, u, l_left, feed);
    advance(k, std::span<const double>(z), feed, gain, std::span<double>(next));
    check_state(next, t + opt.h, r.events);
    const double l_right = cost.value(next, apply_gain(right(std::span<const double>(next), feed), gain));
    if (t >= opt.exclude_before - 1e-9) r.objective += 0.5 * opt.h * (l_left + l_right);
    z.swap(next);
  }
  const double tf = static_cast<double>(steps) * opt.h;
  const FeedConditions feed = seq.feed_at(tf);
  const Controls u = apply_gain(decide(steps, tf, std::span<const double>(z), feed), gain);
  if (steps % stride == 0) r.trajectory.push(tf, z, u, cost.value(z, u), feed);
  return r;
}

}  // namespace detail

/// Closed loop under a neural policy acting continuously on noisy
/// measurements of the true state.
inline ClosedLoopResult simulate_closed_loop(const PolicyParams& policy, const DisturbanceSequence& seq,
                                             const ScenarioOptions& opt, const ColumnParams& p) {
  const MeasurementLayout lay = measurement_layout(p);
  std::vector<double> eta(lay.size(), 0.0);
  switch (opt.noise) {
    case NoiseMode::none:
    case NoiseMode::per_step:
      break;
    case NoiseMode::bias:
      eta = opt.bias.empty() ? draw_bias(opt.noise_spec, lay, opt.noise_seed) : opt.bias;
      break;
    case NoiseMode::extreme:
      eta = draw_extreme(opt.noise_spec, lay, opt.noise_seed);
      break;
  }
  if (eta.size() != lay.size()) throw ShapeError("simulate_closed_loop: bias vector has wrong length");
  PolicyFeedback fb(p, policy, seq.initial, eta);
  std::vector<TruncatedNormal> marginals;
  Rng rng(derive_seed(opt.noise_seed, 0x73746570ULL));
  if (opt.noise == NoiseMode::per_step) {
    for (std::size_t j = 0; j < lay.size(); ++j) {
      marginals.push_back(TruncatedNormal::symmetric(0.0, opt.noise_spec.sigma(lay, j), opt.noise_spec.bound(lay, j)));
    }
  }
  detail::Rk4Scratch scratch(p.state_size());
  FeedConditions current = seq.initial;
  std::size_t noise_step = std::numeric_limits<std::size_t>::max();
  const auto sync = [&](std::size_t k, const FeedConditions& feed) {
    if (feed.F != current.F || feed.zF != current.zF || feed.qF != current.qF) {
      current = feed;
      fb.set_feed(feed);
    }
    if (opt.noise == NoiseMode::per_step && k != noise_step) {
      noise_step = k;
      for (std::size_t j = 0; j < eta.size(); ++j) eta[j] = marginals[j].draw(rng);
      fb.set_noise(eta);
    }
  };
  ClosedLoopResult r = detail::run_loop(
      p, seq, opt,
      [&](std::size_t k, double, std::span<const double> z, const FeedConditions& feed) {
        sync(k, feed);
        return fb.controls(z, k);
      },
      [&](std::span<const double> z, const FeedConditions&) { return fb.controls(z, 0); },
      [&](std::size_t k, std::span<const double> z, const FeedConditions& feed, const std::array<double, 2>& gain,
          std::span<double> next) { detail::rk4_step(p, z, fb, feed, k, opt.h, gain, next, scratch); });
  if (opt.noise == NoiseMode::bias || opt.noise == NoiseMode::extreme) r.bias = eta;
  return r;
}

/// Closed loop under the receding-horizon benchmark: re-solved every control
/// interval from the true state and current feed, controls held in between.
/// Measurement noise does not apply to it.
inline ClosedLoopResult simulate_closed_loop(MpcController& mpc, const DisturbanceSequence& seq,
                                             const ScenarioOptions& opt, const ColumnParams& p) {
  const std::size_t every = detail::grid_count(mpc.config().dt, opt.h, "MPC interval");
  mpc.reset();
  Controls held = p.nominal_controls();
  detail::Rk4Scratch scratch(p.state_size());
  ClosedLoopResult r = detail::run_loop(
      p, seq, opt,
      [&](std::size_t k, double t, std::span<const double> z, const FeedConditions& feed) {
        if (k % every == 0) held = mpc.act(z, feed, t);
        return held;
      },
      [&](std::span<const double>, const FeedConditions&) { return held; },
      [&](std::size_t k, std::span<const double> z, const FeedConditions& feed, const std::array<double, 2>& gain,
          std::span<double> next) {
        ConstantFeedback fb{held};
        detail::rk4_step(p, z, fb, feed, k, opt.h, gain, next, scratch);
      });
  r.events.insert(r.events.end(), mpc.events().begin(), mpc.events().end());
  return r;
}

/// Trapezoid integral of the recorded stage cost over [exclude_before, end].
inline double cumulative_objective(const Trajectory& traj, double exclude_before = 15.0) {
  if (traj.points() < 2) throw DomainError("cumulative_objective: trajectory has fewer than two points");
  if (exclude_before < traj.t.front() - 1e-9 || exclude_before > traj.t.back() + 1e-9) {
    throw DomainError("cumulative_objective: window starts outside the trajectory");
  }
  double J = 0.0;
  for (std::size_t k = 0; k + 1 < traj.points(); ++k) {
    if (traj.t[k] < exclude_before - 1e-9) continue;
    J += 0.5 * (traj.t[k + 1] - traj.t[k]) * (traj.stage_cost[k] + traj.stage_cost[k + 1]);
  }
  return J;
}

/// Fraction of recorded points at or after `from` where lo <= x_top <= hi.
inline double fraction_top_within(const Trajectory& traj, double lo, double hi, double from = 15.0) {
  std::size_t in = 0, total = 0;
  for (std::size_t k = 0; k < traj.points(); ++k) {
    if (traj.t[k] < from - 1e-9) continue;
    const double x = traj.state(k)[2 * traj.stages - 1];
    ++total;
    in += (x >= lo && x <= hi);
  }
  return total == 0 ? 0.0 : static_cast<double>(in) / static_cast<double>(total);
}

// --- operating region ------------------------------------------------------------

struct StageQuantiles {
  std::vector<std::array<double, 5>> q;  ///< per stage: min, 25%, median, 75%, max
};

inline double quantile_sorted(const std::vector<double>& v, double prob) {
  const double pos = prob * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Temperature quantiles per stage over rows at or after `from`.
inline StageQuantiles temperature_quantiles(const RegionData& region, double from = 15.0) {
  StageQuantiles out;
  for (Eigen::Index k = 0; k < region.temperatures.cols(); ++k) {
    std::vector<double> v;
    for (std::size_t r = 0; r < region.rows(); ++r) {
      if (region.t[r] >= from - 1e-9) v.push_back(region.temperatures(static_cast<Eigen::Index>(r), k));
    }
    if (v.empty()) throw DomainError("temperature_quantiles: no rows after the start-up window");
    std::sort(v.begin(), v.end());
    out.q.push_back({v.front(), quantile_sorted(v, 0.25), quantile_sorted(v, 0.5), quantile_sorted(v, 0.75), v.back()});
  }
  return out;
}

inline void write_quantiles(std::ostream& os, const StageQuantiles& q) {
  CsvWriter w(os);
  const std::vector<std::string> cols{"stage", "min", "q25", "median", "q75", "max"};
  w.header(cols);
  for (std::size_t k = 0; k < q.q.size(); ++k) {
    const double row[] = {static_cast<double>(k + 1), q.q[k][0], q.q[k][1], q.q[k][2], q.q[k][3], q.q[k][4]};
    w.row(row);
  }
}

inline RegionData region_from_trajectory(const Trajectory& traj, const ColumnParams& p) {
  const std::size_t n = p.stages();
  if (traj.stages != n) throw ShapeError("region_from_trajectory: stage count mismatch");
  RegionData r;
  r.temperatures.resize(static_cast<Eigen::Index>(traj.points()), static_cast<Eigen::Index>(n));
  r.holdups.resize(static_cast<Eigen::Index>(traj.points()), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < traj.points(); ++i) {
    const auto z = traj.state(i);
    for (std::size_t k = 0; k < n; ++k) {
      r.holdups(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = z[k];
      r.temperatures(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          stage_temperature(std::clamp(z[n + k], 0.0, 1.0), p);
    }
    r.t.push_back(traj.t[i]);
    r.feed.push_back(traj.feed[i]);
  }
  return r;
}

struct RegionRun {
  ClosedLoopResult run;
  RegionData data;
  StageQuantiles quantiles;
};

/// Noise-free MPC run over `seq`, logged on the 0.1-min grid.
inline RegionRun estimate_operating_region(const DisturbanceSequence& seq, MpcController& mpc, const ColumnParams& p,
                                           double h = 0.005) {
  ScenarioOptions opt;
  opt.h = h;
  RegionRun r;
  r.run = simulate_closed_loop(mpc, seq, opt, p);
  r.data = region_from_trajectory(r.run.trajectory, p);
  r.quantiles = temperature_quantiles(r.data, seq.start);
  return r;
}

// --- control-noise envelope ------------------------------------------------------

struct ControlEnvelope {
  std::vector<double> t;
  std::vector<Controls> nominal;
  std::vector<Controls> lo, hi, sd;

  [[nodiscard]] std::size_t size() const { return t.size(); }

  /// Mean over time of the envelope width, averaged over both controls.
  [[nodiscard]] double mean_width() const {
    if (t.empty()) return 0.0;
    double w = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) w += 0.5 * ((hi[i].L_T - lo[i].L_T) + (hi[i].V_B - lo[i].V_B));
    return w / static_cast<double>(t.size());
  }
};

/// Policy outputs at every recorded state under `n_draws` independent noisy
/// measurements. A zero sigma gives a zero-width envelope.
inline ControlEnvelope control_noise_envelope(const PolicyParams& policy, const Trajectory& traj, std::size_t n_draws,
                                              std::uint64_t seed, const NoiseSpec& spec, const ColumnParams& p,
                                              std::size_t workers = 1) {
  if (n_draws == 0) throw ConfigError("control_noise_envelope: need at least one draw");
  const MeasurementLayout lay = measurement_layout(p);
  std::vector<TruncatedNormal> marginals;
  for (std::size_t j = 0; j < lay.size(); ++j) {
    marginals.push_back(TruncatedNormal::symmetric(0.0, spec.sigma(lay, j), spec.bound(lay, j)));
  }
  const std::size_t m = traj.points();
  ControlEnvelope env;
  env.t = traj.t;
  env.nominal.resize(m);
  env.lo.resize(m);
  env.hi.resize(m);
  env.sd.resize(m);
  parallel_for(m, workers, [&](std::size_t i) {
    const auto z = traj.state(i);
    std::vector<double> clean(lay.size());
    measure(p, z, traj.feed[i], clean);
    PolicyWorkspace ws(policy.spec());
    std::vector<double> noisy(clean.size()), zeta(clean.size());
    normalize_inputs(p, clean, zeta);
    env.nominal[i] = forward(policy, zeta, ws);
    Rng rng(derive_seed(seed, i));
    Controls lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    Controls hi{-lo.L_T, -lo.V_B};
    double sL = 0.0, sV = 0.0, qL = 0.0, qV = 0.0;
    for (std::size_t d = 0; d < n_draws; ++d) {
      for (std::size_t j = 0; j < clean.size(); ++j) noisy[j] = clean[j] + marginals[j].draw(rng);
      normalize_inputs(p, noisy, zeta);
      const Controls u = forward(policy, zeta, ws);
      lo = {std::min(lo.L_T, u.L_T), std::min(lo.V_B, u.V_B)};
      hi = {std::max(hi.L_T, u.L_T), std::max(hi.V_B, u.V_B)};
      sL += u.L_T;
      sV += u.V_B;
      qL += u.L_T * u.L_T;
      qV += u.V_B * u.V_B;
    }
    const double nd = static_cast<double>(n_draws);
    const auto sdev = [&](double s, double q) { return std::sqrt(std::max(0.0, q / nd - (s / nd) * (s / nd))); };
    env.lo[i] = lo;
    env.hi[i] = hi;
    env.sd[i] = {sdev(sL, qL), sdev(sV, qV)};
  });
  return env;
}

// --- trajectory CSV ----------------------------------------------------------------

/// Columns: t, M_1..M_N, x_1..x_N, T_1..T_N, L_T, V_B, stage_cost, F, zF, qF,
/// then the envelope columns when one is given.
inline void write_trajectory(std::ostream& os, const Trajectory& traj, const ColumnParams& p,
                             const ControlEnvelope* env = nullptr) {
  const std::size_t n = traj.stages;
  if (env != nullptr && env->size() != traj.points()) throw ShapeError("write_trajectory: envelope length mismatch");
  CsvWriter w(os);
  w.meta("kind", "trajectory");
  std::vector<std::string> cols{"t"};
  for (const char* pre : {"M_", "x_", "T_"}) {
    for (std::size_t k = 1; k <= n; ++k) cols.push_back(pre + std::to_string(k));
  }
  for (const char* c : {"L_T", "V_B", "stage_cost", "F", "zF", "qF"}) cols.emplace_back(c);
  if (env != nullptr) {
    for (const char* c : {"L_T_min", "L_T_max", "L_T_sd", "V_B_min", "V_B_max", "V_B_sd"}) cols.emplace_back(c);
  }
  w.header(cols);
  std::vector<double> row;
  for (std::size_t i = 0; i < traj.points(); ++i) {
    row.clear();
    row.push_back(traj.t[i]);
    const auto z = traj.state(i);
    row.insert(row.end(), z.begin(), z.end());
    for (std::size_t k = 0; k < n; ++k) row.push_back(stage_temperature(std::clamp(z[n + k], 0.0, 1.0), p));
    row.insert(row.end(), {traj.controls[i].L_T, traj.controls[i].V_B, traj.stage_cost[i], traj.feed[i].F,
                           traj.feed[i].zF, traj.feed[i].qF});
    if (env != nullptr) {
      row.insert(row.end(), {env->lo[i].L_T, env->hi[i].L_T, env->sd[i].L_T, env->lo[i].V_B, env->hi[i].V_B,
                             env->sd[i].V_B});
    }
    w.row(row);
  }
}

inline Trajectory read_trajectory(std::istream& is) {
  const CsvTable t = read_csv(is);
  std::size_t n = 0;
  while (t.has_column("x_" + std::to_string(n + 1))) ++n;
  if (n == 0) throw FormatError("trajectory file has no composition columns");
  Trajectory traj;
  traj.stages = n;
  const std::size_t ct = t.column("t"), cl = t.column("L_T"), cv = t.column("V_B"), cs = t.column("stage_cost");
  std::vector<std::size_t> cm, cx;
  for (std::size_t k = 1; k <= n; ++k) {
    cm.push_back(t.column("M_" + std::to_string(k)));
    cx.push_back(t.column("x_" + std::to_string(k)));
  }
  const bool has_feed = t.has_column("F");
  for (std::size_t r = 0; r < t.rows(); ++r) {
    std::vector<double> z(2 * n);
    for (std::size_t k = 0; k < n; ++k) {
      z[k] = t.number(r, cm[k]);
      z[n + k] = t.number(r, cx[k]);
    }
    FeedConditions f;
    if (has_feed) f = {t.number(r, t.column("F")), t.number(r, t.column("zF")), t.number(r, t.column("qF"))};
    traj.push(t.number(r, ct), z, {t.number(r, cl), t.number(r, cv)}, t.number(r, cs), f);
  }
  if (traj.points() >= 2) traj.h = traj.t[1] - traj.t[0];
  return traj;
}

// --- report ----------------------------------------------------------------------

struct NamedPolicy {
  std::string name;
  PolicyParams params;
};

struct EvalRow {
  std::string name;
  double no_noise = 0.0;
  std::optional<double> with_noise;
  std::optional<double> averaged;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::size_t bias_draws = 0;

  [[nodiscard]] const EvalRow& row(const std::string& name) const {
    for (const auto& r : rows) {
      if (r.name == name) return r;
    }
    throw ConfigError("report has no row '" + name + "'");
  }
};

/// Cumulative objectives: every policy without noise, under the first
/// constant-bias draw, and averaged over `n_bias_draws` draws shared by all
/// policies; the benchmark (if given) only without noise.
inline EvalReport run_table4(const std::vector<NamedPolicy>& policies, const DisturbanceSequence& seq,
                             MpcController* mpc, std::size_t n_bias_draws, std::uint64_t seed, const ColumnParams& p,
                             const ScenarioOptions& base = {}, std::size_t workers = 1) {
  if (n_bias_draws == 0) throw ConfigError("run_table4: need at least one bias draw");
  const MeasurementLayout lay = measurement_layout(p);
  std::vector<std::vector<double>> draws;
  for (std::size_t d = 0; d < n_bias_draws; ++d) draws.push_back(draw_bias(base.noise_spec, lay, derive_seed(seed, d)));
  const std::size_t per = n_bias_draws + 1;
  std::vector<double> obj(policies.size() * per);
  parallel_for(obj.size(), workers, [&](std::size_t job) {
    ScenarioOptions o = base;
    const std::size_t d = job % per;
    if (d == 0) {
      o.noise = NoiseMode::none;
    } else {
      o.noise = NoiseMode::bias;
      o.bias = draws[d - 1];
    }
    obj[job] = simulate_closed_loop(policies[job / per].params, seq, o, p).objective;
  });
  EvalReport rep;
  rep.bias_draws = n_bias_draws;
  if (mpc != nullptr) {
    ScenarioOptions o = base;
    o.noise = NoiseMode::none;
    rep.rows.push_back({"mpc", simulate_closed_loop(*mpc, seq, o, p).objective, std::nullopt, std::nullopt});
  }
  for (std::size_t i = 0; i < policies.size(); ++i) {
    double mean = 0.0;
    for (std::size_t d = 1; d < per; ++d) mean += obj[i * per + d] / static_cast<double>(n_bias_draws);
    rep.rows.push_back({policies[i].name, obj[i * per], obj[i * per + 1], mean});
  }
  return rep;
}

inline void write_report_csv(std::ostream& os, const EvalReport& rep) {
  CsvWriter w(os);
  w.meta("bias_draws", std::to_string(rep.bias_draws));
  const std::vector<std::string> cols{"policy", "mode", "objective"};
  w.header(cols);
  for (const auto& r : rep.rows) {
    w.row(std::vector<std::string>{r.name, "nominal", format_double(r.no_noise)});
    if (r.with_noise) w.row(std::vector<std::string>{r.name, "bias", format_double(*r.with_noise)});
    if (r.averaged) w.row(std::vector<std::string>{r.name, "avg-bias", format_double(*r.averaged)});
  }
}

inline void write_report_table(std::ostream& os, const EvalReport& rep) {
  const auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << *v;
    return s.str();
  };
  os << std::left << std::setw(16) << "policy" << std::right << std::setw(12) << "no noise" << std::setw(14)
     << "with noise" << std::setw(14) << "avg noise" << '\n';
  for (const auto& r : rep.rows) {
    os << std::left << std::setw(16) << r.name << std::right << std::setw(12) << cell(r.no_noise) << std::setw(14)
       << cell(r.with_noise) << std::setw(14) << cell(r.averaged) << '\n';
  }
}

}  // namespace colflux
