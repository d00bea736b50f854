#pragma once

// Receding-horizon benchmark controller with full state feedback. The optimal
// control problem is transcribed by single shooting over piecewise-constant
// controls, squashed into their bounds with tanh, and solved with L-BFGS.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "colflux/column_model.hpp"
#include "colflux/diff_sim.hpp"
#include "colflux/errors.hpp"
#include "colflux/lbfgs.hpp"

namespace colflux {

struct OcpConfig {
  double dt = 0.5;        ///< control interval [min]
  double horizon = 20.0;  ///< [min]
  double h = 0.005;       ///< integration step inside the predictions [min]
  std::size_t max_iterations = 40;
  double gradient_tolerance = 1e-8;
  std::size_t memory = 10;
  bool shift_warm_start = true;

  [[nodiscard]] std::size_t intervals() const {
    if (!(dt > 0.0) || !(horizon > 0.0)) throw ConfigError("OcpConfig: dt and horizon must be positive");
    const double r = horizon / dt;
    if (std::abs(r - std::round(r)) > 1e-9 * r) throw ConfigError("OcpConfig: horizon is not a multiple of dt");
    return static_cast<std::size_t>(std::round(r));
  }
  [[nodiscard]] std::size_t grid_points() const { return intervals() + 1; }
  [[nodiscard]] std::size_t steps_per_interval() const {
    if (!(h > 0.0)) throw ConfigError("OcpConfig: step must be positive");
    const double r = dt / h;
    if (std::abs(r - std::round(r)) > 1e-9 * r) throw ConfigError("OcpConfig: dt is not a multiple of the step");
    return static_cast<std::size_t>(std::round(r));
  }
};

/// Bounded control from an unconstrained variable.
inline double squash(double v, double u_max) { return 0.5 * u_max * (1.0 + std::tanh(v)); }

/// Inverse of `squash`, clipped so that boundary values map to finite numbers.
inline double unsquash(double u, double u_max) {
  const double s = std::clamp(2.0 * u / u_max - 1.0, -1.0 + 1e-12, 1.0 - 1e-12);
  return std::atanh(s);
}

/// Piecewise-constant controls indexed by integration step. Parameters are
/// the commanded controls, interleaved [L_T, V_B] per interval.
class PiecewiseFeedback {
 public:
  static constexpr bool continuous = false;

  PiecewiseFeedback(std::span<const double> u, std::size_t steps_per_interval)
      : u_(u), spi_(steps_per_interval), intervals_(u.size() / 2) {
    if (u.size() % 2 != 0 || intervals_ == 0) throw ShapeError("PiecewiseFeedback: need [L_T, V_B] pairs");
  }

  [[nodiscard]] std::size_t interval(std::size_t step) const { return std::min(step / spi_, intervals_ - 1); }

  Controls controls(std::span<const double>, std::size_t step) const {
    const std::size_t i = interval(step);
    return {u_[2 * i], u_[2 * i + 1]};
  }
  void controls_vjp(std::span<const double>, std::size_t step, Controls u_bar, std::span<double>,
                    std::span<double> param_bar) const {
    const std::size_t i = interval(step);
    param_bar[2 * i] += u_bar.L_T;
    param_bar[2 * i + 1] += u_bar.V_B;
  }
  [[nodiscard]] std::size_t param_count() const { return u_.size(); }

 private:
  std::span<const double> u_;
  std::size_t spi_;
  std::size_t intervals_;
};

struct OcpResult {
  std::vector<Controls> controls;  ///< one per interval
  std::vector<double> v;           ///< unconstrained variables, interleaved
  double cost = 0.0;
  double warm_cost = 0.0;
  LbfgsStatus status = LbfgsStatus::max_iterations;
  std::size_t iterations = 0;
  double gradient_norm = 0.0;
};

/// Open-loop cost of an unconstrained control sequence and its gradient.
inline double ocp_objective(const ColumnParams& p, std::span<const double> z0, const FeedConditions& feed,
                            const OcpConfig& cfg, const TrackingCost& cost, std::span<const double> v,
                            std::span<double> grad) {
  std::vector<double> u(v.size()), ub(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) u[i] = squash(v[i], p.u_max[i % 2]);
  PiecewiseFeedback fb(u, cfg.steps_per_interval());
  SimConfig sim;
  sim.h = cfg.h;
  sim.t_f = cfg.horizon;
  const double J = simulate_cost_gradient(p, z0, feed, fb, sim, cost, ub);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double t = std::tanh(v[i]);
    grad[i] = ub[i] * 0.5 * p.u_max[i % 2] * (1.0 - t * t);
  }
  return J;
}

inline std::vector<double> controls_to_variables(const ColumnParams& p, std::span<const Controls> u) {
  std::vector<double> v(2 * u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    v[2 * i] = unsquash(u[i].L_T, p.u_max[0]);
    v[2 * i + 1] = unsquash(u[i].V_B, p.u_max[1]);
  }
  return v;
}

inline std::vector<Controls> variables_to_controls(const ColumnParams& p, std::span<const double> v) {
  std::vector<Controls> u(v.size() / 2);
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = {squash(v[2 * i], p.u_max[0]), squash(v[2 * i + 1], p.u_max[1])};
  return u;
}

/// Solves the finite-horizon problem from z0 with the feed held constant,
/// starting from `warm_v` (unconstrained variables; empty = nominal controls).
inline OcpResult solve_ocp(const ColumnParams& p, std::span<const double> z0, const FeedConditions& feed,
                           std::span<const double> warm_v, const OcpConfig& cfg,
                           const TrackingCost& cost) {
  const std::size_t N = cfg.intervals();
  std::vector<double> v0;
  if (warm_v.empty()) {
    v0 = controls_to_variables(p, std::vector<Controls>(N, p.nominal_controls()));
  } else {
    if (warm_v.size() != 2 * N) throw ShapeError("solve_ocp: warm start has wrong length");
    v0.assign(warm_v.begin(), warm_v.end());
  }
  LbfgsOptions lo;
  lo.memory = cfg.memory;
  lo.max_iterations = cfg.max_iterations;
  lo.gradient_tolerance = cfg.gradient_tolerance;
  const LbfgsResult lr = lbfgs_minimize(
      [&](std::span<const double> v, std::span<double> g) { return ocp_objective(p, z0, feed, cfg, cost, v, g); }, v0,
      lo);
  OcpResult r;
  r.v = lr.x;
  r.controls = variables_to_controls(p, lr.x);
  r.cost = lr.value;
  r.warm_cost = lr.history.front();
  r.status = lr.status;
  r.iterations = lr.iterations;
  r.gradient_norm = lr.gradient_norm;
  return r;
}

inline OcpResult solve_ocp(const ColumnParams& p, const ColumnState& z0, const FeedConditions& feed,
                           std::span<const Controls> warm, const OcpConfig& cfg) {
  const std::vector<double> v = warm.empty() ? std::vector<double>{} : controls_to_variables(p, warm);
  return solve_ocp(p, z0.flat(), feed, v, cfg, TrackingCost::for_column(p));
}

/// Stateful receding-horizon controller: one solve per call, first interval
/// applied, solution shifted by one interval as the next warm start.
class MpcController {
 public:
  explicit MpcController(const ColumnParams& p, OcpConfig cfg = {}, std::ostream* log = nullptr)
      : p_(p), cfg_(cfg), cost_(TrackingCost::for_column(p)), log_(log) {
    reset();
  }

  void set_cost(const TrackingCost& cost) { cost_ = cost; }
  [[nodiscard]] const OcpConfig& config() const { return cfg_; }

  void reset() {
    warm_ = controls_to_variables(p_, std::vector<Controls>(cfg_.intervals(), p_.nominal_controls()));
    last_ = p_.nominal_controls();
    solves_ = 0;
    failures_ = 0;
    events_.clear();
  }

  /// Controls to hold over the next interval given the true plant state and
  /// the current feed.
  Controls act(std::span<const double> z, const FeedConditions& feed, double t = 0.0) {
    ++solves_;
    try {
      const OcpResult r = solve_ocp(p_, z, feed, warm_, cfg_, cost_);
      if (r.status == LbfgsStatus::non_finite) throw ConvergenceError("objective not finite");
      last_ = r.controls.front();
      warm_ = r.v;
      if (cfg_.shift_warm_start) {
        std::rotate(warm_.begin(), warm_.begin() + 2, warm_.end());
        warm_[warm_.size() - 2] = r.v[r.v.size() - 2];
        warm_[warm_.size() - 1] = r.v[r.v.size() - 1];
      }
    } catch (const Error& e) {
      ++failures_;
      const std::string msg = "t=" + std::to_string(t) + " mpc solve failed (" + e.what() + "); holding previous controls";
      events_.push_back(msg);
      if (log_ != nullptr) *log_ << msg << '\n';
    }
    return last_;
  }

  [[nodiscard]] std::size_t solves() const { return solves_; }
  [[nodiscard]] std::size_t failures() const { return failures_; }
  [[nodiscard]] const std::vector<std::string>& events() const { return events_; }
  [[nodiscard]] std::span<const double> warm_start() const { return warm_; }

 private:
  ColumnParams p_;
  OcpConfig cfg_;
  TrackingCost cost_;
  std::ostream* log_;
  std::vector<double> warm_;
  Controls last_{};
  std::size_t solves_ = 0;
  std::size_t failures_ = 0;
  std::vector<std::string> events_;
};

}  // namespace colflux
