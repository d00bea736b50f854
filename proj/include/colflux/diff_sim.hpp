#pragma once

// Fixed-step RK4 closed-loop simulation with trapezoid cost quadrature and an
// exact discrete adjoint of the whole scheme.
//
// A feedback law is any type providing
//
//   static constexpr bool continuous;   // true: u depends on the state only
//   Controls controls(std::span<const double> z, std::size_t step);
//   void controls_vjp(std::span<const double> z, std::size_t step, Controls u_bar,
//                     std::span<double> z_bar, std::span<double> param_bar);
//   std::size_t param_count() const;
//
// `step` is the index of the integration step the evaluation belongs to; RK4
// sub-stages of step n all pass n. Piecewise-constant laws (continuous = false)
// use it to select their interval.
//
// The cost of one step is h/2 [l(z_n, u_n) + l(z_{n+1}, u_n)] with u_n the
// controls of step n at the respective state, i.e. ordinary trapezoid on the
// step grid for continuous laws and exact per-interval trapezoid otherwise.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "colflux/column_model.hpp"
#include "colflux/errors.hpp"
#include "colflux/parallel.hpp"
#include "colflux/policy.hpp"

namespace colflux {

template <class F>
concept FeedbackLaw = requires(F& f, std::span<const double> z, std::size_t step, Controls ub, std::span<double> zb,
                               std::span<double> pb) {
  { F::continuous } -> std::convertible_to<bool>;
  { f.controls(z, step) } -> std::same_as<Controls>;
  f.controls_vjp(z, step, ub, zb, pb);
  { f.param_count() } -> std::convertible_to<std::size_t>;
};

struct SimConfig {
  double h = 0.005;    ///< integration step [min]
  double t_f = 20.0;   ///< horizon [min]
  std::size_t checkpoint_interval = 200;
  std::size_t max_tape_doubles = std::size_t{1} << 26;
  /// Multiplicative error between commanded and applied controls (plant mismatch).
  std::array<double, 2> input_gain{1.0, 1.0};

  [[nodiscard]] std::size_t steps() const {
    if (!(h > 0.0)) throw ConfigError("SimConfig: step must be positive");
    if (t_f < 0.0) throw ConfigError("SimConfig: negative horizon");
    const double ratio = t_f / h;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
      throw ConfigError("SimConfig: horizon is not an integer multiple of the step");
    }
    return static_cast<std::size_t>(rounded);
  }
};

/// Regulation objective: product compositions to set-points plus a small
/// penalty on input moves away from nominal.
struct TrackingCost {
  double x_bottom_setpoint = 0.01;
  double x_top_setpoint = 0.99;
  double move_weight = 0.001;
  Controls reference{2.564, 3.065};

  static TrackingCost for_column(const ColumnParams& p) {
    TrackingCost c;
    c.reference = p.nominal_controls();
    return c;
  }

  [[nodiscard]] double value(std::span<const double> z, Controls u) const {
    const std::size_t n = z.size() / 2;
    const double eb = z[n] - x_bottom_setpoint;
    const double et = z[2 * n - 1] - x_top_setpoint;
    const double dl = u.L_T - reference.L_T;
    const double dv = u.V_B - reference.V_B;
    return eb * eb + et * et + move_weight * (dv * dv + dl * dl);
  }

  void accumulate_gradient(std::span<const double> z, Controls u, double weight, std::span<double> z_bar,
                           Controls& u_bar) const {
    const std::size_t n = z.size() / 2;
    z_bar[n] += weight * 2.0 * (z[n] - x_bottom_setpoint);
    z_bar[2 * n - 1] += weight * 2.0 * (z[2 * n - 1] - x_top_setpoint);
    u_bar.L_T += weight * 2.0 * move_weight * (u.L_T - reference.L_T);
    u_bar.V_B += weight * 2.0 * move_weight * (u.V_B - reference.V_B);
  }
};

template <class C>
concept StageCost = requires(const C& c, std::span<const double> z, Controls u, double w, std::span<double> zb,
                             Controls& ub) {
  { c.value(z, u) } -> std::convertible_to<double>;
  c.accumulate_gradient(z, u, w, zb, ub);
};

/// Stage cost pinned to a constant. Used to check the quadrature in isolation.
struct ConstantCost {
  double level = 1.0;
  [[nodiscard]] double value(std::span<const double>, Controls) const { return level; }
  void accumulate_gradient(std::span<const double>, Controls, double, std::span<double>, Controls&) const {}
};

/// Holds controls fixed; no parameters.
struct ConstantFeedback {
  static constexpr bool continuous = true;
  Controls u;
  Controls controls(std::span<const double>, std::size_t) const { return u; }
  void controls_vjp(std::span<const double>, std::size_t, Controls, std::span<double>, std::span<double>) const {}
  [[nodiscard]] std::size_t param_count() const { return 0; }
};

/// Neural policy on noisy measurements of the state. The noise vector is a
/// constant bias over the trajectory and affects only the controller input.
class PolicyFeedback {
 public:
  static constexpr bool continuous = true;

  PolicyFeedback(const ColumnParams& column, const PolicyParams& policy, FeedConditions feed,
                 std::span<const double> eta)
      : column_(&column), policy_(&policy), ws_(policy.spec()), eta_(eta.begin(), eta.end()) {
    const MeasurementLayout lay = measurement_layout(column);
    if (policy.spec().measurement_size != lay.size()) throw ShapeError("PolicyFeedback: policy/column size mismatch");
    if (eta_.empty()) eta_.assign(lay.size(), 0.0);
    if (eta_.size() != lay.size()) throw ShapeError("PolicyFeedback: noise vector has wrong length");
    selected_.resize(policy.spec().input_count());
    selected_bar_.resize(policy.spec().input_count());
    set_feed(feed);
  }

  void set_feed(const FeedConditions& feed) {
    feed_ = feed;
    refresh_constants();
  }
  void set_noise(std::span<const double> eta) {
    if (eta.size() != eta_.size()) throw ShapeError("PolicyFeedback: noise vector has wrong length");
    std::copy(eta.begin(), eta.end(), eta_.begin());
    refresh_constants();
  }
  [[nodiscard]] const FeedConditions& feed() const { return feed_; }

  Controls controls(std::span<const double> z, std::size_t /*step*/) {
    fill_selected(z);
    return forward_selected(*policy_, selected_, ws_);
  }

  void controls_vjp(std::span<const double> z, std::size_t step, Controls u_bar, std::span<double> z_bar,
                    std::span<double> param_bar) {
    controls(z, step);
    forward_selected_vjp(*policy_, ws_, u_bar, param_bar, selected_bar_);
    const std::size_t n = column_->stages();
    const MeasurementLayout lay{n};
    const auto& inputs = policy_->spec().inputs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const std::size_t slot = inputs[i];
      if (slot < n) {
        z_bar[n + slot] += selected_bar_[i] * (column_->T_bL - column_->T_bH) / column_->boiling_span();
      } else if (slot == lay.reboiler_holdup()) {
        z_bar[0] += selected_bar_[i];
      } else if (slot == lay.condenser_holdup()) {
        z_bar[n - 1] += selected_bar_[i];
      }
    }
  }

  [[nodiscard]] std::size_t param_count() const { return policy_->size(); }

 private:
  void refresh_constants() {
    const MeasurementLayout lay = measurement_layout(*column_);
    const double span = column_->boiling_span();
    const auto& inputs = policy_->spec().inputs;
    constants_.assign(inputs.size(), 0.0);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const std::size_t slot = inputs[i];
      if (slot == lay.feed_rate()) {
        constants_[i] = feed_.F + eta_[slot];
      } else if (slot == lay.feed_temperature()) {
        const double T = feed_.zF * column_->T_bL + (1.0 - feed_.zF) * column_->T_bH + eta_[slot];
        constants_[i] = (T - column_->T_bL) / span;
      } else if (slot == lay.feed_liquid_fraction()) {
        constants_[i] = feed_.qF + eta_[slot];
      }
    }
  }

  void fill_selected(std::span<const double> z) {
    const std::size_t n = column_->stages();
    const MeasurementLayout lay{n};
    const double span = column_->boiling_span();
    const auto& inputs = policy_->spec().inputs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const std::size_t slot = inputs[i];
      if (slot < n) {
        const double x = z[n + slot];
        const double T = x * column_->T_bL + (1.0 - x) * column_->T_bH + eta_[slot];
        selected_[i] = (T - column_->T_bL) / span;
      } else if (slot == lay.reboiler_holdup()) {
        selected_[i] = z[0] + eta_[slot];
      } else if (slot == lay.condenser_holdup()) {
        selected_[i] = z[n - 1] + eta_[slot];
      } else {
        selected_[i] = constants_[i];
      }
    }
  }

  const ColumnParams* column_;
  const PolicyParams* policy_;
  PolicyWorkspace ws_;
  FeedConditions feed_;
  std::vector<double> eta_;
  std::vector<double> constants_;
  std::vector<double> selected_;
  std::vector<double> selected_bar_;
};

struct Trajectory {
  double h = 0.0;
  std::size_t stages = 0;
  std::vector<double> t;
  std::vector<double> states;  ///< (points x 2*stages), row-major
  std::vector<Controls> controls;
  std::vector<double> stage_cost;
  std::vector<FeedConditions> feed;

  [[nodiscard]] std::size_t points() const { return t.size(); }
  [[nodiscard]] std::span<const double> state(std::size_t k) const {
    return {states.data() + k * 2 * stages, 2 * stages};
  }

  void reserve(std::size_t pts, std::size_t n) {
    stages = n;
    t.reserve(pts);
    states.reserve(pts * 2 * n);
    controls.reserve(pts);
    stage_cost.reserve(pts);
    feed.reserve(pts);
  }
  void push(double time, std::span<const double> z, Controls u, double cost, const FeedConditions& f) {
    t.push_back(time);
    states.insert(states.end(), z.begin(), z.end());
    controls.push_back(u);
    stage_cost.push_back(cost);
    feed.push_back(f);
  }
};

struct CostSample {
  ColumnState z0;
  FeedConditions feed;
  std::vector<double> eta;  ///< constant measurement bias; empty means zero
  double weight = 1.0;
};

namespace detail {

inline Controls apply_gain(Controls u, const std::array<double, 2>& g) { return {g[0] * u.L_T, g[1] * u.V_B}; }

/// Scratch buffers for one closed-loop RK4 step and its adjoint.
struct Rk4Scratch {
  explicit Rk4Scratch(std::size_t n) : k1(n), k2(n), k3(n), k4(n), s2(n), s3(n), s4(n), kb(n), sb(n), kb1(n), kb2(n),
                                       kb3(n) {}
  std::vector<double> k1, k2, k3, k4, s2, s3, s4, kb, sb, kb1, kb2, kb3;
  Controls u1{}, u2{}, u3{}, u4{};
};

/// Classical RK4 combination. `field(stage, y, dy)` evaluates the vector
/// field for sub-stage 0..3; the stage states are left in the scratch.
template <class Field>
void rk4_kernel(Field&& field, std::span<const double> z, double h, std::span<double> next, Rk4Scratch& s) {
  const std::size_t n = z.size();
  field(0, z, std::span<double>(s.k1));
  for (std::size_t i = 0; i < n; ++i) s.s2[i] = z[i] + 0.5 * h * s.k1[i];
  field(1, std::span<const double>(s.s2), std::span<double>(s.k2));
  for (std::size_t i = 0; i < n; ++i) s.s3[i] = z[i] + 0.5 * h * s.k2[i];
  field(2, std::span<const double>(s.s3), std::span<double>(s.k3));
  for (std::size_t i = 0; i < n; ++i) s.s4[i] = z[i] + h * s.k3[i];
  field(3, std::span<const double>(s.s4), std::span<double>(s.k4));
  for (std::size_t i = 0; i < n; ++i) {
    next[i] = z[i] + h / 6.0 * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
  }
}

/// One closed-loop RK4 step. Returns the commanded controls at the step's
/// initial state.
template <FeedbackLaw Fb>
Controls rk4_step(const ColumnParams& p, std::span<const double> z, Fb& fb, const FeedConditions& feed,
                  std::size_t step, double h, const std::array<double, 2>& gain, std::span<double> next,
                  Rk4Scratch& s, const Controls* u_at_z = nullptr) {
  Controls* us[4] = {&s.u1, &s.u2, &s.u3, &s.u4};
  rk4_kernel(
      [&](int stage, std::span<const double> y, std::span<double> dy) {
        Controls& u = *us[stage];
        u = (stage == 0 && u_at_z != nullptr) ? *u_at_z : fb.controls(y, step);
        derivatives(p, y, apply_gain(u, gain), feed, dy);
      },
      z, h, next, s);
  return s.u1;
}

/// Adjoint of the closed-loop field at state `st`: given the adjoint `kbar` of
/// f(st, u(st)) and an extra adjoint `u_extra` on the applied controls, adds
/// the state adjoint into `z_bar` and parameter adjoint into `p_bar`.
template <FeedbackLaw Fb>
void field_vjp(const ColumnParams& p, std::span<const double> st, Controls u_cmd, Fb& fb, const FeedConditions& feed,
               std::size_t step, const std::array<double, 2>& gain, std::span<const double> kbar, Controls u_extra,
               std::span<double> z_bar, std::span<double> p_bar) {
  Controls ub = u_extra;
  derivatives_vjp(p, st, apply_gain(u_cmd, gain), feed, kbar, z_bar, ub);
  const Controls ub_cmd{gain[0] * ub.L_T, gain[1] * ub.V_B};
  if (ub_cmd.L_T != 0.0 || ub_cmd.V_B != 0.0) fb.controls_vjp(st, step, ub_cmd, z_bar, p_bar);
}

inline void check_tape(const SimConfig& cfg, std::size_t steps, std::size_t state_size) {
  const std::size_t K = std::max<std::size_t>(1, cfg.checkpoint_interval);
  const std::size_t tape = (steps / K + 2) * state_size + (K + 1) * state_size;
  if (tape > cfg.max_tape_doubles) {
    throw Error("cost_gradient: adjoint tape of " + std::to_string(tape) + " doubles exceeds the configured cap");
  }
}

}  // namespace detail

/// One RK4 step of an arbitrary autonomous system, field(y, dy).
template <class Field>
std::vector<double> rk4_step(Field&& field, std::span<const double> z, double h) {
  detail::Rk4Scratch s(z.size());
  std::vector<double> next(z.size());
  detail::rk4_kernel([&](int, std::span<const double> y, std::span<double> dy) { field(y, dy); }, z, h, next, s);
  return next;
}

/// One RK4 step of the closed loop dz/dt = f(z, kappa(z)).
template <FeedbackLaw Fb>
ColumnState step_rk4(const ColumnParams& p, const ColumnState& z, Fb& fb, const FeedConditions& feed, double h,
                     std::size_t step = 0, std::array<double, 2> gain = {1.0, 1.0}) {
  ColumnState next(z.stages());
  detail::Rk4Scratch s(z.flat().size());
  detail::rk4_step(p, z.flat(), fb, feed, step, h, gain, next.flat(), s);
  return next;
}

/// Forward closed-loop simulation. Returns the trapezoid cost; optionally
/// records the full trajectory.
template <FeedbackLaw Fb, StageCost Cost = TrackingCost>
double simulate_cost(const ColumnParams& p, std::span<const double> z0, const FeedConditions& feed, Fb& fb,
                     const SimConfig& cfg, const Cost& cost, Trajectory* record = nullptr) {
  const std::size_t S = cfg.steps();
  const std::size_t n = z0.size();
  if (n != p.state_size()) throw ShapeError("simulate: initial state has wrong length");
  const double h = cfg.h;
  std::vector<double> z(z0.begin(), z0.end()), next(n);
  detail::Rk4Scratch s(n);
  if (record != nullptr) {
    record->h = h;
    record->reserve(S + 1, p.stages());
  }
  double J = 0.0;
  Controls u = fb.controls(z, 0);
  double l_left = cost.value(z, detail::apply_gain(u, cfg.input_gain));
  for (std::size_t k = 0; k < S; ++k) {
    if (record != nullptr) record->push(static_cast<double>(k) * h, z, detail::apply_gain(u, cfg.input_gain), l_left, feed);
    detail::rk4_step(p, z, fb, feed, k, h, cfg.input_gain, next, s, &u);
    double l_right;
    Controls u_next;
    if constexpr (Fb::continuous) {
      u_next = fb.controls(next, k + 1);
      l_right = cost.value(next, detail::apply_gain(u_next, cfg.input_gain));
      J += 0.5 * h * (l_left + l_right);
      l_left = l_right;
    } else {
      l_right = cost.value(next, detail::apply_gain(fb.controls(next, k), cfg.input_gain));
      J += 0.5 * h * (l_left + l_right);
      if (k + 1 < S) {
        u_next = fb.controls(next, k + 1);
        l_left = cost.value(next, detail::apply_gain(u_next, cfg.input_gain));
      } else {
        u_next = fb.controls(next, k);
        l_left = l_right;
      }
    }
    z.swap(next);
    u = u_next;
  }
  if (record != nullptr) record->push(static_cast<double>(S) * h, z, detail::apply_gain(u, cfg.input_gain), l_left, feed);
  return J;
}

/// Cost and its exact gradient with respect to the feedback parameters, by a
/// checkpointed reverse sweep over the recorded RK4 steps. `grad` is
/// overwritten. Optionally also returns the adjoint with respect to z0.
template <FeedbackLaw Fb, StageCost Cost = TrackingCost>
double simulate_cost_gradient(const ColumnParams& p, std::span<const double> z0, const FeedConditions& feed, Fb& fb,
                              const SimConfig& cfg, const Cost& cost, std::span<double> grad,
                              std::span<double> z0_bar = {}) {
  const std::size_t S = cfg.steps();
  const std::size_t n = z0.size();
  if (n != p.state_size()) throw ShapeError("cost_gradient: initial state has wrong length");
  if (grad.size() != fb.param_count()) throw ShapeError("cost_gradient: gradient has wrong length");
  std::fill(grad.begin(), grad.end(), 0.0);
  if (S == 0) {
    if (!z0_bar.empty()) std::fill(z0_bar.begin(), z0_bar.end(), 0.0);
    return 0.0;
  }
  detail::check_tape(cfg, S, n);
  const std::size_t K = std::max<std::size_t>(1, cfg.checkpoint_interval);
  const double h = cfg.h;
  const auto& gain = cfg.input_gain;

  // Forward sweep with checkpoints every K steps.
  std::vector<double> checkpoints;
  checkpoints.reserve((S / K + 1) * n);
  const double J = [&] {
    std::vector<double> z(z0.begin(), z0.end()), next(n);
    detail::Rk4Scratch s(n);
    double acc = 0.0;
    Controls u = fb.controls(z, 0);
    double l_left = cost.value(z, detail::apply_gain(u, gain));
    for (std::size_t k = 0; k < S; ++k) {
      if (k % K == 0) checkpoints.insert(checkpoints.end(), z.begin(), z.end());
      detail::rk4_step(p, z, fb, feed, k, h, gain, next, s, &u);
      Controls u_next;
      if constexpr (Fb::continuous) {
        u_next = fb.controls(next, k + 1);
        const double l_right = cost.value(next, detail::apply_gain(u_next, gain));
        acc += 0.5 * h * (l_left + l_right);
        l_left = l_right;
      } else {
        const double l_right = cost.value(next, detail::apply_gain(fb.controls(next, k), gain));
        acc += 0.5 * h * (l_left + l_right);
        u_next = fb.controls(next, std::min(k + 1, S - 1));
        l_left = cost.value(next, detail::apply_gain(u_next, gain));
      }
      z.swap(next);
      u = u_next;
    }
    checkpoints.insert(checkpoints.end(), z.begin(), z.end());  // z_S
    return acc;
  }();

  // Reverse sweep.
  std::vector<double> a(n, 0.0);  // adjoint of z_{k+1}, becomes adjoint of z_k
  std::vector<double> a_new(n);
  std::vector<double> seg((K + 1) * n);
  detail::Rk4Scratch s(n);
  const std::size_t segments = (S + K - 1) / K;
  {
    // Right end of the last step at z_S.
    std::span<const double> zS(checkpoints.data() + segments * n, n);
    const Controls uS = fb.controls(zS, S - 1);
    Controls ub{};
    cost.accumulate_gradient(zS, detail::apply_gain(uS, gain), 0.5 * h, a, ub);
    const Controls ub_cmd{gain[0] * ub.L_T, gain[1] * ub.V_B};
    fb.controls_vjp(zS, S - 1, ub_cmd, a, grad);
  }
  for (std::size_t sg = segments; sg-- > 0;) {
    const std::size_t k0 = sg * K;
    const std::size_t k1 = std::min(S, k0 + K);
    std::copy_n(checkpoints.begin() + static_cast<std::ptrdiff_t>(sg * n), n, seg.begin());
    for (std::size_t k = k0; k + 1 < k1; ++k) {
      std::span<const double> zk(seg.data() + (k - k0) * n, n);
      std::span<double> zn(seg.data() + (k - k0 + 1) * n, n);
      detail::rk4_step(p, zk, fb, feed, k, h, gain, zn, s);
    }
    for (std::size_t k = k1; k-- > k0;) {
      std::span<const double> zk(seg.data() + (k - k0) * n, n);
      // Recompute the stage states of step k.
      std::span<double> scratch_next(a_new);
      detail::rk4_step(p, zk, fb, feed, k, h, gain, scratch_next, s);

      std::copy(a.begin(), a.end(), a_new.begin());
      for (std::size_t i = 0; i < n; ++i) {
        s.kb1[i] = h / 6.0 * a[i];
        s.kb2[i] = h / 3.0 * a[i];
        s.kb3[i] = h / 3.0 * a[i];
        s.kb[i] = h / 6.0 * a[i];  // k4 adjoint
      }
      // Stage 4: s4 = z + h k3.
      std::fill(s.sb.begin(), s.sb.end(), 0.0);
      detail::field_vjp(p, s.s4, s.u4, fb, feed, k, gain, s.kb, Controls{}, s.sb, grad);
      for (std::size_t i = 0; i < n; ++i) {
        a_new[i] += s.sb[i];
        s.kb3[i] += h * s.sb[i];
      }
      // Stage 3: s3 = z + h/2 k2.
      std::fill(s.sb.begin(), s.sb.end(), 0.0);
      detail::field_vjp(p, s.s3, s.u3, fb, feed, k, gain, s.kb3, Controls{}, s.sb, grad);
      for (std::size_t i = 0; i < n; ++i) {
        a_new[i] += s.sb[i];
        s.kb2[i] += 0.5 * h * s.sb[i];
      }
      // Stage 2: s2 = z + h/2 k1.
      std::fill(s.sb.begin(), s.sb.end(), 0.0);
      detail::field_vjp(p, s.s2, s.u2, fb, feed, k, gain, s.kb2, Controls{}, s.sb, grad);
      for (std::size_t i = 0; i < n; ++i) {
        a_new[i] += s.sb[i];
        s.kb1[i] += 0.5 * h * s.sb[i];
      }
      // Stage 1 at z_k, merged with the cost terms evaluated there.
      const double w = (Fb::continuous && k > 0) ? h : 0.5 * h;
      Controls ub{};
      std::fill(s.sb.begin(), s.sb.end(), 0.0);
      cost.accumulate_gradient(zk, detail::apply_gain(s.u1, gain), w, s.sb, ub);
      detail::field_vjp(p, zk, s.u1, fb, feed, k, gain, s.kb1, ub, s.sb, grad);
      for (std::size_t i = 0; i < n; ++i) a_new[i] += s.sb[i];
      if constexpr (!Fb::continuous) {
        if (k > 0) {
          // Right end of step k-1 uses that step's controls.
          const Controls u_prev = fb.controls(zk, k - 1);
          Controls ubp{};
          cost.accumulate_gradient(zk, detail::apply_gain(u_prev, gain), 0.5 * h, a_new, ubp);
          const Controls ub_cmd{gain[0] * ubp.L_T, gain[1] * ubp.V_B};
          fb.controls_vjp(zk, k - 1, ub_cmd, a_new, grad);
        }
      }
      a.swap(a_new);
    }
  }
  if (!z0_bar.empty()) std::copy(a.begin(), a.end(), z0_bar.begin());
  return J;
}

// --- policy-level entry points ---------------------------------------------

struct RolloutResult {
  Trajectory trajectory;
  double cost = 0.0;
};

inline RolloutResult rollout(const CostSample& sample, const PolicyParams& policy, const SimConfig& cfg,
                             const ColumnParams& p) {
  PolicyFeedback fb(p, policy, sample.feed, sample.eta);
  RolloutResult r;
  r.cost = simulate_cost(p, sample.z0.flat(), sample.feed, fb, cfg, TrackingCost::for_column(p), &r.trajectory);
  return r;
}

struct CostGradient {
  double cost = 0.0;
  std::vector<double> gradient;
};

inline CostGradient cost_gradient(const CostSample& sample, const PolicyParams& policy, const SimConfig& cfg,
                                  const ColumnParams& p) {
  PolicyFeedback fb(p, policy, sample.feed, sample.eta);
  CostGradient r;
  r.gradient.assign(policy.size(), 0.0);
  r.cost = simulate_cost_gradient(p, sample.z0.flat(), sample.feed, fb, cfg, TrackingCost::for_column(p), r.gradient);
  return r;
}

/// Error from one sample of a batch, carrying its index.
class SampleError : public Error {
 public:
  SampleError(std::size_t index, const std::string& what)
      : Error("sample " + std::to_string(index) + ": " + what), index_(index) {}
  [[nodiscard]] std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

/// Weighted sum of per-sample costs and gradients. Samples are evaluated
/// independently (possibly in parallel) and reduced in sample order.
inline CostGradient batch_cost_gradient(std::span<const CostSample> samples, const PolicyParams& policy,
                                        const SimConfig& cfg, const ColumnParams& p, std::size_t workers = 1) {
  if (samples.empty()) throw ConfigError("batch_cost_gradient: need at least one sample");
  std::vector<CostGradient> parts(samples.size());
  parallel_for(samples.size(), workers, [&](std::size_t i) {
    try {
      parts[i] = cost_gradient(samples[i], policy, cfg, p);
    } catch (const std::exception& e) {
      throw SampleError(i, e.what());
    }
  });
  CostGradient total;
  total.gradient.assign(policy.size(), 0.0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double w = samples[i].weight;
    total.cost += w * parts[i].cost;
    for (std::size_t j = 0; j < total.gradient.size(); ++j) total.gradient[j] += w * parts[i].gradient[j];
  }
  return total;
}

}  // namespace colflux
