#pragma once

// Binary distillation column in LV configuration: stage balances, constitutive
// relations, level P-controllers, measurements and measurement noise.
//
// Stages are numbered 1..N_T from the reboiler (1) to the condenser (N_T) in
// all user-facing names; arrays are 0-based, so stage i lives at index i-1.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "colflux/errors.hpp"

namespace colflux {

struct Controls {
  double L_T = 0.0;  ///< reflux [kmol/min]
  double V_B = 0.0;  ///< boilup [kmol/min]

  friend bool operator==(const Controls&, const Controls&) = default;
};

struct FeedConditions {
  double F = 1.0;   ///< feed rate [kmol/min]
  double zF = 0.5;  ///< light-component feed mole fraction
  double qF = 1.0;  ///< feed liquid fraction

  friend bool operator==(const FeedConditions&, const FeedConditions&) = default;
};

struct ColumnParams {
  int N_T = 25;
  int N_F = 13;
  double F0 = 1.0;
  double zF0 = 0.5;
  double qF0 = 1.0;
  double alpha = 1.75;
  double tau_L = 0.063;
  double lambda_K2 = 0.0;
  double M0 = 0.5;
  double L0_below = 3.564;  ///< nominal tray liquid flow for stages i <= N_F
  double L0_above = 2.564;  ///< nominal tray liquid flow for stages i > N_F
  double V0 = 3.065;
  double T_bL = 341.9;
  double T_bH = 357.4;
  double K_D = 10.0;
  double K_B = 10.0;
  double D0 = 0.5;
  double B0 = 0.5;
  std::array<double, 2> u_max{2.75, 3.25};

  [[nodiscard]] std::size_t stages() const { return static_cast<std::size_t>(N_T); }
  [[nodiscard]] std::size_t state_size() const { return 2 * stages(); }
  [[nodiscard]] double boiling_span() const { return T_bH - T_bL; }

  [[nodiscard]] FeedConditions nominal_feed() const { return {F0, zF0, qF0}; }

  /// Reference controls anchoring the input-move penalty.
  [[nodiscard]] Controls nominal_controls() const { return {L0_above, V0}; }

  /// Nominal liquid flow leaving stage `index` (0-based).
  [[nodiscard]] double nominal_liquid(std::size_t index) const {
    return static_cast<int>(index) + 1 <= N_F ? L0_below : L0_above;
  }

  void validate() const {
    if (N_T < 3) throw ConfigError("ColumnParams: N_T must be at least 3");
    if (!(N_F > 1 && N_F < N_T)) throw ConfigError("ColumnParams: need 1 < N_F < N_T");
    if (!(alpha > 1.0)) throw ConfigError("ColumnParams: alpha must exceed 1");
    if (!(T_bH > T_bL)) throw ConfigError("ColumnParams: T_bH must exceed T_bL");
    for (double v : {F0, tau_L, M0, L0_below, L0_above, V0, D0, B0}) {
      if (!(v > 0.0)) throw ConfigError("ColumnParams: flows, holdups and tau_L must be positive");
    }
    if (!(u_max[0] > 0.0 && u_max[1] > 0.0)) throw ConfigError("ColumnParams: u_max must be positive");
    if (K_D < 0.0 || K_B < 0.0) throw ConfigError("ColumnParams: level gains must be non-negative");
  }
};

/// Liquid holdups followed by liquid light-component fractions, one per stage.
class ColumnState {
 public:
  ColumnState() = default;
  explicit ColumnState(std::size_t stages) : data_(2 * stages, 0.0) {}
  ColumnState(std::span<const double> holdups, std::span<const double> fractions) {
    if (holdups.size() != fractions.size()) throw ShapeError("ColumnState: holdup/fraction length mismatch");
    data_.reserve(2 * holdups.size());
    data_.insert(data_.end(), holdups.begin(), holdups.end());
    data_.insert(data_.end(), fractions.begin(), fractions.end());
  }
  static ColumnState from_flat(std::span<const double> z) {
    if (z.size() % 2 != 0) throw ShapeError("ColumnState: flat state must have even length");
    ColumnState s;
    s.data_.assign(z.begin(), z.end());
    return s;
  }
  static ColumnState uniform(std::size_t stages, double holdup, double fraction) {
    ColumnState s(stages);
    std::fill_n(s.data_.begin(), stages, holdup);
    std::fill(s.data_.begin() + static_cast<std::ptrdiff_t>(stages), s.data_.end(), fraction);
    return s;
  }

  [[nodiscard]] std::size_t stages() const { return data_.size() / 2; }
  [[nodiscard]] std::span<double> holdups() { return {data_.data(), stages()}; }
  [[nodiscard]] std::span<const double> holdups() const { return {data_.data(), stages()}; }
  [[nodiscard]] std::span<double> fractions() { return {data_.data() + stages(), stages()}; }
  [[nodiscard]] std::span<const double> fractions() const { return {data_.data() + stages(), stages()}; }
  [[nodiscard]] std::span<double> flat() { return data_; }
  [[nodiscard]] std::span<const double> flat() const { return data_; }

  [[nodiscard]] double M(std::size_t i) const { return data_[i]; }
  [[nodiscard]] double x(std::size_t i) const { return data_[stages() + i]; }

  friend bool operator==(const ColumnState&, const ColumnState&) = default;

 private:
  std::vector<double> data_;
};

inline constexpr double kFractionTolerance = 1e-12;
inline constexpr double kMinHoldup = 1e-6;

/// Constant-relative-volatility equilibrium, no domain check.
inline double vle_unchecked(double x, double alpha) { return alpha * x / (1.0 + (alpha - 1.0) * x); }

inline double vle_derivative(double x, double alpha) {
  const double den = 1.0 + (alpha - 1.0) * x;
  return alpha / (den * den);
}

inline double vle(double x, double alpha) {
  if (!(x >= -kFractionTolerance && x <= 1.0 + kFractionTolerance)) {
    throw DomainError("vle: mole fraction " + std::to_string(x) + " outside [0, 1]");
  }
  if (!(alpha > 0.0)) throw DomainError("vle: relative volatility must be positive");
  return vle_unchecked(x, alpha);
}

inline double stage_temperature(double x, const ColumnParams& p) {
  if (!(x >= -kFractionTolerance && x <= 1.0 + kFractionTolerance)) {
    throw DomainError("stage_temperature: mole fraction " + std::to_string(x) + " outside [0, 1]");
  }
  return x * p.T_bL + (1.0 - x) * p.T_bH;
}

/// Inverse of the linear temperature map; no clamping.
inline double fraction_from_temperature(double T, const ColumnParams& p) { return (p.T_bH - T) / p.boiling_span(); }

/// Liquid and vapour flows leaving each stage plus the two product flows.
struct InternalFlows {
  std::vector<double> L;  ///< L[i] = liquid leaving stage i+1 (L[0] unused: reboiler outflow is B)
  std::vector<double> V;  ///< V[i] = vapour leaving stage i+1 (V[N_T-1] = V[N_T-2])
  double D = 0.0;
  double B = 0.0;
};

namespace detail {

inline void check_sizes(const ColumnParams& p, std::span<const double> z) {
  if (z.size() != p.state_size()) throw ShapeError("column state has wrong length for ColumnParams::N_T");
}

inline double vapour_leaving(const ColumnParams& p, std::size_t k, double V_B, const FeedConditions& feed) {
  // Constant molar overflow; the flashed part of the feed joins at the feed stage.
  const std::size_t feed_index = static_cast<std::size_t>(p.N_F) - 1;
  return k >= feed_index ? V_B + (1.0 - feed.qF) * feed.F : V_B;
}

}  // namespace detail

inline InternalFlows internal_flows(const ColumnParams& p, std::span<const double> z, Controls u,
                                    const FeedConditions& feed) {
  detail::check_sizes(p, z);
  const std::size_t n = p.stages();
  InternalFlows f;
  f.L.assign(n, 0.0);
  f.V.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) f.V[k] = detail::vapour_leaving(p, k, u.V_B, feed);
  f.V[n - 1] = f.V[n - 2];
  for (std::size_t k = 1; k + 1 < n; ++k) {
    f.L[k] = p.nominal_liquid(k) + (z[k] - p.M0) / p.tau_L + p.lambda_K2 * (f.V[k - 1] - p.V0);
  }
  f.L[n - 1] = u.L_T;
  f.D = p.D0 + p.K_D * (z[n - 1] - p.M0);
  f.B = p.B0 + p.K_B * (z[0] - p.M0);
  return f;
}

inline InternalFlows internal_flows(const ColumnParams& p, const ColumnState& s, Controls u,
                                    const FeedConditions& feed) {
  return internal_flows(p, s.flat(), u, feed);
}

/// Right-hand side of the column ODE. `dz` receives [dM/dt, dx/dt].
inline void derivatives(const ColumnParams& p, std::span<const double> z, Controls u, const FeedConditions& feed,
                        std::span<double> dz) {
  detail::check_sizes(p, z);
  if (dz.size() != z.size()) throw ShapeError("derivatives: output span has wrong length");
  const std::size_t n = p.stages();
  const std::size_t nf = static_cast<std::size_t>(p.N_F) - 1;
  const double* M = z.data();
  const double* x = z.data() + n;
  double* dM = dz.data();
  double* dx = dz.data() + n;
  for (std::size_t k = 0; k < n; ++k) {
    if (!(M[k] >= kMinHoldup)) {
      throw SingularityError("derivatives: holdup on stage " + std::to_string(k + 1) + " below minimum");
    }
  }

  const double V_lo = u.V_B;
  const double V_hi = u.V_B + (1.0 - feed.qF) * feed.F;
  auto V = [&](std::size_t k) { return k >= nf ? V_hi : V_lo; };
  auto L = [&](std::size_t k) {
    if (k == n - 1) return u.L_T;
    const double vb = k >= 1 ? V(k - 1) : V_lo;
    return p.nominal_liquid(k) + (M[k] - p.M0) / p.tau_L + p.lambda_K2 * (vb - p.V0);
  };
  const double D = p.D0 + p.K_D * (M[n - 1] - p.M0);
  const double B = p.B0 + p.K_B * (M[0] - p.M0);

  // Reboiler.
  {
    const double L2 = L(1);
    const double y1 = vle_unchecked(x[0], p.alpha);
    dM[0] = L2 - V_lo - B;
    dx[0] = (L2 * x[1] - V_lo * y1 - B * x[0] - x[0] * dM[0]) / M[0];
  }
  // Trays, including the feed stage.
  double L_k = L(1);
  double y_below = vle_unchecked(x[0], p.alpha);
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double L_above = L(k + 1);
    const double y_k = vle_unchecked(x[k], p.alpha);
    const double V_in = V(k - 1);
    const double V_out = V(k);
    const double F_k = k == nf ? feed.F : 0.0;
    dM[k] = L_above - L_k + V_in - V_out + F_k;
    const double component = L_above * x[k + 1] + V_in * y_below - L_k * x[k] - V_out * y_k + F_k * feed.zF;
    dx[k] = (component - x[k] * dM[k]) / M[k];
    L_k = L_above;
    y_below = y_k;
  }
  // Condenser.
  {
    const std::size_t c = n - 1;
    const double V_in = V(c - 1);
    dM[c] = -u.L_T + V_in - D;
    dx[c] = (V_in * y_below - u.L_T * x[c] - D * x[c] - x[c] * dM[c]) / M[c];
  }
}

inline ColumnState derivatives(const ColumnParams& p, const ColumnState& s, Controls u, const FeedConditions& feed) {
  ColumnState d(s.stages());
  derivatives(p, s.flat(), u, feed, d.flat());
  return d;
}

/// Vector-Jacobian product of `derivatives`: accumulates dz_bar^T * d(dz)/dz into
/// `z_bar` and dz_bar^T * d(dz)/du into `u_bar`.
inline void derivatives_vjp(const ColumnParams& p, std::span<const double> z, Controls u, const FeedConditions& feed,
                            std::span<const double> dz_bar, std::span<double> z_bar, Controls& u_bar) {
  const std::size_t n = p.stages();
  const std::size_t nf = static_cast<std::size_t>(p.N_F) - 1;
  const double* M = z.data();
  const double* x = z.data() + n;
  const double* aM = dz_bar.data();
  const double* ax = dz_bar.data() + n;
  double* gM = z_bar.data();
  double* gx = z_bar.data() + n;

  const double V_lo = u.V_B;
  const double V_hi = u.V_B + (1.0 - feed.qF) * feed.F;
  auto V = [&](std::size_t k) { return k >= nf ? V_hi : V_lo; };
  auto L = [&](std::size_t k) {
    if (k == n - 1) return u.L_T;
    const double vb = k >= 1 ? V(k - 1) : V_lo;
    return p.nominal_liquid(k) + (M[k] - p.M0) / p.tau_L + p.lambda_K2 * (vb - p.V0);
  };
  // Adjoints of the intermediate flows. L_bar[k] is the liquid leaving stage k,
  // V_bar[k] the vapour leaving stage k, y_bar[k] the equilibrium vapour fraction.
  thread_local std::vector<double> L_bar, V_bar, y_bar;
  L_bar.assign(n, 0.0);
  V_bar.assign(n, 0.0);
  y_bar.assign(n, 0.0);
  double D_bar = 0.0;
  double B_bar = 0.0;

  // Each balance has the form dx = G / M with
  //   G = Lin (x_in - x) + Vin (y_in - x) - Vout (y_out - x) + F (zF - x),
  // since outgoing liquid carries composition x and cancels.
  // Reboiler: Lin = L_2, Vout = V_1 (y_1), liquid out B.
  {
    const double L2 = L(1);
    const double y1 = vle_unchecked(x[0], p.alpha);
    const double G = L2 * (x[1] - x[0]) - V_lo * (y1 - x[0]);
    const double c = ax[0] / M[0];
    L_bar[1] += c * (x[1] - x[0]) + aM[0];
    V_bar[0] += -c * (y1 - x[0]) - aM[0];
    B_bar += -aM[0];
    gx[0] += c * (-L2 + V_lo);
    gx[1] += c * L2;
    y_bar[0] += -c * V_lo;
    gM[0] += -c * G / M[0];
  }
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double Lin = L(k + 1);
    const double Vin = V(k - 1);
    const double Vout = V(k);
    const double F_k = k == nf ? feed.F : 0.0;
    const double y_in = vle_unchecked(x[k - 1], p.alpha);
    const double y_out = vle_unchecked(x[k], p.alpha);
    const double G = Lin * (x[k + 1] - x[k]) + Vin * (y_in - x[k]) - Vout * (y_out - x[k]) + F_k * (feed.zF - x[k]);
    const double c = ax[k] / M[k];
    L_bar[k + 1] += c * (x[k + 1] - x[k]) + aM[k];
    L_bar[k] += -aM[k];
    V_bar[k - 1] += c * (y_in - x[k]) + aM[k];
    V_bar[k] += -c * (y_out - x[k]) - aM[k];
    gx[k] += c * (-Lin - Vin + Vout - F_k);
    gx[k + 1] += c * Lin;
    y_bar[k - 1] += c * Vin;
    y_bar[k] += -c * Vout;
    gM[k] += -c * G / M[k];
  }
  {
    const std::size_t k = n - 1;
    const double Vin = V(k - 1);
    const double y_in = vle_unchecked(x[k - 1], p.alpha);
    const double G = Vin * (y_in - x[k]);
    const double c = ax[k] / M[k];
    V_bar[k - 1] += c * (y_in - x[k]) + aM[k];
    L_bar[k] += -aM[k];
    D_bar += -aM[k];
    gx[k] += -c * Vin;
    y_bar[k - 1] += c * Vin;
    gM[k] += -c * G / M[k];
  }

  // Constitutive relations.
  for (std::size_t k = 1; k + 1 < n; ++k) {
    gM[k] += L_bar[k] / p.tau_L;
    V_bar[k - 1] += p.lambda_K2 * L_bar[k];
  }
  u_bar.L_T += L_bar[n - 1];
  gM[n - 1] += p.K_D * D_bar;
  gM[0] += p.K_B * B_bar;
  for (std::size_t k = 0; k < n; ++k) {
    u_bar.V_B += V_bar[k];
    gx[k] += y_bar[k] * vle_derivative(x[k], p.alpha);
  }
}

// --- measurements ----------------------------------------------------------

/// Slot layout of the candidate measurement vector
/// [T_1..T_N, F, T_F, q_F, M_1, M_N].
struct MeasurementLayout {
  std::size_t stages = 25;

  [[nodiscard]] std::size_t size() const { return stages + 5; }
  [[nodiscard]] std::size_t temperature(std::size_t stage_index) const { return stage_index; }
  [[nodiscard]] std::size_t feed_rate() const { return stages; }
  [[nodiscard]] std::size_t feed_temperature() const { return stages + 1; }
  [[nodiscard]] std::size_t feed_liquid_fraction() const { return stages + 2; }
  [[nodiscard]] std::size_t reboiler_holdup() const { return stages + 3; }
  [[nodiscard]] std::size_t condenser_holdup() const { return stages + 4; }
  [[nodiscard]] bool is_temperature(std::size_t slot) const { return slot < stages || slot == feed_temperature(); }

  /// Human-readable slot name, 1-based stage numbers ("T5", "F", "M1", ...).
  [[nodiscard]] std::string name(std::size_t slot) const {
    if (slot < stages) return "T" + std::to_string(slot + 1);
    if (slot == feed_rate()) return "F";
    if (slot == feed_temperature()) return "T_F";
    if (slot == feed_liquid_fraction()) return "q_F";
    if (slot == reboiler_holdup()) return "M1";
    if (slot == condenser_holdup()) return "M" + std::to_string(stages);
    throw DomainError("MeasurementLayout: slot out of range");
  }
};

inline MeasurementLayout measurement_layout(const ColumnParams& p) { return {p.stages()}; }

using MeasurementVector = std::vector<double>;

/// Noiseless measurement map.
inline void measure(const ColumnParams& p, std::span<const double> z, const FeedConditions& feed,
                    std::span<double> out) {
  const std::size_t n = p.stages();
  const MeasurementLayout lay{n};
  if (out.size() != lay.size()) throw ShapeError("measure: output has wrong length");
  for (std::size_t k = 0; k < n; ++k) out[k] = z[n + k] * p.T_bL + (1.0 - z[n + k]) * p.T_bH;
  out[lay.feed_rate()] = feed.F;
  out[lay.feed_temperature()] = feed.zF * p.T_bL + (1.0 - feed.zF) * p.T_bH;
  out[lay.feed_liquid_fraction()] = feed.qF;
  out[lay.reboiler_holdup()] = z[0];
  out[lay.condenser_holdup()] = z[n - 1];
}

inline MeasurementVector measure(const ColumnParams& p, const ColumnState& s, const FeedConditions& feed) {
  detail::check_sizes(p, s.flat());
  MeasurementVector m(measurement_layout(p).size());
  measure(p, s.flat(), feed, m);
  return m;
}

/// Per-class measurement noise: truncated normal with zero mean.
struct NoiseSpec {
  double temperature_sigma = 0.015 * (357.4 - 341.9);
  double temperature_bound = 0.775;
  double flow_sigma = 0.03;
  double flow_bound = 0.1;
  double fraction_sigma = 0.03;
  double fraction_bound = 0.1;
  double holdup_sigma = 0.03;
  double holdup_bound = 0.1;

  static NoiseSpec for_column(const ColumnParams& p) {
    NoiseSpec s;
    s.temperature_sigma = 0.015 * p.boiling_span();
    return s;
  }

  [[nodiscard]] double sigma(const MeasurementLayout& lay, std::size_t slot) const {
    if (lay.is_temperature(slot)) return temperature_sigma;
    if (slot == lay.feed_rate()) return flow_sigma;
    if (slot == lay.feed_liquid_fraction()) return fraction_sigma;
    return holdup_sigma;
  }
  [[nodiscard]] double bound(const MeasurementLayout& lay, std::size_t slot) const {
    if (lay.is_temperature(slot)) return temperature_bound;
    if (slot == lay.feed_rate()) return flow_bound;
    if (slot == lay.feed_liquid_fraction()) return fraction_bound;
    return holdup_bound;
  }

  void validate() const {
    for (double s : {temperature_sigma, flow_sigma, fraction_sigma, holdup_sigma}) {
      if (!(s > 0.0)) throw ConfigError("NoiseSpec: sigma must be positive");
    }
    for (double b : {temperature_bound, flow_bound, fraction_bound, holdup_bound}) {
      if (!(b > 0.0)) throw ConfigError("NoiseSpec: truncation bound must be positive");
    }
  }
};

inline constexpr double kNoiseBoundTolerance = 1e-12;

/// Throws DomainError if any coordinate of `eta` lies outside its truncation bound.
inline void check_noise(const NoiseSpec& spec, const MeasurementLayout& lay, std::span<const double> eta) {
  if (eta.size() != lay.size()) throw ShapeError("noise vector has wrong length");
  for (std::size_t i = 0; i < eta.size(); ++i) {
    if (!(std::abs(eta[i]) <= spec.bound(lay, i) + kNoiseBoundTolerance)) {
      throw DomainError("noise on " + lay.name(i) + " exceeds its truncation bound");
    }
  }
}

/// Additive noise; noisy values are not re-clamped.
inline MeasurementVector apply_noise(const MeasurementVector& meas, std::span<const double> eta, const NoiseSpec& spec,
                                     const MeasurementLayout& lay) {
  if (meas.size() != lay.size()) throw ShapeError("apply_noise: measurement has wrong length");
  check_noise(spec, lay, eta);
  MeasurementVector out(meas);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += eta[i];
  return out;
}

// --- steady state ----------------------------------------------------------

struct SteadyStateOptions {
  double tolerance = 1e-10;
  int max_newton_iterations = 200;
  double fallback_horizon = 2000.0;  ///< [min]
  double fallback_step = 0.005;      ///< [min]
};

namespace detail {

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double e : v) m = std::max(m, std::abs(e));
  return m;
}

inline Eigen::MatrixXd column_jacobian(const ColumnParams& p, std::span<const double> z, Controls u,
                                       const FeedConditions& feed) {
  const std::size_t n = z.size();
  Eigen::MatrixXd J(n, n);
  std::vector<double> seed(n, 0.0), row(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    std::fill(row.begin(), row.end(), 0.0);
    seed[r] = 1.0;
    Controls ub{};
    derivatives_vjp(p, z, u, feed, seed, row, ub);
    seed[r] = 0.0;
    for (std::size_t c = 0; c < n; ++c) J(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
  }
  return J;
}

/// Damped Newton; returns true on convergence. `z` is updated in place.
inline bool newton_polish(const ColumnParams& p, std::vector<double>& z, Controls u, const FeedConditions& feed,
                          const SteadyStateOptions& opt) {
  const std::size_t n = z.size();
  std::vector<double> f(n), trial(n), ft(n);
  auto residual = [&](std::span<const double> s, std::span<double> out) -> bool {
    for (std::size_t k = 0; k < n / 2; ++k) {
      if (!(s[k] >= kMinHoldup)) return false;
    }
    derivatives(p, s, u, feed, out);
    for (double v : out) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  };
  if (!residual(z, f)) return false;
  for (int it = 0; it < opt.max_newton_iterations; ++it) {
    const double norm = max_abs(f);
    if (norm < opt.tolerance) return true;
    const Eigen::MatrixXd J = column_jacobian(p, z, u, feed);
    const Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(n));
    const Eigen::VectorXd step = J.partialPivLu().solve(-rhs);
    if (!step.allFinite()) return false;
    double t = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = z[i] + t * step(static_cast<Eigen::Index>(i));
      if (residual(trial, ft) && max_abs(ft) < norm * (1.0 - 1e-4 * t)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // Full step anyway when already at round-off level.
      return max_abs(f) < opt.tolerance;
    }
    z = trial;
    f = ft;
  }
  return max_abs(f) < opt.tolerance;
}

inline void rk4_open_loop(const ColumnParams& p, std::vector<double>& z, Controls u, const FeedConditions& feed,
                          double h, std::size_t steps) {
  const std::size_t n = z.size();
  std::vector<double> k1(n), k2(n), k3(n), k4(n), s(n);
  for (std::size_t it = 0; it < steps; ++it) {
    derivatives(p, z, u, feed, k1);
    for (std::size_t i = 0; i < n; ++i) s[i] = z[i] + 0.5 * h * k1[i];
    derivatives(p, s, u, feed, k2);
    for (std::size_t i = 0; i < n; ++i) s[i] = z[i] + 0.5 * h * k2[i];
    derivatives(p, s, u, feed, k3);
    for (std::size_t i = 0; i < n; ++i) s[i] = z[i] + h * k3[i];
    derivatives(p, s, u, feed, k4);
    for (std::size_t i = 0; i < n; ++i) z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
}

}  // namespace detail

/// Steady state for constant controls and feed. Newton from an equimolar guess,
/// falling back to long-horizon open-loop integration followed by Newton polish.
inline ColumnState steady_state(const ColumnParams& p, Controls u, const FeedConditions& feed,
                                const SteadyStateOptions& opt = {}) {
  p.validate();
  const std::size_t n = p.stages();
  const ColumnState guess = ColumnState::uniform(n, p.M0, 0.5);
  std::vector<double> z(guess.flat().begin(), guess.flat().end());
  if (detail::newton_polish(p, z, u, feed, opt)) return ColumnState::from_flat(z);

  z.assign(guess.flat().begin(), guess.flat().end());
  const auto steps = static_cast<std::size_t>(std::llround(opt.fallback_horizon / opt.fallback_step));
  try {
    detail::rk4_open_loop(p, z, u, feed, opt.fallback_step, steps);
  } catch (const SingularityError&) {
    throw ConvergenceError("steady_state: fallback integration hit a vanishing holdup");
  }
  if (detail::newton_polish(p, z, u, feed, opt)) return ColumnState::from_flat(z);
  throw ConvergenceError("steady_state: Newton iteration did not converge");
}

inline ColumnState nominal_steady_state(const ColumnParams& p) {
  return steady_state(p, p.nominal_controls(), p.nominal_feed());
}

}  // namespace colflux
