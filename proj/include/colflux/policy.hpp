#pragma once

// Feed-forward neural control policy acting on (noisy) column measurements.
//
//   zeta  = H o normalize(y)[inputs]
//   h_1   = act(W_0 zeta + b_0), ..., h_k = act(W_{k-1} h_{k-1} + b_{k-1})
//   N     = 2 sigmoid(W_k h_k + b_k) - 1          in (-1, 1)
//   u     = 0.5 u_max o (1 + N)                   in (0, u_max)
//
// Parameters are stored flat as theta_bar = vec(H, W_0, b_0, ..., W_k, b_k),
// weights row-major (output x input).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iostream>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "colflux/column_model.hpp"
#include "colflux/errors.hpp"
#include "colflux/random.hpp"

namespace colflux {

enum class Activation { sigmoid, tanh };

inline std::string to_string(Activation a) { return a == Activation::sigmoid ? "sigmoid" : "tanh"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "tanh") return Activation::tanh;
  throw FormatError("unknown activation '" + s + "'");
}

inline double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

struct PolicySpec {
  std::vector<std::size_t> inputs;  ///< 0-based measurement slots
  std::vector<std::size_t> hidden;  ///< hidden layer widths
  std::vector<Activation> activations;
  std::array<double, 2> u_max{2.75, 3.25};
  std::size_t measurement_size = 30;

  [[nodiscard]] std::size_t input_count() const { return inputs.size(); }
  [[nodiscard]] std::size_t layer_count() const { return hidden.size() + 1; }
  [[nodiscard]] std::size_t fan_in(std::size_t layer) const { return layer == 0 ? inputs.size() : hidden[layer - 1]; }
  [[nodiscard]] std::size_t fan_out(std::size_t layer) const { return layer < hidden.size() ? hidden[layer] : 2; }

  void validate() const {
    if (hidden.empty()) throw ConfigError("PolicySpec: need at least one hidden layer");
    if (activations.size() != hidden.size()) throw ConfigError("PolicySpec: one activation per hidden layer");
    if (inputs.empty()) throw ConfigError("PolicySpec: no inputs");
    std::set<std::size_t> seen;
    for (std::size_t i : inputs) {
      if (i >= measurement_size) throw ConfigError("PolicySpec: input slot out of range");
      if (!seen.insert(i).second) throw ConfigError("PolicySpec: duplicate input slot");
    }
    for (std::size_t w : hidden) {
      if (w == 0) throw ConfigError("PolicySpec: zero-width layer");
    }
    if (!(u_max[0] > 0.0 && u_max[1] > 0.0)) throw ConfigError("PolicySpec: u_max must be positive");
  }

  friend bool operator==(const PolicySpec&, const PolicySpec&) = default;
};

/// Offsets of each block inside the flat parameter vector.
struct ParamLayout {
  std::size_t h_size = 0;
  std::vector<std::size_t> w_offset;
  std::vector<std::size_t> b_offset;
  std::size_t total = 0;

  ParamLayout() = default;
  explicit ParamLayout(const PolicySpec& spec) {
    h_size = spec.input_count();
    std::size_t off = h_size;
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
      w_offset.push_back(off);
      off += spec.fan_in(l) * spec.fan_out(l);
      b_offset.push_back(off);
      off += spec.fan_out(l);
    }
    total = off;
  }

  friend bool operator==(const ParamLayout&, const ParamLayout&) = default;
};

class PolicyParams {
 public:
  PolicyParams() = default;
  explicit PolicyParams(PolicySpec spec) : spec_(std::move(spec)), layout_(spec_) {
    spec_.validate();
    theta_.assign(layout_.total, 0.0);
    frozen_.assign(layout_.h_size, 0);
  }

  /// Rebuild from a flat vector; throws ShapeError when the length does not fit the spec.
  static PolicyParams unflatten(const PolicySpec& spec, std::span<const double> theta) {
    PolicyParams p(spec);
    if (theta.size() != p.layout_.total) throw ShapeError("PolicyParams: flat vector length does not match spec");
    std::copy(theta.begin(), theta.end(), p.theta_.begin());
    return p;
  }

  [[nodiscard]] const PolicySpec& spec() const { return spec_; }
  [[nodiscard]] const ParamLayout& layout() const { return layout_; }
  [[nodiscard]] std::size_t size() const { return theta_.size(); }

  [[nodiscard]] std::span<const double> flatten() const { return theta_; }
  [[nodiscard]] std::span<double> flat() { return theta_; }

  [[nodiscard]] std::span<double> H() { return {theta_.data(), layout_.h_size}; }
  [[nodiscard]] std::span<const double> H() const { return {theta_.data(), layout_.h_size}; }
  [[nodiscard]] std::span<double> W(std::size_t l) {
    return {theta_.data() + layout_.w_offset[l], spec_.fan_in(l) * spec_.fan_out(l)};
  }
  [[nodiscard]] std::span<const double> W(std::size_t l) const {
    return {theta_.data() + layout_.w_offset[l], spec_.fan_in(l) * spec_.fan_out(l)};
  }
  [[nodiscard]] std::span<double> b(std::size_t l) { return {theta_.data() + layout_.b_offset[l], spec_.fan_out(l)}; }
  [[nodiscard]] std::span<const double> b(std::size_t l) const {
    return {theta_.data() + layout_.b_offset[l], spec_.fan_out(l)};
  }

  /// Selection entries excluded from optimisation (held at their current value).
  [[nodiscard]] std::span<const std::uint8_t> frozen() const { return frozen_; }
  void freeze(std::size_t h_index) { frozen_.at(h_index) = 1; }

  /// Mask over the flat vector: 1 where the optimiser may move the coordinate.
  [[nodiscard]] std::vector<std::uint8_t> trainable_mask() const {
    std::vector<std::uint8_t> m(theta_.size(), 1);
    for (std::size_t i = 0; i < frozen_.size(); ++i) m[i] = frozen_[i] ? 0 : 1;
    return m;
  }

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;

 private:
  PolicySpec spec_;
  ParamLayout layout_;
  std::vector<double> theta_;
  std::vector<std::uint8_t> frozen_;
};

/// Scales temperatures (stages and feed) to [0, 1] between the boiling points;
/// flows, liquid fraction and holdups pass through unchanged.
inline void normalize_inputs(const ColumnParams& p, std::span<const double> meas, std::span<double> out) {
  const MeasurementLayout lay = measurement_layout(p);
  if (meas.size() != lay.size() || out.size() != lay.size()) throw ShapeError("normalize_inputs: wrong length");
  const double span = p.boiling_span();
  for (std::size_t i = 0; i < meas.size(); ++i) {
    out[i] = lay.is_temperature(i) ? (meas[i] - p.T_bL) / span : meas[i];
  }
}

inline std::vector<double> normalize_inputs(const ColumnParams& p, std::span<const double> meas) {
  std::vector<double> out(meas.size());
  normalize_inputs(p, meas, out);
  return out;
}

/// Reusable buffers for forward and reverse passes of one network.
class PolicyWorkspace {
 public:
  PolicyWorkspace() = default;
  explicit PolicyWorkspace(const PolicySpec& spec) { resize(spec); }

  void resize(const PolicySpec& spec) {
    const std::size_t L = spec.layer_count();
    act.resize(L + 1);
    pre.resize(L);
    grad.resize(L + 1);
    act[0].assign(spec.input_count(), 0.0);
    grad[0].assign(spec.input_count(), 0.0);
    for (std::size_t l = 0; l < L; ++l) {
      pre[l].assign(spec.fan_out(l), 0.0);
      act[l + 1].assign(spec.fan_out(l), 0.0);
      grad[l + 1].assign(spec.fan_out(l), 0.0);
    }
    selected.assign(spec.input_count(), 0.0);
  }

  std::vector<std::vector<double>> act;   // act[0] = zeta, act[l+1] = output of layer l
  std::vector<std::vector<double>> pre;   // pre-activations
  std::vector<std::vector<double>> grad;  // adjoints of act
  std::vector<double> selected;           // normalized selected measurements before H
};

namespace detail {

inline double activate(Activation a, double v) { return a == Activation::sigmoid ? sigmoid(v) : std::tanh(v); }

inline double activate_slope(Activation a, double out) {
  return a == Activation::sigmoid ? out * (1.0 - out) : 1.0 - out * out;
}

}  // namespace detail

/// Forward pass from the normalized selected measurements (before H).
inline Controls forward_selected(const PolicyParams& params, std::span<const double> selected, PolicyWorkspace& ws) {
  const PolicySpec& spec = params.spec();
  if (selected.size() != spec.input_count()) throw ShapeError("policy forward: input length does not match spec");
  const auto H = params.H();
  for (std::size_t i = 0; i < selected.size(); ++i) {
    ws.selected[i] = selected[i];
    ws.act[0][i] = H[i] * selected[i];
  }
  const std::size_t L = spec.layer_count();
  for (std::size_t l = 0; l < L; ++l) {
    const auto W = params.W(l);
    const auto b = params.b(l);
    const std::size_t in = spec.fan_in(l);
    const std::size_t out = spec.fan_out(l);
    const double* a_in = ws.act[l].data();
    for (std::size_t r = 0; r < out; ++r) {
      const double* w = W.data() + r * in;
      double s = b[r];
      for (std::size_t c = 0; c < in; ++c) s += w[c] * a_in[c];
      ws.pre[l][r] = s;
      ws.act[l + 1][r] = l + 1 < L ? detail::activate(spec.activations[l], s) : 2.0 * sigmoid(s) - 1.0;
    }
  }
  const auto& N = ws.act[L];
  return {0.5 * spec.u_max[0] * (1.0 + N[0]), 0.5 * spec.u_max[1] * (1.0 + N[1])};
}

/// Forward pass from a full normalized measurement vector.
inline Controls forward(const PolicyParams& params, std::span<const double> zeta_full, PolicyWorkspace& ws) {
  const PolicySpec& spec = params.spec();
  if (zeta_full.size() != spec.measurement_size) throw ShapeError("policy forward: measurement length mismatch");
  thread_local std::vector<double> sel;
  sel.resize(spec.input_count());
  for (std::size_t i = 0; i < sel.size(); ++i) sel[i] = zeta_full[spec.inputs[i]];
  return forward_selected(params, sel, ws);
}

inline Controls forward(const PolicyParams& params, std::span<const double> zeta_full) {
  PolicyWorkspace ws(params.spec());
  return forward(params, zeta_full, ws);
}

/// Reverse pass after `forward_selected` on the same workspace. Accumulates the
/// parameter adjoint into `theta_bar` and writes the adjoint of the selected
/// normalized measurements into `selected_bar`.
inline void forward_selected_vjp(const PolicyParams& params, PolicyWorkspace& ws, Controls u_bar,
                                 std::span<double> theta_bar, std::span<double> selected_bar) {
  const PolicySpec& spec = params.spec();
  const ParamLayout& lay = params.layout();
  const std::size_t L = spec.layer_count();
  // du/da = u_max * sigmoid'(a) for the bounded output.
  {
    const auto& N = ws.act[L];
    for (std::size_t k = 0; k < 2; ++k) {
      const double s = 0.5 * (1.0 + N[k]);
      const double ub = k == 0 ? u_bar.L_T : u_bar.V_B;
      ws.grad[L][k] = ub * spec.u_max[k] * s * (1.0 - s);
    }
  }
  for (std::size_t l = L; l-- > 0;) {
    const std::size_t in = spec.fan_in(l);
    const std::size_t out = spec.fan_out(l);
    const auto W = params.W(l);
    double* Wb = theta_bar.data() + lay.w_offset[l];
    double* bb = theta_bar.data() + lay.b_offset[l];
    const double* a_in = ws.act[l].data();
    double* g_in = ws.grad[l].data();
    std::fill_n(g_in, in, 0.0);
    // grad[l+1] holds d/d(pre) for the output layer, d/d(act) for hidden layers.
    for (std::size_t r = 0; r < out; ++r) {
      double g = ws.grad[l + 1][r];
      if (l + 1 < L) g *= detail::activate_slope(spec.activations[l], ws.act[l + 1][r]);
      if (g == 0.0) continue;
      bb[r] += g;
      const double* w = W.data() + r * in;
      double* wb = Wb + r * in;
      for (std::size_t c = 0; c < in; ++c) {
        wb[c] += g * a_in[c];
        g_in[c] += g * w[c];
      }
    }
  }
  const auto H = params.H();
  for (std::size_t i = 0; i < spec.input_count(); ++i) {
    theta_bar[i] += ws.grad[0][i] * ws.selected[i];
    selected_bar[i] = ws.grad[0][i] * H[i];
  }
}

/// Glorot-uniform weights, zero biases, unit selection entries.
inline PolicyParams init_params(const PolicySpec& spec, std::uint64_t seed) {
  PolicyParams p(spec);
  Rng rng(derive_seed(seed, 0x696e6974));
  for (double& h : p.H()) h = 1.0;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(spec.fan_in(l) + spec.fan_out(l)));
    for (double& w : p.W(l)) w = limit * (2.0 * uniform01(rng) - 1.0);
    for (double& b : p.b(l)) b = 0.0;
  }
  return p;
}

struct PruneResult {
  PolicyParams params;
  std::vector<std::size_t> selected;  ///< positions into spec.inputs that survived
};

/// Zeroes and freezes selection entries with magnitude below `tol`.
inline PruneResult prune_selection(const PolicyParams& params, double tol = 0.001, std::ostream* warn = &std::cerr) {
  PruneResult r{params, {}};
  auto H = r.params.H();
  for (std::size_t i = 0; i < H.size(); ++i) {
    if (std::abs(H[i]) < tol) {
      H[i] = 0.0;
      r.params.freeze(i);
    } else {
      r.selected.push_back(i);
    }
  }
  if (r.selected.empty() && warn != nullptr) {
    *warn << "warning: prune_selection removed every measurement (tol=" << tol << ")\n";
  }
  return r;
}

// --- roster ----------------------------------------------------------------

enum class PolicyKind { all, all_no_noise, reg, sel };

inline std::string to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::all:
      return "all";
    case PolicyKind::all_no_noise:
      return "all-no-noise";
    case PolicyKind::reg:
      return "reg";
    case PolicyKind::sel:
      return "sel";
  }
  return "?";
}

inline PolicyKind policy_kind_from_string(const std::string& s) {
  if (s == "all") return PolicyKind::all;
  if (s == "all-no-noise") return PolicyKind::all_no_noise;
  if (s == "reg") return PolicyKind::reg;
  if (s == "sel") return PolicyKind::sel;
  throw ConfigError("unknown policy '" + s + "' (expected all|all-no-noise|reg|sel)");
}

struct RosterEntry {
  PolicyKind kind;
  PolicySpec spec;
  bool training_noise = true;
  bool regularized = false;
};

/// Controller configurations compared in the case study.
inline RosterEntry roster_entry(PolicyKind kind, const ColumnParams& p) {
  const MeasurementLayout lay = measurement_layout(p);
  PolicySpec spec;
  spec.u_max = p.u_max;
  spec.measurement_size = lay.size();
  if (kind == PolicyKind::sel) {
    // Two temperatures in each section, away from the product ends.
    for (std::size_t stage : {5, 10, 16, 21}) spec.inputs.push_back(lay.temperature(stage - 1));
    spec.hidden = {150};
  } else {
    for (std::size_t i = 0; i < lay.size(); ++i) spec.inputs.push_back(i);
    spec.hidden = {30};
  }
  spec.activations = {Activation::sigmoid};
  return {kind, spec, kind != PolicyKind::all_no_noise, kind == PolicyKind::reg};
}

}  // namespace colflux
