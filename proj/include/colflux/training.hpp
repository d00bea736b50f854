#pragma once

// Stochastic optimise-and-learn training: RMSProp on the sampled closed-loop
// objective, optional elastic-net penalty, and the regularise, prune and
// retrain workflow used for measurement selection.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "colflux/column_model.hpp"
#include "colflux/csv.hpp"
#include "colflux/diff_sim.hpp"
#include "colflux/errors.hpp"
#include "colflux/policy.hpp"
#include "colflux/random.hpp"
#include "colflux/sampling.hpp"

namespace colflux {

struct ElasticNet {
  double lambda1 = 0.01;
  double lambda2 = 0.99;

  void validate() const {
    if (!(lambda1 >= 0.0)) throw ConfigError("elastic net: lambda1 must be non-negative");
    if (!(lambda2 >= 0.0 && lambda2 <= 1.0)) throw ConfigError("elastic net: lambda2 must lie in [0, 1]");
  }
};

/// lambda1 * (lambda2 |theta|_1 + 0.5 (1 - lambda2) |theta|_2^2). The gradient,
/// if requested, is added to `grad`; sign(0) is taken as 0.
inline double elastic_net_penalty(std::span<const double> theta, const ElasticNet& en, std::span<double> grad = {}) {
  en.validate();
  if (!grad.empty() && grad.size() != theta.size()) throw ShapeError("elastic_net_penalty: gradient has wrong length");
  double l1 = 0.0, l2 = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double t = theta[i];
    l1 += std::abs(t);
    l2 += t * t;
    if (!grad.empty()) {
      const double sign = t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0);
      grad[i] += en.lambda1 * (en.lambda2 * sign + (1.0 - en.lambda2) * t);
    }
  }
  return en.lambda1 * (en.lambda2 * l1 + 0.5 * (1.0 - en.lambda2) * l2);
}

struct RmsPropHyper {
  double learning_rate = 0.001;
  double decay = 0.9;
  double epsilon = 1e-8;
};

struct RmsPropState {
  std::vector<double> nu;  ///< running mean of squared gradients
};

/// One RMSProp update in place. Coordinates with mask 0 keep their value and
/// their second-moment estimate.
inline void rmsprop_step(RmsPropState& state, std::span<double> theta, std::span<const double> grad,
                         const RmsPropHyper& hyper, std::span<const std::uint8_t> mask = {}) {
  if (grad.size() != theta.size() || (!mask.empty() && mask.size() != theta.size())) {
    throw ShapeError("rmsprop_step: parameter, gradient and mask lengths differ");
  }
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw DomainError("rmsprop_step: non-finite gradient at coordinate " + std::to_string(i));
    }
  }
  if (state.nu.empty()) state.nu.assign(theta.size(), 0.0);
  if (state.nu.size() != theta.size()) throw ShapeError("rmsprop_step: optimiser state has wrong length");
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (!mask.empty() && mask[i] == 0) continue;
    const double g = grad[i];
    state.nu[i] = hyper.decay * state.nu[i] + (1.0 - hyper.decay) * g * g;
    theta[i] -= hyper.learning_rate * g / (std::sqrt(state.nu[i]) + hyper.epsilon);
  }
}

struct TrainPhase {
  std::size_t iterations = 0;
  std::size_t samples = 1;  ///< n_s draws per iteration
  double weight = 1.0;      ///< w_s applied to every draw
};

struct TrainConfig {
  std::vector<TrainPhase> phases{{2000, 1, 1.0}, {750, 2, 0.5}};
  RmsPropHyper hyper;
  std::optional<ElasticNet> penalty;
  std::uint64_t seed = 1;
  SimConfig sim;
  std::size_t pool_size = 1000;
  std::size_t workers = 1;

  static TrainConfig paper() { return {}; }

  /// Shortened schedule for continuous integration.
  static TrainConfig desk() {
    TrainConfig c;
    c.phases = {{500, 1, 1.0}, {200, 2, 0.5}};
    c.sim.t_f = 10.0;
    c.pool_size = 200;
    return c;
  }

  [[nodiscard]] std::size_t total_iterations() const {
    std::size_t n = 0;
    for (const auto& ph : phases) n += ph.iterations;
    return n;
  }

  void validate() const {
    if (phases.empty()) throw ConfigError("train: schedule has no phases");
    for (const auto& ph : phases) {
      if (ph.iterations == 0 || ph.samples == 0) throw ConfigError("train: phase iterations and samples must be positive");
      if (!(ph.weight > 0.0)) throw ConfigError("train: phase weight must be positive");
    }
    if (!(hyper.learning_rate > 0.0) || !(hyper.decay >= 0.0 && hyper.decay < 1.0) || !(hyper.epsilon > 0.0)) {
      throw ConfigError("train: invalid RMSProp hyperparameters");
    }
    if (penalty) penalty->validate();
    (void)sim.steps();
  }
};

/// Per-iteration history. Wall-clock times are kept apart from the numeric
/// record so that the record itself is reproducible.
struct TrainRecord {
  std::vector<double> objective;  ///< sampled cost plus penalty
  std::vector<double> penalty;
  std::vector<double> gradient_norm;
  std::vector<double> wall_ms;

  [[nodiscard]] std::size_t size() const { return objective.size(); }
};

/// Trailing moving average of the recorded objective.
inline std::vector<double> smoothed_objective(const TrainRecord& rec, std::size_t window) {
  if (window == 0) throw ConfigError("smoothed_objective: window must be positive");
  std::vector<double> out(rec.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    sum += rec.objective[i];
    if (i >= window) sum -= rec.objective[i - window];
    out[i] = sum / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

inline void write_train_record(std::ostream& os, const TrainRecord& rec) {
  CsvWriter w(os);
  const std::vector<std::string> cols{"iteration", "objective", "penalty", "grad_norm"};
  w.header(cols);
  for (std::size_t i = 0; i < rec.size(); ++i) {
    const double row[] = {static_cast<double>(i + 1), rec.objective[i], rec.penalty[i], rec.gradient_norm[i]};
    w.row(row);
  }
}

inline void write_train_timing(std::ostream& os, const TrainRecord& rec) {
  CsvWriter w(os);
  const std::vector<std::string> cols{"iteration", "wall_ms"};
  w.header(cols);
  for (std::size_t i = 0; i < rec.wall_ms.size(); ++i) {
    const double row[] = {static_cast<double>(i + 1), rec.wall_ms[i]};
    w.row(row);
  }
}

inline TrainRecord read_train_record(std::istream& is) {
  const CsvTable t = read_csv(is);
  const std::size_t o = t.column("objective"), pe = t.column("penalty"), g = t.column("grad_norm");
  TrainRecord rec;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    rec.objective.push_back(t.number(r, o));
    rec.penalty.push_back(t.number(r, pe));
    rec.gradient_norm.push_back(t.number(r, g));
  }
  return rec;
}

struct TrainPools {
  const InitialConditionPool* initial = nullptr;
  const NoisePool* noise = nullptr;
};

struct TrainResult {
  PolicyParams params;
  TrainRecord record;
};

/// Called after every iteration with (1-based iteration, objective).
using TrainProgress = std::function<void(std::size_t, double)>;

/// Trains `params` in place of a copy and returns it with the history.
/// Each iteration draws n_s (initial state, noise) pairs uniformly with
/// replacement; frozen selection entries are never updated.
inline TrainResult train(const PolicyParams& params, const TrainPools& pools, const TrainConfig& cfg,
                         const ColumnParams& p, const TrainProgress& progress = {}) {
  cfg.validate();
  if (pools.initial == nullptr || pools.noise == nullptr || pools.initial->size() == 0 || pools.noise->size() == 0) {
    throw ConfigError("train: pools must be non-empty");
  }
  const std::size_t nm = measurement_layout(p).size();
  if (params.spec().measurement_size != nm || pools.noise->eta.front().size() != nm) {
    throw ShapeError("train: policy, noise pool and column disagree on the measurement count");
  }
  TrainResult r{params, {}};
  const std::vector<std::uint8_t> mask = r.params.trainable_mask();
  RmsPropState opt;
  Rng rng(derive_seed(cfg.seed, 0x7261696eULL));
  std::vector<CostSample> batch;
  std::vector<double> grad;
  std::size_t iteration = 0;
  for (const TrainPhase& ph : cfg.phases) {
    for (std::size_t k = 0; k < ph.iterations; ++k) {
      ++iteration;
      const auto started = std::chrono::steady_clock::now();
      batch.clear();
      for (std::size_t s = 0; s < ph.samples; ++s) {
        const std::size_t i = uniform_index(rng, pools.initial->size());
        const std::size_t j = uniform_index(rng, pools.noise->size());
        batch.push_back({pools.initial->states[i], pools.initial->feeds[i], pools.noise->eta[j], ph.weight});
      }
      CostGradient cg;
      try {
        cg = batch_cost_gradient(batch, r.params, cfg.sim, p, cfg.workers);
      } catch (const std::exception& e) {
        throw Error("train: iteration " + std::to_string(iteration) + ": " + e.what());
      }
      grad = std::move(cg.gradient);
      const double pen = cfg.penalty ? elastic_net_penalty(r.params.flatten(), *cfg.penalty, grad) : 0.0;
      double norm = 0.0;
      for (std::size_t i = 0; i < grad.size(); ++i) norm += mask[i] ? grad[i] * grad[i] : 0.0;
      try {
        rmsprop_step(opt, r.params.flat(), grad, cfg.hyper, mask);
      } catch (const Error& e) {
        throw DomainError("train: iteration " + std::to_string(iteration) + ": " + e.what());
      }
      r.record.objective.push_back(cg.cost + pen);
      r.record.penalty.push_back(pen);
      r.record.gradient_norm.push_back(std::sqrt(norm));
      r.record.wall_ms.push_back(
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count());
      if (progress) progress(iteration, cg.cost + pen);
    }
  }
  return r;
}

struct WorkflowResult {
  PolicyParams params;                ///< retrained, selection frozen
  std::vector<std::size_t> selected;  ///< positions into spec.inputs
  PolicyParams regularized;           ///< end of the penalised phase, before pruning
  TrainRecord record_regularized;
  TrainRecord record_retrained;
};

/// Penalised training, pruning of small selection entries, then retraining
/// from the original initial guess with the whole selection held fixed and no
/// penalty.
inline WorkflowResult regularized_workflow(const PolicyParams& initial, const TrainPools& pools, const TrainConfig& cfg,
                                           const ColumnParams& p, double prune_tol = 0.001,
                                           const TrainProgress& progress = {}) {
  TrainConfig a = cfg;
  if (!a.penalty) a.penalty = ElasticNet{};
  TrainResult ra = train(initial, pools, a, p, progress);
  PruneResult pr = prune_selection(ra.params, prune_tol, nullptr);
  if (pr.selected.empty()) {
    throw DomainError("regularized_workflow: pruning at " + format_double(prune_tol) +
                      " removed every measurement (largest |H| = " + [&] {
                        double m = 0.0;
                        for (double h : ra.params.H()) m = std::max(m, std::abs(h));
                        return format_double(m);
                      }() + ")");
  }
  PolicyParams b = initial;
  const auto H = pr.params.H();
  auto Hb = b.H();
  for (std::size_t i = 0; i < H.size(); ++i) {
    Hb[i] = H[i];
    b.freeze(i);
  }
  TrainConfig cb = cfg;
  cb.penalty.reset();
  const TrainProgress shifted = progress ? TrainProgress([&](std::size_t it, double obj) {
    progress(a.total_iterations() + it, obj);
  })
                                         : TrainProgress{};
  TrainResult rb = train(b, pools, cb, p, shifted);
  return {std::move(rb.params), std::move(pr.selected), std::move(ra.params), std::move(ra.record),
          std::move(rb.record)};
}

}  // namespace colflux
