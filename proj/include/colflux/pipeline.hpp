#pragma once

// End-to-end steps shared by the command-line tool and the acceptance run:
// reference seeds, pool construction from a region run, and training of a
// roster policy with the right pools and schedule.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "colflux/column_model.hpp"
#include "colflux/policy.hpp"
#include "colflux/sampling.hpp"
#include "colflux/scenarios.hpp"
#include "colflux/training.hpp"

namespace colflux {

/// Default seeds of the reference workflow. The region and test runs use
/// different disturbance sequences.
struct ReferenceSeeds {
  std::uint64_t region_sequence = 1;
  std::uint64_t test_sequence = 2;
  std::uint64_t initial_pool = 3;
  std::uint64_t noise_pool = 4;
  std::uint64_t init = 5;
  std::uint64_t train = 6;
  std::uint64_t bias = 7;
  std::uint64_t envelope = 8;
};

enum class Preset { desk, paper };

inline Preset preset_from_string(const std::string& s) {
  if (s == "desk") return Preset::desk;
  if (s == "paper") return Preset::paper;
  throw ConfigError("unknown preset '" + s + "' (expected desk or paper)");
}

inline std::string to_string(Preset p) { return p == Preset::desk ? "desk" : "paper"; }

inline TrainConfig preset_config(Preset p) { return p == Preset::desk ? TrainConfig::desk() : TrainConfig::paper(); }

struct PolicyTraining {
  PolicyParams params;
  TrainRecord record;                      ///< full history, both stages for the regularised policy
  std::optional<WorkflowResult> workflow;  ///< regularised policy only
};

/// Trains one roster policy. The no-noise variant sees an all-zero noise
/// pool of the same size; the regularised variant runs penalised training,
/// pruning and retraining with elastic-net weights defaulting to (0.01, 0.99).
inline PolicyTraining train_roster_policy(PolicyKind kind, const InitialConditionPool& initial, const NoisePool& noise,
                                          const TrainConfig& cfg, const ColumnParams& p, std::uint64_t init_seed,
                                          const TrainProgress& progress = {}) {
  const RosterEntry entry = roster_entry(kind, p);
  const PolicyParams init = init_params(entry.spec, init_seed);
  if (!entry.training_noise) {
    const NoisePool zero = build_noise_pool(NoiseSpec::for_column(p), measurement_layout(p), noise.size(), noise.seed, true);
    TrainConfig c = cfg;
    c.penalty.reset();
    TrainResult r = train(init, {&initial, &zero}, c, p, progress);
    return {std::move(r.params), std::move(r.record), std::nullopt};
  }
  if (entry.regularized) {
    TrainConfig c = cfg;
    if (!c.penalty) c.penalty = ElasticNet{0.01, 0.99};
    WorkflowResult w = regularized_workflow(init, {&initial, &noise}, c, p, 0.001, progress);
    TrainRecord rec = w.record_regularized;
    rec.objective.insert(rec.objective.end(), w.record_retrained.objective.begin(), w.record_retrained.objective.end());
    rec.penalty.insert(rec.penalty.end(), w.record_retrained.penalty.begin(), w.record_retrained.penalty.end());
    rec.gradient_norm.insert(rec.gradient_norm.end(), w.record_retrained.gradient_norm.begin(),
                             w.record_retrained.gradient_norm.end());
    rec.wall_ms.insert(rec.wall_ms.end(), w.record_retrained.wall_ms.begin(), w.record_retrained.wall_ms.end());
    PolicyParams params = w.params;
    return {std::move(params), std::move(rec), std::move(w)};
  }
  TrainConfig c = cfg;
  c.penalty.reset();
  TrainResult r = train(init, {&initial, &noise}, c, p, progress);
  return {std::move(r.params), std::move(r.record), std::nullopt};
}

/// Measurement names kept by a policy: inputs whose selection entry is non-zero.
inline std::vector<std::string> selected_measurements(const PolicyParams& params, const ColumnParams& p) {
  const MeasurementLayout lay = measurement_layout(p);
  std::vector<std::string> names;
  const auto H = params.H();
  for (std::size_t i = 0; i < H.size(); ++i) {
    if (H[i] != 0.0) names.push_back(lay.name(params.spec().inputs[i]));
  }
  return names;
}

}  // namespace colflux
