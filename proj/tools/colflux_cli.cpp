// Command-line front end: one subcommand per pipeline step, each writing its
// artifacts plus a manifest next to the primary output.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "colflux/colflux.hpp"
#include "colflux/pipeline.hpp"

using namespace colflux;

namespace {

/// Problems with the invocation itself (bad flags, missing input files).
class UsageError : public Error {
 public:
  using Error::Error;
};

struct Globals {
  std::string config_path;
  std::optional<std::size_t> workers;
  Json config = Json::object();
  ColumnParams column;
  std::size_t worker_count = 1;
};

void load_globals(Globals& g) {
  if (!g.config_path.empty()) {
    if (!std::filesystem::exists(g.config_path)) throw UsageError("config file '" + g.config_path + "' not found");
    g.config = read_json_file(g.config_path);
    if (!g.config.is_object()) throw ConfigError("config file must hold a JSON object");
  }
  g.column = column_params_from_json(config_section(g.config, "column"));
  g.worker_count = layered<std::size_t>(g.workers, g.config, "workers", default_workers());
  if (g.worker_count == 0) throw UsageError("--workers must be at least 1");
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError(what + " is required");
  if (!std::filesystem::is_regular_file(path)) throw UsageError(what + " '" + path + "' does not exist");
}

std::string manifest_path(const std::string& out) { return out + ".manifest.json"; }

template <class Writer>
void write_text(const std::string& path, Writer&& w) {
  std::ostringstream os;
  w(os);
  write_file(path, os.str());
}

DisturbanceSequence load_sequence(const std::string& path) {
  require_file(path, "--sequence");
  std::istringstream is(read_file(path));
  return read_disturbance_sequence(is);
}

Trajectory load_trajectory(const std::string& path, const std::string& flag) {
  require_file(path, flag);
  std::istringstream is(read_file(path));
  return read_trajectory(is);
}

std::string policy_name(const std::string& path, const Json& j) {
  if (j.contains("meta") && j["meta"].contains("name")) return j["meta"]["name"].get<std::string>();
  return std::filesystem::path(path).stem().string();
}

std::vector<NamedPolicy> load_policies(const std::vector<std::string>& paths, RunManifest& m) {
  if (paths.empty()) throw UsageError("--policies needs at least one file");
  std::vector<NamedPolicy> out;
  for (const auto& path : paths) {
    require_file(path, "policy file");
    const Json j = read_json_file(path);
    out.push_back({policy_name(path, j), policy_from_json(j)});
    m.add_input(path);
  }
  return out;
}

OcpConfig mpc_config(const Globals& g, std::optional<double> h) {
  OcpConfig c = ocp_config_from_json(config_section(g.config, "mpc"), OcpConfig{});
  if (h) c.h = *h;
  (void)c.steps_per_interval();
  return c;
}

void finish(RunManifest& m, const Stopwatch& clock, const std::string& out) {
  m.wall_seconds = clock.seconds();
  m.write(manifest_path(out));
}

// --- subcommands ---------------------------------------------------------------------

struct SteadyStateArgs {
  std::string out = "steady_state.csv";
};

int cmd_steady_state(const Globals& g, const SteadyStateArgs& a) {
  const Stopwatch clock;
  const ColumnParams& p = g.column;
  const ColumnState ss = nominal_steady_state(p);
  write_text(a.out, [&](std::ostream& os) {
    CsvWriter w(os);
    w.meta("kind", "steady_state");
    w.header(std::vector<std::string>{"stage", "M", "x", "T"});
    for (std::size_t k = 0; k < ss.stages(); ++k) {
      w.row(std::vector<double>{static_cast<double>(k + 1), ss.M(k), ss.x(k), stage_temperature(ss.x(k), p)});
    }
  });
  std::cout << "x_1=" << format_double(ss.x(0)) << " x_" << ss.stages() << "=" << format_double(ss.x(ss.stages() - 1))
            << '\n';
  RunManifest m;
  m.command = "steady-state";
  m.config = Json{{"column", column_params_to_json(p)}};
  m.add_artifact(a.out);
  finish(m, clock, a.out);
  return 0;
}

struct GenArgs {
  std::optional<std::uint64_t> seed;
  std::size_t events = 100;
  std::string out = "disturbances.csv";
};

int cmd_gen_disturbances(const Globals& g, const GenArgs& a) {
  const Stopwatch clock;
  const Json sec = config_section(g.config, "gen-disturbances");
  const std::uint64_t seed = resolve_seed(a.seed, sec, ReferenceSeeds{}.test_sequence);
  const DisturbanceSequence s = generate_disturbance_sequence(seed, {}, a.events, g.column);
  write_text(a.out, [&](std::ostream& os) { write_disturbance_sequence(os, s); });
  std::cout << "events=" << s.events.size() << " duration=" << format_double(s.duration) << '\n';
  RunManifest m;
  m.command = "gen-disturbances";
  m.config = Json{{"events", a.events}, {"column", column_params_to_json(g.column)}};
  m.seeds = {{"seed", seed}};
  m.add_artifact(a.out);
  finish(m, clock, a.out);
  return 0;
}

struct MpcRunArgs {
  std::string sequence;
  std::string out = "mpc_run.csv";
  std::string quantiles;
  std::optional<double> mpc_h;
};

/// Shared by `region` and `mpc-run`: noise-free closed loop under MPC.
int run_mpc(const Globals& g, const MpcRunArgs& a, const std::string& command) {
  const Stopwatch clock;
  RunManifest m;
  m.command = command;
  const DisturbanceSequence seq = load_sequence(a.sequence);
  m.add_input(a.sequence);
  const OcpConfig oc = mpc_config(g, a.mpc_h);
  MpcController mpc(g.column, oc, &std::cerr);
  const RegionRun r = estimate_operating_region(seq, mpc, g.column);
  write_text(a.out, [&](std::ostream& os) { write_trajectory(os, r.run.trajectory, g.column); });
  m.add_artifact(a.out);
  if (!a.quantiles.empty()) {
    write_text(a.quantiles, [&](std::ostream& os) { write_quantiles(os, r.quantiles); });
    m.add_artifact(a.quantiles);
  }
  std::cout << "objective=" << format_double(r.run.objective) << " solves=" << mpc.solves()
            << " failures=" << mpc.failures() << '\n';
  m.config = Json{{"mpc", ocp_config_to_json(oc)}, {"column", column_params_to_json(g.column)}};
  m.seeds = {{"sequence", seq.seed}};
  finish(m, clock, a.out);
  return 0;
}

struct PoolsArgs {
  std::string region;
  std::optional<std::size_t> n;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> noise_seed;
  std::string out = "initial_pool.csv";
  std::string noise_out = "noise_pool.csv";
};

int cmd_pools(const Globals& g, const PoolsArgs& a) {
  const Stopwatch clock;
  RunManifest m;
  m.command = "pools";
  const Trajectory traj = load_trajectory(a.region, "--region");
  m.add_input(a.region);
  const Json sec = config_section(g.config, "pools");
  const std::size_t n = layered<std::size_t>(a.n, sec, "n", 1000);
  const ReferenceSeeds ref;
  const std::uint64_t seed = resolve_seed(a.seed, sec, ref.initial_pool);
  const std::uint64_t noise_seed = resolve_seed(a.noise_seed, sec, ref.noise_pool, "noise_seed");
  InitialConditionPool initial = build_initial_pool(region_from_trajectory(traj, g.column), n, seed, g.column);
  initial.source_digest = m.inputs.front().sha1;
  const NoisePool noise = build_noise_pool(NoiseSpec::for_column(g.column), measurement_layout(g.column), n, noise_seed);
  write_text(a.out, [&](std::ostream& os) { write_initial_pool(os, initial, g.column.stages()); });
  write_text(a.noise_out, [&](std::ostream& os) { write_noise_pool(os, noise, measurement_layout(g.column)); });
  m.add_artifact(a.out);
  m.add_artifact(a.noise_out);
  m.config = Json{{"n", n}, {"column", column_params_to_json(g.column)}};
  m.seeds = {{"seed", seed}, {"noise_seed", noise_seed}};
  std::cout << "initial=" << initial.size() << " noise=" << noise.size() << '\n';
  finish(m, clock, a.out);
  return 0;
}

struct TrainArgs {
  std::string policy = "all";
  std::string preset = "desk";
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> init_seed;
  std::string initial;
  std::string noise;
  std::string out = "policy.json";
  std::string record;
  std::string timing;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  const Stopwatch clock;
  RunManifest m;
  m.command = "train";
  const PolicyKind kind = policy_kind_from_string(a.policy);
  const Preset preset = preset_from_string(a.preset);
  require_file(a.initial, "--initial");
  require_file(a.noise, "--noise");
  const Json sec = config_section(g.config, "train");
  TrainConfig cfg = train_config_from_json(sec, preset_config(preset));
  const ReferenceSeeds ref;
  cfg.seed = resolve_seed(a.seed, sec, ref.train);
  cfg.workers = g.worker_count;
  const std::uint64_t init_seed = resolve_seed(a.init_seed, sec, ref.init, "init_seed");
  std::istringstream ini(read_file(a.initial)), noi(read_file(a.noise));
  const InitialConditionPool initial = read_initial_pool(ini, g.column.stages());
  const NoisePool noise = read_noise_pool(noi, measurement_layout(g.column));
  m.add_input(a.initial);
  m.add_input(a.noise);
  const std::size_t total = cfg.total_iterations() * (kind == PolicyKind::reg ? 2 : 1);
  const PolicyTraining t = train_roster_policy(kind, initial, noise, cfg, g.column, init_seed, [&](std::size_t it, double obj) {
    if (it % 50 == 0 || it == total) std::cerr << "train " << to_string(kind) << " " << it << "/" << total << " objective=" << obj << '\n';
  });
  Json meta{{"name", to_string(kind)},
            {"preset", to_string(preset)},
            {"seed", cfg.seed},
            {"init_seed", init_seed},
            {"iterations", t.record.size()},
            {"training_noise", roster_entry(kind, g.column).training_noise},
            {"final_objective", t.record.objective.back()}};
  if (t.workflow) meta["selected"] = selected_measurements(t.params, g.column);
  save_policy(a.out, t.params, meta);
  m.add_artifact(a.out);
  if (!a.record.empty()) {
    write_text(a.record, [&](std::ostream& os) { write_train_record(os, t.record); });
    m.add_artifact(a.record);
  }
  // Wall-clock timings differ run to run, so they go to a separate file.
  if (!a.timing.empty()) write_text(a.timing, [&](std::ostream& os) { write_train_timing(os, t.record); });
  Json c = train_config_to_json(cfg);
  c["policy"] = to_string(kind);
  c["preset"] = to_string(preset);
  m.config = Json{{"train", c}, {"column", column_params_to_json(g.column)}};
  m.seeds = {{"seed", cfg.seed}, {"init_seed", init_seed}};
  if (t.workflow) std::cout << "selected=" << t.workflow->selected.size() << ' ';
  std::cout << "final_objective=" << format_double(t.record.objective.back()) << '\n';
  finish(m, clock, a.out);
  return 0;
}

struct EvaluateArgs {
  std::vector<std::string> policies;
  std::string sequence;
  std::string mode = "nominal";
  std::string out = "evaluation.csv";
  std::string trajectories;
  std::optional<std::uint64_t> seed;
  std::size_t bias_draws = 10;
  std::size_t envelope_draws = 0;
};

int cmd_evaluate(const Globals& g, const EvaluateArgs& a) {
  const Stopwatch clock;
  RunManifest m;
  m.command = "evaluate";
  static const std::vector<std::string> modes{"nominal", "bias", "avg-bias", "extreme", "mismatch"};
  if (std::find(modes.begin(), modes.end(), a.mode) == modes.end()) throw UsageError("unknown --mode '" + a.mode + "'");
  const std::vector<NamedPolicy> policies = load_policies(a.policies, m);
  const DisturbanceSequence seq = load_sequence(a.sequence);
  m.add_input(a.sequence);
  const ReferenceSeeds ref;
  const std::uint64_t seed = resolve_seed(a.seed, config_section(g.config, "evaluate"), ref.bias);
  const ColumnParams& p = g.column;
  const MeasurementLayout lay = measurement_layout(p);
  ScenarioOptions base;
  base.noise_spec = NoiseSpec::for_column(p);
  std::vector<ScenarioOptions> runs;
  if (a.mode == "nominal") {
    runs.push_back(base);
  } else if (a.mode == "bias") {
    ScenarioOptions o = base;
    o.noise = NoiseMode::bias;
    o.bias = draw_bias(base.noise_spec, lay, derive_seed(seed, 0));
    runs.push_back(o);
  } else if (a.mode == "avg-bias") {
    if (a.bias_draws == 0) throw UsageError("--bias-draws must be positive");
    for (std::size_t d = 0; d < a.bias_draws; ++d) {
      ScenarioOptions o = base;
      o.noise = NoiseMode::bias;
      o.bias = draw_bias(base.noise_spec, lay, derive_seed(seed, d));
      runs.push_back(o);
    }
  } else if (a.mode == "extreme") {
    ScenarioOptions o = base;
    o.noise = NoiseMode::bias;
    o.bias = draw_extreme(base.noise_spec, lay, seed);
    runs.push_back(o);
  } else {
    ScenarioOptions o = base;
    o.mismatch = InputMismatch::reference();
    runs.push_back(o);
  }
  const std::size_t per = runs.size();
  std::vector<ClosedLoopResult> results(policies.size() * per);
  parallel_for(results.size(), g.worker_count, [&](std::size_t job) {
    results[job] = simulate_closed_loop(policies[job / per].params, seq, runs[job % per], p);
  });
  write_text(a.out, [&](std::ostream& os) {
    CsvWriter w(os);
    w.meta("mode", a.mode);
    w.meta("runs", std::to_string(per));
    w.header(std::vector<std::string>{"policy", "mode", "objective"});
    for (std::size_t i = 0; i < policies.size(); ++i) {
      double mean = 0.0;
      for (std::size_t d = 0; d < per; ++d) mean += results[i * per + d].objective / static_cast<double>(per);
      w.row(std::vector<std::string>{policies[i].name, a.mode, format_double(mean)});
      std::cout << policies[i].name << ' ' << a.mode << ' ' << format_double(mean) << '\n';
    }
  });
  m.add_artifact(a.out);
  if (!a.trajectories.empty()) {
    std::filesystem::create_directories(a.trajectories);
    for (std::size_t i = 0; i < policies.size(); ++i) {
      const Trajectory& traj = results[i * per].trajectory;
      std::optional<ControlEnvelope> env;
      if (a.envelope_draws > 0) {
        env = control_noise_envelope(policies[i].params, traj, a.envelope_draws, derive_seed(seed, 0x656e76), base.noise_spec, p,
                                     g.worker_count);
      }
      const std::string path = (std::filesystem::path(a.trajectories) / (policies[i].name + "_" + a.mode + ".csv")).string();
      write_text(path, [&](std::ostream& os) { write_trajectory(os, traj, p, env ? &*env : nullptr); });
      m.add_artifact(path);
      if (env) std::cout << policies[i].name << " envelope_mean_width=" << format_double(env->mean_width()) << '\n';
    }
  }
  m.config = Json{{"mode", a.mode},
                  {"bias_draws", a.bias_draws},
                  {"envelope_draws", a.envelope_draws},
                  {"column", column_params_to_json(p)}};
  m.seeds = {{"seed", seed}, {"sequence", seq.seed}};
  finish(m, clock, a.out);
  return 0;
}

struct Table4Args {
  std::vector<std::string> policies;
  std::string sequence;
  std::string out = "table4.csv";
  std::optional<std::uint64_t> seed;
  std::size_t bias_draws = 10;
  bool with_mpc = false;
  std::optional<double> mpc_h;
};

int cmd_table4(const Globals& g, const Table4Args& a) {
  const Stopwatch clock;
  RunManifest m;
  m.command = "table4";
  const std::vector<NamedPolicy> policies = load_policies(a.policies, m);
  const DisturbanceSequence seq = load_sequence(a.sequence);
  m.add_input(a.sequence);
  const std::uint64_t seed = resolve_seed(a.seed, config_section(g.config, "table4"), ReferenceSeeds{}.bias);
  std::optional<MpcController> mpc;
  const OcpConfig oc = mpc_config(g, a.mpc_h);
  if (a.with_mpc) mpc.emplace(g.column, oc, &std::cerr);
  ScenarioOptions base;
  base.noise_spec = NoiseSpec::for_column(g.column);
  const EvalReport rep =
      run_table4(policies, seq, mpc ? &*mpc : nullptr, a.bias_draws, seed, g.column, base, g.worker_count);
  write_text(a.out, [&](std::ostream& os) { write_report_csv(os, rep); });
  write_report_table(std::cout, rep);
  m.add_artifact(a.out);
  m.config = Json{{"bias_draws", a.bias_draws}, {"with_mpc", a.with_mpc}, {"column", column_params_to_json(g.column)}};
  if (a.with_mpc) m.config["mpc"] = ocp_config_to_json(oc);
  m.seeds = {{"seed", seed}, {"sequence", seq.seed}};
  finish(m, clock, a.out);
  return 0;
}

struct PlotArgs {
  std::string traj;
  std::string out = "plot.svg";
  std::string kind = "temperature";
};

int cmd_plot(const Globals& g, const PlotArgs& a) {
  const Stopwatch clock;
  RunManifest m;
  m.command = "plot";
  require_file(a.traj, "--traj");
  const PlotKind kind = plot_kind_from_string(a.kind);
  const CsvTable table = read_csv_string(read_file(a.traj));
  m.add_input(a.traj);
  write_file(a.out, plot_svg(table, kind, g.column));
  m.add_artifact(a.out);
  m.config = Json{{"kind", a.kind}};
  finish(m, clock, a.out);
  return 0;
}

std::string json_escape(const std::string& s) { return Json(s).dump(); }

int report_error(const std::string& kind, const std::string& message, int code) {
  std::cerr << "{\"error\":" << json_escape(kind) << ",\"message\":" << json_escape(message) << ",\"exit\":" << code
            << "}\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop controller training for a binary distillation column"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON config file (flags take precedence)");
  app.add_option("--workers", g.workers, "worker threads (default: available cores)");

  SteadyStateArgs ss;
  auto* c_ss = app.add_subcommand("steady-state", "nominal operating point");
  c_ss->add_option("--out", ss.out, "per-stage CSV");

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen-disturbances", "random feed disturbance sequence");
  c_gen->add_option("--seed", gen.seed);
  c_gen->add_option("--events", gen.events);
  c_gen->add_option("--out", gen.out);

  MpcRunArgs region;
  auto* c_region = app.add_subcommand("region", "MPC run that maps the operating region");
  c_region->add_option("--sequence", region.sequence)->required();
  c_region->add_option("--out", region.out, "trajectory CSV");
  c_region->add_option("--quantiles", region.quantiles, "per-stage temperature quantiles CSV");
  c_region->add_option("--mpc-h", region.mpc_h, "integration step inside the MPC predictions");

  PoolsArgs pools;
  auto* c_pools = app.add_subcommand("pools", "initial-condition and noise pools");
  c_pools->add_option("--region", pools.region, "region trajectory CSV")->required();
  c_pools->add_option("--n", pools.n);
  c_pools->add_option("--seed", pools.seed);
  c_pools->add_option("--noise-seed", pools.noise_seed);
  c_pools->add_option("--out", pools.out, "initial-condition pool CSV");
  c_pools->add_option("--noise-out", pools.noise_out, "noise pool CSV");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "train a roster policy");
  c_train->add_option("--policy", tr.policy)->check(CLI::IsMember({"all", "all-no-noise", "reg", "sel"}));
  c_train->add_option("--preset", tr.preset)->check(CLI::IsMember({"desk", "paper"}));
  c_train->add_option("--seed", tr.seed);
  c_train->add_option("--init-seed", tr.init_seed);
  c_train->add_option("--initial", tr.initial)->required();
  c_train->add_option("--noise", tr.noise)->required();
  c_train->add_option("--out", tr.out);
  c_train->add_option("--record", tr.record, "per-iteration objective CSV");
  c_train->add_option("--timing", tr.timing, "per-iteration wall time CSV");

  MpcRunArgs mrun;
  auto* c_mrun = app.add_subcommand("mpc-run", "benchmark MPC on a sequence");
  c_mrun->add_option("--sequence", mrun.sequence)->required();
  c_mrun->add_option("--out", mrun.out);
  c_mrun->add_option("--mpc-h", mrun.mpc_h);

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "closed-loop objective of policies");
  c_ev->add_option("--policies", ev.policies)->required();
  c_ev->add_option("--sequence", ev.sequence)->required();
  c_ev->add_option("--mode", ev.mode);
  c_ev->add_option("--out", ev.out);
  c_ev->add_option("--trajectories", ev.trajectories, "directory for per-policy trajectory CSVs");
  c_ev->add_option("--seed", ev.seed);
  c_ev->add_option("--bias-draws", ev.bias_draws);
  c_ev->add_option("--envelope-draws", ev.envelope_draws, "noise draws per point for the control envelope");

  Table4Args t4;
  auto* c_t4 = app.add_subcommand("table4", "objective table with and without measurement noise");
  c_t4->add_option("--policies", t4.policies)->required();
  c_t4->add_option("--sequence", t4.sequence)->required();
  c_t4->add_option("--out", t4.out);
  c_t4->add_option("--seed", t4.seed);
  c_t4->add_option("--bias-draws", t4.bias_draws);
  c_t4->add_flag("--with-mpc", t4.with_mpc);
  c_t4->add_option("--mpc-h", t4.mpc_h);

  PlotArgs pl;
  auto* c_plot = app.add_subcommand("plot", "SVG figure from a trajectory CSV");
  c_plot->add_option("--traj", pl.traj)->required();
  c_plot->add_option("--out", pl.out);
  c_plot->add_option("--kind", pl.kind)->check(CLI::IsMember({"temperature", "controls"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), 2);
  }

  try {
    load_globals(g);
    if (c_ss->parsed()) return cmd_steady_state(g, ss);
    if (c_gen->parsed()) return cmd_gen_disturbances(g, gen);
    if (c_region->parsed()) return run_mpc(g, region, "region");
    if (c_pools->parsed()) return cmd_pools(g, pools);
    if (c_train->parsed()) return cmd_train(g, tr);
    if (c_mrun->parsed()) return run_mpc(g, mrun, "mpc-run");
    if (c_ev->parsed()) return cmd_evaluate(g, ev);
    if (c_t4->parsed()) return cmd_table4(g, t4);
    if (c_plot->parsed()) return cmd_plot(g, pl);
    return report_error("usage", "no subcommand", 2);
  } catch (const UsageError& e) {
    return report_error("usage", e.what(), 2);
  } catch (const ConfigError& e) {
    return report_error("config", e.what(), 2);
  } catch (const std::exception& e) {
    return report_error("runtime", e.what(), 1);
  }
}
