// wdn: water network toolchain CLI.
// Exit codes: 0 success, 1 domain error, 2 usage/parse/IO error,
// 3 simulation produced but not converged. Each command writes exactly one
// JSON document to stdout; diagnostics go to stderr. Artifact directories
// receive a run_manifest.json with the echoed flags, seeds and input hashes.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wdn/datagen.hpp"
#include "wdn/train.hpp"

using json = nlohmann::json;
using namespace wdn;
namespace fs = std::filesystem;

namespace {

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::MalformedLine:
    case Errc::MissingRequiredSection:
    case Errc::DuplicateId:
    case Errc::UnknownNodeReference:
    case Errc::UnknownCurveReference:
    case Errc::IoError:
      return 2;
    default:
      return 1;
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string iso_timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// relative dataset paths may live under $WDN_DATA_DIR
std::string resolve_path(const std::string& path) {
  if (path.empty() || fs::exists(path)) return path;
  if (fs::path(path).is_absolute()) return path;
  const char* base = std::getenv("WDN_DATA_DIR");
  if (!base) return path;
  fs::path candidate = fs::path(base) / path;
  if (fs::exists(candidate)) return candidate.string();
  return path;
}

void write_run_manifest(const std::string& out_dir, const std::string& command,
                        const std::vector<std::string>& argv_echo,
                        const std::vector<std::string>& inputs,
                        const std::vector<std::string>& outputs, uint64_t seed) {
  json j;
  j["command"] = command;
  j["argv"] = argv_echo;
  j["seed"] = seed;
  j["tool_version"] = kVersion;
  j["timestamp"] = iso_timestamp();
  json hashes = json::object();
  for (const std::string& p : inputs) hashes[p] = hex64(fnv1a64(read_file(p)));
  j["input_hashes"] = hashes;
  j["outputs"] = outputs;
  std::ofstream out(fs::path(out_dir) / "run_manifest.json");
  out << j.dump(2) << "\n";
}

json violations_json(const ValidationReport& rep) {
  json arr = json::array();
  for (const auto& v : rep.violations)
    arr.push_back({{"code", v.code}, {"subject", v.subject}, {"detail", v.detail}});
  return arr;
}

json state_json(const NetworkModel& m, const GraphTopology& g, const HydraulicState& st) {
  json nodes = json::array();
  for (int64_t n = 0; n < g.node_count; ++n)
    nodes.push_back({{"id", g.node_ids[n]},
                     {"kind", g.node_kind[n] == 0 ? "junction" : (g.node_kind[n] == 1 ? "reservoir" : "tank")},
                     {"head", st.head[n]},
                     {"pressure", st.pressure[n]}});
  json links = json::array();
  for (int64_t l = 0; l < g.link_count(); ++l)
    links.push_back({{"id", g.link_ids[l]},
                     {"flow", st.flow[l]},
                     {"active", st.link_active.empty() ? true : st.link_active[l] != 0}});
  return json{{"converged", st.converged},
              {"iterations", st.iterations},
              {"max_flow_residual", st.max_flow_residual},
              {"max_head_residual", st.max_head_residual},
              {"nodes", nodes},
              {"links", links}};
}

json metrics_json(const Metrics& m, const std::string& predictor) {
  return json{{"mae", m.mae},
              {"mape", m.mape},
              {"masking_ratio", m.masking_ratio},
              {"trials", m.trials},
              {"dataset", m.dataset_id},
              {"predictor", predictor}};
}

void write_metrics_csv(const std::string& path, const Metrics& m, const GraphTopology& g) {
  std::ofstream out(path);
  if (!out) fail(Errc::IoError, "cannot write " + path);
  out << "node_id,mae_mh2o,masked_count\n";
  for (int64_t n = 0; n < g.node_count; ++n)
    out << g.node_ids[n] << "," << m.per_node_mae[n] << "," << m.per_node_count[n] << "\n";
}

struct TrainCliOptions {
  TrainConfig train;
  ModelConfig model;
  void attach(CLI::App* cmd) {
    cmd->add_option("--epochs", train.epochs);
    cmd->add_option("--batch", train.batch);
    cmd->add_option("--lr", train.lr);
    cmd->add_option("--ratio", train.ratio);
    cmd->add_option("--seed", train.seed);
    cmd->add_option("--patience", train.patience);
    cmd->add_option("--clip-norm", train.clip_norm);
    cmd->add_option("--blocks", model.blocks);
    cmd->add_option("--heads", model.heads);
    cmd->add_option("--hidden", model.hidden);
    cmd->add_option("--decoder-hidden", model.decoder_hidden);
    cmd->add_option("--leaky-slope", model.leaky_slope);
    cmd->add_flag("--edge-attrs", model.use_edge_attrs);
    cmd->add_flag("--demand-channel", model.demand_channel);
    cmd->add_flag("--mse", model.mse_loss);
  }
};

json history_json(const TrainHistory& h) {
  json epochs = json::array();
  for (const auto& e : h.epochs)
    epochs.push_back({{"train_loss", e.train_loss},
                      {"val_mae", e.val_mae},
                      {"val_mape", e.val_mape},
                      {"timing", {{"wall_seconds", e.wall_seconds},
                                  {"samples_per_second", e.samples_per_second}}}});
  return json{{"epochs", epochs}, {"best_epoch", h.best_epoch}, {"best_val_mae", h.best_val_mae}};
}

std::string train_provenance(const std::string& command, const std::vector<std::string>& data_dirs,
                             const TrainConfig& cfg) {
  json j;
  j["command"] = command;
  j["datasets"] = data_dirs;
  j["seed"] = cfg.seed;
  j["epochs"] = cfg.epochs;
  j["ratio"] = cfg.ratio;
  j["tool_version"] = kVersion;
  return j.dump();
}

int finish_training_command(const std::string& command, const TrainResult& res,
                            const std::string& out_dir, const std::vector<std::string>& argv_echo,
                            const std::vector<std::string>& inputs, uint64_t seed) {
  fs::create_directories(out_dir);
  std::string ckpt = (fs::path(out_dir) / "checkpoint.wdngat").string();
  std::string hist = (fs::path(out_dir) / "history.json").string();
  save_checkpoint(res.weights, ckpt);
  {
    std::ofstream out(hist);
    out << history_json(res.history).dump(2) << "\n";
  }
  write_run_manifest(out_dir, command, argv_echo, inputs, {ckpt, hist}, seed);
  json summary{{"checkpoint", ckpt},
               {"history", hist},
               {"best_val_mae", res.history.best_val_mae},
               {"best_epoch", res.history.best_epoch},
               {"epochs_run", static_cast<int64_t>(res.history.epochs.size())}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

std::vector<int64_t> split_subset(const SnapshotDataset& ds, const std::string& split) {
  if (split == "train") return ds.train_indices();
  if (split == "val") return ds.val_indices();
  std::vector<int64_t> all(ds.count);
  for (int64_t i = 0; i < ds.count; ++i) all[i] = i;
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> argv_echo(argv, argv + argc);
  CLI::App app{"water distribution network pressure-estimation toolchain"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  // validate
  auto* c_validate = app.add_subcommand("validate", "parse and validate an INP file");
  std::string v_inp;
  c_validate->add_option("inp", v_inp, "network INP file")->required();

  // simulate
  auto* c_simulate = app.add_subcommand("simulate", "steady-state solve with base or supplied controls");
  std::string s_inp, s_controls;
  double s_demand_scale = 1.0;
  SolverConfig s_solver;
  c_simulate->add_option("inp", s_inp)->required();
  c_simulate->add_option("--controls", s_controls, "JSON control overrides");
  c_simulate->add_option("--demand-scale", s_demand_scale);
  c_simulate->add_option("--tol-flow", s_solver.tol_flow);
  c_simulate->add_option("--tol-head", s_solver.tol_head);
  c_simulate->add_option("--max-iterations", s_solver.max_iterations);

  // generate
  auto* c_generate = app.add_subcommand("generate", "write a snapshot dataset directory");
  std::string g_inp, g_out, g_mode = "random", g_pattern;
  int64_t g_count = 1000;
  uint64_t g_seed = 0;
  int g_workers = 1, g_timesteps = 24;
  SamplingConfig g_sampling;
  NoiseConfig g_noise;
  SolverConfig g_solver;
  bool g_ignore_node_patterns = false;
  c_generate->add_option("inp", g_inp)->required();
  c_generate->add_option("--out", g_out)->required();
  c_generate->add_option("--mode", g_mode)->check(CLI::IsMember({"random", "realistic"}));
  c_generate->add_option("--count", g_count);
  c_generate->add_option("--seed", g_seed);
  c_generate->add_option("--workers", g_workers);
  c_generate->add_option("--demand-lo", g_sampling.demand_lo);
  c_generate->add_option("--demand-hi", g_sampling.demand_hi);
  c_generate->add_option("--head-delta", g_sampling.head_delta);
  c_generate->add_option("--pump-lo", g_sampling.pump_lo);
  c_generate->add_option("--pump-hi", g_sampling.pump_hi);
  c_generate->add_option("--timesteps", g_timesteps);
  c_generate->add_option("--pattern", g_pattern, "named pattern for realistic mode");
  c_generate->add_flag("--ignore-node-patterns", g_ignore_node_patterns);
  c_generate->add_option("--sigma-demand", g_noise.sigma_demand);
  c_generate->add_option("--sigma-head", g_noise.sigma_head);
  c_generate->add_option("--tol-flow", g_solver.tol_flow);
  c_generate->add_option("--tol-head", g_solver.tol_head);

  // train / pretrain / finetune
  auto* c_train = app.add_subcommand("train", "train on one dataset");
  std::vector<std::string> t_data;
  std::string t_out;
  TrainCliOptions t_opts;
  c_train->add_option("--data", t_data)->required()->expected(1);
  c_train->add_option("--out", t_out)->required();
  t_opts.attach(c_train);

  auto* c_pretrain = app.add_subcommand("pretrain", "train one model across several datasets");
  std::vector<std::string> p_data;
  std::string p_out;
  TrainCliOptions p_opts;
  c_pretrain->add_option("--data", p_data)->required()->expected(-2);
  c_pretrain->add_option("--out", p_out)->required();
  p_opts.attach(c_pretrain);

  auto* c_finetune = app.add_subcommand("finetune", "continue training from a checkpoint");
  std::string f_ckpt, f_out;
  std::vector<std::string> f_data;
  TrainCliOptions f_opts;
  double f_lr_scale = 0.1;
  c_finetune->add_option("--checkpoint", f_ckpt)->required();
  c_finetune->add_option("--data", f_data)->required()->expected(1);
  c_finetune->add_option("--out", f_out)->required();
  c_finetune->add_option("--lr-scale", f_lr_scale);
  f_opts.attach(c_finetune);

  // evaluate
  auto* c_evaluate = app.add_subcommand("evaluate", "metrics for a checkpoint or the harmonic baseline");
  std::string e_ckpt, e_data, e_split = "val", e_csv, e_norm_from;
  double e_ratio = 0.95;
  int e_trials = 10;
  uint64_t e_mask_seed = 0;
  bool e_baseline = false;
  c_evaluate->add_option("--checkpoint", e_ckpt);
  c_evaluate->add_option("--data", e_data)->required();
  c_evaluate->add_option("--ratio", e_ratio);
  c_evaluate->add_option("--trials", e_trials);
  c_evaluate->add_option("--mask-seed", e_mask_seed);
  c_evaluate->add_option("--split", e_split)->check(CLI::IsMember({"train", "val", "all"}));
  c_evaluate->add_option("--csv", e_csv, "per-node error table");
  c_evaluate->add_option("--norm-from", e_norm_from, "dataset directory supplying normalization stats");
  c_evaluate->add_flag("--baseline", e_baseline, "harmonic interpolation instead of a checkpoint");

  // report
  auto* c_report = app.add_subcommand("report", "distribution-shift report between two datasets");
  std::string r_a, r_b, r_csv;
  int r_bins = 100;
  c_report->add_option("--a", r_a)->required();
  c_report->add_option("--b", r_b)->required();
  c_report->add_option("--bins", r_bins);
  c_report->add_option("--csv", r_csv, "histogram table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*c_validate) {
      NetworkModel m;
      try {
        m = parse_inp(read_file(resolve_path(v_inp)));
      } catch (const Error& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        std::cout << json{{"valid", false}, {"parse_error", e.what()}}.dump(2) << "\n";
        return 2;
      }
      ValidationReport rep = validate(m);
      json out{{"valid", rep.ok()},
               {"violations", violations_json(rep)},
               {"warnings", m.warnings},
               {"junctions", m.junctions.size()},
               {"reservoirs", m.reservoirs.size()},
               {"tanks", m.tanks.size()},
               {"pipes", m.pipes.size()},
               {"pumps", m.pumps.size()},
               {"valves", m.valves.size()}};
      std::cout << out.dump(2) << "\n";
      return rep.ok() ? 0 : 1;
    }

    if (*c_simulate) {
      NetworkModel m = parse_inp(read_file(resolve_path(s_inp)));
      ValidationReport rep = validate(m);
      if (!rep.ok()) {
        std::cerr << "model failed validation\n";
        std::cout << json{{"valid", false}, {"violations", violations_json(rep)}}.dump(2) << "\n";
        return 1;
      }
      ControlSettings controls = base_controls(m);
      if (!s_controls.empty()) {
        json j = json::parse(read_file(s_controls));
        if (j.contains("demands"))
          for (size_t i = 0; i < m.junctions.size(); ++i)
            if (j["demands"].contains(m.junctions[i].id))
              controls.junction_demand[i] = j["demands"][m.junctions[i].id];
        if (j.contains("reservoir_heads"))
          for (size_t i = 0; i < m.reservoirs.size(); ++i)
            if (j["reservoir_heads"].contains(m.reservoirs[i].id))
              controls.reservoir_head[i] = j["reservoir_heads"][m.reservoirs[i].id];
        if (j.contains("pump_speeds"))
          for (size_t i = 0; i < m.pumps.size(); ++i)
            if (j["pump_speeds"].contains(m.pumps[i].id))
              controls.pump_speed[i] = j["pump_speeds"][m.pumps[i].id];
        if (j.contains("closed_links")) {
          GraphTopology g = to_graph(m);
          for (const auto& id : j["closed_links"]) {
            for (int64_t l = 0; l < g.link_count(); ++l)
              if (g.link_ids[l] == id.get<std::string>()) controls.link_status[l] = LinkStatus::Closed;
          }
        }
      }
      for (double& d : controls.junction_demand) d *= s_demand_scale;
      GraphTopology g = to_graph(m);
      HydraulicState st = solve_steady_state(m, controls, s_solver);
      std::cout << state_json(m, g, st).dump(2) << "\n";
      return st.converged ? 0 : 3;
    }

    if (*c_generate) {
      std::string inp = resolve_path(g_inp);
      NetworkModel m = parse_inp(read_file(inp));
      SnapshotDataset ds;
      if (g_mode == "random") {
        g_sampling.seed = g_seed;
        ds = generate_snapshots(m, g_sampling, g_count, g_solver, g_workers);
      } else {
        g_noise.seed = g_seed;
        PatternConfig pat;
        pat.timesteps = g_timesteps;
        pat.source = g_pattern;
        pat.prefer_node_patterns = !g_ignore_node_patterns;
        ds = generate_realistic_testset(m, pat, g_noise, g_solver);
      }
      ds.manifest.seed = g_seed;
      ds.manifest.network_name = fs::path(inp).stem().string();
      // semantic provenance lives in the structured manifest fields; the full
      // argv echo (with paths and worker counts) goes to run_manifest.json so
      // identical configurations produce identical dataset bytes
      ds.manifest.command = "wdn generate";
      save_dataset(ds, g_out);
      write_run_manifest(g_out, "generate", argv_echo, {inp}, {g_out}, g_seed);
      json out{{"out", g_out},
               {"mode", g_mode},
               {"network", ds.manifest.network_name},
               {"snapshot_count", ds.count},
               {"node_count", ds.topology.node_count},
               {"link_count", ds.topology.link_count()},
               {"resampled", ds.manifest.resampled},
               {"pressure_range", {ds.manifest.norm.pressure_min, ds.manifest.norm.pressure_max}}};
      std::cout << out.dump(2) << "\n";
      return 0;
    }

    if (*c_train) {
      std::string dir = resolve_path(t_data[0]);
      SnapshotDataset ds = load_dataset(dir);
      TrainResult res = train(ds, t_opts.train, t_opts.model);
      res.weights.provenance = train_provenance("train", {dir}, t_opts.train);
      return finish_training_command("train", res, t_out, argv_echo,
                                     {(fs::path(dir) / "manifest.json").string()}, t_opts.train.seed);
    }

    if (*c_pretrain) {
      std::vector<SnapshotDataset> datasets;
      std::vector<const SnapshotDataset*> ptrs;
      std::vector<std::string> manifests, dirs;
      for (const std::string& d : p_data) {
        dirs.push_back(resolve_path(d));
        datasets.push_back(load_dataset(dirs.back()));
        manifests.push_back((fs::path(dirs.back()) / "manifest.json").string());
      }
      for (const auto& ds : datasets) ptrs.push_back(&ds);
      TrainResult res = pretrain_multi(ptrs, p_opts.train, p_opts.model);
      res.weights.provenance = train_provenance("pretrain", dirs, p_opts.train);
      return finish_training_command("pretrain", res, p_out, argv_echo, manifests, p_opts.train.seed);
    }

    if (*c_finetune) {
      std::string dir = resolve_path(f_data[0]);
      ModelWeights w = load_checkpoint(resolve_path(f_ckpt));
      SnapshotDataset ds = load_dataset(dir);
      TrainConfig cfg = f_opts.train;
      cfg.finetune_lr_scale = f_lr_scale;
      TrainResult res = fine_tune(w, ds, cfg);
      res.weights.provenance = train_provenance("finetune", {dir}, cfg);
      return finish_training_command("finetune", res, f_out, argv_echo,
                                     {resolve_path(f_ckpt), (fs::path(dir) / "manifest.json").string()},
                                     cfg.seed);
    }

    if (*c_evaluate) {
      SnapshotDataset ds = load_dataset(resolve_path(e_data));
      std::vector<int64_t> subset = split_subset(ds, e_split);
      NormStats stats = ds.manifest.norm;
      if (!e_norm_from.empty()) stats = load_dataset(resolve_path(e_norm_from)).manifest.norm;
      Metrics metrics;
      std::string predictor;
      if (e_baseline) {
        predictor = "harmonic";
        Predictor p = [&ds](const MaskedSample& s) { return baseline_interpolate(ds.topology, s); };
        metrics = evaluate_with(p, ds, e_ratio, e_mask_seed, e_trials, {}, &subset, &stats);
      } else {
        if (e_ckpt.empty()) fail(Errc::IoError, "either --checkpoint or --baseline is required");
        predictor = "gatres";
        ModelWeights w = load_checkpoint(resolve_path(e_ckpt));
        metrics = evaluate(w, ds, e_ratio, e_mask_seed, e_trials, &subset, &stats);
      }
      if (!e_csv.empty()) write_metrics_csv(e_csv, metrics, ds.topology);
      json out = metrics_json(metrics, predictor);
      out["split"] = e_split;
      std::cout << out.dump(2) << "\n";
      return 0;
    }

    if (*c_report) {
      SnapshotDataset a = load_dataset(resolve_path(r_a));
      SnapshotDataset b = load_dataset(resolve_path(r_b));
      ShiftReport rep = distribution_report(a, b, r_bins);
      if (!r_csv.empty()) {
        std::ofstream csv(r_csv);
        if (!csv) fail(Errc::IoError, "cannot write " + r_csv);
        csv << "bin_lo,bin_hi,density_a,density_b\n";
        for (size_t i = 0; i + 1 < rep.bin_edges.size(); ++i)
          csv << rep.bin_edges[i] << "," << rep.bin_edges[i + 1] << "," << rep.density_a[i] << ","
              << rep.density_b[i] << "\n";
      }
      json out{{"ks", rep.ks},
               {"mean_a", rep.mean_a},
               {"var_a", rep.var_a},
               {"mean_b", rep.mean_b},
               {"var_b", rep.var_b},
               {"bins", r_bins},
               {"bin_edges", rep.bin_edges},
               {"density_a", rep.density_a},
               {"density_b", rep.density_b}};
      std::cout << out.dump(2) << "\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error [" << errc_name(e.code()) << "]: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
