#include "wdn/datagen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace wdn {

ControlSettings sample_controls(const NetworkModel& m, const SamplingConfig& cfg, Rng& rng) {
  ControlSettings c = base_controls(m);
  for (double& d : c.junction_demand) d *= rng.uniform(cfg.demand_lo, cfg.demand_hi);
  for (double& h : c.reservoir_head) h += rng.uniform(-cfg.head_delta, cfg.head_delta);
  for (double& w : c.pump_speed) w = rng.uniform(cfg.pump_lo, cfg.pump_hi);
  return c;
}

namespace {

constexpr int kMaxAttempts = 64;
constexpr int kStallWindow = 50;

struct SnapshotSink {
  SnapshotDataset& ds;
  int64_t node_count;
  void store(int64_t s, const ControlSettings& c, const HydraulicState& st) {
    const int64_t N = node_count;
    std::copy(st.pressure.begin(), st.pressure.end(), ds.pressures.begin() + s * N);
    std::copy(st.head.begin(), st.head.end(), ds.heads.begin() + s * N);
    double* drow = &ds.demands[s * N];
    std::fill(drow, drow + N, 0.0);
    std::copy(c.junction_demand.begin(), c.junction_demand.end(), drow);
    double* crow = &ds.controls[s * (int64_t)(c.reservoir_head.size() + c.pump_speed.size())];
    std::copy(c.reservoir_head.begin(), c.reservoir_head.end(), crow);
    std::copy(c.pump_speed.begin(), c.pump_speed.end(), crow + c.reservoir_head.size());
  }
};

SnapshotDataset make_empty(const NetworkModel& m, int64_t count) {
  SnapshotDataset ds;
  ds.topology = to_graph(m);
  ds.count = count;
  const int64_t N = ds.topology.node_count;
  ds.pressures.assign(count * N, 0.0);
  ds.demands.assign(count * N, 0.0);
  ds.heads.assign(count * N, 0.0);
  ds.controls.assign(count * (int64_t)(m.reservoirs.size() + m.pumps.size()), 0.0);
  return ds;
}

void check_stall(const std::vector<int>& attempts) {
  // any exhausted index, or a 50-index window where resamples outnumber
  // successes, signals infeasible sampling ranges
  for (size_t i = 0; i < attempts.size(); ++i)
    if (attempts[i] >= kMaxAttempts)
      fail(Errc::GenerationStalled,
           "snapshot " + std::to_string(i) + " failed to converge after " +
               std::to_string(kMaxAttempts) + " resamples");
  int64_t window = std::min<int64_t>(kStallWindow, static_cast<int64_t>(attempts.size()));
  int64_t resamples = 0;
  for (int64_t i = 0; i < static_cast<int64_t>(attempts.size()); ++i) {
    resamples += attempts[i] - 1;
    if (i >= window) resamples -= attempts[i - window] - 1;
    if (i + 1 >= window && resamples > window)
      fail(Errc::GenerationStalled, "resample rate above 50% around snapshot " + std::to_string(i));
  }
}

}  // namespace

SnapshotDataset generate_snapshots(const NetworkModel& m, const SamplingConfig& cfg, int64_t count,
                                   const SolverConfig& solver_cfg, int workers) {
  if (count < 1) fail(Errc::EmptyDataset, "snapshot count must be >= 1");
  ValidationReport rep = validate(m);
  if (!rep.ok()) fail(Errc::InvalidModel, "model failed validation: " + rep.violations.front().code);

  SnapshotDataset ds = make_empty(m, count);
  SnapshotSink sink{ds, ds.topology.node_count};
  std::vector<int> attempts(count, 0);
  std::atomic<bool> stalled{false};

  auto worker = [&](int64_t begin, int64_t end) {
    for (int64_t s = begin; s < end && !stalled.load(std::memory_order_relaxed); ++s) {
      for (int a = 0; a < kMaxAttempts; ++a) {
        Rng rng(derive_seed(cfg.seed, static_cast<uint64_t>(s), static_cast<uint64_t>(a)));
        ControlSettings c = sample_controls(m, cfg, rng);
        ++attempts[s];
        try {
          HydraulicState st = solve_steady_state(m, c, solver_cfg);
          if (st.converged) {
            sink.store(s, c, st);
            break;
          }
        } catch (const Error&) {
          // singular draw (e.g. pump closure isolated a junction): resample
        }
        if (attempts[s] >= kMaxAttempts) stalled.store(true, std::memory_order_relaxed);
      }
    }
  };

  workers = std::max(1, workers);
  if (workers == 1 || count < 2) {
    worker(0, count);
  } else {
    std::vector<std::thread> pool;
    int64_t per = (count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      int64_t b = w * per, e = std::min<int64_t>(count, b + per);
      if (b >= e) break;
      pool.emplace_back(worker, b, e);
    }
    for (auto& t : pool) t.join();
  }

  check_stall(attempts);
  int64_t resampled = 0;
  for (int a : attempts) resampled += a - 1;

  ds.manifest.network_name = m.title.empty() ? "unnamed" : m.title;
  ds.manifest.mode = "random";
  ds.manifest.realistic = false;
  ds.manifest.seed = cfg.seed;
  ds.manifest.sampling = cfg;
  ds.manifest.solver = solver_cfg;
  ds.manifest.resampled = resampled;
  ds.manifest.split_seed = derive_seed(cfg.seed, 0x5971);
  finalize_manifest(ds);
  return ds;
}

SnapshotDataset generate_realistic_testset(const NetworkModel& m, const PatternConfig& pattern,
                                           const NoiseConfig& noise, const SolverConfig& solver_cfg) {
  if (pattern.timesteps < 1) fail(Errc::EmptyDataset, "need at least one timestep");
  ValidationReport rep = validate(m);
  if (!rep.ok()) fail(Errc::InvalidModel, "model failed validation: " + rep.violations.front().code);

  // resolve one multiplier sequence per junction
  const std::vector<double>* source = nullptr;
  if (!pattern.source.empty()) {
    auto it = m.patterns.find(pattern.source);
    if (it == m.patterns.end())
      fail(Errc::UnknownCurveReference, "pattern '" + pattern.source + "' not in the model");
    source = &it->second;
  }
  std::vector<const std::vector<double>*> node_pattern(m.junctions.size(), nullptr);
  for (size_t i = 0; i < m.junctions.size(); ++i) {
    const auto& j = m.junctions[i];
    if (pattern.prefer_node_patterns && !j.pattern.empty()) node_pattern[i] = &m.patterns.at(j.pattern);
    else if (source) node_pattern[i] = source;
    else node_pattern[i] = &kBuiltinDiurnal;
    if (node_pattern[i]->empty()) fail(Errc::EmptyDataset, "empty demand pattern");
  }

  const int64_t T = pattern.timesteps;
  SnapshotDataset ds = make_empty(m, T);
  SnapshotSink sink{ds, ds.topology.node_count};
  std::vector<int> attempts(T, 0);

  for (int64_t t = 0; t < T; ++t) {
    bool stored = false;
    for (int a = 0; a < kMaxAttempts && !stored; ++a) {
      Rng rng(derive_seed(noise.seed, static_cast<uint64_t>(t), static_cast<uint64_t>(a), 0xF00D));
      ControlSettings c = base_controls(m);
      for (size_t i = 0; i < c.junction_demand.size(); ++i) {
        double mult = (*node_pattern[i])[t % node_pattern[i]->size()];
        double eps = noise.sigma_demand > 0 ? noise.sigma_demand * rng.gaussian() : 0.0;
        c.junction_demand[i] *= mult * std::max(0.0, 1.0 + eps);
      }
      for (double& h : c.reservoir_head)
        h += noise.sigma_head > 0 ? noise.sigma_head * rng.gaussian() : 0.0;
      ++attempts[t];
      try {
        HydraulicState st = solve_steady_state(m, c, solver_cfg);
        if (st.converged) {
          sink.store(t, c, st);
          stored = true;
        }
      } catch (const Error&) {
      }
    }
  }
  check_stall(attempts);
  int64_t resampled = 0;
  for (int a : attempts) resampled += a - 1;

  ds.manifest.network_name = m.title.empty() ? "unnamed" : m.title;
  ds.manifest.mode = "realistic";
  ds.manifest.realistic = true;
  ds.manifest.seed = noise.seed;
  ds.manifest.noise = noise;
  ds.manifest.pattern = pattern;
  ds.manifest.solver = solver_cfg;
  ds.manifest.resampled = resampled;
  ds.manifest.split_seed = derive_seed(noise.seed, 0x5971);
  finalize_manifest(ds);
  return ds;
}

namespace {

std::vector<double> pooled_junction_pressures(const SnapshotDataset& ds) {
  std::vector<double> out;
  const int64_t N = ds.topology.node_count;
  out.reserve(ds.count * ds.topology.junction_count);
  for (int64_t s = 0; s < ds.count; ++s)
    for (int64_t n = 0; n < N; ++n)
      if (ds.topology.node_kind[n] == 0) out.push_back(ds.pressures[s * N + n]);
  return out;
}

}  // namespace

ShiftReport distribution_report(const SnapshotDataset& a, const SnapshotDataset& b, int bins) {
  if (!same_topology(a.topology, b.topology))
    fail(Errc::TopologyMismatch, "datasets are on different topologies");
  if (bins < 1) fail(Errc::ShapeMismatch, "bins must be >= 1");

  std::vector<double> xa = pooled_junction_pressures(a);
  std::vector<double> xb = pooled_junction_pressures(b);

  ShiftReport rep;
  auto moments = [](const std::vector<double>& x, double& mean, double& var) {
    mean = 0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    var = 0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
  };
  moments(xa, rep.mean_a, rep.var_a);
  moments(xb, rep.mean_b, rep.var_b);

  double lo = std::min(*std::min_element(xa.begin(), xa.end()), *std::min_element(xb.begin(), xb.end()));
  double hi = std::max(*std::max_element(xa.begin(), xa.end()), *std::max_element(xb.begin(), xb.end()));
  if (hi <= lo) hi = lo + 1.0;
  rep.bin_edges.resize(bins + 1);
  for (int i = 0; i <= bins; ++i) rep.bin_edges[i] = lo + (hi - lo) * i / bins;

  auto histogram = [&](const std::vector<double>& x) {
    std::vector<double> h(bins, 0.0);
    double width = (hi - lo) / bins;
    for (double v : x) {
      int i = std::min(bins - 1, static_cast<int>((v - lo) / width));
      h[std::max(0, i)] += 1.0;
    }
    for (double& c : h) c /= static_cast<double>(x.size()) * width;  // density
    return h;
  };
  rep.density_a = histogram(xa);
  rep.density_b = histogram(xb);

  // two-sample KS over the pooled values
  std::sort(xa.begin(), xa.end());
  std::sort(xb.begin(), xb.end());
  size_t i = 0, k = 0;
  double ks = 0.0;
  const double na = static_cast<double>(xa.size()), nb = static_cast<double>(xb.size());
  while (i < xa.size() && k < xb.size()) {
    double v = std::min(xa[i], xb[k]);
    while (i < xa.size() && xa[i] <= v) ++i;
    while (k < xb.size() && xb[k] <= v) ++k;
    ks = std::max(ks, std::abs(i / na - k / nb));
  }
  rep.ks = ks;
  return rep;
}

}  // namespace wdn
