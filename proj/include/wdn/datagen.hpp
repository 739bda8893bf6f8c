#pragma once

#include "wdn/dataset.hpp"
#include "wdn/rng.hpp"

namespace wdn {

// One control draw: junction demands scaled by iid U[lo,hi] multipliers,
// reservoir heads shifted by U[-delta,+delta], pump speeds U[lo,hi].
ControlSettings sample_controls(const NetworkModel& model, const SamplingConfig& cfg, Rng& rng);

// S randomized steady-state snapshots. Non-converged draws are resampled with
// a per-index attempt counter, so output is byte-identical for any worker
// count. Throws Errc::GenerationStalled when resampling dominates.
SnapshotDataset generate_snapshots(const NetworkModel& model, const SamplingConfig& cfg,
                                   int64_t count, const SolverConfig& solver_cfg = {},
                                   int workers = 1);

// T pattern-driven snapshots with pre-simulation Gaussian noise: demands get
// base * pattern[t] * max(0, 1 + eps), reservoir heads get additive noise.
SnapshotDataset generate_realistic_testset(const NetworkModel& model, const PatternConfig& pattern,
                                           const NoiseConfig& noise,
                                           const SolverConfig& solver_cfg = {});

struct ShiftReport {
  std::vector<double> bin_edges;   // bins + 1, shared between both sets
  std::vector<double> density_a;   // integrates to 1
  std::vector<double> density_b;
  double ks = 0.0;                 // two-sample Kolmogorov-Smirnov statistic
  double mean_a = 0, var_a = 0;
  double mean_b = 0, var_b = 0;
};

// Pooled junction-pressure histograms on shared bins plus the two-sample KS
// statistic. Throws Errc::TopologyMismatch for datasets on different graphs.
ShiftReport distribution_report(const SnapshotDataset& a, const SnapshotDataset& b, int bins = 100);

}  // namespace wdn
