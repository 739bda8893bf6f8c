#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wdn/graph.hpp"
#include "wdn/hydraulics.hpp"

namespace wdn {

struct SamplingConfig {
  double demand_lo = 0.2, demand_hi = 2.0;  // multipliers on base demand
  double head_delta = 5.0;                  // m, uniform +- on reservoir heads
  double pump_lo = 0.8, pump_hi = 1.2;      // relative speed range
  uint64_t seed = 0;
};

struct NoiseConfig {
  double sigma_demand = 0.05;  // relative std dev, multiplicative on demands
  double sigma_head = 0.1;     // m, additive on reservoir heads
  uint64_t seed = 0;
};

struct PatternConfig {
  int timesteps = 24;
  std::string source;               // named pattern; empty = builtin template
  bool prefer_node_patterns = true; // use each junction's own pattern when set
};

// 24-step diurnal template with morning/evening peaks, normalized to mean 1.
extern const std::vector<double> kBuiltinDiurnal;

// Per-channel min/max over the training split, used for feature scaling.
struct NormStats {
  double pressure_min = 0, pressure_max = 1;
  double head_min = 0, head_max = 1;
  double demand_min = 0, demand_max = 1;
  double elevation_min = 0, elevation_max = 1;
};

struct DatasetManifest {
  std::string network_name;
  std::string mode;  // "random" | "realistic"
  bool realistic = false;
  uint64_t seed = 0;
  SamplingConfig sampling;
  NoiseConfig noise;
  PatternConfig pattern;
  SolverConfig solver;
  int64_t snapshot_count = 0;
  int64_t node_count = 0;
  int64_t link_count = 0;
  int64_t resampled = 0;  // discarded non-converged draws
  double train_fraction = 0.9;
  uint64_t split_seed = 0;
  NormStats norm;
  int64_t chunk_rows = 1024;
  std::string tool_version;
  std::string command;  // creation provenance
};

// Columnar snapshot store. Rows align with GraphTopology node order; the
// controls row layout is [reservoir heads..., pump speeds...].
struct SnapshotDataset {
  GraphTopology topology;
  int64_t count = 0;
  std::vector<double> pressures;  // S x N, mH2O
  std::vector<double> demands;    // S x N, m3/s (0 at fixed-head nodes)
  std::vector<double> heads;      // S x N, m
  std::vector<double> controls;   // S x C
  DatasetManifest manifest;

  int64_t control_width() const;
  const double* pressure_row(int64_t s) const { return &pressures[s * topology.node_count]; }
  const double* demand_row(int64_t s) const { return &demands[s * topology.node_count]; }
  const double* head_row(int64_t s) const { return &heads[s * topology.node_count]; }

  std::vector<int64_t> train_indices() const;
  std::vector<int64_t> val_indices() const;
};

// Directory layout: manifest.json plus one little-endian row-major binary
// file per array (pressures.f64, demands.f64, heads.f64, controls.f64,
// edge_index.i64, edge_attr.f64, node_static.f64), written in blocks of
// manifest.chunk_rows snapshot rows.
void save_dataset(const SnapshotDataset& ds, const std::string& dir);
SnapshotDataset load_dataset(const std::string& dir);

// Finalizes split bookkeeping and normalization stats (train rows only).
void finalize_manifest(SnapshotDataset& ds);

}  // namespace wdn
