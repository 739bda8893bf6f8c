#pragma once

#include <functional>
#include <string>
#include <vector>

#include "wdn/gnn.hpp"

namespace wdn {

struct TrainConfig {
  int epochs = 30;
  int batch = 8;
  double lr = 1e-3;
  double ratio = 0.95;  // masking ratio for training draws
  uint64_t seed = 0;
  int patience = 8;            // early stop after this many non-improving epochs
  double clip_norm = 1.0;      // global gradient norm clip
  double finetune_lr_scale = 0.1;
};

struct EpochStats {
  double train_loss = 0;          // mean normalized loss across steps
  double val_mae = 0;             // mH2O
  double val_mape = 0;            // percent
  double wall_seconds = 0;        // provenance only, excluded from equality
  double samples_per_second = 0;  // provenance only
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;  // -1 = initial weights were never improved on
  double best_val_mae = 0;
};

// Compares losses and metrics; wall-clock fields are provenance, not outputs.
bool history_equal_deterministic(const TrainHistory& a, const TrainHistory& b);

struct TrainResult {
  ModelWeights weights;  // best validation weights (initial state included)
  TrainHistory history;
};

// Single-network training: per step draw a train snapshot, a fresh random
// sensor mask, run forward/backward, Adam update every `batch` samples.
TrainResult train(const SnapshotDataset& ds, const TrainConfig& cfg, const ModelConfig& model_cfg);

// One weight set over several topologies; steps sample a dataset
// proportionally to its training-split size. A single-dataset list behaves
// exactly as train().
TrainResult pretrain_multi(const std::vector<const SnapshotDataset*>& datasets,
                           const TrainConfig& cfg, const ModelConfig& model_cfg);

// Continues from pretrained weights at cfg.lr * cfg.finetune_lr_scale. The
// starting weights participate in best-validation tracking, so the result
// never validates worse than the input.
TrainResult fine_tune(const ModelWeights& weights, const SnapshotDataset& ds,
                      const TrainConfig& cfg);

inline constexpr double kMapeGuard = 1.0;  // mH2O, denominator clamp

struct Metrics {
  double mae = 0;   // mH2O over masked junctions, de-normalized
  double mape = 0;  // percent, |err| / max(|true|, kMapeGuard)
  std::vector<double> per_node_mae;     // mH2O; 0 where never masked
  std::vector<int64_t> per_node_count;  // masked occurrences per node
  double masking_ratio = 0;
  int trials = 0;
  std::string dataset_id;
};

// Sub-seed for one evaluation trial; trial 0 reuses the parent seed so a
// k-trial run equals the mean of k single-trial runs on these seeds.
uint64_t trial_seed(uint64_t mask_seed, int trial);

using Predictor = std::function<std::vector<double>(const MaskedSample&)>;

Metrics evaluate(const ModelWeights& weights, const SnapshotDataset& ds, double ratio,
                 uint64_t mask_seed, int trials, const std::vector<int64_t>* subset = nullptr,
                 const NormStats* stats_override = nullptr);

// Same mask machinery with an arbitrary predictor (used for baselines; with
// the same mask_seed the masks are identical to evaluate's).
Metrics evaluate_with(const Predictor& predict, const SnapshotDataset& ds, double ratio,
                      uint64_t mask_seed, int trials, const MaskOptions& opts = {},
                      const std::vector<int64_t>* subset = nullptr,
                      const NormStats* stats_override = nullptr);

// Graph-harmonic interpolation: masked values solve the Laplacian system with
// sensor values as Dirichlet data; edge weights 1/length for pipes, 1 for
// pumps and valves. Exact solve, no learning.
std::vector<double> baseline_interpolate(const GraphTopology& topology, const MaskedSample& sample);

}  // namespace wdn
