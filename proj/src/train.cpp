#include "wdn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace wdn {

namespace {

constexpr uint64_t kInitTag = 0x11a7;
constexpr uint64_t kStepTag = 0x57e9;
constexpr uint64_t kValTag = 0x7a1d;

struct Adam {
  double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t t = 0;
  std::vector<Tensor> m, v;

  explicit Adam(const ModelWeights& w, double lr_) : lr(lr_) {
    for (const Tensor& p : w.params) {
      m.push_back(Tensor::zeros(p.shape));
      v.push_back(Tensor::zeros(p.shape));
    }
  }

  void step(ModelWeights& w, const Gradients& g) {
    ++t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    bool finite = true;
    for (size_t i = 0; i < w.params.size(); ++i) {
      double* wp = w.params[i].v.data();
      const double* gp = g[i].v.data();
      double* mp = m[i].v.data();
      double* vp = v[i].v.data();
      const size_t n = w.params[i].v.size();
      for (size_t k = 0; k < n; ++k) {
        mp[k] = beta1 * mp[k] + (1.0 - beta1) * gp[k];
        vp[k] = beta2 * vp[k] + (1.0 - beta2) * gp[k] * gp[k];
        wp[k] -= lr * (mp[k] / bc1) / (std::sqrt(vp[k] / bc2) + eps);
        finite &= std::isfinite(wp[k]);
      }
    }
    if (!finite) fail(Errc::DivergedTraining, "non-finite weight after optimizer update");
  }
};

void clip_gradients(Gradients& g, double clip_norm) {
  if (clip_norm <= 0) return;
  double sq = 0;
  for (const Tensor& t : g)
    for (double x : t.v) sq += x * x;
  double norm = std::sqrt(sq);
  if (norm <= clip_norm) return;
  double scale = clip_norm / norm;
  for (Tensor& t : g)
    for (double& x : t.v) x *= scale;
}

struct ValidationSet {
  // fixed masks: comparable validation across epochs
  std::vector<MaskedSample> samples;
  double pressure_range = 1.0;
  double pressure_min = 0.0;
};

// de-normalized MAE / MAPE over one sample's masked junctions
void accumulate_errors(const MaskedSample& s, const std::vector<double>& pred, double range,
                       double lo, double& abs_sum, double& ape_sum, int64_t& count,
                       std::vector<double>* per_node_abs = nullptr,
                       std::vector<int64_t>* per_node_count = nullptr) {
  for (int64_t n = 0; n < s.node_count; ++n) {
    if (s.sensor[n] || s.topology->node_kind[n] != 0) continue;
    double err = std::abs(pred[n] - s.target[n]) * range;
    double truth = s.target[n] * range + lo;
    abs_sum += err;
    ape_sum += err / std::max(std::abs(truth), kMapeGuard);
    ++count;
    if (per_node_abs) {
      (*per_node_abs)[n] += err;
      ++(*per_node_count)[n];
    }
  }
}

TrainResult run_training(const std::vector<const SnapshotDataset*>& datasets, const TrainConfig& cfg,
                         ModelWeights weights, double lr) {
  if (datasets.empty()) fail(Errc::EmptyDataset, "no datasets");
  for (const SnapshotDataset* d : datasets)
    if (d->count < 2) fail(Errc::EmptyDataset, "training needs at least 2 snapshots");
  if (!(cfg.ratio > 0.0 && cfg.ratio < 1.0)) fail(Errc::RatioOutOfRange, "masking ratio must be in (0,1)");

  const size_t D = datasets.size();
  MaskOptions opts;
  opts.demand_channel = weights.config.demand_channel;

  std::vector<std::shared_ptr<const ArcIndex>> arcs(D);
  std::vector<std::vector<int64_t>> train_idx(D);
  std::vector<double> ranges(D), lows(D);
  int64_t total_train = 0;
  for (size_t d = 0; d < D; ++d) {
    arcs[d] = std::make_shared<const ArcIndex>(datasets[d]->topology);
    train_idx[d] = datasets[d]->train_indices();
    total_train += static_cast<int64_t>(train_idx[d].size());
    const NormStats& st = datasets[d]->manifest.norm;
    double range = st.pressure_max - st.pressure_min;
    ranges[d] = range < 1e-12 ? 1.0 : range;
    lows[d] = st.pressure_min;
  }
  if (total_train == 0) fail(Errc::EmptyDataset, "empty training split");

  // fixed validation masks
  std::vector<ValidationSet> val(D);
  for (size_t d = 0; d < D; ++d) {
    val[d].pressure_range = ranges[d];
    val[d].pressure_min = lows[d];
    for (int64_t idx : datasets[d]->val_indices()) {
      Rng rng(derive_seed(cfg.seed, kValTag, d, static_cast<uint64_t>(idx)));
      val[d].samples.push_back(mask_sample(*datasets[d], idx, cfg.ratio, rng, opts, arcs[d]));
    }
  }

  auto validate_now = [&]() {
    double mae_sum = 0, mape_sum = 0;
    int64_t sets = 0;
    for (size_t d = 0; d < D; ++d) {
      if (val[d].samples.empty()) continue;
      double abs_sum = 0, ape_sum = 0;
      int64_t count = 0;
      for (const MaskedSample& s : val[d].samples) {
        std::vector<double> pred = gatres_forward(s, weights);
        accumulate_errors(s, pred, val[d].pressure_range, val[d].pressure_min, abs_sum, ape_sum, count);
      }
      if (count == 0) continue;
      mae_sum += abs_sum / static_cast<double>(count);
      mape_sum += 100.0 * ape_sum / static_cast<double>(count);
      ++sets;
    }
    if (sets == 0) return std::pair<double, double>(0.0, 0.0);
    return std::pair<double, double>(mae_sum / sets, mape_sum / sets);
  };

  TrainResult out;
  out.weights = weights;
  auto [init_mae, init_mape] = validate_now();
  out.history.best_epoch = -1;
  out.history.best_val_mae = init_mae;

  Adam adam(weights, lr);
  Gradients batch_grads;
  int in_batch = 0;
  auto flush_batch = [&]() {
    if (in_batch == 0) return;
    for (Tensor& t : batch_grads)
      for (double& x : t.v) x /= static_cast<double>(in_batch);
    clip_gradients(batch_grads, cfg.clip_norm);
    adam.step(weights, batch_grads);
    in_batch = 0;
  };

  int since_best = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    Rng step_rng(derive_seed(cfg.seed, kStepTag, static_cast<uint64_t>(epoch)));
    double loss_sum = 0;
    for (int64_t step = 0; step < total_train; ++step) {
      // dataset drawn proportionally to its training size, then uniform snapshot
      size_t d = 0;
      if (D > 1) {
        int64_t pick = static_cast<int64_t>(step_rng.below(static_cast<uint64_t>(total_train)));
        int64_t acc = 0;
        for (size_t k = 0; k < D; ++k) {
          acc += static_cast<int64_t>(train_idx[k].size());
          if (pick < acc) { d = k; break; }
        }
      }
      const auto& idxs = train_idx[d];
      int64_t snap = idxs[step_rng.below(idxs.size())];
      Rng mask_rng(derive_seed(cfg.seed, static_cast<uint64_t>(epoch) * 0x10001 + 7,
                               static_cast<uint64_t>(step)));
      MaskedSample sample = mask_sample(*datasets[d], snap, cfg.ratio, mask_rng, opts, arcs[d]);

      double loss = 0;
      Gradients g = backward(sample, weights, &loss);
      if (!std::isfinite(loss)) fail(Errc::DivergedTraining, "non-finite training loss");
      loss_sum += loss;

      if (batch_grads.empty()) {
        batch_grads = std::move(g);
      } else {
        for (size_t i = 0; i < g.size(); ++i)
          for (size_t k = 0; k < g[i].v.size(); ++k) batch_grads[i].v[k] += g[i].v[k];
      }
      if (++in_batch >= cfg.batch) {
        flush_batch();
        batch_grads.clear();
      }
    }
    flush_batch();
    batch_grads.clear();

    auto [mae, mape] = validate_now();
    auto t1 = std::chrono::steady_clock::now();
    EpochStats es;
    es.train_loss = loss_sum / static_cast<double>(total_train);
    es.val_mae = mae;
    es.val_mape = mape;
    es.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    es.samples_per_second = es.wall_seconds > 0 ? total_train / es.wall_seconds : 0.0;
    out.history.epochs.push_back(es);

    if (mae < out.history.best_val_mae) {
      out.history.best_val_mae = mae;
      out.history.best_epoch = epoch;
      out.weights = weights;
      since_best = 0;
    } else if (++since_best > cfg.patience) {
      break;
    }
  }
  return out;
}

}  // namespace

bool history_equal_deterministic(const TrainHistory& a, const TrainHistory& b) {
  if (a.epochs.size() != b.epochs.size() || a.best_epoch != b.best_epoch ||
      a.best_val_mae != b.best_val_mae)
    return false;
  for (size_t i = 0; i < a.epochs.size(); ++i) {
    if (a.epochs[i].train_loss != b.epochs[i].train_loss) return false;
    if (a.epochs[i].val_mae != b.epochs[i].val_mae) return false;
    if (a.epochs[i].val_mape != b.epochs[i].val_mape) return false;
  }
  return true;
}

TrainResult train(const SnapshotDataset& ds, const TrainConfig& cfg, const ModelConfig& model_cfg) {
  return pretrain_multi({&ds}, cfg, model_cfg);
}

TrainResult pretrain_multi(const std::vector<const SnapshotDataset*>& datasets,
                           const TrainConfig& cfg, const ModelConfig& model_cfg) {
  ModelWeights w = init_weights(model_cfg, derive_seed(cfg.seed, kInitTag));
  return run_training(datasets, cfg, std::move(w), cfg.lr);
}

TrainResult fine_tune(const ModelWeights& weights, const SnapshotDataset& ds,
                      const TrainConfig& cfg) {
  return run_training({&ds}, cfg, weights, cfg.lr * cfg.finetune_lr_scale);
}

uint64_t trial_seed(uint64_t mask_seed, int trial) {
  if (trial == 0) return mask_seed;
  return derive_seed(mask_seed, 0x791a1, static_cast<uint64_t>(trial));
}

Metrics evaluate_with(const Predictor& predict, const SnapshotDataset& ds, double ratio,
                      uint64_t mask_seed, int trials, const MaskOptions& opts,
                      const std::vector<int64_t>* subset, const NormStats* stats_override) {
  if (trials < 1) fail(Errc::ShapeMismatch, "trials must be >= 1");
  std::vector<int64_t> all;
  if (!subset) {
    all.resize(ds.count);
    for (int64_t i = 0; i < ds.count; ++i) all[i] = i;
    subset = &all;
  }
  if (subset->empty()) fail(Errc::EmptyDataset, "no snapshots to evaluate");

  auto arcs = std::make_shared<const ArcIndex>(ds.topology);
  const NormStats& st = stats_override ? *stats_override : ds.manifest.norm;
  double range = st.pressure_max - st.pressure_min;
  if (range < 1e-12) range = 1.0;

  Metrics m;
  m.masking_ratio = ratio;
  m.trials = trials;
  m.dataset_id = ds.manifest.network_name + ":" + ds.manifest.mode;
  m.per_node_mae.assign(ds.topology.node_count, 0.0);
  m.per_node_count.assign(ds.topology.node_count, 0);

  double mae_over_trials = 0, mape_over_trials = 0;
  for (int t = 0; t < trials; ++t) {
    uint64_t ts = trial_seed(mask_seed, t);
    double abs_sum = 0, ape_sum = 0;
    int64_t count = 0;
    for (int64_t s : *subset) {
      Rng rng(derive_seed(ts, 0xe7a1, static_cast<uint64_t>(s)));
      MaskedSample sample = mask_sample(ds, s, ratio, rng, opts, arcs, &st);
      std::vector<double> pred = predict(sample);
      if (pred.size() != static_cast<size_t>(sample.node_count))
        fail(Errc::ShapeMismatch, "predictor returned wrong size");
      accumulate_errors(sample, pred, range, st.pressure_min, abs_sum, ape_sum, count,
                        &m.per_node_mae, &m.per_node_count);
    }
    mae_over_trials += abs_sum / static_cast<double>(count);
    mape_over_trials += 100.0 * ape_sum / static_cast<double>(count);
  }
  m.mae = mae_over_trials / trials;
  m.mape = mape_over_trials / trials;
  for (int64_t n = 0; n < ds.topology.node_count; ++n)
    if (m.per_node_count[n] > 0) m.per_node_mae[n] /= static_cast<double>(m.per_node_count[n]);
  return m;
}

Metrics evaluate(const ModelWeights& weights, const SnapshotDataset& ds, double ratio,
                 uint64_t mask_seed, int trials, const std::vector<int64_t>* subset,
                 const NormStats* stats_override) {
  MaskOptions opts;
  opts.demand_channel = weights.config.demand_channel;
  Predictor p = [&weights](const MaskedSample& s) { return gatres_forward(s, weights); };
  return evaluate_with(p, ds, ratio, mask_seed, trials, opts, subset, stats_override);
}

}  // namespace wdn
