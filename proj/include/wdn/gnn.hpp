#pragma once

#include <memory>
#include <string>
#include <vector>

#include "wdn/dataset.hpp"
#include "wdn/rng.hpp"

namespace wdn {

struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> v;
  int64_t numel() const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
  }
  static Tensor zeros(std::vector<int64_t> s) {
    Tensor t;
    t.shape = std::move(s);
    t.v.assign(t.numel(), 0.0);
    return t;
  }
};

struct ModelConfig {
  int blocks = 4;
  int heads = 4;
  int hidden = 32;  // divisible by heads
  int decoder_hidden = 32;
  double leaky_slope = 0.2;   // attention logits
  bool use_edge_attrs = false;
  bool demand_channel = false;
  enum class Act { Elu, Relu, Tanh };
  Act activation = Act::Elu;
  bool mse_loss = false;  // default objective is MAE on normalized pressures

  int in_channels() const { return demand_channel ? 4 : 3; }
  int head_dim() const { return hidden / heads; }
};

// Flat named-parameter set. Order is fixed by init_weights so optimizer state
// and checkpoints stay aligned.
struct ModelWeights {
  ModelConfig config;
  std::vector<std::string> names;
  std::vector<Tensor> params;
  std::string provenance;  // free-form JSON recorded by training

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
};

ModelWeights init_weights(const ModelConfig& cfg, uint64_t seed);

// Arcs grouped by destination with a self-loop first in every group; edge
// attributes are min-max scaled per channel, zeros on self-loops.
struct ArcIndex {
  int64_t node_count = 0;
  std::vector<int64_t> src, dst;   // grouped by dst
  std::vector<int64_t> row_ptr;    // size node_count + 1
  std::vector<double> edge_attr;   // arc x kArcChannels
  explicit ArcIndex(const GraphTopology& g);
  int64_t arc_count() const { return static_cast<int64_t>(src.size()); }
};

struct MaskOptions {
  bool force_fixed_sensors = true;  // reservoirs/tanks are boundary conditions
  bool demand_channel = false;      // append normalized demand as a fourth channel
};

struct MaskedSample {
  const GraphTopology* topology = nullptr;
  std::shared_ptr<const ArcIndex> arcs;
  int64_t node_count = 0;
  int in_channels = 3;
  std::vector<double> features;  // N x in_channels: [obs pressure, mask bit, elevation(, demand)]
  std::vector<uint8_t> sensor;   // 1 = observed
  std::vector<double> target;    // normalized pressures
  NormStats stats;               // scaling used to build this sample
};

// Marks round((1-ratio) * junction_count) junctions (at least one) as sensors,
// redrawn from rng; fixed-head nodes are forced sensors per options. Throws
// Errc::RatioOutOfRange when no masked junction would remain.
MaskedSample mask_sample(const SnapshotDataset& ds, int64_t snapshot, double masking_ratio,
                         Rng& rng, const MaskOptions& opts = {},
                         std::shared_ptr<const ArcIndex> arcs = nullptr,
                         const NormStats* stats_override = nullptr);

struct AttentionTrace {
  // alpha[block][arc * heads + head], arcs in ArcIndex order
  std::vector<std::vector<double>> alpha;
};

// Residual stack: encoder -> B x (x + GATBlock(x)) -> decoder MLP.
std::vector<double> gatres_forward(const MaskedSample& s, const ModelWeights& w,
                                   AttentionTrace* trace = nullptr);

// One multi-head GAT layer (attention aggregation, bias, activation); the
// residual add lives in gatres_forward.
struct GatLayerView {
  const Tensor* W;       // in_dim x hidden
  const Tensor* a_src;   // heads x head_dim
  const Tensor* a_dst;   // heads x head_dim
  const Tensor* bias;    // hidden
  const Tensor* edge;    // heads x kArcChannels, may be null
};
std::vector<double> gat_layer_forward(const std::vector<double>& h, int in_dim, const ArcIndex& arcs,
                                      const GatLayerView& layer, const ModelConfig& cfg,
                                      std::vector<double>* alpha_out = nullptr);

// MAE (or MSE) over masked junction nodes in normalized units.
double masked_loss(const std::vector<double>& pred, const MaskedSample& s, bool mse = false);

using Gradients = std::vector<Tensor>;

// Exact reverse-mode gradients of masked_loss(gatres_forward(s)) for every
// parameter tensor, in weights order.
Gradients backward(const MaskedSample& s, const ModelWeights& w, double* loss_out = nullptr,
                   std::vector<double>* pred_out = nullptr);

// versioned magic + one-line JSON header + little-endian f64 payload
void save_checkpoint(const ModelWeights& w, const std::string& path);
ModelWeights load_checkpoint(const std::string& path);

}  // namespace wdn
