#include "wdn/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace wdn {

using nlohmann::json;

Tensor& ModelWeights::at(const std::string& name) {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return params[i];
  fail(Errc::ShapeMismatch, "no parameter named '" + name + "'");
}

const Tensor& ModelWeights::at(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return params[i];
  fail(Errc::ShapeMismatch, "no parameter named '" + name + "'");
}

ModelWeights init_weights(const ModelConfig& cfg, uint64_t seed) {
  if (cfg.hidden % cfg.heads != 0)
    fail(Errc::ShapeMismatch, "hidden width must be divisible by the head count");
  if (cfg.blocks < 1 || cfg.heads < 1 || cfg.hidden < 1 || cfg.decoder_hidden < 1)
    fail(Errc::ShapeMismatch, "model dimensions must be positive");

  ModelWeights w;
  w.config = cfg;
  Rng rng(derive_seed(seed, 0x6a7));
  auto glorot = [&](std::vector<int64_t> shape, int64_t fan_in, int64_t fan_out) {
    Tensor t = Tensor::zeros(std::move(shape));
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& x : t.v) x = rng.uniform(-limit, limit);
    return t;
  };
  auto push = [&](const std::string& name, Tensor t) {
    w.names.push_back(name);
    w.params.push_back(std::move(t));
  };

  const int F = cfg.hidden, K = cfg.heads, Fh = cfg.head_dim(), Fd = cfg.decoder_hidden;
  const int Fin = cfg.in_channels();
  push("enc.W", glorot({Fin, F}, Fin, F));
  push("enc.b", Tensor::zeros({F}));
  for (int b = 0; b < cfg.blocks; ++b) {
    std::string p = "blk" + std::to_string(b) + ".";
    push(p + "W", glorot({F, F}, F, F));
    push(p + "a_src", glorot({K, Fh}, Fh, 1));
    push(p + "a_dst", glorot({K, Fh}, Fh, 1));
    push(p + "bias", Tensor::zeros({F}));
    if (cfg.use_edge_attrs) push(p + "edge", glorot({K, GraphTopology::kArcChannels}, GraphTopology::kArcChannels, 1));
  }
  push("dec.W1", glorot({F, Fd}, F, Fd));
  push("dec.b1", Tensor::zeros({Fd}));
  push("dec.W2", glorot({Fd, 1}, Fd, 1));
  push("dec.b2", Tensor::zeros({1}));
  return w;
}

ArcIndex::ArcIndex(const GraphTopology& g) {
  node_count = g.node_count;
  const int64_t N = g.node_count;
  const int64_t A_topo = g.arc_count();
  const int C = GraphTopology::kArcChannels;

  std::vector<int64_t> count(N, 1);  // self-loop each
  for (int64_t a = 0; a < A_topo; ++a) ++count[g.arc_dst[a]];
  row_ptr.assign(N + 1, 0);
  for (int64_t n = 0; n < N; ++n) row_ptr[n + 1] = row_ptr[n] + count[n];
  const int64_t A = row_ptr[N];
  src.assign(A, 0);
  dst.assign(A, 0);
  edge_attr.assign(A * C, 0.0);

  std::vector<int64_t> cursor(N);
  for (int64_t n = 0; n < N; ++n) {
    src[row_ptr[n]] = n;  // self-loop first in every group
    dst[row_ptr[n]] = n;
    cursor[n] = row_ptr[n] + 1;
  }
  // fixed physical scalings, not per-topology statistics, so one weight set
  // reads the same geometry the same way on every network
  for (int64_t a = 0; a < A_topo; ++a) {
    int64_t v = g.arc_dst[a];
    int64_t slot = cursor[v]++;
    src[slot] = g.arc_src[a];
    dst[slot] = v;
    const double* raw = &g.arc_attr[a * C];
    double* out = &edge_attr[slot * C];
    out[0] = std::log1p(std::max(0.0, raw[0])) / std::log1p(10000.0);  // length, ~[0,1] to 10 km
    out[1] = raw[1];                                                   // diameter in metres
    double rough = raw[2];
    // Hazen-Williams C is O(100), Darcy-Weisbach epsilon is O(1e-4) m
    out[2] = rough > 1.0 ? rough / 150.0 : (std::log10(std::max(rough, 1e-6)) + 6.0) / 4.0;
    out[3] = raw[3];
    out[4] = raw[4];
    out[5] = raw[5];
  }
}

namespace {

double norm_value(double v, double lo, double hi) {
  double denom = hi - lo;
  if (denom < 1e-12) denom = 1.0;
  return (v - lo) / denom;
}

double act_fwd(double x, ModelConfig::Act a) {
  switch (a) {
    case ModelConfig::Act::Elu: return x >= 0 ? x : std::expm1(x);
    case ModelConfig::Act::Relu: return x > 0 ? x : 0.0;
    case ModelConfig::Act::Tanh: return std::tanh(x);
  }
  return x;
}

double act_grad(double x, ModelConfig::Act a) {
  switch (a) {
    case ModelConfig::Act::Elu: return x >= 0 ? 1.0 : std::exp(x);
    case ModelConfig::Act::Relu: return x > 0 ? 1.0 : 0.0;
    case ModelConfig::Act::Tanh: {
      double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

// out[N x cols] = x[N x rows] * W[rows x cols] (+ bias[cols])
void matmul_bias(const std::vector<double>& x, int64_t N, int64_t rows, const Tensor& W,
                 const Tensor* bias, std::vector<double>& out) {
  const int64_t cols = W.shape[1];
  out.assign(N * cols, 0.0);
  for (int64_t n = 0; n < N; ++n) {
    const double* xr = &x[n * rows];
    double* or_ = &out[n * cols];
    if (bias)
      for (int64_t c = 0; c < cols; ++c) or_[c] = bias->v[c];
    for (int64_t r = 0; r < rows; ++r) {
      double xv = xr[r];
      if (xv == 0.0) continue;
      const double* wr = &W.v[r * cols];
      for (int64_t c = 0; c < cols; ++c) or_[c] += xv * wr[c];
    }
  }
}

struct BlockCache {
  std::vector<double> in;      // N x F (block input)
  std::vector<double> Z;       // N x F (projected, heads packed)
  std::vector<double> s_src;   // N x K
  std::vector<double> s_dst;   // N x K
  std::vector<double> logits;  // A x K (pre-LeakyReLU)
  std::vector<double> alpha;   // A x K
  std::vector<double> y_pre;   // N x F (pre-activation)
};

struct ForwardCache {
  std::vector<double> x0;  // encoder output
  std::vector<BlockCache> blocks;
  std::vector<double> xB;        // final block output
  std::vector<double> dec_pre;   // N x Fd
  std::vector<double> dec_hid;   // N x Fd
  std::vector<double> pred;      // N
};

void gat_layer_core(const std::vector<double>& x, int64_t N, int in_dim, const ArcIndex& arcs,
                    const GatLayerView& layer, const ModelConfig& cfg, BlockCache& c,
                    std::vector<double>& out) {
  const int K = cfg.heads, Fh = cfg.head_dim(), F = cfg.hidden;
  const int64_t A = arcs.arc_count();
  const int C = GraphTopology::kArcChannels;

  matmul_bias(x, N, in_dim, *layer.W, nullptr, c.Z);

  c.s_src.assign(N * K, 0.0);
  c.s_dst.assign(N * K, 0.0);
  for (int64_t n = 0; n < N; ++n)
    for (int k = 0; k < K; ++k) {
      const double* z = &c.Z[n * F + k * Fh];
      const double* as = &layer.a_src->v[k * Fh];
      const double* ad = &layer.a_dst->v[k * Fh];
      double ss = 0, sd = 0;
      for (int f = 0; f < Fh; ++f) {
        ss += as[f] * z[f];
        sd += ad[f] * z[f];
      }
      c.s_src[n * K + k] = ss;
      c.s_dst[n * K + k] = sd;
    }

  c.logits.assign(A * K, 0.0);
  for (int64_t a = 0; a < A; ++a) {
    int64_t u = arcs.src[a], v = arcs.dst[a];
    for (int k = 0; k < K; ++k) {
      double s = c.s_src[u * K + k] + c.s_dst[v * K + k];
      if (layer.edge) {
        const double* ev = &layer.edge->v[k * C];
        const double* ea = &arcs.edge_attr[a * C];
        for (int ch = 0; ch < C; ++ch) s += ev[ch] * ea[ch];
      }
      c.logits[a * K + k] = s;
    }
  }

  // grouped softmax over LeakyReLU(logit), per destination and head
  c.alpha.assign(A * K, 0.0);
  const double slope = cfg.leaky_slope;
  auto lrelu = [slope](double x) { return x >= 0 ? x : slope * x; };
  for (int64_t v = 0; v < N; ++v) {
    for (int k = 0; k < K; ++k) {
      double mx = -1e300;
      for (int64_t a = arcs.row_ptr[v]; a < arcs.row_ptr[v + 1]; ++a)
        mx = std::max(mx, lrelu(c.logits[a * K + k]));
      double sum = 0;
      for (int64_t a = arcs.row_ptr[v]; a < arcs.row_ptr[v + 1]; ++a) {
        double e = std::exp(lrelu(c.logits[a * K + k]) - mx);
        c.alpha[a * K + k] = e;
        sum += e;
      }
      for (int64_t a = arcs.row_ptr[v]; a < arcs.row_ptr[v + 1]; ++a) c.alpha[a * K + k] /= sum;
    }
  }

  // aggregate: y[v] = sum_a alpha * Z[u], heads packed, plus bias, activated
  c.y_pre.assign(N * F, 0.0);
  for (int64_t v = 0; v < N; ++v) {
    double* yv = &c.y_pre[v * F];
    for (int64_t a = arcs.row_ptr[v]; a < arcs.row_ptr[v + 1]; ++a) {
      int64_t u = arcs.src[a];
      const double* zu = &c.Z[u * F];
      const double* al = &c.alpha[a * K];
      for (int k = 0; k < K; ++k) {
        double w = al[k];
        if (w == 0.0) continue;
        const double* zh = zu + k * Fh;
        double* yh = yv + k * Fh;
        for (int f = 0; f < Fh; ++f) yh[f] += w * zh[f];
      }
    }
    for (int64_t f = 0; f < F; ++f) yv[f] += layer.bias->v[f];
  }

  out.assign(N * F, 0.0);
  for (int64_t i = 0; i < N * F; ++i) out[i] = act_fwd(c.y_pre[i], cfg.activation);
}

GatLayerView block_view(const ModelWeights& w, int b) {
  std::string p = "blk" + std::to_string(b) + ".";
  GatLayerView v{};
  v.W = &w.at(p + "W");
  v.a_src = &w.at(p + "a_src");
  v.a_dst = &w.at(p + "a_dst");
  v.bias = &w.at(p + "bias");
  v.edge = w.config.use_edge_attrs ? &w.at(p + "edge") : nullptr;
  return v;
}

void forward_impl(const MaskedSample& s, const ModelWeights& w, ForwardCache& fc,
                  AttentionTrace* trace) {
  const ModelConfig& cfg = w.config;
  if (!s.topology || !s.arcs) fail(Errc::ShapeMismatch, "sample has no topology");
  if (s.in_channels != cfg.in_channels())
    fail(Errc::SchemaMismatch, "sample channels do not match the model config");
  const int64_t N = s.node_count;

  matmul_bias(s.features, N, cfg.in_channels(), w.at("enc.W"), &w.at("enc.b"), fc.x0);

  fc.blocks.resize(cfg.blocks);
  std::vector<double> x = fc.x0;
  std::vector<double> block_out;
  if (trace) trace->alpha.assign(cfg.blocks, {});
  for (int b = 0; b < cfg.blocks; ++b) {
    BlockCache& bc = fc.blocks[b];
    bc.in = x;
    gat_layer_core(x, N, cfg.hidden, *s.arcs, block_view(w, b), cfg, bc, block_out);
    for (int64_t i = 0; i < N * cfg.hidden; ++i) x[i] += block_out[i];
    if (trace) (*trace).alpha[b] = bc.alpha;
  }
  fc.xB = x;

  matmul_bias(fc.xB, N, cfg.hidden, w.at("dec.W1"), &w.at("dec.b1"), fc.dec_pre);
  fc.dec_hid.assign(fc.dec_pre.size(), 0.0);
  for (size_t i = 0; i < fc.dec_pre.size(); ++i) fc.dec_hid[i] = act_fwd(fc.dec_pre[i], cfg.activation);

  const Tensor& W2 = w.at("dec.W2");
  const Tensor& b2 = w.at("dec.b2");
  const int64_t Fd = cfg.decoder_hidden;
  fc.pred.assign(N, 0.0);
  for (int64_t n = 0; n < N; ++n) {
    double acc = b2.v[0];
    const double* h = &fc.dec_hid[n * Fd];
    for (int64_t f = 0; f < Fd; ++f) acc += h[f] * W2.v[f];
    fc.pred[n] = acc;
  }
  for (double p : fc.pred)
    if (!std::isfinite(p)) fail(Errc::NonFiniteActivation, "non-finite prediction");
}

}  // namespace

std::vector<double> gat_layer_forward(const std::vector<double>& h, int in_dim, const ArcIndex& arcs,
                                      const GatLayerView& layer, const ModelConfig& cfg,
                                      std::vector<double>* alpha_out) {
  const int64_t N = arcs.node_count;
  if (static_cast<int64_t>(h.size()) != N * in_dim) fail(Errc::ShapeMismatch, "bad input shape");
  if (layer.W->shape[0] != in_dim || layer.W->shape[1] != cfg.hidden)
    fail(Errc::ShapeMismatch, "layer projection shape mismatch");
  BlockCache c;
  std::vector<double> out;
  gat_layer_core(h, N, in_dim, arcs, layer, cfg, c, out);
  if (alpha_out) *alpha_out = c.alpha;
  return out;
}

std::vector<double> gatres_forward(const MaskedSample& s, const ModelWeights& w,
                                   AttentionTrace* trace) {
  ForwardCache fc;
  forward_impl(s, w, fc, trace);
  return fc.pred;
}

MaskedSample mask_sample(const SnapshotDataset& ds, int64_t snapshot, double ratio, Rng& rng,
                         const MaskOptions& opts, std::shared_ptr<const ArcIndex> arcs,
                         const NormStats* stats_override) {
  if (!(ratio > 0.0 && ratio < 1.0)) fail(Errc::RatioOutOfRange, "masking ratio must be in (0,1)");
  if (snapshot < 0 || snapshot >= ds.count) fail(Errc::ShapeMismatch, "snapshot index out of range");

  const GraphTopology& g = ds.topology;
  const int64_t N = g.node_count;
  const NormStats& st = stats_override ? *stats_override : ds.manifest.norm;

  std::vector<int64_t> junctions;
  for (int64_t n = 0; n < N; ++n)
    if (g.node_kind[n] == 0) junctions.push_back(n);
  const auto J = static_cast<int64_t>(junctions.size());
  if (J == 0) fail(Errc::EmptyMaskSupport, "no junction nodes");

  auto sensors = static_cast<int64_t>(std::llround((1.0 - ratio) * static_cast<double>(J)));
  if (sensors < 1) sensors = 1;
  if (sensors >= J)
    fail(Errc::RatioOutOfRange, "ratio leaves no masked junction (sensors = " +
                                    std::to_string(sensors) + " of " + std::to_string(J) + ")");

  rng.shuffle(junctions);

  MaskedSample ms;
  ms.topology = &g;
  ms.arcs = arcs ? std::move(arcs) : std::make_shared<const ArcIndex>(g);
  ms.node_count = N;
  ms.stats = st;
  ms.sensor.assign(N, 0);
  for (int64_t i = 0; i < sensors; ++i) ms.sensor[junctions[i]] = 1;
  if (opts.force_fixed_sensors)
    for (int64_t n = 0; n < N; ++n)
      if (g.node_kind[n] != 0) ms.sensor[n] = 1;

  ms.in_channels = opts.demand_channel ? 4 : 3;
  const double* prow = ds.pressure_row(snapshot);
  const double* drow = ds.demand_row(snapshot);
  ms.features.assign(N * ms.in_channels, 0.0);
  ms.target.assign(N, 0.0);
  // elevation shares the pressure scale so that "pressure + elevation" is a
  // head-like quantity with the same meaning in every network's frame; this
  // is what lets one weight set transfer across topologies (degenerate
  // pressure ranges fall back to the elevation's own span)
  double pressure_range = st.pressure_max - st.pressure_min;
  const bool degenerate = pressure_range < 1e-12;
  for (int64_t n = 0; n < N; ++n) {
    double pn = norm_value(prow[n], st.pressure_min, st.pressure_max);
    double en = degenerate ? norm_value(g.node_elevation[n], st.elevation_min, st.elevation_max)
                           : (g.node_elevation[n] - st.elevation_min) / pressure_range;
    double* f = &ms.features[n * ms.in_channels];
    f[0] = ms.sensor[n] ? pn : 0.0;
    f[1] = ms.sensor[n] ? 1.0 : 0.0;
    f[2] = en;
    if (opts.demand_channel) f[3] = norm_value(drow[n], st.demand_min, st.demand_max);
    ms.target[n] = pn;
  }
  return ms;
}

double masked_loss(const std::vector<double>& pred, const MaskedSample& s, bool mse) {
  if (static_cast<int64_t>(pred.size()) != s.node_count) fail(Errc::ShapeMismatch, "bad prediction size");
  double sum = 0;
  int64_t count = 0;
  for (int64_t n = 0; n < s.node_count; ++n) {
    if (s.sensor[n] || s.topology->node_kind[n] != 0) continue;
    double d = pred[n] - s.target[n];
    sum += mse ? d * d : std::abs(d);
    ++count;
  }
  if (count == 0) fail(Errc::EmptyMaskSupport, "no masked junction nodes in the loss");
  return sum / static_cast<double>(count);
}

Gradients backward(const MaskedSample& s, const ModelWeights& w, double* loss_out,
                   std::vector<double>* pred_out) {
  const ModelConfig& cfg = w.config;
  ForwardCache fc;
  forward_impl(s, w, fc, nullptr);
  const int64_t N = s.node_count;
  const int F = cfg.hidden, K = cfg.heads, Fh = cfg.head_dim(), Fd = cfg.decoder_hidden;
  const int C = GraphTopology::kArcChannels;
  const ArcIndex& arcs = *s.arcs;

  Gradients grads(w.params.size());
  for (size_t i = 0; i < w.params.size(); ++i) grads[i] = Tensor::zeros(w.params[i].shape);
  auto grad_of = [&](const std::string& name) -> Tensor& {
    for (size_t i = 0; i < w.names.size(); ++i)
      if (w.names[i] == name) return grads[i];
    fail(Errc::ShapeMismatch, "no gradient slot for '" + name + "'");
  };

  // loss gradient
  double loss = masked_loss(fc.pred, s, cfg.mse_loss);
  if (loss_out) *loss_out = loss;
  if (pred_out) *pred_out = fc.pred;
  int64_t masked = 0;
  for (int64_t n = 0; n < N; ++n)
    if (!s.sensor[n] && s.topology->node_kind[n] == 0) ++masked;
  std::vector<double> g_pred(N, 0.0);
  for (int64_t n = 0; n < N; ++n) {
    if (s.sensor[n] || s.topology->node_kind[n] != 0) continue;
    double d = fc.pred[n] - s.target[n];
    g_pred[n] = cfg.mse_loss ? 2.0 * d / static_cast<double>(masked)
                             : (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) / static_cast<double>(masked);
  }

  // decoder
  Tensor& gW2 = grad_of("dec.W2");
  Tensor& gb2 = grad_of("dec.b2");
  std::vector<double> g_hid(N * Fd, 0.0);
  const Tensor& W2 = w.at("dec.W2");
  for (int64_t n = 0; n < N; ++n) {
    double gp = g_pred[n];
    if (gp == 0.0) continue;
    gb2.v[0] += gp;
    const double* h = &fc.dec_hid[n * Fd];
    double* gh = &g_hid[n * Fd];
    for (int64_t f = 0; f < Fd; ++f) {
      gW2.v[f] += gp * h[f];
      gh[f] += gp * W2.v[f];
    }
  }
  std::vector<double> g_decpre(N * Fd);
  for (int64_t i = 0; i < N * Fd; ++i) g_decpre[i] = g_hid[i] * act_grad(fc.dec_pre[i], cfg.activation);

  Tensor& gW1 = grad_of("dec.W1");
  Tensor& gb1 = grad_of("dec.b1");
  const Tensor& W1 = w.at("dec.W1");
  std::vector<double> g_x(N * F, 0.0);
  for (int64_t n = 0; n < N; ++n) {
    const double* xb = &fc.xB[n * F];
    const double* gd = &g_decpre[n * Fd];
    double* gx = &g_x[n * F];
    for (int64_t f = 0; f < Fd; ++f) {
      double gv = gd[f];
      if (gv == 0.0) continue;
      gb1.v[f] += gv;
      for (int64_t r = 0; r < F; ++r) {
        gW1.v[r * Fd + f] += xb[r] * gv;
        gx[r] += gv * W1.v[r * Fd + f];
      }
    }
  }

  // blocks, reversed
  const double slope = cfg.leaky_slope;
  for (int b = cfg.blocks - 1; b >= 0; --b) {
    const BlockCache& bc = fc.blocks[b];
    std::string p = "blk" + std::to_string(b) + ".";
    GatLayerView lv = block_view(w, b);
    Tensor& gW = grad_of(p + "W");
    Tensor& gas = grad_of(p + "a_src");
    Tensor& gad = grad_of(p + "a_dst");
    Tensor& gbias = grad_of(p + "bias");
    Tensor* gedge = cfg.use_edge_attrs ? &grad_of(p + "edge") : nullptr;

    // through activation: g_y = g_x (residual branch) * act'
    std::vector<double> g_y(N * F);
    for (int64_t i = 0; i < N * F; ++i) g_y[i] = g_x[i] * act_grad(bc.y_pre[i], cfg.activation);
    for (int64_t n = 0; n < N; ++n)
      for (int64_t f = 0; f < F; ++f) gbias.v[f] += g_y[n * F + f];

    std::vector<double> gZ(N * F, 0.0);
    std::vector<double> g_ssrc(N * K, 0.0), g_sdst(N * K, 0.0);

    const int64_t A = arcs.arc_count();
    std::vector<double> g_alpha(A * K, 0.0);
    for (int64_t v = 0; v < N; ++v) {
      const double* gyv = &g_y[v * F];
      for (int64_t a = arcs.row_ptr[v]; a < arcs.row_ptr[v + 1]; ++a) {
        int64_t u = arcs.src[a];
        const double* zu = &bc.Z[u * F];
        for (int k = 0; k < K; ++k) {
          double al = bc.alpha[a * K + k];
          double dot = 0;
          const double* gyh = gyv + k * Fh;
          const double* zh = zu + k * Fh;
          double* gzh = &gZ[u * F + k * Fh];
          for (int f = 0; f < Fh; ++f) {
            dot += gyh[f] * zh[f];
            gzh[f] += al * gyh[f];
          }
          g_alpha[a * K + k] = dot;
        }
      }
    }

    // softmax backward per group, then LeakyReLU
    for (int64_t v = 0; v < N; ++v) {
      for (int k = 0; k < K; ++k) {
        double inner = 0;
        for (int64_t a = arcs.row_ptr[v]; a < arcs.row_ptr[v + 1]; ++a)
          inner += bc.alpha[a * K + k] * g_alpha[a * K + k];
        for (int64_t a = arcs.row_ptr[v]; a < arcs.row_ptr[v + 1]; ++a) {
          double ge = bc.alpha[a * K + k] * (g_alpha[a * K + k] - inner);
          double logit = bc.logits[a * K + k];
          double gs = ge * (logit >= 0 ? 1.0 : slope);
          int64_t u = arcs.src[a];
          g_ssrc[u * K + k] += gs;
          g_sdst[v * K + k] += gs;
          if (gedge) {
            const double* ea = &arcs.edge_attr[a * C];
            for (int ch = 0; ch < C; ++ch) gedge->v[k * C + ch] += gs * ea[ch];
          }
        }
      }
    }

    // attention vectors and their contribution to Z
    for (int64_t n = 0; n < N; ++n) {
      const double* zn = &bc.Z[n * F];
      double* gzn = &gZ[n * F];
      for (int k = 0; k < K; ++k) {
        double gs = g_ssrc[n * K + k], gd = g_sdst[n * K + k];
        const double* as = &lv.a_src->v[k * Fh];
        const double* ad = &lv.a_dst->v[k * Fh];
        for (int f = 0; f < Fh; ++f) {
          gas.v[k * Fh + f] += gs * zn[k * Fh + f];
          gad.v[k * Fh + f] += gd * zn[k * Fh + f];
          gzn[k * Fh + f] += gs * as[f] + gd * ad[f];
        }
      }
    }

    // projection: gW += in^T gZ ; g_in = gZ W^T + g_x (skip connection)
    std::vector<double> g_in(N * F, 0.0);
    const Tensor& W = *lv.W;
    for (int64_t n = 0; n < N; ++n) {
      const double* inr = &bc.in[n * F];
      const double* gz = &gZ[n * F];
      double* gi = &g_in[n * F];
      for (int64_t r = 0; r < F; ++r) {
        double inv = inr[r];
        const double* wr = &W.v[r * F];
        double acc = 0;
        double* gwr = &gW.v[r * F];
        for (int64_t c2 = 0; c2 < F; ++c2) {
          gwr[c2] += inv * gz[c2];
          acc += gz[c2] * wr[c2];
        }
        gi[r] = acc;
      }
    }
    for (int64_t i = 0; i < N * F; ++i) g_x[i] += g_in[i];
  }

  // encoder
  Tensor& gW0 = grad_of("enc.W");
  Tensor& gb0 = grad_of("enc.b");
  const int Fin = cfg.in_channels();
  for (int64_t n = 0; n < N; ++n) {
    const double* f = &s.features[n * Fin];
    const double* gx = &g_x[n * F];
    for (int64_t c2 = 0; c2 < F; ++c2) gb0.v[c2] += gx[c2];
    for (int r = 0; r < Fin; ++r) {
      double fv = f[r];
      if (fv == 0.0) continue;
      for (int64_t c2 = 0; c2 < F; ++c2) gW0.v[r * F + c2] += fv * gx[c2];
    }
  }

  for (const Tensor& g : grads)
    for (double x : g.v)
      if (!std::isfinite(x)) fail(Errc::NonFiniteGradient, "non-finite gradient");
  return grads;
}

void save_checkpoint(const ModelWeights& w, const std::string& path) {
  json header;
  header["config"] = {{"blocks", w.config.blocks},
                      {"heads", w.config.heads},
                      {"hidden", w.config.hidden},
                      {"decoder_hidden", w.config.decoder_hidden},
                      {"leaky_slope", w.config.leaky_slope},
                      {"use_edge_attrs", w.config.use_edge_attrs},
                      {"demand_channel", w.config.demand_channel},
                      {"activation", static_cast<int>(w.config.activation)},
                      {"mse_loss", w.config.mse_loss}};
  header["names"] = w.names;
  json shapes = json::array();
  int64_t total = 0;
  for (const Tensor& t : w.params) {
    shapes.push_back(t.shape);
    total += t.numel();
  }
  header["shapes"] = shapes;
  header["param_doubles"] = total;
  header["provenance"] = w.provenance;

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::IoError, "cannot write checkpoint " + path);
  out << "WDNGATRES1\n" << header.dump() << "\n";
  for (const Tensor& t : w.params)
    out.write(reinterpret_cast<const char*>(t.v.data()),
              static_cast<std::streamsize>(t.v.size() * sizeof(double)));
  if (!out) fail(Errc::IoError, "short checkpoint write");
}

ModelWeights load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot read checkpoint " + path);
  std::string magic, header_line;
  std::getline(in, magic);
  if (magic != "WDNGATRES1") fail(Errc::IoError, path + ": bad checkpoint magic");
  std::getline(in, header_line);
  json header = json::parse(header_line);

  ModelWeights w;
  const json& c = header.at("config");
  w.config.blocks = c.at("blocks");
  w.config.heads = c.at("heads");
  w.config.hidden = c.at("hidden");
  w.config.decoder_hidden = c.at("decoder_hidden");
  w.config.leaky_slope = c.at("leaky_slope");
  w.config.use_edge_attrs = c.at("use_edge_attrs");
  w.config.demand_channel = c.at("demand_channel");
  w.config.activation = static_cast<ModelConfig::Act>(c.at("activation").get<int>());
  w.config.mse_loss = c.at("mse_loss");
  w.names = header.at("names").get<std::vector<std::string>>();
  w.provenance = header.value("provenance", "");
  for (const auto& sh : header.at("shapes")) {
    Tensor t = Tensor::zeros(sh.get<std::vector<int64_t>>());
    in.read(reinterpret_cast<char*>(t.v.data()), static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    w.params.push_back(std::move(t));
  }
  if (!in || w.params.size() != w.names.size()) fail(Errc::IoError, path + ": truncated checkpoint");
  return w;
}

}  // namespace wdn
