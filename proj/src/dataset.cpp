#include "wdn/dataset.hpp"

#include <algorithm>
#include <bit>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "wdn/rng.hpp"

namespace wdn {

static_assert(std::endian::native == std::endian::little, "store format is little-endian");

using nlohmann::json;

const std::vector<double> kBuiltinDiurnal = [] {
  std::vector<double> v = {0.55, 0.45, 0.40, 0.40, 0.45, 0.60, 0.90, 1.30, 1.50, 1.40, 1.25, 1.15,
                           1.10, 1.05, 1.00, 1.05, 1.15, 1.35, 1.50, 1.40, 1.20, 0.95, 0.75, 0.60};
  double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  for (double& x : v) x /= mean;
  return v;
}();

int64_t SnapshotDataset::control_width() const {
  int64_t reservoirs = 0, pumps = 0;
  for (int k : topology.node_kind)
    if (k == static_cast<int>(NodeKind::Reservoir)) ++reservoirs;
  for (int k : topology.link_kind)
    if (k == static_cast<int>(LinkKind::Pump)) ++pumps;
  return reservoirs + pumps;
}

static std::vector<int64_t> split_indices(int64_t count, double train_fraction, uint64_t split_seed,
                                          bool train) {
  std::vector<int64_t> idx(count);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(split_seed, 0xA11CE));
  rng.shuffle(idx);
  auto cut = static_cast<int64_t>(train_fraction * static_cast<double>(count));
  cut = std::clamp<int64_t>(cut, 1, count > 1 ? count - 1 : 1);
  if (train) return {idx.begin(), idx.begin() + cut};
  return {idx.begin() + cut, idx.end()};
}

std::vector<int64_t> SnapshotDataset::train_indices() const {
  return split_indices(count, manifest.train_fraction, manifest.split_seed, true);
}

std::vector<int64_t> SnapshotDataset::val_indices() const {
  if (count < 2) return {};
  return split_indices(count, manifest.train_fraction, manifest.split_seed, false);
}

void finalize_manifest(SnapshotDataset& ds) {
  ds.manifest.snapshot_count = ds.count;
  ds.manifest.node_count = ds.topology.node_count;
  ds.manifest.link_count = ds.topology.link_count();
  ds.manifest.tool_version = kVersion;

  NormStats& n = ds.manifest.norm;
  const int64_t N = ds.topology.node_count;
  auto span_minmax = [&](const std::vector<double>& arr, int64_t row, double& lo, double& hi) {
    for (int64_t c = 0; c < N; ++c) {
      double v = arr[row * N + c];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  };
  n.pressure_min = n.head_min = n.demand_min = 1e300;
  n.pressure_max = n.head_max = n.demand_max = -1e300;
  for (int64_t s : ds.train_indices()) {
    span_minmax(ds.pressures, s, n.pressure_min, n.pressure_max);
    span_minmax(ds.heads, s, n.head_min, n.head_max);
    span_minmax(ds.demands, s, n.demand_min, n.demand_max);
  }
  n.elevation_min = 1e300;
  n.elevation_max = -1e300;
  for (double e : ds.topology.node_elevation) {
    n.elevation_min = std::min(n.elevation_min, e);
    n.elevation_max = std::max(n.elevation_max, e);
  }
}

namespace {

json to_json(const NormStats& n) {
  return json{{"pressure", {n.pressure_min, n.pressure_max}},
              {"head", {n.head_min, n.head_max}},
              {"demand", {n.demand_min, n.demand_max}},
              {"elevation", {n.elevation_min, n.elevation_max}}};
}

NormStats norm_from_json(const json& j) {
  NormStats n;
  n.pressure_min = j.at("pressure")[0];
  n.pressure_max = j.at("pressure")[1];
  n.head_min = j.at("head")[0];
  n.head_max = j.at("head")[1];
  n.demand_min = j.at("demand")[0];
  n.demand_max = j.at("demand")[1];
  n.elevation_min = j.at("elevation")[0];
  n.elevation_max = j.at("elevation")[1];
  return n;
}

void write_array(const std::string& path, const char* data, size_t bytes, int64_t chunk_bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::IoError, "cannot write " + path);
  for (size_t off = 0; off < bytes; off += chunk_bytes) {
    size_t n = std::min<size_t>(chunk_bytes, bytes - off);
    out.write(data + off, static_cast<std::streamsize>(n));
  }
  if (bytes == 0) out.write("", 0);
  if (!out) fail(Errc::IoError, "short write to " + path);
}

template <typename T>
std::vector<T> read_array(const std::string& path, size_t expected_count) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) fail(Errc::IoError, "cannot read " + path);
  auto bytes = static_cast<size_t>(in.tellg());
  if (bytes != expected_count * sizeof(T))
    fail(Errc::IoError, path + ": expected " + std::to_string(expected_count * sizeof(T)) +
                            " bytes, found " + std::to_string(bytes));
  std::vector<T> v(expected_count);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
  if (!in) fail(Errc::IoError, "short read from " + path);
  return v;
}

}  // namespace

void save_dataset(const SnapshotDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const DatasetManifest& mf = ds.manifest;
  const int64_t N = ds.topology.node_count;
  const int64_t S = ds.count;
  const int64_t A = ds.topology.arc_count();
  const int64_t C = ds.control_width();

  json j;
  j["format"] = "wdn-dataset";
  j["format_version"] = 1;
  j["network_name"] = mf.network_name;
  j["mode"] = mf.mode;
  j["realistic"] = mf.realistic;
  j["seed"] = mf.seed;
  j["sampling"] = {{"demand_lo", mf.sampling.demand_lo}, {"demand_hi", mf.sampling.demand_hi},
                   {"head_delta", mf.sampling.head_delta}, {"pump_lo", mf.sampling.pump_lo},
                   {"pump_hi", mf.sampling.pump_hi}, {"seed", mf.sampling.seed}};
  j["noise"] = {{"sigma_demand", mf.noise.sigma_demand}, {"sigma_head", mf.noise.sigma_head},
                {"seed", mf.noise.seed}};
  j["pattern"] = {{"timesteps", mf.pattern.timesteps}, {"source", mf.pattern.source},
                  {"prefer_node_patterns", mf.pattern.prefer_node_patterns}};
  j["solver"] = {{"tol_flow", mf.solver.tol_flow}, {"tol_head", mf.solver.tol_head},
                 {"max_iterations", mf.solver.max_iterations}, {"q_min", mf.solver.q_min},
                 {"initial_flow", mf.solver.initial_flow}};
  j["snapshot_count"] = S;
  j["node_count"] = N;
  j["link_count"] = mf.link_count;
  j["resampled"] = mf.resampled;
  j["train_fraction"] = mf.train_fraction;
  j["split_seed"] = mf.split_seed;
  j["normalization"] = to_json(mf.norm);
  j["chunk_rows"] = mf.chunk_rows;
  j["tool_version"] = mf.tool_version;
  j["command"] = mf.command;

  j["topology"] = {{"node_ids", ds.topology.node_ids},
                   {"node_kind", ds.topology.node_kind},
                   {"junction_count", ds.topology.junction_count},
                   {"link_ids", ds.topology.link_ids},
                   {"link_kind", ds.topology.link_kind},
                   {"link_from", ds.topology.link_from},
                   {"link_to", ds.topology.link_to}};

  j["arrays"] = {{"pressures", {{"dtype", "f64"}, {"shape", {S, N}}}},
                 {"demands", {{"dtype", "f64"}, {"shape", {S, N}}}},
                 {"heads", {{"dtype", "f64"}, {"shape", {S, N}}}},
                 {"controls", {{"dtype", "f64"}, {"shape", {S, C}}}},
                 {"edge_index", {{"dtype", "i64"}, {"shape", {2, A}}}},
                 {"edge_attr", {{"dtype", "f64"}, {"shape", {A, GraphTopology::kArcChannels}}}},
                 {"node_static", {{"dtype", "f64"}, {"shape", {N, 1}}}}};

  {
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) fail(Errc::IoError, "cannot write manifest.json in " + dir);
    out << j.dump(2) << "\n";
  }

  const int64_t chunk_bytes = mf.chunk_rows * N * static_cast<int64_t>(sizeof(double));
  auto fpath = [&](const char* name) { return (fs::path(dir) / name).string(); };
  write_array(fpath("pressures.f64"), reinterpret_cast<const char*>(ds.pressures.data()),
              ds.pressures.size() * sizeof(double), chunk_bytes);
  write_array(fpath("demands.f64"), reinterpret_cast<const char*>(ds.demands.data()),
              ds.demands.size() * sizeof(double), chunk_bytes);
  write_array(fpath("heads.f64"), reinterpret_cast<const char*>(ds.heads.data()),
              ds.heads.size() * sizeof(double), chunk_bytes);
  write_array(fpath("controls.f64"), reinterpret_cast<const char*>(ds.controls.data()),
              ds.controls.size() * sizeof(double), std::max<int64_t>(chunk_bytes, 8));

  std::vector<int64_t> edge_index;
  edge_index.reserve(2 * A);
  edge_index.insert(edge_index.end(), ds.topology.arc_src.begin(), ds.topology.arc_src.end());
  edge_index.insert(edge_index.end(), ds.topology.arc_dst.begin(), ds.topology.arc_dst.end());
  write_array(fpath("edge_index.i64"), reinterpret_cast<const char*>(edge_index.data()),
              edge_index.size() * sizeof(int64_t), 1 << 20);
  write_array(fpath("edge_attr.f64"), reinterpret_cast<const char*>(ds.topology.arc_attr.data()),
              ds.topology.arc_attr.size() * sizeof(double), 1 << 20);
  write_array(fpath("node_static.f64"), reinterpret_cast<const char*>(ds.topology.node_elevation.data()),
              ds.topology.node_elevation.size() * sizeof(double), 1 << 20);
}

SnapshotDataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) fail(Errc::IoError, "no manifest.json in " + dir);
  json j = json::parse(in, nullptr, true, true);
  if (j.value("format", "") != "wdn-dataset") fail(Errc::IoError, dir + ": not a dataset directory");

  SnapshotDataset ds;
  DatasetManifest& mf = ds.manifest;
  mf.network_name = j.at("network_name");
  mf.mode = j.at("mode");
  mf.realistic = j.at("realistic");
  mf.seed = j.at("seed");
  mf.sampling.demand_lo = j["sampling"]["demand_lo"];
  mf.sampling.demand_hi = j["sampling"]["demand_hi"];
  mf.sampling.head_delta = j["sampling"]["head_delta"];
  mf.sampling.pump_lo = j["sampling"]["pump_lo"];
  mf.sampling.pump_hi = j["sampling"]["pump_hi"];
  mf.sampling.seed = j["sampling"]["seed"];
  mf.noise.sigma_demand = j["noise"]["sigma_demand"];
  mf.noise.sigma_head = j["noise"]["sigma_head"];
  mf.noise.seed = j["noise"]["seed"];
  mf.pattern.timesteps = j["pattern"]["timesteps"];
  mf.pattern.source = j["pattern"]["source"];
  mf.pattern.prefer_node_patterns = j["pattern"]["prefer_node_patterns"];
  mf.solver.tol_flow = j["solver"]["tol_flow"];
  mf.solver.tol_head = j["solver"]["tol_head"];
  mf.solver.max_iterations = j["solver"]["max_iterations"];
  mf.solver.q_min = j["solver"]["q_min"];
  mf.solver.initial_flow = j["solver"]["initial_flow"];
  mf.snapshot_count = j.at("snapshot_count");
  mf.node_count = j.at("node_count");
  mf.link_count = j.at("link_count");
  mf.resampled = j.at("resampled");
  mf.train_fraction = j.at("train_fraction");
  mf.split_seed = j.at("split_seed");
  mf.norm = norm_from_json(j.at("normalization"));
  mf.chunk_rows = j.at("chunk_rows");
  mf.tool_version = j.at("tool_version");
  mf.command = j.value("command", "");

  GraphTopology& g = ds.topology;
  const json& t = j.at("topology");
  g.node_ids = t.at("node_ids").get<std::vector<std::string>>();
  g.node_kind = t.at("node_kind").get<std::vector<int>>();
  g.junction_count = t.at("junction_count");
  g.link_ids = t.at("link_ids").get<std::vector<std::string>>();
  g.link_kind = t.at("link_kind").get<std::vector<int>>();
  g.link_from = t.at("link_from").get<std::vector<int64_t>>();
  g.link_to = t.at("link_to").get<std::vector<int64_t>>();
  g.node_count = static_cast<int64_t>(g.node_ids.size());

  const int64_t N = mf.node_count;
  const int64_t S = mf.snapshot_count;
  const int64_t A = 2 * mf.link_count;
  ds.count = S;
  auto fpath = [&](const char* name) { return (fs::path(dir) / name).string(); };
  ds.pressures = read_array<double>(fpath("pressures.f64"), S * N);
  ds.demands = read_array<double>(fpath("demands.f64"), S * N);
  ds.heads = read_array<double>(fpath("heads.f64"), S * N);
  g.node_elevation = read_array<double>(fpath("node_static.f64"), N);
  g.arc_attr = read_array<double>(fpath("edge_attr.f64"), A * GraphTopology::kArcChannels);
  std::vector<int64_t> edge_index = read_array<int64_t>(fpath("edge_index.i64"), 2 * A);
  g.arc_src.assign(edge_index.begin(), edge_index.begin() + A);
  g.arc_dst.assign(edge_index.begin() + A, edge_index.end());
  ds.controls = read_array<double>(fpath("controls.f64"), S * ds.control_width());
  return ds;
}

}  // namespace wdn
