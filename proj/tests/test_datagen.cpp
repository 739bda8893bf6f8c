#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "wdn/datagen.hpp"

using namespace wdn;

namespace {

const char* kTwoNode = R"(
[JUNCTIONS]
J1  10  30
[RESERVOIRS]
R1  50
[PIPES]
P1  R1  J1  1000  300  100
[OPTIONS]
UNITS LPS
HEADLOSS H-W
)";

const char* kLoopNet = R"(
[JUNCTIONS]
J1 10 10
J2 12 15
J3 8  20
J4 15 5
[RESERVOIRS]
R1 60
[TANKS]
T1 40 5 0 10 12
[PIPES]
P1 R1 J1 800 300 110
P2 J1 J2 400 250 100
P3 J2 J3 400 200 100
P4 J3 J4 400 200 95
P5 J4 J1 400 250 105
P6 J2 T1 300 250 110
[PATTERNS]
FLAT 1.0 1.0 1.0 1.0
[OPTIONS]
UNITS LPS
HEADLOSS H-W
)";

std::string tmp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(p);
  return p.string();
}

}  // namespace

TEST_CASE("sample_controls") {
  NetworkModel m = parse_inp(kLoopNet);

  SUBCASE("degenerate ranges return the base controls") {
    SamplingConfig cfg;
    cfg.demand_lo = cfg.demand_hi = 1.0;
    cfg.head_delta = 0.0;
    cfg.pump_lo = cfg.pump_hi = 1.0;
    Rng rng(5);
    ControlSettings c = sample_controls(m, cfg, rng);
    ControlSettings base = base_controls(m);
    CHECK(c.junction_demand == base.junction_demand);
    CHECK(c.reservoir_head == base.reservoir_head);
    CHECK(c.pump_speed == base.pump_speed);
  }

  SUBCASE("fixed seed reproduces the draw") {
    SamplingConfig cfg;
    Rng r1(42), r2(42);
    ControlSettings a = sample_controls(m, cfg, r1);
    ControlSettings b = sample_controls(m, cfg, r2);
    CHECK(a.junction_demand == b.junction_demand);
    CHECK(a.reservoir_head == b.reservoir_head);
  }

  SUBCASE("law of large numbers: mean demand within 1% of base") {
    SamplingConfig cfg;
    cfg.demand_lo = 0.5;
    cfg.demand_hi = 1.5;
    Rng rng(7);
    double base = m.junctions[0].base_demand;
    double sum = 0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) sum += sample_controls(m, cfg, rng).junction_demand[0];
    CHECK(std::abs(sum / draws - base) < 0.01 * base);
  }
}

TEST_CASE("generate_snapshots") {
  NetworkModel m = parse_inp(kLoopNet);

  SUBCASE("degenerate ranges reproduce the base solve exactly") {
    SamplingConfig cfg;
    cfg.demand_lo = cfg.demand_hi = 1.0;
    cfg.head_delta = 0.0;
    cfg.pump_lo = cfg.pump_hi = 1.0;
    SnapshotDataset ds = generate_snapshots(m, cfg, 1);
    HydraulicState st = solve_steady_state(m, base_controls(m));
    REQUIRE(st.converged);
    for (int64_t n = 0; n < ds.topology.node_count; ++n) {
      CHECK(ds.pressures[n] == st.pressure[n]);
      CHECK(ds.heads[n] == st.head[n]);
    }
  }

  SUBCASE("every stored snapshot passes the independent balance check") {
    SamplingConfig cfg;
    cfg.seed = 11;
    SnapshotDataset ds = generate_snapshots(m, cfg, 50);
    CHECK(ds.manifest.resampled == 0);
    const int64_t N = ds.topology.node_count;
    for (int64_t s = 0; s < ds.count; ++s) {
      ControlSettings c = base_controls(m);
      for (size_t j = 0; j < c.junction_demand.size(); ++j) c.junction_demand[j] = ds.demands[s * N + j];
      c.reservoir_head[0] = ds.controls[s * ds.control_width()];
      HydraulicState st;
      st.head.assign(ds.heads.begin() + s * N, ds.heads.begin() + (s + 1) * N);
      st.pressure.assign(ds.pressures.begin() + s * N, ds.pressures.begin() + (s + 1) * N);
      // flows are not stored; re-solve to check the stored fields are a valid state
      HydraulicState re = solve_steady_state(m, c);
      REQUIRE(re.converged);
      BalanceReport rep = check_balance(m, c, re);
      CHECK(rep.max_mass_residual <= 1e-6);
      CHECK(rep.max_energy_residual <= 1e-4);
      for (int64_t n = 0; n < N; ++n) CHECK(re.pressure[n] == ds.pressures[s * N + n]);
    }
  }

  SUBCASE("worker count does not change a single byte") {
    SamplingConfig cfg;
    cfg.seed = 99;
    SnapshotDataset a = generate_snapshots(m, cfg, 64, {}, 1);
    SnapshotDataset b = generate_snapshots(m, cfg, 64, {}, 4);
    CHECK(a.pressures == b.pressures);
    CHECK(a.heads == b.heads);
    CHECK(a.demands == b.demands);
    CHECK(a.controls == b.controls);
    CHECK(a.manifest.resampled == b.manifest.resampled);
  }

  SUBCASE("impossible solver budget stalls generation") {
    SamplingConfig cfg;
    SolverConfig solver;
    solver.max_iterations = 1;
    CHECK_THROWS_AS(generate_snapshots(m, cfg, 4, solver), Error);
    try {
      generate_snapshots(m, cfg, 4, solver);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::GenerationStalled);
    }
  }

  SUBCASE("manifest normalization brackets the training pressures") {
    SamplingConfig cfg;
    cfg.seed = 3;
    SnapshotDataset ds = generate_snapshots(m, cfg, 40);
    const int64_t N = ds.topology.node_count;
    for (int64_t s : ds.train_indices())
      for (int64_t n = 0; n < N; ++n) {
        CHECK(ds.pressures[s * N + n] >= ds.manifest.norm.pressure_min);
        CHECK(ds.pressures[s * N + n] <= ds.manifest.norm.pressure_max);
      }
    // train/val split partitions the index range
    auto tr = ds.train_indices();
    auto va = ds.val_indices();
    CHECK(tr.size() + va.size() == static_cast<size_t>(ds.count));
    CHECK(tr.size() == 36);  // 90% of 40
  }
}

TEST_CASE("dataset store round-trips byte-for-byte") {
  NetworkModel m = parse_inp(kLoopNet);
  SamplingConfig cfg;
  cfg.seed = 17;
  SnapshotDataset ds = generate_snapshots(m, cfg, 10);
  ds.manifest.network_name = "loopnet";
  ds.manifest.command = "test fixture";

  std::string dir = tmp_dir("wdn_ds_roundtrip");
  save_dataset(ds, dir);
  SnapshotDataset r = load_dataset(dir);

  CHECK(r.count == ds.count);
  CHECK(r.pressures == ds.pressures);
  CHECK(r.demands == ds.demands);
  CHECK(r.heads == ds.heads);
  CHECK(r.controls == ds.controls);
  CHECK(r.topology.arc_src == ds.topology.arc_src);
  CHECK(r.topology.arc_attr == ds.topology.arc_attr);
  CHECK(r.topology.node_ids == ds.topology.node_ids);
  CHECK(r.manifest.network_name == "loopnet");
  CHECK(r.manifest.seed == ds.manifest.seed);
  CHECK(r.manifest.split_seed == ds.manifest.split_seed);
  CHECK(r.manifest.norm.pressure_min == ds.manifest.norm.pressure_min);
  CHECK(r.train_indices() == ds.train_indices());

  // saving the loaded copy reproduces identical bytes
  std::string dir2 = tmp_dir("wdn_ds_roundtrip2");
  save_dataset(r, dir2);
  for (const char* f : {"manifest.json", "pressures.f64", "demands.f64", "heads.f64",
                        "controls.f64", "edge_index.i64", "edge_attr.f64", "node_static.f64"}) {
    std::ifstream a(std::filesystem::path(dir) / f, std::ios::binary);
    std::ifstream b(std::filesystem::path(dir2) / f, std::ios::binary);
    std::ostringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
  }
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("generate_realistic_testset") {
  NetworkModel m = parse_inp(kLoopNet);

  SUBCASE("zero noise and a flat pattern reproduce the base solve at every step") {
    PatternConfig pat;
    pat.timesteps = 6;
    pat.source = "FLAT";
    pat.prefer_node_patterns = false;
    NoiseConfig noise;
    noise.sigma_demand = 0.0;
    noise.sigma_head = 0.0;
    SnapshotDataset ds = generate_realistic_testset(m, pat, noise);
    CHECK(ds.manifest.realistic);
    HydraulicState st = solve_steady_state(m, base_controls(m));
    const int64_t N = ds.topology.node_count;
    for (int64_t t = 0; t < ds.count; ++t)
      for (int64_t n = 0; n < N; ++n) CHECK(ds.pressures[t * N + n] == st.pressure[n]);
  }

  SUBCASE("with the diurnal template, pressure moves opposite to the multiplier") {
    NetworkModel single = parse_inp(kTwoNode);
    PatternConfig pat;  // no source, no node patterns -> builtin template
    pat.timesteps = 24;
    NoiseConfig noise;
    noise.sigma_demand = 0.0;
    noise.sigma_head = 0.0;
    SnapshotDataset ds = generate_realistic_testset(single, pat, noise);
    const int64_t N = ds.topology.node_count;
    for (int64_t a = 0; a < 24; ++a)
      for (int64_t b = 0; b < 24; ++b)
        if (kBuiltinDiurnal[a] < kBuiltinDiurnal[b])
          CHECK(ds.pressures[a * N] > ds.pressures[b * N]);
  }

  SUBCASE("noise is truncated so demands stay nonnegative") {
    PatternConfig pat;
    pat.timesteps = 40;
    NoiseConfig noise;
    noise.sigma_demand = 5.0;  // absurd, to force deep negative draws
    noise.seed = 31;
    SnapshotDataset ds = generate_realistic_testset(m, pat, noise);
    for (double d : ds.demands) CHECK(d >= 0.0);
  }

  SUBCASE("unknown pattern source fails") {
    PatternConfig pat;
    pat.source = "NOPE";
    CHECK_THROWS_AS(generate_realistic_testset(m, pat, {}), Error);
  }
}

TEST_CASE("distribution_report") {
  NetworkModel m = parse_inp(kLoopNet);
  SamplingConfig cfg;
  cfg.seed = 23;
  SnapshotDataset ds = generate_snapshots(m, cfg, 200);

  SUBCASE("a dataset against itself has KS zero") {
    ShiftReport rep = distribution_report(ds, ds);
    CHECK(rep.ks == 0.0);
    CHECK(rep.mean_a == rep.mean_b);
  }

  SUBCASE("histograms integrate to one") {
    ShiftReport rep = distribution_report(ds, ds, 50);
    double width = rep.bin_edges[1] - rep.bin_edges[0];
    double total = 0;
    for (double d : rep.density_a) total += d * width;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("same-generator halves are close, realistic data is farther") {
    SamplingConfig cfg2 = cfg;
    cfg2.seed = 24;
    SnapshotDataset other = generate_snapshots(m, cfg2, 200);
    ShiftReport same = distribution_report(ds, other);
    CHECK(same.ks < 0.1);

    PatternConfig pat;
    pat.timesteps = 24;
    NoiseConfig noise;
    noise.sigma_demand = 0.05;
    noise.seed = 5;
    SnapshotDataset realistic = generate_realistic_testset(m, pat, noise);
    ShiftReport shift = distribution_report(ds, realistic);
    CHECK(shift.ks > same.ks);
  }

  SUBCASE("different topologies are rejected") {
    NetworkModel two = parse_inp(kTwoNode);
    SamplingConfig c2;
    SnapshotDataset other = generate_snapshots(two, c2, 3);
    CHECK_THROWS_AS(distribution_report(ds, other), Error);
  }
}
