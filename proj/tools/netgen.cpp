// Deterministic generator for the bundled benchmark-scale test networks.
// ctown: 388 junctions in five looped grid districts, LPS / Hazen-Williams,
//        with demand patterns per DMA.
// richmond: ~260 junctions on a trunk-and-branches layout, CMH /
//        Darcy-Weisbach, hillier elevations.
// Tanks are placed in a second phase, at the heads the tankless network
// settles to, so they float near their local hydraulic grade.
// Regenerate with: wdn-netgen <style> <out.inp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "wdn/hydraulics.hpp"
#include "wdn/inp.hpp"
#include "wdn/rng.hpp"

using namespace wdn;

namespace {

std::string id(const std::string& prefix, int n) { return prefix + std::to_string(n); }

// Solves the tankless model, then anchors each (anchor, riser) tank so its
// water surface sits `depth` metres under the local steady head.
void place_tanks(NetworkModel& m, const std::vector<std::string>& anchors, double riser_diam) {
  HydraulicState st = solve_steady_state(m, base_controls(m));
  if (!st.converged) {
    std::cerr << "netgen: tankless solve did not converge\n";
    std::exit(1);
  }
  GraphTopology g = to_graph(m);
  int pid = static_cast<int>(m.pipes.size()) + 1000;
  for (size_t k = 0; k < anchors.size(); ++k) {
    int64_t idx = g.node_index(anchors[k]);
    double head = st.head[idx];
    Tank t;
    t.id = id("T", static_cast<int>(k) + 1);
    t.init_level = 4.0;
    t.min_level = 0.0;
    t.max_level = 8.0;
    t.diameter = 14.0;
    t.elevation = head - t.init_level;
    m.tanks.push_back(t);
    auto xy = m.coordinates[anchors[k]];
    m.coordinates[t.id] = {xy.first + 60, xy.second + 60};
    Pipe riser;
    riser.id = id("P", pid++);
    riser.from = anchors[k];
    riser.to = t.id;
    riser.length = 200.0;
    riser.diameter = riser_diam;
    riser.roughness = m.headloss == HeadlossFormula::HazenWilliams ? 120.0 : 0.1e-3;
    m.pipes.push_back(riser);
  }
}

NetworkModel make_ctown() {
  NetworkModel m;
  m.flow_units = FlowUnits::LPS;
  m.headloss = HeadlossFormula::HazenWilliams;
  m.title = "C-Town style test network";
  Rng rng(20240517);

  m.patterns["DMA_A"] = {0.52, 0.45, 0.41, 0.40, 0.44, 0.58, 0.92, 1.32, 1.51, 1.42, 1.26, 1.15,
                         1.09, 1.05, 1.01, 1.06, 1.16, 1.37, 1.52, 1.41, 1.19, 0.94, 0.74, 0.58};
  m.patterns["DMA_B"] = {0.60, 0.50, 0.44, 0.42, 0.43, 0.52, 0.78, 1.18, 1.45, 1.48, 1.32, 1.18,
                         1.10, 1.06, 1.03, 1.08, 1.20, 1.40, 1.55, 1.46, 1.24, 0.98, 0.80, 0.64};
  m.patterns["DMA_C"] = {0.48, 0.42, 0.39, 0.39, 0.46, 0.64, 1.00, 1.38, 1.48, 1.36, 1.22, 1.12,
                         1.08, 1.04, 1.02, 1.07, 1.18, 1.40, 1.50, 1.38, 1.15, 0.90, 0.70, 0.55};
  const char* dma[3] = {"DMA_A", "DMA_B", "DMA_C"};

  struct District {
    int rows, cols;
    double x0, y0;      // m
    double elev_base;   // m
  };
  District dists[5] = {
      {9, 9, 0, 0, 22.0}, {9, 9, 1400, 0, 38.0}, {9, 9, 0, 1400, 52.0},
      {9, 9, 1400, 1400, 34.0}, {8, 8, 2800, 700, 60.0}};

  const double spacing = 120.0;
  int jid = 1, pid = 1;
  std::vector<std::vector<std::string>> grid_ids(5);

  for (int d = 0; d < 5; ++d) {
    const District& D = dists[d];
    grid_ids[d].resize(D.rows * D.cols);
    for (int r = 0; r < D.rows; ++r) {
      for (int c = 0; c < D.cols; ++c) {
        Junction j;
        j.id = id("J", jid++);
        double x = D.x0 + c * spacing, y = D.y0 + r * spacing;
        j.elevation = D.elev_base + 6.0 * std::sin(x / 430.0) + 5.0 * std::cos(y / 370.0) +
                      2.0 * rng.uniform();
        j.base_demand = rng.uniform(0.15, 1.3) * 1e-3;  // 0.15..1.3 L/s
        j.pattern = dma[(d + r + c) % 3];
        m.coordinates[j.id] = {x, y};
        grid_ids[d][r * D.cols + c] = j.id;
        m.junctions.push_back(j);
      }
    }
    auto at = [&](int r, int c) { return grid_ids[d][r * D.cols + c]; };
    auto add_pipe = [&](const std::string& a, const std::string& b, double len) {
      Pipe p;
      p.id = id("P", pid++);
      p.from = a;
      p.to = b;
      p.length = len;
      p.diameter = rng.uniform(0.15, 0.25);
      p.roughness = rng.uniform(90.0, 130.0);
      m.pipes.push_back(p);
    };
    // full horizontal rows; sparse vertical ties, at least one per row pair
    for (int r = 0; r < D.rows; ++r)
      for (int c = 0; c + 1 < D.cols; ++c) add_pipe(at(r, c), at(r, c + 1), spacing);
    for (int r = 0; r + 1 < D.rows; ++r) {
      int forced = static_cast<int>(rng.below(static_cast<uint64_t>(D.cols)));
      for (int c = 0; c < D.cols; ++c)
        if (c == forced || rng.uniform() < 0.35) add_pipe(at(r, c), at(r + 1, c), spacing);
    }
  }

  // trunk mains chaining district centers, larger diameter
  auto center = [&](int d) {
    const District& D = dists[d];
    return grid_ids[d][(D.rows / 2) * D.cols + D.cols / 2];
  };
  auto add_trunk = [&](const std::string& a, const std::string& b, double len, double diam) {
    Pipe p;
    p.id = id("P", pid++);
    p.from = a;
    p.to = b;
    p.length = len;
    p.diameter = diam;
    p.roughness = 115.0;
    m.pipes.push_back(p);
  };
  add_trunk(center(0), center(1), 1500, 0.45);
  add_trunk(center(0), center(2), 1500, 0.45);
  add_trunk(center(1), center(3), 1500, 0.40);
  add_trunk(center(2), center(3), 1500, 0.40);
  add_trunk(center(3), center(4), 1600, 0.40);
  add_trunk(center(1), center(4), 1600, 0.40);
  // secondary inter-district ties at grid corners
  add_trunk(grid_ids[0][8], grid_ids[1][0], 600, 0.3);
  add_trunk(grid_ids[0][72], grid_ids[2][0], 600, 0.3);
  add_trunk(grid_ids[1][72], grid_ids[3][8], 600, 0.3);
  add_trunk(grid_ids[2][80], grid_ids[3][72], 600, 0.3);

  // source: reservoir + two parallel pumps into district 0's corner
  Reservoir res;
  res.id = "R1";
  res.total_head = 8.0;
  m.reservoirs.push_back(res);
  m.coordinates["R1"] = {-300, -300};
  m.curves["PC1"] = {{0.0, 105.0}, {0.15, 88.0}, {0.30, 50.0}};
  for (int k = 0; k < 2; ++k) {
    Pump pu;
    pu.id = id("PU", k + 1);
    pu.from = "R1";
    pu.to = center(0);
    pu.curve = "PC1";
    m.pumps.push_back(pu);
  }

  std::vector<std::string> anchors;
  for (int d = 1; d < 5; ++d) {
    const District& D = dists[d];
    anchors.push_back(grid_ids[d][(D.rows - 1) * D.cols + D.cols - 1]);
  }
  place_tanks(m, anchors, 0.2);
  return m;
}

NetworkModel make_richmond() {
  NetworkModel m;
  m.flow_units = FlowUnits::CMH;
  m.headloss = HeadlossFormula::DarcyWeisbach;
  m.title = "Richmond style test network";
  Rng rng(19770304);

  int jid = 1, pid = 1;
  auto add_junction = [&](double x, double y, double elev, double demand_cmh) {
    Junction j;
    j.id = id("J", jid++);
    j.elevation = elev;
    j.base_demand = demand_cmh / 3600.0;
    m.coordinates[j.id] = {x, y};
    m.junctions.push_back(j);
    return j.id;
  };
  auto add_pipe = [&](const std::string& a, const std::string& b, double len, double diam,
                      double rough_mm) {
    Pipe p;
    p.id = id("P", pid++);
    p.from = a;
    p.to = b;
    p.length = len;
    p.diameter = diam;
    p.roughness = rough_mm * 1e-3;
    m.pipes.push_back(p);
  };

  // trunk: 24 nodes climbing from 35 m to 72 m
  const int trunk_n = 24;
  std::vector<std::string> trunk(trunk_n);
  std::vector<double> trunk_elev(trunk_n);
  for (int i = 0; i < trunk_n; ++i) {
    trunk_elev[i] = 35.0 + 37.0 * i / (trunk_n - 1) + 3.0 * std::sin(i * 0.9);
    trunk[i] = add_junction(i * 220.0, 0.0, trunk_elev[i], rng.uniform(1.0, 3.0));
    if (i > 0) add_pipe(trunk[i - 1], trunk[i], 220.0, 0.32, 0.15);
  }

  // branches: alternating sides, tree-shaped with occasional loop closures
  std::vector<std::string> branch_tip;
  for (int b = 0; b < 12; ++b) {
    int root = 1 + b * 2;
    double side = b % 2 == 0 ? 1.0 : -1.0;
    std::string prev = trunk[root];
    int depth = 8 + static_cast<int>(rng.below(5));
    double elev = trunk_elev[root];
    std::string last;
    for (int k = 0; k < depth; ++k) {
      double x = root * 220.0 + side * 30.0 * (k + 1);
      double y = side * 160.0 * (k + 1);
      elev = std::min(elev + rng.uniform(-1.0, 3.0), trunk_elev[root] + 14.0);
      std::string node = add_junction(x, y, elev, rng.uniform(0.8, 4.0));
      add_pipe(prev, node, rng.uniform(150.0, 320.0), rng.uniform(0.12, 0.2), rng.uniform(0.05, 0.5));
      std::string spur = add_junction(x + side * 120.0, y, elev + rng.uniform(0.0, 3.0),
                                      rng.uniform(0.5, 2.5));
      add_pipe(node, spur, rng.uniform(100.0, 250.0), rng.uniform(0.1, 0.15), rng.uniform(0.05, 0.5));
      prev = node;
      last = node;
    }
    branch_tip.push_back(last);
    // loop closure back to the next trunk node
    if (b % 3 == 0 && root + 2 < trunk_n)
      add_pipe(last, trunk[root + 2], rng.uniform(400.0, 700.0), 0.15, 0.2);
  }

  // source: reservoir, pump, and a throttling valve bypassing one trunk pipe
  Reservoir res;
  res.id = "R1";
  res.total_head = 30.0;
  m.reservoirs.push_back(res);
  m.coordinates["R1"] = {-400, 0};
  m.curves["PC1"] = {{0.0, 100.0}, {500.0 / 3600.0, 82.0}, {1000.0 / 3600.0, 42.0}};
  Pump pu;
  pu.id = "PU1";
  pu.from = "R1";
  pu.to = trunk[0];
  pu.curve = "PC1";
  m.pumps.push_back(pu);

  Valve v;
  v.id = "V1";
  v.from = trunk[2];
  v.to = trunk[3];
  v.diameter = 0.3;
  v.kind = ValveKind::TCV;
  v.setting = 1.5;
  m.valves.push_back(v);
  // the valve replaces that trunk pipe so it is load-bearing
  for (auto it = m.pipes.begin(); it != m.pipes.end(); ++it) {
    if (it->from == trunk[2] && it->to == trunk[3]) {
      m.pipes.erase(it);
      break;
    }
  }

  std::vector<std::string> anchors = {branch_tip[0], branch_tip[3], branch_tip[6], branch_tip[9]};
  place_tanks(m, anchors, 0.15);
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: wdn-netgen <ctown|richmond> <out.inp>\n";
    return 2;
  }
  std::string style = argv[1];
  NetworkModel m;
  if (style == "ctown") m = make_ctown();
  else if (style == "richmond") m = make_richmond();
  else {
    std::cerr << "unknown style '" << style << "'\n";
    return 2;
  }

  ValidationReport rep = validate(m);
  if (!rep.ok()) {
    std::cerr << "generated model failed validation:\n" << rep.to_json_lines();
    return 1;
  }
  HydraulicState st = solve_steady_state(m, base_controls(m));
  if (!st.converged) {
    std::cerr << "base-demand solve did not converge\n";
    return 1;
  }
  double pmin = 1e9, pmax = -1e9;
  for (size_t i = 0; i < m.junctions.size(); ++i) {
    pmin = std::min(pmin, st.pressure[i]);
    pmax = std::max(pmax, st.pressure[i]);
  }
  std::cerr << style << ": " << m.junctions.size() << " junctions, " << m.pipes.size() << " pipes, "
            << m.pumps.size() << " pumps, " << m.tanks.size() << " tanks; base pressures ["
            << pmin << ", " << pmax << "] mH2O in " << st.iterations << " iterations\n";

  std::ofstream out(argv[2], std::ios::binary);
  out << serialize_inp(m);
  return out.good() ? 0 : 1;
}
