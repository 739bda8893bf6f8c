#include "wdn/graph.hpp"

#include <algorithm>

namespace wdn {

int64_t GraphTopology::node_index(const std::string& id) const {
  for (int64_t i = 0; i < node_count; ++i)
    if (node_ids[i] == id) return i;
  return -1;
}

GraphTopology to_graph(const NetworkModel& m) {
  ValidationReport report = validate(m);
  if (!report.ok())
    fail(Errc::InvalidModel, "to_graph on invalid model: " + report.violations.front().code + " (" +
                                 report.violations.front().detail + ")");

  GraphTopology g;
  g.junction_count = static_cast<int64_t>(m.junctions.size());
  g.node_count = static_cast<int64_t>(m.node_count());
  g.node_ids.reserve(m.node_count());
  for (const auto& j : m.junctions) {
    g.node_ids.push_back(j.id);
    g.node_kind.push_back(static_cast<int>(NodeKind::Junction));
    g.node_elevation.push_back(j.elevation);
  }
  for (const auto& r : m.reservoirs) {
    g.node_ids.push_back(r.id);
    g.node_kind.push_back(static_cast<int>(NodeKind::Reservoir));
    g.node_elevation.push_back(r.total_head);  // pressure 0 at the surface
  }
  for (const auto& t : m.tanks) {
    g.node_ids.push_back(t.id);
    g.node_kind.push_back(static_cast<int>(NodeKind::Tank));
    g.node_elevation.push_back(t.elevation);
  }

  auto index_of = [&](const std::string& id) {
    for (int64_t i = 0; i < g.node_count; ++i)
      if (g.node_ids[i] == id) return i;
    return int64_t{-1};
  };

  auto add_link = [&](const std::string& id, const std::string& from, const std::string& to, LinkKind kind,
                      double length, double diameter, double roughness) {
    int64_t u = index_of(from), v = index_of(to);
    g.link_ids.push_back(id);
    g.link_kind.push_back(static_cast<int>(kind));
    g.link_from.push_back(u);
    g.link_to.push_back(v);
    double attr[GraphTopology::kArcChannels] = {length, diameter, roughness, 0, 0, 0};
    attr[3 + static_cast<int>(kind)] = 1.0;
    for (auto [s, d] : {std::pair{u, v}, std::pair{v, u}}) {
      g.arc_src.push_back(s);
      g.arc_dst.push_back(d);
      g.arc_attr.insert(g.arc_attr.end(), attr, attr + GraphTopology::kArcChannels);
    }
  };

  for (const auto& p : m.pipes) add_link(p.id, p.from, p.to, LinkKind::Pipe, p.length, p.diameter, p.roughness);
  for (const auto& p : m.pumps) add_link(p.id, p.from, p.to, LinkKind::Pump, 0, 0, 0);
  for (const auto& v : m.valves) add_link(v.id, v.from, v.to, LinkKind::Valve, 0, 0, 0);
  return g;
}

bool same_topology(const GraphTopology& a, const GraphTopology& b) {
  return a.node_count == b.node_count && a.node_ids == b.node_ids && a.node_kind == b.node_kind &&
         a.arc_src == b.arc_src && a.arc_dst == b.arc_dst && a.link_ids == b.link_ids;
}

}  // namespace wdn
