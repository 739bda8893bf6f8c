#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wdn/inp.hpp"

namespace wdn {

enum class NodeKind : int { Junction = 0, Reservoir = 1, Tank = 2 };
enum class LinkKind : int { Pipe = 0, Pump = 1, Valve = 2 };

// Graph view of a network. Node order: junctions in file order, then
// reservoirs, then tanks. Link order: pipes, pumps, valves (file order each).
// Every physical link is stored as two directed arcs, forward then reverse,
// with identical attributes.
//
// Arc attribute channels: [length, diameter, roughness, is_pipe, is_pump,
// is_valve]; pumps and valves carry [0,0,0] geometry plus their one-hot kind.
struct GraphTopology {
  static constexpr int kArcChannels = 6;

  int64_t node_count = 0;
  int64_t junction_count = 0;
  std::vector<std::string> node_ids;
  std::vector<int> node_kind;            // NodeKind values
  std::vector<double> node_elevation;    // m; reservoirs use total head (p = 0)
  std::vector<int64_t> arc_src, arc_dst; // size 2 * link_count
  std::vector<double> arc_attr;          // (2 * link_count) x kArcChannels, row-major
  std::vector<std::string> link_ids;
  std::vector<int> link_kind;            // LinkKind values
  std::vector<int64_t> link_from, link_to;

  int64_t link_count() const { return static_cast<int64_t>(link_ids.size()); }
  int64_t arc_count() const { return static_cast<int64_t>(arc_src.size()); }
  bool is_fixed_head(int64_t node) const { return node_kind[node] != 0; }
  int64_t node_index(const std::string& id) const;  // -1 when absent
};

// Requires validate(model).ok(); throws Errc::InvalidModel otherwise.
GraphTopology to_graph(const NetworkModel& model);

bool same_topology(const GraphTopology& a, const GraphTopology& b);

}  // namespace wdn
