#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <sstream>

#include "wdn/hydraulics.hpp"
#include "wdn/inp.hpp"

namespace wdn {

ValidationReport validate(const NetworkModel& m) {
  ValidationReport rep;
  auto add = [&](const std::string& code, const std::string& subject, const std::string& detail) {
    rep.violations.push_back({code, subject, detail});
  };

  if (m.reservoirs.empty() && m.tanks.empty())
    add("NoFixedHeadNode", "", "network has no reservoir or tank");

  for (const auto& j : m.junctions)
    if (j.base_demand < 0)
      add("NegativeDemand", j.id, "base demand " + std::to_string(j.base_demand) + " m3/s");

  for (const auto& r : m.reservoirs)
    if (!std::isfinite(r.total_head)) add("NonFiniteHead", r.id, "reservoir head not finite");

  for (const auto& t : m.tanks)
    if (!(t.min_level <= t.init_level && t.init_level <= t.max_level))
      add("TankLevelOrder", t.id, "levels must satisfy min <= init <= max");

  for (const auto& p : m.pipes) {
    if (p.length <= 0) add("NonPositiveGeometry", p.id, "pipe length must be > 0");
    if (p.diameter <= 0) add("NonPositiveGeometry", p.id, "pipe diameter must be > 0");
    if (p.roughness <= 0) add("NonPositiveGeometry", p.id, "pipe roughness must be > 0");
  }
  for (const auto& v : m.valves)
    if (v.diameter <= 0) add("NonPositiveGeometry", v.id, "valve diameter must be > 0");

  for (const auto& p : m.pumps) {
    if (p.speed <= 0) add("NonPositiveSpeed", p.id, "pump speed must be > 0");
    auto it = m.curves.find(p.curve);
    if (it == m.curves.end()) {
      add("UnknownCurve", p.id, "head curve '" + p.curve + "' not found");
    } else {
      try {
        fit_pump_curve(it->second);
      } catch (const Error& e) {
        add("BadPumpCurve", p.id, e.what());
      }
    }
  }

  // Connectivity over open links.
  size_t n = m.node_count();
  if (n > 0) {
    std::map<std::string, size_t> index;
    size_t k = 0;
    for (const auto& j : m.junctions) index[j.id] = k++;
    for (const auto& r : m.reservoirs) index[r.id] = k++;
    for (const auto& t : m.tanks) index[t.id] = k++;

    std::vector<std::vector<size_t>> adj(n);
    auto connect = [&](const std::string& a, const std::string& b) {
      auto ia = index.find(a), ib = index.find(b);
      if (ia == index.end() || ib == index.end()) return;
      adj[ia->second].push_back(ib->second);
      adj[ib->second].push_back(ia->second);
    };
    for (const auto& p : m.pipes)
      if (p.status == LinkStatus::Open) connect(p.from, p.to);
    for (const auto& p : m.pumps) connect(p.from, p.to);
    for (const auto& v : m.valves)
      if (v.status == LinkStatus::Open) connect(v.from, v.to);

    std::vector<int> comp(n, -1);
    int ncomp = 0;
    std::vector<size_t> sizes;
    for (size_t s = 0; s < n; ++s) {
      if (comp[s] >= 0) continue;
      size_t sz = 0;
      std::queue<size_t> q;
      q.push(s);
      comp[s] = ncomp;
      while (!q.empty()) {
        size_t u = q.front();
        q.pop();
        ++sz;
        for (size_t v : adj[u])
          if (comp[v] < 0) {
            comp[v] = ncomp;
            q.push(v);
          }
      }
      sizes.push_back(sz);
      ++ncomp;
    }
    if (ncomp > 1) {
      std::ostringstream os;
      os << "component sizes";
      for (size_t sz : sizes) os << " " << sz;
      add("Disconnected", "", os.str());
    }
  }

  return rep;
}

std::string ValidationReport::to_json_lines() const {
  std::string out;
  for (const auto& v : violations) {
    std::string line = "{\"code\":\"" + v.code + "\",\"subject\":\"" + v.subject + "\",\"detail\":\"";
    for (char c : v.detail) {
      if (c == '"' || c == '\\') line += '\\';
      line += c;
    }
    line += "\"}\n";
    out += line;
  }
  return out;
}

}  // namespace wdn
