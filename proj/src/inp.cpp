#include "wdn/inp.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace wdn {

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::UnknownNodeReference: return "UnknownNodeReference";
    case Errc::UnknownCurveReference: return "UnknownCurveReference";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::MalformedLine: return "MalformedLine";
    case Errc::MissingRequiredSection: return "MissingRequiredSection";
    case Errc::InvalidModel: return "InvalidModel";
    case Errc::NonPositiveGeometry: return "NonPositiveGeometry";
    case Errc::ClosedLink: return "ClosedLink";
    case Errc::BadPumpCurve: return "BadPumpCurve";
    case Errc::SingularSystem: return "SingularSystem";
    case Errc::GenerationStalled: return "GenerationStalled";
    case Errc::TopologyMismatch: return "TopologyMismatch";
    case Errc::RatioOutOfRange: return "RatioOutOfRange";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NonFiniteActivation: return "NonFiniteActivation";
    case Errc::NonFiniteGradient: return "NonFiniteGradient";
    case Errc::EmptyMaskSupport: return "EmptyMaskSupport";
    case Errc::DivergedTraining: return "DivergedTraining";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::SchemaMismatch: return "SchemaMismatch";
    case Errc::NoSensors: return "NoSensors";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {

constexpr double kFt = 0.3048;
constexpr double kInch = 0.0254;

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  size_t i = 0, n = line.size();
  while (i < n) {
    while (i < n && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    size_t start = i;
    while (i < n && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

double parse_number(const std::string& tok, int line_no) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size())
    fail(Errc::MalformedLine, "line " + std::to_string(line_no) + ": expected number, got '" + tok + "'");
  return v;
}

enum class Section {
  None, Title, Junctions, Reservoirs, Tanks, Pipes, Pumps, Valves,
  Demands, Patterns, Curves, Status, Options, Coordinates, End, Unsupported,
};

Section section_from_name(const std::string& name) {
  std::string u = upper(name);
  if (u == "TITLE") return Section::Title;
  if (u == "JUNCTIONS") return Section::Junctions;
  if (u == "RESERVOIRS") return Section::Reservoirs;
  if (u == "TANKS") return Section::Tanks;
  if (u == "PIPES") return Section::Pipes;
  if (u == "PUMPS") return Section::Pumps;
  if (u == "VALVES") return Section::Valves;
  if (u == "DEMANDS") return Section::Demands;
  if (u == "PATTERNS") return Section::Patterns;
  if (u == "CURVES") return Section::Curves;
  if (u == "STATUS") return Section::Status;
  if (u == "OPTIONS") return Section::Options;
  if (u == "COORDINATES") return Section::Coordinates;
  if (u == "END") return Section::End;
  return Section::Unsupported;
}

struct UnitTable {
  double flow;        // file -> m3/s
  double length;      // pipe length, elevation, head, level
  double diameter;    // pipe/valve diameter
  double tank_diam;
  double dw_rough;    // D-W roughness: millifeet (US) / mm (metric)
};

UnitTable unit_table(FlowUnits u) {
  UnitTable t{};
  t.flow = flow_to_si(u);
  if (is_us_units(u)) {
    t.length = kFt;
    t.diameter = kInch;
    t.tank_diam = kFt;
    t.dw_rough = 0.001 * kFt;
  } else {
    t.length = 1.0;
    t.diameter = 0.001;
    t.tank_diam = 1.0;
    t.dw_rough = 0.001;
  }
  return t;
}

struct RawDemand {
  std::string node;
  double value;
  std::string pattern;
  int line_no;
};

}  // namespace

bool is_us_units(FlowUnits u) {
  switch (u) {
    case FlowUnits::CFS:
    case FlowUnits::GPM:
    case FlowUnits::MGD:
    case FlowUnits::IMGD:
    case FlowUnits::AFD:
      return true;
    default:
      return false;
  }
}

double flow_to_si(FlowUnits u) {
  constexpr double gal = 3.785411784e-3;  // m3
  constexpr double ft3 = 0.028316846592;  // m3
  switch (u) {
    case FlowUnits::CFS: return ft3;
    case FlowUnits::GPM: return gal / 60.0;
    case FlowUnits::MGD: return 1e6 * gal / 86400.0;
    case FlowUnits::IMGD: return 1e6 * 4.54609e-3 / 86400.0;
    case FlowUnits::AFD: return 1233.48183754752 / 86400.0;
    case FlowUnits::LPS: return 1e-3;
    case FlowUnits::LPM: return 1e-3 / 60.0;
    case FlowUnits::MLD: return 1e3 / 86400.0;
    case FlowUnits::CMH: return 1.0 / 3600.0;
    case FlowUnits::CMD: return 1.0 / 86400.0;
  }
  return 1.0;
}

const char* flow_units_name(FlowUnits u) {
  switch (u) {
    case FlowUnits::CFS: return "CFS";
    case FlowUnits::GPM: return "GPM";
    case FlowUnits::MGD: return "MGD";
    case FlowUnits::IMGD: return "IMGD";
    case FlowUnits::AFD: return "AFD";
    case FlowUnits::LPS: return "LPS";
    case FlowUnits::LPM: return "LPM";
    case FlowUnits::MLD: return "MLD";
    case FlowUnits::CMH: return "CMH";
    case FlowUnits::CMD: return "CMD";
  }
  return "LPS";
}

std::optional<FlowUnits> flow_units_from_name(const std::string& s) {
  std::string u = upper(s);
  if (u == "CFS") return FlowUnits::CFS;
  if (u == "GPM") return FlowUnits::GPM;
  if (u == "MGD") return FlowUnits::MGD;
  if (u == "IMGD") return FlowUnits::IMGD;
  if (u == "AFD") return FlowUnits::AFD;
  if (u == "LPS") return FlowUnits::LPS;
  if (u == "LPM") return FlowUnits::LPM;
  if (u == "MLD") return FlowUnits::MLD;
  if (u == "CMH") return FlowUnits::CMH;
  if (u == "CMD") return FlowUnits::CMD;
  return std::nullopt;
}

NetworkModel parse_inp(const std::string& text) {
  NetworkModel m;
  m.flow_units = FlowUnits::GPM;

  // First pass keeps raw (unconverted) numbers; units may be declared in an
  // [OPTIONS] section anywhere in the file.
  struct RawTank { Tank t; };
  std::vector<Junction> junctions;
  std::vector<Reservoir> reservoirs;
  std::vector<Tank> tanks;
  std::vector<Pipe> pipes;
  std::vector<Pump> pumps;
  std::vector<Valve> valves;
  std::vector<RawDemand> extra_demands;
  std::map<std::string, std::vector<std::pair<double, double>>> curves;
  std::vector<std::string> title_lines;
  double demand_multiplier = 1.0;

  std::set<std::string> node_ids, link_ids;
  std::set<std::string> seen_sections;
  auto check_node_id = [&](const std::string& id, int line_no) {
    if (!node_ids.insert(id).second)
      fail(Errc::DuplicateId, "line " + std::to_string(line_no) + ": duplicate node id '" + id + "'");
  };
  auto check_link_id = [&](const std::string& id, int line_no) {
    if (!link_ids.insert(id).second)
      fail(Errc::DuplicateId, "line " + std::to_string(line_no) + ": duplicate link id '" + id + "'");
  };

  Section section = Section::None;
  std::string unsupported_name;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  bool saw_end = false;

  while (std::getline(in, raw)) {
    ++line_no;
    if (saw_end) break;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    std::string line = raw;
    if (size_t sc = line.find(';'); sc != std::string::npos) line.erase(sc);

    // Section header?
    {
      size_t b = line.find_first_not_of(" \t");
      if (b != std::string::npos && line[b] == '[') {
        size_t e = line.find(']', b);
        if (e == std::string::npos)
          fail(Errc::MalformedLine, "line " + std::to_string(line_no) + ": unterminated section header");
        std::string name = line.substr(b + 1, e - b - 1);
        section = section_from_name(name);
        if (section == Section::Unsupported) {
          unsupported_name = upper(name);
          m.warnings.push_back("skipped unsupported section [" + unsupported_name + "] at line " +
                               std::to_string(line_no));
        } else if (section == Section::End) {
          saw_end = true;
        } else {
          seen_sections.insert(upper(name));
        }
        continue;
      }
    }

    if (section == Section::Title) {
      size_t b = raw.find_first_not_of(" \t");
      if (b != std::string::npos) {
        size_t sc = raw.find(';');
        std::string t = raw.substr(b, sc == std::string::npos ? std::string::npos : sc - b);
        while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back()))) t.pop_back();
        if (!t.empty()) title_lines.push_back(t);
      }
      continue;
    }

    std::vector<std::string> tok = tokenize(line);
    if (tok.empty()) continue;
    if (section == Section::None)
      fail(Errc::MalformedLine, "line " + std::to_string(line_no) + ": content before any section header");
    if (section == Section::Unsupported) continue;

    auto need = [&](size_t lo, size_t hi) {
      if (tok.size() < lo || tok.size() > hi)
        fail(Errc::MalformedLine, "line " + std::to_string(line_no) + ": expected " + std::to_string(lo) +
                                      (hi > lo ? "-" + std::to_string(hi) : "") + " tokens, got " +
                                      std::to_string(tok.size()));
    };

    switch (section) {
      case Section::Junctions: {
        need(2, 4);
        Junction j;
        j.id = tok[0];
        check_node_id(j.id, line_no);
        j.elevation = parse_number(tok[1], line_no);
        if (tok.size() >= 3) j.base_demand = parse_number(tok[2], line_no);
        if (tok.size() == 4) j.pattern = tok[3];
        junctions.push_back(std::move(j));
        break;
      }
      case Section::Reservoirs: {
        need(2, 3);
        Reservoir r;
        r.id = tok[0];
        check_node_id(r.id, line_no);
        r.total_head = parse_number(tok[1], line_no);
        if (tok.size() == 3) r.pattern = tok[2];
        reservoirs.push_back(std::move(r));
        break;
      }
      case Section::Tanks: {
        need(6, 8);  // MinVol / VolCurve accepted and ignored
        Tank t;
        t.id = tok[0];
        check_node_id(t.id, line_no);
        t.elevation = parse_number(tok[1], line_no);
        t.init_level = parse_number(tok[2], line_no);
        t.min_level = parse_number(tok[3], line_no);
        t.max_level = parse_number(tok[4], line_no);
        t.diameter = parse_number(tok[5], line_no);
        tanks.push_back(std::move(t));
        break;
      }
      case Section::Pipes: {
        need(6, 8);
        Pipe p;
        p.id = tok[0];
        check_link_id(p.id, line_no);
        p.from = tok[1];
        p.to = tok[2];
        p.length = parse_number(tok[3], line_no);
        p.diameter = parse_number(tok[4], line_no);
        p.roughness = parse_number(tok[5], line_no);
        if (tok.size() >= 7) p.minor_loss = parse_number(tok[6], line_no);
        if (tok.size() == 8) {
          std::string s = upper(tok[7]);
          if (s == "OPEN") p.status = LinkStatus::Open;
          else if (s == "CLOSED") p.status = LinkStatus::Closed;
          else if (s == "CV") {
            p.status = LinkStatus::Open;
            m.warnings.push_back("line " + std::to_string(line_no) + ": CV status on pipe '" + p.id +
                                 "' treated as Open");
          } else {
            fail(Errc::MalformedLine, "line " + std::to_string(line_no) + ": bad pipe status '" + tok[7] + "'");
          }
        }
        pipes.push_back(std::move(p));
        break;
      }
      case Section::Pumps: {
        need(4, 32);
        Pump p;
        p.id = tok[0];
        check_link_id(p.id, line_no);
        p.from = tok[1];
        p.to = tok[2];
        bool have_head = false;
        for (size_t i = 3; i < tok.size(); i += 2) {
          std::string kw = upper(tok[i]);
          if (i + 1 >= tok.size())
            fail(Errc::MalformedLine, "line " + std::to_string(line_no) + ": pump keyword '" + kw +
                                          "' missing its value");
          if (kw == "HEAD") {
            p.curve = tok[i + 1];
            have_head = true;
          } else if (kw == "SPEED") {
            p.speed = parse_number(tok[i + 1], line_no);
          } else if (kw == "PATTERN") {
            m.warnings.push_back("line " + std::to_string(line_no) + ": pump speed pattern ignored");
          } else {
            fail(Errc::MalformedLine, "line " + std::to_string(line_no) + ": unsupported pump keyword '" +
                                          tok[i] + "' (HEAD/SPEED supported)");
          }
        }
        if (!have_head)
          fail(Errc::MalformedLine, "line " + std::to_string(line_no) + ": pump '" + p.id +
                                        "' has no HEAD curve");
        pumps.push_back(std::move(p));
        break;
      }
      case Section::Valves: {
        need(6, 7);
        Valve v;
        v.id = tok[0];
        check_link_id(v.id, line_no);
        v.from = tok[1];
        v.to = tok[2];
        v.diameter = parse_number(tok[3], line_no);
        std::string kind = upper(tok[4]);
        if (kind == "PRV") v.kind = ValveKind::PRV;
        else if (kind == "PSV") v.kind = ValveKind::PSV;
        else if (kind == "PBV") v.kind = ValveKind::PBV;
        else if (kind == "FCV") v.kind = ValveKind::FCV;
        else if (kind == "TCV") v.kind = ValveKind::TCV;
        else if (kind == "GPV") v.kind = ValveKind::GPV;
        else fail(Errc::MalformedLine, "line " + std::to_string(line_no) + ": bad valve type '" + tok[4] + "'");
        v.setting = parse_number(tok[5], line_no);
        if (tok.size() == 7) v.minor_loss = parse_number(tok[6], line_no);
        valves.push_back(std::move(v));
        break;
      }
      case Section::Demands: {
        need(2, 3);
        RawDemand d;
        d.node = tok[0];
        d.value = parse_number(tok[1], line_no);
        if (tok.size() == 3) d.pattern = tok[2];
        d.line_no = line_no;
        extra_demands.push_back(std::move(d));
        break;
      }
      case Section::Patterns: {
        need(2, 32);
        auto& vals = m.patterns[tok[0]];  // repeated ids continue the pattern
        for (size_t i = 1; i < tok.size(); ++i) vals.push_back(parse_number(tok[i], line_no));
        break;
      }
      case Section::Curves: {
        need(3, 3);
        curves[tok[0]].emplace_back(parse_number(tok[1], line_no), parse_number(tok[2], line_no));
        break;
      }
      case Section::Status: {
        need(2, 2);
        std::string s = upper(tok[1]);
        auto apply = [&](LinkStatus st) {
          for (auto& p : pipes)
            if (p.id == tok[0]) { p.status = st; return true; }
          for (auto& v : valves)
            if (v.id == tok[0]) { v.status = st; return true; }
          if (st == LinkStatus::Closed) {
            // closed pumps: modeled by speed 0 is not supported; warn and skip
            for (auto& p : pumps)
              if (p.id == tok[0]) {
                m.warnings.push_back("line " + std::to_string(line_no) +
                                     ": CLOSED status on pump '" + p.id + "' ignored");
                return true;
              }
          }
          return false;
        };
        if (s == "OPEN" || s == "CLOSED") {
          if (!apply(s == "OPEN" ? LinkStatus::Open : LinkStatus::Closed))
            fail(Errc::UnknownNodeReference,
                 "line " + std::to_string(line_no) + ": status for unknown link '" + tok[0] + "'");
        } else if (s == "CV") {
          m.warnings.push_back("line " + std::to_string(line_no) + ": CV status treated as Open");
        } else {
          // numeric: pump relative speed
          double val = parse_number(tok[1], line_no);
          bool found = false;
          for (auto& p : pumps)
            if (p.id == tok[0]) { p.speed = val; found = true; break; }
          if (!found)
            m.warnings.push_back("line " + std::to_string(line_no) + ": numeric status on non-pump link '" +
                                 tok[0] + "' ignored");
        }
        break;
      }
      case Section::Options: {
        std::string key = upper(tok[0]);
        if (key == "UNITS" && tok.size() >= 2) {
          auto u = flow_units_from_name(tok[1]);
          if (!u) fail(Errc::MalformedLine, "line " + std::to_string(line_no) + ": unknown flow units '" +
                                                tok[1] + "'");
          m.flow_units = *u;
        } else if (key == "HEADLOSS" && tok.size() >= 2) {
          std::string h = upper(tok[1]);
          if (h == "H-W" || h == "HW") m.headloss = HeadlossFormula::HazenWilliams;
          else if (h == "D-W" || h == "DW") m.headloss = HeadlossFormula::DarcyWeisbach;
          else fail(Errc::MalformedLine, "line " + std::to_string(line_no) + ": unsupported headloss formula '" +
                                             tok[1] + "'");
        } else if (key == "DEMAND" && tok.size() >= 3 && upper(tok[1]) == "MULTIPLIER") {
          demand_multiplier = parse_number(tok[2], line_no);
        } else {
          m.warnings.push_back("line " + std::to_string(line_no) + ": option '" + tok[0] + "' ignored");
        }
        break;
      }
      case Section::Coordinates: {
        need(3, 3);
        m.coordinates[tok[0]] = {parse_number(tok[1], line_no), parse_number(tok[2], line_no)};
        break;
      }
      default:
        break;
    }
  }

  if (!seen_sections.count("JUNCTIONS"))
    fail(Errc::MissingRequiredSection, "missing required section [JUNCTIONS]");
  if (!seen_sections.count("RESERVOIRS") && !seen_sections.count("TANKS"))
    fail(Errc::MissingRequiredSection, "missing required section [RESERVOIRS] or [TANKS]");
  if (!seen_sections.count("PIPES"))
    fail(Errc::MissingRequiredSection, "missing required section [PIPES]");

  // Extra demand categories are additive on the base demand.
  for (const auto& d : extra_demands) {
    bool found = false;
    for (auto& j : junctions) {
      if (j.id == d.node) {
        j.base_demand += d.value;
        if (!d.pattern.empty()) {
          if (j.pattern.empty()) j.pattern = d.pattern;
          else if (j.pattern != d.pattern)
            m.warnings.push_back("line " + std::to_string(d.line_no) + ": demand pattern '" + d.pattern +
                                 "' conflicts with junction pattern '" + j.pattern + "'; keeping the latter");
        }
        found = true;
        break;
      }
    }
    if (!found)
      fail(Errc::UnknownNodeReference, "line " + std::to_string(d.line_no) + ": demand for unknown junction '" +
                                           d.node + "'");
  }

  // Resolve references.
  auto require_node = [&](const std::string& id, const std::string& link) {
    if (!node_ids.count(id))
      fail(Errc::UnknownNodeReference, "link '" + link + "' references missing node '" + id + "'");
  };
  for (const auto& p : pipes) { require_node(p.from, p.id); require_node(p.to, p.id); }
  for (const auto& p : pumps) {
    require_node(p.from, p.id);
    require_node(p.to, p.id);
    if (!curves.count(p.curve))
      fail(Errc::UnknownCurveReference, "pump '" + p.id + "' references missing curve '" + p.curve + "'");
  }
  for (const auto& v : valves) { require_node(v.from, v.id); require_node(v.to, v.id); }
  for (const auto& [id, pts] : curves)
    if (pts.empty()) fail(Errc::MalformedLine, "curve '" + id + "' has no points");

  // Pattern references (junction demand patterns) must resolve.
  for (const auto& j : junctions)
    if (!j.pattern.empty() && !m.patterns.count(j.pattern))
      fail(Errc::UnknownCurveReference, "junction '" + j.id + "' references missing pattern '" + j.pattern + "'");

  // Convert to SI.
  const UnitTable u = unit_table(m.flow_units);
  for (auto& j : junctions) {
    j.elevation *= u.length;
    j.base_demand *= u.flow * demand_multiplier;
  }
  for (auto& r : reservoirs) r.total_head *= u.length;
  for (auto& t : tanks) {
    t.elevation *= u.length;
    t.init_level *= u.length;
    t.min_level *= u.length;
    t.max_level *= u.length;
    t.diameter *= u.tank_diam;
  }
  for (auto& p : pipes) {
    p.length *= u.length;
    p.diameter *= u.diameter;
    if (m.headloss == HeadlossFormula::DarcyWeisbach) p.roughness *= u.dw_rough;
  }
  for (auto& v : valves) {
    v.diameter *= u.diameter;
    switch (v.kind) {
      case ValveKind::FCV: v.setting *= u.flow; break;
      case ValveKind::PRV:
      case ValveKind::PSV:
      case ValveKind::PBV: v.setting *= u.length; break;
      default: break;  // TCV/GPV settings dimensionless / curve id
    }
  }
  for (auto& [id, pts] : curves)
    for (auto& [q, h] : pts) { q *= u.flow; h *= u.length; }

  if (!title_lines.empty()) {
    std::string t;
    for (size_t i = 0; i < title_lines.size(); ++i) {
      if (i) t += '\n';
      t += title_lines[i];
    }
    m.title = t;
  }
  m.junctions = std::move(junctions);
  m.reservoirs = std::move(reservoirs);
  m.tanks = std::move(tanks);
  m.pipes = std::move(pipes);
  m.pumps = std::move(pumps);
  m.valves = std::move(valves);
  m.curves = std::move(curves);
  return m;
}

namespace {

std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

std::string serialize_inp(const NetworkModel& m) {
  const UnitTable u = unit_table(m.flow_units);
  std::string out;
  auto line = [&](const std::string& s) { out += s; out += '\n'; };

  if (!m.title.empty()) {
    line("[TITLE]");
    std::istringstream ts(m.title);
    std::string t;
    while (std::getline(ts, t)) line(t);
    line("");
  }

  line("[JUNCTIONS]");
  for (const auto& j : m.junctions) {
    std::string s = j.id + "\t" + fmt_num(j.elevation / u.length) + "\t" + fmt_num(j.base_demand / u.flow);
    if (!j.pattern.empty()) s += "\t" + j.pattern;
    line(s);
  }
  line("");

  if (!m.reservoirs.empty()) {
    line("[RESERVOIRS]");
    for (const auto& r : m.reservoirs) {
      std::string s = r.id + "\t" + fmt_num(r.total_head / u.length);
      if (!r.pattern.empty()) s += "\t" + r.pattern;
      line(s);
    }
    line("");
  }

  if (!m.tanks.empty()) {
    line("[TANKS]");
    for (const auto& t : m.tanks)
      line(t.id + "\t" + fmt_num(t.elevation / u.length) + "\t" + fmt_num(t.init_level / u.length) + "\t" +
           fmt_num(t.min_level / u.length) + "\t" + fmt_num(t.max_level / u.length) + "\t" +
           fmt_num(t.diameter / u.tank_diam));
    line("");
  }

  line("[PIPES]");
  for (const auto& p : m.pipes) {
    double rough = m.headloss == HeadlossFormula::DarcyWeisbach ? p.roughness / u.dw_rough : p.roughness;
    line(p.id + "\t" + p.from + "\t" + p.to + "\t" + fmt_num(p.length / u.length) + "\t" +
         fmt_num(p.diameter / u.diameter) + "\t" + fmt_num(rough) + "\t" + fmt_num(p.minor_loss) + "\t" +
         (p.status == LinkStatus::Closed ? "Closed" : "Open"));
  }
  line("");

  if (!m.pumps.empty()) {
    line("[PUMPS]");
    for (const auto& p : m.pumps) {
      std::string s = p.id + "\t" + p.from + "\t" + p.to + "\tHEAD\t" + p.curve;
      if (p.speed != 1.0) s += "\tSPEED\t" + fmt_num(p.speed);
      line(s);
    }
    line("");
  }

  if (!m.valves.empty()) {
    line("[VALVES]");
    const char* names[] = {"PRV", "PSV", "PBV", "FCV", "TCV", "GPV"};
    for (const auto& v : m.valves) {
      double setting = v.setting;
      if (v.kind == ValveKind::FCV) setting /= u.flow;
      else if (v.kind == ValveKind::PRV || v.kind == ValveKind::PSV || v.kind == ValveKind::PBV)
        setting /= u.length;
      line(v.id + "\t" + v.from + "\t" + v.to + "\t" + fmt_num(v.diameter / u.diameter) + "\t" +
           names[static_cast<int>(v.kind)] + "\t" + fmt_num(setting) + "\t" + fmt_num(v.minor_loss));
    }
    line("");
    bool any_closed = false;
    for (const auto& v : m.valves) any_closed |= v.status == LinkStatus::Closed;
    if (any_closed) {
      line("[STATUS]");
      for (const auto& v : m.valves)
        if (v.status == LinkStatus::Closed) line(v.id + "\tClosed");
      line("");
    }
  }

  if (!m.patterns.empty()) {
    line("[PATTERNS]");
    for (const auto& [id, vals] : m.patterns) {
      for (size_t i = 0; i < vals.size(); i += 6) {
        std::string s = id;
        for (size_t k = i; k < std::min(vals.size(), i + 6); ++k) s += "\t" + fmt_num(vals[k]);
        line(s);
      }
    }
    line("");
  }

  if (!m.curves.empty()) {
    line("[CURVES]");
    for (const auto& [id, pts] : m.curves)
      for (const auto& [q, h] : pts) line(id + "\t" + fmt_num(q / u.flow) + "\t" + fmt_num(h / u.length));
    line("");
  }

  if (!m.coordinates.empty()) {
    line("[COORDINATES]");
    for (const auto& [id, xy] : m.coordinates) line(id + "\t" + fmt_num(xy.first) + "\t" + fmt_num(xy.second));
    line("");
  }

  line("[OPTIONS]");
  line(std::string("UNITS\t") + flow_units_name(m.flow_units));
  line(std::string("HEADLOSS\t") +
       (m.headloss == HeadlossFormula::DarcyWeisbach ? "D-W" : "H-W"));
  line("");
  line("[END]");
  return out;
}

namespace {

bool num_eq(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

bool structurally_equal(const NetworkModel& a, const NetworkModel& b, double tol) {
  if (a.title != b.title || a.flow_units != b.flow_units || a.headloss != b.headloss) return false;
  if (a.junctions.size() != b.junctions.size() || a.reservoirs.size() != b.reservoirs.size() ||
      a.tanks.size() != b.tanks.size() || a.pipes.size() != b.pipes.size() ||
      a.pumps.size() != b.pumps.size() || a.valves.size() != b.valves.size())
    return false;
  for (size_t i = 0; i < a.junctions.size(); ++i) {
    const auto &x = a.junctions[i], &y = b.junctions[i];
    if (x.id != y.id || x.pattern != y.pattern || !num_eq(x.elevation, y.elevation, tol) ||
        !num_eq(x.base_demand, y.base_demand, tol))
      return false;
  }
  for (size_t i = 0; i < a.reservoirs.size(); ++i) {
    const auto &x = a.reservoirs[i], &y = b.reservoirs[i];
    if (x.id != y.id || x.pattern != y.pattern || !num_eq(x.total_head, y.total_head, tol)) return false;
  }
  for (size_t i = 0; i < a.tanks.size(); ++i) {
    const auto &x = a.tanks[i], &y = b.tanks[i];
    if (x.id != y.id || !num_eq(x.elevation, y.elevation, tol) || !num_eq(x.init_level, y.init_level, tol) ||
        !num_eq(x.min_level, y.min_level, tol) || !num_eq(x.max_level, y.max_level, tol) ||
        !num_eq(x.diameter, y.diameter, tol))
      return false;
  }
  for (size_t i = 0; i < a.pipes.size(); ++i) {
    const auto &x = a.pipes[i], &y = b.pipes[i];
    if (x.id != y.id || x.from != y.from || x.to != y.to || x.status != y.status ||
        !num_eq(x.length, y.length, tol) || !num_eq(x.diameter, y.diameter, tol) ||
        !num_eq(x.roughness, y.roughness, tol) || !num_eq(x.minor_loss, y.minor_loss, tol))
      return false;
  }
  for (size_t i = 0; i < a.pumps.size(); ++i) {
    const auto &x = a.pumps[i], &y = b.pumps[i];
    if (x.id != y.id || x.from != y.from || x.to != y.to || x.curve != y.curve ||
        !num_eq(x.speed, y.speed, tol))
      return false;
  }
  for (size_t i = 0; i < a.valves.size(); ++i) {
    const auto &x = a.valves[i], &y = b.valves[i];
    if (x.id != y.id || x.from != y.from || x.to != y.to || x.kind != y.kind || x.status != y.status ||
        !num_eq(x.diameter, y.diameter, tol) || !num_eq(x.setting, y.setting, tol) ||
        !num_eq(x.minor_loss, y.minor_loss, tol))
      return false;
  }
  if (a.patterns.size() != b.patterns.size() || a.curves.size() != b.curves.size()) return false;
  for (const auto& [id, vals] : a.patterns) {
    auto it = b.patterns.find(id);
    if (it == b.patterns.end() || it->second.size() != vals.size()) return false;
    for (size_t i = 0; i < vals.size(); ++i)
      if (!num_eq(vals[i], it->second[i], tol)) return false;
  }
  for (const auto& [id, pts] : a.curves) {
    auto it = b.curves.find(id);
    if (it == b.curves.end() || it->second.size() != pts.size()) return false;
    for (size_t i = 0; i < pts.size(); ++i)
      if (!num_eq(pts[i].first, it->second[i].first, tol) || !num_eq(pts[i].second, it->second[i].second, tol))
        return false;
  }
  if (a.coordinates.size() != b.coordinates.size()) return false;
  for (const auto& [id, xy] : a.coordinates) {
    auto it = b.coordinates.find(id);
    if (it == b.coordinates.end() || !num_eq(xy.first, it->second.first, tol) ||
        !num_eq(xy.second, it->second.second, tol))
      return false;
  }
  return true;
}

}  // namespace wdn
