#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wdn/common.hpp"

namespace wdn {

// EPANET INP flow units. Internally everything is strict SI (m, m3/s);
// conversion happens once at parse time and once at serialize time.
enum class FlowUnits { CFS, GPM, MGD, IMGD, AFD, LPS, LPM, MLD, CMH, CMD };

enum class HeadlossFormula { HazenWilliams, DarcyWeisbach };
enum class LinkStatus { Open, Closed };
enum class ValveKind { PRV, PSV, PBV, FCV, TCV, GPV };

bool is_us_units(FlowUnits u);
double flow_to_si(FlowUnits u);  // multiplier: file flow unit -> m3/s
const char* flow_units_name(FlowUnits u);
std::optional<FlowUnits> flow_units_from_name(const std::string& s);

struct Junction {
  std::string id;
  double elevation = 0.0;    // m
  double base_demand = 0.0;  // m3/s
  std::string pattern;       // optional demand pattern name
};

struct Reservoir {
  std::string id;
  double total_head = 0.0;  // m
  std::string pattern;      // preserved for round-trips, unused by the solver
};

struct Tank {
  std::string id;
  double elevation = 0.0;  // m (tank bottom)
  double init_level = 0.0;
  double min_level = 0.0;
  double max_level = 0.0;
  double diameter = 0.0;  // m
};

struct Pipe {
  std::string id;
  std::string from, to;
  double length = 0.0;     // m
  double diameter = 0.0;   // m
  double roughness = 0.0;  // H-W: C (unitless); D-W: epsilon in m
  double minor_loss = 0.0;
  LinkStatus status = LinkStatus::Open;
};

struct Pump {
  std::string id;
  std::string from, to;
  std::string curve;   // head curve name, required
  double speed = 1.0;  // relative speed
};

struct Valve {
  std::string id;
  std::string from, to;
  double diameter = 0.0;  // m
  ValveKind kind = ValveKind::TCV;
  double setting = 0.0;  // converted per kind (FCV: m3/s, PRV/PSV/PBV: m)
  double minor_loss = 0.0;
  LinkStatus status = LinkStatus::Open;
};

struct NetworkModel {
  std::string title;
  std::vector<Junction> junctions;
  std::vector<Reservoir> reservoirs;
  std::vector<Tank> tanks;
  std::vector<Pipe> pipes;
  std::vector<Pump> pumps;
  std::vector<Valve> valves;
  std::map<std::string, std::vector<double>> patterns;
  std::map<std::string, std::vector<std::pair<double, double>>> curves;  // (flow m3/s, head m)
  std::map<std::string, std::pair<double, double>> coordinates;
  FlowUnits flow_units = FlowUnits::GPM;  // EPANET default
  HeadlossFormula headloss = HeadlossFormula::HazenWilliams;
  std::vector<std::string> warnings;  // skipped sections etc.

  size_t node_count() const { return junctions.size() + reservoirs.size() + tanks.size(); }
  size_t link_count() const { return pipes.size() + pumps.size() + valves.size(); }
};

// Parses an INP document. Supported sections: TITLE, JUNCTIONS, RESERVOIRS,
// TANKS, PIPES, PUMPS, VALVES, DEMANDS, PATTERNS, CURVES, STATUS, OPTIONS,
// COORDINATES, END. Anything else is skipped with a warning on the model.
// Throws Error with Errc::{MalformedLine, DuplicateId, UnknownNodeReference,
// UnknownCurveReference, MissingRequiredSection}.
NetworkModel parse_inp(const std::string& text);

// Writes the model back in its declared flow units. Round-trips structurally:
// parse_inp(serialize_inp(m)) equals m on all supported fields within 1e-9
// relative on numerics.
std::string serialize_inp(const NetworkModel& model);

struct Violation {
  std::string code;     // machine-readable: Disconnected, NoFixedHeadNode, ...
  std::string subject;  // offending node/link id when applicable
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string to_json_lines() const;
};

// Model-level checks: connectivity over open links, fixed-head presence,
// geometry positivity, demand sign, tank level ordering, pump curve fitability.
// An empty report means the steady-state solver will accept the model.
ValidationReport validate(const NetworkModel& model);

// Field-wise comparison used by round-trip tests; numeric fields compared with
// relative tolerance.
bool structurally_equal(const NetworkModel& a, const NetworkModel& b, double rel_tol = 1e-9);

}  // namespace wdn
