#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "wdn/graph.hpp"
#include "wdn/inp.hpp"

using namespace wdn;

namespace {

const char* kMinimalLps = R"(
[JUNCTIONS]
J1  10  0
[RESERVOIRS]
R1  50
[PIPES]
P1  R1  J1  1000  300  100
[OPTIONS]
UNITS LPS
HEADLOSS H-W
[END]
)";

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Independent section-entry counter: counts non-comment, non-blank data lines
// per section without any parsing.
int count_section_entries(const std::string& text, const std::string& section) {
  std::istringstream in(text);
  std::string line;
  bool active = false;
  int count = 0;
  while (std::getline(in, line)) {
    if (size_t sc = line.find(';'); sc != std::string::npos) line.erase(sc);
    size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    if (line[b] == '[') {
      std::string name = line.substr(b + 1, line.find(']') - b - 1);
      for (auto& c : name) c = std::toupper((unsigned char)c);
      active = name == section;
      continue;
    }
    if (active) ++count;
  }
  return count;
}

// Distinct pattern/curve ids in a section (continuation lines repeat the id).
int count_section_ids(const std::string& text, const std::string& section) {
  std::istringstream in(text);
  std::string line;
  bool active = false;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    if (size_t sc = line.find(';'); sc != std::string::npos) line.erase(sc);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    if (first[0] == '[') {
      std::string name = first.substr(1, first.find(']') - 1);
      for (auto& c : name) c = std::toupper((unsigned char)c);
      active = name == section;
      continue;
    }
    if (active) ids.insert(first);
  }
  return static_cast<int>(ids.size());
}

}  // namespace

TEST_CASE("minimal network parses with SI conversion") {
  NetworkModel m = parse_inp(kMinimalLps);
  CHECK(m.node_count() == 2);
  CHECK(m.link_count() == 1);
  CHECK(m.junctions[0].id == "J1");
  CHECK(m.junctions[0].elevation == doctest::Approx(10.0));
  CHECK(m.reservoirs[0].total_head == doctest::Approx(50.0));
  CHECK(m.pipes[0].length == doctest::Approx(1000.0));
  CHECK(m.pipes[0].diameter == doctest::Approx(0.3));  // 300 mm
  CHECK(m.pipes[0].roughness == doctest::Approx(100.0));
  CHECK(m.flow_units == FlowUnits::LPS);
  CHECK(validate(m).ok());
}

TEST_CASE("link to a missing node is rejected") {
  std::string text = kMinimalLps;
  text += "\n";  // re-parse with an extra pipe referencing J99
  std::string broken = R"(
[JUNCTIONS]
J1  10  0
[RESERVOIRS]
R1  50
[PIPES]
P1  R1  J99  1000  300  100
[OPTIONS]
UNITS LPS
)";
  try {
    parse_inp(broken);
    FAIL("expected UnknownNodeReference");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UnknownNodeReference);
    CHECK(std::string(e.what()).find("J99") != std::string::npos);
  }
}

TEST_CASE("duplicate identifiers are rejected") {
  std::string dup = R"(
[JUNCTIONS]
J1  10  0
J1  12  0
[RESERVOIRS]
R1  50
[PIPES]
P1  R1  J1  1000  300  100
)";
  CHECK_THROWS_AS(parse_inp(dup), Error);
  try {
    parse_inp(dup);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DuplicateId);
  }
}

TEST_CASE("malformed line reports its line number") {
  std::string bad = "[JUNCTIONS]\nJ1  10  0\nJ2  not_a_number  0\n[RESERVOIRS]\nR1 50\n[PIPES]\nP1 R1 J1 1 100 100\n";
  try {
    parse_inp(bad);
    FAIL("expected MalformedLine");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MalformedLine);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("missing required sections") {
  CHECK_THROWS_AS(parse_inp("[JUNCTIONS]\nJ1 0 0\n[PIPES]\n"), Error);
  try {
    parse_inp("[JUNCTIONS]\nJ1 0 0\n[PIPES]\n");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MissingRequiredSection);
  }
}

TEST_CASE("unsupported sections are skipped with a warning") {
  std::string text = std::string("[RULES]\nRULE 1\n") + kMinimalLps;
  NetworkModel m = parse_inp(text);
  REQUIRE(!m.warnings.empty());
  CHECK(m.warnings[0].find("RULES") != std::string::npos);
  CHECK(m.node_count() == 2);
}

TEST_CASE("demands section adds categories and patterns parse") {
  std::string text = R"(
[JUNCTIONS]
J1  10  2.0
J2  12  1.0
[RESERVOIRS]
R1  50
[PIPES]
P1  R1  J1  1000  300  100
P2  J1  J2  500   200  110
[DEMANDS]
J1  0.5
J1  0.25  Pat1
[PATTERNS]
Pat1  1.0  1.2
Pat1  0.8
[CURVES]
C1  10  30
[OPTIONS]
UNITS LPS
)";
  NetworkModel m = parse_inp(text);
  CHECK(m.junctions[0].base_demand == doctest::Approx(2.75e-3));  // 2.0 + 0.5 + 0.25 LPS
  CHECK(m.junctions[0].pattern == "Pat1");
  REQUIRE(m.patterns.count("Pat1"));
  CHECK(m.patterns["Pat1"].size() == 3);
  CHECK(m.patterns["Pat1"][2] == doctest::Approx(0.8));
  REQUIRE(m.curves.count("C1"));
  CHECK(m.curves["C1"][0].first == doctest::Approx(0.010));  // 10 LPS
  CHECK(m.curves["C1"][0].second == doctest::Approx(30.0));
}

TEST_CASE("GPM file and its hand-converted LPS twin give the same SI model") {
  // One junction (elev 10 m, demand 6 L/s), pipe 500 m x 250 mm, head 40 m.
  const double ft = 0.3048, inch = 0.0254, gal = 3.785411784;
  std::ostringstream gpm;
  gpm.precision(17);
  gpm << "[JUNCTIONS]\nJ1 " << 10.0 / ft << " " << 6.0 * 60.0 / gal << "\n"
      << "[RESERVOIRS]\nR1 " << 40.0 / ft << "\n"
      << "[PIPES]\nP1 R1 J1 " << 500.0 / ft << " " << 0.25 / inch << " 100\n"
      << "[OPTIONS]\nUNITS GPM\nHEADLOSS H-W\n";
  std::string lps =
      "[JUNCTIONS]\nJ1 10 6\n[RESERVOIRS]\nR1 40\n[PIPES]\nP1 R1 J1 500 250 100\n"
      "[OPTIONS]\nUNITS LPS\nHEADLOSS H-W\n";
  NetworkModel a = parse_inp(gpm.str());
  NetworkModel b = parse_inp(lps);
  CHECK(a.junctions[0].elevation == doctest::Approx(b.junctions[0].elevation).epsilon(1e-9));
  CHECK(a.junctions[0].base_demand == doctest::Approx(b.junctions[0].base_demand).epsilon(1e-9));
  CHECK(a.reservoirs[0].total_head == doctest::Approx(b.reservoirs[0].total_head).epsilon(1e-9));
  CHECK(a.pipes[0].length == doctest::Approx(b.pipes[0].length).epsilon(1e-9));
  CHECK(a.pipes[0].diameter == doctest::Approx(b.pipes[0].diameter).epsilon(1e-9));
}

TEST_CASE("validate flags the spec'd violations") {
  SUBCASE("clean model") { CHECK(validate(parse_inp(kMinimalLps)).ok()); }

  SUBCASE("disconnected components") {
    std::string text = R"(
[JUNCTIONS]
J1  10  0
J2  10  0
J3  10  0
[RESERVOIRS]
R1  50
[PIPES]
P1  R1  J1  1000  300  100
P2  J2  J3  1000  300  100
[OPTIONS]
UNITS LPS
)";
    ValidationReport rep = validate(parse_inp(text));
    REQUIRE(!rep.ok());
    bool found = false;
    for (const auto& v : rep.violations) found |= v.code == "Disconnected";
    CHECK(found);
  }

  SUBCASE("no fixed head node") {
    std::string text = R"(
[JUNCTIONS]
J1  10  0
J2  10  0
[RESERVOIRS]
[PIPES]
P1  J1  J2  1000  300  100
[OPTIONS]
UNITS LPS
)";
    ValidationReport rep = validate(parse_inp(text));
    REQUIRE(!rep.ok());
    CHECK(rep.violations[0].code == "NoFixedHeadNode");
  }

  SUBCASE("negative demand") {
    std::string text = R"(
[JUNCTIONS]
J1  10  -5
[RESERVOIRS]
R1  50
[PIPES]
P1  R1  J1  1000  300  100
[OPTIONS]
UNITS LPS
)";
    ValidationReport rep = validate(parse_inp(text));
    REQUIRE(!rep.ok());
    CHECK(rep.violations[0].code == "NegativeDemand");
    CHECK(rep.violations[0].subject == "J1");
  }

  SUBCASE("non-positive geometry") {
    std::string text = R"(
[JUNCTIONS]
J1  10  0
[RESERVOIRS]
R1  50
[PIPES]
P1  R1  J1  0  300  100
[OPTIONS]
UNITS LPS
)";
    ValidationReport rep = validate(parse_inp(text));
    REQUIRE(!rep.ok());
    CHECK(rep.violations[0].code == "NonPositiveGeometry");
  }
}

TEST_CASE("validation report serializes as JSON lines") {
  std::string text = R"(
[JUNCTIONS]
J1  10  -5
[RESERVOIRS]
[PIPES]
P1  J1  J1  0  300  100
[OPTIONS]
UNITS LPS
)";
  ValidationReport rep = validate(parse_inp(text));
  REQUIRE(!rep.ok());
  std::string lines = rep.to_json_lines();
  size_t newline_count = std::count(lines.begin(), lines.end(), '\n');
  CHECK(newline_count == rep.violations.size());
  CHECK(lines.find("\"code\":\"NoFixedHeadNode\"") != std::string::npos);
  CHECK(lines.find("\"code\":\"NegativeDemand\"") != std::string::npos);
}

TEST_CASE("to_graph: ordering, reverse arcs, kind channels") {
  std::string text = R"(
[JUNCTIONS]
J1  10  1
J2  20  1
[RESERVOIRS]
R1  50
[TANKS]
T1  30  5  0  10  20
[PIPES]
P1  R1  J1  1000  300  100
P2  J1  J2  500   200  110
[PUMPS]
PU1  J2  T1  HEAD C1
[CURVES]
C1  50  30
[OPTIONS]
UNITS LPS
)";
  NetworkModel m = parse_inp(text);
  GraphTopology g = to_graph(m);
  CHECK(g.node_count == 4);
  CHECK(g.junction_count == 2);
  CHECK(g.node_ids == std::vector<std::string>{"J1", "J2", "R1", "T1"});
  CHECK(g.node_kind == std::vector<int>{0, 0, 1, 2});
  CHECK(g.arc_count() == 6);

  // every arc has a reverse arc with identical attributes
  for (int64_t a = 0; a < g.arc_count(); ++a) {
    bool found = false;
    for (int64_t b = 0; b < g.arc_count(); ++b) {
      if (g.arc_src[b] == g.arc_dst[a] && g.arc_dst[b] == g.arc_src[a]) {
        bool attrs_equal = true;
        for (int c = 0; c < GraphTopology::kArcChannels; ++c)
          attrs_equal &= g.arc_attr[a * GraphTopology::kArcChannels + c] ==
                         g.arc_attr[b * GraphTopology::kArcChannels + c];
        found |= attrs_equal;
      }
    }
    CHECK(found);
  }

  // pipe arc attrs: [L, D, C, 1, 0, 0]
  CHECK(g.arc_attr[0] == doctest::Approx(1000.0));
  CHECK(g.arc_attr[1] == doctest::Approx(0.3));
  CHECK(g.arc_attr[2] == doctest::Approx(100.0));
  CHECK(g.arc_attr[3] == 1.0);

  // pump arcs carry zero geometry plus the pump one-hot
  int64_t pump_arc = 4;
  const double* attr = &g.arc_attr[pump_arc * GraphTopology::kArcChannels];
  CHECK(attr[0] == 0.0);
  CHECK(attr[1] == 0.0);
  CHECK(attr[2] == 0.0);
  CHECK(attr[3] == 0.0);
  CHECK(attr[4] == 1.0);
  CHECK(attr[5] == 0.0);

  // determinism: a second parse yields an identical topology
  GraphTopology g2 = to_graph(parse_inp(text));
  CHECK(same_topology(g, g2));
  CHECK(g.arc_attr == g2.arc_attr);
  CHECK(g.node_elevation == g2.node_elevation);
}

TEST_CASE("serialize round-trips") {
  SUBCASE("minimal network") {
    NetworkModel m = parse_inp(kMinimalLps);
    NetworkModel m2 = parse_inp(serialize_inp(m));
    CHECK(structurally_equal(m, m2));
  }

  SUBCASE("network with pumps, valves, tanks, patterns, coordinates") {
    std::string text = R"(
[TITLE]
Round trip fixture
[JUNCTIONS]
J1  10  1  Pat1
J2  20  2
[RESERVOIRS]
R1  50
[TANKS]
T1  30  5  0  10  20
[PIPES]
P1  R1  J1  1000  300  100  0.5  Open
P2  J1  J2  500   200  110  0    Closed
[PUMPS]
PU1  J2  T1  HEAD C1  SPEED 1.1
[VALVES]
V1  J1  J2  200  TCV  3.5  0.2
[PATTERNS]
Pat1  0.5  1.5  1.0
[CURVES]
C1  0  40
C1  50  30
C1  100  10
[COORDINATES]
J1  12.5  7.25
J2  100  200
[OPTIONS]
UNITS GPM
HEADLOSS H-W
)";
    NetworkModel m = parse_inp(text);
    NetworkModel m2 = parse_inp(serialize_inp(m));
    CHECK(structurally_equal(m, m2));
    // and the round-trip is idempotent
    CHECK(serialize_inp(m) == serialize_inp(m2));
  }
}

#ifdef WDN_DATA_DIR
TEST_CASE("bundled networks parse and match an independent section count") {
  for (const char* name : {"anytown.inp", "ctown.inp", "richmond.inp"}) {
    std::string path = std::string(WDN_DATA_DIR) + "/networks/" + name;
    std::string text = read_file(path);
    NetworkModel m = parse_inp(text);
    CAPTURE(name);
    CHECK(static_cast<int>(m.junctions.size()) == count_section_entries(text, "JUNCTIONS"));
    CHECK(static_cast<int>(m.reservoirs.size()) == count_section_entries(text, "RESERVOIRS"));
    CHECK(static_cast<int>(m.tanks.size()) == count_section_entries(text, "TANKS"));
    CHECK(static_cast<int>(m.pipes.size()) == count_section_entries(text, "PIPES"));
    CHECK(static_cast<int>(m.pumps.size()) == count_section_entries(text, "PUMPS"));
    CHECK(static_cast<int>(m.patterns.size()) == count_section_ids(text, "PATTERNS"));
    CHECK(validate(m).ok());

    GraphTopology g = to_graph(m);
    CHECK(g.node_count == static_cast<int64_t>(m.node_count()));

    NetworkModel m2 = parse_inp(serialize_inp(m));
    CHECK(structurally_equal(m, m2));
  }
}
#endif
