#include "wdn/hydraulics.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <queue>

namespace wdn {

namespace {

constexpr double kAbsSlopeMin = 1e-7;   // m / (m3/s), absolute gradient floor
constexpr double kReverseSlope = 1e8;   // penalty slope for reverse pump flow
constexpr double kValveOpenSlope = 1e-6;

double sq(double x) { return x * x; }

}  // namespace

ControlSettings base_controls(const NetworkModel& m) {
  ControlSettings c;
  c.junction_demand.reserve(m.junctions.size());
  for (const auto& j : m.junctions) c.junction_demand.push_back(j.base_demand);
  for (const auto& r : m.reservoirs) c.reservoir_head.push_back(r.total_head);
  for (const auto& t : m.tanks) c.tank_head.push_back(t.elevation + t.init_level);
  for (const auto& p : m.pumps) c.pump_speed.push_back(p.speed);
  c.link_status.reserve(m.link_count());
  for (const auto& p : m.pipes) c.link_status.push_back(p.status);
  for (size_t i = 0; i < m.pumps.size(); ++i) c.link_status.push_back(LinkStatus::Open);
  for (const auto& v : m.valves) c.link_status.push_back(v.status);
  return c;
}

double headloss_coefficient(const Pipe& p, HeadlossFormula formula) {
  if (p.length <= 0 || p.diameter <= 0 || p.roughness <= 0)
    fail(Errc::NonPositiveGeometry, "pipe '" + p.id + "' has non-positive length/diameter/roughness");
  if (formula == HeadlossFormula::HazenWilliams)
    return kHwCoefficient * std::pow(p.roughness, -kHwExponent) * std::pow(p.diameter, -4.871) * p.length;
  return 8.0 * p.length / (std::numbers::pi * std::numbers::pi * kGravity * std::pow(p.diameter, 5));
}

double friction_factor(double reynolds, double rel_roughness) {
  auto swamee_jain = [&](double re) {
    double x = rel_roughness / 3.7 + 5.74 / std::pow(re, 0.9);
    double l = std::log10(x);
    return 0.25 / (l * l);
  };
  if (reynolds < 2000.0) return 64.0 / std::max(reynolds, 1e-8);
  if (reynolds < 4000.0) {
    double f_lam = 64.0 / 2000.0;
    double f_turb = swamee_jain(4000.0);
    return f_lam + (reynolds - 2000.0) / 2000.0 * (f_turb - f_lam);
  }
  return swamee_jain(reynolds);
}

double PumpCurve::gain(double flow, double speed) const {
  // Reverse flow is penalized with a steep linear branch so the headloss
  // -gain stays increasing in flow; matches the solver's link model.
  if (flow < 0) return sq(speed) * shutoff_head - kReverseSlope * flow;
  return sq(speed) * (shutoff_head - coefficient * std::pow(flow / speed, exponent));
}

PumpCurve fit_pump_curve(const std::vector<std::pair<double, double>>& points_in) {
  if (points_in.empty()) fail(Errc::BadPumpCurve, "pump curve has no points");
  auto points = points_in;
  std::sort(points.begin(), points.end());
  for (const auto& [q, h] : points)
    if (q < 0 || h <= 0) fail(Errc::BadPumpCurve, "pump curve needs flow >= 0 and head > 0");
  for (size_t i = 1; i < points.size(); ++i) {
    if (points[i].first <= points[i - 1].first) fail(Errc::BadPumpCurve, "pump curve flows must be distinct");
    if (points[i].second >= points[i - 1].second)
      fail(Errc::BadPumpCurve, "pump curve head must decrease with flow");
  }

  PumpCurve pc;
  if (points.size() == 1) {
    auto [q1, h1] = points[0];
    if (q1 <= 0) fail(Errc::BadPumpCurve, "single-point pump curve needs flow > 0");
    pc.shutoff_head = 1.33 * h1;
    pc.exponent = 2.0;
    pc.coefficient = (pc.shutoff_head - h1) / sq(q1);
    pc.rated_flow = q1;
    return pc;
  }

  // Reduce to three representative points (first, middle, last).
  std::vector<std::pair<double, double>> p3;
  if (points.size() == 2) p3 = points;
  else p3 = {points.front(), points[points.size() / 2], points.back()};

  if (p3.size() == 2) {
    auto [q1, h1] = p3[0];
    auto [q2, h2] = p3[1];
    pc.exponent = 2.0;
    pc.coefficient = (h1 - h2) / (sq(q2) - sq(q1));
    pc.shutoff_head = h1 + pc.coefficient * sq(q1);
    pc.rated_flow = q2;
    return pc;
  }

  auto [q1, h1] = p3[0];
  auto [q2, h2] = p3[1];
  auto [q3, h3] = p3[2];
  pc.rated_flow = q2;
  if (q1 == 0.0) {
    pc.shutoff_head = h1;
    pc.exponent = std::log((h1 - h3) / (h1 - h2)) / std::log(q3 / q2);
    pc.coefficient = (h1 - h2) / std::pow(q2, pc.exponent);
  } else {
    // Find h0 > h1 such that the three points share one exponent.
    auto mismatch = [&](double h0) {
      return std::log((h0 - h2) / (h0 - h1)) * std::log(q3 / q1) -
             std::log((h0 - h3) / (h0 - h1)) * std::log(q2 / q1);
    };
    double lo = h1 * (1.0 + 1e-9) + 1e-12, hi = h1 * 100.0 + 1.0;
    double flo = mismatch(lo), fhi = mismatch(hi);
    if (!(flo * fhi <= 0)) fail(Errc::BadPumpCurve, "no power-law fit through curve points");
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (lo + hi);
      double fm = mismatch(mid);
      if (flo * fm <= 0) { hi = mid; fhi = fm; }
      else { lo = mid; flo = fm; }
    }
    pc.shutoff_head = 0.5 * (lo + hi);
    pc.exponent = std::log((pc.shutoff_head - h2) / (pc.shutoff_head - h1)) / std::log(q2 / q1);
    pc.coefficient = (pc.shutoff_head - h1) / std::pow(q1, pc.exponent);
  }
  if (!(pc.exponent > 0) || !(pc.coefficient > 0) || !std::isfinite(pc.exponent))
    fail(Errc::BadPumpCurve, "degenerate power-law fit");
  return pc;
}

namespace {

struct LinkModel {
  LinkKind kind = LinkKind::Pipe;
  int from = 0, to = 0;
  bool open = true;
  bool user_closed = false;
  bool auto_closed = false;  // pump status check
  // pipe
  double r = 0.0;          // HW coefficient or DW geometric factor
  double minor = 0.0;      // K / (2 g A^2)
  double lam = 0.0;        // DW laminar slope 128 nu L / (pi g D^4)
  double rel_rough = 0.0;
  double re_per_q = 0.0;   // Re = re_per_q * |q|
  bool darcy = false;
  // pump
  PumpCurve curve;
  double speed = 1.0;

  bool flowing() const { return open && !auto_closed; }

  // headloss (m) and raw flow derivative at signed flow q
  LinkHeadloss eval(double q) const {
    LinkHeadloss out;
    double aq = std::abs(q);
    switch (kind) {
      case LinkKind::Pipe: {
        if (darcy) {
          double re = re_per_q * aq;
          if (re < 2000.0) {
            out.headloss = lam * q + minor * aq * q;
            out.derivative = lam + 2.0 * minor * aq;
          } else {
            double f = friction_factor(re, rel_rough);
            double coeff = f * r + minor;
            out.headloss = coeff * aq * q;
            out.derivative = 2.0 * coeff * aq;
          }
        } else {
          out.headloss = r * std::pow(aq, kHwExponent - 1.0) * q + minor * aq * q;
          out.derivative = kHwExponent * r * std::pow(aq, kHwExponent - 1.0) + 2.0 * minor * aq;
        }
        break;
      }
      case LinkKind::Pump: {
        if (q < 0) {
          out.headloss = -sq(speed) * curve.shutoff_head + kReverseSlope * q;
          out.derivative = kReverseSlope;
        } else {
          out.headloss = -curve.gain(q, speed);
          out.derivative = curve.coefficient * curve.exponent * std::pow(speed, 2.0 - curve.exponent) *
                           std::pow(q, curve.exponent - 1.0);
        }
        break;
      }
      case LinkKind::Valve: {
        out.headloss = minor * aq * q + kValveOpenSlope * q;
        out.derivative = 2.0 * minor * aq + kValveOpenSlope;
        break;
      }
    }
    return out;
  }

  double slope_floor(double q_min) const {
    switch (kind) {
      case LinkKind::Pipe:
        if (darcy) return std::max(lam, kAbsSlopeMin);
        return std::max(kHwExponent * r * std::pow(q_min, kHwExponent - 1.0), kAbsSlopeMin);
      case LinkKind::Pump: {
        double q_ref = std::max(q_min, 1e-3 * curve.rated_flow);
        double d = curve.coefficient * curve.exponent * std::pow(speed, 2.0 - curve.exponent) *
                   std::pow(q_ref, curve.exponent - 1.0);
        return std::max(d, kAbsSlopeMin);
      }
      case LinkKind::Valve:
        return kValveOpenSlope;
    }
    return kAbsSlopeMin;
  }
};

void fill_pipe(LinkModel& L, const Pipe& p, HeadlossFormula formula) {
  L.kind = LinkKind::Pipe;
  L.r = headloss_coefficient(p, formula);
  double area = std::numbers::pi * sq(p.diameter) / 4.0;
  L.minor = p.minor_loss / (2.0 * kGravity * sq(area));
  L.darcy = formula == HeadlossFormula::DarcyWeisbach;
  if (L.darcy) {
    L.lam = 128.0 * kKinViscosity * p.length / (std::numbers::pi * kGravity * std::pow(p.diameter, 4));
    L.rel_rough = p.roughness / p.diameter;
    L.re_per_q = p.diameter / (kKinViscosity * area);
  }
}

void fill_pump(LinkModel& L, const Pump& p, const NetworkModel& m, double speed) {
  L.kind = LinkKind::Pump;
  L.curve = fit_pump_curve(m.curves.at(p.curve));
  L.speed = speed;
  if (L.speed <= 0) fail(Errc::ShapeMismatch, "pump speed must be > 0");
}

void fill_valve(LinkModel& L, const Valve& v) {
  L.kind = LinkKind::Valve;
  double area = std::numbers::pi * sq(v.diameter) / 4.0;
  double loss_coeff = v.minor_loss + (v.kind == ValveKind::TCV ? v.setting : 0.0);
  L.minor = loss_coeff / (2.0 * kGravity * sq(area));
}

}  // namespace

LinkHeadloss link_headloss(const NetworkModel& m, size_t link_index, double flow,
                           const ControlSettings& controls, double q_min) {
  if (link_index >= m.link_count()) fail(Errc::ShapeMismatch, "link index out of range");
  if (!controls.link_status.empty() && controls.link_status.size() > link_index &&
      controls.link_status[link_index] == LinkStatus::Closed)
    fail(Errc::ClosedLink, "link is closed");

  LinkModel L;
  const size_t np = m.pipes.size(), nu = m.pumps.size();
  if (link_index < np) {
    const Pipe& p = m.pipes[link_index];
    if (controls.link_status.empty() && p.status == LinkStatus::Closed)
      fail(Errc::ClosedLink, "pipe '" + p.id + "' is closed");
    fill_pipe(L, p, m.headloss);
  } else if (link_index < np + nu) {
    size_t pi = link_index - np;
    double speed = controls.pump_speed.empty() ? m.pumps[pi].speed : controls.pump_speed[pi];
    fill_pump(L, m.pumps[pi], m, speed);
  } else {
    const Valve& v = m.valves[link_index - np - nu];
    if (controls.link_status.empty() && v.status == LinkStatus::Closed)
      fail(Errc::ClosedLink, "valve '" + v.id + "' is closed");
    fill_valve(L, v);
  }
  LinkHeadloss out = L.eval(flow);
  out.derivative = std::max(out.derivative, L.slope_floor(q_min));
  return out;
}

HydraulicState solve_steady_state(const NetworkModel& m, const ControlSettings& controls,
                                  const SolverConfig& cfg) {
  const size_t nj = m.junctions.size();
  const size_t nr = m.reservoirs.size();
  const size_t nt = m.tanks.size();
  const size_t nn = nj + nr + nt;
  const size_t nl = m.link_count();

  if (controls.junction_demand.size() != nj || controls.reservoir_head.size() != nr ||
      controls.pump_speed.size() != m.pumps.size())
    fail(Errc::ShapeMismatch, "control vector sizes do not match the model");
  if (!controls.tank_head.empty() && controls.tank_head.size() != nt)
    fail(Errc::ShapeMismatch, "tank head vector size mismatch");
  if (!controls.link_status.empty() && controls.link_status.size() != nl)
    fail(Errc::ShapeMismatch, "link status vector size mismatch");

  // Node indexing: junctions, reservoirs, tanks (same as GraphTopology).
  std::map<std::string, int> index;
  std::vector<double> fixed_head(nn, 0.0);
  std::vector<double> elevation(nn, 0.0);
  {
    int k = 0;
    for (const auto& j : m.junctions) { index[j.id] = k; elevation[k] = j.elevation; ++k; }
    for (size_t i = 0; i < nr; ++i) {
      index[m.reservoirs[i].id] = k;
      fixed_head[k] = controls.reservoir_head[i];
      elevation[k] = m.reservoirs[i].total_head;
      ++k;
    }
    for (size_t i = 0; i < nt; ++i) {
      index[m.tanks[i].id] = k;
      fixed_head[k] = controls.tank_head.empty() ? m.tanks[i].elevation + m.tanks[i].init_level
                                                 : controls.tank_head[i];
      elevation[k] = m.tanks[i].elevation;
      ++k;
    }
  }

  std::vector<LinkModel> links(nl);
  {
    size_t k = 0;
    for (const auto& p : m.pipes) {
      LinkModel& L = links[k];
      fill_pipe(L, p, m.headloss);
      L.from = index.at(p.from);
      L.to = index.at(p.to);
      L.open = p.status == LinkStatus::Open;
      ++k;
    }
    for (size_t i = 0; i < m.pumps.size(); ++i) {
      LinkModel& L = links[k];
      fill_pump(L, m.pumps[i], m, controls.pump_speed[i]);
      L.from = index.at(m.pumps[i].from);
      L.to = index.at(m.pumps[i].to);
      ++k;
    }
    for (const auto& v : m.valves) {
      LinkModel& L = links[k];
      fill_valve(L, v);
      L.from = index.at(v.from);
      L.to = index.at(v.to);
      L.open = v.status == LinkStatus::Open;
      ++k;
    }
    if (!controls.link_status.empty())
      for (size_t i = 0; i < nl; ++i) links[i].open = controls.link_status[i] == LinkStatus::Open;
    for (auto& L : links) L.user_closed = !L.open;
  }

  auto check_reachability = [&]() {
    std::vector<char> seen(nn, 0);
    std::queue<int> q;
    for (size_t i = nj; i < nn; ++i) { seen[i] = 1; q.push(static_cast<int>(i)); }
    std::vector<std::vector<int>> adj(nn);
    for (const auto& L : links)
      if (L.flowing() && L.from != L.to) {
        adj[L.from].push_back(L.to);
        adj[L.to].push_back(L.from);
      }
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (int v : adj[u])
        if (!seen[v]) { seen[v] = 1; q.push(v); }
    }
    for (size_t i = 0; i < nj; ++i)
      if (!seen[i])
        fail(Errc::SingularSystem, "junction '" + m.junctions[i].id + "' is isolated from every fixed head");
  };

  std::vector<double> q(nl, 0.0), head(nn, 0.0);
  for (size_t i = 0; i < nl; ++i)
    if (links[i].flowing()) q[i] = cfg.initial_flow;
  for (size_t i = nj; i < nn; ++i) head[i] = fixed_head[i];

  HydraulicState st;
  st.head.assign(nn, 0.0);
  st.pressure.assign(nn, 0.0);
  st.flow.assign(nl, 0.0);

  int total_iters = 0;
  bool converged = false;
  const int max_status_rounds = 20;

  for (int round = 0; round < max_status_rounds; ++round) {
    check_reachability();

    Eigen::SparseMatrix<double> A(static_cast<int>(nj), static_cast<int>(nj));
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol;
    bool pattern_ready = false;
    Eigen::VectorXd b(static_cast<int>(nj));

    converged = false;
    while (total_iters < cfg.max_iterations) {
      ++total_iters;

      std::vector<Eigen::Triplet<double>> trip;
      trip.reserve(4 * nl);
      b.setZero();
      for (size_t i = 0; i < nj; ++i) b[static_cast<int>(i)] = -controls.junction_demand[i];

      std::vector<double> g(nl, 0.0), y(nl, 0.0);
      for (size_t i = 0; i < nl; ++i) {
        LinkModel& L = links[i];
        if (!L.flowing() || L.from == L.to) continue;
        LinkHeadloss hl = L.eval(q[i]);
        double d = std::max(hl.derivative, L.slope_floor(cfg.q_min));
        g[i] = 1.0 / d;
        y[i] = q[i] - hl.headloss / d;

        bool fu = L.from >= static_cast<int>(nj), fv = L.to >= static_cast<int>(nj);
        // Linearized flow q = g (H_from - H_to) + y enters the mass balance as
        // outflow at 'from' and inflow at 'to'.
        if (!fu) {
          trip.emplace_back(L.from, L.from, g[i]);
          if (!fv) trip.emplace_back(L.from, L.to, -g[i]);
          else b[L.from] += g[i] * fixed_head[L.to];
          b[L.from] -= y[i];
        }
        if (!fv) {
          trip.emplace_back(L.to, L.to, g[i]);
          if (!fu) trip.emplace_back(L.to, L.from, -g[i]);
          else b[L.to] += g[i] * fixed_head[L.from];
          b[L.to] += y[i];
        }
      }

      A.setFromTriplets(trip.begin(), trip.end());
      if (!pattern_ready) {
        chol.analyzePattern(A);
        pattern_ready = true;
      }
      chol.factorize(A);
      if (chol.info() != Eigen::Success) fail(Errc::SingularSystem, "Cholesky factorization failed");
      Eigen::VectorXd h = chol.solve(b);

      for (size_t i = 0; i < nj; ++i) head[i] = h[static_cast<int>(i)];

      double max_head_res = 0.0;
      for (size_t i = 0; i < nl; ++i) {
        LinkModel& L = links[i];
        if (!L.flowing() || L.from == L.to) { q[i] = 0.0; continue; }
        double dh = head[L.from] - head[L.to];
        q[i] = g[i] * dh + y[i];
        max_head_res = std::max(max_head_res, std::abs(dh - L.eval(q[i]).headloss));
      }

      double max_mass_res = 0.0;
      {
        std::vector<double> net(nj, 0.0);
        for (size_t i = 0; i < nl; ++i) {
          const LinkModel& L = links[i];
          if (!L.flowing() || L.from == L.to) continue;
          if (L.from < static_cast<int>(nj)) net[L.from] -= q[i];
          if (L.to < static_cast<int>(nj)) net[L.to] += q[i];
        }
        for (size_t i = 0; i < nj; ++i)
          max_mass_res = std::max(max_mass_res, std::abs(net[i] - controls.junction_demand[i]));
      }

      st.max_flow_residual = max_mass_res;
      st.max_head_residual = max_head_res;
      if (max_mass_res <= cfg.tol_flow && max_head_res <= cfg.tol_head) {
        converged = true;
        break;
      }
    }

    // Pump status checks, EPANET style: close on reverse flow, reopen when the
    // available shutoff head exceeds the required lift (with a small margin to
    // avoid flip-flopping).
    bool changed = false;
    for (size_t i = 0; i < nl; ++i) {
      LinkModel& L = links[i];
      if (L.kind != LinkKind::Pump || L.user_closed) continue;
      if (!L.auto_closed && q[i] < -cfg.q_min) {
        L.auto_closed = true;
        q[i] = 0.0;
        changed = true;
      } else if (L.auto_closed) {
        double required = head[L.to] - head[L.from];
        if (sq(L.speed) * L.curve.shutoff_head > required + 1e-3) {
          L.auto_closed = false;
          q[i] = cfg.initial_flow;
          changed = true;
        }
      }
    }
    if (!changed) break;
    if (total_iters >= cfg.max_iterations) break;
  }

  st.converged = converged;
  st.iterations = total_iters;
  for (size_t i = 0; i < nn; ++i) {
    st.head[i] = i < nj ? head[i] : fixed_head[i];
    st.pressure[i] = st.head[i] - elevation[i];
  }
  st.link_active.assign(nl, 0);
  for (size_t i = 0; i < nl; ++i) {
    st.link_active[i] = links[i].flowing() && links[i].from != links[i].to ? 1 : 0;
    st.flow[i] = st.link_active[i] ? q[i] : 0.0;
  }
  return st;
}

}  // namespace wdn
