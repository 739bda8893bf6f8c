#include <cmath>
#include <map>
#include <numbers>

#include "wdn/hydraulics.hpp"

// Mass and energy residuals recomputed directly from the textbook formulas.
// Intentionally shares nothing with the Newton path beyond the physical
// constants and the pump-curve fit, which is part of the model contract.

namespace wdn {

namespace {

double pipe_headloss(const Pipe& p, HeadlossFormula formula, double q) {
  double aq = std::abs(q);
  double area = std::numbers::pi * p.diameter * p.diameter / 4.0;
  double minor = p.minor_loss / (2.0 * kGravity * area * area) * aq * q;
  if (formula == HeadlossFormula::HazenWilliams) {
    double r = kHwCoefficient * std::pow(p.roughness, -kHwExponent) * std::pow(p.diameter, -4.871) * p.length;
    return r * std::pow(aq, kHwExponent - 1.0) * q + minor;
  }
  double velocity = aq / area;
  double re = velocity * p.diameter / kKinViscosity;
  if (re < 2000.0) {
    double lam = 128.0 * kKinViscosity * p.length / (std::numbers::pi * kGravity * std::pow(p.diameter, 4));
    return lam * q + minor;
  }
  double f = friction_factor(re, p.roughness / p.diameter);
  double r = 8.0 * p.length / (std::numbers::pi * std::numbers::pi * kGravity * std::pow(p.diameter, 5));
  return f * r * aq * q + minor;
}

double valve_headloss(const Valve& v, double q) {
  double aq = std::abs(q);
  double area = std::numbers::pi * v.diameter * v.diameter / 4.0;
  double loss_coeff = v.minor_loss + (v.kind == ValveKind::TCV ? v.setting : 0.0);
  return loss_coeff / (2.0 * kGravity * area * area) * aq * q + 1e-6 * q;
}

}  // namespace

BalanceReport check_balance(const NetworkModel& m, const ControlSettings& controls,
                            const HydraulicState& state) {
  const size_t nj = m.junctions.size();
  const size_t nn = m.node_count();
  const size_t nl = m.link_count();
  if (state.head.size() != nn || state.flow.size() != nl)
    fail(Errc::ShapeMismatch, "state does not match the model");

  std::map<std::string, size_t> index;
  {
    size_t k = 0;
    for (const auto& j : m.junctions) index[j.id] = k++;
    for (const auto& r : m.reservoirs) index[r.id] = k++;
    for (const auto& t : m.tanks) index[t.id] = k++;
  }

  BalanceReport rep;
  rep.mass_residual.assign(nj, 0.0);
  rep.energy_residual.assign(nl, 0.0);

  std::vector<double> net(nj, 0.0);
  auto active = [&](size_t link_idx) {
    return state.link_active.empty() ? true : state.link_active[link_idx] != 0;
  };

  size_t li = 0;
  auto account_flow = [&](const std::string& from, const std::string& to, double q) {
    size_t u = index.at(from), v = index.at(to);
    if (u < nj) net[u] -= q;
    if (v < nj) net[v] += q;
  };

  for (const auto& p : m.pipes) {
    if (active(li)) {
      double q = state.flow[li];
      account_flow(p.from, p.to, q);
      double dh = state.head[index.at(p.from)] - state.head[index.at(p.to)];
      rep.energy_residual[li] = std::abs(dh - pipe_headloss(p, m.headloss, q));
    }
    ++li;
  }
  for (size_t pi = 0; pi < m.pumps.size(); ++pi, ++li) {
    if (!active(li)) continue;
    const Pump& p = m.pumps[pi];
    double q = state.flow[li];
    account_flow(p.from, p.to, q);
    PumpCurve pc = fit_pump_curve(m.curves.at(p.curve));
    double speed = controls.pump_speed.empty() ? p.speed : controls.pump_speed[pi];
    double dh = state.head[index.at(p.from)] - state.head[index.at(p.to)];
    rep.energy_residual[li] = std::abs(dh - (-pc.gain(q, speed)));
  }
  for (const auto& v : m.valves) {
    if (active(li)) {
      double q = state.flow[li];
      account_flow(v.from, v.to, q);
      double dh = state.head[index.at(v.from)] - state.head[index.at(v.to)];
      rep.energy_residual[li] = std::abs(dh - valve_headloss(v, q));
    }
    ++li;
  }

  for (size_t i = 0; i < nj; ++i) {
    double demand = controls.junction_demand.empty() ? m.junctions[i].base_demand
                                                     : controls.junction_demand[i];
    rep.mass_residual[i] = std::abs(net[i] - demand);
    rep.max_mass_residual = std::max(rep.max_mass_residual, rep.mass_residual[i]);
  }
  for (double e : rep.energy_residual) rep.max_energy_residual = std::max(rep.max_energy_residual, e);
  return rep;
}

BalanceReport check_balance(const NetworkModel& m, const HydraulicState& state) {
  return check_balance(m, base_controls(m), state);
}

}  // namespace wdn
