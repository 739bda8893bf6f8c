#pragma once

#include <vector>

#include "wdn/graph.hpp"
#include "wdn/inp.hpp"

namespace wdn {

// Physical constants used throughout the solver.
inline constexpr double kGravity = 9.80665;        // m/s^2
inline constexpr double kKinViscosity = 1.004e-6;  // m^2/s, water at 20 C
inline constexpr double kHwExponent = 1.852;
inline constexpr double kHwCoefficient = 10.667;   // SI form of Hazen-Williams

// Per-snapshot control vector. Arrays align with NetworkModel order
// (junctions / reservoirs / tanks / canonical links: pipes, pumps, valves).
struct ControlSettings {
  std::vector<double> junction_demand;  // m3/s, >= 0
  std::vector<double> reservoir_head;   // m
  std::vector<double> tank_head;        // m (tanks frozen at elevation + level)
  std::vector<double> pump_speed;
  std::vector<LinkStatus> link_status;
};

ControlSettings base_controls(const NetworkModel& model);

struct SolverConfig {
  double tol_flow = 1e-6;       // m3/s, nodal mass residual
  double tol_head = 1e-4;       // m, per-link energy residual
  int max_iterations = 200;
  double q_min = 1e-8;          // m3/s, derivative regularization point
  double initial_flow = 1e-3;   // m3/s, uniform start in from->to orientation
};

struct HydraulicState {
  std::vector<double> head;      // m, per node (topology order)
  std::vector<double> pressure;  // mH2O, head - node elevation
  std::vector<double> flow;      // m3/s, per link, positive from->to
  std::vector<uint8_t> link_active;  // 0 when closed (by input or status check)
  bool converged = false;
  int iterations = 0;
  double max_flow_residual = 0.0;  // m3/s
  double max_head_residual = 0.0;  // m
};

// h_L = r * q^n resistance coefficient. Hazen-Williams returns the full
// coefficient (n = 1.852); Darcy-Weisbach returns the geometric factor
// 8L / (pi^2 g D^5), multiplied by the friction factor per iteration.
double headloss_coefficient(const Pipe& pipe, HeadlossFormula formula);

// Swamee-Jain explicit friction factor with laminar branch f = 64/Re below
// Re = 2000 and a linear blend up to Re = 4000.
double friction_factor(double reynolds, double rel_roughness);

// Power-law pump curve h_gain = h0 - c * q^m fit from a head curve.
// Single-point curves follow the EPANET convention (h0 = 1.33 * h_rated,
// m = 2). Throws Errc::BadPumpCurve when no decreasing fit exists.
struct PumpCurve {
  double shutoff_head = 0.0;  // h0, m
  double coefficient = 0.0;   // c
  double exponent = 2.0;      // m
  double rated_flow = 0.0;    // m3/s, scale for derivative regularization
  double gain(double flow, double speed) const;  // m, flow >= 0
};
PumpCurve fit_pump_curve(const std::vector<std::pair<double, double>>& points);

// Headloss and its flow derivative for one open link at flow q (signed).
// Pumps report loss = -gain; reverse pump flow is penalized with a steep
// linear branch.
struct LinkHeadloss {
  double headloss = 0.0;    // m
  double derivative = 0.0;  // m / (m3/s)
};

// Evaluates one link in canonical order (pipes, pumps, valves) at signed flow
// q under the given controls. The derivative is floored at the slope implied
// by q_min. Throws Errc::ClosedLink for closed links and Errc::BadPumpCurve
// when a pump head curve admits no decreasing power-law fit.
LinkHeadloss link_headloss(const NetworkModel& model, size_t link_index, double flow,
                           const ControlSettings& controls, double q_min = 1e-8);

// Demand-driven steady state via Newton iteration on nodal heads (global
// gradient form): each iteration solves the sparse SPD nodal system with a
// Cholesky factorization, then updates link flows from the linearization.
// Pumps get EPANET-style status checks (closed on reverse flow, reopened when
// their shutoff head exceeds the required lift).
//
// Throws Errc::SingularSystem when a junction is cut off from every fixed
// head. Non-convergence is reported through the returned state, not thrown.
HydraulicState solve_steady_state(const NetworkModel& model, const ControlSettings& controls,
                                  const SolverConfig& cfg = {});

struct BalanceReport {
  std::vector<double> mass_residual;    // m3/s, per junction
  std::vector<double> energy_residual;  // m, per open link (0 for closed)
  double max_mass_residual = 0.0;
  double max_energy_residual = 0.0;
};

// Recomputes residuals from scratch, straight from the formulas; shares no
// code with the Newton path so it can serve as an independent oracle.
BalanceReport check_balance(const NetworkModel& model, const ControlSettings& controls,
                            const HydraulicState& state);
BalanceReport check_balance(const NetworkModel& model, const HydraulicState& state);

}  // namespace wdn
