#include <Eigen/Sparse>
#include <cmath>

#include "wdn/train.hpp"

namespace wdn {

std::vector<double> baseline_interpolate(const GraphTopology& g, const MaskedSample& s) {
  const int64_t N = g.node_count;
  if (s.node_count != N) fail(Errc::ShapeMismatch, "sample does not match topology");
  int64_t sensors = 0;
  for (uint8_t b : s.sensor) sensors += b;
  if (sensors == 0) fail(Errc::NoSensors, "harmonic interpolation needs at least one sensor");

  std::vector<double> out(N, 0.0);
  for (int64_t n = 0; n < N; ++n)
    if (s.sensor[n]) out[n] = s.target[n];

  std::vector<int64_t> unknown_of(N, -1);
  std::vector<int64_t> nodes;
  for (int64_t n = 0; n < N; ++n)
    if (!s.sensor[n]) {
      unknown_of[n] = static_cast<int64_t>(nodes.size());
      nodes.push_back(n);
    }
  if (nodes.empty()) return out;  // everything observed

  const auto U = static_cast<int>(nodes.size());
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(U);
  std::vector<double> diag(U, 0.0);

  for (int64_t l = 0; l < g.link_count(); ++l) {
    int64_t u = g.link_from[l], v = g.link_to[l];
    if (u == v) continue;
    double length = g.arc_attr[2 * l * GraphTopology::kArcChannels + 0];
    double w = (g.link_kind[l] == 0 && length > 0) ? 1.0 / length : 1.0;
    int64_t iu = unknown_of[u], iv = unknown_of[v];
    if (iu >= 0) {
      diag[iu] += w;
      if (iv >= 0) trip.emplace_back(static_cast<int>(iu), static_cast<int>(iv), -w);
      else b[iu] += w * out[v];
    }
    if (iv >= 0) {
      diag[iv] += w;
      if (iu >= 0) trip.emplace_back(static_cast<int>(iv), static_cast<int>(iu), -w);
      else b[iv] += w * out[u];
    }
  }
  for (int i = 0; i < U; ++i) trip.emplace_back(i, i, diag[i]);

  Eigen::SparseMatrix<double> A(U, U);
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol(A);
  if (chol.info() != Eigen::Success)
    fail(Errc::SingularSystem, "harmonic system is singular (masked nodes cut off from sensors)");
  Eigen::VectorXd x = chol.solve(b);
  for (int i = 0; i < U; ++i) out[nodes[i]] = x[i];
  return out;
}

}  // namespace wdn
