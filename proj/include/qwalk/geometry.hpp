#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "qwalk/errors.hpp"
#include "qwalk/fields.hpp"
#include "qwalk/walk.hpp"

namespace qwalk {

enum class PhaseMethod { fukui, riemann, pathordered, polar };

/// Traversal order of the holonomy product over the zone. forward applies the
/// factor at the base point k0 = -pi first and proceeds with increasing k.
enum class HolonomyOrientation { forward, reverse };

struct GeometricPhase {
  double value = 0.0;  // in (-pi, pi]
  PhaseMethod method = PhaseMethod::fukui;
  double holonomy_trace_magnitude = 0.0;
};

/// Distance of a phase to the quantized set {0, pi}.
inline double quantization_distance(double phase) {
  const double p = std::abs(reduce_phase(phase));
  return std::min(p, pi - p);
}

/// Classify a phase into {0, pi} within tol, or nothing if unquantized.
inline std::optional<double> quantized_value(double phase, double tol = 0.05 * pi) {
  const double p = std::abs(reduce_phase(phase));
  if (p < tol) return 0.0;
  if (pi - p < tol) return pi;
  return std::nullopt;
}

/**
 * Discrete (Wilson-loop) Berry phase of a spinor field:
 *   Phi = -Im sum_j ln[ <psi_j|psi_{j+1}> / |<psi_j|psi_{j+1}>| ],  psi_M = psi_0,
 * reduced to (-pi, pi]. Gauge invariant; per-node normalization drops out.
 */
inline GeometricPhase berry_phase(const StateField& field) {
  const int m = field.grid.size();
  double phase = 0.0;
  double visibility = 1.0;
  for (int j = 0; j < m; ++j) {
    const Vec2& a = field.amp[j];
    const Vec2& b = field.amp[(j + 1) % m];
    const complexd z = a.dot(b);  // <a|b>
    const double mag = std::abs(z);
    if (mag < 1e-12) throw grid_too_coarse_error(j);
    phase -= std::arg(z);
    visibility *= mag / (a.norm() * b.norm());
  }
  return {reduce_phase(phase), PhaseMethod::fukui, visibility};
}

/**
 * Signed winding of (n_y, n_z) around the origin as k sweeps the zone once.
 * Positive winding rotates from +z toward +y. Requires the chiral constraint.
 */
inline int winding_number(const BlochField& field) {
  const int m = field.grid.size();
  double total = 0.0;
  for (int j = 0; j < m; ++j) {
    const Vec3& a = field.axis[j];
    const Vec3& b = field.axis[(j + 1) % m];
    if (std::abs(a.x()) > 1e-6 || std::abs(b.x()) > 1e-6)
      throw std::invalid_argument("winding_number: chiral constraint violated");
    const double ra = std::hypot(a.y(), a.z());
    const double rb = std::hypot(b.y(), b.z());
    if (ra < 1e-9 || rb < 1e-9)
      throw gap_closure_error(field.quasienergy[j], field.grid.node(j), j);
    const double cross = a.z() * b.y() - a.y() * b.z();  // positive: z -> y
    const double dot = a.y() * b.y() + a.z() * b.z();
    total += std::atan2(cross, dot);
  }
  const long w = std::lround(total / two_pi);
  if (std::abs(total - two_pi * static_cast<double>(w)) > 0.5)
    throw std::runtime_error("winding_number: angle sum far from a multiple of 2*pi");
  return static_cast<int>(w);
}

/// A_j = [(rho_{j+1} - rho_{j-1}) / (2 dk), rho_j], periodic central differences.
inline UhlmannConnectionField uhlmann_connection(const DensityField& field) {
  validate_density(field);
  const int m = field.grid.size();
  const double dk = field.grid.spacing();
  UhlmannConnectionField out(field.grid);
  for (int j = 0; j < m; ++j) {
    const Mat2 d = (field.rho[(j + 1) % m] - field.rho[(j + m - 1) % m]) / (2.0 * dk);
    out.a[j] = d * field.rho[j] - field.rho[j] * d;
  }
  return out;
}

namespace detail {

inline GeometricPhase holonomy_phase(const DensityField& field, const std::vector<Mat2>& factors,
                                     HolonomyOrientation orientation, PhaseMethod method) {
  Mat2 v = Mat2::Identity();
  const int m = static_cast<int>(factors.size());
  if (orientation == HolonomyOrientation::forward) {
    for (int j = 0; j < m; ++j) v = factors[j] * v;  // base-point factor first
  } else {
    for (int j = m - 1; j >= 0; --j) v = factors[j] * v;
  }
  const complexd t = (field.rho[0] * v).trace();
  return {reduce_phase(std::arg(t)), method, std::abs(t)};
}

}  // namespace detail

/**
 * Mixed-state geometric phase arg Tr(rho_{k0} V) with the path-ordered
 * holonomy V = prod_j exp(A_j dk), A = [d_k rho, rho], base point k0 = -pi.
 * First-order exponential splitting; diagnostics carry |Tr(rho_{k0} V)|.
 */
inline GeometricPhase uhlmann_phase(const DensityField& field,
                                    HolonomyOrientation orientation = HolonomyOrientation::forward) {
  const UhlmannConnectionField conn = uhlmann_connection(field);
  const double dk = field.grid.spacing();
  std::vector<Mat2> factors(field.grid.size());
  for (int j = 0; j < field.grid.size(); ++j)
    factors[j] = exp_antihermitian(Mat2(conn.a[j] * dk));
  return detail::holonomy_phase(field, factors, orientation, PhaseMethod::pathordered);
}

/**
 * Independent discrete holonomy: per edge the unitary polar factor W_j of
 * sqrt(rho_{j+1}) sqrt(rho_j) = P_j W_j, multiplied around the zone. Requires
 * full rank at every node; regularize rank-deficient fields first.
 */
inline GeometricPhase uhlmann_phase_polar_oracle(
    const DensityField& field, HolonomyOrientation orientation = HolonomyOrientation::forward) {
  validate_density(field);
  const int m = field.grid.size();
  std::vector<Mat2> roots(m);
  for (int j = 0; j < m; ++j) {
    const double min_ev = hermitian_eigenvalues(field.rho[j])(0);
    if (min_ev <= 1e-8) throw rank_deficiency_error(j, min_ev);
    roots[j] = sqrt_psd(field.rho[j]);
  }
  std::vector<Mat2> factors(m);
  for (int j = 0; j < m; ++j)
    factors[j] = polar_unitary(Mat2(roots[(j + 1) % m] * roots[j]));
  return detail::holonomy_phase(field, factors, orientation, PhaseMethod::polar);
}

/// rho -> (1-eps) rho + eps I/2, the caller-side fix for rank-deficient fields.
inline DensityField regularize_density(const DensityField& field, double eps = 1e-6) {
  DensityField out(field.grid);
  for (int j = 0; j < field.grid.size(); ++j)
    out.rho[j] = (1.0 - eps) * field.rho[j] + (eps / 2.0) * Mat2::Identity();
  return out;
}

/// Time-indexed phases with purity (and, when a caller fills it, excitation).
struct PhaseSeries {
  std::vector<double> phase;
  std::vector<double> purity;
  std::vector<double> excitation;
  std::vector<double> holonomy_trace_magnitude;
};

inline PhaseSeries phase_series(const std::vector<StateField>& trajectory) {
  PhaseSeries out;
  for (std::size_t t = 0; t < trajectory.size(); ++t) {
    if (trajectory[t].grid != trajectory[0].grid)
      throw std::invalid_argument("phase_series: fields on different grids");
    try {
      const GeometricPhase p = berry_phase(trajectory[t]);
      out.phase.push_back(p.value);
      out.holonomy_trace_magnitude.push_back(p.holonomy_trace_magnitude);
    } catch (const std::exception& e) {
      throw std::runtime_error("phase_series: step " + std::to_string(t) + ": " + e.what());
    }
    out.purity.push_back(1.0);
  }
  return out;
}

inline PhaseSeries phase_series(const std::vector<DensityField>& trajectory) {
  PhaseSeries out;
  for (std::size_t t = 0; t < trajectory.size(); ++t) {
    if (trajectory[t].grid != trajectory[0].grid)
      throw std::invalid_argument("phase_series: fields on different grids");
    try {
      const GeometricPhase p = uhlmann_phase(trajectory[t]);
      out.phase.push_back(p.value);
      out.holonomy_trace_magnitude.push_back(p.holonomy_trace_magnitude);
    } catch (const std::exception& e) {
      throw std::runtime_error("phase_series: step " + std::to_string(t) + ": " + e.what());
    }
    out.purity.push_back(mean_purity(trajectory[t]));
  }
  return out;
}

}  // namespace qwalk
