#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qwalk/errors.hpp"
#include "qwalk/fields.hpp"
#include "qwalk/spin.hpp"

namespace qwalk {

/**
 * Coin angles of the split-step walk
 *   U_k = R_y(theta1/2) S_down R_y(theta2) S_up R_y(theta1/2),
 * canonically reduced modulo 4*pi (spin-1/2 rotation period) into (-2pi, 2pi].
 *
 * Conventions fixed once for the whole library:
 *   - R_y(t) = exp(-i t sigma_y / 2), i.e. [[cos t/2, -sin t/2], [sin t/2, cos t/2]];
 *   - momentum states |k> = sum_x e^{ikx} |x>, so S_up -> diag(e^{-ik}, 1)
 *     and S_down -> diag(1, e^{ik}).
 */
struct ThetaPair {
  double theta1 = 0.0;
  double theta2 = 0.0;

  ThetaPair() = default;
  ThetaPair(double t1, double t2) {
    if (!std::isfinite(t1) || !std::isfinite(t2))
      throw std::invalid_argument("ThetaPair: angles must be finite");
    theta1 = canonical_angle(t1);
    theta2 = canonical_angle(t2);
  }

  static double canonical_angle(double t) {
    double q = std::remainder(t, 2.0 * two_pi);
    if (q <= -two_pi) q += 2.0 * two_pi;
    return q;
  }
};

/// Quasienergy and unit Bloch axis of one step unitary: U = exp(-i E n.sigma).
struct EffectiveHamiltonian {
  double quasienergy = 0.0;  // in [0, pi]
  Vec3 axis = Vec3::Zero();
};

/// Per-momentum quasienergy and Bloch axis over a full grid.
struct BlochField {
  MomentumGrid grid;
  std::vector<double> quasienergy;
  std::vector<Vec3> axis;

  explicit BlochField(const MomentumGrid& g)
      : grid(g), quasienergy(g.size(), 0.0), axis(g.size(), Vec3::Zero()) {}
};

struct SymmetryReport {
  static constexpr double tolerance = 1e-9;

  double chiral_deviation = 0.0;
  double phs_deviation = 0.0;
  double trs_deviation = 0.0;
  double gap_min = 0.0;
  bool chiral_ok = false;
  bool phs_ok = false;
  bool trs_ok = false;
};

inline Mat2 coin_rotation(double theta) {
  if (!std::isfinite(theta)) throw std::invalid_argument("coin_rotation: angle must be finite");
  const double c = std::cos(theta / 2), s = std::sin(theta / 2);
  Mat2 m;
  m << c, -s, s, c;
  return m;
}

inline Mat2 step_unitary_k(const ThetaPair& params, double k) {
  if (!std::isfinite(k) || k < -pi - 1e-12 || k > pi + 1e-12)
    throw std::invalid_argument("step_unitary_k: k outside [-pi, pi]");
  const Mat2 half_coin = coin_rotation(params.theta1 / 2);
  const Mat2 coin = coin_rotation(params.theta2);
  Mat2 shift_up = Mat2::Identity();   // diag(e^{-ik}, 1)
  shift_up(0, 0) = std::polar(1.0, -k);
  Mat2 shift_down = Mat2::Identity();  // diag(1, e^{ik})
  shift_down(1, 1) = std::polar(1.0, k);
  return half_coin * shift_down * coin * shift_up * half_coin;
}

inline EffectiveHamiltonian effective_hamiltonian_k(const Mat2& u) {
  if (unitarity_deviation(u) > 1e-10)
    throw std::invalid_argument("effective_hamiltonian_k: input not unitary");
  const double c = std::clamp(0.5 * u.trace().real(), -1.0, 1.0);
  const double quasienergy = std::acos(c);
  const double s = std::sin(quasienergy);
  if (std::abs(s) < 1e-9) throw gap_closure_error(quasienergy);
  Vec3 n;
  n.x() = (complexd(0, 1) * (pauli_x() * u).trace()).real() / (2 * s);
  n.y() = (complexd(0, 1) * (pauli_y() * u).trace()).real() / (2 * s);
  n.z() = (complexd(0, 1) * (pauli_z() * u).trace()).real() / (2 * s);
  n.normalize();
  return {quasienergy, n};
}

inline BlochField bloch_field(const ThetaPair& params, const MomentumGrid& grid) {
  BlochField out(grid);
  for (int j = 0; j < grid.size(); ++j) {
    const double k = grid.node(j);
    try {
      const auto h = effective_hamiltonian_k(step_unitary_k(params, k));
      out.quasienergy[j] = h.quasienergy;
      out.axis[j] = h.axis;
    } catch (const gap_closure_error& e) {
      throw gap_closure_error(e.quasienergy(), k, j);
    }
  }
  return out;
}

/**
 * Like bloch_field but records gap-closed nodes instead of throwing; those
 * nodes carry a zero axis. Used inside quenches where a boundary may be
 * touched mid-ramp.
 */
inline BlochField bloch_field_tolerant(const ThetaPair& params, const MomentumGrid& grid,
                                       std::vector<int>* gapless_nodes = nullptr) {
  BlochField out(grid);
  for (int j = 0; j < grid.size(); ++j) {
    try {
      const auto h = effective_hamiltonian_k(step_unitary_k(params, grid.node(j)));
      out.quasienergy[j] = h.quasienergy;
      out.axis[j] = h.axis;
    } catch (const gap_closure_error& e) {
      out.quasienergy[j] = e.quasienergy();
      out.axis[j] = Vec3::Zero();
      if (gapless_nodes) gapless_nodes->push_back(j);
    }
  }
  return out;
}

/**
 * Deviations from the walk's protecting symmetries, measured on the Bloch
 * axis field. Operator representations (in the spin basis {|H>,|V>}):
 *   chiral  Gamma = sigma_x,        sigma_x U_k sigma_x = U_k^dagger  -> n_x = 0
 *   PHS     C = K (conjugation),    K U_k K = U_{-k}                  -> n(-k) = (-n_x, n_y, -n_z)(k)
 *   TRS     T = sigma_x K,          T U_k T^-1 = U_{-k}^{-1}          -> n(-k) = (n_x, n_y, -n_z)(k)
 */
inline SymmetryReport symmetry_check(const BlochField& field) {
  SymmetryReport rep;
  rep.gap_min = pi;
  const int m = field.grid.size();
  for (int j = 0; j < m; ++j) {
    const Vec3& n = field.axis[j];
    const Vec3& nr = field.axis[field.grid.reflect(j)];
    rep.chiral_deviation = std::max(rep.chiral_deviation, std::abs(n.x()));
    rep.phs_deviation = std::max(rep.phs_deviation, (nr - Vec3(-n.x(), n.y(), -n.z())).norm());
    rep.trs_deviation = std::max(rep.trs_deviation, (nr - Vec3(n.x(), n.y(), -n.z())).norm());
    rep.gap_min = std::min(rep.gap_min, std::min(field.quasienergy[j], pi - field.quasienergy[j]));
  }
  rep.chiral_ok = rep.chiral_deviation < SymmetryReport::tolerance;
  rep.phs_ok = rep.phs_deviation < SymmetryReport::tolerance;
  rep.trs_ok = rep.trs_deviation < SymmetryReport::tolerance;
  return rep;
}

/// min over nodes of min(E_k, pi - E_k); zero on a phase boundary, never throws.
inline double quasienergy_gap(const ThetaPair& params, const MomentumGrid& grid) {
  double gap = pi;
  for (int j = 0; j < grid.size(); ++j) {
    const Mat2 u = step_unitary_k(params, grid.node(j));
    const double e = std::acos(std::clamp(0.5 * u.trace().real(), -1.0, 1.0));
    gap = std::min(gap, std::min(e, pi - e));
  }
  return gap;
}

/**
 * Lower-band eigenvectors (eigenvalue -E of E n.sigma) in a deterministic
 * two-patch gauge chosen by the sign of n_z. Adjacent-node overlaps stay real
 * in either patch, which keeps the discrete Berry phase of chiral bands
 * quantized to machine precision.
 */
inline StateField lower_band(const BlochField& field) {
  StateField out(field.grid);
  for (int j = 0; j < field.grid.size(); ++j) {
    const Vec3& n = field.axis[j];
    if (n.norm() < 0.5)
      throw gap_closure_error(field.quasienergy[j], field.grid.node(j), j);
    Vec2 v;
    if (n.z() >= 0.0)
      v << complexd(0, 1) * complexd(n.y(), 0), complexd(1.0 + n.z(), 0);
    else
      v << complexd(1.0 - n.z(), 0), complexd(0, -1) * complexd(n.y(), 0);
    // n_x is zero for Ry-coin walks; fold a nonzero n_x in anyway so the
    // construction stays an exact eigenvector for hand-built fields.
    if (n.x() != 0.0) {
      const Mat2 h = axis_matrix(n);
      const Eigen::SelfAdjointEigenSolver<Mat2> es(h);
      v = es.eigenvectors().col(0);
    }
    out.amp[j] = v.normalized();
  }
  return out;
}

}  // namespace qwalk
