#pragma once

// Test-only reference computations, kept independent of the library paths
// they check.

#include <cmath>
#include <complex>
#include <vector>

#include "qwalk/spin.hpp"
#include "qwalk/walk.hpp"

namespace qwalk::oracle {

/// Five-factor product for the step unitary, assembled from scratch.
inline Mat2 step_unitary_product(double theta1, double theta2, double k) {
  auto ry = [](double t) {
    Mat2 m;
    m << std::cos(t / 2), -std::sin(t / 2), std::sin(t / 2), std::cos(t / 2);
    return m;
  };
  Mat2 sup = Mat2::Identity(), sdn = Mat2::Identity();
  sup(0, 0) = std::exp(complexd(0, -k));
  sdn(1, 1) = std::exp(complexd(0, k));
  return ry(theta1 / 2) * sdn * ry(theta2) * sup * ry(theta1 / 2);
}

/// Bloch axis (n_y, n_z) of the walk Hamiltonian evaluated directly from the
/// closed-form matrix elements; n_x vanishes identically for Ry coins.
inline void bloch_axis_yz(double theta1, double theta2, double k, double* ny, double* nz) {
  const double c1 = std::cos(theta1 / 2), s1 = std::sin(theta1 / 2);
  const double c2 = std::cos(theta2 / 2), s2 = std::sin(theta2 / 2);
  const double ce = c1 * c2 * std::cos(k) - s1 * s2;
  const double se = std::sqrt(std::max(0.0, 1.0 - ce * ce));
  *ny = (c2 * s1 * std::cos(k) + s2 * c1) / se;
  *nz = (c2 * std::sin(k)) / se;
}

/// Brute-force winding of (n_y, n_z) by angle accumulation on a dense grid.
inline int winding_brute_force(double theta1, double theta2, int points = 10000) {
  double total = 0.0;
  double py = 0, pz = 0;
  bloch_axis_yz(theta1, theta2, -pi, &py, &pz);
  for (int j = 1; j <= points; ++j) {
    const double k = -pi + two_pi * j / points;
    double ny = 0, nz = 0;
    bloch_axis_yz(theta1, theta2, k, &ny, &nz);
    total += std::atan2(pz * ny - py * nz, py * ny + pz * nz);
    py = ny;
    pz = nz;
  }
  return static_cast<int>(std::lround(total / two_pi));
}

/**
 * Riemann sum of the Berry connection i<psi|d_k psi> for the lower band, in
 * the analytically gauge-fixed form psi(k) = e^{i phi/2} (i sin(phi/2),
 * cos(phi/2)) with phi(k) the unwrapped angle atan2(n_y, n_z). The gauge is
 * periodic for any winding, so no boundary term is needed.
 */
inline double berry_riemann_oracle(double theta1, double theta2, int points = 100000) {
  std::vector<double> phi(points + 1);
  double prev_y = 0, prev_z = 0;
  bloch_axis_yz(theta1, theta2, -pi, &prev_y, &prev_z);
  phi[0] = std::atan2(prev_y, prev_z);
  for (int j = 1; j <= points; ++j) {
    const double k = -pi + two_pi * j / points;
    double ny = 0, nz = 0;
    bloch_axis_yz(theta1, theta2, k, &ny, &nz);
    phi[j] = phi[j - 1] + std::atan2(prev_z * ny - prev_y * nz, prev_y * ny + prev_z * nz);
    prev_y = ny;
    prev_z = nz;
  }
  auto gauge = [](double p) {
    Vec2 v;
    v << complexd(0, 1) * complexd(std::sin(p / 2), 0), complexd(std::cos(p / 2), 0);
    return Vec2(std::polar(1.0, p / 2) * v);
  };
  complexd acc = 0.0;
  for (int j = 0; j < points; ++j) {
    const Vec2 a = gauge(phi[j]);
    const Vec2 b = gauge(phi[j + 1]);
    acc += complexd(0, 1) * (a.dot(b) - 1.0);  // i <a|b - a> ~ i <a|da>
  }
  return reduce_phase(acc.real());
}

/// Time-ordered product of step unitaries for a single momentum, written with
/// plain complex arithmetic (no library matrix types).
inline void two_level_propagation(double k, double ti1, double ti2, double tf1, double tf2,
                                  int steps, std::complex<double>* up,
                                  std::complex<double>* down) {
  std::complex<double> a = *up, b = *down;
  for (int t = 1; t <= steps; ++t) {
    const double f = static_cast<double>(t) / steps;
    const double t1 = ti1 + (tf1 - ti1) * f;
    const double t2 = ti2 + (tf2 - ti2) * f;
    const double cq = std::cos(t1 / 4), sq = std::sin(t1 / 4);
    const double ch = std::cos(t2 / 2), sh = std::sin(t2 / 2);
    const std::complex<double> eik = std::exp(std::complex<double>(0, k));
    const std::complex<double> emk = std::exp(std::complex<double>(0, -k));
    // R(t1/2)
    std::complex<double> x = cq * a - sq * b, y = sq * a + cq * b;
    // S_up = diag(e^{-ik}, 1)
    x *= emk;
    // R(t2)
    std::complex<double> x2 = ch * x - sh * y, y2 = sh * x + ch * y;
    // S_down = diag(1, e^{ik})
    y2 *= eik;
    // R(t1/2)
    a = cq * x2 - sq * y2;
    b = sq * x2 + cq * y2;
  }
  *up = a;
  *down = b;
}

/// Analytic Kato connection [P'(k), P(k)] for the band n(k) = (0, sin k, cos k).
inline Mat2 kato_connection_winding_band(double k) {
  const Vec3 n(0.0, std::sin(k), std::cos(k));
  const Vec3 dn(0.0, std::cos(k), -std::sin(k));
  const Mat2 p = 0.5 * (Mat2::Identity() + axis_matrix(n));
  const Mat2 dp = 0.5 * axis_matrix(dn);
  return dp * p - p * dp;
}

}  // namespace qwalk::oracle
