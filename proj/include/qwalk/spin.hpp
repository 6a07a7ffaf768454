#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <complex>

namespace qwalk {

using complexd = std::complex<double>;
using Mat2 = Eigen::Matrix2cd;
using Vec2 = Eigen::Vector2cd;
using Vec3 = Eigen::Vector3d;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

inline const Mat2& pauli_x() {
  static const Mat2 m = (Mat2() << 0, 1, 1, 0).finished();
  return m;
}

inline const Mat2& pauli_y() {
  static const Mat2 m = (Mat2() << complexd(0, 0), complexd(0, -1), complexd(0, 1), complexd(0, 0)).finished();
  return m;
}

inline const Mat2& pauli_z() {
  static const Mat2 m = (Mat2() << 1, 0, 0, -1).finished();
  return m;
}

/// n . sigma for a real 3-vector n (Hermitian, traceless).
inline Mat2 axis_matrix(const Vec3& n) {
  Mat2 m;
  m << n.z(), complexd(n.x(), -n.y()),
       complexd(n.x(), n.y()), -n.z();
  return m;
}

/// exp(i h) for Hermitian h, via the Pauli decomposition h = h0 + b.sigma.
inline Mat2 exp_i_hermitian(const Mat2& h) {
  const double h0 = 0.5 * (h(0, 0).real() + h(1, 1).real());
  const double bx = 0.5 * (h(0, 1).real() + h(1, 0).real());
  const double by = 0.5 * (h(1, 0).imag() - h(0, 1).imag());
  const double bz = 0.5 * (h(0, 0).real() - h(1, 1).real());
  const double r = std::sqrt(bx * bx + by * by + bz * bz);
  const double sincr = r < 1e-8 ? 1.0 - r * r / 6.0 : std::sin(r) / r;
  const complexd phase = std::polar(1.0, h0);
  Mat2 out = std::cos(r) * Mat2::Identity();
  out += complexd(0, 1) * sincr * axis_matrix(Vec3(bx, by, bz));
  return phase * out;
}

/// exp(a) for anti-Hermitian a (a = i h).
inline Mat2 exp_antihermitian(const Mat2& a) {
  return exp_i_hermitian(Mat2(complexd(0, -1) * a));
}

/// exp(-i E n.sigma): the step unitary reconstructed from its Bloch data.
inline Mat2 unitary_from_axis(double quasienergy, const Vec3& axis) {
  return std::cos(quasienergy) * Mat2::Identity() -
         complexd(0, 1) * std::sin(quasienergy) * axis_matrix(axis);
}

/// Eigenvalues of a Hermitian 2x2, ascending.
inline Eigen::Vector2d hermitian_eigenvalues(const Mat2& h) {
  const double h0 = 0.5 * (h(0, 0).real() + h(1, 1).real());
  const double bx = 0.5 * (h(0, 1).real() + h(1, 0).real());
  const double by = 0.5 * (h(1, 0).imag() - h(0, 1).imag());
  const double bz = 0.5 * (h(0, 0).real() - h(1, 1).real());
  const double r = std::sqrt(bx * bx + by * by + bz * bz);
  return {h0 - r, h0 + r};
}

/// Principal square root of a PSD 2x2 matrix. Eigenvalues below zero are
/// clamped; callers that care about rank must check beforehand.
inline Mat2 sqrt_psd(const Mat2& rho) {
  const double a0 = 0.5 * (rho(0, 0).real() + rho(1, 1).real());
  const double bx = 0.5 * (rho(0, 1).real() + rho(1, 0).real());
  const double by = 0.5 * (rho(1, 0).imag() - rho(0, 1).imag());
  const double bz = 0.5 * (rho(0, 0).real() - rho(1, 1).real());
  const double r = std::sqrt(bx * bx + by * by + bz * bz);
  const double lo = std::sqrt(std::max(0.0, a0 - r));
  const double hi = std::sqrt(std::max(0.0, a0 + r));
  Mat2 out = 0.5 * (hi + lo) * Mat2::Identity();
  if (r > 0.0)
    out += (0.5 * (hi - lo) / r) * axis_matrix(Vec3(bx, by, bz));
  return out;
}

/// Unitary factor w of the left polar decomposition m = p w (p PSD).
inline Mat2 polar_unitary(const Mat2& m) {
  Eigen::JacobiSVD<Mat2> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().adjoint();
}

inline double trace_distance(const Mat2& a, const Mat2& b) {
  const Mat2 d = 0.5 * ((a - b) + (a - b).adjoint());
  const Eigen::Vector2d ev = hermitian_eigenvalues(d);
  return 0.5 * (std::abs(ev(0)) + std::abs(ev(1)));
}

inline double purity(const Mat2& rho) {
  return (rho * rho).trace().real();
}

inline double frobenius_norm(const Mat2& m) {
  return std::sqrt((m.adjoint() * m).trace().real());
}

inline double hermiticity_deviation(const Mat2& m) {
  return frobenius_norm(Mat2(m - m.adjoint()));
}

inline double unitarity_deviation(const Mat2& u) {
  return frobenius_norm(Mat2(u.adjoint() * u - Mat2::Identity()));
}

/// Reduce an angle to (-pi, pi].
inline double reduce_phase(double phi) {
  double q = std::remainder(phi, two_pi);
  if (q <= -pi) q += two_pi;
  return q;
}

}  // namespace qwalk
