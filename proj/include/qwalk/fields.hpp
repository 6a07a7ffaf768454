#pragma once

#include <stdexcept>
#include <vector>

#include "qwalk/spin.hpp"

namespace qwalk {

/**
 * Uniform discretization of the first Brillouin zone,
 * nodes k_j = -pi + 2*pi*j/M for j = 0..M-1.
 */
class MomentumGrid {
 public:
  explicit MomentumGrid(int size) : size_(size) {
    if (size < 8) throw std::invalid_argument("MomentumGrid: size must be >= 8");
  }

  int size() const { return size_; }
  double node(int j) const { return -pi + two_pi * static_cast<double>(j) / size_; }
  double spacing() const { return two_pi / size_; }
  int wrap(int j) const {
    j %= size_;
    return j < 0 ? j + size_ : j;
  }
  /// Node index of -k_j (the grid is closed under k -> -k).
  int reflect(int j) const { return wrap(size_ - j); }

  friend bool operator==(const MomentumGrid& a, const MomentumGrid& b) { return a.size_ == b.size_; }
  friend bool operator!=(const MomentumGrid& a, const MomentumGrid& b) { return !(a == b); }

 private:
  int size_;
};

/// One 2-component spinor per momentum node.
struct StateField {
  MomentumGrid grid;
  std::vector<Vec2> amp;

  explicit StateField(const MomentumGrid& g) : grid(g), amp(g.size(), Vec2::Zero()) {}
};

/// One 2x2 density matrix per momentum node.
struct DensityField {
  MomentumGrid grid;
  std::vector<Mat2> rho;

  explicit DensityField(const MomentumGrid& g) : grid(g), rho(g.size(), Mat2::Zero()) {}
};

/// Anti-Hermitian connection matrix per momentum node.
struct UhlmannConnectionField {
  MomentumGrid grid;
  std::vector<Mat2> a;

  explicit UhlmannConnectionField(const MomentumGrid& g) : grid(g), a(g.size(), Mat2::Zero()) {}
};

/// Eigenbasis z-occupation ntilde_z(k) = Tr(rho_k n_k.sigma) per node.
struct OccupationField {
  MomentumGrid grid;
  std::vector<double> ntilde_z;

  explicit OccupationField(const MomentumGrid& g) : grid(g), ntilde_z(g.size(), 0.0) {}
};

inline bool is_unit_normalized(const StateField& f, double tol = 1e-10) {
  for (const Vec2& v : f.amp)
    if (std::abs(v.norm() - 1.0) > tol) return false;
  return true;
}

/// Hermiticity, unit trace and positivity of every node.
inline void validate_density(const DensityField& f, double tol = 1e-10) {
  for (int j = 0; j < f.grid.size(); ++j) {
    const Mat2& r = f.rho[j];
    if (hermiticity_deviation(r) > tol)
      throw std::invalid_argument("DensityField: node " + std::to_string(j) + " not Hermitian");
    if (std::abs(r.trace().real() - 1.0) > tol || std::abs(r.trace().imag()) > tol)
      throw std::invalid_argument("DensityField: node " + std::to_string(j) + " trace != 1");
    if (hermitian_eigenvalues(r)(0) < -tol)
      throw std::invalid_argument("DensityField: node " + std::to_string(j) + " not positive semidefinite");
  }
}

inline DensityField density_from_states(const StateField& f) {
  DensityField out(f.grid);
  for (int j = 0; j < f.grid.size(); ++j) {
    const double n2 = f.amp[j].squaredNorm();
    if (n2 <= 0.0) throw std::invalid_argument("density_from_states: zero-norm spinor");
    out.rho[j] = (f.amp[j] * f.amp[j].adjoint()) / n2;
  }
  return out;
}

inline double mean_purity(const DensityField& f) {
  double s = 0.0;
  for (const Mat2& r : f.rho) s += purity(r);
  return s / f.grid.size();
}

}  // namespace qwalk
