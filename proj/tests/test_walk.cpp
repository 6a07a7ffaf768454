#include <catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "qwalk/geometry.hpp"
#include "qwalk/walk.hpp"
#include "support/oracles.hpp"

using namespace qwalk;
using Catch::Approx;

namespace {
double mat_dist(const Mat2& a, const Mat2& b) { return frobenius_norm(Mat2(a - b)); }
}  // namespace

TEST_CASE("coin rotation basics") {
  CHECK(mat_dist(coin_rotation(0.0), Mat2::Identity()) < 1e-15);
  CHECK(mat_dist(coin_rotation(2 * pi), Mat2(-Mat2::Identity())) < 1e-15);
  Mat2 flip;
  flip << 0, -1, 1, 0;
  CHECK(mat_dist(coin_rotation(pi), flip) < 1e-15);
  for (double theta : {0.1, 1.0, 2.5, -3.0, 11.0}) {
    const Mat2 r = coin_rotation(theta);
    CHECK(unitarity_deviation(r) < 1e-14);
    CHECK(std::abs(r.determinant() - complexd(1, 0)) < 1e-14);
  }
  CHECK_THROWS_AS(coin_rotation(std::nan("")), std::invalid_argument);
}

TEST_CASE("theta pair canonicalization") {
  const ThetaPair p(4 * pi + 0.3, -4 * pi - 0.7);
  CHECK(p.theta1 == Approx(0.3).margin(1e-12));
  CHECK(p.theta2 == Approx(-0.7).margin(1e-12));
  CHECK(ThetaPair(-two_pi, two_pi).theta1 == Approx(two_pi));  // (-2pi, 2pi] range
  CHECK_THROWS_AS(ThetaPair(std::nan(""), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(ThetaPair(0.0, std::numeric_limits<double>::infinity()),
                  std::invalid_argument);
}

TEST_CASE("momentum grid") {
  CHECK_THROWS_AS(MomentumGrid(7), std::invalid_argument);
  const MomentumGrid g(16);
  CHECK(g.node(0) == Approx(-pi));
  CHECK(g.node(8) == Approx(0.0).margin(1e-15));
  CHECK(g.spacing() == Approx(two_pi / 16));
  CHECK(g.reflect(3) == 13);
  CHECK(g.reflect(0) == 0);
  CHECK(g.node(15) < pi);
}

TEST_CASE("step unitary special cases") {
  const double k = 0.83;
  SECTION("pure shifts") {
    const Mat2 u = step_unitary_k(ThetaPair(0, 0), k);
    Mat2 expect = Mat2::Zero();
    expect(0, 0) = std::polar(1.0, -k);
    expect(1, 1) = std::polar(1.0, k);
    CHECK(mat_dist(u, expect) < 1e-15);
  }
  SECTION("flat band is momentum independent") {
    Mat2 flip;
    flip << 0, -1, 1, 0;
    for (double kk : {-3.0, -1.0, 0.0, 0.5, 3.1}) {
      CHECK(mat_dist(step_unitary_k(ThetaPair(0, pi), kk), flip) < 1e-14);
    }
  }
  SECTION("five-factor product oracle") {
    const Mat2 u = step_unitary_k(ThetaPair(pi / 3, pi / 5), 0.7);
    CHECK(mat_dist(u, oracle::step_unitary_product(pi / 3, pi / 5, 0.7)) < 1e-14);
  }
  SECTION("unitarity across parameters") {
    for (double t1 : {-5.0, -1.3, 0.0, 0.9, 2.2, 6.0})
      for (double t2 : {-4.4, -0.4, 0.7, 3.0})
        for (int j = 0; j < 9; ++j) {
          const double kk = -pi + two_pi * j / 9;
          CHECK(unitarity_deviation(step_unitary_k(ThetaPair(t1, t2), kk)) < 1e-12);
        }
  }
  CHECK_THROWS_AS(step_unitary_k(ThetaPair(0, 0), 4.0), std::invalid_argument);
}

TEST_CASE("effective hamiltonian extraction") {
  SECTION("diagonal shift case") {
    Mat2 u = Mat2::Zero();
    u(0, 0) = std::polar(1.0, -0.3);
    u(1, 1) = std::polar(1.0, 0.3);
    const auto h = effective_hamiltonian_k(u);
    CHECK(h.quasienergy == Approx(0.3).margin(1e-12));
    CHECK((h.axis - Vec3(0, 0, 1)).norm() < 1e-12);
  }
  SECTION("flat band case") {
    Mat2 flip;
    flip << 0, -1, 1, 0;
    const auto h = effective_hamiltonian_k(flip);
    CHECK(h.quasienergy == Approx(pi / 2).margin(1e-12));
    CHECK((h.axis - Vec3(0, 1, 0)).norm() < 1e-12);
  }
  SECTION("gap closure at the identity") {
    CHECK_THROWS_AS(effective_hamiltonian_k(Mat2::Identity()), gap_closure_error);
    CHECK_THROWS_AS(effective_hamiltonian_k(Mat2(-Mat2::Identity())), gap_closure_error);
  }
  SECTION("non-unitary input rejected") {
    Mat2 bad = Mat2::Identity();
    bad(0, 1) = 0.1;
    CHECK_THROWS_AS(effective_hamiltonian_k(bad), std::invalid_argument);
  }
  SECTION("reconstruction property") {
    for (double t1 : {0.4, 1.7, -2.0})
      for (double t2 : {0.9, -1.1, 2.8})
        for (int j = 0; j < 11; ++j) {
          const double k = -pi + two_pi * j / 11;
          const Mat2 u = step_unitary_k(ThetaPair(t1, t2), k);
          const auto h = effective_hamiltonian_k(u);
          CHECK(std::abs(h.axis.norm() - 1.0) < 1e-10);
          CHECK(mat_dist(unitary_from_axis(h.quasienergy, h.axis), u) < 1e-10);
        }
  }
}

TEST_CASE("bloch field") {
  SECTION("flat band") {
    const BlochField f = bloch_field(ThetaPair(0, pi), MomentumGrid(64));
    for (int j = 0; j < 64; ++j) {
      CHECK(f.quasienergy[j] == Approx(pi / 2).margin(1e-12));
      CHECK((f.axis[j] - Vec3(0, 1, 0)).norm() < 1e-12);
    }
  }
  SECTION("gapless walk reports an offending node") {
    // the identity-shift walk closes at k = 0 (E = 0) and at k = +-pi (E = pi)
    try {
      bloch_field(ThetaPair(0, 0), MomentumGrid(64));
      FAIL("expected gap_closure_error");
    } catch (const gap_closure_error& e) {
      REQUIRE(e.momentum().has_value());
      const bool at_zero = std::abs(*e.momentum()) < 1e-12;
      const bool at_edge = std::abs(std::abs(*e.momentum()) - pi) < 1e-12;
      CHECK((at_zero || at_edge));
      const double expected_e = at_zero ? 0.0 : pi;
      CHECK(std::abs(e.quasienergy() - expected_e) < 1e-9);
    }
  }
  SECTION("winding of a nontrivial field matches brute force") {
    for (auto [t1, t2] : {std::pair{1.275 * pi, -0.575 * pi}, std::pair{pi, 0.0},
                          std::pair{0.3, 2.0}}) {
      const BlochField f = bloch_field(ThetaPair(t1, t2), MomentumGrid(256));
      CHECK(winding_number(f) == oracle::winding_brute_force(t1, t2));
    }
  }
  SECTION("grid-size stability at shared nodes") {
    const ThetaPair th(0.9, 1.7);
    const BlochField a = bloch_field(th, MomentumGrid(64));
    const BlochField b = bloch_field(th, MomentumGrid(128));
    for (int j = 0; j < 64; ++j) {
      CHECK(std::abs(a.quasienergy[j] - b.quasienergy[2 * j]) < 1e-12);
      CHECK((a.axis[j] - b.axis[2 * j]).norm() < 1e-12);
    }
    CHECK(std::abs(quasienergy_gap(th, MomentumGrid(64)) -
                   quasienergy_gap(th, MomentumGrid(128))) < 1e-12);
  }
}

TEST_CASE("symmetry report") {
  SECTION("walk fields respect all three symmetries") {
    for (auto [t1, t2] : {std::pair{0.7, 2.1}, std::pair{1.275 * pi, -0.575 * pi},
                          std::pair{-2.0, 0.4}}) {
      const auto rep = symmetry_check(bloch_field(ThetaPair(t1, t2), MomentumGrid(128)));
      CHECK(rep.chiral_ok);
      CHECK(rep.chiral_deviation < 1e-9);
      CHECK(rep.trs_ok);
      CHECK(rep.phs_ok);
    }
  }
  SECTION("flat band gap") {
    const auto rep = symmetry_check(bloch_field(ThetaPair(0, pi), MomentumGrid(64)));
    CHECK(rep.gap_min == Approx(pi / 2).margin(1e-12));
  }
  SECTION("negative controls") {
    BlochField f = bloch_field(ThetaPair(0.7, 2.1), MomentumGrid(64));
    f.axis[5] = Vec3(0.1, f.axis[5].y(), f.axis[5].z()).normalized();
    auto rep = symmetry_check(f);
    CHECK_FALSE(rep.chiral_ok);

    BlochField g = bloch_field(ThetaPair(0.7, 2.1), MomentumGrid(64));
    g.axis[3] = Vec3(0.0, -g.axis[3].y(), g.axis[3].z()).normalized();
    rep = symmetry_check(g);
    CHECK_FALSE(rep.trs_ok);
  }
}

TEST_CASE("quasienergy gap") {
  CHECK(quasienergy_gap(ThetaPair(0, pi), MomentumGrid(64)) == Approx(pi / 2).margin(1e-12));
  CHECK(quasienergy_gap(ThetaPair(0, 0), MomentumGrid(64)) < 1e-6);
  // points on the theta2 = theta1 boundary close at k = pi, a grid node
  for (double c : {0.6, 1.4, -2.2})
    CHECK(quasienergy_gap(ThetaPair(c, c), MomentumGrid(512)) < 1e-3);
}

TEST_CASE("lower band eigenvectors") {
  for (auto [t1, t2] : {std::pair{0.7, 2.1}, std::pair{pi, 0.0}, std::pair{-1.0, -2.5}}) {
    const BlochField f = bloch_field(ThetaPair(t1, t2), MomentumGrid(64));
    const StateField band = lower_band(f);
    for (int j = 0; j < 64; ++j) {
      CHECK(std::abs(band.amp[j].norm() - 1.0) < 1e-12);
      const Mat2 h = axis_matrix(f.axis[j]);
      CHECK((h * band.amp[j] + band.amp[j]).norm() < 1e-10);  // eigenvalue -1
      const double energy = (band.amp[j].adjoint() * h * band.amp[j])(0, 0).real();
      CHECK(energy == Approx(-1.0).margin(1e-10));
    }
  }
}
