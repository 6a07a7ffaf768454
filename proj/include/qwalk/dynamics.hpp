#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qwalk/errors.hpp"
#include "qwalk/fields.hpp"
#include "qwalk/geometry.hpp"
#include "qwalk/parallel.hpp"
#include "qwalk/rng.hpp"
#include "qwalk/walk.hpp"

namespace qwalk {

/**
 * Linear ramp theta(t) = theta_i + (theta_f - theta_i) * t / N for t = 1..N,
 * quench velocity v = 1/N. theta(N) is theta_f exactly.
 */
struct QuenchSchedule {
  ThetaPair theta_i;
  ThetaPair theta_f;
  int steps = 1;

  QuenchSchedule(const ThetaPair& ti, const ThetaPair& tf, int n)
      : theta_i(ti), theta_f(tf), steps(n) {
    if (n < 1) throw std::invalid_argument("QuenchSchedule: steps must be >= 1");
  }

  double velocity() const { return 1.0 / steps; }

  ThetaPair theta_at(int t) const {
    if (t <= 0) return theta_i;
    if (t >= steps) return theta_f;
    const double f = static_cast<double>(t) / steps;
    return {theta_i.theta1 + (theta_f.theta1 - theta_i.theta1) * f,
            theta_i.theta2 + (theta_f.theta2 - theta_i.theta2) * f};
  }
};

struct DisorderConfig {
  enum class Sampling { uniform_grid, random };

  double delta_theta1 = 0.2;
  int n_realizations = 21;
  Sampling sampling = Sampling::uniform_grid;
  std::uint64_t seed = 0;
  /// Sensitivity-study mode: redraw the offset at every step (random sampling only).
  bool resample_each_step = false;
};

struct NoiseConfig {
  double gamma = 0.0;  // dephasing rate per unit step time, per-k constant
  int substeps = 16;
};

struct TrajectoryRecord {
  QuenchSchedule schedule;
  std::vector<StateField> states;       // unitary runs only
  std::vector<DensityField> densities;  // always, length steps+1
  std::vector<BlochField> hamiltonians; // instantaneous, length steps+1
  std::optional<int> critical_step;
  std::vector<std::pair<int, int>> gapless;  // (step, node) where the gap closed

  explicit TrajectoryRecord(const QuenchSchedule& s) : schedule(s) {}
};

/// Ground state of the flat-band Hamiltonian (theta2 = pi): (1, -i)/sqrt(2)
/// at every node, the momentum transform of |x=0> (|H> - i|V>)/sqrt(2).
inline StateField initial_ground_state(const MomentumGrid& grid) {
  StateField out(grid);
  const Vec2 v = (Vec2() << complexd(1, 0), complexd(0, -1)).finished() / std::sqrt(2.0);
  for (int j = 0; j < grid.size(); ++j) out.amp[j] = v;
  return out;
}

namespace detail {

/// Instantaneous Bloch fields for every step plus the critical step, defined
/// as the first step whose lower-band Berry parity differs from the previous
/// labelable step. Gap-closed steps are recorded and skipped in labeling.
inline void fill_hamiltonians(TrajectoryRecord& rec, const MomentumGrid& grid) {
  const int n = rec.schedule.steps;
  rec.hamiltonians.reserve(n + 1);
  std::optional<int> prev_parity;
  for (int t = 0; t <= n; ++t) {
    std::vector<int> closed;
    rec.hamiltonians.push_back(bloch_field_tolerant(rec.schedule.theta_at(t), grid, &closed));
    for (int j : closed) rec.gapless.emplace_back(t, j);
    std::optional<int> parity;
    if (closed.empty()) {
      try {
        parity = ((winding_number(rec.hamiltonians.back()) % 2) + 2) % 2;
      } catch (const std::exception&) {
        parity.reset();
      }
    }
    if (parity && prev_parity && *parity != *prev_parity && !rec.critical_step)
      rec.critical_step = t;
    if (parity) prev_parity = parity;
  }
}

inline std::vector<double> quasistatic_offsets(const DisorderConfig& d) {
  if (d.delta_theta1 < 0) throw std::invalid_argument("DisorderConfig: delta_theta1 must be >= 0");
  if (d.n_realizations < 1) throw std::invalid_argument("DisorderConfig: n_realizations must be >= 1");
  std::vector<double> offs(d.n_realizations, 0.0);
  if (d.sampling == DisorderConfig::Sampling::uniform_grid) {
    if (d.n_realizations > 1)
      for (int r = 0; r < d.n_realizations; ++r)
        offs[r] = -d.delta_theta1 +
                  2.0 * d.delta_theta1 * static_cast<double>(r) / (d.n_realizations - 1);
  } else {
    for (int r = 0; r < d.n_realizations; ++r) {
      auto rng = seeded_stream(d.seed, static_cast<std::uint64_t>(r));
      offs[r] = std::uniform_real_distribution<double>(-d.delta_theta1, d.delta_theta1)(rng);
    }
  }
  return offs;
}

}  // namespace detail

/// psi_k(t) = U_k(theta(t)) psi_k(t-1) per node per step; purity stays 1.
inline TrajectoryRecord unitary_quench(const QuenchSchedule& schedule, const StateField& init,
                                       int threads = 1) {
  const MomentumGrid grid = init.grid;
  const int n = schedule.steps;
  TrajectoryRecord rec(schedule);
  rec.states.assign(n + 1, StateField(grid));
  rec.states[0] = init;
  for (int t = 1; t <= n; ++t) rec.states[t] = StateField(grid);
  parallel_for(grid.size(), threads, [&](int j) {
    const double k = grid.node(j);
    Vec2 psi = init.amp[j];
    for (int t = 1; t <= n; ++t) {
      psi = step_unitary_k(schedule.theta_at(t), k) * psi;
      rec.states[t].amp[j] = psi;
    }
  });
  rec.densities.reserve(n + 1);
  for (int t = 0; t <= n; ++t) rec.densities.push_back(density_from_states(rec.states[t]));
  detail::fill_hamiltonians(rec, grid);
  return rec;
}

/**
 * Quasi-static spectral disorder: one offset per realization, constant over
 * the ramp, applied to theta1; the per-step density is the realization
 * average. Deterministic for a fixed seed independent of the thread count.
 */
inline TrajectoryRecord disorder_ensemble_quench(const QuenchSchedule& schedule,
                                                 const DisorderConfig& disorder,
                                                 const StateField& init, int threads = 1) {
  if (disorder.resample_each_step && disorder.sampling != DisorderConfig::Sampling::random)
    throw std::invalid_argument("disorder_ensemble_quench: resample_each_step needs random sampling");
  const MomentumGrid grid = init.grid;
  const int n = schedule.steps;
  const std::vector<double> offsets = detail::quasistatic_offsets(disorder);
  const bool all_zero = std::all_of(offsets.begin(), offsets.end(),
                                    [](double o) { return o == 0.0; }) &&
                        !disorder.resample_each_step;
  if (all_zero) {
    // Exactly the unitary path, exposed as rank-1 density fields.
    TrajectoryRecord rec = unitary_quench(schedule, init, threads);
    rec.states.clear();
    return rec;
  }

  TrajectoryRecord rec(schedule);
  rec.densities.assign(n + 1, DensityField(grid));
  const int nr = disorder.n_realizations;
  parallel_for(grid.size(), threads, [&](int j) {
    const double k = grid.node(j);
    std::vector<Mat2> acc(n + 1, Mat2::Zero());
    for (int r = 0; r < nr; ++r) {
      auto rng = seeded_stream(disorder.seed, static_cast<std::uint64_t>(r));
      std::uniform_real_distribution<double> draw(-disorder.delta_theta1, disorder.delta_theta1);
      Vec2 psi = init.amp[j];
      acc[0] += psi * psi.adjoint();
      for (int t = 1; t <= n; ++t) {
        const double off = disorder.resample_each_step ? draw(rng) : offsets[r];
        const ThetaPair th = schedule.theta_at(t);
        psi = step_unitary_k(ThetaPair(th.theta1 + off, th.theta2), k) * psi;
        acc[t] += psi * psi.adjoint();
      }
    }
    for (int t = 0; t <= n; ++t) rec.densities[t].rho[j] = acc[t] / static_cast<double>(nr);
  });
  detail::fill_hamiltonians(rec, grid);
  return rec;
}

/// Final pure state of every disorder realization (real-space tomography feed).
inline std::vector<StateField> ensemble_final_states(const QuenchSchedule& schedule,
                                                     const DisorderConfig& disorder,
                                                     const StateField& init, int threads = 1) {
  if (disorder.resample_each_step && disorder.sampling != DisorderConfig::Sampling::random)
    throw std::invalid_argument("ensemble_final_states: resample_each_step needs random sampling");
  const MomentumGrid grid = init.grid;
  const std::vector<double> offsets = detail::quasistatic_offsets(disorder);
  std::vector<StateField> finals(disorder.n_realizations, StateField(grid));
  parallel_for(disorder.n_realizations, threads, [&](int r) {
    StateField f(grid);
    for (int j = 0; j < grid.size(); ++j) {
      // One offset stream per realization; nodes replay the same sequence so
      // every node sees the same physical noise history.
      auto rng = seeded_stream(disorder.seed, static_cast<std::uint64_t>(r));
      std::uniform_real_distribution<double> draw(-disorder.delta_theta1, disorder.delta_theta1);
      Vec2 psi = init.amp[j];
      for (int t = 1; t <= schedule.steps; ++t) {
        const double off = disorder.resample_each_step ? draw(rng) : offsets[r];
        const ThetaPair th = schedule.theta_at(t);
        psi = step_unitary_k(ThetaPair(th.theta1 + off, th.theta2), grid.node(j)) * psi;
      }
      f.amp[j] = psi;
    }
    finals[r] = std::move(f);
  });
  return finals;
}

/**
 * Discrete-step Lindblad integration of
 *   d rho/dt = -i [H_k, rho] + gamma (stilde_z rho stilde_z - rho)
 * with H_k the step's instantaneous effective Hamiltonian: per walk step,
 * `substeps` compositions of the exact unitary substep exp(-i H dt) and the
 * exact dephasing channel rho -> (1-p) rho + p stilde_z rho stilde_z with
 * p = (1 - e^{-2 gamma dt})/2. Trace and positivity are preserved exactly.
 * Gap-closed nodes evolve unitarily for that step (stilde_z undefined).
 */
inline TrajectoryRecord lindblad_quench(const QuenchSchedule& schedule, const NoiseConfig& noise,
                                        const StateField& init, int threads = 1) {
  if (noise.gamma < 0) throw std::invalid_argument("lindblad_quench: gamma must be >= 0");
  if (noise.substeps < 1) throw std::invalid_argument("lindblad_quench: substeps must be >= 1");
  const MomentumGrid grid = init.grid;
  const int n = schedule.steps;
  const int s = noise.substeps;
  const double dt = 1.0 / s;
  const double p = 0.5 * (1.0 - std::exp(-2.0 * noise.gamma * dt));

  TrajectoryRecord rec(schedule);
  detail::fill_hamiltonians(rec, grid);
  rec.densities.assign(n + 1, DensityField(grid));

  parallel_for(grid.size(), threads, [&](int j) {
    Mat2 rho = init.amp[j] * init.amp[j].adjoint();
    rec.densities[0].rho[j] = rho;
    for (int t = 1; t <= n; ++t) {
      const BlochField& h = rec.hamiltonians[t];
      if (h.axis[j].norm() < 0.5) {
        const Mat2 u = step_unitary_k(schedule.theta_at(t), grid.node(j));
        rho = u * rho * u.adjoint();
      } else {
        const Mat2 u = unitary_from_axis(h.quasienergy[j] * dt, h.axis[j]);
        const Mat2 sz = axis_matrix(h.axis[j]);
        for (int step = 0; step < s; ++step) {
          rho = u * rho * u.adjoint();
          if (p > 0.0) rho = (1.0 - p) * rho + p * (sz * rho * sz);
        }
      }
      rec.densities[t].rho[j] = rho;
    }
  });
  return rec;
}

/// ntilde_z(k) = Tr(rho_k n_k.sigma) against a reference Bloch field.
inline OccupationField band_occupation(const DensityField& rho, const BlochField& h) {
  if (rho.grid != h.grid) throw std::invalid_argument("band_occupation: grid mismatch");
  OccupationField out(rho.grid);
  for (int j = 0; j < rho.grid.size(); ++j)
    out.ntilde_z[j] = (rho.rho[j] * axis_matrix(h.axis[j])).trace().real();
  return out;
}

/// Upper-band population for ground-band-initialized runs.
inline double excitation_density(const OccupationField& occ) {
  double s = 0.0;
  for (double nz : occ.ntilde_z) s += 0.5 * (1.0 + nz);
  return s / occ.grid.size();
}

/// Exact dephased state rho_k = (1 + ntilde_z stilde_z)/2; commutes with H_f.
inline DensityField dephased_reference(const BlochField& hf, const OccupationField& occ) {
  if (hf.grid != occ.grid) throw std::invalid_argument("dephased_reference: grid mismatch");
  DensityField out(hf.grid);
  for (int j = 0; j < hf.grid.size(); ++j) {
    double nz = occ.ntilde_z[j];
    if (std::abs(nz) > 1.0 + 1e-10)
      throw std::invalid_argument("dephased_reference: |ntilde_z| > 1 at node " + std::to_string(j));
    nz = std::clamp(nz, -1.0, 1.0);
    out.rho[j] = 0.5 * (Mat2::Identity() + nz * axis_matrix(hf.axis[j]));
  }
  return out;
}

/// Frobenius norm of [rho_k, E_k n_k.sigma] per node.
inline std::vector<double> commutator_norms(const DensityField& rho, const BlochField& h) {
  if (rho.grid != h.grid) throw std::invalid_argument("commutator_norms: grid mismatch");
  std::vector<double> out(rho.grid.size());
  for (int j = 0; j < rho.grid.size(); ++j) {
    const Mat2 hk = h.quasienergy[j] * axis_matrix(h.axis[j]);
    out[j] = frobenius_norm(Mat2(rho.rho[j] * hk - hk * rho.rho[j]));
  }
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median: empty");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/**
 * Accumulated Uhlmann rotation angle |U| of a band-diagonal state: with the
 * chiral constraint every connection factor is parallel to sigma_x and
 * V = exp(i Theta sigma_x), Theta = 1/2 integral ntilde_z^2 (n' x n)_x dk.
 * For the exactly dephased state Phi_U = arg cos(Theta).
 */
inline double uhlmann_magnitude(const OccupationField& occ, const BlochField& hf) {
  if (hf.grid != occ.grid) throw std::invalid_argument("uhlmann_magnitude: grid mismatch");
  const int m = hf.grid.size();
  const double dk = hf.grid.spacing();
  double theta = 0.0;
  for (int j = 0; j < m; ++j) {
    const Vec3& np = hf.axis[(j + 1) % m];
    const Vec3& nm = hf.axis[(j + m - 1) % m];
    const Vec3 d = (np - nm) / (2.0 * dk);
    const double g = d.y() * hf.axis[j].z() - d.z() * hf.axis[j].y();
    theta += 0.5 * occ.ntilde_z[j] * occ.ntilde_z[j] * g * dk;
  }
  return std::abs(theta);
}

/// Mean off-diagonal magnitude of rho(t) in the instantaneous eigenbasis;
/// gap-closed nodes (zero axis) are skipped.
inline double mean_coherence(const DensityField& rho, const BlochField& h) {
  double s = 0.0;
  int counted = 0;
  for (int j = 0; j < rho.grid.size(); ++j) {
    if (h.axis[j].norm() < 0.5) continue;
    const Mat2 sz = axis_matrix(h.axis[j]);
    const Mat2 off = 0.5 * (rho.rho[j] - sz * rho.rho[j] * sz);
    s += frobenius_norm(off);
    ++counted;
  }
  return counted ? s / counted : 0.0;
}

inline double max_trace_distance(const TrajectoryRecord& a, const TrajectoryRecord& b) {
  if (a.densities.size() != b.densities.size())
    throw std::invalid_argument("max_trace_distance: step-count mismatch");
  double out = 0.0;
  for (std::size_t t = 0; t < a.densities.size(); ++t)
    for (int j = 0; j < a.densities[t].grid.size(); ++j)
      out = std::max(out, trace_distance(a.densities[t].rho[j], b.densities[t].rho[j]));
  return out;
}

enum class CalibrationObjective { coherence_decay, trajectory_distance };

/**
 * Fit the per-step dephasing rate gamma that best mimics the disorder
 * ensemble: either least squares on the mean-coherence decay series, or the
 * max per-node trace distance over the whole trajectory. Coarse grid scan
 * followed by golden-section refinement; deterministic.
 */
inline double calibrate_dephasing_rate(const QuenchSchedule& schedule,
                                       const DisorderConfig& disorder, const MomentumGrid& grid,
                                       CalibrationObjective objective =
                                           CalibrationObjective::coherence_decay,
                                       int threads = 1, int substeps = 16) {
  const StateField init = initial_ground_state(grid);
  const TrajectoryRecord ens = disorder_ensemble_quench(schedule, disorder, init, threads);
  std::vector<double> c_ens(schedule.steps + 1);
  for (int t = 0; t <= schedule.steps; ++t)
    c_ens[t] = mean_coherence(ens.densities[t], ens.hamiltonians[t]);

  auto loss = [&](double gamma) {
    const TrajectoryRecord lin = lindblad_quench(schedule, {gamma, substeps}, init, threads);
    if (objective == CalibrationObjective::trajectory_distance)
      return max_trace_distance(lin, ens);
    double s = 0.0;
    for (int t = 0; t <= schedule.steps; ++t) {
      const double c = mean_coherence(lin.densities[t], lin.hamiltonians[t]);
      s += (c - c_ens[t]) * (c - c_ens[t]);
    }
    return s;
  };

  double best_g = 0.0, best_f = loss(0.0);
  const int coarse = 26;
  const double hi = 0.5;
  for (int i = 1; i <= coarse; ++i) {
    const double g = hi * i / coarse;
    const double f = loss(g);
    if (f < best_f) { best_f = f; best_g = g; }
  }
  double a = std::max(0.0, best_g - hi / coarse);
  double b = std::min(hi, best_g + hi / coarse);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = loss(c), fd = loss(d);
  for (int it = 0; it < 30; ++it) {
    if (fc < fd) {
      b = d; d = c; fd = fc;
      c = b - gr * (b - a); fc = loss(c);
    } else {
      a = c; c = d; fc = fd;
      d = a + gr * (b - a); fd = loss(d);
    }
  }
  return fc < fd ? c : d;
}

struct ScalingResult {
  std::vector<double> velocities;
  std::vector<double> excitation;
  std::vector<double> uhlmann_magnitude;
  std::vector<double> uhlmann_deviation;  // | |U| - pi |
  double exponent = 0.0;
  double ci_halfwidth = 0.0;
  double intercept = 0.0;
};

/// Kibble-Zurek style sweep: disorder-ensemble quenches sharing endpoints,
/// differing only in step count; log-log fit of excitation density vs velocity.
inline ScalingResult scaling_study(const ThetaPair& theta_i, const ThetaPair& theta_f,
                                   const std::vector<int>& step_counts,
                                   const DisorderConfig& disorder, const MomentumGrid& grid,
                                   int threads = 1) {
  if (step_counts.size() < 3)
    throw std::invalid_argument("scaling_study: need at least 3 velocities");
  const BlochField hf = bloch_field(theta_f, grid);
  ScalingResult out;
  for (int n : step_counts) {
    const QuenchSchedule schedule(theta_i, theta_f, n);
    const TrajectoryRecord rec =
        disorder_ensemble_quench(schedule, disorder, initial_ground_state(grid), threads);
    const OccupationField occ = band_occupation(rec.densities.back(), hf);
    out.velocities.push_back(schedule.velocity());
    out.excitation.push_back(excitation_density(occ));
    out.uhlmann_magnitude.push_back(uhlmann_magnitude(occ, hf));
    out.uhlmann_deviation.push_back(std::abs(out.uhlmann_magnitude.back() - pi));
  }
  const int n = static_cast<int>(step_counts.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    const double x = std::log(out.velocities[i]);
    const double y = std::log(std::max(out.excitation[i], 1e-300));
    sx += x; sy += y; sxx += x * x; sxy += x * y;
  }
  const double det = n * sxx - sx * sx;
  out.exponent = (n * sxy - sx * sy) / det;
  out.intercept = (sy - out.exponent * sx) / n;
  double ss_res = 0, ss_xx = 0;
  const double xbar = sx / n;
  for (int i = 0; i < n; ++i) {
    const double x = std::log(out.velocities[i]);
    const double y = std::log(std::max(out.excitation[i], 1e-300));
    const double r = y - (out.intercept + out.exponent * x);
    ss_res += r * r;
    ss_xx += (x - xbar) * (x - xbar);
  }
  if (n > 2) {
    static constexpr double t975[] = {12.706, 4.303, 3.182, 2.776, 2.571,
                                      2.447, 2.365, 2.306, 2.262, 2.228};
    const double se = std::sqrt(ss_res / (n - 2) / ss_xx);
    out.ci_halfwidth = (n - 2 <= 10 ? t975[n - 3] : 1.96) * se;
  }
  return out;
}

/**
 * Spin-resolved discrete Fourier transforms between 2N+1 lattice sites and the
 * momentum grid of the same size; sites are labeled x = idx - floor(M/2).
 * Forward: psi_k = sum_x e^{-ikx} psi_x (per-node unit norm for walk states);
 * inverse: psi_x = (1/M) sum_k e^{+ikx} psi_k. Round trip is the identity.
 */
inline StateField real_to_momentum(const std::vector<Vec2>& sites) {
  const int m = static_cast<int>(sites.size());
  double norm2 = 0.0;
  for (const Vec2& v : sites) norm2 += v.squaredNorm();
  if (norm2 <= 0.0) throw std::invalid_argument("real_to_momentum: zero-norm input");
  const MomentumGrid grid(m);
  StateField out(grid);
  const int x0 = m / 2;
  for (int j = 0; j < m; ++j) {
    const double k = grid.node(j);
    Vec2 acc = Vec2::Zero();
    for (int idx = 0; idx < m; ++idx)
      acc += std::polar(1.0, -k * (idx - x0)) * sites[idx];
    out.amp[j] = acc;
  }
  return out;
}

inline std::vector<Vec2> momentum_to_real(const StateField& field) {
  const int m = field.grid.size();
  std::vector<Vec2> out(m, Vec2::Zero());
  const int x0 = m / 2;
  for (int idx = 0; idx < m; ++idx) {
    Vec2 acc = Vec2::Zero();
    for (int j = 0; j < m; ++j)
      acc += std::polar(1.0, field.grid.node(j) * (idx - x0)) * field.amp[j];
    out[idx] = acc / static_cast<double>(m);
  }
  return out;
}

/// Phase series of a recorded trajectory with purity and excitation
/// against the stored instantaneous Hamiltonians.
inline PhaseSeries trajectory_phase_series(const TrajectoryRecord& rec) {
  PhaseSeries out = rec.states.empty() ? phase_series(rec.densities) : phase_series(rec.states);
  out.excitation.clear();
  for (std::size_t t = 0; t < rec.densities.size(); ++t)
    out.excitation.push_back(
        excitation_density(band_occupation(rec.densities[t], rec.hamiltonians[t])));
  return out;
}

}  // namespace qwalk
