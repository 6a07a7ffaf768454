// Acceptance suite: one check per shipped criterion, each printing a single
// [PASS]/[FAIL] line with the measured numbers. Run with no arguments for the
// whole suite or with a criterion number (1..11) for a single check.

#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "qwalk/commands.hpp"
#include "qwalk/dynamics.hpp"
#include "qwalk/geometry.hpp"
#include "qwalk/tomography.hpp"
#include "qwalk/walk.hpp"

using namespace qwalk;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

const ThetaPair kThetaI(0.0, pi);
const ThetaPair kThetaF(1.275 * pi, -0.575 * pi);
const int kThreads = 4;

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

// 1. Berry quantization on a 64x64 angle grid, cells with gap >= 0.05, M = 256.
Outcome criterion_berry_quantization() {
  const int res = 64;
  const MomentumGrid grid(256);
  std::vector<double> dist(res * res, 0.0);
  std::vector<int> included(res * res, 0);
  parallel_for(res * res, kThreads, [&](int idx) {
    const int i = idx / res, j = idx % res;
    const ThetaPair th(-two_pi + (i + 0.5) * 4 * pi / res, -two_pi + (j + 0.5) * 4 * pi / res);
    if (quasienergy_gap(th, grid) < 0.05) return;
    included[idx] = 1;
    dist[idx] = quantization_distance(berry_phase(lower_band(bloch_field(th, grid))).value);
  });
  double worst = 0.0;
  int n_included = 0;
  for (int idx = 0; idx < res * res; ++idx) {
    if (!included[idx]) continue;
    ++n_included;
    worst = std::max(worst, dist[idx]);
  }
  return {worst < 1e-9,
          fmt("max distance to {0,pi} = %.2e over %d cells (tolerance 1e-9)", worst, n_included)};
}

// 2. Boundary curves at M = 512 separate distinct Berry phases (zero audit violations).
Outcome criterion_phase_boundaries() {
  RunConfig cfg;
  cfg.mode = RunMode::phase_diagram;
  cfg.grid = 256;
  cfg.threads = kThreads;
  cfg.phase_diagram.resolution = 64;
  cfg.phase_diagram.boundary_grid = 512;
  cfg.phase_diagram.gap_threshold = 1e-3;
  // label everything outside a thin strip so that adjacent cells of distinct
  // phase actually occur and the separation property is exercised
  cfg.phase_diagram.exclude_gap = 0.02;
  cfg.out_dir = (fs::temp_directory_path() / "qwalk_acceptance_pd").string();
  const PhaseDiagramOutcome out = run_phase_diagram(cfg);
  const bool ok = out.audit_violations == 0 && out.label_changing_edges > 0;
  return {ok, fmt("%d label-changing edges, %d violations (gap threshold 1e-3 at M=512)",
                  out.label_changing_edges, out.audit_violations)};
}

// 3. Unitary no-go: per-step Berry phase below 1e-6 throughout the crossing ramp.
Outcome criterion_unitary_no_go() {
  const QuenchSchedule sched(kThetaI, kThetaF, 13);
  const TrajectoryRecord rec =
      unitary_quench(sched, initial_ground_state(MomentumGrid(256)), kThreads);
  const PhaseSeries series = phase_series(rec.states);
  double worst = 0.0;
  for (double p : series.phase) worst = std::max(worst, std::abs(p));
  return {worst < 1e-6, fmt("max |phi_B(t)| = %.2e over %zu steps (tolerance 1e-6)", worst,
                            series.phase.size() - 1)};
}

// 4. Mixed-state invariant: flat before t_c, final value within 0.05 pi of pi,
//    plateau over the last three steps.
Outcome criterion_mixed_state_invariant() {
  const QuenchSchedule sched(kThetaI, kThetaF, 13);
  DisorderConfig disorder;  // delta = 0.2, n = 21 uniform grid
  const TrajectoryRecord rec =
      disorder_ensemble_quench(sched, disorder, initial_ground_state(MomentumGrid(256)), kThreads);
  const PhaseSeries series = phase_series(rec.densities);
  if (!rec.critical_step) return {false, "no critical step detected"};
  const int tc = *rec.critical_step;
  double pre = 0.0;
  for (int t = 0; t < tc; ++t) pre = std::max(pre, std::abs(series.phase[t]));
  const int n = sched.steps;
  auto dev = [&](int t) { return std::abs(std::abs(series.phase[t]) - pi); };
  const double final_dev = dev(n);
  const bool pre_ok = pre < 0.05 * pi;
  const bool final_ok = final_dev <= 0.05 * pi;
  const bool plateau_ok = dev(n) <= 0.05 * pi && dev(n - 1) <= 0.05 * pi && dev(n - 2) <= 0.05 * pi;
  return {pre_ok && final_ok && plateau_ok,
          fmt("t_c=%d, pre-t_c max %.4f pi (<0.05), final dev %.4f pi (<=0.05), "
              "last-3 devs %.3f/%.3f/%.3f pi (plateau %s)",
              tc, pre / pi, final_dev / pi, dev(n - 2) / pi, dev(n - 1) / pi, dev(n) / pi,
              plateau_ok ? "ok" : "violated")};
}

// 5. Uhlmann phase of pure winding bands equals the Berry phase within 2e-3 at M = 512.
Outcome criterion_pure_state_reduction() {
  const MomentumGrid grid(512);
  double worst = 0.0;
  for (auto [t1, t2] : {std::pair{kThetaF.theta1, kThetaF.theta2}, std::pair{pi, 0.0}}) {
    const StateField band = lower_band(bloch_field(ThetaPair(t1, t2), grid));
    const double berry = berry_phase(band).value;
    const double uhl = uhlmann_phase(density_from_states(band)).value;
    worst = std::max(worst, std::abs(reduce_phase(uhl - berry)));
  }
  BlochField analytic(grid);
  for (int j = 0; j < grid.size(); ++j) {
    analytic.quasienergy[j] = pi / 2;
    analytic.axis[j] = Vec3(0, std::sin(grid.node(j)), std::cos(grid.node(j)));
  }
  const StateField band = lower_band(analytic);
  worst = std::max(worst, std::abs(reduce_phase(uhlmann_phase(density_from_states(band)).value -
                                                berry_phase(band).value)));
  return {worst < 2e-3, fmt("max |Phi_U - Phi_B| = %.2e on pure winding bands (tolerance 2e-3)",
                            worst)};
}

// 6. Path-ordered and polar-decomposition Uhlmann phases agree within 1e-3 at M = 1024.
Outcome criterion_oracle_equivalence() {
  const MomentumGrid grid(1024);
  const BlochField hf = bloch_field(kThetaF, grid);
  double worst = 0.0;
  for (double r : {0.3, 0.95}) {
    OccupationField occ(grid);
    for (double& v : occ.ntilde_z) v = -r;
    const DensityField rho = dephased_reference(hf, occ);
    worst = std::max(worst, std::abs(reduce_phase(uhlmann_phase(rho).value -
                                                  uhlmann_phase_polar_oracle(rho).value)));
  }
  {
    // smooth k-dependent purity, still full rank and chiral
    OccupationField occ(grid);
    for (int j = 0; j < grid.size(); ++j)
      occ.ntilde_z[j] = -(0.93 + 0.05 * std::cos(grid.node(j)));
    const DensityField rho = dephased_reference(hf, occ);
    worst = std::max(worst, std::abs(reduce_phase(uhlmann_phase(rho).value -
                                                  uhlmann_phase_polar_oracle(rho).value)));
  }
  return {worst < 1e-3,
          fmt("max method disagreement %.2e on smooth full-rank fields (tolerance 1e-3)", worst)};
}

// 7. Symmetry restoration: commutator medians decrease over n in {3,21,201}
//    and fall below 0.01 at n = 201.
Outcome criterion_symmetry_restoration() {
  const MomentumGrid grid(256);
  const QuenchSchedule sched(kThetaI, kThetaF, 13);
  const BlochField hf = bloch_field(kThetaF, grid);
  std::vector<double> medians;
  for (int n : {3, 21, 201}) {
    DisorderConfig disorder;
    disorder.n_realizations = n;
    const TrajectoryRecord rec =
        disorder_ensemble_quench(sched, disorder, initial_ground_state(grid), kThreads);
    medians.push_back(median(commutator_norms(rec.densities.back(), hf)));
  }
  const bool monotone = medians[0] > medians[1] && medians[1] > medians[2];
  const bool small = medians[2] < 0.01;
  return {monotone && small,
          fmt("medians ||[rho,H_f]||_F = %.4f / %.4f / %.4f at n=3/21/201 "
              "(need monotone decrease and < 0.01 at n=201)",
              medians[0], medians[1], medians[2])};
}

// 8. Excitation scaling: log-log slope over v in {1/8,...,1/64} within [0.35, 0.65].
Outcome criterion_scaling() {
  DisorderConfig disorder;
  const ScalingResult res =
      scaling_study(kThetaI, kThetaF, {8, 16, 32, 64}, disorder, MomentumGrid(256), kThreads);
  const bool ok = res.exponent >= 0.35 && res.exponent <= 0.65;
  return {ok, fmt("fitted exponent %.4f +- %.4f (window [0.35, 0.65])", res.exponent,
                  res.ci_halfwidth)};
}

// 9. Tomography round trip at N = 5: rank-capped MLE fidelity >= 0.99 and the
//    reconstructed Uhlmann phase within 0.05 pi of the direct value.
Outcome criterion_tomography_round_trip() {
  RunConfig cfg;
  cfg.mode = RunMode::tomography_roundtrip;
  cfg.threads = kThreads;
  cfg.shots = 100000;
  cfg.seed = 20240901;
  cfg.tomography.walk_steps = 5;
  cfg.tomography.rank_cap = 4;
  cfg.tomography.gauge_probes = 0;
  cfg.out_dir = (fs::temp_directory_path() / "qwalk_acceptance_tomo").string();
  const TomographyOutcome out = run_tomography(cfg);
  const double phase_err = std::abs(reduce_phase(out.phase_reconstructed - out.phase_direct));
  const bool ok = out.fidelity >= 0.99 && phase_err <= 0.05 * pi;
  return {ok, fmt("fidelity %.5f (>= 0.99), phase error %.4f pi (<= 0.05, direct %.4f pi)",
                  out.fidelity, phase_err / pi, out.phase_direct / pi)};
}

// 10. Calibrated Lindblad channel matches the disorder ensemble within
//     per-node trace distance 0.05 at every step.
Outcome criterion_channel_consistency() {
  const MomentumGrid grid(256);
  const QuenchSchedule sched(kThetaI, kThetaF, 13);
  DisorderConfig disorder;
  const double gamma = calibrate_dephasing_rate(
      sched, disorder, grid, CalibrationObjective::trajectory_distance, kThreads);
  const TrajectoryRecord ens =
      disorder_ensemble_quench(sched, disorder, initial_ground_state(grid), kThreads);
  const TrajectoryRecord lin =
      lindblad_quench(sched, {gamma, 16}, initial_ground_state(grid), kThreads);
  const double dist = max_trace_distance(lin, ens);
  return {dist < 0.05,
          fmt("gamma = %.4f (trajectory-distance calibration), max per-node trace distance "
              "%.4f (< 0.05)",
              gamma, dist)};
}

// 11. Determinism: identical seeds give byte-identical output tables.
Outcome criterion_determinism() {
  const fs::path base = fs::temp_directory_path() / "qwalk_acceptance_det";
  fs::remove_all(base);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  RunConfig cfg;
  cfg.mode = RunMode::quench_ensemble;
  cfg.grid = 64;
  cfg.seed = 11;
  cfg.threads = 1;
  cfg.out_dir = (base / "a").string();
  run_quench(cfg);
  cfg.threads = kThreads;
  cfg.out_dir = (base / "b").string();
  run_quench(cfg);
  const bool quench_same = slurp(base / "a" / "quench.csv") == slurp(base / "b" / "quench.csv");

  RunConfig pd;
  pd.mode = RunMode::phase_diagram;
  pd.grid = 64;
  pd.phase_diagram.resolution = 16;
  pd.phase_diagram.boundary_grid = 128;
  pd.out_dir = (base / "c").string();
  pd.threads = 1;
  run_phase_diagram(pd);
  pd.out_dir = (base / "d").string();
  pd.threads = kThreads;
  run_phase_diagram(pd);
  const bool pd_same =
      slurp(base / "c" / "phase_diagram.csv") == slurp(base / "d" / "phase_diagram.csv") &&
      slurp(base / "c" / "boundary.csv") == slurp(base / "d" / "boundary.csv");
  return {quench_same && pd_same,
          fmt("quench tables identical: %s; phase-diagram tables identical: %s "
              "(seeded reruns across thread counts)",
              quench_same ? "yes" : "no", pd_same ? "yes" : "no")};
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

const Criterion kCriteria[] = {
    {"berry quantization", criterion_berry_quantization},
    {"phase boundaries", criterion_phase_boundaries},
    {"unitary no-go", criterion_unitary_no_go},
    {"mixed-state invariant", criterion_mixed_state_invariant},
    {"pure-state reduction", criterion_pure_state_reduction},
    {"oracle equivalence", criterion_oracle_equivalence},
    {"symmetry restoration", criterion_symmetry_restoration},
    {"scaling", criterion_scaling},
    {"tomography round trip", criterion_tomography_round_trip},
    {"channel consistency", criterion_channel_consistency},
    {"determinism", criterion_determinism},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  if (argc > 1) {
    only = std::atoi(argv[1]);
    if (only < 1 || only > 11) {
      std::fprintf(stderr, "usage: %s [criterion 1..11]\n", argv[0]);
      return 2;
    }
  }
  bool all_pass = true;
  for (int i = 1; i <= 11; ++i) {
    if (only && i != only) continue;
    Outcome out;
    try {
      out = kCriteria[i - 1].run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] criterion %2d: %-24s %s\n", out.pass ? "PASS" : "FAIL", i,
                kCriteria[i - 1].name, out.detail.c_str());
    std::fflush(stdout);
    all_pass = all_pass && out.pass;
  }
  return all_pass ? 0 : 1;
}
