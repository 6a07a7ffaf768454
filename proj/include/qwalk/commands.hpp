#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qwalk/dynamics.hpp"
#include "qwalk/geometry.hpp"
#include "qwalk/io.hpp"
#include "qwalk/parallel.hpp"
#include "qwalk/tomography.hpp"
#include "qwalk/version.hpp"
#include "qwalk/walk.hpp"

namespace qwalk {

using json = nlohmann::json;

enum class RunMode {
  phase_diagram,
  quench_unitary,
  quench_ensemble,
  quench_lindblad,
  scaling,
  tomography_roundtrip
};

inline std::string to_string(RunMode m) {
  switch (m) {
    case RunMode::phase_diagram: return "phase-diagram";
    case RunMode::quench_unitary: return "quench-unitary";
    case RunMode::quench_ensemble: return "quench-ensemble";
    case RunMode::quench_lindblad: return "quench-lindblad";
    case RunMode::scaling: return "scaling";
    case RunMode::tomography_roundtrip: return "tomography-roundtrip";
  }
  return "?";
}

inline RunMode run_mode_from_string(const std::string& s) {
  for (RunMode m : {RunMode::phase_diagram, RunMode::quench_unitary, RunMode::quench_ensemble,
                    RunMode::quench_lindblad, RunMode::scaling, RunMode::tomography_roundtrip})
    if (to_string(m) == s) return m;
  throw config_error("unknown mode '" + s + "'");
}

struct ScheduleConfig {
  double theta_i1 = 0.0, theta_i2 = pi;
  // Default ramp: flat-band start, one boundary crossing (theta2 = theta1 at
  // s = 0.351), nontrivial final Hamiltonian with its gap minimum at k = pi.
  double theta_f1 = 1.275 * pi, theta_f2 = -0.575 * pi;
  int steps = 13;
};

struct DisorderSettings {
  double delta_theta1 = 0.2;
  int realizations = 21;
  std::string sampling = "uniform-grid";
  bool resample_each_step = false;
};

struct NoiseSettings {
  double gamma = -1.0;  // negative: calibrate against the disorder ensemble
  int substeps = 16;
};

struct TomographySettings {
  int walk_steps = 5;
  int rank_cap = 4;
  int restarts = 10;
  long iterations = 50000;
  std::string count_model = "multinomial";
  int gauge_probes = 4;
};

struct PhaseDiagramSettings {
  int resolution = 64;
  double theta_min = -two_pi;
  double theta_max = two_pi;
  double gap_threshold = 1e-3;
  double exclude_gap = 0.05;
  int boundary_grid = 512;
};

struct ScalingSettings {
  std::vector<int> step_counts = {8, 16, 32, 64};
};

struct RunConfig {
  RunMode mode = RunMode::quench_ensemble;
  int grid = 256;
  std::uint64_t seed = 20240901;
  std::string out_dir = "out";
  int threads = 1;
  bool dump_fields = false;
  long shots = 100000;
  ScheduleConfig schedule;
  DisorderSettings disorder;
  NoiseSettings noise;
  TomographySettings tomography;
  PhaseDiagramSettings phase_diagram;
  ScalingSettings scaling;
};

namespace detail {

inline void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                                const std::string& where) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const auto& k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known) throw config_error("unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
inline void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw config_error(std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

}  // namespace detail

inline RunConfig parse_run_config(const json& j) {
  if (!j.is_object()) throw config_error("top level must be an object");
  detail::reject_unknown_keys(j, {"mode", "grid", "seed", "out", "threads", "dump_fields",
                                  "shots", "schedule", "disorder", "noise", "tomography",
                                  "phase_diagram", "scaling"},
                              "top level");
  RunConfig c;
  if (j.contains("mode")) c.mode = run_mode_from_string(j.at("mode").get<std::string>());
  detail::read_if(j, "grid", c.grid);
  detail::read_if(j, "seed", c.seed);
  detail::read_if(j, "out", c.out_dir);
  detail::read_if(j, "threads", c.threads);
  detail::read_if(j, "dump_fields", c.dump_fields);
  detail::read_if(j, "shots", c.shots);
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    detail::reject_unknown_keys(s, {"theta_i", "theta_f", "steps"}, "schedule");
    if (s.contains("theta_i")) {
      const auto v = s.at("theta_i").get<std::vector<double>>();
      if (v.size() != 2) throw config_error("schedule.theta_i needs two angles");
      c.schedule.theta_i1 = v[0];
      c.schedule.theta_i2 = v[1];
    }
    if (s.contains("theta_f")) {
      const auto v = s.at("theta_f").get<std::vector<double>>();
      if (v.size() != 2) throw config_error("schedule.theta_f needs two angles");
      c.schedule.theta_f1 = v[0];
      c.schedule.theta_f2 = v[1];
    }
    detail::read_if(s, "steps", c.schedule.steps);
  }
  if (j.contains("disorder")) {
    const json& s = j.at("disorder");
    detail::reject_unknown_keys(
        s, {"delta_theta1", "realizations", "sampling", "resample_each_step"}, "disorder");
    detail::read_if(s, "delta_theta1", c.disorder.delta_theta1);
    detail::read_if(s, "realizations", c.disorder.realizations);
    detail::read_if(s, "sampling", c.disorder.sampling);
    detail::read_if(s, "resample_each_step", c.disorder.resample_each_step);
    if (c.disorder.sampling != "uniform-grid" && c.disorder.sampling != "random")
      throw config_error("disorder.sampling must be 'uniform-grid' or 'random'");
  }
  if (j.contains("noise")) {
    const json& s = j.at("noise");
    detail::reject_unknown_keys(s, {"gamma", "substeps"}, "noise");
    detail::read_if(s, "gamma", c.noise.gamma);
    detail::read_if(s, "substeps", c.noise.substeps);
  }
  if (j.contains("tomography")) {
    const json& s = j.at("tomography");
    detail::reject_unknown_keys(
        s, {"walk_steps", "rank_cap", "restarts", "iterations", "count_model", "gauge_probes"},
        "tomography");
    detail::read_if(s, "walk_steps", c.tomography.walk_steps);
    detail::read_if(s, "rank_cap", c.tomography.rank_cap);
    detail::read_if(s, "restarts", c.tomography.restarts);
    detail::read_if(s, "iterations", c.tomography.iterations);
    detail::read_if(s, "count_model", c.tomography.count_model);
    detail::read_if(s, "gauge_probes", c.tomography.gauge_probes);
    if (c.tomography.count_model != "multinomial" && c.tomography.count_model != "binomial")
      throw config_error("tomography.count_model must be 'multinomial' or 'binomial'");
  }
  if (j.contains("phase_diagram")) {
    const json& s = j.at("phase_diagram");
    detail::reject_unknown_keys(s, {"resolution", "theta_min", "theta_max", "gap_threshold",
                                    "exclude_gap", "boundary_grid"},
                                "phase_diagram");
    detail::read_if(s, "resolution", c.phase_diagram.resolution);
    detail::read_if(s, "theta_min", c.phase_diagram.theta_min);
    detail::read_if(s, "theta_max", c.phase_diagram.theta_max);
    detail::read_if(s, "gap_threshold", c.phase_diagram.gap_threshold);
    detail::read_if(s, "exclude_gap", c.phase_diagram.exclude_gap);
    detail::read_if(s, "boundary_grid", c.phase_diagram.boundary_grid);
  }
  if (j.contains("scaling")) {
    const json& s = j.at("scaling");
    detail::reject_unknown_keys(s, {"step_counts"}, "scaling");
    detail::read_if(s, "step_counts", c.scaling.step_counts);
  }
  if (c.grid < 8) throw config_error("grid must be >= 8");
  if (c.threads < 1) throw config_error("threads must be >= 1");
  if (c.schedule.steps < 1) throw config_error("schedule.steps must be >= 1");
  if (c.shots < 1) throw config_error("shots must be >= 1");
  return c;
}

inline json to_json(const RunConfig& c) {
  json j;
  j["mode"] = to_string(c.mode);
  j["grid"] = c.grid;
  j["seed"] = c.seed;
  j["out"] = c.out_dir;
  j["threads"] = c.threads;
  j["dump_fields"] = c.dump_fields;
  j["shots"] = c.shots;
  j["schedule"] = {{"theta_i", {c.schedule.theta_i1, c.schedule.theta_i2}},
                   {"theta_f", {c.schedule.theta_f1, c.schedule.theta_f2}},
                   {"steps", c.schedule.steps}};
  j["disorder"] = {{"delta_theta1", c.disorder.delta_theta1},
                   {"realizations", c.disorder.realizations},
                   {"sampling", c.disorder.sampling},
                   {"resample_each_step", c.disorder.resample_each_step}};
  j["noise"] = {{"gamma", c.noise.gamma}, {"substeps", c.noise.substeps}};
  j["tomography"] = {{"walk_steps", c.tomography.walk_steps},
                     {"rank_cap", c.tomography.rank_cap},
                     {"restarts", c.tomography.restarts},
                     {"iterations", c.tomography.iterations},
                     {"count_model", c.tomography.count_model},
                     {"gauge_probes", c.tomography.gauge_probes}};
  j["phase_diagram"] = {{"resolution", c.phase_diagram.resolution},
                        {"theta_min", c.phase_diagram.theta_min},
                        {"theta_max", c.phase_diagram.theta_max},
                        {"gap_threshold", c.phase_diagram.gap_threshold},
                        {"exclude_gap", c.phase_diagram.exclude_gap},
                        {"boundary_grid", c.phase_diagram.boundary_grid}};
  j["scaling"] = {{"step_counts", c.scaling.step_counts}};
  return j;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config", path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw config_error(std::string("parse error in ") + path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

struct RunArtifacts {
  std::vector<std::string> files;  // relative to out_dir
  json summary;
};

namespace detail {

inline std::filesystem::path ensure_out_dir(const RunConfig& cfg) {
  std::filesystem::path dir(cfg.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_error("cannot create output directory", dir.string());
  return dir;
}

inline void write_manifest(const std::filesystem::path& dir, const RunConfig& cfg,
                           RunArtifacts& artifacts, double wall_seconds) {
  json manifest;
  manifest["version"] = QWALK_VERSION;
  manifest["config"] = to_json(cfg);
  manifest["wall_clock_seconds"] = wall_seconds;
  manifest["summary"] = artifacts.summary;
  json files = json::array();
  for (const std::string& name : artifacts.files)
    files.push_back({{"name", name}, {"fnv1a64", to_hex(file_checksum(dir / name))}});
  manifest["files"] = files;
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw io_error("cannot open for writing", (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
  if (!out) throw io_error("write failed", (dir / "manifest.json").string());
  artifacts.files.push_back("manifest.json");
}

inline QuenchSchedule schedule_from(const RunConfig& cfg) {
  return QuenchSchedule(ThetaPair(cfg.schedule.theta_i1, cfg.schedule.theta_i2),
                        ThetaPair(cfg.schedule.theta_f1, cfg.schedule.theta_f2),
                        cfg.schedule.steps);
}

inline DisorderConfig disorder_from(const RunConfig& cfg) {
  DisorderConfig d;
  d.delta_theta1 = cfg.disorder.delta_theta1;
  d.n_realizations = cfg.disorder.realizations;
  d.sampling = cfg.disorder.sampling == "random" ? DisorderConfig::Sampling::random
                                                 : DisorderConfig::Sampling::uniform_grid;
  d.seed = cfg.seed;
  d.resample_each_step = cfg.disorder.resample_each_step;
  return d;
}

}  // namespace detail

struct PhaseDiagramOutcome {
  int cells = 0;
  int excluded = 0;
  double max_quantization_distance = 0.0;
  int label_changing_edges = 0;
  int audit_violations = 0;
  RunArtifacts artifacts;
};

/**
 * (theta1, theta2) sweep: gap and lower-band Berry phase per cell, boundary
 * points refined wherever adjacent cells disagree on the phase, and an
 * adjacency audit that every such edge is cut by a gap-closing curve.
 */
inline PhaseDiagramOutcome run_phase_diagram(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto dir = detail::ensure_out_dir(cfg);
  const PhaseDiagramSettings& pd = cfg.phase_diagram;
  if (pd.resolution < 2) throw config_error("phase_diagram.resolution must be >= 2");
  if (!(pd.theta_max > pd.theta_min)) throw config_error("phase_diagram range is empty");
  const int res = pd.resolution;
  const MomentumGrid grid(cfg.grid);
  const MomentumGrid fine(pd.boundary_grid);

  auto cell_angle = [&](int i) {
    return pd.theta_min + (i + 0.5) * (pd.theta_max - pd.theta_min) / res;
  };

  std::vector<double> gaps(res * res, 0.0);
  std::vector<double> berry(res * res, std::numeric_limits<double>::quiet_NaN());
  PhaseDiagramOutcome out;
  out.cells = res * res;

  parallel_for(res * res, cfg.threads, [&](int idx) {
    const int i = idx / res, j = idx % res;
    const ThetaPair th(cell_angle(i), cell_angle(j));
    gaps[idx] = quasienergy_gap(th, grid);
    if (gaps[idx] >= pd.exclude_gap)
      berry[idx] = std::abs(berry_phase(lower_band(bloch_field(th, grid))).value);
  });

  CsvWriter table(dir / "phase_diagram.csv", {"theta1", "theta2", "gap", "berry_phase"});
  for (int i = 0; i < res; ++i)
    for (int j = 0; j < res; ++j)
      table.row({format_double(cell_angle(i)), format_double(cell_angle(j)),
                 format_double(gaps[i * res + j]), format_double(berry[i * res + j])});
  table.close();
  out.artifacts.files.push_back("phase_diagram.csv");

  for (int idx = 0; idx < res * res; ++idx) {
    if (std::isnan(berry[idx])) ++out.excluded;
    else out.max_quantization_distance =
        std::max(out.max_quantization_distance, quantization_distance(berry[idx]));
  }

  // Label-changing 8-neighbor edges; any continuous path between cells of
  // different quantized phase crosses a gap-closing curve, so a golden-section
  // gap minimum along the connecting segment must locate a boundary point.
  struct Edge { int i0, j0, i1, j1; };
  std::vector<Edge> edges;
  auto label_of = [&](int idx) -> std::optional<double> {
    if (std::isnan(berry[idx])) return std::nullopt;
    return quantized_value(berry[idx]);
  };
  constexpr int dirs[4][2] = {{1, 0}, {0, 1}, {1, 1}, {1, -1}};
  for (int i = 0; i < res; ++i)
    for (int j = 0; j < res; ++j) {
      const auto a = label_of(i * res + j);
      if (!a) continue;
      for (const auto& d : dirs) {
        const int i2 = i + d[0], j2 = j + d[1];
        if (i2 < 0 || i2 >= res || j2 < 0 || j2 >= res) continue;
        const auto b = label_of(i2 * res + j2);
        if (b && std::abs(*a - *b) > 0.1) edges.push_back({i, j, i2, j2});
      }
    }
  out.label_changing_edges = static_cast<int>(edges.size());

  std::vector<double> refined_t1(edges.size()), refined_t2(edges.size()), refined_gap(edges.size());
  parallel_for(static_cast<int>(edges.size()), cfg.threads, [&](int e) {
    const Edge& ed = edges[e];
    const double ax = cell_angle(ed.i0), ay = cell_angle(ed.j0);
    const double bx = cell_angle(ed.i1), by = cell_angle(ed.j1);
    auto gap_at = [&](double s) {
      return quasienergy_gap(ThetaPair(ax + s * (bx - ax), ay + s * (by - ay)), fine);
    };
    double lo = 0.0, hi = 1.0;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
    double fc = gap_at(c), fd = gap_at(d);
    for (int it = 0; it < 70; ++it) {
      if (fc < fd) {
        hi = d; d = c; fd = fc;
        c = hi - gr * (hi - lo); fc = gap_at(c);
      } else {
        lo = c; c = d; fc = fd;
        d = lo + gr * (hi - lo); fd = gap_at(d);
      }
    }
    const double s = fc < fd ? c : d;
    refined_t1[e] = ax + s * (bx - ax);
    refined_t2[e] = ay + s * (by - ay);
    refined_gap[e] = std::min(fc, fd);
  });

  CsvWriter boundary(dir / "boundary.csv", {"theta1", "theta2", "gap"});
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (refined_gap[e] < pd.gap_threshold)
      boundary.row({format_double(refined_t1[e]), format_double(refined_t2[e]),
                    format_double(refined_gap[e])});
    else
      ++out.audit_violations;
  }
  boundary.close();
  out.artifacts.files.push_back("boundary.csv");

  out.artifacts.summary = {{"cells", out.cells},
                           {"excluded", out.excluded},
                           {"max_quantization_distance", out.max_quantization_distance},
                           {"label_changing_edges", out.label_changing_edges},
                           {"audit_violations", out.audit_violations}};
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  detail::write_manifest(dir, cfg, out.artifacts, wall);
  return out;
}

struct QuenchOutcome {
  PhaseSeries series;
  std::optional<int> critical_step;
  double calibrated_gamma = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> commutator_median;  // vs H_f, per step
  RunArtifacts artifacts;
};

inline QuenchOutcome run_quench(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig resolved = cfg;
  const auto dir = detail::ensure_out_dir(cfg);
  const MomentumGrid grid(cfg.grid);
  const QuenchSchedule schedule = detail::schedule_from(cfg);
  const StateField init = initial_ground_state(grid);

  TrajectoryRecord rec(schedule);
  const char* phase_column = "phi_U";
  switch (cfg.mode) {
    case RunMode::quench_unitary:
      rec = unitary_quench(schedule, init, cfg.threads);
      phase_column = "phi_B";
      break;
    case RunMode::quench_ensemble:
      rec = disorder_ensemble_quench(schedule, detail::disorder_from(cfg), init, cfg.threads);
      break;
    case RunMode::quench_lindblad: {
      double gamma = cfg.noise.gamma;
      if (gamma < 0) {
        gamma = calibrate_dephasing_rate(schedule, detail::disorder_from(cfg), grid,
                                         CalibrationObjective::trajectory_distance, cfg.threads,
                                         cfg.noise.substeps);
        resolved.noise.gamma = gamma;
      }
      rec = lindblad_quench(schedule, {gamma, cfg.noise.substeps}, init, cfg.threads);
      break;
    }
    default:
      throw config_error("run_quench: mode must be one of the quench-* modes");
  }

  QuenchOutcome out;
  out.series = trajectory_phase_series(rec);
  out.critical_step = rec.critical_step;
  if (resolved.noise.gamma >= 0 && cfg.mode == RunMode::quench_lindblad)
    out.calibrated_gamma = resolved.noise.gamma;

  const BlochField hf = rec.hamiltonians.back();
  for (const DensityField& rho : rec.densities)
    out.commutator_median.push_back(median(commutator_norms(rho, hf)));

  CsvWriter table(dir / "quench.csv",
                  {"t", phase_column, "mean_purity", "excitation", "commutator_norm"});
  for (std::size_t t = 0; t < out.series.phase.size(); ++t)
    table.row({std::to_string(t), format_double(out.series.phase[t]),
               format_double(out.series.purity[t]), format_double(out.series.excitation[t]),
               format_double(out.commutator_median[t])});
  table.close();
  out.artifacts.files.push_back("quench.csv");

  if (cfg.dump_fields) {
    write_density_dump(dir / "densities.qwdf", rec.densities);
    out.artifacts.files.push_back("densities.qwdf");
  }

  out.artifacts.summary = {{"critical_step", rec.critical_step ? json(*rec.critical_step) : json()},
                           {"final_phase", out.series.phase.back()},
                           {"final_purity", out.series.purity.back()},
                           {"gapless_nodes", rec.gapless.size()}};
  if (cfg.mode == RunMode::quench_lindblad)
    out.artifacts.summary["gamma"] = resolved.noise.gamma;
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  detail::write_manifest(dir, resolved, out.artifacts, wall);
  return out;
}

struct ScalingOutcome {
  ScalingResult result;
  RunArtifacts artifacts;
};

inline ScalingOutcome run_scaling(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto dir = detail::ensure_out_dir(cfg);
  const MomentumGrid grid(cfg.grid);
  ScalingOutcome out;
  out.result = scaling_study(ThetaPair(cfg.schedule.theta_i1, cfg.schedule.theta_i2),
                             ThetaPair(cfg.schedule.theta_f1, cfg.schedule.theta_f2),
                             cfg.scaling.step_counts, detail::disorder_from(cfg), grid,
                             cfg.threads);

  CsvWriter table(dir / "scaling.csv",
                  {"velocity", "steps", "excitation", "uhlmann_magnitude", "uhlmann_deviation"});
  for (std::size_t i = 0; i < out.result.velocities.size(); ++i)
    table.row({format_double(out.result.velocities[i]),
               std::to_string(cfg.scaling.step_counts[i]),
               format_double(out.result.excitation[i]),
               format_double(out.result.uhlmann_magnitude[i]),
               format_double(out.result.uhlmann_deviation[i])});
  table.close();
  out.artifacts.files.push_back("scaling.csv");

  CsvWriter fit(dir / "scaling_fit.csv", {"exponent", "ci_halfwidth", "intercept"});
  fit.row({format_double(out.result.exponent), format_double(out.result.ci_halfwidth),
           format_double(out.result.intercept)});
  fit.close();
  out.artifacts.files.push_back("scaling_fit.csv");

  out.artifacts.summary = {{"exponent", out.result.exponent},
                           {"ci_halfwidth", out.result.ci_halfwidth}};
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  detail::write_manifest(dir, cfg, out.artifacts, wall);
  return out;
}

inline void write_counts_csv(const std::filesystem::path& path, const CountDataset& data) {
  CsvWriter table(path, {"family_id", "x", "x_prime", "phase_tag", "counts", "shots"});
  for (std::size_t f = 0; f < data.settings.size(); ++f)
    for (std::size_t m = 0; m < data.settings[f].projectors.size(); ++m) {
      const Projector& p = data.settings[f].projectors[m];
      table.row({std::to_string(data.settings[f].family), std::to_string(p.site_h),
                 std::to_string(p.site_v), to_string(p.tag), std::to_string(data.counts[f][m]),
                 std::to_string(data.shots)});
    }
  table.close();
}

/// Read a counts table back; the family grouping is rebuilt from the rows.
inline CountDataset load_counts_csv(const std::filesystem::path& path,
                                    CountModel model = CountModel::multinomial) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open", path.string());
  std::string line;
  if (!std::getline(in, line)) throw io_error("empty counts file", path.string());
  CountDataset data;
  data.model = model;
  std::map<int, std::size_t> family_slot;
  int max_site = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw io_error("malformed counts row", path.string());
    const int family = std::stoi(cells[0]);
    Projector p;
    p.site_h = std::stoi(cells[1]);
    p.site_v = std::stoi(cells[2]);
    const auto tag = phase_tag_from_string(cells[3]);
    if (!tag) throw io_error("unknown phase tag '" + cells[3] + "'", path.string());
    p.tag = *tag;
    const long counts = std::stol(cells[4]);
    data.shots = std::stol(cells[5]);
    max_site = std::max({max_site, std::abs(p.site_h), std::abs(p.site_v)});
    auto it = family_slot.find(family);
    if (it == family_slot.end()) {
      family_slot[family] = data.settings.size();
      data.settings.push_back({family, {}});
      data.counts.emplace_back();
      it = family_slot.find(family);
    }
    data.settings[it->second].projectors.push_back(p);
    data.counts[it->second].push_back(counts);
  }
  data.half_span = max_site;
  return data;
}

struct TomographyOutcome {
  double fidelity = 0.0;
  double phase_direct = 0.0;
  double phase_reconstructed = 0.0;
  double gauge_orbit_diameter = std::numeric_limits<double>::quiet_NaN();
  double log_likelihood = 0.0;
  long iterations = 0;
  bool converged = false;
  RunArtifacts artifacts;
};

/**
 * Full round trip mirroring the measurement pipeline: disorder-ensemble walk,
 * real-space ensemble density matrix, simulated projection counts, rank-capped
 * MLE, and the Uhlmann phase of the reconstruction vs the direct value.
 */
inline TomographyOutcome run_tomography(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto dir = detail::ensure_out_dir(cfg);
  const int n = cfg.tomography.walk_steps;
  if (n < 4) throw config_error("tomography.walk_steps must be >= 4 (momentum grid needs >= 8 nodes)");
  const int sites = 2 * n + 1;
  const int dim = 2 * sites;
  const MomentumGrid grid(sites);

  QuenchSchedule schedule(ThetaPair(cfg.schedule.theta_i1, cfg.schedule.theta_i2),
                          ThetaPair(cfg.schedule.theta_f1, cfg.schedule.theta_f2), n);
  const DisorderConfig disorder = detail::disorder_from(cfg);
  const std::vector<StateField> finals =
      ensemble_final_states(schedule, disorder, initial_ground_state(grid), cfg.threads);

  MatX truth = MatX::Zero(dim, dim);
  for (const StateField& f : finals) {
    const std::vector<Vec2> sites_spinors = momentum_to_real(f);
    VecX v(dim);
    for (int x = -n; x <= n; ++x) {
      v(basis_index(x, 0, n)) = sites_spinors[x + n](0);
      v(basis_index(x, 1, n)) = sites_spinors[x + n](1);
    }
    truth += v * v.adjoint();
  }
  truth /= static_cast<double>(finals.size());
  truth /= truth.trace().real();

  const GeometricPhase direct = uhlmann_phase(momentum_density_field(truth, n));

  const auto settings = projection_settings(n);
  const CountModel model = cfg.tomography.count_model == "binomial" ? CountModel::binomial
                                                                    : CountModel::multinomial;
  const CountDataset data = simulate_counts(truth, settings, cfg.shots, cfg.seed, n, model);
  write_counts_csv(dir / "counts.csv", data);

  MleOptions opts;
  opts.rank_cap = cfg.tomography.rank_cap;
  opts.restarts = cfg.tomography.restarts;
  opts.max_iterations = cfg.tomography.iterations;
  opts.seed = cfg.seed;
  opts.truth_density = &truth;
  const ReconstructionResult fit = mle_density(data, opts);
  const GeometricPhase rec_phase = phase_from_reconstruction(fit, n);

  TomographyOutcome out;
  out.fidelity = fit.fidelity;
  out.phase_direct = direct.value;
  out.phase_reconstructed = rec_phase.value;
  out.log_likelihood = fit.log_likelihood;
  out.iterations = fit.iterations;
  out.converged = fit.converged;
  if (cfg.tomography.gauge_probes > 0) {
    GaugeOrbitOptions go;
    go.probes = cfg.tomography.gauge_probes;
    go.seed = cfg.seed;
    out.gauge_orbit_diameter = gauge_orbit_diagnostic(data, fit, go);
  }

  out.artifacts.files.push_back("counts.csv");
  CsvWriter table(dir / "tomography.csv",
                  {"fidelity", "phase_direct", "phase_reconstructed", "phase_error",
                   "log_likelihood", "iterations", "converged", "gauge_orbit_diameter"});
  table.row({format_double(out.fidelity), format_double(out.phase_direct),
             format_double(out.phase_reconstructed),
             format_double(std::abs(reduce_phase(out.phase_reconstructed - out.phase_direct))),
             format_double(out.log_likelihood), std::to_string(out.iterations),
             out.converged ? "1" : "0", format_double(out.gauge_orbit_diameter)});
  table.close();
  out.artifacts.files.push_back("tomography.csv");

  out.artifacts.summary = {{"fidelity", out.fidelity},
                           {"phase_direct", out.phase_direct},
                           {"phase_reconstructed", out.phase_reconstructed}};
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  detail::write_manifest(dir, cfg, out.artifacts, wall);
  return out;
}

/// Dispatch on cfg.mode. Returns the emitted file list (relative to out dir).
inline RunArtifacts run(const RunConfig& cfg) {
  switch (cfg.mode) {
    case RunMode::phase_diagram: return run_phase_diagram(cfg).artifacts;
    case RunMode::quench_unitary:
    case RunMode::quench_ensemble:
    case RunMode::quench_lindblad: return run_quench(cfg).artifacts;
    case RunMode::scaling: return run_scaling(cfg).artifacts;
    case RunMode::tomography_roundtrip: return run_tomography(cfg).artifacts;
  }
  throw config_error("unhandled mode");
}

}  // namespace qwalk
