// Command-line driver: phase diagrams, quenches, scaling sweeps and the
// tomography round trip, all backed by the qwalk headers. Exit codes:
// 0 success, 2 configuration error, 3 numerical error, 4 I/O error.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "qwalk/commands.hpp"
#include "qwalk/version.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  int threads = 0;
  int grid = 0;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "JSON run configuration")
      ->envname("QWALK_CONFIG");
  cmd->add_option("--seed", flags.seed, "master RNG seed")->envname("QWALK_SEED");
  cmd->add_option("--out", flags.out_dir, "output directory")->envname("QWALK_OUT");
  cmd->add_option("--threads", flags.threads, "worker threads")->envname("QWALK_THREADS");
  cmd->add_option("--grid", flags.grid, "momentum grid size")->envname("QWALK_GRID");
}

qwalk::RunConfig build_config(const CLI::App* cmd, const CommonFlags& flags) {
  qwalk::RunConfig cfg;
  if (!flags.config_path.empty()) cfg = qwalk::load_run_config(flags.config_path);
  if (cmd->count("--seed")) cfg.seed = flags.seed;
  if (cmd->count("--out")) cfg.out_dir = flags.out_dir;
  if (cmd->count("--threads")) cfg.threads = flags.threads;
  if (cmd->count("--grid")) cfg.grid = flags.grid;
  if (cfg.threads < 1) throw qwalk::config_error("threads must be >= 1");
  if (cfg.grid < 8) throw qwalk::config_error("grid must be >= 8");
  return cfg;
}

bool is_quench_mode(qwalk::RunMode m) {
  return m == qwalk::RunMode::quench_unitary || m == qwalk::RunMode::quench_ensemble ||
         m == qwalk::RunMode::quench_lindblad;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"split-step quantum walk topology toolkit"};
  app.set_version_flag("--version", QWALK_VERSION);
  app.require_subcommand(1);

  CommonFlags pd_flags, q_flags, sc_flags, tm_flags;
  std::string quench_variant;

  CLI::App* pd = app.add_subcommand("phase-diagram", "gap and Berry phase over the coin angles");
  add_common(pd, pd_flags);
  CLI::App* quench = app.add_subcommand("quench", "slow-quench trajectory and phase series");
  add_common(quench, q_flags);
  quench->add_option("--variant", quench_variant,
                     "unitary | ensemble | lindblad (default from config, else ensemble)")
      ->check(CLI::IsMember({"unitary", "ensemble", "lindblad"}));
  CLI::App* scaling = app.add_subcommand("scaling", "excitation scaling over quench velocities");
  add_common(scaling, sc_flags);
  CLI::App* tomo = app.add_subcommand("tomography", "count simulation and MLE round trip");
  add_common(tomo, tm_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (pd->parsed()) {
      qwalk::RunConfig cfg = build_config(pd, pd_flags);
      cfg.mode = qwalk::RunMode::phase_diagram;
      const auto out = qwalk::run_phase_diagram(cfg);
      std::printf("phase-diagram: %d cells (%d excluded), %d boundary edges, %d audit violations\n",
                  out.cells, out.excluded, out.label_changing_edges, out.audit_violations);
      return out.audit_violations == 0 ? 0 : 3;
    }
    if (quench->parsed()) {
      qwalk::RunConfig cfg = build_config(quench, q_flags);
      if (!quench_variant.empty()) {
        if (quench_variant == "unitary") cfg.mode = qwalk::RunMode::quench_unitary;
        else if (quench_variant == "lindblad") cfg.mode = qwalk::RunMode::quench_lindblad;
        else cfg.mode = qwalk::RunMode::quench_ensemble;
      } else if (!is_quench_mode(cfg.mode)) {
        cfg.mode = qwalk::RunMode::quench_ensemble;
      }
      const auto out = qwalk::run_quench(cfg);
      std::printf("quench: %zu steps, final phase %.6f pi, critical step %s\n",
                  out.series.phase.size() - 1, out.series.phase.back() / qwalk::pi,
                  out.critical_step ? std::to_string(*out.critical_step).c_str() : "none");
      return 0;
    }
    if (scaling->parsed()) {
      qwalk::RunConfig cfg = build_config(scaling, sc_flags);
      cfg.mode = qwalk::RunMode::scaling;
      const auto out = qwalk::run_scaling(cfg);
      std::printf("scaling: exponent %.4f +- %.4f\n", out.result.exponent,
                  out.result.ci_halfwidth);
      return 0;
    }
    if (tomo->parsed()) {
      qwalk::RunConfig cfg = build_config(tomo, tm_flags);
      cfg.mode = qwalk::RunMode::tomography_roundtrip;
      const auto out = qwalk::run_tomography(cfg);
      std::printf("tomography: fidelity %.6f, phase %.6f pi (direct %.6f pi)\n", out.fidelity,
                  out.phase_reconstructed / qwalk::pi, out.phase_direct / qwalk::pi);
      return 0;
    }
  } catch (const qwalk::config_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const qwalk::io_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  }
  return 0;
}
