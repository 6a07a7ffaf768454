#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qwalk/dynamics.hpp"
#include "qwalk/errors.hpp"
#include "qwalk/fields.hpp"
#include "qwalk/geometry.hpp"
#include "qwalk/rng.hpp"

namespace qwalk {

using VecX = Eigen::VectorXcd;
using MatX = Eigen::MatrixXcd;

/**
 * Projection measurements after N walk steps, over the basis |u,x> with
 * u in {H,V} and x = -N..N. Family i (delay index, i = -N..N) holds the
 * interference projectors (|H,x> +- |V,x'>)/sqrt2 and (|H,x> +- i|V,x'>)/sqrt2
 * for every valid pair x' = x + i; the delay-0 family additionally carries the
 * computational projectors {|H,x>}, {|V,x>}. Within a family the projectors
 * split into maximal orthogonal classes ({H,V}, {+,-}, {+i,-i}); counts are
 * drawn and likelihoods evaluated per class.
 */
enum class PhaseTag { h, v, plus, minus, plus_i, minus_i };

inline std::string to_string(PhaseTag t) {
  switch (t) {
    case PhaseTag::h: return "H";
    case PhaseTag::v: return "V";
    case PhaseTag::plus: return "plus";
    case PhaseTag::minus: return "minus";
    case PhaseTag::plus_i: return "plus_i";
    case PhaseTag::minus_i: return "minus_i";
  }
  return "?";
}

inline std::optional<PhaseTag> phase_tag_from_string(const std::string& s) {
  if (s == "H") return PhaseTag::h;
  if (s == "V") return PhaseTag::v;
  if (s == "plus") return PhaseTag::plus;
  if (s == "minus") return PhaseTag::minus;
  if (s == "plus_i") return PhaseTag::plus_i;
  if (s == "minus_i") return PhaseTag::minus_i;
  return std::nullopt;
}

/// Orthogonal class of a tag within its family: 0 computational, 1 real, 2 imaginary.
inline int projector_class(PhaseTag t) {
  switch (t) {
    case PhaseTag::h:
    case PhaseTag::v: return 0;
    case PhaseTag::plus:
    case PhaseTag::minus: return 1;
    default: return 2;
  }
}

struct Projector {
  int site_h = 0;   // x of the |H,x> component (equals the site for tag v)
  int site_v = 0;   // x' of the |V,x'> component
  PhaseTag tag = PhaseTag::h;
};

struct ProjectionSetting {
  int family = 0;  // delay index i
  std::vector<Projector> projectors;
};

inline int basis_index(int site, int spin, int half_span) {
  return 2 * (site + half_span) + spin;  // spin: 0 = H, 1 = V
}

inline std::vector<ProjectionSetting> projection_settings(int half_span) {
  if (half_span < 1) throw std::invalid_argument("projection_settings: N must be >= 1");
  const int n = half_span;
  std::vector<ProjectionSetting> out;
  out.reserve(2 * n + 1);
  for (int delay = -n; delay <= n; ++delay) {
    ProjectionSetting s;
    s.family = delay;
    if (delay == 0) {
      for (int x = -n; x <= n; ++x) s.projectors.push_back({x, x, PhaseTag::h});
      for (int x = -n; x <= n; ++x) s.projectors.push_back({x, x, PhaseTag::v});
    }
    for (PhaseTag tag : {PhaseTag::plus, PhaseTag::minus, PhaseTag::plus_i, PhaseTag::minus_i})
      for (int x = -n; x <= n; ++x) {
        const int xp = x + delay;
        if (xp < -n || xp > n) continue;
        s.projectors.push_back({x, xp, tag});
      }
    out.push_back(std::move(s));
  }
  return out;
}

namespace detail {

inline complexd tag_weight(PhaseTag t) {
  switch (t) {
    case PhaseTag::plus: return {1, 0};
    case PhaseTag::minus: return {-1, 0};
    case PhaseTag::plus_i: return {0, 1};
    case PhaseTag::minus_i: return {0, -1};
    default: return {0, 0};
  }
}

inline void check_projector(const Projector& p, int half_span) {
  if (p.site_h < -half_span || p.site_h > half_span || p.site_v < -half_span ||
      p.site_v > half_span)
    throw std::invalid_argument("projector site out of range");
}

}  // namespace detail

/// Born probabilities p_m = <m|rho|m>, aligned with setting.projectors.
inline std::vector<double> born_probabilities(const MatX& rho, const ProjectionSetting& setting,
                                              int half_span) {
  std::vector<double> out;
  out.reserve(setting.projectors.size());
  for (const Projector& p : setting.projectors) {
    detail::check_projector(p, half_span);
    double prob = 0.0;
    if (p.tag == PhaseTag::h) {
      const int i = basis_index(p.site_h, 0, half_span);
      prob = rho(i, i).real();
    } else if (p.tag == PhaseTag::v) {
      const int i = basis_index(p.site_v, 1, half_span);
      prob = rho(i, i).real();
    } else {
      const int ih = basis_index(p.site_h, 0, half_span);
      const int iv = basis_index(p.site_v, 1, half_span);
      const complexd w = detail::tag_weight(p.tag);
      prob = 0.5 * (rho(ih, ih).real() + rho(iv, iv).real() + 2.0 * (w * rho(ih, iv)).real());
    }
    out.push_back(std::max(prob, 0.0));
  }
  return out;
}

inline std::vector<double> born_probabilities(const VecX& psi, const ProjectionSetting& setting,
                                              int half_span) {
  std::vector<double> out;
  out.reserve(setting.projectors.size());
  for (const Projector& p : setting.projectors) {
    detail::check_projector(p, half_span);
    complexd amp;
    if (p.tag == PhaseTag::h) {
      amp = psi(basis_index(p.site_h, 0, half_span));
    } else if (p.tag == PhaseTag::v) {
      amp = psi(basis_index(p.site_v, 1, half_span));
    } else {
      amp = (psi(basis_index(p.site_h, 0, half_span)) +
             std::conj(detail::tag_weight(p.tag)) * psi(basis_index(p.site_v, 1, half_span))) /
            std::sqrt(2.0);
    }
    out.push_back(std::norm(amp));
  }
  return out;
}

enum class CountModel {
  multinomial,  // per class: Multinomial(shots, p / sum p); counts sum to shots
  binomial      // per class: Multinomial(shots, [p..., loss]); each count ~ Binomial(shots, p_m)
};

struct CountDataset {
  int half_span = 0;
  long shots = 0;  // per (family, class)
  std::uint64_t seed = 0;
  CountModel model = CountModel::multinomial;
  std::vector<ProjectionSetting> settings;
  std::vector<std::vector<long>> counts;  // counts[f][m] aligned with settings[f].projectors
};

namespace detail {

/// Projector indices of each orthogonal class present in a family.
inline std::vector<std::vector<int>> class_partition(const ProjectionSetting& s) {
  std::vector<std::vector<int>> classes(3);
  for (int m = 0; m < static_cast<int>(s.projectors.size()); ++m)
    classes[projector_class(s.projectors[m].tag)].push_back(m);
  std::vector<std::vector<int>> out;
  for (auto& c : classes)
    if (!c.empty()) out.push_back(std::move(c));
  return out;
}

/// Sequential conditional binomials; deterministic for a fixed engine state.
inline std::vector<long> multinomial_draw(std::mt19937_64& rng, long shots,
                                          const std::vector<double>& probs) {
  std::vector<long> out(probs.size(), 0);
  double remaining = 0.0;
  for (double p : probs) remaining += p;
  long left = shots;
  for (std::size_t m = 0; m + 1 < probs.size(); ++m) {
    if (left <= 0 || remaining <= 0.0) break;
    const double q = std::clamp(probs[m] / remaining, 0.0, 1.0);
    std::binomial_distribution<long> dist(left, q);
    out[m] = dist(rng);
    left -= out[m];
    remaining -= probs[m];
  }
  if (!probs.empty() && left > 0) out.back() = left;
  return out;
}

}  // namespace detail

template <typename State>
inline CountDataset simulate_counts(const State& state,
                                    const std::vector<ProjectionSetting>& settings, long shots,
                                    std::uint64_t seed, int half_span,
                                    CountModel model = CountModel::multinomial) {
  if (shots < 1) throw std::invalid_argument("simulate_counts: shots must be >= 1");
  CountDataset data;
  data.half_span = half_span;
  data.shots = shots;
  data.seed = seed;
  data.model = model;
  data.settings = settings;
  data.counts.resize(settings.size());
  for (std::size_t f = 0; f < settings.size(); ++f) {
    const std::vector<double> p = born_probabilities(state, settings[f], half_span);
    data.counts[f].assign(p.size(), 0);
    int class_id = 0;
    for (const auto& cls : detail::class_partition(settings[f])) {
      auto rng = seeded_stream(seed, (static_cast<std::uint64_t>(f) << 8) | class_id);
      ++class_id;
      std::vector<double> probs;
      probs.reserve(cls.size() + 1);
      double total = 0.0;
      for (int m : cls) {
        probs.push_back(p[m]);
        total += p[m];
      }
      std::vector<long> drawn;
      if (model == CountModel::multinomial) {
        if (total <= 0.0) continue;
        for (double& q : probs) q /= total;
        drawn = detail::multinomial_draw(rng, shots, probs);
      } else {
        probs.push_back(std::max(0.0, 1.0 - total));  // loss bucket, kept implicit
        drawn = detail::multinomial_draw(rng, shots, probs);
        drawn.pop_back();
      }
      for (std::size_t i = 0; i < cls.size(); ++i) data.counts[f][cls[i]] = drawn[i];
    }
  }
  return data;
}

/// Log likelihood of model probabilities `probs(f)` under the dataset's count model.
inline double log_likelihood(const CountDataset& data,
                             const std::function<std::vector<double>(int)>& probs) {
  double ll = 0.0;
  for (std::size_t f = 0; f < data.settings.size(); ++f) {
    const std::vector<double> p = probs(static_cast<int>(f));
    for (const auto& cls : detail::class_partition(data.settings[f])) {
      double total = 0.0;
      long csum = 0;
      for (int m : cls) {
        total += p[m];
        csum += data.counts[f][m];
      }
      if (data.model == CountModel::multinomial) {
        if (csum == 0) continue;
        for (int m : cls)
          if (data.counts[f][m] > 0)
            ll += data.counts[f][m] * std::log(std::max(p[m], 1e-300));
        ll -= csum * std::log(std::max(total, 1e-300));
      } else {
        for (int m : cls)
          if (data.counts[f][m] > 0)
            ll += data.counts[f][m] * std::log(std::max(p[m], 1e-300));
        const long loss = data.shots - csum;
        if (loss > 0) ll += loss * std::log(std::max(1.0 - total, 1e-300));
      }
    }
  }
  return ll;
}

struct ReconstructionResult {
  VecX amplitudes;  // pure fits
  MatX density;     // density fits
  MatX t_factor;    // factor of the density parametrization rho = T^H T / tr
  double log_likelihood = 0.0;
  long iterations = 0;
  bool converged = false;
  int best_restart = -1;
  double fidelity = std::numeric_limits<double>::quiet_NaN();
};

/// Thrown when no restart converges; carries the best fit found so far.
class convergence_failure : public std::runtime_error {
 public:
  explicit convergence_failure(ReconstructionResult best)
      : std::runtime_error("tomography fit did not converge within the iteration budget"),
        best_(std::move(best)) {}
  const ReconstructionResult& best() const { return best_; }

 private:
  ReconstructionResult best_;
};

inline double fidelity(const VecX& a, const VecX& b) {
  const double na2 = a.squaredNorm(), nb2 = b.squaredNorm();
  return std::norm(a.dot(b)) / (na2 * nb2);
}

/// Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.
inline double fidelity(const MatX& rho, const MatX& sigma) {
  Eigen::SelfAdjointEigenSolver<MatX> es(rho);
  const Eigen::VectorXd ev = es.eigenvalues();
  MatX root = MatX::Zero(rho.rows(), rho.cols());
  for (int i = 0; i < ev.size(); ++i)
    root += std::sqrt(std::max(ev(i), 0.0)) * es.eigenvectors().col(i) *
            es.eigenvectors().col(i).adjoint();
  Eigen::SelfAdjointEigenSolver<MatX> es2(MatX(root * sigma * root));
  double s = 0.0;
  for (int i = 0; i < es2.eigenvalues().size(); ++i)
    s += std::sqrt(std::max(es2.eigenvalues()(i), 0.0));
  return s * s;
}

inline double fidelity(const MatX& rho, const VecX& psi) {
  const VecX n = psi.normalized();
  return (n.adjoint() * rho * n)(0, 0).real();
}

inline double trace_distance(const MatX& a, const MatX& b) {
  Eigen::SelfAdjointEigenSolver<MatX> es(MatX(0.5 * ((a - b) + (a - b).adjoint())));
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

struct FitOptions {
  int restarts = 10;
  long max_iterations = 50000;  // total across restarts
  std::uint64_t seed = 1;
  double improvement_tol = 1e-9;  // windowed relative improvement floor
  int checkpoint_interval = 64;
  const VecX* truth_pure = nullptr;
  const MatX* truth_density = nullptr;
};

struct MleOptions : FitOptions {
  int rank_cap = 0;  // 0 = unconstrained
};

namespace detail {

struct SparseProjector {
  int ih = -1, iv = -1;  // iv < 0 for computational projectors
  complexd weight;       // ket weight w of |m> = (e_H + w e_V)/sqrt2
  double scale = 1.0;
};

struct CompiledData {
  const CountDataset* data = nullptr;
  int dim = 0;
  std::vector<std::vector<SparseProjector>> proj;      // [family][m]
  std::vector<std::vector<std::vector<int>>> classes;  // [family][class][m]
};

inline CompiledData compile(const CountDataset& data) {
  CompiledData c;
  c.data = &data;
  c.dim = 2 * (2 * data.half_span + 1);
  c.proj.resize(data.settings.size());
  c.classes.resize(data.settings.size());
  for (std::size_t f = 0; f < data.settings.size(); ++f) {
    c.classes[f] = class_partition(data.settings[f]);
    for (const Projector& p : data.settings[f].projectors) {
      check_projector(p, data.half_span);
      SparseProjector sp;
      if (p.tag == PhaseTag::h) {
        sp.ih = basis_index(p.site_h, 0, data.half_span);
      } else if (p.tag == PhaseTag::v) {
        sp.ih = basis_index(p.site_v, 1, data.half_span);
      } else {
        sp.ih = basis_index(p.site_h, 0, data.half_span);
        sp.iv = basis_index(p.site_v, 1, data.half_span);
        sp.weight = tag_weight(p.tag);
        sp.scale = 1.0 / std::sqrt(2.0);
      }
      c.proj[f].push_back(sp);
    }
  }
  return c;
}

/// Accumulates log likelihood and alpha_m = dL/dp_m for one family.
inline void likelihood_weights(const CompiledData& c, std::size_t f,
                               const std::vector<double>& p, std::vector<double>* alpha,
                               double* ll) {
  const CountDataset& d = *c.data;
  for (const auto& cls : c.classes[f]) {
    double total = 0.0;
    long csum = 0;
    for (int m : cls) {
      total += p[m];
      csum += d.counts[f][m];
    }
    if (d.model == CountModel::multinomial) {
      if (csum == 0) continue;
      const double tot = std::max(total, 1e-300);
      for (int m : cls) {
        const long cm = d.counts[f][m];
        if (ll && cm > 0) *ll += cm * std::log(std::max(p[m], 1e-300));
        if (alpha)
          (*alpha)[m] = (cm > 0 ? cm / std::max(p[m], 1e-300) : 0.0) - csum / tot;
      }
      if (ll) *ll -= csum * std::log(tot);
    } else {
      const long loss = d.shots - csum;
      const double ploss = std::max(1.0 - total, 1e-300);
      for (int m : cls) {
        const long cm = d.counts[f][m];
        if (ll && cm > 0) *ll += cm * std::log(std::max(p[m], 1e-300));
        if (alpha)
          (*alpha)[m] = (cm > 0 ? cm / std::max(p[m], 1e-300) : 0.0) -
                        (loss > 0 ? static_cast<double>(loss) / ploss : 0.0);
      }
      if (ll && loss > 0) *ll += loss * std::log(ploss);
    }
  }
}

/// Armijo-backtracking gradient ascent over the factor T of rho = T^H T / tr.
/// Returns {log_likelihood, iterations, converged}; T is updated in place.
struct AscentOutcome {
  double log_likelihood = 0.0;
  long iterations = 0;
  bool converged = false;
};

inline AscentOutcome ascend_factor(const CompiledData& c, MatX& t, long max_iterations,
                                   double improvement_tol, int checkpoint_interval) {
  auto probs_of = [&](const MatX& m, double tau, std::size_t f, std::vector<double>& p) {
    p.resize(c.proj[f].size());
    for (std::size_t i = 0; i < c.proj[f].size(); ++i) {
      const auto& sp = c.proj[f][i];
      if (sp.iv >= 0)
        p[i] = (sp.scale * (m.col(sp.ih) + sp.weight * m.col(sp.iv))).squaredNorm() / tau;
      else
        p[i] = m.col(sp.ih).squaredNorm() / tau;
    }
  };
  auto eval = [&](const MatX& m, std::vector<std::vector<double>>& pstore) {
    const double tau = m.squaredNorm();
    double ll = 0.0;
    pstore.resize(c.proj.size());
    for (std::size_t f = 0; f < c.proj.size(); ++f) {
      probs_of(m, tau, f, pstore[f]);
      likelihood_weights(c, f, pstore[f], nullptr, &ll);
    }
    return ll;
  };

  std::vector<std::vector<double>> pcur, pnew;
  double ll = eval(t, pcur);
  double step = 1e-3;
  double checkpoint = ll;
  AscentOutcome out;
  for (; out.iterations < max_iterations; ++out.iterations) {
    const double tau = t.squaredNorm();
    MatX tg = MatX::Zero(t.rows(), t.cols());
    double alpha_dot_p = 0.0;
    std::vector<double> alpha;
    for (std::size_t f = 0; f < c.proj.size(); ++f) {
      alpha.assign(c.proj[f].size(), 0.0);
      likelihood_weights(c, f, pcur[f], &alpha, nullptr);
      for (std::size_t m = 0; m < c.proj[f].size(); ++m) {
        if (alpha[m] == 0.0) continue;
        const auto& sp = c.proj[f][m];
        if (sp.iv >= 0) {
          const VecX tm = sp.scale * (t.col(sp.ih) + sp.weight * t.col(sp.iv));
          tg.col(sp.ih) += sp.scale * (alpha[m] * tm);
          tg.col(sp.iv) += (sp.scale * std::conj(sp.weight) * alpha[m]) * tm;
        } else {
          tg.col(sp.ih) += alpha[m] * t.col(sp.ih);
        }
        alpha_dot_p += alpha[m] * pcur[f][m];
      }
    }
    const MatX grad = (tg - alpha_dot_p * t) / tau;
    const double gnorm2 = grad.squaredNorm();
    if (gnorm2 < 1e-24 * (1.0 + std::abs(ll))) {
      out.converged = true;
      break;
    }
    bool accepted = false;
    for (int bt = 0; bt < 48; ++bt) {
      const MatX trial = t + step * grad;
      const double ll_new = eval(trial, pnew);
      if (ll_new >= ll + 1e-4 * step * 2.0 * gnorm2) {
        t = trial;
        std::swap(pcur, pnew);
        ll = ll_new;
        step = std::min(step * 1.6, 1e6);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      out.converged = true;  // no ascent direction left at working precision
      break;
    }
    if (checkpoint_interval > 0 && (out.iterations + 1) % checkpoint_interval == 0) {
      if (ll - checkpoint < improvement_tol * (1.0 + std::abs(ll))) {
        out.converged = true;
        break;
      }
      checkpoint = ll;
    }
  }
  out.log_likelihood = ll;
  return out;
}

}  // namespace detail

/**
 * Global amplitude-and-phase fit of a pure state: gradient ascent with Armijo
 * backtracking over unnormalized complex amplitudes, seeded random restarts.
 * The global phase is fixed by making the largest amplitude real positive.
 * Equivalent to a rank-1 factor ascent.
 */
inline ReconstructionResult fit_wavefunction(const CountDataset& data, const FitOptions& opts = {}) {
  const detail::CompiledData c = detail::compile(data);
  const long per_restart = std::max<long>(1, opts.max_iterations / std::max(1, opts.restarts));

  ReconstructionResult best;
  best.log_likelihood = -std::numeric_limits<double>::infinity();
  long total_iters = 0;
  bool any_converged = false;
  for (int restart = 0; restart < std::max(1, opts.restarts); ++restart) {
    auto rng = seeded_stream(opts.seed, 0xF17ULL * (restart + 1));
    std::normal_distribution<double> gauss(0.0, 1.0);
    MatX t(1, c.dim);
    for (int i = 0; i < c.dim; ++i) t(0, i) = complexd(gauss(rng), gauss(rng));
    const auto outcome = detail::ascend_factor(c, t, per_restart, opts.improvement_tol,
                                               opts.checkpoint_interval);
    total_iters += outcome.iterations;
    if (outcome.log_likelihood > best.log_likelihood) {
      VecX psi = t.row(0).conjugate().transpose();  // T^H T = psi psi^H with psi = conj(row)
      psi.normalize();
      int imax = 0;
      for (int i = 1; i < c.dim; ++i)
        if (std::abs(psi(i)) > std::abs(psi(imax))) imax = i;
      psi *= std::polar(1.0, -std::arg(psi(imax)));
      best.amplitudes = psi;
      best.log_likelihood = outcome.log_likelihood;
      best.best_restart = restart;
      best.converged = outcome.converged;
    }
    any_converged = any_converged || outcome.converged;
  }
  best.iterations = total_iters;
  if (opts.truth_pure) best.fidelity = fidelity(best.amplitudes, *opts.truth_pure);
  if (!any_converged) throw convergence_failure(best);
  return best;
}

/**
 * Maximum-likelihood density fit with the factored parametrization
 * rho = T^H T / Tr(T^H T); the optional rank cap bounds the rows of T.
 * Physicality is structural (PSD, unit trace for every parameter value) and
 * accepted steps never decrease the likelihood.
 */
inline ReconstructionResult mle_density(const CountDataset& data, const MleOptions& opts = {}) {
  if (opts.rank_cap < 0) throw std::invalid_argument("mle_density: rank cap must be >= 1");
  const detail::CompiledData c = detail::compile(data);
  const int rank = opts.rank_cap == 0 ? c.dim : opts.rank_cap;
  const long per_restart = std::max<long>(1, opts.max_iterations / std::max(1, opts.restarts));

  ReconstructionResult best;
  best.log_likelihood = -std::numeric_limits<double>::infinity();
  long total_iters = 0;
  bool any_converged = false;
  for (int restart = 0; restart < std::max(1, opts.restarts); ++restart) {
    auto rng = seeded_stream(opts.seed, 0xD15ULL * (restart + 1));
    std::normal_distribution<double> gauss(0.0, 1.0);
    MatX t(rank, c.dim);
    if (restart == 0) {
      // Anchored start: identity-like factor plus a small seeded jitter. The
      // measurement families never see same-spin site coherences, so those
      // directions keep whatever the start gives them; anchoring near the
      // (sub)identity leaves them near zero instead of at random values.
      t = MatX::Zero(rank, c.dim);
      for (int r = 0; r < rank; ++r) t(r, r) = 1.0;
      for (int r = 0; r < rank; ++r)
        for (int i = 0; i < c.dim; ++i) t(r, i) += 1e-2 * complexd(gauss(rng), gauss(rng));
    } else {
      for (int r = 0; r < rank; ++r)
        for (int i = 0; i < c.dim; ++i) t(r, i) = complexd(gauss(rng), gauss(rng));
    }
    t /= std::sqrt(static_cast<double>(rank * c.dim));
    const auto outcome = detail::ascend_factor(c, t, per_restart, opts.improvement_tol,
                                               opts.checkpoint_interval);
    total_iters += outcome.iterations;
    // ties (flat likelihood orbits) keep the earliest fit, i.e. the anchored one
    if (!std::isfinite(best.log_likelihood) ||
        outcome.log_likelihood >
            best.log_likelihood + 1e-8 * (1.0 + std::abs(best.log_likelihood))) {
      best.t_factor = t;
      best.density = (t.adjoint() * t) / t.squaredNorm();
      best.log_likelihood = outcome.log_likelihood;
      best.best_restart = restart;
      best.converged = outcome.converged;
    }
    any_converged = any_converged || outcome.converged;
  }
  best.iterations = total_iters;
  if (opts.truth_density) best.fidelity = fidelity(best.density, *opts.truth_density);
  else if (opts.truth_pure) best.fidelity = fidelity(best.density, *opts.truth_pure);
  if (!any_converged) throw convergence_failure(best);
  return best;
}

struct GaugeOrbitOptions {
  int probes = 8;
  long probe_iterations = 400;
  double likelihood_tolerance = 1e-7;  // relative
  double kick = 0.25;
  std::uint64_t seed = 7;
};

/**
 * Perturbation probe of the likelihood-preserving orbit around a density fit:
 * kick the factor T, re-ascend briefly, and report the largest trace distance
 * among states whose likelihood matches the optimum. A nonzero diameter
 * exposes informational insufficiency of the measurement families (the 2N+1
 * interference families never touch same-spin site coherences).
 */
inline double gauge_orbit_diagnostic(const CountDataset& data, const ReconstructionResult& fit,
                                     const GaugeOrbitOptions& opts = {}) {
  if (fit.t_factor.size() == 0)
    throw std::invalid_argument("gauge_orbit_diagnostic: density fit required");
  const detail::CompiledData c = detail::compile(data);
  double diameter = 0.0;
  for (int probe = 0; probe < opts.probes; ++probe) {
    auto rng = seeded_stream(opts.seed, 0x9A06EULL * (probe + 1));
    std::normal_distribution<double> gauss(0.0, 1.0);
    MatX t = fit.t_factor;
    const double scale = opts.kick * std::sqrt(t.squaredNorm() / t.size());
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index i = 0; i < t.cols(); ++i) t(r, i) += scale * complexd(gauss(rng), gauss(rng));
    const auto outcome = detail::ascend_factor(c, t, opts.probe_iterations, 1e-13, 64);
    if (std::abs(outcome.log_likelihood - fit.log_likelihood) <=
        opts.likelihood_tolerance * (1.0 + std::abs(fit.log_likelihood))) {
      const MatX rho = (t.adjoint() * t) / t.squaredNorm();
      diameter = std::max(diameter, trace_distance(rho, fit.density));
    }
  }
  return diameter;
}

/// Row/column Fourier reduction of a real-space density matrix to per-node
/// 2x2 blocks, normalized to unit trace per node. The natural grid has one
/// node per lattice site; a larger pad_to_nodes value zero-pads the site
/// range, which refines the grid by interpolation (the padded nodes carry no
/// independent information).
inline DensityField momentum_density_field(const MatX& rho_real, int half_span,
                                           int pad_to_nodes = 0) {
  const int sites = 2 * half_span + 1;
  const int dim = 2 * sites;
  if (rho_real.rows() != dim || rho_real.cols() != dim)
    throw std::invalid_argument("momentum_density_field: dimension mismatch");
  const int nodes = pad_to_nodes > sites ? pad_to_nodes : sites;
  const MomentumGrid grid(nodes);
  DensityField out(grid);
  for (int j = 0; j < nodes; ++j) {
    const double k = grid.node(j);
    Mat2 block = Mat2::Zero();
    for (int x = -half_span; x <= half_span; ++x)
      for (int xp = -half_span; xp <= half_span; ++xp) {
        const complexd w = std::polar(1.0 / nodes, -k * (x - xp));
        for (int u = 0; u < 2; ++u)
          for (int up = 0; up < 2; ++up)
            block(u, up) += w * rho_real(basis_index(x, u, half_span),
                                         basis_index(xp, up, half_span));
      }
    const double tr = block.trace().real();
    if (tr < 1e-9) throw degenerate_momentum_weight_error(j);
    out.rho[j] = 0.5 * (block + block.adjoint()) / tr;
  }
  return out;
}

inline StateField momentum_state_field(const VecX& psi_real, int half_span) {
  const int sites = 2 * half_span + 1;
  if (psi_real.size() != 2 * sites)
    throw std::invalid_argument("momentum_state_field: dimension mismatch");
  std::vector<Vec2> site_spinors(sites);
  for (int x = -half_span; x <= half_span; ++x)
    site_spinors[x + half_span] = (Vec2() << psi_real(basis_index(x, 0, half_span)),
                                   psi_real(basis_index(x, 1, half_span)))
                                      .finished();
  StateField f = real_to_momentum(site_spinors);
  for (int j = 0; j < f.grid.size(); ++j) {
    const double n = f.amp[j].norm();
    if (n < 1e-9) throw degenerate_momentum_weight_error(j);
    f.amp[j] /= n;
  }
  return f;
}

/// Momentum-space geometric phase of a reconstruction: Uhlmann phase for
/// density fits, Berry phase for pure fits.
inline GeometricPhase phase_from_reconstruction(const ReconstructionResult& result,
                                                int half_span) {
  if (result.density.size() > 0)
    return uhlmann_phase(momentum_density_field(result.density, half_span));
  if (result.amplitudes.size() > 0)
    return berry_phase(momentum_state_field(result.amplitudes, half_span));
  throw std::invalid_argument("phase_from_reconstruction: empty result");
}

}  // namespace qwalk
