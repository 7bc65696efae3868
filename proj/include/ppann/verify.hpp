#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <future>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ppann/kinematics.hpp"
#include "ppann/pann.hpp"
#include "ppann/text_io.hpp"

namespace ppann {

/// Anything the probes can interrogate. PannModel satisfies it; so do the
/// doctored wrappers used as negative controls.
template <class M>
concept ConstitutiveModel = requires(const M& m, const DeformationGradient& F, const PolyArgs& xi,
                                     std::span<const double> t, std::size_t i) {
  { m.t_dim() } -> std::convertible_to<int>;
  { m.potential(F, t) } -> std::convertible_to<double>;
  { m.poly_potential(xi, t) } -> std::convertible_to<double>;
  { m.stress(F, t) } -> std::convertible_to<StressResult>;
  { m.potential_dt(F, t) } -> std::convertible_to<std::vector<double>>;
  { m.num_params() } -> std::convertible_to<std::size_t>;
  { m.stress_param_grad(F, t) } -> std::convertible_to<std::vector<Tensor2>>;
  { m.with_param_offset(i, 1.0) } -> std::convertible_to<M>;
};

struct ProbeConfig {
  std::uint64_t seed = 7;

  int symmetry_samples = 500;     // objectivity and isotropy
  int normalisation_samples = 100;
  int convexity_pairs = 1000;
  int growth_samples = 10;        // t values along the J -> 0 sequence
  int gradient_samples = 3;       // stress vs potential
  int param_gradient_samples = 2; // stress_param_grad vs stress
  int monotonicity_samples = 500;

  // F = I + f_scale * U[-1, 1]^{3x3}, rejected outside [det_min, det_max].
  double f_scale = 0.5;
  double det_min = 0.2;
  double det_max = 3.0;
  double poly_j_min = 0.2;
  double poly_j_max = 3.0;

  double tol_objectivity = 1e-10;
  double tol_angular_momentum = 1e-9;
  double tol_normalisation = 1e-8;
  double tol_convexity = 1e-9;
  double tol_monotonicity = 1e-9;
  double tol_stress_fd = 1e-6;
  double tol_param_fd = 1e-5;
  double fd_step = 1e-6;
  double growth_bound = 1e3;

  void validate() const {
    const double tols[] = {tol_objectivity, tol_angular_momentum, tol_normalisation, tol_convexity,
                           tol_monotonicity, tol_stress_fd,        tol_param_fd,      fd_step,
                           growth_bound};
    for (double v : tols)
      if (!(v > 0.0)) throw std::invalid_argument("probe tolerances must be positive");
    const int counts[] = {symmetry_samples,  normalisation_samples,  convexity_pairs,     growth_samples,
                          gradient_samples, param_gradient_samples, monotonicity_samples};
    for (int n : counts)
      if (n < 0) throw std::invalid_argument("probe sample counts must be non-negative");
    if (!(f_scale > 0.0) || !(det_min > 0.0) || !(det_max > det_min))
      throw std::invalid_argument("invalid F-sampling region");
    if (!(poly_j_min > 0.0) || !(poly_j_max > poly_j_min)) throw std::invalid_argument("invalid J range");
  }
};

/// Outcome of one property. `worst` is the largest measured deviation in the
/// units the tolerance is expressed in.
struct ProbeReport {
  std::string property;
  bool passed = true;
  bool no_evidence = false;  // zero samples: vacuous pass
  bool required = true;
  int samples = 0;
  double worst = 0.0;
  double tolerance = 0.0;
  std::string witness;

  std::string to_text() const {
    std::ostringstream os;
    os << property << ": " << (passed ? "PASS" : "FAIL");
    if (no_evidence) os << " (no evidence)";
    if (!required) os << " (informative)";
    os << " samples=" << samples << " worst=" << format_double(worst) << " tol=" << format_double(tolerance)
       << "\n";
    if (!witness.empty()) os << "  witness: " << witness << "\n";
    return os.str();
  }
};

struct VerifyReport {
  std::vector<ProbeReport> probes;

  bool passed() const {
    return std::all_of(probes.begin(), probes.end(), [](const ProbeReport& p) { return p.passed || !p.required; });
  }

  std::string to_text() const {
    std::string s;
    for (const auto& p : probes) s += p.to_text();
    s += std::string("overall: ") + (passed() ? "PASS" : "FAIL") + "\n";
    return s;
  }
};

namespace detail {

// Per-probe streams so that each check is reproducible on its own.
inline std::mt19937_64 probe_rng(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{seed, salt};
  return std::mt19937_64(seq);
}

inline std::string fmt_tensor(const Tensor2& A) {
  std::string s = "[";
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) s += (i || j ? " " : "") + format_double(A(i, j));
  return s + "]";
}

inline std::string fmt_vec(std::span<const double> v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + format_double(v[i]);
  return s + "]";
}

inline std::vector<double> sample_t(std::mt19937_64& rng, int dim) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> t(static_cast<std::size_t>(dim));
  for (double& v : t) v = u(rng);
  return t;
}

inline DeformationGradient sample_F(std::mt19937_64& rng, const ProbeConfig& c) {
  return random_deformation(rng, c.f_scale, c.det_min, c.det_max);
}

inline std::string header(const ProbeConfig& c, std::uint64_t salt, int k) {
  return "seed=" + std::to_string(c.seed) + " probe=" + std::to_string(salt) + " sample=" + std::to_string(k);
}

// Track the worst deviation; remember the first failing input.
struct Tracker {
  ProbeReport r;
  void observe(double dev, const std::function<std::string()>& witness) {
    if (!std::isfinite(dev)) dev = std::numeric_limits<double>::infinity();
    if (dev > r.worst) r.worst = dev;
    if (dev > r.tolerance && r.passed) {
      r.passed = false;
      r.witness = witness();
    }
  }
  ProbeReport finish(int n) {
    r.samples = n;
    r.no_evidence = n == 0;
    return r;
  }
};

inline Tracker start(std::string name, double tol) {
  Tracker t;
  t.r.property = std::move(name);
  t.r.tolerance = tol;
  return t;
}

}  // namespace detail

/// psi(QF) = psi(F) for random rotations; P F^T symmetric at every sample.
template <ConstitutiveModel M>
ProbeReport check_objectivity(const M& m, const ProbeConfig& c) {
  c.validate();
  constexpr std::uint64_t salt = 1;
  auto rng = detail::probe_rng(c.seed, salt);
  auto tr = detail::start("objectivity", c.tol_objectivity);
  // Angular momentum is scored in units of its own tolerance so one report covers both.
  const double am_ratio = c.tol_objectivity / c.tol_angular_momentum;
  for (int k = 0; k < c.symmetry_samples; ++k) {
    const DeformationGradient F = detail::sample_F(rng, c);
    const Tensor2 Q = random_rotation(rng);
    const auto t = detail::sample_t(rng, m.t_dim());
    const double a = m.potential(F, t);
    const double b = m.potential(DeformationGradient(Q * F.tensor()), t);
    const auto wit = [&] {
      return detail::header(c, salt, k) + " F=" + detail::fmt_tensor(F.tensor()) + " Q=" + detail::fmt_tensor(Q) +
             " t=" + detail::fmt_vec(t);
    };
    tr.observe(std::abs(a - b) / std::max(1.0, std::abs(a)), wit);
    const Tensor2 PFt = m.stress(F, t).P * F.tensor().transpose();
    const double skew = (PFt - PFt.transpose()).norm() / std::max(1.0, PFt.norm());
    tr.observe(skew * am_ratio, [&] { return wit() + " (angular momentum)"; });
  }
  return tr.finish(c.symmetry_samples);
}

/// psi(F Q^T) = psi(F) for random rotations.
template <ConstitutiveModel M>
ProbeReport check_isotropy(const M& m, const ProbeConfig& c) {
  c.validate();
  constexpr std::uint64_t salt = 2;
  auto rng = detail::probe_rng(c.seed, salt);
  auto tr = detail::start("isotropy", c.tol_objectivity);
  for (int k = 0; k < c.symmetry_samples; ++k) {
    const DeformationGradient F = detail::sample_F(rng, c);
    const Tensor2 Q = random_rotation(rng);
    const auto t = detail::sample_t(rng, m.t_dim());
    const double a = m.potential(F, t);
    const double b = m.potential(DeformationGradient(F.tensor() * Q.transpose()), t);
    tr.observe(std::abs(a - b) / std::max(1.0, std::abs(a)), [&] {
      return detail::header(c, salt, k) + " F=" + detail::fmt_tensor(F.tensor()) + " Q=" + detail::fmt_tensor(Q) +
             " t=" + detail::fmt_vec(t);
    });
  }
  return tr.finish(c.symmetry_samples);
}

/// ||P(I; t)||_inf over sampled t.
template <ConstitutiveModel M>
ProbeReport check_normalisation(const M& m, const ProbeConfig& c) {
  c.validate();
  constexpr std::uint64_t salt = 3;
  auto rng = detail::probe_rng(c.seed, salt);
  auto tr = detail::start("normalisation", c.tol_normalisation);
  const DeformationGradient I(Tensor2::Identity());
  for (int k = 0; k < c.normalisation_samples; ++k) {
    const auto t = detail::sample_t(rng, m.t_dim());
    tr.observe(m.stress(I, t).P.cwiseAbs().maxCoeff(),
               [&] { return detail::header(c, salt, k) + " F=I t=" + detail::fmt_vec(t); });
  }
  return tr.finish(c.normalisation_samples);
}

/// Midpoint convexity of xi = (F, H, J) -> psi over independent random pairs.
template <ConstitutiveModel M>
ProbeReport check_polyconvexity(const M& m, const ProbeConfig& c) {
  c.validate();
  constexpr std::uint64_t salt = 4;
  auto rng = detail::probe_rng(c.seed, salt);
  std::uniform_real_distribution<double> u(-1.0, 1.0), uj(c.poly_j_min, c.poly_j_max);
  const auto draw = [&] {
    PolyArgs xi;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        xi.F(i, j) += c.f_scale * u(rng);
        xi.H(i, j) += c.f_scale * u(rng);
      }
    xi.J = uj(rng);
    return xi;
  };
  auto tr = detail::start("polyconvexity", c.tol_convexity);
  for (int k = 0; k < c.convexity_pairs; ++k) {
    const PolyArgs a = draw(), b = draw();
    const auto t = detail::sample_t(rng, m.t_dim());
    const PolyArgs mid{0.5 * (a.F + b.F), 0.5 * (a.H + b.H), 0.5 * (a.J + b.J)};
    const double fa = m.poly_potential(a, t), fb = m.poly_potential(b, t), fm = m.poly_potential(mid, t);
    const double scale = std::max({1.0, std::abs(fa), std::abs(fb), std::abs(fm)});
    tr.observe((fm - 0.5 * (fa + fb)) / scale, [&] {
      return detail::header(c, salt, k) + " Fa=" + detail::fmt_tensor(a.F) + " Ha=" + detail::fmt_tensor(a.H) +
             " Ja=" + format_double(a.J) + " Fb=" + detail::fmt_tensor(b.F) + " Hb=" + detail::fmt_tensor(b.H) +
             " Jb=" + format_double(b.J) + " t=" + detail::fmt_vec(t);
    });
  }
  return tr.finish(c.convexity_pairs);
}

inline constexpr double kGrowthSequence[] = {0.5, 0.2, 0.1, 0.05, 0.01};
inline constexpr double kGrowthProbeJ = 1e-3;

/// psi strictly increasing along F = J^(1/3) I as J -> 0, and above the bound at J = 1e-3.
/// Deviation: largest non-increase, or the relative shortfall below the bound.
template <ConstitutiveModel M>
ProbeReport check_growth(const M& m, const ProbeConfig& c) {
  c.validate();
  constexpr std::uint64_t salt = 5;
  auto rng = detail::probe_rng(c.seed, salt);
  auto tr = detail::start("growth", 0.0);  // any non-increase fails
  constexpr double tiny = std::numeric_limits<double>::min();
  const auto at = [&](double J, std::span<const double> t) {
    return m.potential(DeformationGradient(std::cbrt(J) * Tensor2::Identity()), t);
  };
  for (int k = 0; k < c.growth_samples; ++k) {
    const auto t = detail::sample_t(rng, m.t_dim());
    double prev = at(kGrowthSequence[0], t);
    for (std::size_t s = 1; s < std::size(kGrowthSequence); ++s) {
      const double cur = at(kGrowthSequence[s], t);
      tr.observe(cur > prev ? 0.0 : prev - cur + tiny, [&] {
        return detail::header(c, salt, k) + " J=" + format_double(kGrowthSequence[s]) + " t=" + detail::fmt_vec(t) +
               " psi does not increase";
      });
      prev = cur;
    }
    const double end = at(kGrowthProbeJ, t);
    tr.observe(end > c.growth_bound ? 0.0 : (c.growth_bound - end) / c.growth_bound + tiny, [&] {
      return detail::header(c, salt, k) + " J=" + format_double(kGrowthProbeJ) + " t=" + detail::fmt_vec(t) +
             " psi=" + format_double(end) + " below bound";
    });
  }
  return tr.finish(c.growth_samples);
}

/// Central differences: stress against the potential, and dP/dtheta against the
/// stress. Errors are normwise relative to the exact quantity.
template <ConstitutiveModel M>
ProbeReport check_gradients(const M& m, const ProbeConfig& c) {
  c.validate();
  constexpr std::uint64_t salt = 6;
  auto rng = detail::probe_rng(c.seed, salt);
  auto tr = detail::start("gradients", c.tol_stress_fd);
  const double h = c.fd_step;
  // Keep samples comfortably inside det F > 0 so the stencil never leaves the domain.
  ProbeConfig inner = c;
  inner.f_scale = std::min(c.f_scale, 0.3);
  inner.det_min = std::max(c.det_min, 0.3);
  for (int k = 0; k < c.gradient_samples; ++k) {
    const DeformationGradient F = detail::sample_F(rng, inner);
    const auto t = detail::sample_t(rng, m.t_dim());
    const Tensor2 P = m.stress(F, t).P;
    Tensor2 fd;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        Tensor2 Fp = F.tensor(), Fm = F.tensor();
        Fp(i, j) += h;
        Fm(i, j) -= h;
        fd(i, j) = (m.potential(DeformationGradient(Fp), t) - m.potential(DeformationGradient(Fm), t)) / (2 * h);
      }
    tr.observe((P - fd).norm() / std::max(1.0, P.norm()), [&] {
      return detail::header(c, salt, k) + " F=" + detail::fmt_tensor(F.tensor()) + " t=" + detail::fmt_vec(t) +
             " (stress vs potential)";
    });
  }
  // Parameter path, scored in units of the stress tolerance.
  const double ratio = c.tol_stress_fd / c.tol_param_fd;
  const std::size_t n = m.num_params();
  for (int k = 0; k < c.param_gradient_samples; ++k) {
    const DeformationGradient F = detail::sample_F(rng, inner);
    const auto t = detail::sample_t(rng, m.t_dim());
    const auto exact = m.stress_param_grad(F, t);
    if (exact.size() != n) {
      tr.observe(std::numeric_limits<double>::infinity(),
                 [&] { return detail::header(c, salt, k) + " stress_param_grad has the wrong length"; });
      continue;
    }
    double err = 0.0, ref = 0.0;
    std::size_t worst_i = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor2 fd = (m.with_param_offset(i, h).stress(F, t).P - m.with_param_offset(i, -h).stress(F, t).P) / (2 * h);
      const double e = (exact[i] - fd).norm();
      if (e > err) {
        err = e;
        worst_i = i;
      }
      ref = std::max(ref, exact[i].norm());
    }
    tr.observe(err / std::max(ref, 1e-12) * ratio, [&] {
      return detail::header(c, salt, k) + " F=" + detail::fmt_tensor(F.tensor()) + " t=" + detail::fmt_vec(t) +
             " param=" + std::to_string(worst_i) + " (stress_param_grad vs stress)";
    });
  }
  tr.r.samples = c.gradient_samples + c.param_gradient_samples;
  return tr.finish(tr.r.samples);
}

/// dpsi/dt_i >= -tol at sampled (F, t), and psi(F, t1) <= psi(F, t2) for t1 <= t2.
template <ConstitutiveModel M>
ProbeReport check_monotonicity_params(const M& m, const ProbeConfig& c) {
  c.validate();
  constexpr std::uint64_t salt = 7;
  auto rng = detail::probe_rng(c.seed, salt);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto tr = detail::start("monotonicity", c.tol_monotonicity);
  for (int k = 0; k < c.monotonicity_samples; ++k) {
    const DeformationGradient F = detail::sample_F(rng, c);
    const auto t1 = detail::sample_t(rng, m.t_dim());
    auto t2 = t1;
    for (double& v : t2) v += (1.0 - v) * u(rng);
    const auto wit = [&] {
      return detail::header(c, salt, k) + " F=" + detail::fmt_tensor(F.tensor()) + " t1=" + detail::fmt_vec(t1) +
             " t2=" + detail::fmt_vec(t2);
    };
    for (double d : m.potential_dt(F, t1)) tr.observe(-d, [&] { return wit() + " (derivative at t1)"; });
    const double a = m.potential(F, t1), b = m.potential(F, t2);
    tr.observe((a - b) / std::max(1.0, std::abs(a)), [&] { return wit() + " (pairwise)"; });
  }
  return tr.finish(c.monotonicity_samples);
}

/// The six structural checks, plus monotonicity when requested. Probes run
/// concurrently when workers > 1; the report order is fixed.
template <ConstitutiveModel M>
VerifyReport run_all(const M& m, const ProbeConfig& c, bool monotone_required, int workers = 1) {
  c.validate();
  using Check = ProbeReport (*)(const M&, const ProbeConfig&);
  const Check checks[] = {&check_objectivity<M>, &check_isotropy<M>, &check_normalisation<M>,
                          &check_polyconvexity<M>, &check_growth<M>, &check_gradients<M>,
                          &check_monotonicity_params<M>};
  VerifyReport out;
  out.probes.resize(std::size(checks));
  if (workers > 1) {
    std::vector<std::future<ProbeReport>> fut;
    for (Check f : checks) fut.push_back(std::async(std::launch::async, f, std::cref(m), std::cref(c)));
    for (std::size_t i = 0; i < fut.size(); ++i) out.probes[i] = fut[i].get();
  } else {
    for (std::size_t i = 0; i < std::size(checks); ++i) out.probes[i] = checks[i](m, c);
  }
  out.probes.back().required = monotone_required;
  return out;
}

/// Monotonicity is a required property only for Type1M-backed models.
inline VerifyReport run_all(const PannModel& m, const ProbeConfig& c, int workers = 1) {
  return run_all(m, c, m.net.config().kind == Architecture::Type1M, workers);
}

}  // namespace ppann
