#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ppann/kinematics.hpp"
#include "ppann/text_io.hpp"

namespace ppann {

// ---------------------------------------------------------------------------
// Parametrised Neo-Hookean ground truth
// ---------------------------------------------------------------------------

struct NeoHookeMaterial {
  double mu = 1.0;
  double lambda = 1.0;
};

enum class ScalarCase { A, B, C };

inline ScalarCase parse_scalar_case(std::string_view s) {
  if (s == "A" || s == "a") return ScalarCase::A;
  if (s == "B" || s == "b") return ScalarCase::B;
  if (s == "C" || s == "c") return ScalarCase::C;
  throw std::invalid_argument("unknown parametrisation case '" + std::string(s) + "'");
}

inline std::string to_string(ScalarCase c) {
  switch (c) {
    case ScalarCase::A: return "A";
    case ScalarCase::B: return "B";
    case ScalarCase::C: return "C";
  }
  return "?";
}

inline constexpr double kBulkModulus = 100.0;
inline constexpr double kPrintLambda = 100.0;

inline void require_unit_interval(double t, const char* what) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError(std::string(what) + ": parameter outside [0, 1]");
}

inline double mu_scalar(ScalarCase c, double t) {
  require_unit_interval(t, "mu_scalar");
  switch (c) {
    case ScalarCase::A: return 0.5 + 2.0 * t;
    case ScalarCase::B: return 8.0 * t * t - 8.0 * t + 2.5;
    case ScalarCase::C: return -8.0 * t * t + 8.0 * t + 0.5;
  }
  return 0.0;
}

/// Constant bulk modulus: lambda = kappa - 2/3 mu.
inline double lambda_scalar(ScalarCase c, double t) { return kBulkModulus - 2.0 / 3.0 * mu_scalar(c, t); }

inline NeoHookeMaterial scalar_material(ScalarCase c, double t) { return {mu_scalar(c, t), lambda_scalar(c, t)}; }

/// Printing-process parametrisation: mu = 2.5 tanh(1.7 G^2 ln tau), G = 0.6 + 0.4 G0, tau = 1.5 + 4.5 tau0.
inline double mu_print(double G0, double tau0) {
  require_unit_interval(G0, "mu_print");
  require_unit_interval(tau0, "mu_print");
  const double G = 0.6 + 0.4 * G0;
  const double tau = 1.5 + 4.5 * tau0;
  return 2.5 * std::tanh(1.7 * G * G * std::log(tau));
}

inline NeoHookeMaterial print_material(double G0, double tau0) { return {mu_print(G0, tau0), kPrintLambda}; }

/// psi = mu/2 (I1 - 3 - 2 ln J) + lambda/2 (J - 1)^2
inline double nh_potential(const NeoHookeMaterial& m, const DeformationGradient& F) {
  const double J = F.det();
  return 0.5 * m.mu * (F.tensor().squaredNorm() - 3.0 - 2.0 * std::log(J)) + 0.5 * m.lambda * (J - 1.0) * (J - 1.0);
}

namespace detail {
// P = mu (F - F^{-T}) + lambda J (J - 1) F^{-T}, with J F^{-T} = Cof F.
inline Tensor2 nh_stress_raw(const NeoHookeMaterial& m, const Tensor2& F) {
  const Tensor2 cof = cofactor(F);
  const double J = F.determinant();
  return m.mu * F + (m.lambda * (J - 1.0) - m.mu / J) * cof;
}
}  // namespace detail

inline Tensor2 nh_stress(const NeoHookeMaterial& m, const DeformationGradient& F) {
  return detail::nh_stress_raw(m, F.tensor());
}

// ---------------------------------------------------------------------------
// Load cases
// ---------------------------------------------------------------------------

inline constexpr double kResidualTol = 1e-12;

/// Root of a scalar residual: Newton with a central-difference slope and
/// step halving on residual increase, bisection on [0.3, 3] as fallback.
template <class Residual>
double solve_stretch(Residual&& residual, const char* what) {
  constexpr double h = 1e-7;
  double s = 1.0;
  double r = residual(s);
  for (int it = 0; it < 100 && std::abs(r) > kResidualTol; ++it) {
    const double slope = (residual(s + h) - residual(s - h)) / (2.0 * h);
    if (!(std::abs(slope) > 0.0) || !std::isfinite(slope)) break;
    const double step = -r / slope;
    double alpha = 1.0;
    double s_new = s;
    double r_new = r;
    for (int k = 0; k < 40; ++k) {
      s_new = s + alpha * step;
      if (s_new > 0.0) {
        r_new = residual(s_new);
        if (std::abs(r_new) < std::abs(r)) break;
      }
      alpha *= 0.5;
    }
    if (!(s_new > 0.0) || std::abs(r_new) >= std::abs(r)) break;
    s = s_new;
    r = r_new;
  }
  if (std::abs(r) <= kResidualTol) return s;

  double lo = 0.3, hi = 3.0;
  double rlo = residual(lo), rhi = residual(hi);
  if (rlo * rhi > 0.0) throw SolverError(std::string(what) + ": no sign change on [0.3, 3]");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double rm = residual(mid);
    if (std::abs(rm) <= kResidualTol) return mid;
    if ((rm < 0.0) == (rlo < 0.0)) {
      lo = mid;
      rlo = rm;
    } else {
      hi = mid;
    }
    if (hi - lo <= 4e-16 * hi) break;
  }
  throw SolverError(std::string(what) + ": did not reach the residual tolerance");
}

inline void require_stretch_range(double F11) {
  if (!(F11 >= 0.5 && F11 <= 1.5)) throw DomainError("load stretch outside [0.5, 1.5]");
}

/// Uniaxial stress along x: F = diag(F11, s, s) with P22 = P33 = 0.
inline DeformationGradient solve_uniaxial(const NeoHookeMaterial& m, double F11) {
  require_stretch_range(F11);
  const double s = solve_stretch(
      [&](double v) { return detail::nh_stress_raw(m, Eigen::Vector3d(F11, v, v).asDiagonal().toDenseMatrix())(1, 1); },
      "solve_uniaxial");
  return DeformationGradient(Eigen::Vector3d(F11, s, s).asDiagonal().toDenseMatrix());
}

/// Equibiaxial stress in x-y: F = diag(F11, F11, c) with P33 = 0.
inline DeformationGradient solve_equibiaxial(const NeoHookeMaterial& m, double F11) {
  require_stretch_range(F11);
  const double c = solve_stretch(
      [&](double v) { return detail::nh_stress_raw(m, Eigen::Vector3d(F11, F11, v).asDiagonal().toDenseMatrix())(2, 2); },
      "solve_equibiaxial");
  return DeformationGradient(Eigen::Vector3d(F11, F11, c).asDiagonal().toDenseMatrix());
}

inline DeformationGradient shear_F(double gamma) {
  Tensor2 F = Tensor2::Identity();
  F(0, 1) = gamma;
  return DeformationGradient(F);
}

/// Combined tension and shear: F = I + gamma (e1 x e1 + e1 x e2).
inline DeformationGradient mixed_F(double gamma) {
  Tensor2 F = Tensor2::Identity();
  F(0, 0) += gamma;
  F(0, 1) = gamma;
  return DeformationGradient(F);
}

enum class LoadPath : int { Uniaxial = 0, Equibiaxial = 1, SimpleShear = 2, MixedShearTension = 3 };

inline std::string to_string(LoadPath p) {
  switch (p) {
    case LoadPath::Uniaxial: return "uniaxial";
    case LoadPath::Equibiaxial: return "equibiaxial";
    case LoadPath::SimpleShear: return "shear";
    case LoadPath::MixedShearTension: return "mixed";
  }
  return "?";
}

struct LoadCase {
  LoadPath kind = LoadPath::Uniaxial;
  double lo = 0.5;
  double hi = 1.5;
  int points = 101;

  double control(int k) const { return lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1); }

  static LoadCase standard(LoadPath kind) {
    switch (kind) {
      case LoadPath::Uniaxial: return {kind, 0.5, 1.5, 101};
      case LoadPath::Equibiaxial: return {kind, 0.5, 1.5, 101};
      case LoadPath::SimpleShear: return {kind, -0.5, 0.5, 101};
      case LoadPath::MixedShearTension: return {kind, 0.0, 0.5, 101};
    }
    return {};
  }

  DeformationGradient deformation(const NeoHookeMaterial& m, int k) const {
    const double c = control(k);
    switch (kind) {
      case LoadPath::Uniaxial: return solve_uniaxial(m, c);
      case LoadPath::Equibiaxial: return solve_equibiaxial(m, c);
      case LoadPath::SimpleShear: return shear_F(c);
      case LoadPath::MixedShearTension: return mixed_F(c);
    }
    return DeformationGradient(Tensor2::Identity());
  }
};

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct DataTuple {
  Tensor2 F = Tensor2::Identity();
  std::vector<double> t;
  Tensor2 P = Tensor2::Zero();
  int load_path = 0;
  int t_id = 0;

  bool operator==(const DataTuple& o) const {
    return F == o.F && t == o.t && P == o.P && load_path == o.load_path && t_id == o.t_id;
  }
};

struct Dataset {
  int t_dim = 1;
  std::vector<DataTuple> tuples;

  std::size_t size() const { return tuples.size(); }
  bool operator==(const Dataset&) const = default;
};

enum class DataRole { Calibration, Test };

/// One parameter sample: identifier, parameter vector and ground-truth material.
struct ParameterSample {
  int id = 0;
  std::vector<double> t;
  NeoHookeMaterial material;
};

/// Ordering: load path major, then parameter sample, then control point.
inline Dataset build_dataset(std::span<const LoadPath> paths, std::span<const ParameterSample> samples, int t_dim) {
  Dataset d;
  d.t_dim = t_dim;
  d.tuples.reserve(paths.size() * samples.size() * 101);
  for (LoadPath p : paths) {
    const LoadCase lc = LoadCase::standard(p);
    for (const auto& s : samples) {
      for (int k = 0; k < lc.points; ++k) {
        DataTuple tup;
        const DeformationGradient F = lc.deformation(s.material, k);
        tup.F = F.tensor();
        tup.t = s.t;
        tup.P = nh_stress(s.material, F);
        tup.load_path = static_cast<int>(p);
        tup.t_id = s.id;
        d.tuples.push_back(std::move(tup));
      }
    }
  }
  return d;
}

/// Shared 201-point grid for the scalar parameter: t_j = j / 200.
inline constexpr int kScalarGridPoints = 201;
inline double scalar_grid_value(int j) { return static_cast<double>(j) / 200.0; }

inline constexpr LoadPath kCalibrationPaths[] = {LoadPath::Uniaxial, LoadPath::Equibiaxial, LoadPath::SimpleShear};
inline constexpr LoadPath kTestPaths[] = {LoadPath::MixedShearTension};

inline Dataset build_scalar_study(ScalarCase c, DataRole role, std::span<const int> calibration_ids) {
  std::vector<ParameterSample> samples;
  for (int j = 0; j < kScalarGridPoints; ++j) {
    const bool in_calib = std::find(calibration_ids.begin(), calibration_ids.end(), j) != calibration_ids.end();
    if (in_calib != (role == DataRole::Calibration)) continue;
    const double t = scalar_grid_value(j);
    samples.push_back({j, {t}, scalar_material(c, t)});
  }
  if (role == DataRole::Calibration) return build_dataset(kCalibrationPaths, samples, 1);
  return build_dataset(kTestPaths, samples, 1);
}

/// t in {0, 0.2, 0.4, 0.6, 0.8, 1} for calibration, the other 195 grid values for testing.
inline Dataset build_study1(ScalarCase c, DataRole role) {
  static constexpr int ids[] = {0, 40, 80, 120, 160, 200};
  return build_scalar_study(c, role, ids);
}

/// t in {0, 0.1, 0.9, 1} for calibration (case A), the other 197 grid values for testing.
inline Dataset build_study2(DataRole role, ScalarCase c = ScalarCase::A) {
  static constexpr int ids[] = {0, 20, 180, 200};
  return build_scalar_study(c, role, ids);
}

inline constexpr double kIsoCurveMu[] = {1.4, 2.4};
inline constexpr int kIsoCurveSamples = 100;

/// Admissible G0 interval of the mu-iso-curve (tau0 must stay in [0, 1]).
inline std::pair<double, double> iso_curve_range(double mu_target) {
  const double H = std::atanh(mu_target / 2.5);
  // tau = exp(H / (1.7 G^2)) in [1.5, 6]  <=>  G^2 in [H / (1.7 ln 6), H / (1.7 ln 1.5)]
  const double G_lo = std::sqrt(H / (1.7 * std::log(6.0)));
  const double G_hi = std::sqrt(H / (1.7 * std::log(1.5)));
  const double lo = std::clamp((G_lo - 0.6) / 0.4, 0.0, 1.0);
  const double hi = std::clamp((G_hi - 0.6) / 0.4, 0.0, 1.0);
  return {lo, hi};
}

inline double iso_curve_tau0(double mu_target, double G0) {
  const double H = std::atanh(mu_target / 2.5);
  const double G = 0.6 + 0.4 * G0;
  return std::clamp((std::exp(H / (1.7 * G * G)) - 1.5) / 4.5, 0.0, 1.0);
}

/// Parameter samples of the vector study. Calibration: {0, 0.5, 1}^2 (id = 3 i + j).
/// Test: 100 equidistant G0 values per mu-iso-curve (id = 100 curve + k).
inline std::vector<ParameterSample> vector_study_samples(DataRole role) {
  std::vector<ParameterSample> samples;
  if (role == DataRole::Calibration) {
    const double grid[] = {0.0, 0.5, 1.0};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) samples.push_back({3 * i + j, {grid[i], grid[j]}, print_material(grid[i], grid[j])});
    return samples;
  }
  for (int c = 0; c < 2; ++c) {
    const auto [lo, hi] = iso_curve_range(kIsoCurveMu[c]);
    for (int k = 0; k < kIsoCurveSamples; ++k) {
      const double G0 = lo + (hi - lo) * static_cast<double>(k) / (kIsoCurveSamples - 1);
      const double tau0 = iso_curve_tau0(kIsoCurveMu[c], G0);
      samples.push_back({kIsoCurveSamples * c + k, {G0, tau0}, print_material(G0, tau0)});
    }
  }
  return samples;
}

inline Dataset build_vector_study(DataRole role) {
  const auto samples = vector_study_samples(role);
  if (role == DataRole::Calibration) return build_dataset(kCalibrationPaths, samples, 2);
  return build_dataset(kTestPaths, samples, 2);
}

// ---------------------------------------------------------------------------
// CSV persistence
// ---------------------------------------------------------------------------

inline std::string csv_header(int t_dim) {
  std::string h;
  for (int i = 1; i <= 3; ++i)
    for (int j = 1; j <= 3; ++j) h += "F" + std::to_string(i) + std::to_string(j) + ",";
  for (int i = 1; i <= t_dim; ++i) h += "t" + std::to_string(i) + ",";
  for (int i = 1; i <= 3; ++i)
    for (int j = 1; j <= 3; ++j) h += "P" + std::to_string(i) + std::to_string(j) + ",";
  h += "load_path_id,t_id";
  return h;
}

inline std::string to_csv(const Dataset& d) {
  std::string out = csv_header(d.t_dim) + "\n";
  out.reserve(d.tuples.size() * 400);
  for (const auto& tup : d.tuples) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out += format_double(tup.F(i, j)) + ",";
    for (double v : tup.t) out += format_double(v) + ",";
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out += format_double(tup.P(i, j)) + ",";
    out += std::to_string(tup.load_path) + "," + std::to_string(tup.t_id) + "\n";
  }
  return out;
}

inline Dataset from_csv(std::string_view text) {
  Dataset d;
  std::size_t pos = text.find('\n');
  if (pos == std::string_view::npos) throw IoError("dataset CSV: missing header");
  std::string_view header = text.substr(0, pos);
  if (!header.empty() && header.back() == '\r') header.remove_suffix(1);
  const auto cols = split(header, ',');
  const int t_dim = static_cast<int>(cols.size()) - 20;
  if (t_dim < 1 || header != csv_header(t_dim)) throw IoError("dataset CSV: unexpected header");
  d.t_dim = t_dim;
  std::size_t start = pos + 1;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    if (line.empty() || line == "\r") continue;
    const auto f = split(line, ',');
    if (f.size() != cols.size()) throw IoError("dataset CSV: wrong number of fields");
    DataTuple tup;
    std::size_t c = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) tup.F(i, j) = parse_double(f[c++]);
    for (int i = 0; i < t_dim; ++i) tup.t.push_back(parse_double(f[c++]));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) tup.P(i, j) = parse_double(f[c++]);
    tup.load_path = static_cast<int>(parse_int(f[c++]));
    tup.t_id = static_cast<int>(parse_int(f[c++]));
    if (!(tup.F.determinant() > 0.0)) throw IoError("dataset CSV: tuple with det F <= 0");
    d.tuples.push_back(std::move(tup));
  }
  return d;
}

inline void write_csv(const Dataset& d, const std::string& path) { write_file(path, to_csv(d)); }
inline Dataset read_csv(const std::string& path) { return from_csv(read_file(path)); }

}  // namespace ppann
