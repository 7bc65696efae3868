#pragma once

// Doctored models that each break exactly one constitutive property. The
// verification suite must reject every one of them.

#include <span>
#include <string>
#include <vector>

#include "ppann/pann.hpp"

namespace ppann::mutants {

/// Freshly initialised PANN model of the default size for the architecture.
inline PannModel fresh(Architecture a, std::uint64_t seed, double scale = 1.0) {
  const int yd = a == Architecture::Type1M ? 2 : 1;
  return PannModel(Picnn::initialized(default_config(a, yd), seed), scale);
}

enum class Defect {
  ReadsF11,     // psi += c F11: observer-dependent
  ReadsC11,     // psi += c C11: direction-dependent
  BadParamGrad, // dP/dtheta off by 1 %
};

inline std::string to_string(Defect d) {
  switch (d) {
    case Defect::ReadsF11: return "reads-F11";
    case Defect::ReadsC11: return "reads-C11";
    default: return "bad-param-grad";
  }
}

/// Wraps a PANN model and applies the defect consistently to potential and stress.
struct Doctored {
  PannModel base;
  Defect defect = Defect::ReadsF11;
  double c = 0.1;

  int t_dim() const { return base.t_dim(); }
  std::size_t num_params() const { return base.num_params(); }

  double extra(const Tensor2& F) const {
    switch (defect) {
      case Defect::ReadsF11: return c * F(0, 0);
      case Defect::ReadsC11: return c * F.col(0).squaredNorm();
      default: return 0.0;
    }
  }

  double potential(const DeformationGradient& F, std::span<const double> t) const {
    return base.potential(F, t) + extra(F.tensor());
  }
  // Both extra terms are convex in F, so the polyconvexity probe stays quiet.
  double poly_potential(const PolyArgs& xi, std::span<const double> t) const {
    return base.poly_potential(xi, t) + extra(xi.F);
  }
  StressResult stress(const DeformationGradient& F, std::span<const double> t) const {
    StressResult r = base.stress(F, t);
    r.psi += extra(F.tensor());
    if (defect == Defect::ReadsF11) r.P(0, 0) += c;
    if (defect == Defect::ReadsC11) r.P.col(0) += 2.0 * c * F.tensor().col(0);
    return r;
  }
  std::vector<double> potential_dt(const DeformationGradient& F, std::span<const double> t) const {
    return base.potential_dt(F, t);
  }
  std::vector<Tensor2> stress_param_grad(const DeformationGradient& F, std::span<const double> t) const {
    auto g = base.stress_param_grad(F, t);
    if (defect == Defect::BadParamGrad)
      for (auto& d : g) d *= 1.01;
    return g;
  }
  Doctored with_param_offset(std::size_t i, double delta) const {
    return {base.with_param_offset(i, delta), defect, c};
  }
};

inline PannModel without_normalisation(PannModel m) {
  m.normalisation = false;
  return m;
}

inline PannModel without_growth(PannModel m) {
  m.growth = false;
  return m;
}

/// Forces the first weight of the output layer's W_xx to -10.
inline PannModel negative_output_weight(PannModel m) {
  const auto& out = m.net.layout().x_layers().back();
  m.net.params().values[out.W_xx.offset] = -10.0;
  return m;
}

}  // namespace ppann::mutants
