#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ppann/kinematics.hpp"
#include "ppann/picnn.hpp"

namespace ppann {

/// Analytical growth term (J + 1/J - 2)^2.
inline double growth_term(double J) {
  if (!(J > 0.0)) throw DomainError("growth_term requires J > 0");
  const double a = J + 1.0 / J - 2.0;
  return a * a;
}

inline double growth_term_dJ(double J) {
  if (!(J > 0.0)) throw DomainError("growth_term_dJ requires J > 0");
  return 2.0 * (J + 1.0 / J - 2.0) * (1.0 - 1.0 / (J * J));
}

/// Network input at F = I.
inline constexpr std::array<double, 4> kReferenceInvariants{3.0, 3.0, 1.0, -1.0};

/// dI_a/dF at F = I as multiples of I. n(t) = sum_a c_a dpsi/dI_a with these
/// coefficients makes the assembled stress vanish at F = I.
inline constexpr std::array<double, 4> kNormalisationWeights{2.0, 4.0, 2.0, -1.0};

struct StressResult {
  Tensor2 P = Tensor2::Zero();
  double psi = 0.0;
};

/// psi = psi_NN(I1, I2, I3, I3*; t) + (J + 1/J - 2)^2 - n(t) J.
///
/// Stress and potential are returned in physical units: the network works in
/// normalised stress units and `stress_scale` maps back.
class PannModel {
 public:
  PannModel() = default;
  explicit PannModel(Picnn network, double scale = 1.0) : net(std::move(network)), stress_scale(scale) {}

  Picnn net;
  double stress_scale = 1.0;
  bool normalisation = true;  // include the -n(t) J term
  bool growth = true;         // include the growth term
  std::map<std::string, std::string> metadata;

  int t_dim() const { return net.layout().y_dim(); }
  std::size_t num_params() const { return net.num_params(); }

  /// Copy with theta_i shifted by delta (finite-difference probes).
  PannModel with_param_offset(std::size_t i, double delta) const {
    PannModel m = *this;
    m.net.params().values.at(i) += delta;
    return m;
  }

  double normalisation_offset(std::span<const double> t) const {
    const auto g = net.grad_x(kReferenceInvariants, t);
    double n = 0.0;
    for (int a = 0; a < 4; ++a) n += kNormalisationWeights[a] * g[a];
    return n;
  }

  double potential(const DeformationGradient& F, std::span<const double> t) const {
    const auto inv = invariants(F).as_array();
    const double J = F.det();
    double psi = net.forward(inv, t);
    if (growth) psi += growth_term(J);
    if (normalisation) psi -= normalisation_offset(t) * J;
    return stress_scale * psi;
  }

  /// Potential on independent coordinates (F, H, J) for convexity probing.
  double poly_potential(const PolyArgs& xi, std::span<const double> t) const {
    const auto inv = poly_invariants(xi).as_array();
    double psi = net.forward(inv, t);
    if (growth) psi += growth_term(xi.J);
    if (normalisation) psi -= normalisation_offset(t) * xi.J;
    return stress_scale * psi;
  }

  StressResult stress(const DeformationGradient& F, std::span<const double> t) const {
    const auto inv = invariants(F).as_array();
    const auto dI = invariant_gradients(F);
    const double J = F.det();
    const Tensor2 cof = cofactor(F.tensor());  // J F^{-T}
    const EvalResult e = net.evaluate(inv, t);
    StressResult r;
    r.psi = e.value;
    for (int a = 0; a < 4; ++a) r.P += e.grad_x[a] * dI[a];
    if (growth) {
      r.psi += growth_term(J);
      r.P += growth_term_dJ(J) * cof;
    }
    if (normalisation) {
      const double n = normalisation_offset(t);
      r.psi -= n * J;
      r.P -= n * cof;
    }
    r.psi *= stress_scale;
    r.P *= stress_scale;
    return r;
  }

  /// dP/dtheta for every trainable scalar, exact (forward-over-reverse).
  std::vector<Tensor2> stress_param_grad(const DeformationGradient& F, std::span<const double> t) const {
    const auto inv = invariants(F).as_array();
    const auto dI = invariant_gradients(F);
    const Tensor2 cof = cofactor(F.tensor());
    const auto mixed = net.grad_params_of_grad_x(inv, t);
    std::vector<double> dn;
    if (normalisation) dn = net.grad_params_of_grad_x_dir(kReferenceInvariants, t, kNormalisationWeights);
    std::vector<Tensor2> out(net.num_params(), Tensor2::Zero());
    for (std::size_t i = 0; i < out.size(); ++i) {
      for (int a = 0; a < 4; ++a) out[i] += mixed[a][i] * dI[a];
      if (normalisation) out[i] -= dn[i] * cof;
      out[i] *= stress_scale;
    }
    return out;
  }

  /// d psi / d t_i (exact), used by the monotonicity probe.
  std::vector<double> potential_dt(const DeformationGradient& F, std::span<const double> t) const {
    const auto inv = invariants(F).as_array();
    std::vector<double> d = net.evaluate(inv, t).grad_y;
    if (normalisation) {
      const auto rows = net.grad_x_dy(kReferenceInvariants, t);
      for (std::size_t i = 0; i < d.size(); ++i) {
        double dn = 0.0;
        for (int a = 0; a < 4; ++a) dn += kNormalisationWeights[a] * rows[i][a];
        d[i] -= dn * F.det();
      }
    }
    for (double& v : d) v *= stress_scale;
    return d;
  }
};

}  // namespace ppann
