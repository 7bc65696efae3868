#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <random>
#include <string>

#include "ppann/errors.hpp"

namespace ppann {

using Tensor2 = Eigen::Matrix3d;

/// Cofactor of a 3x3 tensor built from signed 2x2 minors.
///
/// Equals det(A) A^{-T} whenever A is invertible, and stays defined (and
/// accurate) for singular or nearly singular A.
inline Tensor2 cofactor(const Tensor2& A) {
  Tensor2 C;
  for (int i = 0; i < 3; ++i) {
    const int i1 = (i + 1) % 3;
    const int i2 = (i + 2) % 3;
    for (int j = 0; j < 3; ++j) {
      const int j1 = (j + 1) % 3;
      const int j2 = (j + 2) % 3;
      C(i, j) = A(i1, j1) * A(i2, j2) - A(i1, j2) * A(i2, j1);
    }
  }
  return C;
}

/// A deformation gradient; construction enforces det F > 0.
class DeformationGradient {
 public:
  explicit DeformationGradient(const Tensor2& F) : F_(F), J_(F.determinant()) {
    if (!(J_ > 0.0) || !F.allFinite()) {
      throw DomainError("deformation gradient requires finite entries and det F > 0 (got det F = " +
                        std::to_string(J_) + ")");
    }
  }

  const Tensor2& tensor() const { return F_; }
  double det() const { return J_; }

 private:
  Tensor2 F_;
  double J_;
};

/// Isotropic invariant inputs (I1, I2, I3, I3*) of the network.
struct InvariantSet {
  double I1 = 0.0;
  double I2 = 0.0;
  double I3 = 0.0;
  double I3star = 0.0;

  std::array<double, 4> as_array() const { return {I1, I2, I3, I3star}; }
};

struct InvariantGradients {
  Tensor2 dI1_dF;
  Tensor2 dI2_dF;
  Tensor2 dI3_dF;
  Tensor2 dI3star_dF;

  const Tensor2& operator[](int a) const {
    switch (a) {
      case 0: return dI1_dF;
      case 1: return dI2_dF;
      case 2: return dI3_dF;
      default: return dI3star_dF;
    }
  }
};

/// Independent polyconvexity coordinates (F, H, J); H occupies the cofactor slot.
struct PolyArgs {
  Tensor2 F = Tensor2::Identity();
  Tensor2 H = Tensor2::Identity();
  double J = 1.0;
};

/// Invariants from the independent coordinates: ||F||^2, ||H||^2, J^2, -J.
inline InvariantSet poly_invariants(const PolyArgs& xi) {
  if (!(xi.J > 0.0)) {
    throw DomainError("poly_invariants requires J > 0");
  }
  return {xi.F.squaredNorm(), xi.H.squaredNorm(), xi.J * xi.J, -xi.J};
}

// I1 = tr C = ||F||^2, I2 = tr Cof C = ||Cof F||^2, I3 = det C = J^2; evaluated
// through F so that invariants(F) and poly_invariants(F, Cof F, det F) coincide.
inline InvariantSet invariants(const DeformationGradient& F) {
  return poly_invariants({F.tensor(), cofactor(F.tensor()), F.det()});
}

inline InvariantGradients invariant_gradients(const DeformationGradient& Fg) {
  const Tensor2& F = Fg.tensor();
  const double J = Fg.det();
  const Tensor2 C = F.transpose() * F;
  const Tensor2 cof = cofactor(F);  // J F^{-T}
  InvariantGradients g;
  g.dI1_dF = 2.0 * F;
  g.dI2_dF = 2.0 * F * (C.trace() * Tensor2::Identity() - C);
  g.dI3_dF = 2.0 * J * cof;
  g.dI3star_dF = -cof;
  return g;
}

/// Uniformly distributed rotation: QR of a Gaussian matrix with the sign of R's
/// diagonal absorbed into Q, then a column flip to land in SO(3).
template <class Rng>
Tensor2 random_rotation(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor2 A;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      A(i, j) = normal(rng);
    }
  }
  Eigen::HouseholderQR<Tensor2> qr(A);
  Tensor2 Q = qr.householderQ();
  const Tensor2 R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < 3; ++j) {
    if (R(j, j) < 0.0) {
      Q.col(j) *= -1.0;
    }
  }
  if (Q.determinant() < 0.0) {
    Q.col(2) *= -1.0;
  }
  return Q;
}

/// Probe sampling region: F = I + scale * G with G uniform in [-1, 1], det F in [det_min, det_max].
template <class Rng>
DeformationGradient random_deformation(Rng& rng, double scale = 0.3, double det_min = 0.2,
                                       double det_max = 3.0) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (;;) {
    Tensor2 F = Tensor2::Identity();
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        F(i, j) += scale * unif(rng);
      }
    }
    const double J = F.determinant();
    if (J >= det_min && J <= det_max) {
      return DeformationGradient(F);
    }
  }
}

}  // namespace ppann
