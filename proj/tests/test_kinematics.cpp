#include <gtest/gtest.h>

#include <limits>
#include <random>

#include "fd.hpp"
#include "ppann/kinematics.hpp"

using namespace ppann;

namespace {

Tensor2 sample_F(std::mt19937_64& rng) { return random_deformation(rng).tensor(); }

}  // namespace

TEST(Cofactor, MatchesDetTimesInverseTranspose) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 50; ++k) {
    const Tensor2 F = sample_F(rng);
    const Tensor2 ref = F.determinant() * F.inverse().transpose();
    EXPECT_LE((cofactor(F) - ref).norm(), 1e-13 * (1.0 + ref.norm()));
  }
}

TEST(Cofactor, DefinedForSingularMatrix) {
  Tensor2 A = Tensor2::Zero();
  A(0, 0) = 1.0;
  A(1, 1) = 2.0;
  const Tensor2 C = cofactor(A);
  EXPECT_DOUBLE_EQ(C(2, 2), 2.0);
  EXPECT_DOUBLE_EQ(C(0, 0), 0.0);
}

TEST(DeformationGradient, RejectsNonPositiveDeterminant) {
  Tensor2 F = Tensor2::Identity();
  F(2, 2) = -1.0;
  EXPECT_THROW(DeformationGradient{F}, DomainError);
  EXPECT_THROW(DeformationGradient{Tensor2::Zero()}, DomainError);
  F(2, 2) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(DeformationGradient{F}, DomainError);
}

TEST(Invariants, IdentityValues) {
  const auto inv = invariants(DeformationGradient(Tensor2::Identity())).as_array();
  EXPECT_DOUBLE_EQ(inv[0], 3.0);
  EXPECT_DOUBLE_EQ(inv[1], 3.0);
  EXPECT_DOUBLE_EQ(inv[2], 1.0);
  EXPECT_DOUBLE_EQ(inv[3], -1.0);
}

// Independent route through C = F^T F.
TEST(Invariants, AgreeWithRightCauchyGreenForms) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 50; ++k) {
    const Tensor2 F = sample_F(rng);
    const Tensor2 C = F.transpose() * F;
    const auto inv = invariants(DeformationGradient(F));
    const double trC = C.trace();
    EXPECT_NEAR(inv.I1, trC, 1e-12 * trC);
    const double I2 = 0.5 * (trC * trC - (C * C).trace());
    EXPECT_NEAR(inv.I2, I2, 1e-12 * I2);
    EXPECT_NEAR(inv.I3, C.determinant(), 1e-12 * C.determinant());
    EXPECT_NEAR(inv.I3star, -F.determinant(), 1e-14);
  }
}

TEST(Invariants, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 20; ++k) {
    const Tensor2 F = sample_F(rng);
    const auto g = invariant_gradients(DeformationGradient(F));
    for (int a = 0; a < 4; ++a) {
      const Tensor2 ref =
          fd::tensor_gradient([a](const Tensor2& A) { return invariants(DeformationGradient(A)).as_array()[a]; }, F);
      EXPECT_LE((g[a] - ref).norm(), 1e-7 * (1.0 + ref.norm())) << "invariant " << a;
    }
  }
}

TEST(Invariants, RotationInvariance) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 20; ++k) {
    const Tensor2 F = sample_F(rng);
    const Tensor2 Q = random_rotation(rng);
    const auto a = invariants(DeformationGradient(F)).as_array();
    const auto b = invariants(DeformationGradient(Q * F * Q.transpose())).as_array();
    const auto c = invariants(DeformationGradient(Q * F)).as_array();
    for (int i = 0; i < 4; ++i) {
      EXPECT_NEAR(a[i], b[i], 1e-12 * (1.0 + std::abs(a[i])));
      EXPECT_NEAR(a[i], c[i], 1e-12 * (1.0 + std::abs(a[i])));
    }
  }
}

TEST(PolyInvariants, RejectNonPositiveJ) {
  PolyArgs xi;
  xi.J = 0.0;
  EXPECT_THROW(poly_invariants(xi), DomainError);
}

TEST(RandomRotation, IsProperOrthogonal) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 50; ++k) {
    const Tensor2 Q = random_rotation(rng);
    EXPECT_LE((Q.transpose() * Q - Tensor2::Identity()).norm(), 1e-13);
    EXPECT_NEAR(Q.determinant(), 1.0, 1e-13);
  }
}

TEST(RandomDeformation, RespectsDeterminantWindow) {
  std::mt19937_64 rng(6);
  for (int k = 0; k < 200; ++k) {
    const double J = random_deformation(rng, 0.5, 0.2, 3.0).det();
    EXPECT_GE(J, 0.2);
    EXPECT_LE(J, 3.0);
  }
}
