#include <gtest/gtest.h>

#include <random>

#include "fd.hpp"
#include "ppann/pann.hpp"

using namespace ppann;

namespace {

PannModel random_model(Architecture a, std::uint64_t seed, double scale = 1.0) {
  const int yd = a == Architecture::Type1M ? 2 : 1;
  PannModel m(Picnn::initialized(default_config(a, yd), seed), scale);
  std::mt19937_64 rng(seed + 99);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (const auto& e : m.net.layout().blocks())
    if (e.role == PicnnLayout::Role::Bias)
      for (std::size_t i = 0; i < e.block.size(); ++i) m.net.params().values[e.block.offset + i] += u(rng);
  return m;
}

std::vector<double> sample_t(std::mt19937_64& rng, int dim) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> t(dim);
  for (double& v : t) v = u(rng);
  return t;
}

const Architecture kAll[] = {Architecture::Type1, Architecture::Type2, Architecture::Type3, Architecture::Type1M};

}  // namespace

TEST(Growth, HandValues) {
  EXPECT_DOUBLE_EQ(growth_term(1.0), 0.0);
  EXPECT_DOUBLE_EQ(growth_term(2.0), 0.25);
  EXPECT_DOUBLE_EQ(growth_term(0.5), 0.25);
  EXPECT_DOUBLE_EQ(growth_term_dJ(1.0), 0.0);
  EXPECT_NEAR(growth_term_dJ(2.0), (growth_term(2.0 + 1e-6) - growth_term(2.0 - 1e-6)) / 2e-6, 1e-8);
  EXPECT_THROW(growth_term(0.0), DomainError);
  EXPECT_THROW(growth_term_dJ(-1.0), DomainError);
}

TEST(Pann, StressFreeReferenceWithNormalisation) {
  std::mt19937_64 rng(1);
  for (Architecture a : kAll) {
    for (int m = 0; m < 5; ++m) {
      const PannModel model = random_model(a, 10 + m, 3.7);
      const auto t = sample_t(rng, model.t_dim());
      const Tensor2 P = model.stress(DeformationGradient(Tensor2::Identity()), t).P;
      EXPECT_LE(P.cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Pann, ReferenceStressWithoutNormalisationIsGenerallyNonzero) {
  PannModel model = random_model(Architecture::Type1, 3);
  model.normalisation = false;
  const std::vector<double> t{0.5};
  EXPECT_GT(model.stress(DeformationGradient(Tensor2::Identity()), t).P.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Pann, StressIsGradientOfPotential) {
  std::mt19937_64 rng(2);
  for (Architecture a : kAll) {
    const PannModel model = random_model(a, 20, 2.0);
    for (int k = 0; k < 5; ++k) {
      const Tensor2 F = random_deformation(rng).tensor();
      const auto t = sample_t(rng, model.t_dim());
      const auto r = model.stress(DeformationGradient(F), t);
      EXPECT_NEAR(r.psi, model.potential(DeformationGradient(F), t), 1e-12 * (1.0 + std::abs(r.psi)));
      const Tensor2 ref =
          fd::tensor_gradient([&](const Tensor2& A) { return model.potential(DeformationGradient(A), t); }, F);
      EXPECT_LE((r.P - ref).norm(), 1e-6 * (1.0 + ref.norm())) << to_string(a);
    }
  }
}

TEST(Pann, StressParameterGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (Architecture a : kAll) {
    const PannModel model = random_model(a, 30, 1.5);
    const Tensor2 F = random_deformation(rng).tensor();
    const auto t = sample_t(rng, model.t_dim());
    const auto dP = model.stress_param_grad(DeformationGradient(F), t);
    ASSERT_EQ(dP.size(), model.net.num_params());
    const std::vector<double> theta0 = model.net.params().values;
    const double h = 1e-6;
    for (std::size_t i = 0; i < theta0.size(); i += 7) {
      PannModel mp = model, mm = model;
      mp.net.params().values[i] += h;
      mm.net.params().values[i] -= h;
      const Tensor2 ref = (mp.stress(DeformationGradient(F), t).P - mm.stress(DeformationGradient(F), t).P) / (2 * h);
      EXPECT_LE((dP[i] - ref).norm(), 1e-6 * (1.0 + ref.norm())) << to_string(a) << " param " << i;
    }
  }
}

TEST(Pann, ParameterDerivativeOfPotentialMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (Architecture a : kAll) {
    const PannModel model = random_model(a, 40, 1.3);
    const DeformationGradient F = random_deformation(rng);
    const auto t = sample_t(rng, model.t_dim());
    const auto d = model.potential_dt(F, t);
    const auto ref = fd::gradient([&](const std::vector<double>& v) { return model.potential(F, v); }, t);
    for (std::size_t i = 0; i < t.size(); ++i) EXPECT_TRUE(fd::close(d[i], ref[i], 1e-6, 1e-8));
  }
}

TEST(Pann, ObjectiveAndIsotropic) {
  std::mt19937_64 rng(5);
  const PannModel model = random_model(Architecture::Type3, 50);
  for (int k = 0; k < 20; ++k) {
    const Tensor2 F = random_deformation(rng).tensor();
    const Tensor2 Q = random_rotation(rng);
    const std::vector<double> t{0.3};
    const auto r = model.stress(DeformationGradient(F), t);
    const auto rq = model.stress(DeformationGradient(Q * F), t);
    const auto ri = model.stress(DeformationGradient(F * Q.transpose()), t);
    EXPECT_NEAR(rq.psi, r.psi, 1e-11 * (1.0 + std::abs(r.psi)));
    EXPECT_NEAR(ri.psi, r.psi, 1e-11 * (1.0 + std::abs(r.psi)));
    EXPECT_LE((rq.P - Q * r.P).norm(), 1e-10 * (1.0 + r.P.norm()));
    EXPECT_LE((ri.P - r.P * Q.transpose()).norm(), 1e-10 * (1.0 + r.P.norm()));
    const Tensor2 M = r.P * F.transpose();
    EXPECT_LE((M - M.transpose()).norm(), 1e-10 * (1.0 + M.norm()));
  }
}

TEST(Pann, GrowthDominatesUnderCompression) {
  const PannModel model = random_model(Architecture::Type1, 60);
  const std::vector<double> t{0.5};
  double prev = -1e300;
  for (double J : {0.5, 0.2, 0.1, 0.05, 0.01}) {
    Tensor2 F = Tensor2::Identity() * std::cbrt(J);
    const double psi = model.potential(DeformationGradient(F), t);
    EXPECT_GT(psi, prev);
    prev = psi;
  }
  EXPECT_GT(model.potential(DeformationGradient(Tensor2::Identity() * std::cbrt(1e-3)), t), 1e3);
}

TEST(Pann, StressScaleIsLinear) {
  PannModel a = random_model(Architecture::Type2, 70, 1.0);
  PannModel b = a;
  b.stress_scale = 4.0;
  const DeformationGradient F(Tensor2::Identity() + 0.1 * Tensor2::Ones());
  const std::vector<double> t{0.2};
  EXPECT_NEAR(b.potential(F, t), 4.0 * a.potential(F, t), 1e-12);
  EXPECT_LE((b.stress(F, t).P - 4.0 * a.stress(F, t).P).norm(), 1e-12);
}

TEST(Pann, ZeroNetworkReducesToGrowthTerm) {
  const PannModel model(Picnn(default_config(Architecture::Type1, 1)));
  const std::vector<double> t{0.3};
  const DeformationGradient I(Tensor2::Identity());
  EXPECT_EQ(model.potential(I, t), 0.0);
  EXPECT_EQ(model.stress(I, t).P.cwiseAbs().maxCoeff(), 0.0);

  const DeformationGradient F(Eigen::Vector3d(2.0, 1.0, 1.0).asDiagonal().toDenseMatrix());
  const Tensor2 expected = Eigen::Vector3d(0.75, 1.5, 1.5).asDiagonal();
  EXPECT_NEAR(model.potential(F, t), 0.25, 1e-14);
  EXPECT_LE((model.stress(F, t).P - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Pann, NormalisationOffsetIsWeightedInvariantGradient) {
  const PannModel model = random_model(Architecture::Type2, 21);
  const std::vector<double> t{0.6};
  const std::array<double, 4> x = kReferenceInvariants;
  double n_fd = 0.0;
  for (int a = 0; a < 4; ++a) {
    auto xp = x, xm = x;
    xp[a] += 1e-6;
    xm[a] -= 1e-6;
    n_fd += kNormalisationWeights[a] * (model.net.forward(xp, t) - model.net.forward(xm, t)) / 2e-6;
  }
  EXPECT_NEAR(model.normalisation_offset(t), n_fd, 1e-7);
}

TEST(Pann, StressParameterGradientVanishesAtReference) {
  for (Architecture a : kAll) {
    const PannModel model = random_model(a, 33);
    const std::vector<double> t(model.t_dim(), 0.4);
    double worst = 0.0;
    for (const Tensor2& d : model.stress_param_grad(DeformationGradient(Tensor2::Identity()), t))
      worst = std::max(worst, d.cwiseAbs().maxCoeff());
    EXPECT_LE(worst, 1e-12) << to_string(a);
  }
}
