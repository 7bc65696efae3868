#include <gtest/gtest.h>

#include <random>

#include "fd.hpp"
#include "ppann/picnn.hpp"

using namespace ppann;

namespace {

const Architecture kAll[] = {Architecture::Type1, Architecture::Type2, Architecture::Type3, Architecture::Type1M};

int y_dim_of(Architecture a) { return a == Architecture::Type1M ? 2 : 1; }

Picnn random_net(Architecture a, std::uint64_t seed) {
  Picnn net = Picnn::initialized(default_config(a, y_dim_of(a)), seed);
  // Perturb free biases so gates and offsets are not all at their initial values.
  std::mt19937_64 rng(seed + 1000);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (const auto& e : net.layout().blocks())
    if (e.role == PicnnLayout::Role::Bias)
      for (std::size_t i = 0; i < e.block.size(); ++i) net.params().values[e.block.offset + i] += u(rng);
  return net;
}

std::vector<double> sample_x(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.5, 4.0);
  return {u(rng), u(rng), u(rng), -u(rng)};
}

std::vector<double> sample_y(std::mt19937_64& rng, int dim) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> y(dim);
  for (double& v : y) v = u(rng);
  return y;
}

class PicnnTypes : public ::testing::TestWithParam<Architecture> {};

}  // namespace

TEST(ParameterCount, MatchesReferenceArchitectures) {
  EXPECT_EQ(count_params(default_config(Architecture::Type1, 1)), 272u);
  EXPECT_EQ(count_params(default_config(Architecture::Type2, 1)), 516u);
  EXPECT_EQ(count_params(default_config(Architecture::Type3, 1)), 580u);
  EXPECT_EQ(count_params(default_config(Architecture::Type1M, 2)), 280u);
}

TEST(Layout, BlocksTileTheParameterVector) {
  for (Architecture a : kAll) {
    PicnnLayout L(default_config(a, y_dim_of(a)));
    std::vector<int> hits(L.size(), 0);
    for (const auto& e : L.blocks())
      for (std::size_t i = 0; i < e.block.size(); ++i) ++hits[e.block.offset + i];
    for (int h : hits) EXPECT_EQ(h, 1);
  }
}

TEST(Layout, RejectsInconsistentWidths) {
  PicnnConfig c = default_config(Architecture::Type2, 1);
  c.y_widths = {8, 8, 8};
  EXPECT_THROW(PicnnLayout{c}, std::invalid_argument);
  PicnnConfig d = default_config(Architecture::Type3, 1);
  d.y_widths = {8};
  EXPECT_THROW(PicnnLayout{d}, std::invalid_argument);
}

TEST(Params, InitIsDeterministicAndFeasible) {
  for (Architecture a : kAll) {
    const auto cfg = default_config(a, y_dim_of(a));
    const auto p1 = init_params(cfg, 7);
    const auto p2 = init_params(cfg, 7);
    const auto p3 = init_params(cfg, 8);
    EXPECT_EQ(p1, p2);
    EXPECT_NE(p1.values, p3.values);
    EXPECT_TRUE(is_feasible(p1));
  }
}

TEST(Params, ProjectionClampsOnlyConstrainedEntries) {
  auto p = init_params(default_config(Architecture::Type2, 1), 3);
  for (double& v : p.values) v = -1.0;
  const auto q = project_nonneg(p);
  EXPECT_TRUE(is_feasible(q));
  for (std::size_t i = 0; i < q.size(); ++i) EXPECT_EQ(q.values[i], p.nonneg[i] ? 0.0 : -1.0);
}

TEST(Params, ConvexTrunkWeightsAreConstrained) {
  for (Architecture a : kAll) {
    PicnnLayout L(default_config(a, y_dim_of(a)));
    for (const auto& X : L.x_layers()) {
      EXPECT_TRUE(X.W_xx.nonneg);
      if (X.W_xx0.present()) EXPECT_TRUE(X.W_xx0.nonneg);
    }
  }
}

TEST_P(PicnnTypes, GradXMatchesFiniteDifferences) {
  const Picnn net = random_net(GetParam(), 11);
  std::mt19937_64 rng(12);
  for (int k = 0; k < 5; ++k) {
    const auto x = sample_x(rng);
    const auto y = sample_y(rng, net.layout().y_dim());
    const auto e = net.evaluate(x, y);
    EXPECT_DOUBLE_EQ(e.value, net.forward(x, y));
    const auto gx = fd::gradient([&](const std::vector<double>& v) { return net.forward(v, y); }, x);
    const auto gy = fd::gradient([&](const std::vector<double>& v) { return net.forward(x, v); }, y);
    for (std::size_t a = 0; a < x.size(); ++a) EXPECT_TRUE(fd::close(e.grad_x[a], gx[a], 1e-6, 1e-8));
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_TRUE(fd::close(e.grad_y[i], gy[i], 1e-6, 1e-8));
  }
}

TEST_P(PicnnTypes, ParameterGradientMatchesFiniteDifferences) {
  const Picnn net = random_net(GetParam(), 21);
  std::mt19937_64 rng(22);
  const auto x = sample_x(rng);
  const auto y = sample_y(rng, net.layout().y_dim());
  const auto g = net.grad_params_value(x, y);
  const auto f = [&](const std::vector<double>& th) {
    return Picnn(net.config(), PicnnParams{th, net.params().nonneg}).forward(x, y);
  };
  const auto ref = fd::gradient(f, net.params().values);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_TRUE(fd::close(g[i], ref[i], 1e-6, 1e-8)) << "param " << i;
}

TEST_P(PicnnTypes, MixedDerivativesMatchFiniteDifferences) {
  const Picnn net = random_net(GetParam(), 31);
  std::mt19937_64 rng(32);
  const auto x = sample_x(rng);
  const auto y = sample_y(rng, net.layout().y_dim());
  const std::vector<double> dir{0.3, -1.2, 0.7, 2.0};
  const auto g = net.grad_params_of_grad_x_dir(x, y, dir);
  const auto f = [&](const std::vector<double>& th) {
    const auto gx = Picnn(net.config(), PicnnParams{th, net.params().nonneg}).grad_x(x, y);
    double s = 0.0;
    for (std::size_t a = 0; a < gx.size(); ++a) s += dir[a] * gx[a];
    return s;
  };
  const auto ref = fd::gradient(f, net.params().values);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_TRUE(fd::close(g[i], ref[i], 1e-5, 1e-7)) << "param " << i;

  const auto rows = net.grad_x_dy(x, y);
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t a = 0; a < x.size(); ++a) {
      const double r = fd::partial([&](const std::vector<double>& v) { return net.grad_x(x, v)[a]; }, y, i);
      EXPECT_TRUE(fd::close(rows[i][a], r, 1e-5, 1e-7));
    }
  }
}

TEST_P(PicnnTypes, ConvexAlongRandomLinesInX) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int m = 0; m < 5; ++m) {
    const Picnn net = random_net(GetParam(), 40 + m);
    for (int k = 0; k < 50; ++k) {
      std::vector<double> a(4), b(4), mid(4);
      for (int i = 0; i < 4; ++i) {
        a[i] = u(rng);
        b[i] = u(rng);
        mid[i] = 0.5 * (a[i] + b[i]);
      }
      const auto y = sample_y(rng, net.layout().y_dim());
      const double fa = net.forward(a, y), fb = net.forward(b, y), fm = net.forward(mid, y);
      EXPECT_LE(fm, 0.5 * (fa + fb) + 1e-12 * (1.0 + std::abs(fm)));
    }
  }
}

TEST_P(PicnnTypes, OutputIsNonDecreasingInX) {
  const Picnn net = random_net(GetParam(), 51);
  std::mt19937_64 rng(52);
  for (int k = 0; k < 20; ++k) {
    const auto g = net.grad_x(sample_x(rng), sample_y(rng, net.layout().y_dim()));
    for (double v : g) EXPECT_GE(v, 0.0);
  }
}

INSTANTIATE_TEST_SUITE_P(AllTypes, PicnnTypes, ::testing::ValuesIn(kAll),
                         [](const auto& info) { return to_string(info.param); });

TEST(Type1M, MonotoneInParameters) {
  std::mt19937_64 rng(61);
  for (int m = 0; m < 5; ++m) {
    const Picnn net = random_net(Architecture::Type1M, 60 + m);
    for (int k = 0; k < 50; ++k) {
      const auto x = sample_x(rng);
      auto y1 = sample_y(rng, 2), y2 = sample_y(rng, 2);
      for (int i = 0; i < 2; ++i)
        if (y1[i] > y2[i]) std::swap(y1[i], y2[i]);
      EXPECT_LE(net.forward(x, y1), net.forward(x, y2) + 1e-12);
      for (double d : net.evaluate(x, y1).grad_y) EXPECT_GE(d, 0.0);
    }
  }
}

TEST(Picnn, RejectsDimensionMismatch) {
  const Picnn net = random_net(Architecture::Type1, 1);
  const std::vector<double> x{3, 3, 1};
  const std::vector<double> y{0.5};
  EXPECT_THROW(net.forward(x, y), std::invalid_argument);
  EXPECT_THROW((Picnn(default_config(Architecture::Type1, 1), PicnnParams{})), std::invalid_argument);
}
