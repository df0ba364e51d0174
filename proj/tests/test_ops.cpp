#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>

#include "helpers.hpp"
#include "uad/error.hpp"
#include "uad/gradcheck.hpp"
#include "uad/ops.hpp"

using namespace uad;

TEST(Conv2d, IdentityKernel) {
  Tape tape;
  const Tensor x = test::random_tensor({1, 5, 4}, 1);
  Var y = ops::conv2d(tape.constant(x), tape.constant(Tensor::from({1, 1, 1, 1}, {1})), 1, 0);
  EXPECT_EQ(y.value(), x);
}

TEST(Conv2d, ZeroInput) {
  Tape tape;
  Var y = ops::conv2d(tape.constant(Tensor(Shape{2, 6, 6})),
                      tape.constant(test::random_tensor({3, 2, 3, 3}, 2, -1, 1)), 2, 1);
  EXPECT_EQ(max_abs(y.value()), 0.0);
  EXPECT_EQ(y.shape(), (Shape{3, 3, 3}));
}

TEST(Conv2d, HandSum) {
  Tape tape;
  Var y = ops::conv2d(tape.constant(Tensor::from({1, 2, 2}, {1, 2, 3, 4})),
                      tape.constant(Tensor::from({1, 1, 2, 2}, {1, 1, 1, 1})), 1, 0);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1}));
  EXPECT_EQ(y.value()[0], 10.0);
}

TEST(Conv2d, ChannelMismatchIsDimensionError) {
  Tape tape;
  EXPECT_THROW(ops::conv2d(tape.constant(Tensor(Shape{2, 4, 4})),
                           tape.constant(Tensor(Shape{1, 3, 3, 3})), 1, 1),
               DimensionError);
}

TEST(GridSample, IdentityGridIsBitExact) {
  Tape tape;
  const Tensor x = test::random_tensor({3, 5, 7}, 3);
  Tensor g(Shape{5, 7, 2});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 7; ++j) {
      g.at(i, j, 0) = static_cast<double>(i);
      g.at(i, j, 1) = static_cast<double>(j);
    }
  EXPECT_EQ(ops::grid_sample(tape.constant(x), tape.constant(g)).value(), x);
}

TEST(GridSample, HandBilinearAndClamp) {
  Tape tape;
  Var x = tape.constant(Tensor::from({1, 2, 2}, {1, 2, 3, 4}));
  Var y = ops::grid_sample(x, tape.constant(Tensor::from({1, 2, 2}, {0.5, 0.5, -1.0, 0.0})));
  EXPECT_DOUBLE_EQ(y.value()[0], 2.5);
  EXPECT_EQ(y.value()[1], 1.0);
}

TEST(GridSample, OutputIsConvexCombinationOfNeighbours) {
  const Tensor x = test::random_tensor({1, 6, 6}, 4);
  const Tensor g = test::random_tensor({10, 10, 2}, 5, -2.0, 7.0);
  Tape tape;
  Var y = ops::grid_sample(tape.constant(x), tape.constant(g));
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 10; ++j) {
      const double u = std::clamp(g.at(i, j, 0), 0.0, 5.0), v = std::clamp(g.at(i, j, 1), 0.0, 5.0);
      const auto r0 = static_cast<std::size_t>(std::floor(u)), c0 = static_cast<std::size_t>(std::floor(v));
      const std::size_t r1 = std::min<std::size_t>(r0 + 1, 5), c1 = std::min<std::size_t>(c0 + 1, 5);
      const double vals[4] = {x.at(0, r0, c0), x.at(0, r0, c1), x.at(0, r1, c0), x.at(0, r1, c1)};
      const double out = y.value().at(0, i, j);
      EXPECT_GE(out, *std::min_element(vals, vals + 4) - 1e-15);
      EXPECT_LE(out, *std::max_element(vals, vals + 4) + 1e-15);
    }
}

TEST(Cosine, HandValues) {
  Tape tape;
  auto cos = [&](std::initializer_list<double> a, std::initializer_list<double> b) {
    return ops::cosine_similarity(tape.constant(Tensor::from({a.size()}, a)),
                                  tape.constant(Tensor::from({b.size()}, b)))
        .value()
        .item();
  };
  EXPECT_NEAR(cos({0.3, -2, 5}, {0.3, -2, 5}), 1.0, 1e-15);
  EXPECT_EQ(cos({1, 0}, {0, 1}), 0.0);
  EXPECT_NEAR(cos({1, 0}, {1, 1}), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_THROW(cos({0, 0}, {1, 1}), DegenerateNormError);
}

TEST(Clamp, ValuesAndStraightThroughGradient) {
  Tape tape;
  Var x = tape.leaf(Tensor::from({4}, {-0.5, 0.2, 0.9, 1.5}));
  Var y = ops::clamp(x, 0.0, 1.0);
  EXPECT_EQ(y.value(), Tensor::from({4}, {0.0, 0.2, 0.9, 1.0}));
  Gradients g = tape.backward(ops::sum(y));
  EXPECT_EQ(g[x], Tensor::from({4}, {0, 1, 1, 0}));
}

TEST(SqrtEps, FiniteAtZero) {
  Tape tape;
  Var x = tape.leaf(Tensor::from({1}, {0.0}));
  Gradients g = tape.backward(ops::sum(ops::sqrt_eps(x)));
  EXPECT_TRUE(std::isfinite(g[x][0]));
  EXPECT_NEAR(g[x][0], 0.5 / std::sqrt(ops::kSqrtDelta), 1e-3);
}

TEST(GaussianTaps, NormalizedAndSymmetric) {
  for (double sigma : {0.5, 1.0, 1.5, 3.0}) {
    const auto t = ops::gaussian_taps(sigma, 5);
    ASSERT_EQ(t.size(), 11u);
    double s = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      s += t[i];
      EXPECT_EQ(t[i], t[t.size() - 1 - i]);
    }
    EXPECT_NEAR(s, 1.0, 1e-15);
    // Ratio of neighbouring taps follows the Gaussian exponent.
    EXPECT_NEAR(t[6] / t[5], std::exp(-1.0 / (2 * sigma * sigma)), 1e-14);
  }
}

TEST(GaussianBlur, ConstantImageUnchanged) {
  Tape tape;
  const Tensor c(Shape{2, 9, 9}, 0.37);
  Var y = ops::gaussian_blur(tape.constant(c), 1.5, 4);
  EXPECT_LT(max_abs_diff(y.value(), c), 1e-15);
  Var v = ops::gaussian_blur(tape.constant(c), 1.5, 2, ops::BlurPadding::Valid);
  EXPECT_EQ(v.shape(), (Shape{2, 5, 5}));
}

TEST(AvgPool, HandValue) {
  Tape tape;
  Var y = ops::avg_pool2d(tape.constant(Tensor::from({1, 2, 4}, {1, 2, 3, 4, 5, 6, 7, 8})), 2);
  EXPECT_EQ(y.value(), Tensor::from({1, 1, 2}, {3.5, 5.5}));
}

TEST(ColumnCosine, ZeroColumnGivesZero) {
  Tape tape;
  Var a = tape.constant(Tensor::from({2, 2}, {1, 0, 0, 0}));
  Var b = tape.constant(Tensor::from({2, 1}, {1, 1}));
  Var y = ops::column_cosine(a, b);
  EXPECT_NEAR(y.value()[0], 1.0 / std::sqrt(2.0), 1e-9);
  EXPECT_EQ(y.value()[1], 0.0);
}

// --- gradient-check suite ---------------------------------------------------

TEST(GradCheck, StandardSuitePasses) {
  const auto suite = standard_gradcheck_suite();
  std::set<std::string> names;
  for (const auto& c : suite) names.insert(c.name);
  EXPECT_EQ(names.size(), suite.size());
  for (const char* required :
       {"add", "mul", "relu", "conv2d.input", "grid_sample.grid", "gaussian_blur.replicate",
        "cosine_similarity", "ssim", "control_loss", "fidelity_loss", "composite_deform.flow",
        "simulation_objective"}) {
    EXPECT_TRUE(names.count(required)) << required;
  }
  const auto rows = run_gradchecks(suite, 20, 1e-4, 1e-4, 0);
  ASSERT_EQ(rows.size(), suite.size());
  for (const auto& r : rows) {
    EXPECT_TRUE(r.pass) << r.name << " " << r.max_error;
    EXPECT_LT(r.max_error, 1e-4) << r.name;
    EXPECT_EQ(r.instances, 20);
  }
}

namespace {

// Square with a deliberately wrong vector-Jacobian product (x instead of 2x).
Var broken_square(Var a) {
  static const auto prim = std::make_shared<const Primitive>(Primitive{
      "broken_square",
      [](std::span<const Tensor* const> in) {
        Tensor out = *in[0];
        for (double& v : out.data()) v *= v;
        return out;
      },
      [](std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
         std::span<Tensor* const> grad_in) {
        if (!grad_in[0]) return;
        for (std::size_t i = 0; i < g.numel(); ++i) (*grad_in[0])[i] += g[i] * (*in[0])[i];
      }});
  return a.tape().apply(prim, {a});
}

}  // namespace

TEST(GradCheck, CorruptedGradientIsDetected) {
  const Tensor x = test::random_tensor({6}, 7, 0.5, 1.0);
  EXPECT_GT(finite_diff_check([](Var v) { return ops::sum(broken_square(v)); }, x), 0.4);

  GradCheckCase bad{"broken_square", [](std::uint64_t seed, double h) {
                      return finite_diff_check([](Var v) { return ops::sum(broken_square(v)); },
                                               test::random_tensor({8}, seed, 0.5, 1.0), h);
                    }};
  const auto rows = run_gradchecks({bad}, 20, 1e-4, 1e-4, 0);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_FALSE(rows[0].pass);
}
