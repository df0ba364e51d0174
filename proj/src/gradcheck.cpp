#include "uad/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "uad/error.hpp"

namespace uad {

double finite_diff_check(const ScalarFn& f, const Tensor& x, double h) {
  Tensor analytic;
  {
    Tape tape;
    Var v = tape.leaf(x, true);
    Var loss = f(v);
    analytic = tape.backward(loss)[v];
  }
  auto eval = [&f](const Tensor& at) {
    Tape tape;
    return f(tape.leaf(at, false)).value().item();
  };
  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = eval(probe);
    probe[i] = orig - h;
    const double down = eval(probe);
    probe[i] = orig;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[i] - fd) / (std::abs(fd) + 1e-8));
  }
  return worst;
}

std::vector<GradCheckRow> run_gradchecks(const std::vector<GradCheckCase>& cases, int instances,
                                         double h, double tolerance, std::uint64_t seed) {
  std::vector<GradCheckRow> rows;
  rows.reserve(cases.size());
  for (std::size_t c = 0; c < cases.size(); ++c) {
    GradCheckRow row{cases[c].name, 0.0, instances, true};
    for (int i = 0; i < instances; ++i) {
      const std::uint64_t s = seed * 1000003ull + c * 7919ull + static_cast<std::uint64_t>(i);
      double err = 0.0;
      try {
        err = cases[c].instance(s, h);
      } catch (const Error&) {
        err = INFINITY;
      }
      if (!(err <= row.max_error)) row.max_error = err;  // propagates NaN
    }
    row.pass = row.max_error < tolerance;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace uad

#include <random>

#include "uad/losses.hpp"
#include "uad/ops.hpp"
#include "uad/warp.hpp"

namespace uad {

namespace {

using namespace ops;

Tensor uniform(std::mt19937_64& rng, Shape shape, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Values in [lo, hi] with a random sign, away from kinks at zero.
Tensor signed_away(std::mt19937_64& rng, Shape shape, double lo, double hi) {
  Tensor t = uniform(rng, std::move(shape), lo, hi);
  std::bernoulli_distribution flip(0.5);
  for (double& v : t.data())
    if (flip(rng)) v = -v;
  return t;
}

// Random linear read-out so every output element reaches the loss.
Var readout(Var out, std::mt19937_64& rng) {
  return sum(out * out.tape().constant(uniform(rng, out.shape(), -1.0, 1.0)));
}

using Builder = std::function<Var(Var x, std::mt19937_64& rng)>;

GradCheckCase unary(std::string name, Shape shape, double lo, double hi, Builder build,
                    bool signed_input = false) {
  return {std::move(name), [=](std::uint64_t seed, double h) {
            std::mt19937_64 rng(seed);
            const Tensor x = signed_input ? signed_away(rng, shape, lo, hi)
                                          : uniform(rng, shape, lo, hi);
            // The read-out weights come from a second stream so every
            // evaluation of the loss sees the same ones.
            const std::uint64_t inner = rng();
            return finite_diff_check(
                [&](Var v) {
                  std::mt19937_64 r(inner);
                  return readout(build(v, r), r);
                },
                x, h);
          }};
}

// A flow whose sampling positions stay strictly between pixel centres, where
// bilinear sampling is smooth.
Tensor off_grid_flow(std::mt19937_64& rng, std::size_t h, std::size_t w) {
  Tensor f(Shape{h, w, 2});
  std::uniform_real_distribution<double> frac(0.2, 0.8);
  std::uniform_int_distribution<int> whole(-1, 0);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t c = 0; c < 2; ++c) {
        const double base = c == 0 ? static_cast<double>(i) : static_cast<double>(j);
        const double lim = static_cast<double>(c == 0 ? h : w) - 1.0;
        double d = whole(rng) + frac(rng);
        if (base + d < 0.0) d += 1.0;
        if (base + d > lim) d -= 1.0;
        f.at(i, j, c) = d;
      }
  return f;
}

}  // namespace

std::vector<GradCheckCase> standard_gradcheck_suite() {
  std::vector<GradCheckCase> s;
  auto other = [](Var x, std::mt19937_64& rng, double lo, double hi) {
    return x.tape().constant(uniform(rng, x.shape(), lo, hi));
  };

  s.push_back(unary("add", {4, 5}, -1, 1, [=](Var x, auto& r) { return x + other(x, r, -1, 1); }));
  s.push_back(unary("sub", {4, 5}, -1, 1, [=](Var x, auto& r) { return other(x, r, -1, 1) - x; }));
  s.push_back(unary("mul", {4, 5}, -1, 1, [=](Var x, auto& r) { return x * other(x, r, -1, 1); }));
  s.push_back(unary("div.num", {4, 5}, -1, 1,
                    [=](Var x, auto& r) { return x / other(x, r, 0.5, 1.5); }));
  s.push_back(unary("div.den", {4, 5}, 0.5, 1.5,
                    [=](Var x, auto& r) { return other(x, r, -1, 1) / x; }));
  s.push_back(unary("scale", {4, 5}, -1, 1, [](Var x, auto&) { return scale(x, -2.5); }));
  s.push_back(unary("add_scalar", {4, 5}, -1, 1, [](Var x, auto&) { return add_scalar(x, 0.7); }));
  s.push_back(unary("neg", {4, 5}, -1, 1, [](Var x, auto&) { return neg(x); }));
  s.push_back(unary("square", {4, 5}, -1, 1, [](Var x, auto&) { return square(x); }));
  s.push_back(unary("relu", {4, 5}, 0.05, 1, [](Var x, auto&) { return relu(x); }, true));
  s.push_back(unary("sigmoid", {4, 5}, -3, 3, [](Var x, auto&) { return sigmoid(x); }));
  s.push_back(unary("sqrt_eps", {4, 5}, 0.1, 2, [](Var x, auto&) { return sqrt_eps(x, 1e-3); }));
  s.push_back(unary("clamp", {4, 5}, 0.05, 0.95,
                    [](Var x, auto&) { return clamp(x, -0.5, 0.5); }, true));
  s.push_back(unary("sum", {4, 5}, -1, 1, [](Var x, auto&) { return sum(x); }));
  s.push_back(unary("mean", {4, 5}, -1, 1, [](Var x, auto&) { return mean(x); }));
  s.push_back(unary("sum_axis", {3, 4, 5}, -1, 1, [](Var x, auto&) { return sum_axis(x, 1); }));
  s.push_back(unary("expand", {3, 5}, -1, 1, [](Var x, auto&) { return expand(x, 1, 4); }));
  s.push_back(unary("reshape", {3, 4, 5}, -1, 1,
                    [](Var x, auto&) { return reshape(x, Shape{12, 5}); }));
  s.push_back(unary("slice", {3, 4, 5}, -1, 1, [](Var x, auto&) { return slice(x, 2, 1, 4); }));
  s.push_back(unary("conv2d.input", {2, 5, 6}, -1, 1, [=](Var x, auto& r) {
    return conv2d(x, x.tape().constant(uniform(r, {3, 2, 3, 3}, -1, 1)), 1, 1);
  }));
  s.push_back(unary("conv2d.stride2", {2, 6, 5}, -1, 1, [=](Var x, auto& r) {
    return conv2d(x, x.tape().constant(uniform(r, {3, 2, 3, 3}, -1, 1)), 2, 1);
  }));
  s.push_back(unary("conv2d.kernel", {3, 2, 3, 3}, -1, 1, [=](Var k, auto& r) {
    return conv2d(k.tape().constant(uniform(r, {2, 5, 5}, -1, 1)), k, 1, 1);
  }));
  s.push_back(unary("avg_pool2d", {2, 4, 6}, -1, 1, [](Var x, auto&) { return avg_pool2d(x, 2); }));
  s.push_back(unary("gaussian_blur.replicate", {2, 5, 6}, -1, 1,
                    [](Var x, auto&) { return gaussian_blur(x, 1.0, 2); }));
  s.push_back(unary("gaussian_blur.valid", {2, 6, 5}, -1, 1, [](Var x, auto&) {
    return gaussian_blur(x, 1.0, 1, BlurPadding::Valid);
  }));
  s.push_back(unary("grid_sample.input", {2, 4, 5}, -1, 1, [](Var x, auto& r) {
    Tensor g = off_grid_flow(r, 3, 4);
    const Tensor id = warp::identity_grid(3, 4);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += id[i];
    return grid_sample(x, x.tape().constant(std::move(g)));
  }));
  s.push_back({"grid_sample.grid", [](std::uint64_t seed, double h) {
                 std::mt19937_64 rng(seed);
                 const Tensor img = uniform(rng, {2, 4, 5}, -1, 1);
                 Tensor g = off_grid_flow(rng, 4, 5);
                 const Tensor id = warp::identity_grid(4, 5);
                 for (std::size_t i = 0; i < g.numel(); ++i) g[i] += id[i];
                 const Tensor w = uniform(rng, {2, 4, 5}, -1, 1);
                 return finite_diff_check(
                     [&](Var v) {
                       Tape& t = v.tape();
                       return sum(grid_sample(t.constant(img), v) * t.constant(w));
                     },
                     g, h);
               }});
  s.push_back(unary("cosine_similarity", {4, 6}, -1, 1, [=](Var x, auto& r) {
    return cosine_similarity(x, other(x, r, -1, 1));
  }));
  s.push_back(unary("column_cosine", {3, 4}, -1, 1, [=](Var x, auto& r) {
    return column_cosine(x, x.tape().constant(uniform(r, {3, 5}, -1, 1)));
  }));

  s.push_back(unary("deform.image", {2, 5, 6}, 0, 1, [](Var x, auto& r) {
    return warp::deform(x, x.tape().constant(off_grid_flow(r, 5, 6)));
  }));
  s.push_back({"deform.flow", [](std::uint64_t seed, double h) {
                 std::mt19937_64 rng(seed);
                 const Tensor img = uniform(rng, {2, 5, 6}, 0, 1);
                 const Tensor flow = off_grid_flow(rng, 5, 6);
                 const Tensor w = uniform(rng, {2, 5, 6}, -1, 1);
                 return finite_diff_check(
                     [&](Var v) {
                       Tape& t = v.tape();
                       return sum(warp::deform(t.constant(img), v) * t.constant(w));
                     },
                     flow, h);
               }});
  s.push_back({"composite_deform.flow", [](std::uint64_t seed, double h) {
                 std::mt19937_64 rng(seed);
                 const Tensor img = uniform(rng, {1, 4, 8}, 0, 1);
                 const Tensor flow = off_grid_flow(rng, 4, 8);
                 const Tensor other_flow = off_grid_flow(rng, 4, 8);
                 const warp::FilterMaskSet masks = warp::make_filter_masks(4, 8, 2, 1.0, 2);
                 const Tensor w = uniform(rng, {1, 4, 8}, -1, 1);
                 return finite_diff_check(
                     [&](Var v) {
                       Tape& t = v.tape();
                       const Var flows[2] = {v, t.constant(other_flow)};
                       return sum(warp::composite_deform(t.constant(img), flows, masks) *
                                  t.constant(w));
                     },
                     flow, h);
               }});

  const losses::SsimParams small{5, 1.0, 0.01, 0.03, 1.0};
  s.push_back(unary("ssim", {1, 8, 8}, 0, 1, [=](Var x, auto& r) {
    return losses::ssim(x, other(x, r, 0, 1), small);
  }));
  s.push_back(unary("total_variation", {4, 4, 2}, -2, 2,
                    [](Var x, auto&) { return losses::total_variation(x); }));
  s.push_back(unary("total_variation.smoothed", {4, 4, 2}, -2, 2,
                    [](Var x, auto&) { return losses::total_variation(x, 1e-2); }));
  s.push_back(unary("flow_variance", {4, 4, 2}, -2, 2,
                    [](Var x, auto&) { return losses::flow_variance(x); }));
  s.push_back(unary("control_loss", {4, 4, 2}, -2, 2, [=](Var x, auto& r) {
    const Var flows[2] = {x, other(x, r, -2, 2)};
    return losses::control_loss(flows, 0.3, 0.7, 1e-2);
  }));
  s.push_back(unary("fidelity_loss", {4, 3, 3}, -1, 1, [=](Var x, auto& r) {
    return losses::fidelity_loss(other(x, r, -1, 1), x);
  }));
  s.push_back(unary("simulation_objective", {4, 3, 3}, -1, 1, [=](Var x, auto& r) {
    return losses::simulation_objective_features(other(x, r, -1, 1), other(x, r, -1, 1), x, 1.0);
  }));
  return s;
}

}  // namespace uad
