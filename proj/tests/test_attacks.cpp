#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "uad/attacks.hpp"
#include "uad/error.hpp"
#include "uad/eval.hpp"

using namespace uad;
using attacks::AttackConfig;

namespace {

const seg::Model& model0() {
  static const seg::Model m = seg::Model::build(0, {});
  return m;
}

seg::SyntheticScene scene(int i) { return seg::generate_scene(1000 + i, 64, 64, 3); }

void expect_feasible(const attacks::AttackResult& r, const Tensor& image, double eps) {
  EXPECT_LE(max_abs(r.perturbation), eps + 1e-9);
  EXPECT_GE(min_value(r.adversarial), 0.0);
  EXPECT_LE(max_value(r.adversarial), 1.0);
  EXPECT_EQ(r.adversarial, image + r.perturbation);
}

std::vector<double> trace_values(const attacks::AttackResult& r, const std::string& stage,
                                 const std::string& term) {
  std::vector<double> v;
  for (const auto& p : r.trace)
    if (p.stage == stage && p.term == term) v.push_back(p.value);
  return v;
}

AttackConfig quick(int steps = 5) {
  AttackConfig c;
  c.steps = steps;
  c.deform_steps = 3;
  c.proxy_steps = 2;
  return c;
}

double total_variation_of(const warp::FlowField& f) {
  Tape tape;
  return losses::total_variation(tape.constant(f.vectors)).value().item();
}

}  // namespace

TEST(ClipStep, Examples) {
  const Tensor orig = test::random_tensor({3, 4, 4}, 1, 0.2, 0.8);
  const double eps = 8.0 / 255;
  EXPECT_EQ(attacks::clip_step(orig, orig, eps), orig);
  Tensor up = orig;
  for (double& v : up.data()) v += 2 * eps;
  const Tensor c = attacks::clip_step(up, orig, eps);
  for (std::size_t i = 0; i < c.numel(); ++i) EXPECT_EQ(c[i], std::min(1.0, orig[i] + eps));
}

TEST(ClipStep, RandomCandidatesSatisfyBothBoxes) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Tensor orig = test::random_tensor({3, 8, 8}, 10 + s);
    const Tensor cand = test::random_tensor({3, 8, 8}, 50 + s, -0.5, 1.5);
    const Tensor c = attacks::clip_step(cand, orig, 0.05);
    for (std::size_t i = 0; i < c.numel(); ++i) {
      EXPECT_LE(std::abs(c[i] - orig[i]), 0.05 + 1e-12);
      EXPECT_GE(c[i], 0.0);
      EXPECT_LE(c[i], 1.0);
    }
  }
}

TEST(Config, Validation) {
  AttackConfig c;
  EXPECT_NO_THROW(c.validate());
  c.epsilon = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.steps = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.flow_fields = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.input_diversity_prob = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, Defaults) {
  const AttackConfig c;
  EXPECT_EQ(c.epsilon, 8.0 / 255);
  EXPECT_EQ(c.alpha, 2.0 / 255);
  EXPECT_EQ(c.steps, 40);
  EXPECT_EQ(c.proxy_steps, 4);
  EXPECT_EQ(c.deform_steps, 40);
  EXPECT_EQ(c.sam_k, 400);
}

TEST(ZeroSteps, EveryAttackReturnsTheCleanImage) {
  const auto sc = scene(0);
  const auto other = scene(1);
  AttackConfig c;
  c.steps = 0;
  std::vector<attacks::AttackResult> rs;
  rs.push_back(attacks::tap_attack(model0(), sc.image, c));
  rs.push_back(attacks::aa_attack(model0(), sc.image, other.image, c));
  rs.push_back(attacks::pata_attack(model0(), sc.image, other.image, scene(2).image, c, true));
  rs.push_back(attacks::attack_sam_k(model0(), sc.image, 16, c));
  rs.push_back(attacks::simulation_stage(std::span(&model0(), 1), sc.image, other.image, c));
  for (const auto& r : rs) {
    EXPECT_EQ(r.adversarial, sc.image);
    EXPECT_EQ(max_abs(r.perturbation), 0.0);
  }
}

TEST(ZeroSteps, ProxyAndDeformationAreIdentity) {
  const auto sc = scene(0);
  EXPECT_EQ(attacks::proxy_perturb(model0(), sc.image, scene(1).image, 0, 2.0 / 255, 8.0 / 255),
            sc.image);
  AttackConfig c;
  c.deform_steps = 0;
  EXPECT_EQ(attacks::deformation_stage(model0(), sc.image, c).deformed, sc.image);
}

TEST(Feasibility, AllAttacksRandomConfigs) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.5, 16.0);
  for (int s = 0; s < 3; ++s) {
    const auto sc = scene(s);
    AttackConfig c = quick(4);
    c.epsilon = u(rng) / 255;
    c.alpha = std::min(c.epsilon, u(rng) / 255);
    c.seed = static_cast<std::uint64_t>(s);
    const double eps = c.epsilon;
    const std::vector<Tensor> pool{scene(5).image, scene(6).image};
    expect_feasible(attacks::uad_attack(std::span(&model0(), 1), sc.image, c), sc.image, eps);
    expect_feasible(attacks::tap_attack(model0(), sc.image, c), sc.image, eps);
    expect_feasible(attacks::aa_attack(model0(), sc.image, scene(4).image, c), sc.image, eps);
    expect_feasible(attacks::pata_attack(model0(), sc.image, scene(4).image, pool[0], c, false),
                    sc.image, eps);
    expect_feasible(attacks::pata_attack(model0(), sc.image, scene(4).image, pool[0], c, true, pool),
                    sc.image, eps);
    expect_feasible(attacks::attack_sam_k(model0(), sc.image, 25, c), sc.image, eps);
    const Tensor proxy =
        attacks::proxy_perturb(model0(), sc.image, scene(4).image, 3, c.alpha, c.epsilon);
    EXPECT_LE(max_abs(proxy - sc.image), eps + 1e-9);
  }
}

TEST(Determinism, SameSeedSameResult) {
  const auto sc = scene(3);
  const AttackConfig c = quick();
  const auto a = attacks::uad_attack(std::span(&model0(), 1), sc.image, c);
  const auto b = attacks::uad_attack(std::span(&model0(), 1), sc.image, c);
  EXPECT_EQ(a.adversarial, b.adversarial);
  EXPECT_EQ(*a.deformed, *b.deformed);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) EXPECT_EQ(a.trace[i].value, b.trace[i].value);
}

TEST(Tap, FeatureDistanceIncreasesOverFirstFiveSteps) {
  const AttackConfig c = quick(5);
  for (int s = 0; s < 20; ++s) {
    const auto r = attacks::tap_attack(model0(), scene(s).image, c);
    const auto d = trace_values(r, "attack", "feature_distance");
    ASSERT_EQ(d.size(), 6u);
    for (std::size_t t = 1; t < d.size(); ++t) EXPECT_GT(d[t], d[t - 1]) << "scene " << s;
  }
}

TEST(Aa, FidelityToTargetDecreases) {
  const AttackConfig c = quick(10);
  for (int s = 0; s < 20; ++s) {
    const auto r = attacks::aa_attack(model0(), scene(s).image, scene((s + 7) % 20).image, c);
    const auto d = trace_values(r, "attack", "fidelity_target");
    ASSERT_EQ(d.size(), 11u);
    EXPECT_LT(d.back(), d.front()) << "scene " << s;
  }
}

TEST(Aa, SelfTargetStartsAtZero) {
  const auto sc = scene(2);
  const auto r = attacks::aa_attack(model0(), sc.image, sc.image, quick(3));
  EXPECT_NEAR(trace_values(r, "attack", "fidelity_target").front(), 0.0, 1e-12);
  expect_feasible(r, sc.image, 8.0 / 255);
}

TEST(Pata, ZeroDominanceEqualsAa) {
  const auto sc = scene(1);
  AttackConfig c = quick(6);
  c.lambda_dom = 0.0;
  const auto p = attacks::pata_attack(model0(), sc.image, scene(2).image, scene(3).image, c, false);
  const auto a = attacks::aa_attack(model0(), sc.image, scene(2).image, c);
  EXPECT_EQ(p.adversarial, a.adversarial);
}

TEST(Pata, PlusPlusWithOneSceneEqualsPlain) {
  const auto sc = scene(1);
  const AttackConfig c = quick(6);
  const std::vector<Tensor> pool{scene(3).image};
  const auto pp = attacks::pata_attack(model0(), sc.image, scene(2).image, scene(3).image, c, true, pool);
  const auto p = attacks::pata_attack(model0(), sc.image, scene(2).image, scene(3).image, c, false);
  EXPECT_EQ(pp.adversarial, p.adversarial);
  EXPECT_NE(p.adversarial,
            attacks::aa_attack(model0(), sc.image, scene(2).image, c).adversarial);
}

TEST(Uad, EqualsComposedStages) {
  const auto sc = scene(4);
  const AttackConfig c = quick();
  const auto full = attacks::uad_attack(std::span(&model0(), 1), sc.image, c);
  const auto d = attacks::deformation_stage(model0(), sc.image, c);
  const auto s = attacks::simulation_stage(std::span(&model0(), 1), sc.image, d.deformed, c);
  EXPECT_EQ(full.adversarial, s.adversarial);
  EXPECT_EQ(*full.deformed, d.deformed);
}

TEST(Uad, SimulationDoesNotTouchTheTarget) {
  const auto sc = scene(4);
  const Tensor deformed = scene(5).image;
  const std::uint64_t before = checksum(deformed);
  attacks::simulation_stage(std::span(&model0(), 1), sc.image, deformed, quick());
  EXPECT_EQ(checksum(deformed), before);
}

TEST(Uad, EnsembleOfOneModelTwiceEqualsSingle) {
  const auto sc = scene(6);
  const AttackConfig c = quick();
  const std::vector<seg::Model> two{model0(), model0()};
  const Tensor deformed = scene(7).image;
  EXPECT_EQ(attacks::simulation_stage(two, sc.image, deformed, c).adversarial,
            attacks::simulation_stage(std::span(&model0(), 1), sc.image, deformed, c).adversarial);
  const std::vector<seg::Model> mixed{model0(), seg::Model::build(1, {})};
  expect_feasible(attacks::simulation_stage(mixed, sc.image, deformed, c), sc.image, c.epsilon);
}

TEST(Deformation, LossDecreasesFromOne) {
  for (double lambda_c : {1.0, 0.0}) {
    AttackConfig c;
    c.weights.lambda_c = lambda_c;
    for (int s = 0; s < 3; ++s) {
      const auto d = attacks::deformation_stage(model0(), scene(s).image, c);
      Tape tape;
      const double ld =
          losses::deformation_loss(tape.constant(d.deformed), tape.constant(scene(s).image))
              .value()
              .item();
      EXPECT_LT(ld, 1.0) << "lambda_c " << lambda_c << " scene " << s;
      const auto trace = [&] {
        std::vector<double> v;
        for (const auto& p : d.trace)
          if (p.term == "loss_d") v.push_back(p.value);
        return v;
      }();
      EXPECT_EQ(trace.back(), ld);
    }
  }
}

TEST(Deformation, StrongControlKeepsFlowsNearConstant) {
  const auto sc = scene(2);
  AttackConfig free_cfg, stiff_cfg;
  free_cfg.weights.lambda_c = 0.0;
  stiff_cfg.weights.lambda_c = 1e3;
  const auto free_run = attacks::deformation_stage(model0(), sc.image, free_cfg);
  const auto stiff_run = attacks::deformation_stage(model0(), sc.image, stiff_cfg);
  ASSERT_EQ(free_run.flows.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    const double tv_free = total_variation_of(free_run.flows[k]);
    EXPECT_GT(tv_free, 0.0);
    EXPECT_LT(total_variation_of(stiff_run.flows[k]), 0.01 * tv_free) << "field " << k;
  }
}

TEST(Proxy, MovesTowardTheTarget) {
  int better = 0;
  for (int s = 0; s < 20; ++s) {
    const Tensor img = scene(s).image;
    warp::FlowField flow{test::random_tensor({64, 64, 2}, 300 + s, -2, 2)};
    const Tensor target = warp::deform(img, flow);
    const Tensor ft = model0().encode(target);
    auto fid = [&](const Tensor& x) {
      Tape tape;
      return losses::fidelity_loss(tape.constant(ft), tape.constant(model0().encode(x)))
          .value()
          .item();
    };
    const Tensor proxy = attacks::proxy_perturb(model0(), img, target, 4, 2.0 / 255, 8.0 / 255);
    better += fid(proxy) <= fid(img);
  }
  EXPECT_GE(better, 18);
}

TEST(Momentum, ConstantGradientKeepsItsSign) {
  attacks::Momentum m(1.0);
  const Tensor g = Tensor::from({4}, {0.5, -2, 0, 3});
  for (int t = 0; t < 5; ++t) {
    const Tensor& d = m.update(g);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_EQ(d[i] > 0, g[i] > 0);
      EXPECT_EQ(d[i] < 0, g[i] < 0);
    }
    EXPECT_NEAR(d[3], (t + 1) * 3.0 / 5.5, 1e-12);
  }
}

TEST(Decorators, DisabledIsIdentical) {
  const auto sc = scene(8);
  AttackConfig plain = quick(6);
  AttackConfig off = plain;
  off.momentum_mu = 0.0;
  off.input_diversity_prob = 0.0;
  EXPECT_EQ(attacks::tap_attack(model0(), sc.image, plain).adversarial,
            attacks::tap_attack(model0(), sc.image, off).adversarial);
}

TEST(Decorators, IdentityResizeIsIdentical) {
  const auto sc = scene(8);
  AttackConfig plain = quick(6);
  AttackConfig di = plain;
  di.input_diversity_prob = 1.0;
  di.diversity_min_scale = di.diversity_max_scale = 1.0;
  EXPECT_EQ(attacks::aa_attack(model0(), sc.image, scene(9).image, plain).adversarial,
            attacks::aa_attack(model0(), sc.image, scene(9).image, di).adversarial);
  Tape tape;
  Var x = tape.constant(sc.image);
  EXPECT_EQ(attacks::diversity_resize(x, 1.0).value(), sc.image);
}

TEST(Decorators, ActiveDecoratorsStayFeasible) {
  const auto sc = scene(8);
  AttackConfig c = quick(6);
  c.momentum_mu = 1.0;
  c.input_diversity_prob = 0.7;
  const auto r = attacks::tap_attack(model0(), sc.image, c);
  expect_feasible(r, sc.image, c.epsilon);
  EXPECT_NE(r.adversarial, attacks::tap_attack(model0(), sc.image, quick(6)).adversarial);
}

TEST(SamK, GridLayout) {
  const auto pts = attacks::sam_k_grid(64, 64, 400);
  ASSERT_EQ(pts.size(), 400u);
  EXPECT_DOUBLE_EQ(pts.front().x, 1.1);
  EXPECT_DOUBLE_EQ(pts.front().y, 1.1);
  EXPECT_DOUBLE_EQ(pts.back().x, 61.9);
  EXPECT_DOUBLE_EQ(pts.back().y, 61.9);
  const auto one = attacks::sam_k_grid(64, 64, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].x, 31.5);
  EXPECT_EQ(one[0].y, 31.5);
}

TEST(SamK, NonSquareKWarns) {
  const auto sc = scene(0);
  const auto r = attacks::attack_sam_k(model0(), sc.image, 10, quick(2));
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("9"), std::string::npos);
  EXPECT_TRUE(attacks::attack_sam_k(model0(), sc.image, 9, quick(2)).warnings.empty());
  EXPECT_THROW(attacks::attack_sam_k(model0(), sc.image, 0, quick(2)), ConfigError);
}

TEST(SamK, SingleCentrePromptIsAttacked) {
  const auto sc = scene(0);
  const auto r = attacks::attack_sam_k(model0(), sc.image, 1, quick(10));
  EXPECT_LT(eval::prompt_iou(model0(), sc.image, r.adversarial, seg::Prompt::point(31.5, 31.5)),
            1.0);
}
