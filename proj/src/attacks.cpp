#include "uad/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "uad/error.hpp"
#include "uad/ops.hpp"

namespace uad::attacks {

using namespace uad::ops;

void AttackConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) {
    throw ConfigError("epsilon must lie in (0, 1], got " + std::to_string(epsilon));
  }
  if (!(alpha > 0.0 && alpha <= epsilon)) {
    throw ConfigError("alpha must lie in (0, epsilon], got " + std::to_string(alpha));
  }
  if (steps < 0 || proxy_steps < 0 || deform_steps < 0) {
    throw ConfigError("iteration counts must be non-negative");
  }
  if (!(deform_step > 0.0)) throw ConfigError("deform_step must be positive");
  if (max_halvings < 0) throw ConfigError("max_halvings must be non-negative");
  if (!(control_smoothing > 0.0)) throw ConfigError("control_smoothing must be positive");
  if (!(init_shift >= 0.0)) throw ConfigError("init_shift must be non-negative");
  if (flow_fields < 1) throw ConfigError("flow_fields must be at least 1");
  if (!(mask_sigma >= 0.0)) throw ConfigError("mask_sigma must be non-negative");
  if (momentum_mu < 0.0) throw ConfigError("momentum_mu must be non-negative");
  if (!(input_diversity_prob >= 0.0 && input_diversity_prob <= 1.0)) {
    throw ConfigError("input_diversity_prob must lie in [0, 1]");
  }
  if (!(diversity_min_scale > 0.0 && diversity_min_scale <= diversity_max_scale)) {
    throw ConfigError("diversity scale range is empty or non-positive");
  }
  if (tap_p != 1.0 && tap_p != 2.0) throw ConfigError("tap_p must be 1 or 2");
  if (lambda_dom < 0.0) throw ConfigError("lambda_dom must be non-negative");
  if (sam_k < 1) throw ConfigError("sam_k must be at least 1");
  weights.validate();
}

Tensor clip_step(const Tensor& candidate, const Tensor& original, double epsilon) {
  require_same_shape(candidate, original, "clip_step");
  Tensor out = candidate;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double lo = std::max(0.0, original[i] - epsilon);
    const double hi = std::min(1.0, original[i] + epsilon);
    out[i] = std::clamp(out[i], lo, hi);
  }
  return out;
}

Var diversity_resize(Var image, double s) {
  if (s == 1.0) return image;
  const std::size_t h = image.shape()[1], w = image.shape()[2];
  const double ci = 0.5 * static_cast<double>(h - 1), cj = 0.5 * static_cast<double>(w - 1);
  Tensor grid(Shape{h, w, 2});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      grid.at(i, j, 0) = ci + (static_cast<double>(i) - ci) / s;
      grid.at(i, j, 1) = cj + (static_cast<double>(j) - cj) / s;
    }
  return ops::grid_sample(image, image.tape().constant(std::move(grid)));
}

const Tensor& Momentum::update(const Tensor& grad) {
  double l1 = 0.0;
  for (double g : grad.data()) l1 += std::abs(g);
  if (accum_.numel() == 0) accum_ = Tensor(grad.shape());
  const double inv = l1 > 0.0 ? 1.0 / l1 : 0.0;
  for (std::size_t i = 0; i < grad.numel(); ++i) accum_[i] = mu_ * accum_[i] + grad[i] * inv;
  return accum_;
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Tensor signed_step(const Tensor& x, const Tensor& direction, double alpha) {
  Tensor out = x;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= alpha * sign(direction[i]);
  return out;
}

// Builds the scalar loss for the (possibly augmented) input at iteration t.
using Objective = std::function<Var(Var x, int t)>;

struct LoopOptions {
  std::string stage;
  std::string term;
  bool decorate = false;  // MI and DI apply only to the main adversarial loop
  bool record = true;
};

// Signed-gradient descent from `start`, projected around `original`.
// Records the loss at every iterate including the final one.
Tensor run_pgd(const Tensor& original, Tensor start, int steps, const Objective& objective,
               const AttackConfig& config, const LoopOptions& opt,
               std::vector<TracePoint>* trace) {
  Tensor x = std::move(start);
  std::mt19937_64 rng(config.seed ^ 0x5DEECE66DULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool mi = opt.decorate && config.momentum_mu > 0.0;
  const bool di = opt.decorate && config.input_diversity_prob > 0.0;
  Momentum momentum(config.momentum_mu);
  for (int t = 0; t < steps; ++t) {
    Tape tape;
    Var leaf = tape.leaf(x);
    Var input = leaf;
    if (di && unit(rng) < config.input_diversity_prob) {
      const double s = config.diversity_min_scale +
                       (config.diversity_max_scale - config.diversity_min_scale) * unit(rng);
      input = diversity_resize(leaf, s);
    }
    Var loss = objective(input, t);
    if (opt.record && trace) trace->push_back({opt.stage, t, opt.term, loss.value().item()});
    const Gradients grads = tape.backward(loss);
    const Tensor& g = grads[leaf];
    x = clip_step(signed_step(x, mi ? momentum.update(g) : g, config.alpha), original,
                  config.epsilon);
  }
  if (opt.record && trace && steps > 0) {
    Tape tape;
    Var loss = objective(tape.constant(x), steps);
    trace->push_back({opt.stage, steps, opt.term, loss.value().item()});
  }
  return x;
}

AttackResult make_result(const Tensor& image, Tensor adversarial, const AttackConfig& config) {
  AttackResult r;
  r.perturbation = adversarial - image;
  r.adversarial = std::move(adversarial);
  r.config = config;
  return r;
}

std::shared_ptr<const Tensor> share(Tensor t) { return std::make_shared<const Tensor>(std::move(t)); }

}  // namespace

Tensor proxy_perturb(const seg::Model& model, const Tensor& original, const Tensor& target,
                     int proxy_steps, double alpha, double epsilon) {
  if (proxy_steps < 0) throw ConfigError("proxy_steps must be non-negative");
  if (proxy_steps == 0) return original;
  const auto target_feat = share(model.encode(target));
  AttackConfig cfg;
  cfg.alpha = alpha;
  cfg.epsilon = epsilon;
  Objective obj = [&](Var x, int) {
    return losses::fidelity_loss(x.tape().constant(target_feat), model.encode(x));
  };
  return run_pgd(original, original, proxy_steps, obj, cfg, {"proxy", "fidelity", false, false},
                 nullptr);
}

DeformationResult deformation_stage(const seg::Model& model, const Tensor& image,
                                    const AttackConfig& config) {
  config.validate();
  const std::size_t h = image.dim(1), w = image.dim(2);
  const auto k = static_cast<std::size_t>(config.flow_fields);
  DeformationResult out;
  std::vector<Tensor> flows(k, warp::identity_flow(h, w).vectors);
  if (config.deform_steps == 0) {
    out.deformed = image;
    for (auto& f : flows) out.flows.push_back({f});
    return out;
  }
  if (config.init_shift > 0.0) {
    std::mt19937_64 rng(config.seed ^ 0xF10F1E1DULL);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    for (Tensor& f : flows) {
      const double a = angle(rng);
      const double du = config.init_shift * std::sin(a), dv = config.init_shift * std::cos(a);
      for (std::size_t p = 0; p < h * w; ++p) {
        f[2 * p] = du;
        f[2 * p + 1] = dv;
      }
    }
  }
  const warp::FilterMaskSet masks = warp::make_filter_masks(h, w, k, config.mask_sigma);
  const auto original = share(image);
  const losses::LossWeights& lw = config.weights;

  struct Eval {
    double total, ld, lc, lf;
    std::vector<Tensor> grads;
  };
  auto evaluate = [&](const std::vector<Tensor>& wts, const TensorPtr& proxy_feat,
                      bool need_grad) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& f : wts) vars.push_back(tape.leaf(f, need_grad));
    Var img = tape.constant(original);
    Var deformed = warp::composite_deform(img, vars, masks);
    Var ld = losses::deformation_loss(deformed, img);
    Var lc = losses::control_loss(vars, lw.lambda_tv, lw.lambda_var, config.control_smoothing);
    Var lf = losses::fidelity_loss(model.encode(deformed), tape.constant(proxy_feat));
    Var total = ld + lw.lambda_c * lc + lw.lambda_f * lf;
    Eval e{total.value().item(), ld.value().item(), lc.value().item(), lf.value().item(), {}};
    if (need_grad) {
      const Gradients g = tape.backward(total);
      for (const Var& v : vars) e.grads.push_back(g[v]);
    }
    return e;
  };

  double prev_step = config.deform_step;
  for (int it = 0; it < config.deform_steps; ++it) {
    const Tensor current = warp::composite_deform(
        image, std::vector<warp::FlowField>(flows.begin(), flows.end()), masks);
    const Tensor proxy =
        proxy_perturb(model, image, current, config.proxy_steps, config.alpha, config.epsilon);
    const auto proxy_feat = share(model.encode(proxy));
    const Eval e = evaluate(flows, proxy_feat, true);
    out.trace.push_back({"deform", it, "loss_d", e.ld});
    out.trace.push_back({"deform", it, "loss_c", e.lc});
    out.trace.push_back({"deform", it, "loss_f", e.lf});
    out.trace.push_back({"deform", it, "total", e.total});

    auto stepped = [&](double eta) {
      std::vector<Tensor> next = flows;
      for (std::size_t f = 0; f < k; ++f) next[f] = flows[f] - e.grads[f] * eta;
      return next;
    };
    double eta = config.deform_step;
    if (!config.deform_backtracking) {
      flows = stepped(eta);
    } else {
      double gnorm2 = 0.0;
      for (const Tensor& g : e.grads)
        for (double v : g.data()) gnorm2 += v * v;
      eta = std::min(config.deform_step, 2.0 * prev_step);
      bool accepted = false;
      for (int half = 0; half <= config.max_halvings && gnorm2 > 0.0; ++half, eta *= 0.5) {
        std::vector<Tensor> trial = stepped(eta);
        if (evaluate(trial, proxy_feat, false).total <= e.total - 1e-4 * eta * gnorm2) {
          flows = std::move(trial);
          accepted = true;
          break;
        }
      }
      if (accepted) {
        prev_step = eta;
      } else {
        prev_step = eta;
        eta = 0.0;
      }
    }
    out.trace.push_back({"deform", it, "step", eta});
  }
  for (auto& f : flows) out.flows.push_back({std::move(f)});
  out.deformed = warp::composite_deform(image, out.flows, masks);
  {
    Tape tape;
    out.trace.push_back({"deform", config.deform_steps, "loss_d",
                         losses::deformation_loss(tape.constant(out.deformed),
                                                  tape.constant(original))
                             .value()
                             .item()});
  }
  return out;
}

AttackResult simulation_stage(std::span<const seg::Model> models, const Tensor& image,
                              const Tensor& deformed, const AttackConfig& config) {
  config.validate();
  if (models.empty()) throw ConfigError("simulation_stage needs at least one model");
  require_same_shape(image, deformed, "simulation_stage");
  std::vector<TensorPtr> feat_deformed, feat_original;
  for (const seg::Model& m : models) {
    feat_deformed.push_back(share(m.encode(deformed)));
    feat_original.push_back(share(m.encode(image)));
  }
  const double beta = config.weights.beta;
  Objective obj = [&](Var x, int) {
    Tape& tape = x.tape();
    Var total;
    for (std::size_t i = 0; i < models.size(); ++i) {
      Var term = losses::simulation_objective_features(tape.constant(feat_deformed[i]),
                                                       tape.constant(feat_original[i]),
                                                       models[i].encode(x), beta);
      total = i == 0 ? term : total + term;
    }
    return models.size() == 1 ? total : total * (1.0 / static_cast<double>(models.size()));
  };
  std::vector<TracePoint> trace;
  Tensor adv = run_pgd(image, image, config.steps, obj, config, {"simulate", "objective", true, true},
                       &trace);
  AttackResult r = make_result(image, std::move(adv), config);
  r.trace = std::move(trace);
  r.deformed = deformed;
  return r;
}

AttackResult uad_attack(std::span<const seg::Model> models, const Tensor& image,
                        const AttackConfig& config) {
  if (models.empty()) throw ConfigError("uad_attack needs at least one model");
  DeformationResult d = deformation_stage(models[0], image, config);
  AttackResult r = simulation_stage(models, image, d.deformed, config);
  d.trace.insert(d.trace.end(), r.trace.begin(), r.trace.end());
  r.trace = std::move(d.trace);
  return r;
}

AttackResult tap_attack(const seg::Model& model, const Tensor& image, const AttackConfig& config) {
  config.validate();
  if (config.steps == 0) return make_result(image, image, config);
  const auto clean_feat = share(model.encode(image));
  Objective obj = [&](Var x, int) {
    Var d = model.encode(x) - x.tape().constant(clean_feat);
    Var dist = config.tap_p == 2.0 ? ops::sqrt_eps(ops::sum(ops::square(d)))
                                   : ops::sum(ops::sqrt_eps(ops::square(d)));
    return -dist;
  };
  // The distance has a zero gradient at r = 0, so start from a seeded kick
  // of one step size.
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> kick(-config.alpha, config.alpha);
  Tensor start = image;
  for (double& v : start.data()) v += kick(rng);
  start = clip_step(start, image, config.epsilon);
  std::vector<TracePoint> trace;
  Tensor adv = run_pgd(image, std::move(start), config.steps, obj, config,
                       {"attack", "neg_feature_distance", true, true}, &trace);
  for (TracePoint& p : trace) {
    p.term = "feature_distance";
    p.value = -p.value;
  }
  AttackResult r = make_result(image, std::move(adv), config);
  r.trace = std::move(trace);
  return r;
}

AttackResult aa_attack(const seg::Model& model, const Tensor& image, const Tensor& target,
                       const AttackConfig& config) {
  return pata_attack(model, image, target, target, [&] {
    AttackConfig c = config;
    c.lambda_dom = 0.0;
    return c;
  }(), false);
}

AttackResult pata_attack(const seg::Model& model, const Tensor& image, const Tensor& target,
                         const Tensor& competition, const AttackConfig& config, bool plus_plus,
                         std::span<const Tensor> pool) {
  config.validate();
  require_same_shape(image, target, "target image");
  require_same_shape(image, competition, "competition image");
  for (const Tensor& p : pool) require_same_shape(image, p, "competition pool image");
  const auto target_feat = share(model.encode(target));
  const bool dominance = config.lambda_dom > 0.0;
  // Competition features per iteration; PATA++ redraws from the pool.
  std::vector<TensorPtr> pool_feat;
  if (dominance && plus_plus && !pool.empty()) {
    for (const Tensor& p : pool) pool_feat.push_back(share(model.encode(p)));
  } else if (dominance) {
    pool_feat.push_back(share(model.encode(competition)));
  }
  std::vector<std::size_t> draws;
  if (dominance) {
    std::mt19937_64 rng(config.seed ^ 0xC0FFEEULL);
    std::uniform_int_distribution<std::size_t> pick(0, pool_feat.size() - 1);
    for (int t = 0; t <= config.steps; ++t) {
      draws.push_back(plus_plus && pool_feat.size() > 1 ? pick(rng) : 0);
    }
  }
  Objective obj = [&](Var x, int t) {
    Tape& tape = x.tape();
    Var f = model.encode(x);
    Var loss = losses::fidelity_loss(tape.constant(target_feat), f);
    if (!dominance) return loss;
    Var comp = losses::fidelity_loss(tape.constant(pool_feat[draws[static_cast<std::size_t>(t)]]), f);
    return loss - config.lambda_dom * comp;
  };
  std::vector<TracePoint> trace;
  Tensor adv = run_pgd(image, image, config.steps, obj, config,
                       {"attack", dominance ? "objective" : "fidelity_target", true, true}, &trace);
  AttackResult r = make_result(image, std::move(adv), config);
  r.trace = std::move(trace);
  return r;
}

std::vector<seg::Point> sam_k_grid(std::size_t height, std::size_t width, int k) {
  if (k < 1) throw ConfigError("K must be at least 1");
  const auto g = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(k)) + 1e-9));
  std::vector<seg::Point> pts;
  for (std::size_t i = 0; i < g; ++i)
    for (std::size_t j = 0; j < g; ++j) {
      const double y = (static_cast<double>(i) + 0.5) * static_cast<double>(height) /
                           static_cast<double>(g) - 0.5;
      const double x = (static_cast<double>(j) + 0.5) * static_cast<double>(width) /
                           static_cast<double>(g) - 0.5;
      pts.push_back({x, y, true});
    }
  return pts;
}

AttackResult attack_sam_k(const seg::Model& model, const Tensor& image, int k,
                          const AttackConfig& config) {
  config.validate();
  const std::vector<seg::Point> pts = sam_k_grid(image.dim(1), image.dim(2), k);
  std::vector<std::string> warnings;
  if (static_cast<int>(pts.size()) != k) {
    warnings.push_back("K=" + std::to_string(k) + " is not a square; using " +
                       std::to_string(pts.size()) + " grid prompts");
  }
  const std::size_t n = pts.size();
  const std::size_t h = image.dim(1), w = image.dim(2);
  const std::size_t fh = h / seg::kStride, fw = w / seg::kStride;
  const double inv = 1.0 / static_cast<double>(seg::kStride);
  Tensor grid(Shape{1, n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    grid.at(0, i, 0) = pts[i].y * inv;
    grid.at(0, i, 1) = pts[i].x * inv;
  }
  const auto prompt_grid = share(std::move(grid));
  const auto up_grid = share(seg::upsample_grid(h, w));
  const double tau = model.decoder().temperature;
  const double theta = model.decoder().cos_threshold;
  Objective obj = [&](Var x, int) {
    Tape& tape = x.tape();
    Var f = model.encode(x);
    const std::size_t c = f.shape()[0];
    Var emb = ops::reshape(ops::grid_sample(f, tape.constant(prompt_grid)), {c, n});
    Var cosine = ops::column_cosine(emb, ops::reshape(f, {c, fh * fw}));
    Var small = ops::reshape(cosine * tau - tau * theta, {n, fh, fw});
    Var logits = ops::grid_sample(small, tape.constant(up_grid));
    return ops::sum(ops::relu(logits)) * (1.0 / static_cast<double>(h * w));
  };
  std::vector<TracePoint> trace;
  Tensor adv = run_pgd(image, image, config.steps, obj, config,
                       {"attack", "positive_logit_mass", true, true}, &trace);
  AttackResult r = make_result(image, std::move(adv), config);
  r.trace = std::move(trace);
  r.warnings = std::move(warnings);
  return r;
}

}  // namespace uad::attacks
