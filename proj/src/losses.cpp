#include "uad/losses.hpp"

#include <cmath>

#include "uad/error.hpp"
#include "uad/ops.hpp"

namespace uad::losses {

using namespace uad::ops;

void LossWeights::validate() const {
  if (lambda_tv < 0 || lambda_var < 0 || lambda_c < 0 || lambda_f < 0 || beta < 0) {
    throw ConfigError("loss weights must be non-negative");
  }
}

Var ssim(Var a, Var b, const SsimParams& p) {
  require_same_shape(a.value(), b.value(), "ssim");
  const Tensor& x = a.value();
  if (x.rank() != 3) throw DimensionError("ssim: expected [C,H,W], got " + shape_str(x.shape()));
  if (x.dim(1) < p.window || x.dim(2) < p.window) {
    throw SizeError("ssim: image " + std::to_string(x.dim(1)) + "x" + std::to_string(x.dim(2)) +
                    " is smaller than the " + std::to_string(p.window) + "x" +
                    std::to_string(p.window) + " window");
  }
  const std::size_t radius = p.window / 2;
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  auto filt = [&](Var v) { return gaussian_blur(v, p.sigma, radius, BlurPadding::Valid); };

  Var mu_a = filt(a), mu_b = filt(b);
  Var mu_aa = square(mu_a), mu_bb = square(mu_b), mu_ab = mu_a * mu_b;
  Var var_a = filt(square(a)) - mu_aa;
  Var var_b = filt(square(b)) - mu_bb;
  Var cov = filt(a * b) - mu_ab;
  Var num = (2.0 * mu_ab + c1) * (2.0 * cov + c2);
  Var den = (mu_aa + mu_bb + c1) * (var_a + var_b + c2);
  return mean(num / den);
}

Var deformation_loss(Var deformed, Var original) { return ssim(deformed, original); }

namespace {

void check_flow(const Tensor& f) {
  if (f.rank() != 3 || f.dim(2) != 2) {
    throw DimensionError("flow field must be [H,W,2], got " + shape_str(f.shape()));
  }
}

// sum over rows of sqrt(|d|^2 + delta) - sqrt(delta); exactly zero for d = 0.
Var smoothed_norm_sum(Var diffs, std::size_t vector_axis, double delta) {
  return sum(add_scalar(sqrt_eps(sum_axis(square(diffs), vector_axis), delta), -std::sqrt(delta)));
}

}  // namespace

Var total_variation(Var flow, double smoothing) {
  check_flow(flow.value());
  const std::size_t h = flow.value().dim(0), w = flow.value().dim(1);
  Var total = flow.tape().constant(Tensor::scalar(0.0));
  if (h > 1) {
    total = total + smoothed_norm_sum(slice(flow, 0, 1, h) - slice(flow, 0, 0, h - 1), 2, smoothing);
  }
  if (w > 1) {
    total = total + smoothed_norm_sum(slice(flow, 1, 1, w) - slice(flow, 1, 0, w - 1), 2, smoothing);
  }
  // Every unordered neighbour pair appears twice in the sum over (p, q in N(p)).
  return scale(total, 2.0);
}

Var flow_variance(Var flow, double smoothing) {
  check_flow(flow.value());
  const std::size_t n = flow.value().dim(0) * flow.value().dim(1);
  // Shift by the first vector so constant fields give exactly zero deviations.
  Var raw = reshape(flow, {n, 2});
  Var flat = raw - expand(reshape(slice(raw, 0, 0, 1), {2}), 0, n);
  Var centre = expand(scale(sum_axis(flat, 0), 1.0 / static_cast<double>(n)), 0, n);
  return smoothed_norm_sum(flat - centre, 1, smoothing);
}

Var control_loss(std::span<const Var> flows, double lambda_tv, double lambda_var,
                 double smoothing) {
  if (flows.empty()) throw ConfigError("control_loss: no flow fields");
  Var total;
  for (std::size_t k = 0; k < flows.size(); ++k) {
    Var term = lambda_tv * total_variation(flows[k], smoothing) +
               lambda_var * flow_variance(flows[k], smoothing);
    total = k == 0 ? term : total + term;
  }
  return total;
}

Var fidelity_loss(Var feat_a, Var feat_b) {
  return add_scalar(neg(cosine_similarity(feat_a, feat_b)), 1.0);
}

Var simulation_objective_features(Var feat_deformed, Var feat_original, Var feat_adversarial,
                                  double beta) {
  Var pull = fidelity_loss(feat_deformed, feat_adversarial);
  if (beta == 0.0) return pull;
  return pull - beta * fidelity_loss(feat_original, feat_adversarial);
}

Var simulation_objective(const seg::Model& model, Var deformed, Var original, Var adversarial,
                         double beta) {
  require_same_shape(deformed.value(), original.value(), "simulation_objective");
  require_same_shape(adversarial.value(), original.value(), "simulation_objective");
  return simulation_objective_features(model.encode(deformed), model.encode(original),
                                       model.encode(adversarial), beta);
}

}  // namespace uad::losses
