#pragma once

#include <span>

#include "uad/autodiff.hpp"
#include "uad/ops.hpp"
#include "uad/segmodel.hpp"

namespace uad::losses {

struct LossWeights {
  double lambda_tv = 1e-3;   // total-variation weight inside the control loss
  double lambda_var = 1e-3;  // variance weight inside the control loss
  double lambda_c = 1.0;     // control loss weight in the deformation objective
  double lambda_f = 10.0;    // fidelity loss weight in the deformation objective
  double beta = 1.0;         // push-away weight in the simulation objective

  /// Throws ConfigError on a negative weight.
  void validate() const;
};

struct SsimParams {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Mean SSIM over channels and valid window positions of two [C,H,W] images.
Var ssim(Var a, Var b, const SsimParams& params = {});

/// L_D = SSIM(deformed, original); lower means more structural change.
Var deformation_loss(Var deformed, Var original);

// The magnitudes below are sqrt(|d|^2 + s) - sqrt(s), so a constant field
// scores exactly zero. The default s only guards the derivative at zero; a
// larger s rounds the kink of the norm (Charbonnier style).

/// Sum over pixels and their 4-neighbours of the flow-difference magnitude.
Var total_variation(Var flow, double smoothing = ops::kSqrtDelta);
/// Sum over pixels of the distance of each flow vector from the field mean.
Var flow_variance(Var flow, double smoothing = ops::kSqrtDelta);
/// lambda_tv * TV + lambda_var * variance, summed over all fields.
Var control_loss(std::span<const Var> flows, double lambda_tv, double lambda_var,
                 double smoothing = ops::kSqrtDelta);

/// 1 - cos(feat_a, feat_b), in [0, 2].
Var fidelity_loss(Var feat_a, Var feat_b);

/// L_F(f(deformed), f(adv)) - beta * L_F(f(original), f(adv)) from precomputed
/// target features.
Var simulation_objective_features(Var feat_deformed, Var feat_original, Var feat_adversarial,
                                  double beta);
Var simulation_objective(const seg::Model& model, Var deformed, Var original, Var adversarial,
                         double beta);

}  // namespace uad::losses
