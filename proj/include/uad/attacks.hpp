#pragma once

// The two-stage deformation attack and its baselines. Every attack runs the
// same signed-gradient core: step, project into the epsilon ball, clip to
// [0,1]. All attacks minimize; untargeted objectives are negated.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uad/losses.hpp"
#include "uad/segmodel.hpp"
#include "uad/warp.hpp"

namespace uad::attacks {

struct AttackConfig {
  double epsilon = 8.0 / 255.0;
  double alpha = 2.0 / 255.0;
  int steps = 40;         // T
  int proxy_steps = 4;    // T_f
  int deform_steps = 40;  // T_D

  // Flow-field optimizer. With backtracking on, deform_step is the largest
  // trial step of an Armijo line search; off, it is a fixed step size.
  double deform_step = 1e4;
  bool deform_backtracking = true;
  int max_halvings = 30;
  double control_smoothing = 1.0;  // s in the control-loss magnitudes, pixels^2
  // Every loss term is stationary at the identity flow, so each field starts
  // as a seeded uniform shift of this length (pixels). 0 starts exactly at
  // the identity.
  double init_shift = 0.5;

  losses::LossWeights weights;
  int flow_fields = 4;        // K
  double mask_sigma = 2.0;    // filter-mask boundary blur, pixels
  std::uint64_t seed = 0;

  double momentum_mu = 0.0;           // 0 disables MI
  double input_diversity_prob = 0.0;  // 0 disables DI
  double diversity_min_scale = 0.9;
  double diversity_max_scale = 1.1;

  double tap_p = 2.0;       // feature-distance norm for TAP
  double lambda_dom = 0.1;  // PATA dominance weight
  int sam_k = 400;          // Attack-SAM-K prompt count

  /// Throws ConfigError when the ranges above are violated.
  void validate() const;
};

/// One recorded value: stage name, iteration, term name.
struct TracePoint {
  std::string stage;
  int iteration = 0;
  std::string term;
  double value = 0.0;
};

struct AttackResult {
  Tensor perturbation;             // r
  Tensor adversarial;              // I + r
  std::optional<Tensor> deformed;  // UAD target
  std::vector<TracePoint> trace;
  std::vector<std::string> warnings;
  AttackConfig config;
};

/// Projects into [original - eps, original + eps] intersected with [0, 1].
Tensor clip_step(const Tensor& candidate, const Tensor& original, double epsilon);

/// T_f signed steps from `original` that pull f(proxy) toward f(target).
Tensor proxy_perturb(const seg::Model& model, const Tensor& original, const Tensor& target,
                     int proxy_steps, double alpha, double epsilon);

struct DeformationResult {
  Tensor deformed;
  std::vector<warp::FlowField> flows;
  std::vector<TracePoint> trace;
};

DeformationResult deformation_stage(const seg::Model& model, const Tensor& image,
                                    const AttackConfig& config);

/// Signed steps on the simulation objective, averaged over `models`.
AttackResult simulation_stage(std::span<const seg::Model> models, const Tensor& image,
                              const Tensor& deformed, const AttackConfig& config);

/// Deformation on models[0], then simulation on all models.
AttackResult uad_attack(std::span<const seg::Model> models, const Tensor& image,
                        const AttackConfig& config);

/// Pushes f(I+r) away from f(I) in p-norm, from a small seeded random start.
AttackResult tap_attack(const seg::Model& model, const Tensor& image, const AttackConfig& config);

/// Pulls f(I+r) toward f(target).
AttackResult aa_attack(const seg::Model& model, const Tensor& image, const Tensor& target,
                       const AttackConfig& config);

/// AA plus a dominance term against a competition image. With plus_plus the
/// competition image is redrawn from `pool` every iteration (falls back to
/// `competition` when the pool is empty).
AttackResult pata_attack(const seg::Model& model, const Tensor& image, const Tensor& target,
                         const Tensor& competition, const AttackConfig& config, bool plus_plus,
                         std::span<const Tensor> pool = {});

/// Point prompts on a g x g grid of cell centres, g = floor(sqrt(K)).
std::vector<seg::Point> sam_k_grid(std::size_t height, std::size_t width, int k);

/// Suppresses positive mask logits for all grid prompts at once. A non-square
/// K is rounded down and reported in `warnings`.
AttackResult attack_sam_k(const seg::Model& model, const Tensor& image, int k,
                          const AttackConfig& config);

/// Random centred rescale by s, border pixels repeated; s == 1 is the identity.
Var diversity_resize(Var image, double s);

/// MI accumulator: g <- mu * g + grad / ||grad||_1.
class Momentum {
 public:
  explicit Momentum(double mu) : mu_(mu) {}
  /// Returns the direction whose sign is stepped on.
  const Tensor& update(const Tensor& grad);

 private:
  double mu_;
  Tensor accum_;
};

}  // namespace uad::attacks
