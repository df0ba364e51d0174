#pragma once

// Attack metrics. IoU compares the mask predicted on the clean image with the
// mask predicted on the adversarial image under the same prompt; ground-truth
// masks only place the prompts.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "uad/segmodel.hpp"

namespace uad::eval {

/// |a & b| / |a | b|; two empty masks give 1. Throws DimensionError on a
/// shape mismatch.
double iou(const seg::BinaryMask& a, const seg::BinaryMask& b);

inline constexpr int kPointsPerMask = 5;
inline constexpr double kBoxScales[3] = {1.0, 0.8, 1.2};

struct SampledPrompt {
  seg::Prompt prompt;
  std::string kind;  // "point" or "box"
};

/// 5 foreground points drawn uniformly from the mask support, then the tight
/// box at 100%, 80% and 120% about its centre, clipped to the image.
std::vector<SampledPrompt> sample_prompts(const seg::BinaryMask& gt, std::uint64_t seed);

/// Prompt seed for one (scene, mask) pair; depends only on the pair.
std::uint64_t prompt_seed(std::uint64_t base, std::uint64_t scene_seed, std::size_t mask_index);

/// IoU between clean and adversarial predictions for one prompt.
double prompt_iou(const seg::Model& model, const Tensor& clean, const Tensor& adversarial,
                  const seg::Prompt& prompt);

struct MaskRow {
  std::uint64_t scene = 0;  // scene seed
  std::size_t mask = 0;
  std::size_t prompt = 0;
  std::string kind;
  std::string model;
  double iou = 0.0;
};

struct ModelMetrics {
  std::string model;
  std::size_t count = 0;
  double miou = 0.0;
  double miou_std = 0.0;           // over all (mask, prompt) pairs
  double miou_std_per_mask = 0.0;  // mean over masks of the std over its prompts
  double asr50 = 0.0;              // fraction with IoU < 0.5
  double asr10 = 0.0;              // fraction with IoU < 0.1
};

struct MetricsReport {
  std::vector<MaskRow> rows;
  std::vector<ModelMetrics> models;
};

std::string model_label(const seg::Model& model);

/// Aggregates one report per model. Throws ConfigError when the scene and
/// image counts differ.
MetricsReport evaluate(std::span<const seg::Model> models,
                       std::span<const seg::SyntheticScene> scenes,
                       std::span<const Tensor> adversarial, std::uint64_t base_seed = 0);

/// Summary statistics over rows of a single model.
ModelMetrics aggregate(const std::string& model, std::span<const MaskRow> rows);

/// Cosine of the vectorized encoder features of two images.
double feature_similarity(const seg::Model& model, const Tensor& a, const Tensor& b);

struct Histogram {
  double lo = -1.0, hi = 1.0;
  std::vector<std::size_t> counts;
  std::vector<double> values;
  double mean = 0.0;
};

struct SimilarityHistograms {
  Histogram source;
  Histogram target;
};

Histogram histogram(std::span<const double> values, std::size_t bins, double lo = -1.0,
                    double hi = 1.0);

SimilarityHistograms feature_similarity_histogram(const seg::Model& source,
                                                  const seg::Model& target,
                                                  std::span<const Tensor> clean,
                                                  std::span<const Tensor> adversarial,
                                                  std::size_t bins = 20);

/// cos(f(adv), f(deformed)) - cos(f(adv), f(original)).
double relative_feature_similarity(const seg::Model& model, const Tensor& original,
                                   const Tensor& deformed, const Tensor& adversarial);

}  // namespace uad::eval
