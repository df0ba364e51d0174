#pragma once

// Toy promptable segmentation model: a seeded, untrained conv encoder, a
// prompt encoder that reads encoder features at the prompt, and a cosine
// decoder over mean-centred features (a correlation decoder). Plus the synthetic scene corpus it is evaluated on.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <variant>
#include <vector>

#include "uad/autodiff.hpp"

namespace uad::seg {

/// Feature maps are 1/kStride of the image resolution on each axis.
inline constexpr std::size_t kStride = 4;

struct ArchSpec {
  int depth = 3;     // number of conv layers, {2,3,4}
  int channels = 16; // {8,16,32}

  bool operator==(const ArchSpec&) const = default;
};

struct DecoderParams {
  double temperature = 10.0;
  double cos_threshold = 0.85;
};

class Model {
 public:
  /// Throws ConfigError for an unsupported ArchSpec.
  static Model build(std::uint64_t seed, ArchSpec arch, DecoderParams decoder = {});

  std::uint64_t seed() const { return seed_; }
  const ArchSpec& arch() const { return arch_; }
  const DecoderParams& decoder() const { return decoder_; }
  std::size_t feature_channels() const { return static_cast<std::size_t>(arch_.channels); }

  /// f: [3,H,W] -> [C,H/4,W/4]; H and W must be divisible by 4.
  Var encode(Var image) const;
  Tensor encode(const Tensor& image) const;

 private:
  struct Layer {
    TensorPtr kernel;
    std::size_t stride;
    bool relu;
  };

  std::uint64_t seed_ = 0;
  ArchSpec arch_;
  DecoderParams decoder_;
  std::vector<Layer> layers_;
};

struct Point {
  double x = 0.0;  // column, pixels
  double y = 0.0;  // row, pixels
  bool foreground = true;
};

struct Box {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
};

struct Prompt {
  std::variant<std::vector<Point>, Box> value;

  static Prompt point(double x, double y, bool foreground = true);
  static Prompt points(std::vector<Point> pts);
  static Prompt box(double x0, double y0, double x1, double y1);

  bool is_box() const { return std::holds_alternative<Box>(value); }
};

struct BinaryMask {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> bits;  // row-major, 0 or 1

  BinaryMask() = default;
  BinaryMask(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {}

  std::uint8_t& at(std::size_t i, std::size_t j) { return bits[i * width + j]; }
  std::uint8_t at(std::size_t i, std::size_t j) const { return bits[i * width + j]; }
  std::size_t area() const;
  bool empty() const { return area() == 0; }
  bool operator==(const BinaryMask&) const = default;
};

struct Mask {
  Tensor logits;  // [H,W]
  BinaryMask binary;  // logits > 0
};

BinaryMask threshold_logits(const Tensor& logits);

Model build_model(std::uint64_t seed, ArchSpec arch);

Var encode_image(const Model& model, Var image);

/// h: prompt -> embedding [C] read from the feature map of the prompted image.
Var encode_prompt(const Model& model, const Prompt& prompt, Var features);

/// Mask logits [H,W] for the given embedding; H,W = 4 x feature size.
Var decode_logits(const Model& model, Var features, Var embedding);
Mask decode_mask(const Model& model, Var features, Var embedding);

/// g(f(I), h(P)) as a differentiable graph; returns logits [H,W].
Var segment_logits(const Model& model, Var image, const Prompt& prompt);
Mask segment(const Model& model, const Tensor& image, const Prompt& prompt);

/// Bilinear upsampling grid from feature to image resolution, [H,W,2].
Tensor upsample_grid(std::size_t height, std::size_t width);

struct SceneSpec {
  std::size_t height = 64;
  std::size_t width = 64;
  int objects = 3;
  double disc_probability = 0.5;
  int min_radius = 6, max_radius = 10;
  int min_side = 10, max_side = 20;
  double noise = 0.02;
  int gap = 2;  // free pixels kept between objects
};

struct SyntheticScene {
  Tensor image;  // [3,H,W] in [0,1]
  std::vector<BinaryMask> masks;
  std::uint64_t seed = 0;
};

SyntheticScene generate_scene(std::uint64_t seed, const SceneSpec& spec);
SyntheticScene generate_scene(std::uint64_t seed, std::size_t height, std::size_t width,
                              int objects);

}  // namespace uad::seg
