#include "uad/segmodel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "uad/error.hpp"
#include "uad/ops.hpp"

namespace uad::seg {

namespace {

constexpr double kFeatureBlurSigma = 0.5;
constexpr std::size_t kFeatureBlurRadius = 1;
// Separable spatial profile shared by every kernel tap pair; random weights
// only mix channels. Edge responses of fully random 3x3 taps otherwise swamp
// the colour signal on small objects.
constexpr std::array<double, 3> kTapProfile{0.5, 1.0, 0.5};

// Subtracts the per-channel spatial mean of a [C,H,W] map.
Var center_channels(Var x) {
  const Shape& sh = x.shape();
  const std::size_t c = sh[0], hw = sh[1] * sh[2];
  Var flat = ops::reshape(x, {c, hw});
  Var mean = ops::scale(ops::sum_axis(flat, 1), 1.0 / static_cast<double>(hw));
  return ops::reshape(ops::sub(flat, ops::expand(mean, 1, hw)), sh);
}

void check_image(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("expected an image of shape [3,H,W], got " + shape_str(image.shape()));
  }
  if (image.dim(1) % kStride || image.dim(2) % kStride || image.dim(1) == 0 ||
      image.dim(2) == 0) {
    throw SizeError("image size " + std::to_string(image.dim(1)) + "x" +
                    std::to_string(image.dim(2)) + " is not divisible by " +
                    std::to_string(kStride));
  }
}

}  // namespace

Model Model::build(std::uint64_t seed, ArchSpec arch, DecoderParams decoder) {
  if (arch.depth < 2 || arch.depth > 4) {
    throw ConfigError("unsupported encoder depth " + std::to_string(arch.depth) +
                      " (expected 2, 3 or 4)");
  }
  if (arch.channels != 8 && arch.channels != 16 && arch.channels != 32) {
    throw ConfigError("unsupported channel count " + std::to_string(arch.channels) +
                      " (expected 8, 16 or 32)");
  }
  Model m;
  m.seed_ = seed;
  m.arch_ = arch;
  m.decoder_ = decoder;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto c = static_cast<std::size_t>(arch.channels);
  std::size_t in = 3;
  // Stride-1 layers first, the two stride-2 reductions last.
  for (int l = 0; l < arch.depth; ++l) {
    const std::size_t stride = l >= arch.depth - 2 ? 2 : 1;
    Tensor k(Shape{c, in, 3, 3});
    double profile_sum = 0.0;
    for (double a : kTapProfile)
      for (double b : kTapProfile) profile_sum += a * b;
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t o = 0; o < c; ++o)
      for (std::size_t i = 0; i < in; ++i) {
        const double w = normal(rng) * s / profile_sum;
        for (std::size_t a = 0; a < 3; ++a)
          for (std::size_t b = 0; b < 3; ++b)
            k[((o * in + i) * 3 + a) * 3 + b] = w * kTapProfile[a] * kTapProfile[b];
      }
    m.layers_.push_back(Layer{std::make_shared<const Tensor>(std::move(k)), stride, true});
    in = c;
  }
  return m;
}

Model build_model(std::uint64_t seed, ArchSpec arch) { return Model::build(seed, arch); }

Var Model::encode(Var image) const {
  check_image(image.value());
  Var x = center_channels(image);
  for (const Layer& layer : layers_) {
    x = ops::conv2d(x, image.tape().constant(layer.kernel), layer.stride, 1);
    if (layer.relu) x = ops::relu(x);
  }
  return center_channels(ops::gaussian_blur(x, kFeatureBlurSigma, kFeatureBlurRadius));
}

Tensor Model::encode(const Tensor& image) const {
  Tape tape;
  return encode(tape.constant(image)).value();
}

Var encode_image(const Model& model, Var image) { return model.encode(image); }

Prompt Prompt::point(double x, double y, bool foreground) {
  return Prompt{std::vector<Point>{Point{x, y, foreground}}};
}

Prompt Prompt::points(std::vector<Point> pts) { return Prompt{std::move(pts)}; }

Prompt Prompt::box(double x0, double y0, double x1, double y1) {
  return Prompt{Box{x0, y0, x1, y1}};
}

std::size_t BinaryMask::area() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

BinaryMask threshold_logits(const Tensor& logits) {
  BinaryMask m(logits.dim(0), logits.dim(1));
  for (std::size_t i = 0; i < logits.numel(); ++i) m.bits[i] = logits[i] > 0.0 ? 1 : 0;
  return m;
}

namespace {

void check_point(const Point& p, double height, double width) {
  if (!(p.x >= 0.0 && p.x <= width - 1 && p.y >= 0.0 && p.y <= height - 1)) {
    throw PromptError("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                      ") lies outside the " + std::to_string(static_cast<int>(width)) + "x" +
                      std::to_string(static_cast<int>(height)) + " image");
  }
}

}  // namespace

Var encode_prompt(const Model& model, const Prompt& prompt, Var features) {
  const Tensor& f = features.value();
  if (f.rank() != 3 || f.dim(0) != model.feature_channels()) {
    throw DimensionError("encode_prompt: feature map " + shape_str(f.shape()) +
                         " does not match model channels");
  }
  const std::size_t c = f.dim(0), h = f.dim(1), w = f.dim(2);
  const double img_h = static_cast<double>(h * kStride), img_w = static_cast<double>(w * kStride);
  const double inv = 1.0 / static_cast<double>(kStride);
  Tape& tape = features.tape();

  if (const auto* pts = std::get_if<std::vector<Point>>(&prompt.value)) {
    if (pts->empty()) throw PromptError("point prompt without points");
    const std::size_t n = pts->size();
    Tensor grid(Shape{1, n, 2});
    Tensor weights(Shape{c, n});
    for (std::size_t i = 0; i < n; ++i) {
      const Point& p = (*pts)[i];
      check_point(p, img_h, img_w);
      grid.at(0, i, 0) = p.y * inv;
      grid.at(0, i, 1) = p.x * inv;
      const double s = (p.foreground ? 1.0 : -1.0) / static_cast<double>(n);
      for (std::size_t ch = 0; ch < c; ++ch) weights.at(ch, i) = s;
    }
    Var cols = ops::reshape(ops::grid_sample(features, tape.constant(std::move(grid))), {c, n});
    return ops::sum_axis(ops::mul(cols, tape.constant(std::move(weights))), 1);
  }

  const Box& b = std::get<Box>(prompt.value);
  if (!(b.x1 > b.x0 && b.y1 > b.y0)) throw PromptError("box prompt has non-positive area");
  check_point(Point{b.x0, b.y0}, img_h, img_w);
  check_point(Point{b.x1, b.y1}, img_h, img_w);
  // Feature cell (i, j) sits at pixel (4i, 4j); average the cells inside the box.
  const auto i0 = static_cast<std::size_t>(std::ceil(b.y0 * inv));
  const auto i1 = std::min(h - 1, static_cast<std::size_t>(std::floor(b.y1 * inv)));
  const auto j0 = static_cast<std::size_t>(std::ceil(b.x0 * inv));
  const auto j1 = std::min(w - 1, static_cast<std::size_t>(std::floor(b.x1 * inv)));
  if (i0 > i1 || j0 > j1) {
    // No cell centre inside: fall back to the box centre.
    Tensor grid(Shape{1, 1, 2});
    grid[0] = 0.5 * (b.y0 + b.y1) * inv;
    grid[1] = 0.5 * (b.x0 + b.x1) * inv;
    return ops::reshape(ops::grid_sample(features, tape.constant(std::move(grid))), {c});
  }
  Var region = ops::slice(ops::slice(features, 1, i0, i1 + 1), 2, j0, j1 + 1);
  const double count = static_cast<double>((i1 - i0 + 1) * (j1 - j0 + 1));
  return ops::scale(ops::sum_axis(ops::sum_axis(region, 2), 1), 1.0 / count);
}

Tensor upsample_grid(std::size_t height, std::size_t width) {
  Tensor g(Shape{height, width, 2});
  const double inv = 1.0 / static_cast<double>(kStride);
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j) {
      g.at(i, j, 0) = static_cast<double>(i) * inv;
      g.at(i, j, 1) = static_cast<double>(j) * inv;
    }
  return g;
}

Var decode_logits(const Model& model, Var features, Var embedding) {
  const Tensor& f = features.value();
  const Tensor& e = embedding.value();
  const std::size_t c = f.dim(0), h = f.dim(1), w = f.dim(2);
  if (e.numel() != c) {
    throw DimensionError("decode: embedding " + shape_str(e.shape()) + " vs " +
                         std::to_string(c) + " feature channels");
  }
  if (max_abs(e) == 0.0) throw DegenerateNormError("decode: zero prompt embedding");
  const double tau = model.decoder().temperature;
  Tape& tape = features.tape();
  Var cosine = ops::column_cosine(ops::reshape(embedding, {c, 1}), ops::reshape(features, {c, h * w}));
  Var small = ops::reshape(ops::add_scalar(ops::scale(cosine, tau), -tau * model.decoder().cos_threshold),
                           {1, h, w});
  Var up = ops::grid_sample(small, tape.constant(upsample_grid(h * kStride, w * kStride)));
  return ops::reshape(up, {h * kStride, w * kStride});
}

Mask decode_mask(const Model& model, Var features, Var embedding) {
  Var logits = decode_logits(model, features, embedding);
  return Mask{logits.value(), threshold_logits(logits.value())};
}

Var segment_logits(const Model& model, Var image, const Prompt& prompt) {
  Var features = model.encode(image);
  return decode_logits(model, features, encode_prompt(model, prompt, features));
}

Mask segment(const Model& model, const Tensor& image, const Prompt& prompt) {
  Tape tape;
  Var logits = segment_logits(model, tape.constant(image), prompt);
  return Mask{logits.value(), threshold_logits(logits.value())};
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::array<std::array<double, 3>, 8> kPalette{{
    {0.90, 0.12, 0.10},
    {0.10, 0.78, 0.18},
    {0.12, 0.20, 0.92},
    {0.92, 0.85, 0.08},
    {0.85, 0.10, 0.80},
    {0.08, 0.80, 0.85},
    {0.95, 0.50, 0.05},
    {0.50, 0.08, 0.90},
}};

}  // namespace

SyntheticScene generate_scene(std::uint64_t seed, const SceneSpec& spec) {
  if (spec.objects < 1) throw ConfigError("generate_scene: need at least one object");
  if (spec.objects > static_cast<int>(kPalette.size())) {
    throw ConfigError("generate_scene: at most " + std::to_string(kPalette.size()) +
                      " objects have distinct colours");
  }
  const std::size_t h = spec.height, w = spec.width;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SyntheticScene scene;
  scene.seed = seed;
  scene.image = Tensor(Shape{3, h, w});

  // Textured, low-saturation background: two random gratings on a grey base.
  const double base = 0.38 + 0.14 * unit(rng);
  std::array<double, 3> tint{};
  for (double& t : tint) t = 0.04 * (unit(rng) - 0.5);
  struct Grating {
    double fy, fx, phase, amp;
  };
  std::array<Grating, 2> gratings{};
  for (auto& g : gratings) {
    const double angle = std::numbers::pi * unit(rng);
    const double freq = (1.5 + 3.0 * unit(rng)) / static_cast<double>(std::max(h, w));
    g = {freq * std::sin(angle), freq * std::cos(angle), 2 * std::numbers::pi * unit(rng),
         0.05 + 0.04 * unit(rng)};
  }
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      double v = base;
      for (const auto& g : gratings)
        v += g.amp * std::sin(2 * std::numbers::pi * (g.fy * static_cast<double>(i) +
                                                      g.fx * static_cast<double>(j)) +
                              g.phase);
      for (std::size_t ch = 0; ch < 3; ++ch) scene.image.at(ch, i, j) = v + tint[ch];
    }

  std::array<std::size_t, kPalette.size()> colours{};
  for (std::size_t i = 0; i < colours.size(); ++i) colours[i] = i;
  std::shuffle(colours.begin(), colours.end(), rng);

  BinaryMask occupied(h, w);  // objects dilated by the gap
  for (int o = 0; o < spec.objects; ++o) {
    BinaryMask mask(h, w);
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      mask = BinaryMask(h, w);
      const bool disc = unit(rng) < spec.disc_probability;
      if (disc) {
        const int r = spec.min_radius +
                      static_cast<int>(unit(rng) * (spec.max_radius - spec.min_radius + 1));
        const int rr = std::min(r, spec.max_radius);
        if (2 * rr + 1 > static_cast<int>(std::min(h, w))) continue;
        const int cy = rr + static_cast<int>(unit(rng) * static_cast<double>(h - 2 * rr));
        const int cx = rr + static_cast<int>(unit(rng) * static_cast<double>(w - 2 * rr));
        for (int i = cy - rr; i <= cy + rr; ++i)
          for (int j = cx - rr; j <= cx + rr; ++j)
            if ((i - cy) * (i - cy) + (j - cx) * (j - cx) <= rr * rr)
              mask.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = 1;
      } else {
        const int span = spec.max_side - spec.min_side + 1;
        const int rh = std::min(spec.max_side, spec.min_side + static_cast<int>(unit(rng) * span));
        const int rw = std::min(spec.max_side, spec.min_side + static_cast<int>(unit(rng) * span));
        if (rh > static_cast<int>(h) || rw > static_cast<int>(w)) continue;
        const int y0 = static_cast<int>(unit(rng) * static_cast<double>(h - static_cast<std::size_t>(rh) + 1));
        const int x0 = static_cast<int>(unit(rng) * static_cast<double>(w - static_cast<std::size_t>(rw) + 1));
        for (int i = y0; i < y0 + rh; ++i)
          for (int j = x0; j < x0 + rw; ++j)
            mask.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = 1;
      }
      placed = true;
      for (std::size_t p = 0; p < mask.bits.size() && placed; ++p)
        if (mask.bits[p] && occupied.bits[p]) placed = false;
    }
    if (!placed) {
      throw PlacementError("generate_scene: could not place object " + std::to_string(o) +
                           " disjointly after 100 tries (seed " + std::to_string(seed) + ")");
    }
    const auto& col = kPalette[colours[static_cast<std::size_t>(o)]];
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        if (!mask.at(i, j)) continue;
        for (std::size_t ch = 0; ch < 3; ++ch) scene.image.at(ch, i, j) = col[ch];
        const int g = spec.gap;
        for (int di = -g; di <= g; ++di)
          for (int dj = -g; dj <= g; ++dj) {
            const long ii = static_cast<long>(i) + di, jj = static_cast<long>(j) + dj;
            if (ii >= 0 && jj >= 0 && ii < static_cast<long>(h) && jj < static_cast<long>(w))
              occupied.at(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj)) = 1;
          }
      }
    scene.masks.push_back(std::move(mask));
  }

  for (double& v : scene.image.data()) {
    v = std::clamp(v + spec.noise * (2.0 * unit(rng) - 1.0), 0.0, 1.0);
  }
  return scene;
}

SyntheticScene generate_scene(std::uint64_t seed, std::size_t height, std::size_t width,
                              int objects) {
  SceneSpec spec;
  spec.height = height;
  spec.width = width;
  spec.objects = objects;
  return generate_scene(seed, spec);
}

}  // namespace uad::seg
