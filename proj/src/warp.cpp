#include "uad/warp.hpp"

#include <cmath>
#include <limits>

#include "uad/error.hpp"
#include "uad/ops.hpp"

namespace uad::warp {

FlowField identity_flow(std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw SizeError("identity_flow: empty image");
  return FlowField{Tensor(Shape{height, width, 2})};
}

Tensor identity_grid(std::size_t height, std::size_t width) {
  Tensor g(Shape{height, width, 2});
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j) {
      g.at(i, j, 0) = static_cast<double>(i);
      g.at(i, j, 1) = static_cast<double>(j);
    }
  return g;
}

Var deform(Var image, Var flow) {
  const Tensor& img = image.value();
  const Tensor& fl = flow.value();
  if (img.rank() != 3 || fl.rank() != 3 || fl.dim(2) != 2 || fl.dim(0) != img.dim(1) ||
      fl.dim(1) != img.dim(2)) {
    throw DimensionError("deform: image " + shape_str(img.shape()) + " and flow " +
                         shape_str(fl.shape()) + " disagree (expected [C,H,W] and [H,W,2])");
  }
  Var base = image.tape().constant(identity_grid(img.dim(1), img.dim(2)));
  return ops::grid_sample(image, ops::sub(base, flow));
}

Tensor deform(const Tensor& image, const FlowField& flow) {
  Tape tape;
  return deform(tape.constant(image), tape.constant(flow.vectors)).value();
}

namespace {

// Most square kr x kc = K that fits a nr x nc patch grid.
std::pair<std::size_t, std::size_t> factor_grid(std::size_t k, std::size_t nr, std::size_t nc) {
  std::pair<std::size_t, std::size_t> best{0, 0};
  std::size_t best_gap = std::numeric_limits<std::size_t>::max();
  for (std::size_t kr = 1; kr <= k; ++kr) {
    if (k % kr) continue;
    const std::size_t kc = k / kr;
    if (kr > nr || kc > nc) continue;
    const std::size_t gap = kr > kc ? kr - kc : kc - kr;
    if (gap < best_gap) {
      best_gap = gap;
      best = {kr, kc};
    }
  }
  return best;
}

}  // namespace

FilterMaskSet make_filter_masks(std::size_t height, std::size_t width, std::size_t count,
                                double blur_sigma, std::size_t patch_size) {
  if (count == 0) throw ConfigError("make_filter_masks: need at least one field");
  if (height == 0 || width == 0) throw SizeError("make_filter_masks: empty image");
  if (blur_sigma < 0.0) throw ConfigError("make_filter_masks: negative blur sigma");
  const std::size_t p =
      patch_size ? patch_size : std::max<std::size_t>(2, std::min(height, width) / 4);
  const std::size_t nr = (height + p - 1) / p, nc = (width + p - 1) / p;
  const auto [kr, kc] = factor_grid(count, nr, nc);
  if (kr == 0) {
    throw ConfigError("make_filter_masks: " + std::to_string(count) +
                      " fields have no grid factorization on a " + std::to_string(nr) + "x" +
                      std::to_string(nc) + " patch grid for a " + std::to_string(height) + "x" +
                      std::to_string(width) + " image");
  }

  FilterMaskSet set;
  set.masks.assign(count, Tensor(Shape{height, width}));
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j) {
      const std::size_t field = ((i / p) % kr) * kc + (j / p) % kc;
      set.masks[field].at(i, j) = 1.0;
    }
  if (count == 1 || blur_sigma == 0.0) return set;

  const auto radius = static_cast<std::size_t>(std::ceil(3.0 * blur_sigma));
  Tensor stacked(Shape{count, height, width});
  for (std::size_t k = 0; k < count; ++k)
    std::copy_n(set.masks[k].ptr(), height * width, stacked.ptr() + k * height * width);
  Tape tape;
  const Tensor blurred =
      ops::gaussian_blur(tape.constant(std::move(stacked)), blur_sigma, radius).value();
  for (std::size_t i = 0; i < height * width; ++i) {
    double total = 0.0;
    for (std::size_t k = 0; k < count; ++k) total += blurred[k * height * width + i];
    for (std::size_t k = 0; k < count; ++k)
      set.masks[k][i] = blurred[k * height * width + i] / total;
  }
  return set;
}

Var composite_deform(Var image, std::span<const Var> flows, const FilterMaskSet& masks) {
  if (flows.size() != masks.count() || flows.empty()) {
    throw ConfigError("composite_deform: " + std::to_string(flows.size()) + " flows but " +
                      std::to_string(masks.count()) + " masks");
  }
  const Tensor& img = image.value();
  if (img.rank() != 3) throw DimensionError("composite_deform: image must be [C,H,W]");
  const std::size_t c = img.dim(0), hw = img.dim(1) * img.dim(2);
  Tape& tape = image.tape();
  Var total;
  for (std::size_t k = 0; k < flows.size(); ++k) {
    const Tensor& m = masks.masks[k];
    if (m.shape() != Shape{img.dim(1), img.dim(2)}) {
      throw DimensionError("composite_deform: mask " + shape_str(m.shape()) +
                           " does not match image " + shape_str(img.shape()));
    }
    Tensor wide(img.shape());
    for (std::size_t ch = 0; ch < c; ++ch) std::copy_n(m.ptr(), hw, wide.ptr() + ch * hw);
    Var term = ops::mul(tape.constant(std::move(wide)), deform(image, flows[k]));
    total = k == 0 ? term : ops::add(total, term);
  }
  return total;
}

Tensor composite_deform(const Tensor& image, std::span<const FlowField> flows,
                        const FilterMaskSet& masks) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(flows.size());
  for (const auto& f : flows) vars.push_back(tape.constant(f.vectors));
  return composite_deform(tape.constant(image), vars, masks).value();
}

}  // namespace uad::warp
