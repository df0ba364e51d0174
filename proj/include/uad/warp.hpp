#pragma once

// Flow-field image deformation.
//
// A flow stores a per-pixel displacement (du, dv) in pixels along (row, col).
// deform() warps backward: output pixel (i, j) reads the source at
// (i - du, j - dv), so a constant flow (a, b) moves content by (+a, +b).

#include <cstddef>
#include <span>
#include <vector>

#include "uad/autodiff.hpp"

namespace uad::warp {

struct FlowField {
  Tensor vectors;  // [H,W,2]

  std::size_t height() const { return vectors.dim(0); }
  std::size_t width() const { return vectors.dim(1); }
};

/// K soft masks over the image plane that sum to one at every pixel.
struct FilterMaskSet {
  std::vector<Tensor> masks;  // each [H,W]

  std::size_t count() const { return masks.size(); }
};

FlowField identity_flow(std::size_t height, std::size_t width);

/// Absolute sampling coordinates (i, j) for every pixel, shape [H,W,2].
Tensor identity_grid(std::size_t height, std::size_t width);

Var deform(Var image, Var flow);
Tensor deform(const Tensor& image, const FlowField& flow);

/// Patch-grid masks: square patches of side `patch_size` (0 picks
/// max(2, min(H,W)/4)) are dealt to the K fields in a repeating kr x kc tile
/// with kr * kc = K, then Gaussian-blurred and renormalized.
FilterMaskSet make_filter_masks(std::size_t height, std::size_t width, std::size_t count,
                                double blur_sigma, std::size_t patch_size = 0);

/// sum_k mask_k * deform(image, flow_k)
Var composite_deform(Var image, std::span<const Var> flows, const FilterMaskSet& masks);
Tensor composite_deform(const Tensor& image, std::span<const FlowField> flows,
                        const FilterMaskSet& masks);

}  // namespace uad::warp
