#pragma once

// Differentiable primitives. Every op records itself on the tape of its
// inputs; all inputs of one call must share a tape.

#include <cstddef>

#include "uad/autodiff.hpp"

namespace uad::ops {

inline constexpr double kSqrtDelta = 1e-12;

// Elementwise, equal shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var neg(Var a);
Var square(Var a);
Var relu(Var a);
Var sigmoid(Var a);
/// sqrt(x + delta); the offset keeps the derivative finite at zero.
Var sqrt_eps(Var a, double delta = kSqrtDelta);
/// Clamp with straight-through gradient inside [lo, hi] and zero outside.
Var clamp(Var a, double lo, double hi);

// Reductions and shape plumbing.
Var sum(Var a);
Var mean(Var a);
Var sum_axis(Var a, std::size_t axis);
/// Inserts a new axis of length n at `axis`, repeating the input.
Var expand(Var a, std::size_t axis, std::size_t n);
Var reshape(Var a, Shape shape);
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);

/// Direct 2-D convolution without bias: input [Ci,H,W], kernel [Co,Ci,k,k].
Var conv2d(Var input, Var kernel, std::size_t stride, std::size_t padding);

/// Non-overlapping k x k average pooling on [C,H,W].
Var avg_pool2d(Var input, std::size_t k);

enum class BlurPadding {
  Replicate,  // same-size output, border pixels repeated
  Valid,      // output shrinks by 2*radius per spatial axis
};

/// Separable normalized Gaussian filter on [C,H,W] with taps in [-radius, radius].
Var gaussian_blur(Var input, double sigma, std::size_t radius,
                  BlurPadding padding = BlurPadding::Replicate);

/// Bilinear sampling of input [C,H,W] at absolute (row, col) coordinates in
/// grid [Ho,Wo,2]; coordinates are clamped to the image border. Output [C,Ho,Wo].
Var grid_sample(Var input, Var grid);

/// Cosine of the two flattened tensors. Throws DegenerateNormError on a zero vector.
Var cosine_similarity(Var a, Var b);

/// Pairwise cosine between the columns of a [C,K] and b [C,N], giving [K,N].
/// Column norms are smoothed by kSqrtDelta so all-zero columns yield 0.
Var column_cosine(Var a, Var b);

// Operator sugar.
inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator+(Var a, double s) { return add_scalar(a, s); }
inline Var operator-(Var a, double s) { return add_scalar(a, -s); }
inline Var operator-(Var a) { return neg(a); }

/// 1-D normalized Gaussian taps, length 2*radius+1.
std::vector<double> gaussian_taps(double sigma, std::size_t radius);

}  // namespace uad::ops
