#include "uad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "uad/error.hpp"
#include "uad/kernels.hpp"

namespace uad::ops {
namespace {

using In = std::span<const Tensor* const>;
using GradIn = std::span<Tensor* const>;

std::shared_ptr<const Primitive> prim(std::string name, Primitive::Forward f,
                                      Primitive::Backward b) {
  return std::make_shared<const Primitive>(Primitive{std::move(name), std::move(f), std::move(b)});
}

Tape& tape_of(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw Error("operands live on different tapes");
  return a.tape();
}

template <class F, class G>
Var unary(const char* name, Var a, F f, G dfdx) {
  return a.tape().apply(
      prim(name,
           [f](In in) {
             const Tensor& x = *in[0];
             Tensor out(x.shape());
             for (std::size_t i = 0; i < x.numel(); ++i) out[i] = f(x[i]);
             return out;
           },
           [dfdx](In in, const Tensor& out, const Tensor& g, GradIn gin) {
             const Tensor& x = *in[0];
             Tensor& gx = *gin[0];
             for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += g[i] * dfdx(x[i], out[i]);
           }),
      {a});
}

struct Split {
  std::size_t outer = 1, n = 1, inner = 1;
};

Split split_at(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  Split r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_str(t.shape()));
  }
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  return tape_of(a, b).apply(
      prim("add", [](In in) { return *in[0] + *in[1]; },
           [](In, const Tensor&, const Tensor& g, GradIn gin) {
             for (Tensor* gx : gin) {
               if (gx) kernels::active().axpy(1.0, g.ptr(), gx->ptr(), g.numel());
             }
           }),
      {a, b});
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  return tape_of(a, b).apply(
      prim("sub", [](In in) { return *in[0] - *in[1]; },
           [](In, const Tensor&, const Tensor& g, GradIn gin) {
             if (gin[0]) kernels::active().axpy(1.0, g.ptr(), gin[0]->ptr(), g.numel());
             if (gin[1]) kernels::active().axpy(-1.0, g.ptr(), gin[1]->ptr(), g.numel());
           }),
      {a, b});
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  return tape_of(a, b).apply(
      prim("mul",
           [](In in) {
             const Tensor &x = *in[0], &y = *in[1];
             Tensor out(x.shape());
             for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] * y[i];
             return out;
           },
           [](In in, const Tensor&, const Tensor& g, GradIn gin) {
             const Tensor &x = *in[0], &y = *in[1];
             if (gin[0]) {
               for (std::size_t i = 0; i < g.numel(); ++i) (*gin[0])[i] += g[i] * y[i];
             }
             if (gin[1]) {
               for (std::size_t i = 0; i < g.numel(); ++i) (*gin[1])[i] += g[i] * x[i];
             }
           }),
      {a, b});
}

Var div(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "div");
  return tape_of(a, b).apply(
      prim("div",
           [](In in) {
             const Tensor &x = *in[0], &y = *in[1];
             Tensor out(x.shape());
             for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] / y[i];
             return out;
           },
           [](In in, const Tensor& out, const Tensor& g, GradIn gin) {
             const Tensor& y = *in[1];
             if (gin[0]) {
               for (std::size_t i = 0; i < g.numel(); ++i) (*gin[0])[i] += g[i] / y[i];
             }
             if (gin[1]) {
               for (std::size_t i = 0; i < g.numel(); ++i) (*gin[1])[i] -= g[i] * out[i] / y[i];
             }
           }),
      {a, b});
}

Var scale(Var a, double s) {
  return unary("scale", a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; },
               [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var square(Var a) {
  return unary("square", a, [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}

Var relu(Var a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary("sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var sqrt_eps(Var a, double delta) {
  return unary("sqrt_eps", a, [delta](double x) { return std::sqrt(x + delta); },
               [](double, double y) { return 0.5 / y; });
}

Var clamp(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw ConfigError("clamp: lower bound exceeds upper bound");
  return unary("clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var sum(Var a) {
  return a.tape().apply(
      prim("sum", [](In in) { return Tensor::scalar(kernels::active().sum(in[0]->ptr(), in[0]->numel())); },
           [](In, const Tensor&, const Tensor& g, GradIn gin) {
             const double v = g[0];
             for (double& x : gin[0]->data()) x += v;
           }),
      {a});
}

Var mean(Var a) {
  const auto n = static_cast<double>(a.value().numel());
  if (n == 0) throw SizeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var sum_axis(Var a, std::size_t axis) {
  const Split sp = split_at(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  return a.tape().apply(
      prim("sum_axis",
           [sp, out_shape](In in) {
             const Tensor& x = *in[0];
             Tensor out(out_shape);
             for (std::size_t o = 0; o < sp.outer; ++o)
               for (std::size_t k = 0; k < sp.n; ++k)
                 kernels::active().axpy(1.0, x.ptr() + (o * sp.n + k) * sp.inner,
                                        out.ptr() + o * sp.inner, sp.inner);
             return out;
           },
           [sp](In, const Tensor&, const Tensor& g, GradIn gin) {
             Tensor& gx = *gin[0];
             for (std::size_t o = 0; o < sp.outer; ++o)
               for (std::size_t k = 0; k < sp.n; ++k)
                 kernels::active().axpy(1.0, g.ptr() + o * sp.inner,
                                        gx.ptr() + (o * sp.n + k) * sp.inner, sp.inner);
           }),
      {a});
}

Var expand(Var a, std::size_t axis, std::size_t n) {
  const Shape& s = a.shape();
  if (axis > s.size()) throw DimensionError("expand: axis out of range for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis; i < s.size(); ++i) inner *= s[i];
  Shape out_shape = s;
  out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(axis), n);
  return a.tape().apply(
      prim("expand",
           [=](In in) {
             const Tensor& x = *in[0];
             Tensor out(out_shape);
             for (std::size_t o = 0; o < outer; ++o)
               for (std::size_t k = 0; k < n; ++k)
                 std::copy_n(x.ptr() + o * inner, inner, out.ptr() + (o * n + k) * inner);
             return out;
           },
           [=](In, const Tensor&, const Tensor& g, GradIn gin) {
             Tensor& gx = *gin[0];
             for (std::size_t o = 0; o < outer; ++o)
               for (std::size_t k = 0; k < n; ++k)
                 kernels::active().axpy(1.0, g.ptr() + (o * n + k) * inner, gx.ptr() + o * inner,
                                        inner);
           }),
      {a});
}

Var reshape(Var a, Shape shape) {
  if (shape_numel(shape) != a.value().numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
  }
  return a.tape().apply(
      prim("reshape", [shape](In in) { return in[0]->reshaped(shape); },
           [](In, const Tensor&, const Tensor& g, GradIn gin) {
             kernels::active().axpy(1.0, g.ptr(), gin[0]->ptr(), g.numel());
           }),
      {a});
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Split sp = split_at(a.shape(), axis);
  if (begin > end || end > sp.n) {
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range on axis " + std::to_string(axis) + " of " +
                         shape_str(a.shape()));
  }
  const std::size_t len = end - begin;
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  return a.tape().apply(
      prim("slice",
           [=](In in) {
             const Tensor& x = *in[0];
             Tensor out(out_shape);
             for (std::size_t o = 0; o < sp.outer; ++o)
               std::copy_n(x.ptr() + (o * sp.n + begin) * sp.inner, len * sp.inner,
                           out.ptr() + o * len * sp.inner);
             return out;
           },
           [=](In, const Tensor&, const Tensor& g, GradIn gin) {
             Tensor& gx = *gin[0];
             for (std::size_t o = 0; o < sp.outer; ++o)
               kernels::active().axpy(1.0, g.ptr() + o * len * sp.inner,
                                      gx.ptr() + (o * sp.n + begin) * sp.inner, len * sp.inner);
           }),
      {a});
}

// ---------------------------------------------------------------------------
// conv2d via im2col: out[Co, P] = K[Co, R] * col[R, P].

namespace {

struct ConvGeom {
  std::size_t ci, h, w, co, k, stride, pad, ho, wo;
  std::size_t rows() const { return ci * k * k; }
  std::size_t cols() const { return ho * wo; }
};

Tensor im2col(const Tensor& x, const ConvGeom& g) {
  Tensor col(Shape{g.rows(), g.cols()});
  for (std::size_t c = 0; c < g.ci; ++c)
    for (std::size_t a = 0; a < g.k; ++a)
      for (std::size_t b = 0; b < g.k; ++b) {
        double* dst = col.ptr() + ((c * g.k + a) * g.k + b) * g.cols();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<long>(oy * g.stride + a) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          const double* src = x.ptr() + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<long>(ox * g.stride + b) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[oy * g.wo + ox] = src[ix];
          }
        }
      }
  return col;
}

void col2im_add(const Tensor& col, const ConvGeom& g, Tensor& gx) {
  for (std::size_t c = 0; c < g.ci; ++c)
    for (std::size_t a = 0; a < g.k; ++a)
      for (std::size_t b = 0; b < g.k; ++b) {
        const double* src = col.ptr() + ((c * g.k + a) * g.k + b) * g.cols();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<long>(oy * g.stride + a) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          double* dst = gx.ptr() + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<long>(ox * g.stride + b) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[oy * g.wo + ox];
          }
        }
      }
}

}  // namespace

Var conv2d(Var input, Var kernel, std::size_t stride, std::size_t padding) {
  const Tensor& x = input.value();
  const Tensor& kt = kernel.value();
  require_rank(x, 3, "conv2d input");
  require_rank(kt, 4, "conv2d kernel");
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (kt.dim(1) != x.dim(0)) {
    throw DimensionError("conv2d: kernel axis 1 (C_in=" + std::to_string(kt.dim(1)) +
                         ") does not match input axis 0 (C=" + std::to_string(x.dim(0)) + ")");
  }
  if (kt.dim(2) != kt.dim(3)) {
    throw DimensionError("conv2d: kernel axes 2 and 3 must be equal, got " +
                         shape_str(kt.shape()));
  }
  const std::size_t k = kt.dim(2);
  if (k > x.dim(1) + 2 * padding || k > x.dim(2) + 2 * padding) {
    throw DimensionError("conv2d: kernel size " + std::to_string(k) +
                         " exceeds padded input axes 1/2 of " + shape_str(x.shape()));
  }
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), kt.dim(0), k, stride, padding, 0, 0};
  g.ho = (g.h + 2 * padding - k) / stride + 1;
  g.wo = (g.w + 2 * padding - k) / stride + 1;

  return tape_of(input, kernel).apply(
      prim("conv2d",
           [g](In in) {
             const Tensor col = im2col(*in[0], g);
             const Tensor& kk = *in[1];
             const auto& kern = kernels::active();
             Tensor out(Shape{g.co, g.ho, g.wo});
             const std::size_t r = g.rows(), p = g.cols();
             for (std::size_t o = 0; o < g.co; ++o)
               for (std::size_t j = 0; j < r; ++j) {
                 const double w = kk[o * r + j];
                 if (w != 0.0) kern.axpy(w, col.ptr() + j * p, out.ptr() + o * p, p);
               }
             return out;
           },
           [g](In in, const Tensor&, const Tensor& gout, GradIn gin) {
             const Tensor col = im2col(*in[0], g);
             const Tensor& kk = *in[1];
             const auto& kern = kernels::active();
             const std::size_t r = g.rows(), p = g.cols();
             if (gin[1]) {
               Tensor& gk = *gin[1];
               for (std::size_t o = 0; o < g.co; ++o)
                 for (std::size_t j = 0; j < r; ++j)
                   gk[o * r + j] += kern.dot(gout.ptr() + o * p, col.ptr() + j * p, p);
             }
             if (gin[0]) {
               Tensor gcol(Shape{r, p});
               for (std::size_t o = 0; o < g.co; ++o)
                 for (std::size_t j = 0; j < r; ++j)
                   kern.axpy(kk[o * r + j], gout.ptr() + o * p, gcol.ptr() + j * p, p);
               col2im_add(gcol, g, *gin[0]);
             }
           }),
      {input, kernel});
}

Var avg_pool2d(Var input, std::size_t k) {
  const Tensor& x = input.value();
  require_rank(x, 3, "avg_pool2d input");
  if (k == 0 || x.dim(1) % k || x.dim(2) % k) {
    throw DimensionError("avg_pool2d: axes 1/2 of " + shape_str(x.shape()) +
                         " not divisible by window " + std::to_string(k));
  }
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), ho = h / k, wo = w / k;
  const double inv = 1.0 / static_cast<double>(k * k);
  return input.tape().apply(
      prim("avg_pool2d",
           [=](In in) {
             const Tensor& src = *in[0];
             Tensor out(Shape{c, ho, wo});
             for (std::size_t ch = 0; ch < c; ++ch)
               for (std::size_t i = 0; i < h; ++i)
                 for (std::size_t j = 0; j < w; ++j) out.at(ch, i / k, j / k) += src.at(ch, i, j);
             for (double& v : out.data()) v *= inv;
             return out;
           },
           [=](In, const Tensor&, const Tensor& g, GradIn gin) {
             Tensor& gx = *gin[0];
             for (std::size_t ch = 0; ch < c; ++ch)
               for (std::size_t i = 0; i < h; ++i)
                 for (std::size_t j = 0; j < w; ++j) gx.at(ch, i, j) += g.at(ch, i / k, j / k) * inv;
           }),
      {input});
}

std::vector<double> gaussian_taps(double sigma, std::size_t radius) {
  if (!(sigma > 0.0)) throw ConfigError("gaussian sigma must be positive");
  std::vector<double> w(2 * radius + 1);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(radius);
    w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& v : w) v /= total;
  return w;
}

// ---------------------------------------------------------------------------
// Gaussian blur = (optional replicate pad) then separable valid filtering.

namespace {

struct BlurGeom {
  std::size_t c, h, w;  // input
  std::size_t pad;       // replicate pad per side
  std::size_t hp, wp;    // padded
  std::size_t ho, wo;    // output
};

Tensor pad_replicate(const Tensor& x, const BlurGeom& g) {
  if (g.pad == 0) return x;
  Tensor out(Shape{g.c, g.hp, g.wp});
  for (std::size_t ch = 0; ch < g.c; ++ch)
    for (std::size_t i = 0; i < g.hp; ++i) {
      const std::size_t si = static_cast<std::size_t>(
          std::clamp<long>(static_cast<long>(i) - static_cast<long>(g.pad), 0, static_cast<long>(g.h) - 1));
      for (std::size_t j = 0; j < g.wp; ++j) {
        const std::size_t sj = static_cast<std::size_t>(
            std::clamp<long>(static_cast<long>(j) - static_cast<long>(g.pad), 0, static_cast<long>(g.w) - 1));
        out.at(ch, i, j) = x.at(ch, si, sj);
      }
    }
  return out;
}

void unpad_replicate_add(const Tensor& gp, const BlurGeom& g, Tensor& gx) {
  if (g.pad == 0) {
    kernels::active().axpy(1.0, gp.ptr(), gx.ptr(), gp.numel());
    return;
  }
  for (std::size_t ch = 0; ch < g.c; ++ch)
    for (std::size_t i = 0; i < g.hp; ++i) {
      const std::size_t si = static_cast<std::size_t>(
          std::clamp<long>(static_cast<long>(i) - static_cast<long>(g.pad), 0, static_cast<long>(g.h) - 1));
      for (std::size_t j = 0; j < g.wp; ++j) {
        const std::size_t sj = static_cast<std::size_t>(
            std::clamp<long>(static_cast<long>(j) - static_cast<long>(g.pad), 0, static_cast<long>(g.w) - 1));
        gx.at(ch, si, sj) += gp.at(ch, i, j);
      }
    }
}

// Separable valid filter: [C,hp,wp] -> [C,ho,wo].
Tensor filter_valid(const Tensor& x, const std::vector<double>& taps, const BlurGeom& g) {
  const auto& kern = kernels::active();
  const std::size_t n = taps.size();
  Tensor tmp(Shape{g.c, g.ho, g.wp});
  for (std::size_t ch = 0; ch < g.c; ++ch)
    for (std::size_t i = 0; i < g.ho; ++i)
      for (std::size_t t = 0; t < n; ++t)
        kern.axpy(taps[t], x.ptr() + (ch * g.hp + i + t) * g.wp, tmp.ptr() + (ch * g.ho + i) * g.wp,
                  g.wp);
  Tensor out(Shape{g.c, g.ho, g.wo});
  for (std::size_t ch = 0; ch < g.c; ++ch)
    for (std::size_t i = 0; i < g.ho; ++i) {
      const double* row = tmp.ptr() + (ch * g.ho + i) * g.wp;
      double* dst = out.ptr() + (ch * g.ho + i) * g.wo;
      for (std::size_t t = 0; t < n; ++t) kern.axpy(taps[t], row + t, dst, g.wo);
    }
  return out;
}

Tensor filter_valid_transpose(const Tensor& gout, const std::vector<double>& taps,
                              const BlurGeom& g) {
  const auto& kern = kernels::active();
  const std::size_t n = taps.size();
  Tensor gtmp(Shape{g.c, g.ho, g.wp});
  for (std::size_t ch = 0; ch < g.c; ++ch)
    for (std::size_t i = 0; i < g.ho; ++i) {
      const double* src = gout.ptr() + (ch * g.ho + i) * g.wo;
      double* row = gtmp.ptr() + (ch * g.ho + i) * g.wp;
      for (std::size_t t = 0; t < n; ++t) kern.axpy(taps[t], src, row + t, g.wo);
    }
  Tensor gx(Shape{g.c, g.hp, g.wp});
  for (std::size_t ch = 0; ch < g.c; ++ch)
    for (std::size_t i = 0; i < g.ho; ++i)
      for (std::size_t t = 0; t < n; ++t)
        kern.axpy(taps[t], gtmp.ptr() + (ch * g.ho + i) * g.wp,
                  gx.ptr() + (ch * g.hp + i + t) * g.wp, g.wp);
  return gx;
}

}  // namespace

Var gaussian_blur(Var input, double sigma, std::size_t radius, BlurPadding padding) {
  const Tensor& x = input.value();
  require_rank(x, 3, "gaussian_blur input");
  auto taps = gaussian_taps(sigma, radius);
  BlurGeom g{x.dim(0), x.dim(1), x.dim(2), 0, 0, 0, 0, 0};
  g.pad = padding == BlurPadding::Replicate ? radius : 0;
  g.hp = g.h + 2 * g.pad;
  g.wp = g.w + 2 * g.pad;
  if (g.hp < 2 * radius + 1 || g.wp < 2 * radius + 1) {
    throw SizeError("gaussian_blur: image " + shape_str(x.shape()) + " smaller than window " +
                    std::to_string(2 * radius + 1));
  }
  g.ho = g.hp - 2 * radius;
  g.wo = g.wp - 2 * radius;
  return input.tape().apply(
      prim("gaussian_blur",
           [g, taps](In in) { return filter_valid(pad_replicate(*in[0], g), taps, g); },
           [g, taps](In, const Tensor&, const Tensor& gout, GradIn gin) {
             unpad_replicate_add(filter_valid_transpose(gout, taps, g), g, *gin[0]);
           }),
      {input});
}

// ---------------------------------------------------------------------------

namespace {

struct Bilinear {
  std::size_t i0, i1, j0, j1;
  double fu, fv;
  bool u_inside, v_inside;  // coordinate strictly usable for gradient
};

Bilinear locate(double u, double v, std::size_t h, std::size_t w) {
  const double umax = static_cast<double>(h - 1), vmax = static_cast<double>(w - 1);
  Bilinear b{};
  b.u_inside = u >= 0.0 && u <= umax;
  b.v_inside = v >= 0.0 && v <= vmax;
  const double uc = std::clamp(u, 0.0, umax);
  const double vc = std::clamp(v, 0.0, vmax);
  b.i0 = static_cast<std::size_t>(std::floor(uc));
  b.j0 = static_cast<std::size_t>(std::floor(vc));
  b.i1 = std::min(b.i0 + 1, h - 1);
  b.j1 = std::min(b.j0 + 1, w - 1);
  b.fu = uc - static_cast<double>(b.i0);
  b.fv = vc - static_cast<double>(b.j0);
  return b;
}

}  // namespace

Var grid_sample(Var input, Var grid) {
  const Tensor& x = input.value();
  const Tensor& gr = grid.value();
  require_rank(x, 3, "grid_sample input");
  require_rank(gr, 3, "grid_sample grid");
  if (gr.dim(2) != 2) {
    throw DimensionError("grid_sample: grid axis 2 must have length 2, got " +
                         shape_str(gr.shape()));
  }
  if (x.dim(1) == 0 || x.dim(2) == 0) throw SizeError("grid_sample: empty input");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t ho = gr.dim(0), wo = gr.dim(1);
  return tape_of(input, grid).apply(
      prim("grid_sample",
           [=](In in) {
             const Tensor &src = *in[0], &gd = *in[1];
             Tensor out(Shape{c, ho, wo});
             const std::size_t plane = ho * wo;
             for (std::size_t p = 0; p < plane; ++p) {
               const Bilinear b = locate(gd[2 * p], gd[2 * p + 1], h, w);
               const double w00 = (1 - b.fu) * (1 - b.fv), w01 = (1 - b.fu) * b.fv;
               const double w10 = b.fu * (1 - b.fv), w11 = b.fu * b.fv;
               for (std::size_t ch = 0; ch < c; ++ch) {
                 const double* s = src.ptr() + ch * h * w;
                 out[ch * plane + p] = w00 * s[b.i0 * w + b.j0] + w01 * s[b.i0 * w + b.j1] +
                                       w10 * s[b.i1 * w + b.j0] + w11 * s[b.i1 * w + b.j1];
               }
             }
             return out;
           },
           [=](In in, const Tensor&, const Tensor& g, GradIn gin) {
             const Tensor &src = *in[0], &gd = *in[1];
             const std::size_t plane = ho * wo;
             for (std::size_t p = 0; p < plane; ++p) {
               const Bilinear b = locate(gd[2 * p], gd[2 * p + 1], h, w);
               if (gin[0]) {
                 const double w00 = (1 - b.fu) * (1 - b.fv), w01 = (1 - b.fu) * b.fv;
                 const double w10 = b.fu * (1 - b.fv), w11 = b.fu * b.fv;
                 for (std::size_t ch = 0; ch < c; ++ch) {
                   double* d = gin[0]->ptr() + ch * h * w;
                   const double gv = g[ch * plane + p];
                   d[b.i0 * w + b.j0] += w00 * gv;
                   d[b.i0 * w + b.j1] += w01 * gv;
                   d[b.i1 * w + b.j0] += w10 * gv;
                   d[b.i1 * w + b.j1] += w11 * gv;
                 }
               }
               if (gin[1]) {
                 double du = 0.0, dv = 0.0;
                 for (std::size_t ch = 0; ch < c; ++ch) {
                   const double* s = src.ptr() + ch * h * w;
                   const double v00 = s[b.i0 * w + b.j0], v01 = s[b.i0 * w + b.j1];
                   const double v10 = s[b.i1 * w + b.j0], v11 = s[b.i1 * w + b.j1];
                   const double gv = g[ch * plane + p];
                   du += gv * ((1 - b.fv) * (v10 - v00) + b.fv * (v11 - v01));
                   dv += gv * ((1 - b.fu) * (v01 - v00) + b.fu * (v11 - v10));
                 }
                 if (b.u_inside) (*gin[1])[2 * p] += du;
                 if (b.v_inside) (*gin[1])[2 * p + 1] += dv;
               }
             }
           }),
      {input, grid});
}

// ---------------------------------------------------------------------------

Var cosine_similarity(Var a, Var b) {
  if (a.value().numel() != b.value().numel()) {
    throw DimensionError("cosine_similarity: lengths differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  const auto& kern = kernels::active();
  const std::size_t n = a.value().numel();
  if (kern.dot(a.value().ptr(), a.value().ptr(), n) == 0.0 ||
      kern.dot(b.value().ptr(), b.value().ptr(), n) == 0.0) {
    throw DegenerateNormError("cosine_similarity: zero-norm vector");
  }
  return tape_of(a, b).apply(
      prim("cosine_similarity",
           [n](In in) {
             const auto& k = kernels::active();
             const double* x = in[0]->ptr();
             const double* y = in[1]->ptr();
             const double na = std::sqrt(k.dot(x, x, n)), nb = std::sqrt(k.dot(y, y, n));
             return Tensor::scalar(k.dot(x, y, n) / (na * nb));
           },
           [n](In in, const Tensor& out, const Tensor& g, GradIn gin) {
             const auto& k = kernels::active();
             const double* x = in[0]->ptr();
             const double* y = in[1]->ptr();
             const double na = std::sqrt(k.dot(x, x, n)), nb = std::sqrt(k.dot(y, y, n));
             const double c = out[0], gv = g[0];
             // d cos / dx = y/(|x||y|) - cos * x/|x|^2
             if (gin[0]) {
               k.axpy(gv / (na * nb), y, gin[0]->ptr(), n);
               k.axpy(-gv * c / (na * na), x, gin[0]->ptr(), n);
             }
             if (gin[1]) {
               k.axpy(gv / (na * nb), x, gin[1]->ptr(), n);
               k.axpy(-gv * c / (nb * nb), y, gin[1]->ptr(), n);
             }
           }),
      {a, b});
}

namespace {

// Unit-normalized columns of x [C,N] with smoothed norms.
std::pair<Tensor, std::vector<double>> normalize_columns(const Tensor& x) {
  const std::size_t c = x.dim(0), n = x.dim(1);
  std::vector<double> norms(n, kSqrtDelta);
  for (std::size_t r = 0; r < c; ++r)
    for (std::size_t j = 0; j < n; ++j) norms[j] += x.at(r, j) * x.at(r, j);
  for (double& v : norms) v = std::sqrt(v);
  Tensor hat(x.shape());
  for (std::size_t r = 0; r < c; ++r)
    for (std::size_t j = 0; j < n; ++j) hat.at(r, j) = x.at(r, j) / norms[j];
  return {std::move(hat), std::move(norms)};
}

}  // namespace

Var column_cosine(Var a, Var b) {
  require_rank(a.value(), 2, "column_cosine lhs");
  require_rank(b.value(), 2, "column_cosine rhs");
  if (a.value().dim(0) != b.value().dim(0)) {
    throw DimensionError("column_cosine: axis 0 differs, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  const std::size_t c = a.value().dim(0), kk = a.value().dim(1), n = b.value().dim(1);
  return tape_of(a, b).apply(
      prim("column_cosine",
           [=](In in) {
             const auto& kern = kernels::active();
             const auto [ah, an] = normalize_columns(*in[0]);
             const auto [bh, bn] = normalize_columns(*in[1]);
             Tensor out(Shape{kk, n});
             for (std::size_t r = 0; r < c; ++r)
               for (std::size_t i = 0; i < kk; ++i)
                 kern.axpy(ah.at(r, i), bh.ptr() + r * n, out.ptr() + i * n, n);
             return out;
           },
           [=](In in, const Tensor& out, const Tensor& g, GradIn gin) {
             const auto& kern = kernels::active();
             const auto [ah, an] = normalize_columns(*in[0]);
             const auto [bh, bn] = normalize_columns(*in[1]);
             // s_i = sum_n g_in c_in, t_n = sum_i g_in c_in
             std::vector<double> s(kk, 0.0), t(n, 0.0);
             for (std::size_t i = 0; i < kk; ++i)
               for (std::size_t j = 0; j < n; ++j) {
                 const double gc = g.at(i, j) * out.at(i, j);
                 s[i] += gc;
                 t[j] += gc;
               }
             if (gin[0]) {
               Tensor& ga = *gin[0];
               for (std::size_t r = 0; r < c; ++r)
                 for (std::size_t i = 0; i < kk; ++i) {
                   const double raw = kern.dot(g.ptr() + i * n, bh.ptr() + r * n, n);
                   ga.at(r, i) += (raw - ah.at(r, i) * s[i]) / an[i];
                 }
             }
             if (gin[1]) {
               Tensor raw(Shape{c, n});
               for (std::size_t r = 0; r < c; ++r)
                 for (std::size_t i = 0; i < kk; ++i)
                   kern.axpy(ah.at(r, i), g.ptr() + i * n, raw.ptr() + r * n, n);
               Tensor& gb = *gin[1];
               for (std::size_t r = 0; r < c; ++r)
                 for (std::size_t j = 0; j < n; ++j)
                   gb.at(r, j) += (raw.at(r, j) - bh.at(r, j) * t[j]) / bn[j];
             }
           }),
      {a, b});
}

}  // namespace uad::ops
