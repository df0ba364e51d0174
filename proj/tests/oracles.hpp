#pragma once

// Independent reference implementations the library is checked against.

#include <cmath>
#include <cstddef>
#include <vector>

#include "uad/segmodel.hpp"
#include "uad/tensor.hpp"

namespace uad::test {

// Direct windowed SSIM: 2-D Gaussian weights, every valid window position,
// averaged over channels and positions.
inline double reference_ssim(const Tensor& a, const Tensor& b, std::size_t window, double sigma) {
  const std::size_t c = a.dim(0), h = a.dim(1), w = a.dim(2), r = window / 2;
  std::vector<double> g(window);
  double gs = 0;
  for (std::size_t k = 0; k < window; ++k) {
    const double d = static_cast<double>(k) - static_cast<double>(r);
    g[k] = std::exp(-d * d / (2 * sigma * sigma));
    gs += g[k];
  }
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  std::size_t count = 0;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i + window <= h; ++i)
      for (std::size_t j = 0; j + window <= w; ++j) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (std::size_t u = 0; u < window; ++u)
          for (std::size_t v = 0; v < window; ++v) {
            const double wt = g[u] * g[v] / (gs * gs);
            const double x = a.at(ch, i + u, j + v), y = b.at(ch, i + u, j + v);
            ma += wt * x;
            mb += wt * y;
            saa += wt * x * x;
            sbb += wt * y * y;
            sab += wt * x * y;
          }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
  return total / static_cast<double>(count);
}

// Counts pixels with 2-D indexing.
inline double counting_iou(const seg::BinaryMask& a, const seg::BinaryMask& b) {
  long inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.height; ++i)
    for (std::size_t j = 0; j < a.width; ++j) {
      const bool x = a.at(i, j) != 0, y = b.at(i, j) != 0;
      inter += x && y;
      uni += x || y;
    }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace uad::test
