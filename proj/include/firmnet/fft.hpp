#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace firmnet {

using cplx = std::complex<double>;

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 Cooley-Tukey. n must be a power of two.
inline void fft_pow2(std::vector<cplx>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * 3.141592653589793238462643 / double(len);
    const cplx wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const cplx u = a[i + k];
        const cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse)
    for (cplx& v : a) v /= double(n);
}

// O(n^2) DFT for arbitrary length; used for oracle checks and odd sizes.
inline std::vector<cplx> dft_naive(const std::vector<cplx>& a, bool inverse) {
  const std::size_t n = a.size();
  std::vector<cplx> out(n, cplx(0.0, 0.0));
  const double sgn = inverse ? 2.0 : -2.0;
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc(0.0, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double ang = sgn * 3.141592653589793238462643 * double(k * j % n) / double(n);
      acc += a[j] * cplx(std::cos(ang), std::sin(ang));
    }
    out[k] = inverse ? acc / double(n) : acc;
  }
  return out;
}

inline void transform_1d(std::vector<cplx>& a, bool inverse) {
  if (is_pow2(a.size()))
    fft_pow2(a, inverse);
  else
    a = dft_naive(a, inverse);
}

// 2D transform of an h-by-w row-major complex grid, rows then columns.
inline void transform_2d(std::vector<cplx>& grid, std::size_t h, std::size_t w, bool inverse) {
  std::vector<cplx> line;
  line.resize(w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) line[x] = grid[y * w + x];
    transform_1d(line, inverse);
    for (std::size_t x = 0; x < w; ++x) grid[y * w + x] = line[x];
  }
  line.resize(h);
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) line[y] = grid[y * w + x];
    transform_1d(line, inverse);
    for (std::size_t y = 0; y < h; ++y) grid[y * w + x] = line[y];
  }
}

}  // namespace firmnet
