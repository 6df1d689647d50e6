#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>

#include "firmnet/dense.hpp"
#include "firmnet/fft.hpp"
#include "firmnet/tensor.hpp"

namespace firmnet {

// Circular (periodic) convolution of x with a centered kernel. The kernel
// center is floor(extent/2) on each spatial axis. With adjoint=true the
// correlation (flipped kernel) is applied instead, so <Hx,y> = <x,H*y>.
//
// x is (c,h,w) or flat; the kernel is (1,kh,kw) broadcast over channels,
// (c,kh,kw) applied channelwise, or flat for 1D signals.
namespace detail {

inline void conv_plane_direct(const double* x, double* out, std::size_t h, std::size_t w,
                              const double* k, std::size_t kh, std::size_t kw, bool adjoint) {
  const std::ptrdiff_t cy = std::ptrdiff_t(kh / 2), cx = std::ptrdiff_t(kw / 2);
  const std::ptrdiff_t H = std::ptrdiff_t(h), W = std::ptrdiff_t(w);
  for (std::ptrdiff_t y = 0; y < H; ++y) {
    for (std::ptrdiff_t x0 = 0; x0 < W; ++x0) {
      double acc = 0.0;
      for (std::size_t qy = 0; qy < kh; ++qy) {
        const std::ptrdiff_t oy = std::ptrdiff_t(qy) - cy;
        std::ptrdiff_t sy = adjoint ? y + oy : y - oy;
        sy %= H;
        if (sy < 0) sy += H;
        for (std::size_t qx = 0; qx < kw; ++qx) {
          const std::ptrdiff_t ox = std::ptrdiff_t(qx) - cx;
          std::ptrdiff_t sx = adjoint ? x0 + ox : x0 - ox;
          sx %= W;
          if (sx < 0) sx += W;
          acc += k[qy * kw + qx] * x[std::size_t(sy) * w + std::size_t(sx)];
        }
      }
      out[std::size_t(y) * w + std::size_t(x0)] = acc;
    }
  }
}

// Kernel embedded on the image grid so that grid[offset mod N] = tap value.
inline std::vector<cplx> kernel_symbol(const double* k, std::size_t kh, std::size_t kw,
                                       std::size_t h, std::size_t w) {
  std::vector<cplx> grid(h * w, cplx(0.0, 0.0));
  const std::ptrdiff_t cy = std::ptrdiff_t(kh / 2), cx = std::ptrdiff_t(kw / 2);
  for (std::size_t qy = 0; qy < kh; ++qy)
    for (std::size_t qx = 0; qx < kw; ++qx) {
      std::ptrdiff_t oy = (std::ptrdiff_t(qy) - cy) % std::ptrdiff_t(h);
      std::ptrdiff_t ox = (std::ptrdiff_t(qx) - cx) % std::ptrdiff_t(w);
      if (oy < 0) oy += std::ptrdiff_t(h);
      if (ox < 0) ox += std::ptrdiff_t(w);
      grid[std::size_t(oy) * w + std::size_t(ox)] += k[qy * kw + qx];
    }
  transform_2d(grid, h, w, false);
  return grid;
}

inline void conv_plane_fft(const double* x, double* out, std::size_t h, std::size_t w,
                           const double* k, std::size_t kh, std::size_t kw, bool adjoint) {
  std::vector<cplx> sym = kernel_symbol(k, kh, kw, h, w);
  std::vector<cplx> grid(h * w);
  for (std::size_t i = 0; i < h * w; ++i) grid[i] = cplx(x[i], 0.0);
  transform_2d(grid, h, w, false);
  for (std::size_t i = 0; i < h * w; ++i) grid[i] *= adjoint ? std::conj(sym[i]) : sym[i];
  transform_2d(grid, h, w, true);
  for (std::size_t i = 0; i < h * w; ++i) out[i] = grid[i].real();
}

}  // namespace detail

inline Tensor circ_conv_apply(const Tensor& kernel, const Tensor& x, bool adjoint = false) {
  // Normalize both operands to (channels, h, w) views.
  std::size_t c = 1, h = 1, w = 1, kc = 1, kh = 1, kw = 1;
  if (x.rank() == 1) {
    w = x.extent(0);
  } else if (x.rank() == 3) {
    c = x.extent(0), h = x.extent(1), w = x.extent(2);
  } else {
    throw DimensionError("circ_conv_apply expects flat or (c,h,w) input");
  }
  if (kernel.rank() == 1) {
    kw = kernel.extent(0);
  } else if (kernel.rank() == 3) {
    kc = kernel.extent(0), kh = kernel.extent(1), kw = kernel.extent(2);
  } else {
    throw DimensionError("kernel must be flat or (c,kh,kw)");
  }
  if (kh > h || kw > w) throw DimensionError("kernel extents exceed image extents");
  if (kc != 1 && kc != c) throw DimensionError("kernel channels must be 1 or match image");

  Tensor out(x.shape());
  const bool use_fft = is_pow2(h) && is_pow2(w) && h * w >= 64 && kh * kw > 1;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* kp = kernel.data() + (kc == 1 ? 0 : ch * kh * kw);
    const double* xp = x.data() + ch * h * w;
    double* op = out.data() + ch * h * w;
    if (kh * kw == 1) {
      for (std::size_t i = 0; i < h * w; ++i) op[i] = kp[0] * xp[i];
    } else if (use_fft) {
      detail::conv_plane_fft(xp, op, h, w, kp, kh, kw, adjoint);
    } else {
      detail::conv_plane_direct(xp, op, h, w, kp, kh, kw, adjoint);
    }
  }
  return out;
}

// Exact operator norm of the circular convolution on a given grid: the
// largest DFT magnitude of the embedded kernel.
inline double circ_conv_grid_norm(const Tensor& kernel, std::size_t h, std::size_t w) {
  std::size_t kc = 1, kh = 1, kw = 1;
  if (kernel.rank() == 1)
    kw = kernel.extent(0);
  else
    kc = kernel.extent(0), kh = kernel.extent(1), kw = kernel.extent(2);
  double worst = 0.0;
  for (std::size_t ch = 0; ch < kc; ++ch) {
    auto sym = detail::kernel_symbol(kernel.data() + ch * kh * kw, kh, kw, h, w);
    for (const cplx& s : sym) worst = std::max(worst, std::abs(s));
  }
  return worst;
}

// Linear operator with paired forward/adjoint application.
class LinearMap {
public:
  using Apply = std::function<Tensor(const Tensor&)>;

  LinearMap() = default;
  LinearMap(std::string kind, Apply forward, Apply adjoint)
      : kind_(std::move(kind)), forward_(std::move(forward)), adjoint_(std::move(adjoint)) {}

  Tensor forward(const Tensor& x) const { return forward_(x); }
  Tensor adjoint(const Tensor& y) const { return adjoint_(y); }
  const std::string& kind() const { return kind_; }

  static LinearMap identity() {
    auto f = [](const Tensor& x) { return x; };
    return LinearMap("identity", f, f);
  }

  static LinearMap scale(double s) {
    auto f = [s](const Tensor& x) { return x * s; };
    return LinearMap("scale", f, f);
  }

  static LinearMap circular_convolution(Tensor kernel) {
    auto k = std::make_shared<Tensor>(std::move(kernel));
    return LinearMap(
        "circular-convolution",
        [k](const Tensor& x) { return circ_conv_apply(*k, x, false); },
        [k](const Tensor& x) { return circ_conv_apply(*k, x, true); });
  }

  static LinearMap dense(Matrix m) {
    auto a = std::make_shared<Matrix>(std::move(m));
    auto at = std::make_shared<Matrix>(a->transposed());
    auto ap = [](const Matrix& mm, const Tensor& x) {
      if (x.size() != mm.cols()) throw DimensionError("dense map shape mismatch");
      return Tensor({mm.rows()}, mm.apply(x.values()));
    };
    return LinearMap(
        "dense", [a, ap](const Tensor& x) { return ap(*a, x); },
        [at, ap](const Tensor& x) { return ap(*at, x); });
  }

  // Same operator with forward and adjoint roles swapped.
  LinearMap transposed() const {
    return LinearMap(kind_ + "-transposed", adjoint_, forward_);
  }

  static LinearMap compose(LinearMap outer, LinearMap inner) {
    auto o = std::make_shared<LinearMap>(std::move(outer));
    auto i = std::make_shared<LinearMap>(std::move(inner));
    return LinearMap(
        "composition",
        [o, i](const Tensor& x) { return o->forward(i->forward(x)); },
        [o, i](const Tensor& x) { return i->adjoint(o->adjoint(x)); });
  }

  static LinearMap orthogonal_from_seed(std::uint64_t seed, std::size_t dim);
  static LinearMap haar(std::size_t levels);

private:
  std::string kind_;
  Apply forward_;
  Apply adjoint_;
};

// Orthogonal map as a product of `dim` Householder reflections built from
// seeded Gaussian vectors; exactly orthogonal by construction.
inline LinearMap LinearMap::orthogonal_from_seed(std::uint64_t seed, std::size_t dim) {
  if (dim < 1) throw DimensionError("orthogonal map needs dim >= 1");
  Rng rng(seed);
  auto vs = std::make_shared<std::vector<std::vector<double>>>();
  vs->reserve(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    std::vector<double> v(dim);
    double n2 = 0.0;
    do {
      n2 = 0.0;
      for (double& e : v) {
        e = rng.normal();
        n2 += e * e;
      }
    } while (n2 < 1e-12);
    vs->push_back(std::move(v));
  }
  auto reflect = [](const std::vector<double>& v, Tensor& x) {
    double vv = 0.0, vx = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      vv += v[i] * v[i];
      vx += v[i] * x[i];
    }
    const double s = 2.0 * vx / vv;
    for (std::size_t i = 0; i < v.size(); ++i) x[i] -= s * v[i];
  };
  auto fwd = [vs, reflect, dim](const Tensor& xin) {
    if (xin.size() != dim) throw DimensionError("orthogonal map dimension mismatch");
    Tensor x = xin;
    for (std::size_t i = 0; i < vs->size(); ++i) reflect((*vs)[i], x);
    return x;
  };
  auto adj = [vs, reflect, dim](const Tensor& xin) {
    if (xin.size() != dim) throw DimensionError("orthogonal map dimension mismatch");
    Tensor x = xin;
    for (std::size_t i = vs->size(); i-- > 0;) reflect((*vs)[i], x);
    return x;
  };
  return LinearMap("orthogonal", fwd, adj);
}

namespace detail {

inline void haar_pairs_forward(std::vector<double>& buf, std::size_t n) {
  static const double s = std::sqrt(0.5);
  std::vector<double> tmp(n);
  for (std::size_t i = 0; i < n / 2; ++i) {
    tmp[i] = s * (buf[2 * i] + buf[2 * i + 1]);
    tmp[n / 2 + i] = s * (buf[2 * i] - buf[2 * i + 1]);
  }
  for (std::size_t i = 0; i < n; ++i) buf[i] = tmp[i];
}

inline void haar_pairs_inverse(std::vector<double>& buf, std::size_t n) {
  static const double s = std::sqrt(0.5);
  std::vector<double> tmp(n);
  for (std::size_t i = 0; i < n / 2; ++i) {
    tmp[2 * i] = s * (buf[i] + buf[n / 2 + i]);
    tmp[2 * i + 1] = s * (buf[i] - buf[n / 2 + i]);
  }
  for (std::size_t i = 0; i < n; ++i) buf[i] = tmp[i];
}

}  // namespace detail

// Orthonormal multilevel Haar transform. Rank-1 tensors get the 1D
// transform; (c,h,w) tensors get the separable 2D transform per channel.
// All transformed extents must be divisible by 2^levels.
inline LinearMap LinearMap::haar(std::size_t levels) {
  auto run = [levels](const Tensor& xin, bool inverse) {
    Tensor x = xin;
    auto check = [&](std::size_t n) {
      if (n % (std::size_t(1) << levels) != 0)
        throw DimensionError("haar: extent not divisible by 2^levels");
    };
    if (x.rank() == 1) {
      const std::size_t n = x.extent(0);
      check(n);
      std::vector<double> buf(x.values());
      if (!inverse) {
        std::size_t len = n;
        for (std::size_t l = 0; l < levels; ++l, len /= 2) detail::haar_pairs_forward(buf, len);
      } else {
        std::size_t len = n >> (levels - 1);
        for (std::size_t l = 0; l < levels; ++l, len *= 2) detail::haar_pairs_inverse(buf, len);
      }
      return Tensor(x.shape(), std::move(buf));
    }
    if (x.rank() != 3) throw DimensionError("haar expects flat or (c,h,w) input");
    const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    check(h);
    check(w);
    auto pass_rows = [&](Tensor& t, std::size_t ch, std::size_t hh, std::size_t ww, bool inv) {
      std::vector<double> line(ww);
      for (std::size_t y = 0; y < hh; ++y) {
        for (std::size_t i = 0; i < ww; ++i) line[i] = t.at(ch, y, i);
        inv ? detail::haar_pairs_inverse(line, ww) : detail::haar_pairs_forward(line, ww);
        for (std::size_t i = 0; i < ww; ++i) t.at(ch, y, i) = line[i];
      }
    };
    auto pass_cols = [&](Tensor& t, std::size_t ch, std::size_t hh, std::size_t ww, bool inv) {
      std::vector<double> line(hh);
      for (std::size_t xcol = 0; xcol < ww; ++xcol) {
        for (std::size_t i = 0; i < hh; ++i) line[i] = t.at(ch, i, xcol);
        inv ? detail::haar_pairs_inverse(line, hh) : detail::haar_pairs_forward(line, hh);
        for (std::size_t i = 0; i < hh; ++i) t.at(ch, i, xcol) = line[i];
      }
    };
    for (std::size_t ch = 0; ch < c; ++ch) {
      if (!inverse) {
        std::size_t hh = h, ww = w;
        for (std::size_t l = 0; l < levels; ++l, hh /= 2, ww /= 2) {
          pass_rows(x, ch, hh, ww, false);
          pass_cols(x, ch, hh, ww, false);
        }
      } else {
        std::size_t hh = h >> (levels - 1), ww = w >> (levels - 1);
        for (std::size_t l = 0; l < levels; ++l, hh *= 2, ww *= 2) {
          pass_cols(x, ch, hh, ww, true);
          pass_rows(x, ch, hh, ww, true);
        }
      }
    }
    return x;
  };
  return LinearMap(
      "haar", [run](const Tensor& x) { return run(x, false); },
      [run](const Tensor& x) { return run(x, true); });
}

// Power-iteration estimate of the operator norm ||L|| on inputs shaped like
// `probe_shape`. Returns 0 for the zero operator. Estimates are nondecreasing
// in the iteration count and converge to the top singular value.
inline double op_norm(const LinearMap& L, const std::vector<std::size_t>& probe_shape,
                      std::size_t iters, Rng& rng) {
  if (iters < 1) throw std::invalid_argument("op_norm needs iters >= 1");
  Tensor v = Tensor::gaussian(probe_shape, rng);
  double nv = norm2(v);
  if (nv == 0.0) return 0.0;
  v *= 1.0 / nv;
  double sigma = 0.0;
  for (std::size_t t = 0; t < iters; ++t) {
    Tensor lv = L.forward(v);
    sigma = norm2(lv);
    if (sigma == 0.0) return 0.0;
    Tensor w = L.adjoint(lv);
    const double nw = norm2(w);
    if (nw == 0.0) return sigma;
    v = w * (1.0 / nw);
  }
  return sigma;
}

}  // namespace firmnet
