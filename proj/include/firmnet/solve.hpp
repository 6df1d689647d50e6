#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "firmnet/io.hpp"
#include "firmnet/linmap.hpp"
#include "firmnet/mmo.hpp"
#include "firmnet/tensor.hpp"

namespace firmnet {

struct SolveConfig {
  double gamma = 1.0;
  std::size_t max_iterations = 1000;
  std::optional<double> stop_tolerance;  // on c_n; absent = fixed iteration count
  std::size_t record_every = 1;
  std::optional<double> mu;  // Lipschitz constant of grad f, when known
};

enum class SolveStatus { Converged, IterationLimit, Diverged, NonFinite };

struct SolveReport {
  Tensor final_iterate;
  std::vector<double> residuals;   // c_n = ||x_n - x_{n-1}|| / ||x_0||
  std::vector<double> fidelity;    // f(x_n) when a fidelity functional is given
  std::size_t iterations = 0;
  double wall_ms = 0.0;
  SolveStatus status = SolveStatus::IterationLimit;
  bool unnormalized_residuals = false;  // x0 = 0: raw ||x_n - x_{n-1}|| recorded
  std::string warning;

  void write_csv(const std::string& path) const {
    CsvWriter csv(path);
    csv.row("iteration", "c_n", "fidelity", "wall_ms");
    for (std::size_t i = 0; i < residuals.size(); ++i)
      csv.row(i + 1, residuals[i], i < fidelity.size() ? fidelity[i] : 0.0, wall_ms);
  }
};

inline const std::vector<double>& residual_series(const SolveReport& report) {
  return report.residuals;
}

using GradFn = std::function<Tensor(const Tensor&)>;
using ValueFn = std::function<double(const Tensor&)>;

// Forward-backward iteration x_{n+1} = J(x_n - gamma grad_f(x_n)). Records
// the normalized residual series and stops at the iteration budget, at the
// optional tolerance, or when the divergence guard trips (||x_n|| exceeding
// 1e6 ||x_0||, which surfaces non-certified denoisers).
inline SolveReport fb_solve(const GradFn& gradf, const Resolvent& j, const SolveConfig& config,
                            const Tensor& x0, const ValueFn& fidelity = nullptr) {
  if (config.gamma <= 0.0 || config.max_iterations < 1)
    throw std::invalid_argument("fb_solve needs gamma > 0 and at least one iteration");
  SolveReport report;
  if (config.mu && config.gamma >= 2.0 / *config.mu)
    report.warning = "step size violates gamma < 2/mu; convergence not guaranteed";

  const auto t0 = std::chrono::steady_clock::now();
  const double x0_norm = norm2(x0);
  report.unnormalized_residuals = x0_norm == 0.0;
  const double scale = report.unnormalized_residuals ? 1.0 : 1.0 / x0_norm;
  const double guard = 1e6 * (x0_norm == 0.0 ? 1.0 : x0_norm);

  Tensor x = x0;
  report.status = SolveStatus::IterationLimit;
  for (std::size_t n = 0; n < config.max_iterations; ++n) {
    Tensor step = gradf(x);
    step *= -config.gamma;
    step += x;
    Tensor next = j(step);
    const double cn = norm2(next - x) * scale;
    report.residuals.push_back(cn);
    if (fidelity) report.fidelity.push_back(fidelity(next));
    x = std::move(next);
    report.iterations = n + 1;
    if (!x.all_finite()) {
      report.status = SolveStatus::NonFinite;
      break;
    }
    if (norm2(x) > guard) {
      report.status = SolveStatus::Diverged;
      break;
    }
    if (config.stop_tolerance && cn < *config.stop_tolerance) {
      report.status = SolveStatus::Converged;
      break;
    }
  }
  report.final_iterate = std::move(x);
  report.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// Fixed-depth unfolding: exactly `depth` applications of the FB step, with no
// early stopping. Agrees bit-exactly with fb_solve truncated at `depth`.
inline Tensor unfold(const Resolvent& j, const GradFn& gradf, double gamma, std::size_t depth,
                     const Tensor& x0) {
  if (depth == 0) return x0;
  SolveConfig cfg;
  cfg.gamma = gamma;
  cfg.max_iterations = depth;
  return fb_solve(gradf, j, cfg, x0).final_iterate;
}

// Exact prox of tau * || Psi* . ||_1 for an orthogonal Psi:
// x -> Psi soft_threshold_tau (Psi* x).
inline Tensor prox_l1_synthesis(const Tensor& x, double tau, const LinearMap& psi) {
  {
    Rng rng(0x707eULL);
    for (int trial = 0; trial < 3; ++trial) {
      const Tensor a = Tensor::gaussian(x.shape(), rng);
      const Tensor b = Tensor::gaussian(x.shape(), rng);
      if (std::abs(dot(psi.forward(a), b) - dot(a, psi.adjoint(b))) >
              1e-10 * (1.0 + norm2(a) * norm2(b)) ||
          std::abs(norm2(psi.forward(a)) - norm2(a)) > 1e-10 * (1.0 + norm2(a)))
        throw std::invalid_argument("prox_l1_synthesis requires an orthogonal transform");
    }
  }
  Tensor c = psi.adjoint(x);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double m = std::abs(c[i]) - tau;
    c[i] = m > 0.0 ? (c[i] > 0.0 ? m : -m) : 0.0;
  }
  return psi.forward(c);
}

namespace detail {

// Periodic forward differences; output is (2*c, h, w): vertical then
// horizontal component per channel.
inline Tensor grad2d(const Tensor& u) {
  const std::size_t c = u.extent(0), h = u.extent(1), w = u.extent(2);
  Tensor g({2 * c, h, w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        g.at(2 * ch, y, x) = u.at(ch, (y + 1) % h, x) - u.at(ch, y, x);
        g.at(2 * ch + 1, y, x) = u.at(ch, y, (x + 1) % w) - u.at(ch, y, x);
      }
  return g;
}

// Discrete divergence, the negative adjoint of grad2d.
inline Tensor div2d(const Tensor& p, std::size_t c, std::size_t h, std::size_t w) {
  Tensor d({c, h, w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double py = p.at(2 * ch, y, x) - p.at(2 * ch, (y + h - 1) % h, x);
        const double px = p.at(2 * ch + 1, y, x) - p.at(2 * ch + 1, y, (x + w - 1) % w);
        d.at(ch, y, x) = py + px;
      }
  return d;
}

inline double tv_value(const Tensor& g) {
  double tv = 0.0;
  const std::size_t pairs = g.extent(0) / 2, plane = g.extent(1) * g.extent(2);
  for (std::size_t ch = 0; ch < pairs; ++ch) {
    const double* gy = g.data() + (2 * ch) * plane;
    const double* gx = g.data() + (2 * ch + 1) * plane;
    for (std::size_t p = 0; p < plane; ++p) tv += std::sqrt(gy[p] * gy[p] + gx[p] * gx[p]);
  }
  return tv;
}

}  // namespace detail

// Isotropic total variation with periodic boundaries.
inline double tv_norm(const Tensor& x) {
  if (x.rank() == 1) return detail::tv_value(detail::grad2d(Tensor({1, 1, x.extent(0)}, x.values())));
  return detail::tv_value(detail::grad2d(x));
}

struct TvProxResult {
  Tensor value;
  double duality_gap = 0.0;
};

// Approximate prox of tau * TV (isotropic, periodic) by projected gradient on
// the dual problem with step 1/8:
//   p <- proj_{|p|<=1 per pixel}( p + (1/8) grad( div p - x/tau ) )
//   u  = x - tau div p
// The reported duality gap tau*(TV(u) + <grad u, p>) is zero at the exact
// solution. Flat inputs are treated as single-row images (1D TV).
inline TvProxResult prox_tv(const Tensor& x, double tau, std::size_t inner_iters) {
  if (inner_iters < 1) throw std::invalid_argument("prox_tv needs inner_iters >= 1");
  if (tau < 0.0) throw std::invalid_argument("prox_tv needs tau >= 0");
  Tensor img = x;
  bool flat = false;
  if (x.rank() == 1) {
    img = Tensor({1, 1, x.extent(0)}, x.values());
    flat = true;
  }
  if (img.rank() != 3) throw DimensionError("prox_tv expects flat or (c,h,w) input");
  const std::size_t c = img.extent(0), h = img.extent(1), w = img.extent(2);

  TvProxResult out;
  if (tau == 0.0) {
    out.value = x;
    return out;
  }

  Tensor p({2 * c, h, w});
  const double step = 0.125;
  for (std::size_t it = 0; it < inner_iters; ++it) {
    Tensor inner = detail::div2d(p, c, h, w);
    axpy(-1.0 / tau, img, inner);
    const Tensor g = detail::grad2d(inner);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t plane = h * w;
      double* py = p.data() + (2 * ch) * plane;
      double* px = p.data() + (2 * ch + 1) * plane;
      const double* gy = g.data() + (2 * ch) * plane;
      const double* gx = g.data() + (2 * ch + 1) * plane;
      for (std::size_t q = 0; q < plane; ++q) {
        double ny = py[q] + step * gy[q];
        double nx = px[q] + step * gx[q];
        const double mag = std::sqrt(ny * ny + nx * nx);
        if (mag > 1.0) {
          ny /= mag;
          nx /= mag;
        }
        py[q] = ny;
        px[q] = nx;
      }
    }
  }
  Tensor u = img;
  axpy(-tau, detail::div2d(p, c, h, w), u);
  const Tensor gu = detail::grad2d(u);
  out.duality_gap = tau * (detail::tv_value(gu) + dot(gu, p));
  out.value = flat ? Tensor({w}, u.values()) : u;
  return out;
}

}  // namespace firmnet
