#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>

#include "firmnet/io.hpp"
#include "firmnet/linmap.hpp"
#include "firmnet/tensor.hpp"

namespace firmnet {

// Procedural blur kernels. The spatial extents are odd so the center
// convention floor(size/2) coincides with the middle tap.

inline Tensor kernel_dirac(std::size_t size = 1) {
  Tensor k({1, size, size});
  k.at(0, size / 2, size / 2) = 1.0;
  return k;
}

inline Tensor kernel_gaussian(std::size_t size, double sigma) {
  if (size % 2 == 0) throw DimensionError("kernel size must be odd");
  Tensor k({1, size, size});
  const double c = double(size / 2);
  double sum = 0.0;
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double dy = double(y) - c, dx = double(x) - c;
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      k.at(0, y, x) = v;
      sum += v;
    }
  for (double& v : k.values()) v /= sum;
  return k;
}

// Straight motion streak through the center at the given angle.
inline Tensor kernel_motion_line(std::size_t size, double angle_rad) {
  if (size % 2 == 0) throw DimensionError("kernel size must be odd");
  Tensor k({1, size, size});
  const double c = double(size / 2);
  const double dx = std::cos(angle_rad), dy = std::sin(angle_rad);
  const int steps = 4 * int(size);
  for (int s = -steps; s <= steps; ++s) {
    const double t = double(s) * double(size / 2) / double(steps);
    const long y = std::lround(c + t * dy), x = std::lround(c + t * dx);
    if (y >= 0 && y < long(size) && x >= 0 && x < long(size))
      k.at(0, std::size_t(y), std::size_t(x)) = 1.0;
  }
  double sum = 0.0;
  for (double v : k.values()) sum += v;
  for (double& v : k.values()) v /= sum;
  return k;
}

inline Tensor kernel_uniform_square(std::size_t size) {
  if (size % 2 == 0) throw DimensionError("kernel size must be odd");
  Tensor k({1, size, size});
  for (double& v : k.values()) v = 1.0 / double(size * size);
  return k;
}

// Deblurring problem z = H xbar + e with a circular-convolution blur and
// white Gaussian noise of standard deviation nu. mu records ||H||^2 on the
// image grid.
struct BlurProblem {
  LinearMap blur;
  Tensor kernel;
  Tensor observation;
  double noise_std = 0.0;
  std::optional<Tensor> truth;
  double mu = 1.0;
  std::uint64_t seed = 0;

  Tensor grad_datafit(const Tensor& x) const {
    Tensor r = blur.forward(x);
    r -= observation;
    return blur.adjoint(r);
  }

  double datafit(const Tensor& x) const {
    Tensor r = blur.forward(x);
    r -= observation;
    return 0.5 * dot(r, r);
  }

  double kernel_norm() const { return norm2(kernel); }
};

// Builds the problem; with normalize set, the kernel is rescaled so that
// mu = ||H||^2 = 1 exactly on the grid (the convolution norm is the largest
// DFT magnitude of the embedded kernel, computed directly).
inline BlurProblem make_blur_problem(Tensor kernel, const Tensor& truth, double nu, Rng rng,
                                     bool normalize = true) {
  if (nu < 0.0) throw std::invalid_argument("noise std must be nonnegative");
  if (truth.rank() != 3) throw DimensionError("truth image must be (c,h,w)");
  double knorm2 = 0.0;
  for (double v : kernel.values()) knorm2 += v * v;
  if (knorm2 == 0.0) throw std::invalid_argument("zero blur kernel");

  const std::size_t h = truth.extent(1), w = truth.extent(2);
  if (normalize) {
    const double grid_norm = circ_conv_grid_norm(kernel, h, w);
    for (double& v : kernel.values()) v /= grid_norm;
  }
  BlurProblem prob;
  prob.kernel = kernel;
  prob.blur = LinearMap::circular_convolution(std::move(kernel));
  const double n = circ_conv_grid_norm(prob.kernel, h, w);
  prob.mu = n * n;
  prob.noise_std = nu;
  prob.seed = rng.key();
  Tensor z = prob.blur.forward(truth);
  if (nu > 0.0) {
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += nu * rng.normal();
  }
  prob.observation = std::move(z);
  prob.truth = truth;
  return prob;
}

// Heuristic standard deviation of the residual noise the denoiser faces near
// convergence: nu_eff = 2 nu ||h||, with ||h|| the Euclidean norm of the
// kernel taps.
inline double effective_noise(const BlurProblem& prob) {
  return 2.0 * prob.noise_std * prob.kernel_norm();
}

struct RecommendedParams {
  double gamma = 0.0;
  double sigma = 0.0;
};

// Operating point gamma = 1.99/mu and training noise sigma = gamma * nu_eff.
inline RecommendedParams recommend_params(const BlurProblem& prob) {
  if (prob.mu <= 0.0) throw std::invalid_argument("recommend_params needs mu > 0");
  RecommendedParams p;
  p.gamma = 1.99 / prob.mu;
  p.sigma = p.gamma * effective_noise(prob);
  return p;
}

// Problem bundle on disk: kernel.ntf, observation.ntf, truth.ntf (optional),
// meta (key=value with nu, mu, seed).
inline void save_problem(const std::string& dir, const BlurProblem& prob) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_ntf(dir + "/kernel.ntf", prob.kernel);
  write_ntf(dir + "/observation.ntf", prob.observation);
  if (prob.truth) write_ntf(dir + "/truth.ntf", *prob.truth);
  KeyValues meta;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", prob.noise_std);
  meta["nu"] = buf;
  std::snprintf(buf, sizeof buf, "%.17g", prob.mu);
  meta["mu"] = buf;
  meta["seed"] = std::to_string(prob.seed);
  write_key_values(dir + "/meta", meta);
}

inline BlurProblem load_problem(const std::string& dir) {
  namespace fs = std::filesystem;
  BlurProblem prob;
  prob.kernel = read_ntf(dir + "/kernel.ntf");
  prob.observation = read_ntf(dir + "/observation.ntf");
  if (fs::exists(dir + "/truth.ntf")) prob.truth = read_ntf(dir + "/truth.ntf");
  const KeyValues meta = read_key_values(dir + "/meta");
  KeyValueView view(meta);
  prob.noise_std = view.num("nu", 0.0);
  prob.mu = view.num("mu", 1.0);
  prob.seed = view.unsigned_integer("seed", 0);
  prob.blur = LinearMap::circular_convolution(prob.kernel);
  return prob;
}

}  // namespace firmnet
