#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "firmnet/tensor.hpp"

namespace firmnet {

// Peak signal-to-noise ratio for unit-normalized images (peak value 1):
// 20 log10( sqrt(K) / ||x - ref|| ). Identical images give +inf.
inline double psnr(const Tensor& x, const Tensor& ref) {
  x.require_same_shape(ref);
  const double err = norm2(x - ref);
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(std::sqrt(double(x.size())) / err);
}

// Whole-image SSIM with constants (1e-4, 9e-4): means, variances, and the
// cross-covariance are taken globally, not over sliding windows.
inline double ssim(const Tensor& x, const Tensor& ref) {
  x.require_same_shape(ref);
  const double c1 = 1e-4, c2 = 9e-4;
  const double mx = mean(x), mr = mean(ref);
  double vx = 0.0, vr = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    vx += (x[i] - mx) * (x[i] - mx);
    vr += (ref[i] - mr) * (ref[i] - mr);
    cov += (x[i] - mx) * (ref[i] - mr);
  }
  const double n = double(x.size());
  vx /= n;
  vr /= n;
  cov /= n;
  return ((2.0 * mx * mr + c1) * (2.0 * cov + c2)) /
         ((mx * mx + mr * mr + c1) * (vx + vr + c2));
}

struct MetricPair {
  double psnr = 0.0;
  double ssim = 0.0;

  static MetricPair of(const Tensor& x, const Tensor& ref) {
    return {firmnet::psnr(x, ref), firmnet::ssim(x, ref)};
  }
};

inline std::string format_db(double value) {
  if (std::isinf(value)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return buf;
}

}  // namespace firmnet
