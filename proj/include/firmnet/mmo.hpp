#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "firmnet/dense.hpp"
#include "firmnet/io.hpp"
#include "firmnet/linmap.hpp"
#include "firmnet/tensor.hpp"

namespace firmnet {

// Scalar firmly nonexpansive map on the real line. Every kind is monotone
// and 1-Lipschitz, which on R is equivalent to firm nonexpansiveness.
class ScalarProx {
public:
  static ScalarProx identity() { return ScalarProx([](double t) { return t; }, "identity"); }

  static ScalarProx soft_threshold(double tau) {
    return ScalarProx(
        [tau](double t) {
          const double m = std::abs(t) - tau;
          return m > 0.0 ? (t > 0.0 ? m : -m) : 0.0;
        },
        "soft-threshold");
  }

  static ScalarProx interval_projection(double a, double b) {
    return ScalarProx([a, b](double t) { return std::clamp(t, a, b); }, "interval-projection");
  }

  // Monotone piecewise-linear interpolation of (xs, ys) with segment slopes
  // clamped into [0,1] and constant extension outside the knot range; firmly
  // nonexpansive by construction.
  static ScalarProx table(std::vector<double> xs, std::vector<double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
      throw std::invalid_argument("prox table needs >= 2 matching knots");
    for (std::size_t i = 1; i < xs.size(); ++i)
      if (!(xs[i] > xs[i - 1])) throw std::invalid_argument("prox table xs must increase");
    std::vector<double> fixed(ys.size());
    fixed[0] = ys[0];
    for (std::size_t i = 1; i < xs.size(); ++i) {
      const double slope = std::clamp((ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1]), 0.0, 1.0);
      fixed[i] = fixed[i - 1] + slope * (xs[i] - xs[i - 1]);
    }
    auto x = std::make_shared<std::vector<double>>(std::move(xs));
    auto y = std::make_shared<std::vector<double>>(std::move(fixed));
    return ScalarProx(
        [x, y](double t) {
          if (t <= x->front()) return y->front();
          if (t >= x->back()) return y->back();
          const auto it = std::upper_bound(x->begin(), x->end(), t);
          const std::size_t i = std::size_t(it - x->begin());
          const double r = (t - (*x)[i - 1]) / ((*x)[i] - (*x)[i - 1]);
          return (*y)[i - 1] + r * ((*y)[i] - (*y)[i - 1]);
        },
        "table");
  }

  double operator()(double t) const { return f_(t); }
  const std::string& kind() const { return kind_; }

private:
  ScalarProx(std::function<double(double)> f, std::string kind)
      : f_(std::move(f)), kind_(std::move(kind)) {}

  std::function<double(double)> f_;
  std::string kind_;
};

// Outcome of a sampling-based certification run. Never a proof: the report
// carries the sample count and the worst observed margins.
struct CertReport {
  std::string check;
  std::size_t samples = 0;
  double max_violation = 0.0;  // worst lhs - rhs of the tested inequality
  double worst_ratio = 0.0;    // worst Lipschitz ratio of the reflected map

  void csv_row(CsvWriter& w) const { w.row(check, samples, max_violation, worst_ratio); }
};

// Blockwise stationarity certificate: projections onto factor spaces and
// symmetric nonnegative weights. Dense, test-scale only (dim <= 64).
struct StationaryCertificate {
  std::vector<Matrix> projections;  // each rows_k x dim
  std::vector<Matrix> weights;      // each dim x dim, symmetric PSD

  std::size_t dim() const { return projections.empty() ? 0 : projections.front().cols(); }

  // Verifies sum of Pi_k* Pi_k = Id, ||sum Omega_k|| <= 1, each Omega_k PSD.
  void validate() const {
    if (projections.empty() || projections.size() != weights.size())
      throw std::invalid_argument("certificate needs matching projections and weights");
    const std::size_t n = dim();
    if (n > 64) throw std::invalid_argument("certificate limited to dim <= 64");
    Matrix resolution(n, n);
    Matrix weight_sum(n, n);
    for (std::size_t k = 0; k < projections.size(); ++k) {
      const Matrix& p = projections[k];
      if (p.cols() != n || weights[k].rows() != n || weights[k].cols() != n)
        throw std::invalid_argument("certificate block dimensions disagree");
      resolution += p.transposed() * p;
      weight_sum += weights[k];
      if (sym_min_eigenvalue(weights[k]) < -1e-10)
        throw std::invalid_argument("certificate weight block is not PSD");
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double want = i == j ? 1.0 : 0.0;
        if (std::abs(resolution(i, j) - want) > 1e-10)
          throw std::invalid_argument("certificate projections do not resolve the identity");
      }
    if (sym_operator_norm(weight_sum) > 1.0 + 1e-10)
      throw std::invalid_argument("certificate weight sum exceeds unit norm");
  }
};

// Firmly nonexpansive map handle representing a maximally monotone operator
// through its resolvent. Supports the composition algebra of the constructors
// below; certification is stochastic and attached as a warning when it fails.
class Resolvent {
public:
  using Apply = std::function<Tensor(const Tensor&)>;

  Resolvent() = default;
  Resolvent(Apply apply, std::string provenance, std::size_t dim)
      : apply_(std::move(apply)), provenance_(std::move(provenance)), dim_(dim) {}

  Tensor operator()(const Tensor& x) const { return apply_(x); }
  const std::string& provenance() const { return provenance_; }
  std::size_t dim() const { return dim_; }

  const std::optional<std::string>& warning() const { return warning_; }
  void attach_warning(std::string w) { warning_ = std::move(w); }

  const std::optional<StationaryCertificate>& certificate() const { return certificate_; }
  void attach_certificate(StationaryCertificate c) { certificate_ = std::move(c); }

private:
  Apply apply_;
  std::string provenance_;
  std::size_t dim_ = 0;
  std::optional<std::string> warning_;
  std::optional<StationaryCertificate> certificate_;
};

// J = (Id + Q)/2 for a nonexpansive Q. The claim on Q is checked by a short
// stochastic sampler; a detected violation attaches a warning but the
// construction still succeeds.
inline Resolvent resolvent_from_nonexpansive(const std::function<Tensor(const Tensor&)>& q,
                                             std::size_t dim, Rng rng,
                                             std::size_t check_pairs = 256, double box = 10.0) {
  auto qf = q;
  Resolvent j(
      [qf](const Tensor& x) {
        Tensor qx = qf(x);
        qx += x;
        qx *= 0.5;
        return qx;
      },
      "from-nonexpansive", dim);
  double worst = 0.0;
  for (std::size_t i = 0; i < check_pairs; ++i) {
    const Tensor x = Tensor::uniform({dim}, rng, -box, box);
    const Tensor y = Tensor::uniform({dim}, rng, -box, box);
    const double dxy = norm2(x - y);
    if (dxy == 0.0) continue;
    worst = std::max(worst, norm2(qf(x) - qf(y)) / dxy);
  }
  if (worst > 1.0 + 1e-6)
    j.attach_warning("sampled Lipschitz ratio " + std::to_string(worst) + " exceeds 1");
  return j;
}

// Q = 2J - Id, the reflected resolvent; nonexpansive iff J is firmly
// nonexpansive.
inline std::function<Tensor(const Tensor&)> reflected(const Resolvent& j) {
  return [j](const Tensor& x) {
    Tensor out = j(x);
    out *= 2.0;
    out -= x;
    return out;
  };
}

// J(x) = U*( prox_k( (Ux)_k ) ): the resolvent of a separable operator
// conjugated by an orthogonal map. Attaches the stationarity certificate
// with Pi_k = row-k selector of U and Omega_k = Pi_k* Pi_k when dim <= 64.
inline Resolvent separable_unitary_mmo(const LinearMap& u, std::vector<ScalarProx> proxes) {
  const std::size_t dim = proxes.size();
  if (dim == 0) throw std::invalid_argument("separable_unitary_mmo needs at least one prox");
  {
    Rng rng(0x5eedULL);
    for (int trial = 0; trial < 4; ++trial) {
      const Tensor x = Tensor::gaussian({dim}, rng);
      const Tensor y = Tensor::gaussian({dim}, rng);
      const Tensor ux = u.forward(x);
      if (std::abs(dot(ux, y) - dot(x, u.adjoint(y))) > 1e-10 * (1.0 + norm2(x) * norm2(y)) ||
          std::abs(norm2(ux) - norm2(x)) > 1e-10 * (1.0 + norm2(x)))
        throw std::invalid_argument("separable_unitary_mmo: operator failed orthogonality test");
    }
  }
  auto ps = std::make_shared<std::vector<ScalarProx>>(std::move(proxes));
  auto um = std::make_shared<LinearMap>(u);
  Resolvent j(
      [ps, um, dim](const Tensor& x) {
        if (x.size() != dim) throw DimensionError("separable resolvent dimension mismatch");
        Tensor c = um->forward(x);
        for (std::size_t k = 0; k < dim; ++k) c[k] = (*ps)[k](c[k]);
        return um->adjoint(c);
      },
      "separable-unitary", dim);
  if (dim <= 64) {
    StationaryCertificate cert;
    for (std::size_t k = 0; k < dim; ++k) {
      Matrix pk(1, dim);
      Tensor ek({dim});
      ek[k] = 1.0;
      const Tensor row = u.adjoint(ek);  // row k of U
      for (std::size_t c = 0; c < dim; ++c) pk(0, c) = row[c];
      Matrix omega = pk.transposed() * pk;
      cert.projections.push_back(std::move(pk));
      cert.weights.push_back(std::move(omega));
    }
    j.attach_certificate(std::move(cert));
  }
  return j;
}

// Resolvent of the inverse operator: J' = Id - J.
inline Resolvent inverse_mmo(const Resolvent& j) {
  return Resolvent([j](const Tensor& x) { return x - j(x); }, "inverse-of", j.dim());
}

// Resolvent of rho * A(. / rho): x -> rho * J(x / rho).
inline Resolvent scale_mmo(const Resolvent& j, double rho) {
  if (rho == 0.0) throw std::invalid_argument("scale_mmo needs rho != 0");
  return Resolvent(
      [j, rho](const Tensor& x) {
        Tensor out = j(x * (1.0 / rho));
        out *= rho;
        return out;
      },
      "scaled", j.dim());
}

// Samples point pairs in [-box, box]^dim and reports the worst violation of
// ||Jx - Jy||^2 <= <x - y, Jx - Jy> along with the worst Lipschitz ratio of
// the reflected map 2J - Id.
inline CertReport check_firm_nonexpansive(const Resolvent& j, Rng rng, std::size_t pairs,
                                          double box = 10.0) {
  if (pairs < 1) throw std::invalid_argument("check_firm_nonexpansive needs pairs >= 1");
  CertReport report;
  report.check = "firm-nonexpansive";
  report.samples = pairs;
  const std::size_t dim = j.dim();
  for (std::size_t i = 0; i < pairs; ++i) {
    const Tensor x = Tensor::uniform({dim}, rng, -box, box);
    const Tensor y = Tensor::uniform({dim}, rng, -box, box);
    const Tensor jx = j(x), jy = j(y);
    const Tensor dj = jx - jy;
    const Tensor dxy = x - y;
    const double lhs = dot(dj, dj);
    const double rhs = dot(dxy, dj);
    report.max_violation = std::max(report.max_violation, lhs - rhs);
    const double dn = norm2(dxy);
    if (dn > 0.0) {
      // reflected difference: 2(Jx - Jy) - (x - y)
      Tensor rq = dj;
      rq *= 2.0;
      rq -= dxy;
      report.worst_ratio = std::max(report.worst_ratio, norm2(rq) / dn);
    }
  }
  return report;
}

// Reports the worst sampled violation of the blockwise inequality
// ||Pi_k(2Jx - x - 2Jy + y)||^2 <= <x - y, Omega_k (x - y)>.
inline CertReport check_stationary(const Resolvent& j, const StationaryCertificate& cert, Rng rng,
                                   std::size_t pairs, double box = 10.0) {
  cert.validate();
  CertReport report;
  report.check = "stationary";
  report.samples = pairs;
  const std::size_t dim = j.dim();
  if (cert.dim() != dim) throw std::invalid_argument("certificate dimension mismatch");
  for (std::size_t i = 0; i < pairs; ++i) {
    const Tensor x = Tensor::uniform({dim}, rng, -box, box);
    const Tensor y = Tensor::uniform({dim}, rng, -box, box);
    Tensor refl = j(x) - j(y);
    refl *= 2.0;
    refl -= x - y;
    const Tensor d = x - y;
    for (std::size_t k = 0; k < cert.projections.size(); ++k) {
      const auto proj = cert.projections[k].apply(refl.values());
      double lhs = 0.0;
      for (double v : proj) lhs += v * v;
      const auto wd = cert.weights[k].apply(d.values());
      double rhs = 0.0;
      for (std::size_t c = 0; c < d.size(); ++c) rhs += d[c] * wd[c];
      report.max_violation = std::max(report.max_violation, lhs - rhs);
    }
  }
  return report;
}

}  // namespace firmnet
