#pragma once

#include <string>
#include <vector>

#include "firmnet/dense.hpp"
#include "firmnet/linmap.hpp"
#include "firmnet/net.hpp"

namespace firmnet {

// Everything in this header concerns the reflected map Q = 2*net - Id of a
// denoiser network: its Jacobian products, spectral norm, and certified
// upper bounds.

// dQ(x) . v = 2 * d(net)(x) . v - v
inline Tensor q_jvp(const Network& net, const Tensor& x, const Tensor& v,
                    const ForwardTrace* trace = nullptr) {
  Tensor t = jvp(net, x, v, trace);
  t *= 2.0;
  t -= v;
  return t;
}

// dQ(x)^T . u = 2 * d(net)(x)^T . u - u
inline Tensor q_vjp_input(const Network& net, const Tensor& x, const Tensor& u,
                          const ForwardTrace* trace = nullptr) {
  Tensor g = vjp_input(net, x, u, trace);
  g *= 2.0;
  g -= u;
  return g;
}

struct JacobianProbe {
  Tensor point;
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
  double sigma = 0.0;            // estimate of ||dQ(point)||
  Tensor right;                  // final unit right singular vector
  Tensor left;                   // unit image direction dQ.right / sigma
  std::vector<double> history;   // per-iteration Rayleigh estimates
};

// Power iteration on dQ(x)^T dQ(x) using JVP/VJP products only; the
// per-iteration estimates are nondecreasing.
inline JacobianProbe jacobian_spectral_norm(const Network& net, const Tensor& point,
                                            std::size_t iters, Rng rng) {
  if (iters < 1) throw std::invalid_argument("jacobian_spectral_norm needs iters >= 1");
  JacobianProbe probe;
  probe.point = point;
  probe.iterations = iters;
  probe.seed = rng.key();
  const ForwardTrace trace = forward_trace(net, point);
  Tensor v = Tensor::gaussian(point.shape(), rng);
  const double nv = norm2(v);
  if (nv == 0.0) throw std::runtime_error("degenerate power-iteration start");
  v *= 1.0 / nv;
  probe.history.reserve(iters);
  for (std::size_t t = 0; t < iters; ++t) {
    Tensor s = q_jvp(net, point, v, &trace);
    const double sigma = norm2(s);
    probe.history.push_back(sigma);
    if (sigma == 0.0) {
      probe.sigma = 0.0;
      probe.right = v;
      probe.left = s;
      return probe;
    }
    Tensor w = q_vjp_input(net, point, s, &trace);
    const double nw = norm2(w);
    if (nw == 0.0) break;
    v = w * (1.0 / nw);
  }
  probe.right = v;
  Tensor s = q_jvp(net, point, v, &trace);
  probe.sigma = norm2(s);
  probe.left = probe.sigma > 0.0 ? s * (1.0 / probe.sigma) : s;
  return probe;
}

// Materializes dQ(point) column by column via JVPs. Test-scale oracle only.
inline Matrix dense_jacobian(const Network& net, const Tensor& point, std::size_t limit = 1024) {
  const std::size_t n = point.size();
  if (n > limit) throw std::invalid_argument("dense_jacobian refused: dimension over limit");
  const ForwardTrace trace = forward_trace(net, point);
  Matrix jac(n, n);
  Tensor e(point.shape());
  for (std::size_t c = 0; c < n; ++c) {
    e[c] = 1.0;
    const Tensor col = q_jvp(net, point, e, &trace);
    if (col.size() != n) throw DimensionError("dense_jacobian needs square maps");
    for (std::size_t r = 0; r < n; ++r) jac(r, c) = col[r];
    e[c] = 0.0;
  }
  return jac;
}

struct PenaltyGrad {
  double sigma_sq = 0.0;   // ||dQ(point) u||^2 at the converged right vector
  Tensor param_grad;       // gradient of sigma_sq wrt parameters, u frozen
  JacobianProbe probe;
};

// Gradient of ||dQ(x)u||^2 with respect to the parameters, holding the
// converged singular vector u fixed. Reverse mode through the forward-mode
// tangent chain; the supported activations are piecewise linear, so their
// second-derivative term vanishes almost everywhere and only the tangent
// path contributes.
inline PenaltyGrad penalty_grad(const Network& net, const Tensor& point, std::size_t iters,
                                Rng rng) {
  PenaltyGrad out;
  out.probe = jacobian_spectral_norm(net, point, iters, rng);
  const Tensor& u = out.probe.right;
  const ForwardTrace trace = forward_trace(net, point);

  // Tangent chain: t_0 = u; s_m = W_m t_{m-1}; t_m = R'(z_m) s_m.
  const std::size_t m_count = net.layers.size();
  std::vector<Tensor> tangents(m_count + 1);
  std::vector<Tensor> lin_tangents(m_count);
  tangents[0] = u;
  for (std::size_t m = 0; m < m_count; ++m) {
    lin_tangents[m] = detail::layer_linear(net.layers[m], tangents[m], false);
    Tensor t = lin_tangents[m];
    act::deriv_apply(net.layers[m].activation, trace.preacts[m], t);
    tangents[m + 1] = std::move(t);
  }
  Tensor tq = tangents[m_count];
  if (net.residual) tq += u;   // d(net).u
  tq *= 2.0;
  tq -= u;                     // dQ.u
  out.sigma_sq = dot(tq, tq);

  out.param_grad = net.param_count() == 0 ? Tensor() : Tensor({net.param_count()});
  // dL/d t_M: L = ||tq||^2 and tq = 2*t_M + (2*residual - 1) u.
  Tensor grad_t = tq;
  grad_t *= 4.0;
  std::size_t offset = net.param_count();
  for (std::size_t m = m_count; m-- > 0;) {
    const Layer& l = net.layers[m];
    offset -= l.param_count();
    act::deriv_apply(l.activation, trace.preacts[m], grad_t);  // grad wrt s_m
    detail::layer_weight_grad(l, tangents[m], grad_t, out.param_grad.data() + offset);
    // biases do not enter the tangent chain
    grad_t = detail::layer_adjoint(l, grad_t, tangents[m]);
  }
  return out;
}

// Wraps the linear part of a layer as a LinearMap acting on inputs shaped
// like `input_shape`.
inline LinearMap layer_linear_map(const Layer& layer, std::vector<std::size_t> input_shape) {
  auto l = std::make_shared<Layer>(layer);
  return LinearMap(
      "layer-linear",
      [l](const Tensor& x) { return detail::layer_linear(*l, x, false); },
      [l, input_shape](const Tensor& g) {
        Tensor like(input_shape);
        return detail::layer_adjoint(*l, g, like);
      });
}

inline std::vector<std::size_t> layer_input_shape(const Layer& l,
                                                  const std::vector<std::size_t>& net_input) {
  if (l.kind == Layer::Kind::Dense) return {l.in_ch};
  if (net_input.size() != 3) throw DimensionError("conv layer needs (c,h,w) network input");
  return {l.in_ch, net_input[1], net_input[2]};
}

// Product of the per-layer operator norms. At most 1 certifies the plain
// chain (no residual skip) nonexpansive for averaged activations.
inline double lipschitz_bound_product(const Network& net,
                                      const std::vector<std::size_t>& input_shape,
                                      std::size_t iters, Rng& rng) {
  double prod = 1.0;
  for (const Layer& l : net.layers) {
    const auto shape = layer_input_shape(l, input_shape);
    prod *= op_norm(layer_linear_map(l, shape), shape, iters, rng);
  }
  return prod;
}

inline Matrix materialize_layer(const Layer& l, const std::vector<std::size_t>& input_shape) {
  Tensor e(input_shape);
  const std::size_t n = e.size();
  Tensor probe = detail::layer_linear(l, e, false);
  Matrix m(probe.size(), n);
  for (std::size_t c = 0; c < n; ++c) {
    e[c] = 1.0;
    const Tensor col = detail::layer_linear(l, e, false);
    for (std::size_t r = 0; r < col.size(); ++r) m(r, c) = col[r];
    e[c] = 0.0;
  }
  return m;
}

// Exhaustive bound over diagonal sign patterns: the largest operator norm of
// W_M D_{M-1} ... D_1 W_1 with each diagonal entry in {1-2*alpha_m, 1}.
// Requires separable hidden activations and total hidden width <= 20.
inline double lipschitz_bound_enum(const Network& net,
                                   const std::vector<std::size_t>& input_shape) {
  const std::size_t m_count = net.layers.size();
  if (m_count == 0) return 1.0;
  std::vector<Matrix> mats(m_count);
  std::vector<std::size_t> widths;  // hidden widths
  auto shape = input_shape;
  for (std::size_t m = 0; m < m_count; ++m) {
    const Layer& l = net.layers[m];
    const auto in_shape = layer_input_shape(l, shape);
    mats[m] = materialize_layer(l, in_shape);
    if (m + 1 < m_count) {
      if (!l.activation.separable())
        throw std::invalid_argument("enum bound needs separable hidden activations");
      widths.push_back(mats[m].rows());
    }
    shape = l.kind == Layer::Kind::Dense
                ? std::vector<std::size_t>{l.out_ch}
                : std::vector<std::size_t>{l.out_ch, in_shape[1], in_shape[2]};
  }
  std::size_t total = 0;
  for (std::size_t w : widths) total += w;
  if (total > 20) throw std::invalid_argument("enum bound refused: hidden width over 20");

  double best = 0.0;
  const std::size_t combos = std::size_t(1) << total;
  for (std::size_t mask = 0; mask < combos; ++mask) {
    Matrix acc = mats[0];
    std::size_t bit = 0;
    for (std::size_t m = 0; m + 1 < m_count; ++m) {
      const double low = 1.0 - 2.0 * net.layers[m].activation.alpha;
      for (std::size_t r = 0; r < acc.rows(); ++r, ++bit) {
        if (mask & (std::size_t(1) << bit)) continue;  // keep factor 1
        for (std::size_t c = 0; c < acc.cols(); ++c) acc(r, c) *= low;
      }
      acc = mats[m + 1] * acc;
    }
    best = std::max(best, largest_singular_value(acc));
  }
  return best;
}

// ||W_M ... W_1|| for elementwise nonnegative weights; the precondition is
// checked and reports the offending layer.
inline double lipschitz_bound_nonneg(const Network& net,
                                     const std::vector<std::size_t>& input_shape,
                                     std::size_t iters, Rng& rng) {
  for (std::size_t m = 0; m < net.layers.size(); ++m) {
    if (!net.layers[m].activation.separable())
      throw std::invalid_argument("nonneg bound needs separable activations");
    for (double v : net.layers[m].weight)
      if (v < 0.0)
        throw std::invalid_argument("nonneg bound precondition failed at layer " +
                                    std::to_string(m + 1));
  }
  LinearMap chain = LinearMap::identity();
  auto shape = input_shape;
  bool first = true;
  for (const Layer& l : net.layers) {
    const auto in_shape = layer_input_shape(l, shape);
    LinearMap lm = layer_linear_map(l, in_shape);
    chain = first ? lm : LinearMap::compose(lm, chain);
    first = false;
    shape = l.kind == Layer::Kind::Dense ? std::vector<std::size_t>{l.out_ch}
                                         : std::vector<std::size_t>{l.out_ch, shape[1], shape[2]};
  }
  return op_norm(chain, input_shape, iters, rng);
}

}  // namespace firmnet
