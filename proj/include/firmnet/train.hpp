#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "firmnet/io.hpp"
#include "firmnet/jacobian.hpp"
#include "firmnet/metrics.hpp"
#include "firmnet/net.hpp"
#include "firmnet/tensor.hpp"

namespace firmnet {

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double lambda = 0.0;    // penalty weight on the Jacobian spectral norm
  double epsilon = 0.05;  // hinge margin in (0,1)
  double sigma = 0.01;    // training noise std; upper end when sigma_uniform
  bool sigma_uniform = false;
  std::size_t batch = 4;
  std::size_t iterations = 200;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1e-2;  // global gradient norm; <= 0 disables clipping
  std::size_t power_iters = 5;
  std::uint64_t seed = 0;
  double lr_drop_fraction = 0.8;  // learning rate divided by 10 past this point
  bool l1_cost = false;           // l2 squared cost by default
  std::size_t threads = 0;        // 0 = hardware concurrency
  std::size_t validate_every = 0;
  std::size_t checkpoint_every = 0;
  std::string checkpoint_prefix;

  void validate() const {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must be in (0,1)");
    if (lambda < 0.0 || sigma < 0.0) throw std::invalid_argument("lambda and sigma must be >= 0");
    if (batch < 1 || learning_rate <= 0.0 || power_iters < 1)
      throw std::invalid_argument("batch, learning rate, power iterations must be positive");
  }
};

// y = xbar + sigma * w with w iid standard normal.
inline Tensor make_noisy(const Tensor& xbar, double sigma, Rng& rng) {
  if (sigma < 0.0) throw std::invalid_argument("noise std must be nonnegative");
  Tensor y = xbar;
  if (sigma == 0.0) return y;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += sigma * rng.normal();
  return y;
}

// rho * xbar + (1 - rho) * Jy, the segment point where the Jacobian penalty
// is evaluated.
inline Tensor interpolate_sample(const Tensor& xbar, const Tensor& jy, double rho) {
  if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("rho must lie in [0,1]");
  return lerp(xbar, jy, rho);
}

struct AdamState {
  Tensor m;
  Tensor v;
  std::size_t step = 0;

  static AdamState like(const Tensor& theta) {
    AdamState s;
    s.m = Tensor(theta.shape());
    s.v = Tensor(theta.shape());
    return s;
  }
};

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // <= 0 disables
};

// Bias-corrected adaptive-moment update; the incoming gradient is clipped to
// the configured global norm first.
inline void adam_step(AdamState& state, Tensor grad, Tensor& theta, const AdamHyper& hyper) {
  theta.require_same_shape(grad);
  if (hyper.clip_norm > 0.0) {
    const double n = norm2(grad);
    if (n > hyper.clip_norm) grad *= hyper.clip_norm / n;
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(hyper.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, double(state.step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * grad[i];
    state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    theta[i] -= hyper.learning_rate * mhat / (std::sqrt(vhat) + hyper.eps);
  }
}

struct LossDiagnostics {
  double value = 0.0;
  double datafit = 0.0;
  double penalty = 0.0;
  double sigma_sq_max = -1.0;   // -1 when the penalty path was not evaluated
  double sigma_sq_mean = -1.0;
};

struct LossResult {
  LossDiagnostics diagnostics;
  Tensor param_grad;
};

namespace detail {

struct ItemResult {
  double datafit = 0.0;
  double penalty = 0.0;
  double sigma_sq = -1.0;
  Tensor grad;
};

// One summand of the training objective: draw noise and the segment point,
// accumulate the data-fit gradient by reverse mode and the penalty gradient
// through the frozen-singular-vector rule.
inline ItemResult loss_item(const Network& net, const Tensor& xbar, const TrainConfig& config,
                            Rng item_rng) {
  ItemResult res;
  Rng noise_rng = item_rng.split(0);
  Rng draw_rng = item_rng.split(1);
  Rng power_rng = item_rng.split(2);

  const double sigma =
      config.sigma_uniform ? draw_rng.uniform(0.0, config.sigma) : config.sigma;
  const double rho = draw_rng.uniform();
  const Tensor y = make_noisy(xbar, sigma, noise_rng);

  const ForwardTrace trace = forward_trace(net, y);
  Tensor diff = trace.output - xbar;
  Tensor cotangent = diff;
  if (config.l1_cost) {
    res.datafit = 0.0;
    for (std::size_t i = 0; i < diff.size(); ++i) {
      res.datafit += std::abs(diff[i]);
      cotangent[i] = diff[i] > 0.0 ? 1.0 : (diff[i] < 0.0 ? -1.0 : 0.0);
    }
  } else {
    res.datafit = dot(diff, diff);
    cotangent *= 2.0;
  }
  res.grad = vjp(net, y, cotangent, &trace).param_grad;

  if (config.lambda > 0.0) {
    const Tensor probe_point = interpolate_sample(xbar, trace.output, rho);
    PenaltyGrad pg = penalty_grad(net, probe_point, config.power_iters, power_rng);
    res.sigma_sq = pg.sigma_sq;
    if (pg.sigma_sq > 1.0 - config.epsilon) {
      res.penalty = config.lambda * pg.sigma_sq;
      axpy(config.lambda, pg.param_grad, res.grad);
    } else {
      // hinge inactive: constant term, zero gradient
      res.penalty = config.lambda * (1.0 - config.epsilon);
    }
  }
  return res;
}

}  // namespace detail

// Batch-mean loss and parameter gradient. Items are independent given the
// parameters; they may be evaluated in parallel and are reduced in index
// order, so threaded and serial runs agree bit-exactly.
inline LossResult loss_and_grad(const Network& net, const std::vector<const Tensor*>& batch,
                                const TrainConfig& config, const Rng& batch_rng) {
  if (batch.empty()) throw std::invalid_argument("loss_and_grad needs a nonempty batch");
  const std::size_t d_count = batch.size();
  std::vector<detail::ItemResult> items(d_count);

  std::size_t workers = config.threads == 0
                            ? std::max<std::size_t>(1, std::thread::hardware_concurrency())
                            : config.threads;
  workers = std::min(workers, d_count);
  if (workers <= 1) {
    for (std::size_t d = 0; d < d_count; ++d)
      items[d] = detail::loss_item(net, *batch[d], config, batch_rng.split(d));
  } else {
    std::atomic<std::size_t> next{0};
    auto run = [&]() {
      for (;;) {
        const std::size_t d = next.fetch_add(1);
        if (d >= d_count) return;
        items[d] = detail::loss_item(net, *batch[d], config, batch_rng.split(d));
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(run);
    for (auto& t : pool) t.join();
  }

  LossResult out;
  out.param_grad = net.param_count() == 0 ? Tensor() : Tensor({net.param_count()});
  double sig_max = -1.0, sig_sum = 0.0;
  std::size_t sig_count = 0;
  for (std::size_t d = 0; d < d_count; ++d) {
    out.diagnostics.datafit += items[d].datafit;
    out.diagnostics.penalty += items[d].penalty;
    axpy(1.0, items[d].grad, out.param_grad);
    if (items[d].sigma_sq >= 0.0) {
      sig_max = std::max(sig_max, items[d].sigma_sq);
      sig_sum += items[d].sigma_sq;
      ++sig_count;
    }
  }
  const double inv = 1.0 / double(d_count);
  out.diagnostics.datafit *= inv;
  out.diagnostics.penalty *= inv;
  out.diagnostics.value = out.diagnostics.datafit + out.diagnostics.penalty;
  out.param_grad *= inv;
  if (sig_count > 0) {
    out.diagnostics.sigma_sq_max = sig_max;
    out.diagnostics.sigma_sq_mean = sig_sum / double(sig_count);
  }
  return out;
}

struct TrainLog {
  std::vector<LossDiagnostics> rows;
  std::vector<double> wall_ms;
  std::vector<std::pair<std::size_t, double>> validation_psnr;

  void write_csv(const std::string& path) const {
    CsvWriter csv(path);
    csv.row("iteration", "loss", "datafit", "penalty", "sigma_sq_max", "sigma_sq_mean",
            "wall_ms");
    for (std::size_t i = 0; i < rows.size(); ++i)
      csv.row(i + 1, rows[i].value, rows[i].datafit, rows[i].penalty, rows[i].sigma_sq_max,
              rows[i].sigma_sq_mean, wall_ms[i]);
  }

  void write_validation_csv(const std::string& path) const {
    CsvWriter csv(path);
    csv.row("iteration", "mean_psnr");
    for (const auto& [iter, v] : validation_psnr) csv.row(iter, v);
  }
};

struct TrainResult {
  Network net;
  TrainLog log;
};

// Supervised resolvent learning: N iterations of batch sampling, loss and
// gradient accumulation, and Adam updates, with the learning rate divided by
// 10 past the configured fraction of iterations. Fully reproducible per seed.
inline TrainResult train(Network net, const std::vector<Tensor>& dataset,
                         const TrainConfig& config,
                         const std::vector<Tensor>* validation = nullptr) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train needs a nonempty dataset");
  TrainResult result;
  Rng master(config.seed);
  Tensor theta = flatten_params(net);
  AdamState adam = AdamState::like(theta);
  const std::size_t drop_at =
      std::size_t(config.lr_drop_fraction * double(config.iterations));

  for (std::size_t n = 0; n < config.iterations; ++n) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng iter_rng = master.split(n);
    std::vector<const Tensor*> batch(config.batch);
    for (std::size_t d = 0; d < config.batch; ++d) {
      Rng pick = iter_rng.split(d);
      batch[d] = &dataset[pick.below(dataset.size())];
    }
    // Item d reuses split(d) so its draws follow its selection deterministically.
    LossResult loss = loss_and_grad(net, batch, config, iter_rng.split(config.batch));
    if (!std::isfinite(loss.diagnostics.value))
      throw NumericalError("training aborted: non-finite loss at iteration " +
                           std::to_string(n + 1));

    AdamHyper hyper{config.learning_rate, config.beta1, config.beta2, config.adam_eps,
                    config.clip_norm};
    if (n >= drop_at) hyper.learning_rate *= 0.1;
    adam_step(adam, loss.param_grad, theta, hyper);
    unflatten_params(net, theta);

    result.log.rows.push_back(loss.diagnostics);
    result.log.wall_ms.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count());

    if (validation && config.validate_every > 0 && (n + 1) % config.validate_every == 0) {
      Rng val_rng = master.split(0xFFFF0000ull + n);
      double sum = 0.0;
      for (std::size_t i = 0; i < validation->size(); ++i) {
        Rng img_rng = val_rng.split(i);
        const Tensor y = make_noisy((*validation)[i], config.sigma, img_rng);
        sum += psnr(forward(net, y), (*validation)[i]);
      }
      result.log.validation_psnr.emplace_back(n + 1, sum / double(validation->size()));
    }
    if (config.checkpoint_every > 0 && !config.checkpoint_prefix.empty() &&
        (n + 1) % config.checkpoint_every == 0)
      save_checkpoint(config.checkpoint_prefix + "_" + std::to_string(n + 1) + ".nnc1", net);
  }
  result.net = std::move(net);
  return result;
}

}  // namespace firmnet
