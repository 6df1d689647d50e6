// Command line driver wiring datasets, training, certification, solving, and
// reporting into reproducible experiments.
//
// Subcommands: train, certify, deblur, demo-approx, bench.
// Exit codes: 0 success/certified, 1 certification failure, 2 usage error,
// 3 numerical failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "firmnet/dataset.hpp"
#include "firmnet/inverse.hpp"
#include "firmnet/jacobian.hpp"
#include "firmnet/manifest.hpp"
#include "firmnet/metrics.hpp"
#include "firmnet/mmo.hpp"
#include "firmnet/solve.hpp"
#include "firmnet/train.hpp"

namespace fs = std::filesystem;
using namespace firmnet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNotCertified = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct CommonFlags {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<double> gamma;
  std::optional<double> sigma;
  std::optional<double> lambda;
  std::optional<long> iters;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "key=value configuration file");
  cmd->add_option("--out", flags.out, "output directory");
  cmd->add_option("--seed", flags.seed, "seed override");
  cmd->add_option("--gamma", flags.gamma, "step size override");
  cmd->add_option("--sigma", flags.sigma, "noise level override");
  cmd->add_option("--lambda", flags.lambda, "penalty weight / baseline regularization");
  cmd->add_option("--iters", flags.iters, "iteration count override");
}

KeyValues load_config_or_empty(const std::string& path) {
  if (path.empty()) return {};
  return read_key_values(path);  // throws IoError when unreadable
}

Network build_net_from_config(const KeyValueView& cfg, Rng& init_rng) {
  const auto checkpoint = cfg.str("init_checkpoint", "");
  if (!checkpoint.empty()) return load_checkpoint(checkpoint);
  Network net = make_conv_denoiser(std::size_t(cfg.integer("net_channels", 1)),
                                   std::size_t(cfg.integer("net_hidden", 16)),
                                   std::size_t(cfg.integer("net_depth", 6)),
                                   cfg.num("net_slope", 0.2));
  init_he(net, init_rng);
  return net;
}

TrainConfig train_config_from(const KeyValueView& cfg, const CommonFlags& flags) {
  TrainConfig tc;
  tc.lambda = cfg.num("lambda", tc.lambda);
  tc.epsilon = cfg.num("epsilon", tc.epsilon);
  tc.sigma = cfg.num("sigma", tc.sigma);
  tc.sigma_uniform = cfg.integer("sigma_uniform", 0) != 0;
  tc.batch = std::size_t(cfg.integer("batch", long(tc.batch)));
  tc.iterations = std::size_t(cfg.integer("iterations", long(tc.iterations)));
  tc.learning_rate = cfg.num("learning_rate", tc.learning_rate);
  tc.beta1 = cfg.num("beta1", tc.beta1);
  tc.beta2 = cfg.num("beta2", tc.beta2);
  tc.adam_eps = cfg.num("adam_eps", tc.adam_eps);
  tc.clip_norm = cfg.num("clip_norm", tc.clip_norm);
  tc.power_iters = std::size_t(cfg.integer("power_iters", long(tc.power_iters)));
  tc.seed = cfg.unsigned_integer("seed", tc.seed);
  tc.lr_drop_fraction = cfg.num("lr_drop_fraction", tc.lr_drop_fraction);
  tc.l1_cost = cfg.integer("l1_cost", 0) != 0;
  tc.threads = std::size_t(cfg.integer("threads", 0));
  tc.validate_every = std::size_t(cfg.integer("validate_every", 0));
  tc.checkpoint_every = std::size_t(cfg.integer("checkpoint_every", 0));
  if (flags.seed) tc.seed = *flags.seed;
  if (flags.sigma) tc.sigma = *flags.sigma;
  if (flags.lambda) tc.lambda = *flags.lambda;
  if (flags.iters) tc.iterations = std::size_t(*flags.iters);
  return tc;
}

std::vector<Tensor> corpus_from(const KeyValueView& cfg) {
  return make_cartoon_corpus(std::size_t(cfg.integer("corpus_count", 48)),
                             std::size_t(cfg.integer("image_size", 32)),
                             std::size_t(cfg.integer("image_size", 32)),
                             cfg.unsigned_integer("corpus_seed", 1234),
                             cfg.integer("corpus_flips", 1) != 0);
}

int cmd_train(const CommonFlags& flags) {
  RunManifest manifest;
  manifest.command = "train";
  manifest.config_path = flags.config;
  manifest.started_at = iso_timestamp();

  const KeyValues kv = load_config_or_empty(flags.config);
  const KeyValueView cfg(kv);
  const TrainConfig tc = train_config_from(cfg, flags);
  manifest.seed = tc.seed;
  manifest.output_dir = flags.out;
  if (!flags.config.empty()) manifest.add_input(flags.config);
  const std::string init_ckpt = cfg.str("init_checkpoint", "");
  if (!init_ckpt.empty()) manifest.add_input(init_ckpt);

  fs::create_directories(flags.out);
  const auto corpus = corpus_from(cfg);
  const auto validation = make_cartoon_corpus(std::size_t(cfg.integer("validation_count", 8)),
                                              std::size_t(cfg.integer("image_size", 32)),
                                              std::size_t(cfg.integer("image_size", 32)),
                                              cfg.unsigned_integer("corpus_seed", 1234) ^ 0xABCD,
                                              false);

  Rng init_rng(tc.seed ^ 0x1234567ull);
  Network net = build_net_from_config(cfg, init_rng);

  const TrainResult result = train(std::move(net), corpus, tc, &validation);

  save_checkpoint(flags.out + "/checkpoint.nnc1", result.net);
  result.log.write_csv(flags.out + "/trainlog.csv");
  if (!result.log.validation_psnr.empty())
    result.log.write_validation_csv(flags.out + "/vallog.csv");
  manifest.finished_at = iso_timestamp();
  manifest.write(flags.out + "/manifest.txt");
  std::printf("trained %zu iterations, final loss %.6g\n", result.log.rows.size(),
              result.log.rows.empty() ? 0.0 : result.log.rows.back().value);
  return kExitOk;
}

int cmd_certify(const std::string& checkpoint, long probes, const CommonFlags& flags) {
  if (probes <= 0) {
    std::fprintf(stderr, "error: nothing to certify (probe count %ld)\n", probes);
    return kExitUsage;
  }
  Network net = load_checkpoint(checkpoint);  // IoError -> usage exit in main

  RunManifest manifest;
  manifest.command = "certify";
  manifest.started_at = iso_timestamp();
  manifest.add_input(checkpoint);
  manifest.output_dir = flags.out;

  const KeyValues kv = load_config_or_empty(flags.config);
  const KeyValueView cfg(kv);
  const std::uint64_t seed = flags.seed.value_or(cfg.unsigned_integer("seed", 2024));
  manifest.seed = seed;
  const double sigma = flags.sigma.value_or(cfg.num("sigma", 0.01));
  const std::size_t power_iters = std::size_t(flags.iters.value_or(cfg.integer("iters", 50)));
  const std::size_t image_size = std::size_t(cfg.integer("image_size", 32));

  const auto probes_clean = make_cartoon_corpus(std::size_t(probes), image_size, image_size,
                                                seed ^ 0xFACE, false);
  fs::create_directories(flags.out);
  CsvWriter csv(flags.out + "/certify.csv");
  csv.row("probe", "sigma_hat", "sigma_hat_sq");
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < probes_clean.size(); ++i) {
    Rng item = rng.split(i);
    const Tensor y = make_noisy(probes_clean[i], sigma, item);
    const JacobianProbe probe = jacobian_spectral_norm(net, y, power_iters, item.split(1));
    csv.row(i, probe.sigma, probe.sigma * probe.sigma);
    worst = std::max(worst, probe.sigma * probe.sigma);
  }
  csv.row("max", std::sqrt(worst), worst);
  manifest.finished_at = iso_timestamp();
  manifest.write(flags.out + "/manifest.txt");
  std::printf("max sigma^2 over %ld probes: %.6f\n", probes, worst);
  // boundary accepted: the reflected identity sits exactly at 1
  return worst <= 1.0 + 1e-9 ? kExitOk : kExitNotCertified;
}

int cmd_deblur(const std::string& problem_dir, const std::string& checkpoint,
               const std::string& baseline, const CommonFlags& flags) {
  const BlurProblem prob = load_problem(problem_dir);
  const RecommendedParams rec = recommend_params(prob);
  const double gamma = flags.gamma.value_or(rec.gamma);
  if (gamma >= 2.0 / prob.mu) {
    std::fprintf(stderr, "error: gamma %.4f violates the stability bound 2/mu = %.4f\n", gamma,
                 2.0 / prob.mu);
    return kExitUsage;
  }

  RunManifest manifest;
  manifest.command = "deblur";
  manifest.started_at = iso_timestamp();
  manifest.output_dir = flags.out;
  for (const char* f : {"kernel.ntf", "observation.ntf", "meta"})
    manifest.add_input(problem_dir + "/" + f);

  Resolvent j;
  const std::size_t dim = prob.observation.size();
  if (baseline == "pnp") {
    if (checkpoint.empty()) {
      std::fprintf(stderr, "error: pnp baseline needs --checkpoint\n");
      return kExitUsage;
    }
    manifest.add_input(checkpoint);
    auto net = std::make_shared<Network>(load_checkpoint(checkpoint));
    j = Resolvent([net](const Tensor& x) { return forward(*net, x); }, "network", dim);
  } else if (baseline == "l1") {
    const double tau = flags.lambda.value_or(0.002) * gamma;
    const auto shape = prob.observation.shape();
    std::size_t levels = 3;
    while (levels > 1 && (shape[1] % (1u << levels) || shape[2] % (1u << levels))) --levels;
    // haar's forward is analysis; the synthesis prox wants Psi mapping
    // coefficients to images
    auto psi = std::make_shared<LinearMap>(LinearMap::haar(levels).transposed());
    j = Resolvent([psi, tau](const Tensor& x) { return prox_l1_synthesis(x, tau, *psi); },
                  "prox-closed-form", dim);
  } else if (baseline == "tv") {
    const double tau = flags.lambda.value_or(0.002) * gamma;
    j = Resolvent([tau](const Tensor& x) { return prox_tv(x, tau, 50).value; },
                  "prox-closed-form", dim);
  } else {
    std::fprintf(stderr, "error: unknown baseline '%s' (expected pnp, l1, tv)\n",
                 baseline.c_str());
    return kExitUsage;
  }

  SolveConfig cfg;
  cfg.gamma = gamma;
  cfg.max_iterations = std::size_t(flags.iters.value_or(1000));
  cfg.mu = prob.mu;
  auto gradf = [&prob](const Tensor& x) { return prob.grad_datafit(x); };
  auto fidelity = [&prob](const Tensor& x) { return prob.datafit(x); };
  const SolveReport report = fb_solve(gradf, j, cfg, prob.observation, fidelity);
  if (report.status == SolveStatus::NonFinite || report.status == SolveStatus::Diverged) {
    std::fprintf(stderr, "error: solve did not remain stable (%s)\n",
                 report.status == SolveStatus::Diverged ? "diverged" : "non-finite");
    return kExitNumerical;
  }

  fs::create_directories(flags.out);
  report.write_csv(flags.out + "/report.csv");
  write_ntf(flags.out + "/reconstruction.ntf", report.final_iterate);
  write_pnm(flags.out + "/reconstruction." +
                std::string(report.final_iterate.extent(0) == 1 ? "pgm" : "ppm"),
            report.final_iterate);
  {
    CsvWriter csv(flags.out + "/metrics.csv");
    csv.row("image", "psnr", "ssim");
    if (prob.truth) {
      const MetricPair rec_m = MetricPair::of(report.final_iterate, *prob.truth);
      const MetricPair obs_m = MetricPair::of(prob.observation, *prob.truth);
      csv.row("reconstruction", format_db(rec_m.psnr), rec_m.ssim);
      csv.row("observation", format_db(obs_m.psnr), obs_m.ssim);
      std::printf("psnr: observation %s dB -> reconstruction %s dB\n",
                  format_db(obs_m.psnr).c_str(), format_db(rec_m.psnr).c_str());
    }
  }
  manifest.seed = flags.seed.value_or(0);
  manifest.finished_at = iso_timestamp();
  manifest.write(flags.out + "/manifest.txt");
  return kExitOk;
}

// Trains a 1D residual net under the penalty to match a target resolvent on
// [-2,2]; writes the sup-error curve and the certification report.
int cmd_demo_approx(const std::string& target, double tau, const CommonFlags& flags) {
  std::function<double(double)> target_fn;
  if (target == "soft-threshold") {
    target_fn = [tau](double t) {
      const double m = std::abs(t) - tau;
      return m > 0.0 ? (t > 0.0 ? m : -m) : 0.0;
    };
  } else if (target == "interval") {
    target_fn = [tau](double t) { return std::clamp(t, -tau, tau); };
  } else {
    std::fprintf(stderr, "error: unknown target '%s' (expected soft-threshold, interval)\n",
                 target.c_str());
    return kExitUsage;
  }

  const std::uint64_t seed = flags.seed.value_or(7);
  const double lambda = flags.lambda.value_or(0.05);
  const std::size_t budget = std::size_t(flags.iters.value_or(4000));
  const double epsilon = 0.05;

  Network net = make_dense_net({1, 16, 16, 1}, ActivationSpec::leaky(0.2), true);
  Rng init(seed);
  init_he(net, init);
  // start near the identity so the residual correction stays small
  for (Layer& l : net.layers)
    for (double& v : l.weight) v *= 0.1;

  Tensor theta = flatten_params(net);
  AdamState adam = AdamState::like(theta);
  AdamHyper hyper;
  hyper.learning_rate = 5e-3;
  hyper.clip_norm = 0.0;

  fs::create_directories(flags.out);
  CsvWriter curve(flags.out + "/sup_error.csv");
  curve.row("iteration", "sup_error", "penalty_sigma_sq");

  auto sup_error = [&](const Network& n) {
    double worst = 0.0;
    for (int i = 0; i <= 4000; ++i) {
      const double t = -2.0 + 4.0 * double(i) / 4000.0;
      const double got = forward(n, Tensor::from({t}))[0];
      worst = std::max(worst, std::abs(got - target_fn(t)));
    }
    return worst;
  };

  Rng rng(seed ^ 0xD500);
  const std::size_t batch = 16;
  double last_sigma_sq = 0.0;
  for (std::size_t n = 0; n < budget; ++n) {
    Rng iter_rng = rng.split(n);
    Tensor grad(theta.shape());
    double loss = 0.0;
    for (std::size_t d = 0; d < batch; ++d) {
      Rng item = iter_rng.split(d);
      const double t = item.uniform(-2.0, 2.0);
      const Tensor x = Tensor::from({t});
      const ForwardTrace trace = forward_trace(net, x);
      const double diff = trace.output[0] - target_fn(t);
      loss += diff * diff;
      const VjpResult back = vjp(net, x, Tensor::from({2.0 * diff}), &trace);
      axpy(1.0 / double(batch), back.param_grad, grad);

      if (lambda > 0.0) {
        const PenaltyGrad pg = penalty_grad(net, Tensor::from({item.uniform(-2.0, 2.0)}), 10,
                                            item.split(5));
        last_sigma_sq = pg.sigma_sq;
        if (pg.sigma_sq > 1.0 - epsilon)
          axpy(lambda / double(batch), pg.param_grad, grad);
      }
    }
    if (!std::isfinite(loss)) {
      std::fprintf(stderr, "error: non-finite demo loss\n");
      return kExitNumerical;
    }
    adam_step(adam, grad, theta, hyper);
    unflatten_params(net, theta);
    if ((n + 1) % 200 == 0 || n + 1 == budget)
      curve.row(n + 1, sup_error(net), last_sigma_sq);
  }

  const double final_sup = sup_error(net);
  const CertReport cert = check_firm_nonexpansive(
      Resolvent([&net](const Tensor& x) { return forward(net, x); }, "network", 1), Rng(seed ^ 1),
      10000, 2.0);
  {
    CsvWriter csv(flags.out + "/certify.csv");
    csv.row("check", "samples", "max_violation", "worst_ratio");
    cert.csv_row(csv);
  }
  save_checkpoint(flags.out + "/demo_net.nnc1", net);
  std::printf("sup error %.5f, firm-nonexpansive violation %.3e\n", final_sup,
              cert.max_violation);
  return kExitOk;
}

int cmd_bench(const std::string& checkpoint, const CommonFlags& flags) {
  const KeyValues kv = load_config_or_empty(flags.config);
  const KeyValueView cfg(kv);
  const std::uint64_t seed = flags.seed.value_or(cfg.unsigned_integer("seed", 99));
  const std::size_t image_size = std::size_t(cfg.integer("image_size", 32));
  const std::size_t image_count = std::size_t(cfg.integer("image_count", 3));
  const double nu = flags.sigma.value_or(cfg.num("nu", 0.01));
  const std::size_t iters = std::size_t(flags.iters.value_or(cfg.integer("iters", 400)));

  const std::vector<std::pair<std::string, Tensor>> kernels = {
      {"gaussian", kernel_gaussian(5, 1.0)},
      {"motion", kernel_motion_line(5, 0.4)},
      {"square", kernel_uniform_square(3)}};
  std::vector<std::string> methods = {"observation", "l1", "tv"};
  if (!checkpoint.empty()) methods.push_back("pnp");

  const auto images = make_cartoon_corpus(image_count, image_size, image_size, seed, false);
  fs::create_directories(flags.out);

  std::map<std::string, std::map<std::string, double>> table;  // method -> kernel -> psnr
  for (const auto& [kname, kern] : kernels) {
    for (std::size_t i = 0; i < images.size(); ++i) {
      Rng prng = Rng(seed).split(i * 131 + std::hash<std::string>{}(kname) % 1000);
      const BlurProblem prob = make_blur_problem(kern, images[i], nu, prng);
      const std::string pdir =
          flags.out + "/problems/" + kname + "_" + std::to_string(i);
      save_problem(pdir, prob);
      table["observation"][kname] += psnr(prob.observation, *prob.truth);

      for (const std::string& method : methods) {
        if (method == "observation") continue;
        CommonFlags sub = flags;
        sub.out = flags.out + "/runs/" + method + "_" + kname + "_" + std::to_string(i);
        sub.iters = long(iters);
        const int code = cmd_deblur(pdir, method == "pnp" ? checkpoint : "", method, sub);
        if (code != kExitOk) return code;
        const Tensor rec = read_ntf(sub.out + "/reconstruction.ntf");
        table[method][kname] += psnr(rec, *prob.truth);
      }
    }
  }

  CsvWriter csv(flags.out + "/table.csv");
  {
    std::vector<std::string> head = {"method"};
    for (const auto& [kname, _] : kernels) head.push_back(kname);
    csv.row(head[0], head[1], head[2], head[3]);
  }
  for (const std::string& method : methods) {
    std::vector<double> row;
    for (const auto& [kname, _] : kernels) row.push_back(table[method][kname] / double(images.size()));
    csv.row(method, row[0], row[1], row[2]);
  }
  std::printf("bench table written to %s/table.csv\n", flags.out.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"firmly nonexpansive denoiser training and plug-and-play deblurring"};
  app.require_subcommand(1);

  CommonFlags train_flags, certify_flags, deblur_flags, demo_flags, bench_flags;

  auto* train_cmd = app.add_subcommand("train", "train a denoiser");
  add_common(train_cmd, train_flags);

  auto* certify_cmd = app.add_subcommand("certify", "probe the reflected-map spectral norm");
  std::string certify_checkpoint;
  long certify_probes = 0;
  certify_cmd->add_option("--checkpoint", certify_checkpoint, "NNC1 checkpoint")->required();
  certify_cmd->add_option("--probes", certify_probes, "number of noisy probe images")->required();
  add_common(certify_cmd, certify_flags);

  auto* deblur_cmd = app.add_subcommand("deblur", "solve a blur problem bundle");
  std::string deblur_problem, deblur_checkpoint, deblur_baseline = "pnp";
  deblur_cmd->add_option("--problem", deblur_problem, "problem bundle directory")->required();
  deblur_cmd->add_option("--checkpoint", deblur_checkpoint, "NNC1 checkpoint for pnp");
  deblur_cmd->add_option("--baseline", deblur_baseline, "pnp, l1, or tv");
  add_common(deblur_cmd, deblur_flags);

  auto* demo_cmd = app.add_subcommand("demo-approx", "approximate a known resolvent");
  std::string demo_target = "soft-threshold";
  double demo_tau = 0.5;
  demo_cmd->add_option("--target", demo_target, "soft-threshold or interval");
  demo_cmd->add_option("--tau", demo_tau, "target parameter");
  add_common(demo_cmd, demo_flags);

  auto* bench_cmd = app.add_subcommand("bench", "kernel x method comparison table");
  std::string bench_checkpoint;
  bench_cmd->add_option("--checkpoint", bench_checkpoint, "optional NNC1 checkpoint for pnp");
  add_common(bench_cmd, bench_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(train_flags);
    if (certify_cmd->parsed()) return cmd_certify(certify_checkpoint, certify_probes, certify_flags);
    if (deblur_cmd->parsed())
      return cmd_deblur(deblur_problem, deblur_checkpoint, deblur_baseline, deblur_flags);
    if (demo_cmd->parsed()) return cmd_demo_approx(demo_target, demo_tau, demo_flags);
    if (bench_cmd->parsed()) return cmd_bench(bench_checkpoint, bench_flags);
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
