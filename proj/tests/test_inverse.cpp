#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "firmnet/dataset.hpp"
#include "firmnet/inverse.hpp"
#include "oracles.hpp"

using namespace firmnet;

TEST_CASE("procedural kernels are normalized to unit mass") {
  for (const Tensor& k : {kernel_gaussian(5, 1.0), kernel_motion_line(7, 0.3),
                          kernel_uniform_square(3), kernel_dirac(3)}) {
    double sum = 0.0;
    for (double v : k.values()) sum += v;
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
  }
  REQUIRE_THROWS_AS(kernel_gaussian(4, 1.0), DimensionError);
}

TEST_CASE("dirac blur with zero noise reproduces the image") {
  Rng rng(1);
  const Tensor truth = make_cartoon(16, 16, rng);
  BlurProblem prob = make_blur_problem(kernel_dirac(), truth, 0.0, Rng(2));
  REQUIRE(max_abs(prob.observation - truth) < 1e-14);
  REQUIRE(prob.mu == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("noise realization has the requested deviation") {
  Rng rng(3);
  const Tensor truth = make_cartoon(64, 64, rng);
  BlurProblem prob = make_blur_problem(kernel_gaussian(5, 1.2), truth, 0.01, Rng(4));
  const Tensor residual = prob.observation - prob.blur.forward(*prob.truth);
  double var = 0.0;
  for (std::size_t i = 0; i < residual.size(); ++i) var += residual[i] * residual[i];
  const double std_dev = std::sqrt(var / double(residual.size()));
  REQUIRE(std::abs(std_dev - 0.01) < 0.05 * 0.01);
}

TEST_CASE("normalization drives the squared operator norm to one") {
  Rng rng(5);
  const Tensor truth = make_cartoon(32, 32, rng);
  Tensor k = kernel_gaussian(7, 2.0);
  for (double& v : k.values()) v *= 3.7;  // arbitrary scale to be removed
  BlurProblem prob = make_blur_problem(k, truth, 0.0, Rng(6), true);
  Rng pw(7);
  const double n = op_norm(prob.blur, {1, 32, 32}, 300, pw);
  REQUIRE(std::abs(n * n - 1.0) <= 1e-6);
  REQUIRE(std::abs(prob.mu - 1.0) <= 1e-12);
}

TEST_CASE("zero kernels are rejected") {
  Tensor zero({1, 3, 3});
  REQUIRE_THROWS_AS(make_blur_problem(zero, Tensor({1, 8, 8}), 0.0, Rng(8)),
                    std::invalid_argument);
}

TEST_CASE("datafit gradient basics") {
  Rng rng(9);
  const Tensor truth = make_cartoon(16, 16, rng);

  SECTION("gradient vanishes at data consistency") {
    BlurProblem prob = make_blur_problem(kernel_gaussian(5, 1.0), truth, 0.0, Rng(10));
    REQUIRE(max_abs(prob.grad_datafit(truth)) < 1e-12);
  }

  SECTION("identity blur with zero observation gives the input back") {
    BlurProblem prob = make_blur_problem(kernel_dirac(), truth, 0.0, Rng(11));
    prob.observation = Tensor(truth.shape());
    const Tensor x = Tensor::gaussian(truth.shape(), rng);
    REQUIRE(max_abs(prob.grad_datafit(x) - x) < 1e-14);
  }

  SECTION("gradient is mu-Lipschitz on samples") {
    BlurProblem prob = make_blur_problem(kernel_motion_line(5, 0.7), truth, 0.01, Rng(12));
    for (int trial = 0; trial < 1000; ++trial) {
      const Tensor x = Tensor::gaussian(truth.shape(), rng);
      const Tensor y = Tensor::gaussian(truth.shape(), rng);
      const double lhs = norm2(prob.grad_datafit(x) - prob.grad_datafit(y));
      REQUIRE(lhs <= prob.mu * norm2(x - y) + 1e-10);
    }
  }

  SECTION("gradient matches finite differences of the data fit") {
    BlurProblem prob = make_blur_problem(kernel_uniform_square(3), truth, 0.01, Rng(13));
    Rng probe_rng(14);
    const Tensor x = Tensor::gaussian(truth.shape(), probe_rng);
    const Tensor v = Tensor::gaussian(truth.shape(), probe_rng);
    const double want =
        oracle::directional_derivative([&](const Tensor& p) { return prob.datafit(p); }, x, v);
    const double got = dot(prob.grad_datafit(x), v);
    REQUIRE(got == Catch::Approx(want).epsilon(1e-6));
  }
}

TEST_CASE("effective noise anchor values") {
  Rng rng(15);
  const Tensor truth = make_cartoon(16, 16, rng);

  // a kernel with tap norm exactly 0.225
  Tensor k({1, 1, 1});
  k.at(0, 0, 0) = 0.225;
  BlurProblem prob = make_blur_problem(k, truth, 0.01, Rng(16), false);
  REQUIRE(prob.kernel_norm() == Catch::Approx(0.225).margin(1e-15));
  REQUIRE(effective_noise(prob) == Catch::Approx(0.0045).margin(1e-15));

  prob.noise_std = 0.0;
  REQUIRE(effective_noise(prob) == 0.0);
  prob.noise_std = 0.02;
  REQUIRE(effective_noise(prob) == Catch::Approx(0.009).margin(1e-15));
}

TEST_CASE("recommended parameters reproduce the published operating point") {
  Rng rng(17);
  const Tensor truth = make_cartoon(16, 16, rng);
  Tensor k({1, 1, 1});
  k.at(0, 0, 0) = 0.225;
  BlurProblem prob = make_blur_problem(k, truth, 0.01, Rng(18), false);
  prob.mu = 1.0;  // the anchor assumes unit mu with this tap norm
  const RecommendedParams p = recommend_params(prob);
  REQUIRE(p.gamma == Catch::Approx(1.99).margin(1e-15));
  REQUIRE(p.sigma == Catch::Approx(0.009).margin(1e-4));
  REQUIRE(p.sigma / (p.gamma * effective_noise(prob)) == 1.0);
  REQUIRE(p.gamma < 2.0 / prob.mu);

  prob.mu = 4.0;
  REQUIRE(recommend_params(prob).gamma == Catch::Approx(0.4975).margin(1e-15));
  REQUIRE(recommend_params(prob).gamma < 2.0 / prob.mu);
}

TEST_CASE("kernel scaling covariance of the effective noise") {
  Rng rng(19);
  const Tensor truth = make_cartoon(16, 16, rng);
  Tensor k = kernel_gaussian(5, 1.0);
  Tensor k3 = k;
  for (double& v : k3.values()) v *= 3.0;

  BlurProblem raw = make_blur_problem(k, truth, 0.01, Rng(20), false);
  BlurProblem raw3 = make_blur_problem(k3, truth, 0.01, Rng(20), false);
  REQUIRE(effective_noise(raw3) == Catch::Approx(3.0 * effective_noise(raw)).margin(1e-12));

  // normalization removes the scale entirely
  BlurProblem norm1 = make_blur_problem(k, truth, 0.01, Rng(21), true);
  BlurProblem norm3 = make_blur_problem(k3, truth, 0.01, Rng(21), true);
  REQUIRE(effective_noise(norm1) == Catch::Approx(effective_noise(norm3)).margin(1e-12));
}

TEST_CASE("problem bundles round trip through a directory") {
  namespace fs = std::filesystem;
  Rng rng(22);
  const Tensor truth = make_cartoon(16, 16, rng);
  BlurProblem prob = make_blur_problem(kernel_motion_line(5, 1.1), truth, 0.01, Rng(23));
  const auto dir = fs::temp_directory_path() / "firmnet_problem";
  save_problem(dir.string(), prob);
  const BlurProblem back = load_problem(dir.string());
  REQUIRE(max_abs(back.kernel - prob.kernel) == 0.0);
  REQUIRE(max_abs(back.observation - prob.observation) == 0.0);
  REQUIRE(back.truth);
  REQUIRE(max_abs(*back.truth - *prob.truth) == 0.0);
  REQUIRE(back.noise_std == prob.noise_std);
  REQUIRE(back.mu == prob.mu);
  const Tensor x = Tensor::gaussian(truth.shape(), rng);
  REQUIRE(max_abs(back.blur.forward(x) - prob.blur.forward(x)) == 0.0);
  fs::remove_all(dir);
}
