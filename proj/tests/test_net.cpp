#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <sstream>

#include "firmnet/net.hpp"
#include "oracles.hpp"

using namespace firmnet;

namespace {

Network tiny_conv_net(Rng& rng, std::size_t channels = 1, std::size_t hidden = 3,
                      std::size_t depth = 3, bool residual = true) {
  Network net = make_conv_denoiser(channels, hidden, depth);
  net.residual = residual;
  init_he(net, rng);
  // nonzero biases so their gradients are exercised
  for (Layer& l : net.layers)
    for (double& b : l.bias) b = 0.05 * rng.normal();
  return net;
}

Network tiny_dense_net(Rng& rng, std::vector<std::size_t> widths, bool residual = false) {
  Network net = make_dense_net(widths, ActivationSpec::leaky(0.2), residual);
  init_he(net, rng);
  for (Layer& l : net.layers)
    for (double& b : l.bias) b = 0.1 * rng.normal();
  return net;
}

}  // namespace

TEST_CASE("zero weights with residual skip give the identity") {
  Network net = make_conv_denoiser(1, 4, 3);
  Rng rng(1);
  const Tensor x = Tensor::gaussian({1, 6, 6}, rng);
  REQUIRE(max_abs(forward(net, x) - x) == 0.0);
}

TEST_CASE("single dense affine layer arithmetic") {
  Network net = make_dense_net({1, 1}, ActivationSpec::identity(), false);
  net.layers[0].weight[0] = 2.0;
  net.layers[0].bias[0] = 1.0;
  REQUIRE(forward(net, Tensor::from({3.0}))[0] == 7.0);
}

TEST_CASE("sort pairs activation sorts disjoint ascending pairs") {
  Network net;
  net.residual = false;
  Layer l = Layer::dense(4, 4, ActivationSpec::sort_pairs());
  for (std::size_t i = 0; i < 4; ++i) l.weight[i * 4 + i] = 1.0;
  net.layers.push_back(l);
  const Tensor out = forward(net, Tensor::from({3.0, -1.0, 0.0, 5.0}));
  REQUIRE(out[0] == -1.0);
  REQUIRE(out[1] == 3.0);
  REQUIRE(out[2] == 0.0);
  REQUIRE(out[3] == 5.0);
}

TEST_CASE("input shape mismatches are dimension errors") {
  Network net = make_conv_denoiser(1, 4, 3);
  REQUIRE_THROWS_AS(forward(net, Tensor({2, 6, 6})), DimensionError);
  Rng rng(2);
  Network dense = tiny_dense_net(rng, {3, 5, 3});
  REQUIRE_THROWS_AS(forward(dense, Tensor({4})), DimensionError);
}

TEST_CASE("vjp input gradient of an identity network is the cotangent") {
  Network net = make_conv_denoiser(1, 4, 3);  // zero weights + residual = identity
  Rng rng(3);
  const Tensor x = Tensor::gaussian({1, 5, 5}, rng);
  const Tensor u = Tensor::gaussian({1, 5, 5}, rng);
  const VjpResult res = vjp(net, x, u);
  REQUIRE(max_abs(res.input_grad - u) == 0.0);
}

TEST_CASE("vjp input gradient of a linear dense layer is W transpose") {
  Rng rng(4);
  Network net = make_dense_net({3, 2}, ActivationSpec::identity(), false);
  for (double& v : net.layers[0].weight) v = rng.normal();
  const Tensor x = Tensor::gaussian({3}, rng);
  const Tensor u = Tensor::gaussian({2}, rng);
  const VjpResult res = vjp(net, x, u);
  for (std::size_t c = 0; c < 3; ++c) {
    double want = 0.0;
    for (std::size_t r = 0; r < 2; ++r) want += net.layers[0].weight[r * 3 + c] * u[r];
    REQUIRE(res.input_grad[c] == Catch::Approx(want).margin(1e-15));
  }
}

TEST_CASE("vjp parameter gradient matches finite differences") {
  Rng rng(5);
  for (int variant = 0; variant < 2; ++variant) {
    Network net = variant == 0 ? tiny_conv_net(rng) : tiny_dense_net(rng, {6, 8, 6}, true);
    const auto shape =
        variant == 0 ? std::vector<std::size_t>{1, 5, 5} : std::vector<std::size_t>{6};
    const Tensor x = Tensor::gaussian(shape, rng);
    const Tensor u = Tensor::gaussian(shape, rng);

    const VjpResult res = vjp(net, x, u);
    auto loss = [&](const Network& n) { return dot(u, forward(n, x)); };
    const Tensor fd = oracle::fd_param_gradient(net, loss);
    REQUIRE(fd.size() == res.param_grad.size());
    for (std::size_t i = 0; i < fd.size(); ++i)
      REQUIRE(res.param_grad[i] == Catch::Approx(fd[i]).epsilon(1e-6).margin(1e-8));

    const Tensor fd_in = oracle::fd_gradient([&](const Tensor& p) { return dot(u, forward(net, p)); }, x);
    for (std::size_t i = 0; i < fd_in.size(); ++i)
      REQUIRE(res.input_grad[i] == Catch::Approx(fd_in[i]).epsilon(1e-6).margin(1e-8));
  }
}

TEST_CASE("jvp trivial cases") {
  Network id_net = make_conv_denoiser(1, 4, 3);
  Rng rng(6);
  const Tensor x = Tensor::gaussian({1, 4, 4}, rng);
  const Tensor v = Tensor::gaussian({1, 4, 4}, rng);
  REQUIRE(max_abs(jvp(id_net, x, v) - v) == 0.0);

  // leaky slope at negative preactivation scales the tangent
  Network net = make_dense_net({1, 1}, ActivationSpec::identity(), false);
  net.layers[0].activation = ActivationSpec::leaky(0.25);
  net.layers[0].weight[0] = 1.0;
  const Tensor t = jvp(net, Tensor::from({-2.0}), Tensor::from({1.0}));
  REQUIRE(t[0] == 0.25);
}

TEST_CASE("vjp jvp duality on random networks") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const bool conv = trial % 2 == 0;
    Network net = conv ? tiny_conv_net(rng) : tiny_dense_net(rng, {5, 7, 5}, trial % 4 == 1);
    const auto shape =
        conv ? std::vector<std::size_t>{1, 4, 6} : std::vector<std::size_t>{5};
    const Tensor x = Tensor::gaussian(shape, rng);
    const Tensor v = Tensor::gaussian(shape, rng);
    const Tensor u = Tensor::gaussian(shape, rng);
    const double lhs = dot(u, jvp(net, x, v));
    const double rhs = dot(vjp(net, x, u).input_grad, v);
    REQUIRE(std::abs(lhs - rhs) <= 1e-10 * (1.0 + std::abs(lhs)));
    // the input-only pullback agrees with the full one bit for bit
    const Tensor fast = vjp_input(net, x, u);
    const Tensor full = vjp(net, x, u).input_grad;
    REQUIRE(max_abs(fast - full) == 0.0);
  }
}

TEST_CASE("sort pairs has permutation jacobian consistent between modes") {
  Network net;
  Layer l = Layer::dense(4, 4, ActivationSpec::sort_pairs());
  Rng rng(8);
  for (double& v : l.weight) v = rng.normal();
  net.layers.push_back(l);
  const Tensor x = Tensor::gaussian({4}, rng);
  const Tensor v = Tensor::gaussian({4}, rng);
  const Tensor u = Tensor::gaussian({4}, rng);
  REQUIRE(std::abs(dot(u, jvp(net, x, v)) - dot(vjp(net, x, u).input_grad, v)) < 1e-12);
}

TEST_CASE("parameter vector round trips bit exactly") {
  Rng rng(9);
  Network net = tiny_conv_net(rng);
  const Tensor theta = flatten_params(net);
  Network other = net;
  for (Layer& l : other.layers)
    for (double& v : l.weight) v = 0.0;
  unflatten_params(other, theta);
  const Tensor back = flatten_params(other);
  REQUIRE(theta.size() == back.size());
  for (std::size_t i = 0; i < theta.size(); ++i) REQUIRE(theta[i] == back[i]);
  REQUIRE_THROWS_AS(unflatten_params(net, Tensor({3})), DimensionError);
}

TEST_CASE("nnc1 checkpoints round trip bit exactly") {
  Rng rng(10);
  Network net = tiny_conv_net(rng, 2, 5, 4);
  std::stringstream buf;
  save_checkpoint(buf, net);
  const Network back = load_checkpoint(buf);
  REQUIRE(back.layers.size() == net.layers.size());
  REQUIRE(back.residual == net.residual);
  REQUIRE(back.channels_in == net.channels_in);
  for (std::size_t m = 0; m < net.layers.size(); ++m) {
    REQUIRE(back.layers[m].kind == net.layers[m].kind);
    REQUIRE(back.layers[m].out_ch == net.layers[m].out_ch);
    REQUIRE(back.layers[m].kh == net.layers[m].kh);
    REQUIRE(back.layers[m].activation.kind == net.layers[m].activation.kind);
    REQUIRE(back.layers[m].activation.slope == net.layers[m].activation.slope);
    for (std::size_t i = 0; i < net.layers[m].weight.size(); ++i)
      REQUIRE(back.layers[m].weight[i] == net.layers[m].weight[i]);
    for (std::size_t i = 0; i < net.layers[m].bias.size(); ++i)
      REQUIRE(back.layers[m].bias[i] == net.layers[m].bias[i]);
  }

  std::stringstream bad("ZZZZ");
  REQUIRE_THROWS_AS(load_checkpoint(bad), IoError);
}

TEST_CASE("conv layers require odd kernels") {
  REQUIRE_THROWS_AS(Layer::conv(4, 4, 2, ActivationSpec::identity()), DimensionError);
}

TEST_CASE("residual skip requires matching shapes") {
  Network net;
  net.residual = true;
  net.layers.push_back(Layer::dense(3, 2, ActivationSpec::identity()));
  REQUIRE_THROWS_AS(forward(net, Tensor({2})), DimensionError);
}
