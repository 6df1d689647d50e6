#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "firmnet/dense.hpp"
#include "firmnet/fft.hpp"
#include "firmnet/linmap.hpp"
#include "oracles.hpp"

using namespace firmnet;

TEST_CASE("op_norm on identity and scaled identity") {
  Rng rng(1);
  REQUIRE(op_norm(LinearMap::identity(), {16}, 5, rng) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(op_norm(LinearMap::scale(2.0), {16}, 5, rng) == Catch::Approx(2.0).margin(1e-12));
  REQUIRE(op_norm(LinearMap::scale(0.0), {16}, 5, rng) == 0.0);
  REQUIRE_THROWS_AS(op_norm(LinearMap::identity(), {4}, 0, rng), std::invalid_argument);
}

TEST_CASE("op_norm of a convolution matches the kernel dft magnitude") {
  Rng rng(2);
  Tensor k = Tensor::gaussian({1, 3, 3}, rng);
  const std::size_t h = 12, w = 10;

  // Independent oracle: embed the centered kernel on the grid and take the
  // largest naive-DFT magnitude.
  std::vector<cplx> grid(h * w, cplx(0, 0));
  for (long qy = 0; qy < 3; ++qy)
    for (long qx = 0; qx < 3; ++qx) {
      long oy = ((qy - 1) % long(h) + long(h)) % long(h);
      long ox = ((qx - 1) % long(w) + long(w)) % long(w);
      grid[std::size_t(oy) * w + std::size_t(ox)] += k.at(0, std::size_t(qy), std::size_t(qx));
    }
  for (std::size_t y = 0; y < h; ++y) {
    std::vector<cplx> row(grid.begin() + long(y * w), grid.begin() + long((y + 1) * w));
    row = dft_naive(row, false);
    for (std::size_t x = 0; x < w; ++x) grid[y * w + x] = row[x];
  }
  for (std::size_t x = 0; x < w; ++x) {
    std::vector<cplx> col(h);
    for (std::size_t y = 0; y < h; ++y) col[y] = grid[y * w + x];
    col = dft_naive(col, false);
    for (std::size_t y = 0; y < h; ++y) grid[y * w + x] = col[y];
  }
  double want = 0.0;
  for (const cplx& s : grid) want = std::max(want, std::abs(s));

  LinearMap conv = LinearMap::circular_convolution(k);
  const double got = op_norm(conv, {1, h, w}, 400, rng);
  REQUIRE(got == Catch::Approx(want).epsilon(1e-6));
  REQUIRE(circ_conv_grid_norm(k, h, w) == Catch::Approx(want).margin(1e-10));
}

TEST_CASE("op_norm estimates never exceed the dense singular value oracle") {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 8 + 8 * std::size_t(trial);
    Matrix m(n, n);
    Rng gen = rng.split(std::uint64_t(trial));
    for (double& v : m.values()) v = gen.normal();
    LinearMap map = LinearMap::dense(m);
    const double svd = largest_singular_value(m);
    const double few = op_norm(map, {n}, 5, rng);
    const double many = op_norm(map, {n}, 200, rng);
    REQUIRE(few <= svd + 1e-9);
    REQUIRE(many <= svd + 1e-9);
    REQUIRE(many == Catch::Approx(svd).margin(1e-6));
  }
}

TEST_CASE("power iteration estimates are nondecreasing") {
  Rng rng(4);
  Matrix m(12, 12);
  for (double& v : m.values()) v = rng.normal();
  LinearMap map = LinearMap::dense(m);
  double prev = 0.0;
  for (std::size_t iters = 1; iters <= 30; ++iters) {
    Rng fresh(99);
    const double est = op_norm(map, {12}, iters, fresh);
    REQUIRE(est >= prev - 1e-12);
    prev = est;
  }
}

TEST_CASE("seeded orthogonal maps are exact isometries") {
  for (std::uint64_t seed : {0ull, 7ull, 123456789ull}) {
    const std::size_t dim = 24;
    LinearMap u = LinearMap::orthogonal_from_seed(seed, dim);
    Rng rng(seed + 1);
    for (int trial = 0; trial < 5; ++trial) {
      const Tensor x = Tensor::gaussian({dim}, rng);
      const Tensor ux = u.forward(x);
      REQUIRE(std::abs(norm2(ux) - norm2(x)) < 1e-12 * (1.0 + norm2(x)));
      REQUIRE(max_abs(u.adjoint(ux) - x) < 1e-12 * (1.0 + max_abs(x)));
      const Tensor y = Tensor::gaussian({dim}, rng);
      REQUIRE(std::abs(dot(ux, y) - dot(x, u.adjoint(y))) < 1e-11);
    }
  }
}

TEST_CASE("orthogonal map in dimension one is a sign") {
  LinearMap u = LinearMap::orthogonal_from_seed(99, 1);
  const Tensor x = Tensor::from({2.5});
  const Tensor y = u.forward(x);
  REQUIRE(std::abs(std::abs(y[0]) - 2.5) < 1e-14);
}

TEST_CASE("identical seeds give identical orthogonal maps") {
  LinearMap a = LinearMap::orthogonal_from_seed(5, 6);
  LinearMap b = LinearMap::orthogonal_from_seed(5, 6);
  Rng rng(1);
  const Tensor x = Tensor::gaussian({6}, rng);
  REQUIRE(max_abs(a.forward(x) - b.forward(x)) == 0.0);
}

TEST_CASE("haar transform is orthogonal and invertible") {
  Rng rng(6);
  SECTION("1d") {
    LinearMap h = LinearMap::haar(3);
    const Tensor x = Tensor::gaussian({16}, rng);
    const Tensor c = h.forward(x);
    REQUIRE(std::abs(norm2(c) - norm2(x)) < 1e-12 * (1.0 + norm2(x)));
    REQUIRE(max_abs(h.adjoint(c) - x) < 1e-12);
    const Tensor y = Tensor::gaussian({16}, rng);
    REQUIRE(std::abs(dot(c, h.forward(y)) - dot(x, y)) < 1e-11);
  }
  SECTION("2d multichannel") {
    LinearMap h = LinearMap::haar(2);
    const Tensor x = Tensor::gaussian({2, 8, 12}, rng);
    const Tensor c = h.forward(x);
    REQUIRE(std::abs(norm2(c) - norm2(x)) < 1e-12 * (1.0 + norm2(x)));
    REQUIRE(max_abs(h.adjoint(c) - x) < 1e-12);
  }
  SECTION("constant image concentrates in the lowpass cell") {
    LinearMap h = LinearMap::haar(2);
    const Tensor x = Tensor::full({1, 4, 4}, 1.0);
    const Tensor c = h.forward(x);
    REQUIRE(c[0] == Catch::Approx(4.0).margin(1e-12));  // sqrt(16) * mean
    for (std::size_t i = 1; i < c.size(); ++i) REQUIRE(std::abs(c[i]) < 1e-12);
  }
  SECTION("indivisible extents are rejected") {
    LinearMap h = LinearMap::haar(2);
    REQUIRE_THROWS_AS(h.forward(Tensor({6})), DimensionError);
  }
}

TEST_CASE("composition forwards and adjoints in the right order") {
  Rng rng(7);
  Matrix a(5, 5), b(5, 5);
  for (double& v : a.values()) v = rng.normal();
  for (double& v : b.values()) v = rng.normal();
  LinearMap ab = LinearMap::compose(LinearMap::dense(a), LinearMap::dense(b));
  const Tensor x = Tensor::gaussian({5}, rng);
  const Tensor y = Tensor::gaussian({5}, rng);
  REQUIRE(std::abs(dot(ab.forward(x), y) - dot(x, ab.adjoint(y))) < 1e-11);
  const Matrix prod = a * b;
  REQUIRE(max_abs(ab.forward(x) - Tensor({5}, prod.apply(x.values()))) < 1e-12);
}

TEST_CASE("jacobi eigensolver matches known spectra") {
  Matrix m(3, 3);
  m(0, 0) = 2.0;
  m(1, 1) = 2.0;
  m(0, 1) = m(1, 0) = 1.0;
  m(2, 2) = 5.0;
  auto eig = sym_eigenvalues(m);
  std::sort(eig.begin(), eig.end());
  REQUIRE(eig[0] == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(eig[1] == Catch::Approx(3.0).margin(1e-12));
  REQUIRE(eig[2] == Catch::Approx(5.0).margin(1e-12));

  // singular values of [[3,0],[4,0]]: {5, 0}
  Matrix r(2, 2);
  r(0, 0) = 3.0;
  r(1, 0) = 4.0;
  REQUIRE(largest_singular_value(r) == Catch::Approx(5.0).margin(1e-12));
}
