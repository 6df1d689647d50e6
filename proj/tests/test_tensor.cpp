#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "firmnet/io.hpp"
#include "firmnet/linmap.hpp"
#include "firmnet/rng.hpp"
#include "firmnet/tensor.hpp"
#include "oracles.hpp"

using namespace firmnet;

TEST_CASE("rng streams are deterministic and splittable") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

  Rng parent(7);
  parent.next_u64();  // child streams must not depend on parent consumption
  Rng c1 = parent.split(3);
  Rng c2 = Rng(7).split(3);
  for (int i = 0; i < 32; ++i) REQUIRE(c1.next_u64() == c2.next_u64());

  Rng d1 = Rng(7).split(4);
  Rng d2 = Rng(7).split(5);
  bool differ = false;
  for (int i = 0; i < 8; ++i) differ |= d1.next_u64() != d2.next_u64();
  REQUIRE(differ);
}

TEST_CASE("rng uniform and normal have sane ranges and moments") {
  Rng rng(123);
  double sum = 0.0, sum_sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    sum_sq += u * u;
  }
  REQUIRE(std::abs(sum / n - 0.5) < 5e-3);
  REQUIRE(std::abs(sum_sq / n - 1.0 / 3.0) < 5e-3);

  double nsum = 0.0, nsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    nsum += z;
    nsq += z * z;
  }
  REQUIRE(std::abs(nsum / n) < 1e-2);
  REQUIRE(std::abs(nsq / n - 1.0) < 1e-2);
}

TEST_CASE("tensor shape bookkeeping and arithmetic") {
  Tensor t({2, 3, 4});
  REQUIRE(t.size() == 24);
  REQUIRE_THROWS_AS(Tensor({2, 0, 4}), DimensionError);
  REQUIRE_THROWS_AS(Tensor({3}, {1.0, 2.0}), DimensionError);

  Tensor a = Tensor::from({1, 2, 3});
  Tensor b = Tensor::from({4, 5, 6});
  REQUIRE(dot(a, b) == 32.0);
  REQUIRE(norm2(Tensor::from({3, 4})) == 5.0);
  Tensor c = a + b * 2.0;
  REQUIRE(c[2] == 15.0);
  REQUIRE_THROWS_AS(dot(a, Tensor::from({1, 2})), DimensionError);
  REQUIRE(a.all_finite());
}

TEST_CASE("dirac kernel leaves images unchanged") {
  Rng rng(5);
  const Tensor x = Tensor::gaussian({1, 7, 9}, rng);
  for (std::size_t size : {1, 3, 5}) {
    Tensor k({1, size, size});
    k.at(0, size / 2, size / 2) = 1.0;
    const Tensor y = circ_conv_apply(k, x);
    REQUIRE(max_abs(y - x) == 0.0);
  }
}

TEST_CASE("averaging kernel on a 1d signal") {
  // kernel [1/2, 1/2], center floor(2/2)=1: out[p] = (x[p] + x[p+1])/2
  const Tensor k = Tensor::from({0.5, 0.5});
  const Tensor x = Tensor::from({1.0, 3.0});
  const Tensor y = circ_conv_apply(k, x);
  REQUIRE(y[0] == Catch::Approx(2.0).margin(1e-15));
  REQUIRE(y[1] == Catch::Approx(2.0).margin(1e-15));
}

TEST_CASE("convolution adjoint identity on random data") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor k = Tensor::gaussian({1, 3, 3}, rng);
    Tensor x = Tensor::gaussian({2, 8, 8}, rng);
    Tensor y = Tensor::gaussian({2, 8, 8}, rng);
    const double lhs = dot(circ_conv_apply(k, x), y);
    const double rhs = dot(x, circ_conv_apply(k, y, true));
    REQUIRE(std::abs(lhs - rhs) <= 1e-10 * (1.0 + std::abs(lhs)));
  }
}

TEST_CASE("fft and direct convolution paths agree on all small sizes") {
  Rng rng(17);
  for (std::size_t h = 1; h <= 16; ++h) {
    for (std::size_t w = 1; w <= 16; ++w) {
      Tensor x = Tensor::gaussian({1, h, w}, rng);
      const std::size_t kh = std::min<std::size_t>(3, h), kw = std::min<std::size_t>(3, w);
      Tensor k = Tensor::gaussian({1, kh, kw}, rng);
      const Tensor via_direct = oracle::circ_conv(k, x, false);
      double* out = nullptr;
      Tensor via_fft(x.shape());
      out = via_fft.data();
      firmnet::detail::conv_plane_fft(x.data(), out, h, w, k.data(), kh, kw, false);
      REQUIRE(max_abs(via_fft - via_direct) < 1e-10);

      const Tensor lib = circ_conv_apply(k, x);
      REQUIRE(max_abs(lib - via_direct) < 1e-10);
    }
  }
}

TEST_CASE("convolution precondition errors") {
  Tensor k({1, 5, 5});
  Tensor x({1, 3, 3});
  REQUIRE_THROWS_AS(circ_conv_apply(k, x), DimensionError);
  Tensor k2({2, 1, 1});
  Tensor x3({3, 4, 4});
  REQUIRE_THROWS_AS(circ_conv_apply(k2, x3), DimensionError);
}

TEST_CASE("kernel broadcast across channels matches channelwise application") {
  Rng rng(23);
  Tensor k = Tensor::gaussian({1, 3, 3}, rng);
  Tensor x = Tensor::gaussian({3, 8, 8}, rng);
  const Tensor broadcast = circ_conv_apply(k, x);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    Tensor plane({1, 8, 8});
    for (std::size_t i = 0; i < 64; ++i) plane[i] = x.values()[ch * 64 + i];
    const Tensor one = circ_conv_apply(k, plane);
    for (std::size_t i = 0; i < 64; ++i)
      REQUIRE(broadcast.values()[ch * 64 + i] == Catch::Approx(one[i]).margin(1e-12));
  }
}

TEST_CASE("ntf1 round trip is bit exact") {
  Rng rng(31);
  Tensor t = Tensor::gaussian({2, 5, 3}, rng);
  std::stringstream buf;
  write_ntf(buf, t);
  const Tensor back = read_ntf(buf);
  REQUIRE(back.shape() == t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) REQUIRE(back[i] == t[i]);

  std::stringstream bad("XXXX");
  REQUIRE_THROWS_AS(read_ntf(bad), IoError);
}

TEST_CASE("pgm and ppm round trips quantize to 8 bits") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "firmnet_pnm_test";
  fs::create_directories(dir);
  Rng rng(37);
  for (std::size_t channels : {1, 3}) {
    Tensor img = Tensor::uniform({channels, 6, 4}, rng, 0.0, 1.0);
    const std::string path = (dir / ("img" + std::to_string(channels) + ".pnm")).string();
    write_pnm(path, img);
    const Tensor back = read_pnm(path);
    REQUIRE(back.shape() == img.shape());
    for (std::size_t i = 0; i < img.size(); ++i)
      REQUIRE(std::abs(back[i] - img[i]) <= 0.5 / 255.0 + 1e-12);
  }
  fs::remove_all(dir);
}

TEST_CASE("key=value config parsing") {
  std::stringstream src("# comment\nalpha = 1.5\n name=run \n\nflag=on\n");
  const KeyValues kv = parse_key_values(src);
  KeyValueView view(kv);
  REQUIRE(view.num("alpha", 0.0) == 1.5);
  REQUIRE(view.str("name", "") == "run");
  REQUIRE(view.str("flag", "") == "on");
  REQUIRE(view.num("missing", -2.0) == -2.0);

  std::stringstream bad("not a pair\n");
  REQUIRE_THROWS_AS(parse_key_values(bad), IoError);
}

TEST_CASE("flips are involutions") {
  Rng rng(41);
  const Tensor img = Tensor::gaussian({1, 5, 8}, rng);
  REQUIRE(max_abs(flip_horizontal(flip_horizontal(img)) - img) == 0.0);
  REQUIRE(max_abs(flip_vertical(flip_vertical(img)) - img) == 0.0);
}
