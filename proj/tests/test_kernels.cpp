#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"
#include "pvfault/error.hpp"
#include "pvfault/kernels.hpp"

using namespace pvfault;
using testing::central_difference;
using testing::random_tensor;
using testing::rel_error;

using testing::dot;
using testing::naive_conv;
using testing::random_conv;

TEST_SUITE("kernels") {

TEST_CASE("output extent formula") {
  CHECK(window_output_extent(224, 3, 1, 0) == 222);
  CHECK(window_output_extent(222, 2, 2, 0) == 111);
  CHECK(window_output_extent(109, 2, 2, 0) == 54);
  CHECK(window_output_extent(5, 3, 1, 1) == 5);
  CHECK(window_output_extent(7, 3, 2, 0) == 3);
  CHECK_THROWS_AS(window_output_extent(2, 3, 1, 0), ShapeError);
}

TEST_CASE("conv 1x4x4 with a 3x3 filter equals the window sum plus bias") {
  Rng rng{11};
  const TensorD x = random_tensor<double>({1, 4, 4}, rng);
  const ConvKernel<double> k = random_conv(1, 1, 3, rng);
  const TensorD y = conv2d(x, k);
  REQUIRE(y.shape() == Shape{1, 2, 2});
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b) {
      double s = k.bias[0];
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) s += k.weights(0, 0, i, j) * x(0, a + i, b + j);
      CHECK(y(0, a, b) == s);
    }
}

TEST_CASE("conv rejects even kernels and channel mismatches") {
  CHECK_THROWS_AS(ConvKernel<float>(1, 1, 2, 2), ShapeError);
  Rng rng{1};
  const ConvKernel<double> k = random_conv(2, 3, 3, rng);
  CHECK_THROWS_AS(conv2d(random_tensor<double>({2, 5, 5}, rng), k), ShapeError);
}

TEST_CASE("conv with stride and padding matches the naive loop bit for bit") {
  Rng rng{12};
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t C = 1 + rng.below(3), K = 1 + rng.below(3);
    const std::size_t stride = 1 + rng.below(2), pad = rng.below(2);
    const std::size_t H = 3 + rng.below(6), W = 3 + rng.below(6);
    const TensorD x = random_tensor<double>({C, H, W}, rng);
    const ConvKernel<double> k = random_conv(K, C, 3, rng, stride, pad);
    CHECK(conv2d(x, k) == naive_conv(x, k));
  }
}

TEST_CASE("conv gradients match finite differences") {
  Rng rng{13};
  for (const auto& [C, K, H, stride, pad] :
       std::vector<std::tuple<int, int, int, int, int>>{{1, 1, 4, 1, 0}, {2, 3, 6, 1, 0},
                                                        {2, 2, 7, 2, 1}, {3, 2, 8, 1, 1}}) {
    TensorD x = random_tensor<double>({std::size_t(C), std::size_t(H), std::size_t(H)}, rng);
    ConvKernel<double> k = random_conv(K, C, 3, rng, stride, pad);
    const TensorD r = random_tensor<double>(conv2d(x, k).shape(), rng);
    const ConvGrads<double> g = conv2d_grad(x, k, r);
    CHECK(g.weights.shape() == k.weights.shape());
    CHECK(g.input.shape() == x.shape());
    auto loss = [&] { return dot(r, conv2d(x, k)); };
    double worst = 0;
    for (std::size_t i = 0; i < k.weights.size(); ++i)
      worst = std::max(worst, rel_error(g.weights[i], central_difference(k.weights, i, loss, 1e-6)));
    for (std::size_t i = 0; i < k.bias.size(); ++i)
      worst = std::max(worst, rel_error(g.bias[i], central_difference(k.bias, i, loss, 1e-6)));
    for (std::size_t i = 0; i < x.size(); ++i)
      worst = std::max(worst, rel_error(g.input[i], central_difference(x, i, loss, 1e-6)));
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("maxpool shape, values and first-occurrence ties") {
  TensorD x({1, 5, 5});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i % 7);
  const PoolResult<double> p = maxpool2(x);
  REQUIRE(p.output.shape() == Shape{1, 2, 2});
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b) {
      const double m = std::max({x(0, 2 * a, 2 * b), x(0, 2 * a, 2 * b + 1),
                                 x(0, 2 * a + 1, 2 * b), x(0, 2 * a + 1, 2 * b + 1)});
      CHECK(p.output(0, a, b) == m);
    }
  TensorD flat({1, 2, 2}, 3.0);
  const PoolResult<double> t = maxpool2(flat);
  CHECK(t.indices.argmax[0] == 0);
  const TensorD g = maxpool2_grad(t.indices, TensorD({1, 1, 1}, 1.0));
  CHECK(g.values() == std::vector<double>{1, 0, 0, 0});
}

TEST_CASE("maxpool gradient matches finite differences") {
  Rng rng{14};
  TensorD x = random_tensor<double>({2, 6, 6}, rng);
  const PoolResult<double> p = maxpool2(x);
  const TensorD r = random_tensor<double>(p.output.shape(), rng);
  const TensorD g = maxpool2_grad(p.indices, r);
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double fd = central_difference(x, i, [&] { return dot(r, maxpool2(x).output); }, 1e-6);
    worst = std::max(worst, rel_error(g[i], fd));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("maxpool is equivariant to translations by one stride") {
  Rng rng{15};
  for (int trial = 0; trial < 50; ++trial) {
    const TensorD x = random_tensor<double>({2, 12, 12}, rng);
    for (const auto& [dy, dx] : std::vector<std::pair<std::size_t, std::size_t>>{{2, 0}, {0, 2}}) {
      // shifted(i, j) = x(i + dy, j + dx), cropped to 10x10.
      TensorD shifted({2, 10, 10});
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 10; ++i)
          for (std::size_t j = 0; j < 10; ++j) shifted(c, i, j) = x(c, i + dy, j + dx);
      const TensorD a = maxpool2(x).output;
      const TensorD b = maxpool2(shifted).output;
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 5; ++i)
          for (std::size_t j = 0; j < 5; ++j) CHECK(b(c, i, j) == a(c, i + dy / 2, j + dx / 2));
    }
  }
}

TEST_CASE("relu and its gradient") {
  TensorD x({4}, std::vector<double>{-1.0, 0.0, 0.5, 2.0});
  CHECK(relu(x).values() == std::vector<double>{0.0, 0.0, 0.5, 2.0});
  CHECK(relu_grad(x, TensorD({4}, 3.0)).values() == std::vector<double>{0.0, 0.0, 3.0, 3.0});
  Rng rng{16};
  TensorD y = random_tensor<double>({6, 6}, rng);
  for (double& v : y.data()) v += v >= 0 ? 0.1 : -0.1;  // stay away from the kink
  const TensorD r = random_tensor<double>({6, 6}, rng);
  const TensorD g = relu_grad(y, r);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double fd = central_difference(y, i, [&] { return dot(r, relu(y)); }, 1e-6);
    CHECK(rel_error(g[i], fd) < 1e-4);
  }
}

TEST_CASE("linear layer gradient matches finite differences") {
  Rng rng{17};
  LinearLayer<double> fc(8, 4);
  fc.weights = random_tensor<double>(fc.weights.shape(), rng);
  fc.bias = random_tensor<double>(fc.bias.shape(), rng);
  CHECK(fc.parameter_count() == 36);
  TensorD x = random_tensor<double>({8}, rng);
  const TensorD r = random_tensor<double>({4}, rng);
  const LinearGrads<double> g = linear_grad(x, fc, r);
  auto loss = [&] { return dot(r, linear(x, fc)); };
  double worst = 0;
  for (std::size_t i = 0; i < fc.weights.size(); ++i)
    worst = std::max(worst, rel_error(g.weights[i], central_difference(fc.weights, i, loss, 1e-6)));
  for (std::size_t i = 0; i < 4; ++i)
    worst = std::max(worst, rel_error(g.bias[i], central_difference(fc.bias, i, loss, 1e-6)));
  for (std::size_t i = 0; i < 8; ++i)
    worst = std::max(worst, rel_error(g.input[i], central_difference(x, i, loss, 1e-6)));
  CHECK(worst < 1e-4);
}

TEST_CASE("softmax cross-entropy") {
  const std::vector<double> confident{10.0, -10.0};
  CHECK(softmax_cross_entropy<double>(confident, 0).loss < 1e-4);
  const std::vector<double> even{0.0, 0.0};
  CHECK(softmax_cross_entropy<double>(even, 1).loss == doctest::Approx(std::log(2.0)));
  const std::vector<double> bad{std::nan(""), 0.0};
  CHECK_THROWS_AS(softmax_cross_entropy<double>(bad, 0), DivergenceError);
  const std::vector<double> inf{INFINITY, 0.0};
  CHECK_THROWS_AS(softmax_cross_entropy<double>(inf, 0), DivergenceError);

  std::vector<double> z{0.3, -1.2};
  const auto lg = softmax_cross_entropy<double>(z, 1);
  for (std::size_t i = 0; i < 2; ++i) {
    auto zp = z, zm = z;
    zp[i] += 1e-6;
    zm[i] -= 1e-6;
    const double fd = (softmax_cross_entropy<double>(zp, 1).loss -
                       softmax_cross_entropy<double>(zm, 1).loss) / 2e-6;
    CHECK(rel_error(lg.grad[i], fd) < 1e-4);
  }
  const auto p = softmax<double>(std::vector<double>{1000.0, 1000.0});
  CHECK(p[0] == doctest::Approx(0.5));
}

}  // TEST_SUITE
