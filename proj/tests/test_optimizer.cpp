#include <cmath>

#include "doctest.h"
#include "pvfault/error.hpp"
#include "pvfault/optimizer.hpp"

using namespace pvfault;

TEST_SUITE("optimizer") {

TEST_CASE("two momentum steps on a scalar") {
  SgdMomentum opt(0.02, 0.9, 0.0);
  Tensor w({1}, 1.0f);
  std::vector<Tensor*> params{&w};
  const std::vector<Tensor> grads{Tensor({1}, 1.0f)};
  opt.step(params, grads);
  CHECK(w[0] == doctest::Approx(0.98));
  opt.step(params, grads);
  CHECK(w[0] == doctest::Approx(1.0 - 0.02 - 0.038).epsilon(1e-6));
  CHECK(opt.velocity()[0][0] == doctest::Approx(-0.038));
}

TEST_CASE("weight decay adds decay * w to the gradient") {
  SgdMomentum opt(0.1, 0.0, 0.01);
  Tensor w({2}, std::vector<float>{2.0f, -4.0f});
  std::vector<Tensor*> params{&w};
  opt.step(params, std::vector<Tensor>{Tensor({2})});
  CHECK(w[0] == doctest::Approx(2.0 - 0.1 * 0.02));
  CHECK(w[1] == doctest::Approx(-4.0 + 0.1 * 0.04));
}

TEST_CASE("decay alone never grows the weight norm") {
  SgdMomentum opt(0.02, 0.9, 0.01);
  Tensor w({3}, std::vector<float>{1.0f, -2.0f, 0.5f});
  std::vector<Tensor*> params{&w};
  const std::vector<Tensor> zero{Tensor({3})};
  auto norm = [&] {
    double s = 0;
    for (float v : w.data()) s += double(v) * v;
    return std::sqrt(s);
  };
  double prev = norm();
  for (int i = 0; i < 200; ++i) {
    opt.step(params, zero);
    const double n = norm();
    CHECK(n <= prev + 1e-12);
    prev = n;
  }
}

TEST_CASE("invalid settings and mismatched shapes are rejected") {
  CHECK_THROWS_AS(SgdMomentum(0.0, 0.9, 0.0), ConfigError);
  CHECK_THROWS_AS(SgdMomentum(0.02, 1.0, 0.0), ConfigError);
  CHECK_THROWS_AS(SgdMomentum(0.02, 0.9, -1.0), ConfigError);
  SgdMomentum opt(0.02, 0.9, 0.0);
  Tensor w({2});
  std::vector<Tensor*> params{&w};
  CHECK_THROWS_AS(opt.step(params, std::vector<Tensor>{Tensor({3})}), ShapeError);
  CHECK_THROWS_AS(opt.step(params, std::vector<Tensor>{}), ShapeError);
}

}  // TEST_SUITE
