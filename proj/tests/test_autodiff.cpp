#include <doctest.h>

#include <cmath>

#include "autodiff.hpp"
#include "gradcheck.hpp"
#include "rng.hpp"

using namespace diffsketch;
using ad::Var;

namespace {

Var param(const Shape& s, std::uint64_t seed, double stddev = 1.0) { return Var::parameter(randn(s, seed, stddev)); }

// Projects onto a fixed random direction so every output element matters.
Var probe_loss(const Var& y, std::uint64_t seed = 99) {
  return ad::sum(ad::mul(y, Var::constant(randn(y.shape(), seed))));
}

void expect_grad(const std::function<Var()>& f, const std::vector<Var>& in) {
  const auto r = gradcheck::check(f, in);
  INFO("max relative error " << r.max_rel_err << " over " << r.probes << " probes");
  CHECK(r.max_rel_err < 1e-5);
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  auto a = param({2, 3, 4}, 1), b = param({2, 3, 4}, 2);
  expect_grad([&] { return probe_loss(a + b); }, {a, b});
  expect_grad([&] { return probe_loss(a - b); }, {a, b});
  expect_grad([&] { return probe_loss(ad::mul(a, b)); }, {a, b});
  expect_grad([&] { return probe_loss(ad::scale(a, -2.5)); }, {a});
  expect_grad([&] { return probe_loss(ad::add_scalar(a, 0.7)); }, {a});
  expect_grad([&] { return probe_loss(ad::square(a)); }, {a});
  expect_grad([&] { return probe_loss(ad::leaky_relu(a, 0.2)); }, {a});
  expect_grad([&] { return probe_loss(ad::sigmoid(a)); }, {a});
  expect_grad([&] { return probe_loss(ad::abs(a)); }, {a});
  auto s = param({1}, 3);
  expect_grad([&] { return probe_loss(ad::mul_scalar(a, s)); }, {a, s});
}

TEST_CASE("reductions and vector ops match finite differences") {
  auto a = param({12}, 4), b = param({12}, 5), w = param({5, 12}, 6);
  expect_grad([&] { return ad::mean(ad::square(a)); }, {a});
  expect_grad([&] { return ad::dot(a, b); }, {a, b});
  expect_grad([&] { return probe_loss(ad::softmax(a)); }, {a});
  expect_grad([&] { return probe_loss(ad::matvec(w, a)); }, {w, a});
  expect_grad([&] { return probe_loss(ad::l2_normalize(a)); }, {a});
  expect_grad([&] { return ad::cosine(a, b); }, {a, b});
  expect_grad([&] { return probe_loss(ad::reshape(a, {3, 4})); }, {a});
}

TEST_CASE("spatial ops match finite differences") {
  auto x = param({2, 6, 6}, 7), w = param({3, 2, 3, 3}, 8, 0.3), bias = param({3}, 9);
  expect_grad([&] { return probe_loss(ad::conv2d(x, w, bias)); }, {x, w, bias});
  expect_grad([&] { return probe_loss(ad::conv2d(x, w, Var())); }, {x, w});
  expect_grad([&] { return probe_loss(ad::resize_bilinear(x, 9, 4)); }, {x});
  expect_grad([&] { return probe_loss(ad::upsample_nearest(x, 2)); }, {x});
  expect_grad([&] { return probe_loss(ad::adaptive_avg_pool(x, 4, 3)); }, {x});
  auto y = param({1, 6, 6}, 10);
  expect_grad([&] { return probe_loss(ad::concat_channels({x, y})); }, {x, y});
  auto m0 = param({2, 6, 6}, 11), m1 = param({2, 6, 6}, 12), wts = param({2}, 13);
  expect_grad([&] { return probe_loss(ad::weighted_sum({m0, m1}, wts)); }, {m0, m1, wts});
}

TEST_CASE("gradients accumulate across shared subexpressions") {
  auto a = param({4}, 14);
  // d/da sum(a*a + a) = 2a + 1
  auto y = ad::sum(ad::mul(a, a) + a);
  ad::backward(y);
  for (std::size_t i = 0; i < 4; ++i) CHECK(a.grad()[i] == doctest::Approx(2 * a.value()[i] + 1));
}

TEST_CASE("constants receive no gradient") {
  auto c = Var::constant(randn({3}, 15));
  auto p = param({3}, 16);
  ad::backward(ad::dot(c, p));
  CHECK_FALSE(c.requires_grad());
  for (std::size_t i = 0; i < 3; ++i) CHECK(p.grad()[i] == c.value()[i]);
}

TEST_CASE("resize and pooling reduce to identity at the input size") {
  auto x = param({2, 5, 5}, 17);
  CHECK(bit_equal(ad::resize_bilinear(x, 5, 5).value(), x.value()));
  CHECK(bit_equal(ad::adaptive_avg_pool(x, 5, 5).value(), x.value()));
}

TEST_CASE("cosine returns a constant zero for degenerate inputs") {
  auto z = Var::parameter(Tensor({3}));
  auto a = param({3}, 18);
  auto c = ad::cosine(z, a);
  CHECK(c.item() == 0.0);
  CHECK_FALSE(c.requires_grad());
}

TEST_CASE("shape mismatches throw") {
  auto a = param({3}, 19), b = param({4}, 20);
  CHECK_THROWS(ad::add(a, b));
  CHECK_THROWS(ad::matvec(param({2, 5}, 21), a));
  CHECK_THROWS(ad::weighted_sum({a}, param({2}, 22)));
}
