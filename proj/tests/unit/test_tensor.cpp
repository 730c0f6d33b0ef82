#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "oovforge/errors.hpp"
#include "oovforge/tensor.hpp"

using namespace oovforge;

namespace {

Tensor vec(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor::from_data({n}, std::move(v));
}

Tensor mat(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor::from_data({r, c}, std::move(v)); }

}  // namespace

TEST_CASE("tensor construction checks element count") {
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), DimensionError);
  auto t = Tensor::zeros({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.at(1, 2) == 0.0);
}

TEST_CASE("matmul examples") {
  auto id = mat(2, 2, {1, 0, 0, 1});
  auto m = mat(2, 2, {1, 2, 3, 4});
  CHECK(matmul(id, m).to_vector() == std::vector<double>{1, 2, 3, 4});
  CHECK(matmul(mat(1, 2, {1, 2}), mat(2, 1, {3, 4})).item() == 11.0);
  CHECK_THROWS_AS(matmul(mat(1, 2, {1, 2}), mat(1, 2, {1, 2})), DimensionError);

  std::mt19937_64 rng(3);
  auto a = gradcheck::random_leaf({4, 5}, rng);
  auto b = gradcheck::random_leaf({5, 3}, rng);
  auto w = gradcheck::random_leaf({4, 3}, rng);
  auto r = gradcheck::check({a, b}, [&] { return sum(mul(matmul(a, b), w.detach())); });
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("softmax examples and invariants") {
  auto s = softmax(vec({0, 0, 0}));
  for (double v : s.to_vector()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
  for (double c : {-40.0, 0.0, 3.5, 700.0}) {
    auto p = softmax(vec({c, c + std::log(2.0)}));
    CHECK(std::abs(p[0] - 1.0 / 3) < 1e-12);
    CHECK(std::abs(p[1] - 2.0 / 3) < 1e-12);
  }

  std::mt19937_64 rng(5);
  auto x = gradcheck::random_leaf({7}, rng, -3, 3);
  auto w = gradcheck::random_leaf({7}, rng);
  CHECK(gradcheck::check({x}, [&] { return dot(softmax(x), w.detach()); }).max_rel_error < 1e-6);

  auto m = gradcheck::random_leaf({4, 6}, rng, -3, 3);
  auto rows = softmax(m, 1);
  auto shifted = softmax(add_scalar(m, 12.25), 1);
  for (std::size_t i = 0; i < 4; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
      total += rows.at(i, j);
      CHECK(std::abs(rows.at(i, j) - shifted.at(i, j)) < 1e-9);
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("layer_norm examples") {
  auto ones = vec({1, 1, 1, 1});
  auto zeros = vec({0, 0, 0, 0});
  auto c = layer_norm(mat(1, 4, {5, 5, 5, 5}), ones, zeros);
  for (double v : c.to_vector()) CHECK(v == 0.0);

  // mean 0, population variance 1
  auto x = mat(1, 4, {1, -1, 1, -1});
  auto y = layer_norm(x, ones, zeros);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(y[i] - x[i]) < 1e-5);
  auto y0 = layer_norm(x, ones, zeros, 1e-12);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(y0[i] - x[i]) < 1e-6);

  std::mt19937_64 rng(8);
  auto r = gradcheck::random_leaf({1, 6}, rng);
  auto g = gradcheck::random_leaf({6}, rng);
  auto b = gradcheck::random_leaf({6}, rng);
  auto w = gradcheck::random_leaf({1, 6}, rng);
  CHECK(gradcheck::check({r, g, b}, [&] { return sum(mul(layer_norm(r, g, b), w.detach())); }).max_rel_error < 1e-5);
}

TEST_CASE("conv1d_maxpool examples") {
  std::mt19937_64 rng(9);
  auto filters = gradcheck::random_leaf({3, 2, 4}, rng);
  auto z = conv1d_maxpool(Tensor::zeros({5, 2}), filters);
  for (double v : z.to_vector()) CHECK(v == 0.0);

  auto seq = gradcheck::random_leaf({1, 2}, rng);
  auto f1 = gradcheck::random_leaf({1, 2, 3}, rng);
  auto pooled = conv1d_maxpool(seq, f1);
  auto direct = matmul(seq, reshape(f1, {2, 3}));
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(pooled[i] - direct[i]) < 1e-15);

  CHECK_THROWS_AS(conv1d_maxpool(Tensor::zeros({0, 2}), filters), InputError);

  auto s9 = gradcheck::random_leaf({9, 3}, rng);
  for (std::size_t width : {2, 3, 4}) {
    auto f = gradcheck::random_leaf({width, 3, 5}, rng);
    auto w = gradcheck::random_leaf({5}, rng);
    CHECK(gradcheck::check({s9, f}, [&] { return dot(conv1d_maxpool(s9, f), w.detach()); }).max_rel_error < 1e-5);
  }
}

TEST_CASE("cosine examples") {
  auto v = vec({0.3, -1.2, 2.0});
  CHECK(cosine(v, v).item() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine(v, scale(v, -1)).item() == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(cosine(vec({1, 0}), vec({0, 1})).item() == 0.0);
  CHECK(std::abs(cosine(scale(v, 7.5), vec({1, 2, 3})).item() - cosine(v, vec({1, 2, 3})).item()) < 1e-9);

  try {
    cosine(vec({0, 0, 0}), v);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("first") != std::string::npos);
  }
  CHECK_THROWS_AS(cosine(v, vec({0, 0, 0})), NumericError);

  std::mt19937_64 rng(10);
  for (int i = 0; i < 20; ++i) {
    auto a = gradcheck::random_leaf({5}, rng);
    auto b = gradcheck::random_leaf({5}, rng);
    const double c = cosine(a, b).item();
    CHECK(c <= 1.0);
    CHECK(c >= -1.0);
    CHECK(gradcheck::check({a, b}, [&] { return cosine(a, b); }).max_rel_error < 1e-6);
  }
}

TEST_CASE("backward examples") {
  auto p = Tensor::param({3}, {1, 2, 3});
  backward(sum(p));
  REQUIRE(p.grad());
  CHECK(*p.grad() == std::vector<double>{1, 1, 1});

  auto q = Tensor::param({3}, {0.5, -1, 2});
  auto t = vec({0.5, -1, 2});
  backward(cosine(q, t));
  double along = 0.0;
  for (std::size_t i = 0; i < 3; ++i) along += (*q.grad())[i] * q[i];
  CHECK(std::abs(along) < 1e-12);

  CHECK_THROWS_AS(backward(p), UsageError);
}

TEST_CASE("backward accumulates into leaves and zero_grad clears") {
  auto p = Tensor::param({2}, {1, 2});
  backward(sum(p));
  backward(sum(scale(p, 2)));
  CHECK(*p.grad() == std::vector<double>{3, 3});
  p.zero_grad();
  CHECK((!p.grad() || *p.grad() == std::vector<double>{0, 0}));
}

TEST_CASE("two-layer network gradient check") {
  std::mt19937_64 rng(12);
  auto x = gradcheck::random_leaf({4, 6}, rng);
  auto w1 = gradcheck::random_leaf({6, 8}, rng);
  auto b1 = gradcheck::random_leaf({8}, rng);
  auto w2 = gradcheck::random_leaf({8, 3}, rng);
  auto target = gradcheck::random_leaf({3}, rng);
  auto loss = [&] {
    auto h = relu(add_bias(matmul(x, w1), b1));
    return scale(cosine(col_mean(matmul(h, w2)), target.detach()), -1.0);
  };
  CHECK(gradcheck::check({x, w1, b1, w2}, loss).max_rel_error < 1e-4);
}

TEST_CASE("every op passes the finite-difference check") {
  std::mt19937_64 rng(2024);
  for (const auto& c : gradcheck::op_cases()) {
    CAPTURE(c.name);
    for (int i = 0; i < 10; ++i) CHECK(gradcheck::check_op(c, rng).max_rel_error < 1e-6);
  }
}

TEST_CASE("create_graph gradients are differentiable") {
  // f(x) = sum(x^3) has gradient 3x^2; the gradient of sum(w * 3x^2) is 6 w x.
  auto x = Tensor::param({3}, {0.5, -1.5, 2.0});
  auto w = vec({1.0, 2.0, -1.0});
  auto g = gradients(sum(pow_scalar(x, 3)), std::vector<Tensor>{x}, true);
  auto gg = gradients(dot(g[0], w), std::vector<Tensor>{x});
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(gg[0][i] - 6 * w[i] * x[i]) < 1e-12);
}

TEST_CASE("gradients of unrelated inputs are zeros") {
  auto a = Tensor::param({2}, {1, 2});
  auto b = Tensor::param({2}, {3, 4});
  auto g = gradients(sum(a), std::vector<Tensor>{a, b});
  CHECK(g[1].to_vector() == std::vector<double>{0, 0});
}

TEST_CASE("no-grad guard stops recording") {
  auto a = Tensor::param({2}, {1, 2});
  Tensor out;
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    out = scale(a, 2);
  }
  CHECK(grad_enabled());
  CHECK_FALSE(out.requires_grad());
}

TEST_CASE("backward is bit-identical across runs") {
  auto run = [] {
    std::mt19937_64 rng(77);
    auto a = gradcheck::random_leaf({5, 4}, rng);
    auto b = gradcheck::random_leaf({4, 4}, rng);
    auto y = softmax(matmul(a, b), 1);
    backward(sum(mul(y, y)));
    return *a.grad();
  };
  CHECK(run() == run());
}

TEST_CASE("non-finite results are rejected") {
  CHECK_THROWS_AS(pow_scalar(vec({0.0}), -1.0), NumericError);
}
