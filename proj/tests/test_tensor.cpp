#include <catch2/catch_amalgamated.hpp>

#include "gradcheck.hpp"
#include "unetgan/adam.hpp"
#include "unetgan/ops.hpp"
#include "unetgan/tensor.hpp"

using namespace unetgan;
using Catch::Approx;

TEST_CASE("identity node passes values through") {
  auto x = Tensor<double>::from({2}, {1, 2});
  auto y = identity(x);
  CHECK(y.data() == std::vector<double>{1, 2});
}

TEST_CASE("add(x,x) doubles") {
  auto x = Tensor<double>::from({2}, {1, 2});
  auto y = add(x, x);
  CHECK(y.data() == std::vector<double>{2, 4});
}

TEST_CASE("shape mismatch names the op") {
  auto a = Tensor<double>::from({2}, {1, 2});
  auto b = Tensor<double>::from({3}, {1, 2, 3});
  CHECK_THROWS_MATCHES(add(a, b), ShapeError,
                       Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("add")));
}

TEST_CASE("backward of sum gives unit gradients") {
  auto x = Tensor<double>::from({3}, {1, 2, 3}, true);
  backward(sum(x));
  CHECK(x.grad() == std::vector<double>{1, 1, 1});
}

TEST_CASE("backward of mean squared error") {
  // d/dx (y - x)^2 = -2 (y - x) = -4 at x=0, y=2
  auto x = Tensor<double>::from({1}, {0}, true);
  auto y = Tensor<double>::from({1}, {2});
  auto diff = sub(y, x);
  backward(mean(mul(diff, diff)));
  CHECK(x.grad()[0] == Approx(-4.0));
}

TEST_CASE("backward rejects non-scalar root") {
  auto x = Tensor<double>::from({2}, {1, 2}, true);
  CHECK_THROWS_AS(backward(add(x, x)), ShapeError);
}

TEST_CASE("gradients accumulate additively until zeroed") {
  auto x = Tensor<double>::from({2}, {1, 2}, true);
  backward(sum(x));
  backward(sum(x));
  CHECK(x.grad() == std::vector<double>{2, 2});
  x.zero_grad();
  CHECK(x.grad() == std::vector<double>{0, 0});
}

TEST_CASE("backward of a sum of losses equals sum of backwards") {
  Rng rng(11);
  auto x = Tensor<double>::from({4}, gradcheck::random_vec(4, rng), true);
  auto loss_a = [&] { return mean(mul(x, x)); };
  auto loss_b = [&] { return sum(tanh_act(x)); };
  backward(add(loss_a(), loss_b()));
  auto combined = x.grad();
  x.zero_grad();
  backward(loss_a());
  backward(loss_b());
  for (std::size_t i = 0; i < 4; ++i) CHECK(x.grad()[i] == Approx(combined[i]).epsilon(1e-12));
}

TEST_CASE("composite graph matches finite differences") {
  Rng rng(7);
  std::vector<Tensor<double>> leaves = {
      Tensor<double>::from({5}, gradcheck::random_vec(5, rng), true),
      Tensor<double>::from({5}, gradcheck::random_vec(5, rng), true)};
  auto f = [](std::vector<Tensor<double>>& ls) {
    auto prod = mul(ls[0], ls[1]);
    auto shifted = add_scalar(scale(prod, 0.5), 0.3);
    auto diff = sub(shifted, ls[1]);
    return add(mean(mul(diff, diff)), scale(sum(log_op(add_scalar(mul(ls[0], ls[0]), 1.0))), 0.1));
  };
  CHECK(gradcheck::max_grad_error(leaves, f) < 1e-4);
}

TEST_CASE("diamond DAG propagates through both paths") {
  auto x = Tensor<double>::from({2}, {1.0, 2.0}, true);
  auto y = add(x, x);          // 2x
  backward(sum(mul(y, y)));    // d/dx 4x^2 = 8x
  CHECK(x.grad()[0] == Approx(8.0));
  CHECK(x.grad()[1] == Approx(16.0));
}

TEST_CASE("detach blocks gradient flow") {
  auto x = Tensor<double>::from({2}, {1, 2}, true);
  auto d = mul(x, x).detach();
  CHECK_FALSE(d.requires_grad());
  backward(add(sum(mul(d, d)), sum(x)));
  CHECK(x.grad() == std::vector<double>{1, 1});
}

TEST_CASE("forward+backward reruns are bit-identical") {
  Rng rng(3);
  auto data = gradcheck::random_vec(16, rng);
  auto run = [&] {
    auto x = Tensor<double>::from({16}, data, true);
    auto loss = mean(mul(tanh_act(x), leaky_relu(x, 0.1)));
    backward(loss);
    return std::pair{loss.item(), x.grad()};
  };
  auto [l1, g1] = run();
  auto [l2, g2] = run();
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}

// --------------------------------------------------------------------------
// Adam
// --------------------------------------------------------------------------

namespace {

// Straight-line scalar implementation of the published Adam recurrences.
struct ScalarAdam {
  double lr, b1, b2, eps, m = 0, v = 0;
  int t = 0;
  double step(double param, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    double mhat = m / (1 - std::pow(b1, t));
    double vhat = v / (1 - std::pow(b2, t));
    return param - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

}  // namespace

TEST_CASE("adam single step with unit gradient") {
  auto p = Tensor<double>::from({1}, {1.0}, true);
  p.grad()[0] = 1.0;
  std::vector<Tensor<double>> params = {p};
  AdamState<double> adam;
  adam.init(params);
  adam.step(params);
  // mhat = vhat = 1 after bias correction, so the update is -lr/(1+eps).
  CHECK(p.data()[0] == Approx(1.0 - 0.0002 * (1.0 / (1.0 + 1e-8))).epsilon(1e-12));
  CHECK(adam.t == 1);
  CHECK(p.grad()[0] == 1.0);  // grads untouched
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
  auto p = Tensor<double>::from({3}, {1, 2, 3}, true);
  p.zero_grad();
  std::vector<Tensor<double>> params = {p};
  AdamState<double> adam;
  adam.init(params);
  adam.step(params);
  CHECK(p.data() == std::vector<double>{1, 2, 3});
}

TEST_CASE("adam with lr=0 is a no-op") {
  auto p = Tensor<double>::from({2}, {1, 2}, true);
  p.grad() = {0.5, -0.5};
  std::vector<Tensor<double>> params = {p};
  AdamState<double> adam;
  adam.lr = 0;
  adam.init(params);
  adam.step(params);
  CHECK(p.data() == std::vector<double>{1, 2});
}

TEST_CASE("adam matches scalar reference over successive steps") {
  auto p = Tensor<double>::from({1}, {0.7}, true);
  std::vector<Tensor<double>> params = {p};
  AdamState<double> adam;
  adam.init(params);
  ScalarAdam ref{adam.lr, adam.beta1, adam.beta2, adam.eps};
  double ref_param = 0.7;
  for (int i = 0; i < 5; ++i) {
    p.zero_grad();
    p.grad()[0] = 0.3;
    adam.step(params);
    ref_param = ref.step(ref_param, 0.3);
    CHECK(p.data()[0] == Approx(ref_param).margin(1e-12));
  }
}

TEST_CASE("adam rejects parameters without gradients") {
  auto p = Tensor<double>::from({1}, {1.0}, true);
  std::vector<Tensor<double>> params = {p};
  AdamState<double> adam;
  adam.init(params);
  CHECK_THROWS_AS(adam.step(params), DataError);
}
