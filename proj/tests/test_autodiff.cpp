#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ad/tensor.hpp"
#include "testsupport.hpp"
#include "util/error.hpp"

using namespace fedlt;
using ad::Tensor;
using ad::TensorPtr;

TEST_CASE("matmul identity, hand product, annihilator") {
  ad::Tape tape;
  auto I = Tensor::matrix(2, 2, {1, 0, 0, 1});
  auto A = Tensor::matrix(2, 2, {1, 2, 3, 4});
  auto IA = tape.matmul(I, A);
  CHECK(IA->values == std::vector<double>{1, 2, 3, 4});

  auto row = Tensor::matrix(1, 2, {1, 2});
  auto col = Tensor::matrix(2, 1, {3, 4});
  CHECK(tape.matmul(row, col)->values == std::vector<double>{11});

  auto zero = Tensor::zeros({2, 2});
  auto ZA = tape.matmul(zero, A);
  CHECK(ZA->values == std::vector<double>(4, 0.0));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  ad::Tape tape;
  auto a = Tensor::matrix(2, 3, std::vector<double>(6, 1.0));
  auto b = Tensor::matrix(2, 2, std::vector<double>(4, 1.0));
  try {
    tape.matmul(a, b);
    FAIL("expected dimension error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Dimension);
    CHECK(std::string(e.what()).find("[2x3]") != std::string::npos);
    CHECK(std::string(e.what()).find("[2x2]") != std::string::npos);
  }
}

TEST_CASE("matmul backward accumulates g.b^T and a^T.g") {
  ad::Tape tape;
  auto a = Tensor::matrix(2, 2, {1, 2, 3, 4}, true);
  auto b = Tensor::matrix(2, 2, {5, 6, 7, 8}, true);
  auto loss = tape.sum(tape.matmul(a, b));
  tape.backward(loss);
  // g = ones(2,2): a.grad = g.b^T, b.grad = a^T.g
  CHECK(a->grad == std::vector<double>{11, 15, 11, 15});
  CHECK(b->grad == std::vector<double>{4, 4, 6, 6});
}

TEST_CASE("elementwise examples") {
  ad::Tape tape;
  CHECK(tape.exp(Tensor::make({1}, {0.0}))->values[0] == 1.0);

  auto r = tape.relu(Tensor::make({2}, {-1.0, 2.0}));
  CHECK(r->values == std::vector<double>{0.0, 2.0});

  auto x = Tensor::make({3}, {0.3, -1.2, 2.5});
  auto back = tape.log(tape.exp(x));
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(back->values[i] == doctest::Approx(x->values[i]).epsilon(1e-12));
}

TEST_CASE("log below clamp is a domain error; clamp region has zero gradient") {
  ad::Tape tape;
  CHECK_THROWS_AS(tape.log(Tensor::make({1}, {-0.5})), Error);

  auto x = Tensor::make({1}, {0.0}, true);
  auto l = tape.log(x);
  CHECK(l->values[0] == doctest::Approx(std::log(1e-12)));
  tape.backward(l);
  CHECK(x->grad[0] == 0.0);
}

TEST_CASE("backward on sum gives unit gradients") {
  ad::Tape tape;
  auto x = Tensor::make({3}, {1.0, 2.0, 3.0}, true);
  tape.backward(tape.sum(x));
  CHECK(x->grad == std::vector<double>{1, 1, 1});
}

TEST_CASE("backward of sum(x*x) at x=[2] is [4]") {
  ad::Tape tape;
  auto x = Tensor::make({1}, {2.0}, true);
  tape.backward(tape.sum(tape.mul(x, x)));
  CHECK(x->grad == std::vector<double>{4.0});
}

TEST_CASE("backward twice without zeroing doubles leaf gradients exactly") {
  ad::Tape tape;
  auto x = Tensor::make({2}, {0.5, -1.5}, true);
  auto loss = tape.sum(tape.mul(x, x));
  tape.backward(loss);
  const auto once = x->grad;
  tape.backward(loss);
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(x->grad[i] == 2.0 * once[i]);
}

TEST_CASE("non-scalar loss is a contract error") {
  ad::Tape tape;
  auto x = Tensor::make({2}, {1.0, 2.0}, true);
  auto y = tape.scale(x, 2.0);
  try {
    tape.backward(y);
    FAIL("expected contract error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Contract);
  }
}

TEST_CASE("gradients accumulate additively across multiple uses") {
  ad::Tape tape;
  auto x = Tensor::make({2}, {1.0, 2.0}, true);
  // loss = sum(x) + sum(x*x): dx = 1 + 2x
  auto loss = tape.add(tape.sum(x), tape.sum(tape.mul(x, x)));
  tape.backward(loss);
  CHECK(x->grad == std::vector<double>{3.0, 5.0});
}

TEST_CASE("sgd_step examples") {
  auto p = Tensor::make({1}, {1.0}, true);
  p->ensure_grad();
  p->grad[0] = 1.0;
  std::vector<TensorPtr> params{p};

  ad::sgd_step(params, 0.1);
  CHECK(p->values[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(p->grad[0] == 0.0);  // grads zeroed after the step

  p->grad[0] = 1.0;
  ad::sgd_step(params, 0.0);
  CHECK(p->values[0] == doctest::Approx(0.9).epsilon(1e-15));

  // two steps of lr=0.1 with the gradient re-pinned at 1 each time
  p->values[0] = 1.0;
  p->grad[0] = 1.0;
  ad::sgd_step(params, 0.1);
  p->grad[0] = 1.0;
  ad::sgd_step(params, 0.1);
  CHECK(p->values[0] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("sgd_step without gradients is a contract error") {
  auto p = Tensor::make({1}, {1.0}, true);
  std::vector<TensorPtr> params{p};
  CHECK_THROWS_AS(ad::sgd_step(params, 0.1), Error);
}

TEST_CASE("pick_per_row gathers and scatters") {
  ad::Tape tape;
  auto x = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}, true);
  auto picked = tape.pick_per_row(x, {2, 0});
  CHECK(picked->values == std::vector<double>{3, 4});
  tape.backward(tape.sum(picked));
  CHECK(x->grad == std::vector<double>{0, 0, 1, 1, 0, 0});
}

TEST_CASE("add_bias broadcasts over rows") {
  ad::Tape tape;
  auto x = Tensor::matrix(2, 2, {1, 2, 3, 4}, true);
  auto b = Tensor::make({2}, {10.0, 20.0}, true);
  auto y = tape.add_bias(x, b);
  CHECK(y->values == std::vector<double>{11, 22, 13, 24});
  tape.backward(tape.sum(y));
  CHECK(b->grad == std::vector<double>{2, 2});  // one per row
}

TEST_CASE("finite differences validate composite losses on 20 random instances") {
  util::Rng rng(20240401);
  for (int trial = 0; trial < 20; ++trial) {
    auto W1 = testsupport::random_tensor({3, 4}, rng);
    auto b1 = testsupport::random_tensor({4}, rng);
    auto W2 = testsupport::random_tensor({4, 2}, rng);
    auto x = testsupport::random_tensor({2, 3}, rng, -1.0, 1.0, false);
    auto w = std::vector<double>{0.7, -0.3, 0.2, 1.1};

    testsupport::LossBuilder build = [&](ad::Tape& tape) {
      auto h = tape.relu(tape.add_bias(tape.matmul(x, W1), b1));
      auto z = tape.matmul(h, W2);
      auto e = tape.exp(tape.scale(z, 0.5));
      auto l = tape.log(e);  // positive inputs by construction
      return tape.add(tape.weighted_sum(z, w), tape.sum(tape.mul(l, l)));
    };
    const double err = testsupport::max_rel_grad_err(build, {W1, b1, W2});
    CHECK(err < 1e-4);
  }
}

TEST_CASE("identical tape and inputs give bit-identical outputs and gradients") {
  auto run = [] {
    util::Rng rng(777);
    auto W = testsupport::random_tensor({4, 4}, rng);
    auto x = testsupport::random_tensor({2, 4}, rng, -2.0, 2.0, false);
    ad::Tape tape;
    auto y = tape.relu(tape.matmul(x, W));
    auto loss = tape.sum(tape.mul(y, y));
    tape.backward(loss);
    return std::make_pair(loss->values[0], W->grad);
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("values and gradients stay finite through forward and backward") {
  util::Rng rng(31337);
  for (int trial = 0; trial < 5; ++trial) {
    auto W = testsupport::random_tensor({5, 5}, rng, -3.0, 3.0);
    auto x = testsupport::random_tensor({3, 5}, rng, -3.0, 3.0, false);
    ad::Tape tape;
    auto h = tape.relu(tape.matmul(x, W));
    auto loss = tape.sum(tape.exp(tape.scale(h, 0.1)));
    tape.backward(loss);
    CHECK(W->all_finite());
    CHECK(h->all_finite());
    CHECK(loss->all_finite());
  }
}
