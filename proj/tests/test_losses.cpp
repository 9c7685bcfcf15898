#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "losses/losses.hpp"
#include "testsupport.hpp"
#include "util/error.hpp"

using namespace fedlt;
using losses::AdjustedSoftmaxParams;
using prior::PriorDistribution;

namespace {

AdjustedSoftmaxParams make_params(std::vector<double> prior, double T) {
  return AdjustedSoftmaxParams(PriorDistribution(std::move(prior)), T);
}

// Independent oracle: plain softmax cross-entropy computed with std math.
double reference_ce(const std::vector<double>& logits, std::size_t n, std::size_t C,
                    const std::vector<int>& labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double m = logits[i * C];
    for (std::size_t y = 1; y < C; ++y) m = std::max(m, logits[i * C + y]);
    double denom = 0.0;
    for (std::size_t y = 0; y < C; ++y) denom += std::exp(logits[i * C + y] - m);
    total += -(logits[i * C + labels[i]] - m - std::log(denom));
  }
  return total / static_cast<double>(n);
}

}  // namespace

TEST_CASE("adjusted softmax hand evaluations") {
  ad::Tape tape;

  auto uniform = make_params({1, 1, 1}, 2.7);
  auto equal_logits = ad::Tensor::matrix(1, 3, {0.4, 0.4, 0.4});
  auto p0 = losses::adjusted_softmax(tape, equal_logits, uniform);
  for (double v : p0->values) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  auto skew = make_params({3, 1}, 1.0);
  auto zeros = ad::Tensor::matrix(1, 2, {0.0, 0.0});
  auto p1 = losses::adjusted_softmax(tape, zeros, skew);
  CHECK(p1->values[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(p1->values[1] == doctest::Approx(0.25).epsilon(1e-12));

  auto flat = make_params({1, 1}, 1.0);
  auto ln2 = ad::Tensor::matrix(1, 2, {std::log(2.0), 0.0});
  auto p2 = losses::adjusted_softmax(tape, ln2, flat);
  CHECK(p2->values[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(p2->values[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("scaling the prior by a positive constant leaves the softmax unchanged") {
  util::Rng rng(404);
  for (double c : {1e-3, 3.0, 1e6}) {
    std::vector<double> base{0.5, 1.5, 0.2, 0.8};
    std::vector<double> scaled(base);
    for (double& v : scaled) v *= c;
    auto logits = testsupport::random_tensor({3, 4}, rng, -5, 5, false);
    ad::Tape tape;
    auto a = losses::adjusted_softmax(tape, logits, make_params(base, 1.5));
    auto b = losses::adjusted_softmax(tape, logits, make_params(scaled, 1.5));
    for (std::size_t i = 0; i < a->numel(); ++i)
      CHECK(a->values[i] == doctest::Approx(b->values[i]).epsilon(1e-12));
  }
}

TEST_CASE("softmax rows sum to 1 for logits in [-50, 50]") {
  util::Rng rng(7);
  auto params = make_params({5, 1, 0.3, 2}, 1.5);
  for (int trial = 0; trial < 10; ++trial) {
    auto logits = testsupport::random_tensor({4, 4}, rng, -50, 50, false);
    ad::Tape tape;
    auto p = losses::adjusted_softmax(tape, logits, params);
    for (std::size_t i = 0; i < 4; ++i) {
      double row = 0.0;
      for (std::size_t y = 0; y < 4; ++y) row += p->values[i * 4 + y];
      CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("non-finite logits are a numeric error") {
  ad::Tape tape;
  auto bad = ad::Tensor::matrix(1, 2, {std::numeric_limits<double>::infinity(), 0.0});
  try {
    losses::adjusted_softmax(tape, bad, make_params({1, 1}, 1.0));
    FAIL("expected numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Numeric);
  }
}

TEST_CASE("temperature must be positive") {
  CHECK_THROWS_AS(make_params({1, 1}, 0.0), Error);
  CHECK_THROWS_AS(make_params({1, 1}, -1.0), Error);
}

TEST_CASE("teacher mask examples") {
  std::vector<int> labels{0, 1};
  auto m1 = losses::teacher_mask({1, 0, 0, 1}, 2, 2, labels);
  CHECK(m1 == std::vector<bool>{true, true});

  std::vector<int> labels2{1, 1};
  auto m2 = losses::teacher_mask({0.5, 0.5, 0.5, 0.5}, 2, 2, labels2);  // tie -> class 0
  CHECK(m2 == std::vector<bool>{false, false});

  std::vector<int> labels3{0, 0};
  auto m3 = losses::teacher_mask({0.9, 0.1, 0.2, 0.8}, 2, 2, labels3);
  CHECK(m3 == std::vector<bool>{true, false});
}

TEST_CASE("asd loss is exactly zero when both views agree") {
  ad::Tape tape;
  auto logits = ad::Tensor::matrix(2, 3, {2, 1, 0, 0, 3, 1});
  std::vector<int> labels{0, 1};
  auto params = make_params({1, 1, 1}, 1.5);
  auto asd = losses::asd_loss(tape, logits, logits, labels, params);
  CHECK(asd->values[0] == 0.0);
}

TEST_CASE("asd loss with an empty teacher mask is a constant zero") {
  ad::Tape tape;
  // teacher confidently predicts class 1 while labels are 0: no teachers
  auto weak = ad::Tensor::matrix(2, 2, {-5, 5, -4, 4}, true);
  auto strong = ad::Tensor::matrix(2, 2, {1, 0, 0, 1}, true);
  std::vector<int> labels{0, 0};
  auto params = make_params({1, 1}, 1.0);
  auto asd = losses::asd_loss(tape, weak, strong, labels, params);
  CHECK(asd->values[0] == 0.0);
  CHECK_FALSE(asd->requires_grad);
}

TEST_CASE("asd loss hand KL evaluation") {
  // prior [3,1], T=1: weak logits [0,0] -> teacher [0.75, 0.25];
  // strong logits [0, ln 3] -> student [0.5, 0.5]; label 0 keeps the teacher.
  ad::Tape tape;
  auto weak = ad::Tensor::matrix(1, 2, {0.0, 0.0});
  auto strong = ad::Tensor::matrix(1, 2, {0.0, std::log(3.0)}, true);
  std::vector<int> labels{0};
  auto params = make_params({3, 1}, 1.0);
  auto asd = losses::asd_loss(tape, weak, strong, labels, params);
  const double expected = 0.75 * std::log(1.5) + 0.25 * std::log(0.5);
  CHECK(asd->values[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(asd->values[0] == doctest::Approx(0.13081).epsilon(1e-4));
}

TEST_CASE("asd loss is nonnegative and the teacher path carries no gradient") {
  util::Rng rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    auto weak = testsupport::random_tensor({4, 3}, rng, -5, 5, true);
    auto strong = testsupport::random_tensor({4, 3}, rng, -5, 5, true);
    auto labels = testsupport::random_labels(4, 3, rng);
    auto params = make_params({2.0, 1.0, 0.5}, 1.5);
    ad::Tape tape;
    auto asd = losses::asd_loss(tape, weak, strong, labels, params);
    CHECK(asd->values[0] >= -1e-12);
    if (asd->requires_grad) {
      tape.backward(asd);
      CHECK_FALSE(weak->has_grad());  // stop-gradient teacher
      bool strong_touched = false;
      for (double g : strong->grad) strong_touched |= g != 0.0;
      CHECK(strong_touched);
    }
  }
}

TEST_CASE("dla loss hand evaluations") {
  auto params = make_params({1, 1}, 1.0);
  std::vector<int> labels{0};

  {
    ad::Tape tape;
    auto sure = ad::Tensor::matrix(1, 2, {60.0, -60.0});
    auto dla = losses::dla_loss(tape, sure, sure, labels, params);
    CHECK(dla->values[0] == doctest::Approx(0.0).epsilon(1e-15));
  }
  {
    ad::Tape tape;
    auto even = ad::Tensor::matrix(1, 2, {0.0, 0.0});
    auto dla = losses::dla_loss(tape, even, even, labels, params);
    CHECK(dla->values[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("duplicating every row leaves dla unchanged") {
  util::Rng rng(55);
  auto weak = testsupport::random_tensor({3, 4}, rng, -2, 2, false);
  auto strong = testsupport::random_tensor({3, 4}, rng, -2, 2, false);
  auto labels = testsupport::random_labels(3, 4, rng);
  auto params = make_params({1, 2, 3, 4}, 1.5);

  std::vector<double> weak2(weak->values), strong2(strong->values);
  weak2.insert(weak2.end(), weak->values.begin(), weak->values.end());
  strong2.insert(strong2.end(), strong->values.begin(), strong->values.end());
  std::vector<int> labels2(labels);
  labels2.insert(labels2.end(), labels.begin(), labels.end());

  ad::Tape tape;
  auto base = losses::dla_loss(tape, weak, strong, labels, params);
  auto dup = losses::dla_loss(tape, ad::Tensor::matrix(6, 4, weak2),
                              ad::Tensor::matrix(6, 4, strong2), labels2, params);
  CHECK(dup->values[0] == doctest::Approx(base->values[0]).epsilon(1e-12));
}

TEST_CASE("with uniform prior and T=1, dla reduces to cross-entropy on both views") {
  util::Rng rng(66);
  auto weak = testsupport::random_tensor({4, 5}, rng, -3, 3, false);
  auto strong = testsupport::random_tensor({4, 5}, rng, -3, 3, false);
  auto labels = testsupport::random_labels(4, 5, rng);
  auto params = make_params({1, 1, 1, 1, 1}, 1.0);
  ad::Tape tape;
  auto dla = losses::dla_loss(tape, weak, strong, labels, params);
  const double expected = 0.5 * (reference_ce(weak->values, 4, 5, labels) +
                                 reference_ce(strong->values, 4, 5, labels));
  CHECK(dla->values[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("total loss composition") {
  util::Rng rng(77);
  auto weak = testsupport::random_tensor({3, 3}, rng, -2, 2, true);
  auto strong = testsupport::random_tensor({3, 3}, rng, -2, 2, true);
  auto labels = testsupport::random_labels(3, 3, rng);
  auto params = make_params({1.5, 1.0, 0.5}, 1.5);

  ad::Tape tape;
  auto dla = losses::dla_loss(tape, weak, strong, labels, params);
  auto asd = losses::asd_loss(tape, weak, strong, labels, params);

  auto t0 = losses::total_loss(tape, weak, strong, labels, params, 0.0);
  CHECK(t0->values[0] == dla->values[0]);

  auto t1 = losses::total_loss(tape, weak, strong, labels, params, 1.0);
  CHECK(t1->values[0] == doctest::Approx(dla->values[0] + asd->values[0]).epsilon(1e-12));

  auto t4 = losses::total_loss(tape, weak, strong, labels, params, 4.0);
  CHECK(t4->values[0] ==
        doctest::Approx(dla->values[0] + 4.0 * asd->values[0]).epsilon(1e-12));
}

TEST_CASE("total loss arithmetic from the hand examples") {
  // dla = ln 2 (uniform pair) and asd = 0.13081... (KL example) combine at
  // lambda = 4 to 1.21634.
  const double dla = std::log(2.0);
  const double asd = 0.75 * std::log(1.5) + 0.25 * std::log(0.5);
  CHECK(dla + 4.0 * asd == doctest::Approx(1.21634).epsilon(1e-4));
}

TEST_CASE("negative lambda is rejected") {
  ad::Tape tape;
  auto z = ad::Tensor::matrix(1, 2, {0.0, 0.0});
  std::vector<int> labels{0};
  CHECK_THROWS_AS(losses::total_loss(tape, z, z, labels, make_params({1, 1}, 1.0), -0.5), Error);
}

TEST_CASE("total loss gradients match finite differences through a model") {
  // The teacher is frozen at the base point: finite differences must probe the
  // stop-gradient function the optimizer actually sees.
  util::Rng rng(88);
  for (double lambda : {0.0, 1.0, 4.0}) {
    auto W = testsupport::random_tensor({4, 3}, rng);
    auto b = testsupport::random_tensor({3}, rng);
    auto xw = testsupport::random_tensor({5, 4}, rng, -1, 1, false);
    auto xs = testsupport::random_tensor({5, 4}, rng, -1, 1, false);
    auto labels = testsupport::random_labels(5, 3, rng);
    std::vector<double> p(3);
    for (double& v : p) v = rng.uniform(0.2, 2.0);
    auto params = make_params(p, 1.5);

    losses::TeacherView frozen;
    {
      ad::Tape tape;
      auto base_w = tape.add_bias(tape.matmul(xw, W), b);
      frozen = losses::make_teacher(*base_w, labels, params);
    }
    testsupport::LossBuilder build = [&](ad::Tape& tape) {
      auto logits_w = tape.add_bias(tape.matmul(xw, W), b);
      auto logits_s = tape.add_bias(tape.matmul(xs, W), b);
      auto dla = losses::dla_loss(tape, logits_w, logits_s, labels, params);
      if (lambda == 0.0) return dla;
      auto asd = losses::asd_loss_with_teacher(tape, frozen, logits_s, params);
      return tape.add(dla, tape.scale(asd, lambda));
    };
    CHECK(testsupport::max_rel_grad_err(build, {W, b}) < 1e-4);

    // At the base point the production total_loss agrees with the frozen form.
    ad::Tape tape;
    auto logits_w = tape.add_bias(tape.matmul(xw, W), b);
    auto logits_s = tape.add_bias(tape.matmul(xs, W), b);
    auto production = losses::total_loss(tape, logits_w, logits_s, labels, params, lambda);
    CHECK(production->values[0] == testsupport::eval_loss(build));
  }
}
