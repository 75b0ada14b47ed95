#include <gtest/gtest.h>

#include <cmath>

#include "dff/autograd.hpp"
#include "dff/tensor.hpp"
#include "test_support.hpp"

namespace dff {
namespace {

using testing::grad_check;
using testing::probe_loss;
using testing::random_tensor;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Tensor<double> eye({2, 2}, {1, 0, 0, 1});
  Tensor<double> m({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(matmul(eye, m), m);
}

TEST(Matmul, SelectorRowPicksFirstEntry) {
  Tensor<double> sel({1, 2}, {1, 0});
  Tensor<double> col({2, 1}, {3.5, -7.25});
  auto r = matmul(sel, col);
  ASSERT_EQ(r.shape(), (Shape{1, 1}));
  EXPECT_EQ(r[0], 3.5);
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(11);
  auto a = random_tensor({5, 7}, rng);
  auto b = random_tensor({7, 3}, rng);
  auto c = matmul(a, b);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < 7; ++k) acc += a(i, k) * b(k, j);
      EXPECT_NEAR(c(i, j), acc, 1e-12);
    }
  }
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  Tensor<double> a({2, 3}), b({4, 5});
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x5]"), std::string::npos) << msg;
  }
}

TEST(Matmul, TransposedVariantsAgree) {
  Rng rng(3);
  auto a = random_tensor({4, 6}, rng);
  auto b = random_tensor({4, 5}, rng);
  auto c = random_tensor({5, 6}, rng);
  Tensor<double> at({6, 4}), ct({6, 5});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 6; ++j) at(j, i) = a(i, j);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 6; ++j) ct(j, i) = c(i, j);
  EXPECT_LT(max_abs_diff(matmul_tn(a, b), matmul(at, b)), 1e-12);
  EXPECT_LT(max_abs_diff(matmul_nt(a, c), matmul(a, ct)), 1e-12);
}

TEST(Tensor, ProductOfShapeEqualsDataLength) {
  Tensor<double> t({3, 4, 5});
  EXPECT_EQ(t.size(), 60u);
  EXPECT_THROW(Tensor<double>({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor<double>({2, 0}), ShapeError);
}

TEST(ComplexTensor, PairRoundTrip) {
  Rng rng(5);
  auto pairs = random_tensor({3, 4, 2}, rng);
  auto c = ComplexTensor<double>::from_pairs(pairs);
  EXPECT_EQ(c.shape(), (Shape{3, 4}));
  EXPECT_EQ(c(1, 2).imag(), pairs(1, 2, 1));
  EXPECT_EQ(c.to_pairs(), pairs);
}

TEST(Backward, SumGivesAllOnes) {
  ParameterStore<double> store;
  Rng rng(1);
  auto& p = store.add("p", random_tensor({3, 4}, rng));
  Tape<double> tape;
  tape.backward(sum(tape.parameter(p)));
  for (double g : p.grad.data()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, HalfSquareGivesValue) {
  ParameterStore<double> store;
  Rng rng(2);
  auto& p = store.add("p", random_tensor({5}, rng));
  Tape<double> tape;
  auto v = tape.parameter(p);
  tape.backward(scale(sum(multiply(v, v)), 0.5));
  EXPECT_LT(max_abs_diff(p.grad, p.value), 1e-15);
}

TEST(Backward, NonScalarLossIsContractError) {
  ParameterStore<double> store;
  auto& p = store.add("p", Tensor<double>({2}));
  Tape<double> tape;
  EXPECT_THROW(tape.backward(tape.parameter(p)), ContractError);
}

TEST(Backward, UnreachableParameterUntouched) {
  ParameterStore<double> store;
  auto& a = store.add("a", Tensor<double>::full({2}, 1.0));
  auto& b = store.add("b", Tensor<double>::full({2}, 1.0));
  b.grad.fill(7.0);
  Tape<double> tape;
  tape.parameter(b);
  tape.backward(sum(tape.parameter(a)));
  EXPECT_EQ(b.grad, Tensor<double>::full({2}, 7.0));
}

TEST(Backward, RunningTwiceDoublesGradients) {
  ParameterStore<double> store;
  Rng rng(4);
  auto& w = store.add("w", random_tensor({3, 2}, rng));
  auto x = random_tensor({4, 3}, rng);
  auto run = [&] {
    Tape<double> tape;
    auto y = linear(tape.constant(x), tape.parameter(w));
    tape.backward(probe_loss(multiply(y, y), 9));
  };
  run();
  auto once = w.grad;
  run();
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(w.grad[i], 2.0 * once[i]);
}

TEST(Backward, ForwardDoesNotMutateInputs) {
  Rng rng(8);
  auto a = random_tensor({4, 3}, rng);
  auto b = random_tensor({3}, rng);
  auto a0 = a, b0 = b;
  Tape<double> tape;
  auto va = tape.constant(a), vb = tape.constant(b);
  add(va, vb);
  multiply(va, vb);
  softmax_axis1(reshape(va, {1, 4, 3}));
  EXPECT_EQ(a, a0);
  EXPECT_EQ(b, b0);
  EXPECT_EQ(va.value(), a0);
}

TEST(Tape, ParameterLeafIsShared) {
  ParameterStore<double> store;
  auto& p = store.add("p", Tensor<double>({2}));
  Tape<double> tape;
  EXPECT_EQ(tape.parameter(p).id(), tape.parameter(p).id());
}

TEST(Tape, DisabledModeSkipsRequiresGrad) {
  ParameterStore<double> store;
  auto& p = store.add("p", Tensor<double>::full({2}, 1.0));
  Tape<double> tape(GradMode::Disabled);
  auto y = sum(tape.parameter(p));
  EXPECT_EQ(y.value()[0], 2.0);
  EXPECT_THROW(tape.backward(y), ContractError);
}

class GenericOpGradients : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(GenericOpGradients, MatchFiniteDifferences) {
  const auto seed = GetParam();
  Rng rng(seed);
  ParameterStore<double> store;
  auto& a = store.add("a", random_tensor({3, 4}, rng));
  auto& b = store.add("b", random_tensor({4}, rng));
  auto& w = store.add("w", random_tensor({4, 5}, rng));
  auto& m = store.add("m", random_tensor({2, 3, 4}, rng));
  const std::vector<int> labels{1, 4, 0};
  auto loss = [&](Tape<double>& t) {
    auto va = t.parameter(a), vb = t.parameter(b);
    auto h = add(multiply(va, vb), va);
    auto logits = linear(h, t.parameter(w));
    auto ce = cross_entropy(logits, labels, 0.1);
    auto sm = softmax_axis1(t.parameter(m));
    auto extra = probe_loss(scale_rows(sm, {0.5, -2.0}), seed + 1);
    auto mm = matmul(reshape(va, {4, 3}), va);
    return add(add(ce, extra), scale(mean(mm), 0.3));
  };
  auto report = grad_check(loss, {&a, &b, &w, &m});
  EXPECT_LT(report.max_error, 1e-5);
}

INSTANTIATE_TEST_SUITE_P(Seeds, GenericOpGradients, ::testing::Values(1u, 2u, 3u));

TEST(CrossEntropy, UniformLogitsGiveLogK) {
  Tape<double> tape;
  auto logits = tape.constant(Tensor<double>({2, 4}));
  const std::vector<int> labels{0, 3};
  EXPECT_NEAR(cross_entropy(logits, labels).value()[0], std::log(4.0), 1e-15);
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(6);
  Tape<double> tape;
  auto s = softmax_axis1(tape.constant(random_tensor({2, 4, 3}, rng, 10.0)));
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t c = 0; c < 3; ++c) {
      double acc = 0;
      for (std::size_t i = 0; i < 4; ++i) acc += s.value()(b, i, c);
      EXPECT_NEAR(acc, 1.0, 1e-12);
    }
  }
}

}  // namespace
}  // namespace dff
