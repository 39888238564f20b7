#include <gtest/gtest.h>

#include <cmath>

#include "notescore/errors.hpp"
#include "notescore/rng.hpp"
#include "notescore/tensor.hpp"
#include "support/gradient_cases.hpp"
#include "support/oracles.hpp"

using namespace notescore;
using testing_support::random_tensor;

namespace {

oracle::Matrix to_matrix(const Tensor& t) {
  oracle::Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

}  // namespace

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  const Tensor b({2, 2}, {3, 4, 5, 6});
  const Tensor c = matmul(eye, b);
  EXPECT_EQ(std::vector<double>(c.values().begin(), c.values().end()), (std::vector<double>{3, 4, 5, 6}));
}

TEST(Matmul, RowTimesColumn) {
  EXPECT_DOUBLE_EQ(matmul(Tensor::row({1, 2}), Tensor({2, 1}, {3, 4})).item(), 11.0);
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(1);
  const Tensor a = random_tensor(rng, 3, 4), b = random_tensor(rng, 4, 2);
  const auto ref = oracle::matmul(to_matrix(a), to_matrix(b));
  const Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(c.at(i, j), ref[i][j], 1e-12);
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
  }
}

TEST(Matmul, AssociativeOnRandomTriples) {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const Tensor a = random_tensor(rng, 3, 5), b = random_tensor(rng, 5, 4), c = random_tensor(rng, 4, 2);
    const Tensor l = matmul(matmul(a, b), c), r = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < l.size(); ++i) EXPECT_NEAR(l.values()[i], r.values()[i], 1e-9);
  }
}

TEST(Softmax, UniformRow) {
  const Tensor s = softmax_rows(Tensor::row({0, 0, 0}));
  for (double v : s.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeLogitDoesNotOverflow) {
  const Tensor s = softmax_rows(Tensor::row({1000, 0}));
  EXPECT_TRUE(s.all_finite());
  EXPECT_NEAR(s.at(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(s.at(0, 1), 0.0, 1e-15);
}

TEST(Softmax, MatchesDirectExponentiation) {
  const Tensor s = softmax_rows(Tensor::row({1, 2, 3}));
  const auto ref = oracle::softmax({1, 2, 3});
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(s.at(0, j), ref[j], 1e-15);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    const Tensor x = random_tensor(rng, 4, 7, -30.0, 30.0);
    const Tensor s = softmax_rows(x);
    const Tensor shifted = softmax_rows(add(x, Tensor::full({4, 7}, 12.5)));
    for (std::size_t i = 0; i < 4; ++i) {
      double total = 0;
      for (std::size_t j = 0; j < 7; ++j) {
        EXPECT_GE(s.at(i, j), 0.0);
        total += s.at(i, j);
        EXPECT_NEAR(s.at(i, j), shifted.at(i, j), 1e-12);
      }
      EXPECT_NEAR(total, 1.0, 1e-9);
    }
  }
}

TEST(Softmax, MaskedColumnsGetZeroWeight) {
  const std::vector<std::uint8_t> masked{0, 1, 0};
  const Tensor s = softmax_rows(Tensor::row({1, 50, 1}), masked);
  EXPECT_EQ(s.at(0, 1), 0.0);
  EXPECT_NEAR(s.at(0, 0), 0.5, 1e-15);
  const std::vector<std::uint8_t> all{1, 1, 1};
  EXPECT_THROW(softmax_rows(Tensor::row({1, 2, 3}), all), ContractError);
}

TEST(Backward, SumGivesOnes) {
  Tensor x = Tensor::full({2, 3}, 0.5, true);
  Tape tape;
  TapeScope scope(tape);
  tape.backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareGivesTwoX) {
  Tensor x = Tensor::row({1, 2, 3}, true);
  Tape tape;
  TapeScope scope(tape);
  tape.backward(sum(mul(x, x)));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{2, 4, 6}));
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor x = Tensor::row({1, 2}, true);
  Tape tape;
  TapeScope scope(tape);
  const Tensor y = scale(x, 2.0);
  EXPECT_THROW(tape.backward(y), ContractError);
}

TEST(Backward, TapeVisitsEachEntryOnceInReverse) {
  Tensor x = Tensor::row({1, 2}, true);
  Tape tape;
  TapeScope scope(tape);
  const Tensor loss = sum(sigmoid(scale(x, 3.0)));
  EXPECT_EQ(tape.ops(), (std::vector<std::string_view>{"scale", "sigmoid", "sum"}));
  tape.backward(loss);
  EXPECT_EQ(tape.size(), 0u);
  // One visit per entry: d/dx sum(sigmoid(3x)) = 3 s (1 - s).
  for (std::size_t i = 0; i < 2; ++i) {
    const double s = oracle::sigmoid(3.0 * x.values()[i]);
    EXPECT_NEAR(x.grad()[i], 3.0 * s * (1 - s), 1e-15);
  }
}

TEST(Backward, NothingRecordedWithoutGradients) {
  Tape tape;
  TapeScope scope(tape);
  const Tensor y = add(Tensor::row({1}), Tensor::row({2}));
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_FALSE(y.requires_grad());
}

class PrimitiveGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(PrimitiveGradient, MatchesCentralDifferences) {
  auto cases = testing_support::primitive_cases(42);
  ASSERT_LT(GetParam(), cases.size());
  auto& c = cases[GetParam()];
  const auto r = testing_support::check_gradients(c.loss, c.params);
  EXPECT_GT(r.checked, 0u);
  EXPECT_LT(r.max_rel_error, 1e-4) << c.name << " worst " << r.worst;
}

INSTANTIATE_TEST_SUITE_P(AllPrimitives, PrimitiveGradient,
                         ::testing::Range<std::size_t>(0, testing_support::primitive_cases(42).size()),
                         [](const auto& info) { return testing_support::primitive_cases(42)[info.param].name; });

TEST(Tensor, ForwardIsDeterministic) {
  auto run = [] {
    Rng rng(9);
    const Tensor a = random_tensor(rng, 6, 6), b = random_tensor(rng, 6, 6);
    const Tensor out = layer_norm(softmax_rows(matmul(a, b)), Tensor::full({1, 6}, 1.0), Tensor::zeros({1, 6}));
    return std::vector<double>(out.values().begin(), out.values().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(Tensor, FiniteCheckFlagsNaN) {
  Tensor t = Tensor::row({1.0, 2.0});
  EXPECT_TRUE(t.all_finite());
  t.mutable_values()[1] = std::nan("");
  EXPECT_FALSE(t.all_finite());
}

TEST(Tensor, AddRowRequiresMatchingWidth) {
  EXPECT_THROW(add_row(Tensor::zeros({2, 3}), Tensor::zeros({1, 2})), ShapeError);
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
}
