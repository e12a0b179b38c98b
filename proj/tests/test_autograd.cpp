// SPDX-License-Identifier: Apache-2.0
#include "ala/autograd.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

namespace ala {
namespace {

using testing::random_matrix;
using testing::relative_error;

// Reduces an op output to a scalar through fixed random weights and checks
// every input entry against central differences.
void check_op(const std::function<ag::Var(const std::vector<ag::Var>&)>& op, std::vector<Matrix> inputs,
              std::uint64_t seed, double tol = 1e-6) {
  Rng rng(seed);
  std::vector<ag::Var> leaves;
  for (auto& m : inputs) leaves.push_back(ag::leaf(m, true));
  const ag::Var out = op(leaves);
  const Matrix w = random_matrix(out.rows(), out.cols(), rng);
  const ag::Var loss = ag::mean_rows(ag::transpose(ag::mean_rows(ag::mul(out, ag::constant(w)))));
  ag::backward(loss);

  auto value = [&] {
    ag::NoGradGuard guard;
    return op(leaves).value().cwiseProduct(w).sum() / static_cast<double>(w.size());
  };
  for (const auto& leaf : leaves) {
    ASSERT_TRUE(leaf.has_grad());
    for (Eigen::Index i = 0; i < leaf.value().size(); ++i) {
      const double numeric = testing::central_difference(leaf, i, 1e-6, value);
      EXPECT_LT(relative_error(leaf.grad().data()[i], numeric), tol) << "entry " << i;
    }
  }
}

TEST(Autograd, LinearWithBias) {
  Rng rng(1);
  check_op([](const auto& v) { return ag::linear(v[0], v[1], v[2]); },
           {random_matrix(3, 4, rng), random_matrix(5, 4, rng), random_matrix(1, 5, rng)}, 2);
}

TEST(Autograd, MatmulTransposeAndScale) {
  Rng rng(3);
  check_op([](const auto& v) { return ag::scale(ag::matmul(v[0], ag::transpose(v[1])), 0.7); },
           {random_matrix(3, 2, rng), random_matrix(4, 2, rng)}, 4);
}

TEST(Autograd, SoftmaxAndLogSoftmax) {
  Rng rng(5);
  check_op([](const auto& v) { return ag::softmax_rows(v[0]); }, {random_matrix(3, 4, rng)}, 6);
  check_op([](const auto& v) { return ag::log_softmax_rows(v[0]); }, {random_matrix(3, 4, rng)}, 7);
}

TEST(Autograd, LayerNorm) {
  Rng rng(8);
  check_op([](const auto& v) { return ag::layer_norm(v[0], v[1], v[2]); },
           {random_matrix(3, 5, rng), random_matrix(1, 5, rng), random_matrix(1, 5, rng)}, 9);
}

TEST(Autograd, SmoothActivations) {
  Rng rng(10);
  check_op([](const auto& v) { return ag::gelu(v[0]); }, {random_matrix(4, 3, rng)}, 11);
  check_op([](const auto& v) { return ag::sigmoid(v[0]); }, {random_matrix(4, 3, rng)}, 12);
}

TEST(Autograd, ReluAwayFromKink) {
  Matrix x(2, 3);
  x << 0.5, -0.4, 1.2, -2.0, 0.3, -0.1;
  check_op([](const auto& v) { return ag::relu(v[0]); }, {x}, 13);
}

TEST(Autograd, GridOps) {
  Rng rng(14);
  check_op([](const auto& v) { return ag::im2col3x3(v[0], 4, 4); }, {random_matrix(16, 2, rng)}, 15);
  check_op([](const auto& v) { return ag::avg_pool2x2(v[0], 4, 4); }, {random_matrix(16, 3, rng)}, 16);
  check_op([](const auto& v) { return ag::patchify(v[0], 2, 4, 4, 2); }, {random_matrix(2, 16, rng)}, 17);
}

TEST(Autograd, RowAndColumnBroadcasts) {
  Rng rng(18);
  check_op([](const auto& v) { return ag::add_row(v[0], v[1]); }, {random_matrix(3, 2, rng), random_matrix(1, 2, rng)},
           19);
  check_op([](const auto& v) { return ag::mul_col(v[0], v[1]); }, {random_matrix(3, 2, rng), random_matrix(3, 1, rng)},
           20);
}

TEST(Autograd, SlicesAndConcat) {
  Rng rng(21);
  check_op(
      [](const auto& v) {
        const std::vector<ag::Var> parts{ag::slice_cols(v[0], 1, 2), v[1]};
        const std::vector<ag::Var> picks{ag::pick(v[1], 0, 0), ag::pick(v[0], 2, 3), ag::pick(v[1], 2, 0)};
        return ag::concat_rows(ag::slice_rows(ag::concat_cols(parts), 1, 2), ag::concat_cols(picks));
      },
      {random_matrix(3, 4, rng), random_matrix(3, 1, rng)}, 22, 1e-6);
}

TEST(Autograd, CrossEntropy) {
  Rng rng(23);
  check_op([](const auto& v) { return ag::cross_entropy(v[0], 2); }, {random_matrix(1, 4, rng)}, 24);
}

TEST(Autograd, NormalizeMeanGradient) {
  Matrix x(5, 1);
  x << 0.2, 0.9, 0.4, 0.05, 0.7;
  for (double p : {0.5, 1.0}) {
    check_op([p](const auto& v) { return ag::normalize_mean(v[0], p); }, {x}, 25);
  }
}

TEST(Autograd, NormalizeMeanOnOnesIsExactIdentity) {
  const Matrix ones = Matrix::Ones(64, 1);
  for (double p : {0.25, 0.5, 1.0}) {
    const ag::Var y = ag::normalize_mean(ag::constant(ones), p);
    EXPECT_TRUE((y.value().array() == 1.0).all());
  }
}

TEST(Autograd, NormalizeMeanRejectsNonPositiveMean) {
  EXPECT_ANY_THROW(ag::normalize_mean(ag::constant(Matrix::Zero(4, 1))));
}

TEST(Autograd, Im2colMatchesLoopGather) {
  Rng rng(26);
  const int h = 3, w = 4, c = 2;
  const Matrix x = random_matrix(h * w, c, rng);
  const Matrix cols = ag::im2col3x3(ag::constant(x), h, w).value();
  ASSERT_EQ(cols.cols(), 9 * c);
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int k = 3 * (dy + 1) + (dx + 1);
          const int sy = y + dy, sx = xx + dx;
          for (int ch = 0; ch < c; ++ch) {
            const double expected = (sy < 0 || sy >= h || sx < 0 || sx >= w) ? 0.0 : x(sy * w + sx, ch);
            EXPECT_EQ(cols(y * w + xx, k * c + ch), expected);
          }
        }
      }
    }
  }
}

TEST(Autograd, PatchifyColumnOrder) {
  Matrix img(2, 16);
  for (int i = 0; i < img.size(); ++i) img.data()[i] = i;
  const Matrix p = ag::patchify(ag::constant(img), 2, 4, 4, 2).value();
  ASSERT_EQ(p.rows(), 4);
  ASSERT_EQ(p.cols(), 8);
  // patch (1,0): rows 2..3, cols 0..1; column order (c, py, px)
  EXPECT_EQ(p(2, 0), img(0, 8));
  EXPECT_EQ(p(2, 1), img(0, 9));
  EXPECT_EQ(p(2, 2), img(0, 12));
  EXPECT_EQ(p(2, 4), img(1, 8));
}

TEST(Autograd, NoGradGuardSkipsGraph) {
  const ag::Var a = ag::leaf(Matrix::Ones(1, 1), true);
  ag::Var b;
  {
    ag::NoGradGuard guard;
    EXPECT_FALSE(ag::grad_enabled());
    b = ag::scale(a, 2.0);
  }
  EXPECT_TRUE(ag::grad_enabled());
  EXPECT_FALSE(b.requires_grad());
}

}  // namespace
}  // namespace ala
