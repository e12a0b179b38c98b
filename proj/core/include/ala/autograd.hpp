// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Every value in the model is a 2-D matrix: token arrays are
// (tokens x channels), images are (channels x pixels), scalars are 1x1.
#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace ala {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace ag {

struct Node {
  Matrix value;
  Matrix grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad.resize(0, 0); }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double scalar() const { return node_->value(0, 0); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

Var constant(Matrix value);
Var leaf(Matrix value, bool requires_grad);

Var add(const Var& a, const Var& b);
/// a (n x c) + row (1 x c) broadcast over rows.
Var add_row(const Var& a, const Var& row);
Var mul(const Var& a, const Var& b);
/// a (n x c) scaled per row by col (n x 1).
Var mul_col(const Var& a, const Var& col);
Var scale(const Var& a, double s);
Var matmul(const Var& a, const Var& b);
/// x (n x in) times w^T where w is (out x in), plus optional bias (1 x out).
Var linear(const Var& x, const Var& w);
Var linear(const Var& x, const Var& w, const Var& bias);
Var transpose(const Var& a);

Var relu(const Var& a);
Var gelu(const Var& a);
Var sigmoid(const Var& a);
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var concat_rows(const Var& top, const Var& bottom);
Var concat_cols(std::span<const Var> parts);

/// 3x3 zero-padded neighbourhood gather on a (h*w x c) grid, row-major
/// cells. Output is (h*w x 9c), column block k = 3*(dy+1) + (dx+1).
Var im2col3x3(const Var& a, int height, int width);
/// 2x2 average pooling on a (h*w x c) grid; h and w must be even.
Var avg_pool2x2(const Var& a, int height, int width);
/// Column means: (n x c) -> (1 x c).
Var mean_rows(const Var& a);
/// Column divided by its own mean, x / mean(x); requires a positive mean.
/// An all-ones column maps to itself exactly.
Var normalize_mean(const Var& col, double power = 1.0);
/// Selects one element as a 1x1 value.
Var pick(const Var& a, Eigen::Index row, Eigen::Index col);
/// (c x h*w) image -> ((h/p)*(w/p) x c*p*p) patch rows, column order (c, py, px).
Var patchify(const Var& image, int channels, int height, int width, int patch);

/// Negative log-softmax of logits (1 x C) at class y, as a 1x1 value.
Var cross_entropy(const Var& logits, int y);

/// Accumulates d(root)/d(leaf) into every reachable leaf that requires grad.
/// root must be 1x1.
void backward(const Var& root);

}  // namespace ag
}  // namespace ala
