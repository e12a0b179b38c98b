// SPDX-License-Identifier: Apache-2.0
#include "ala/autograd.hpp"

#include "ala/errors.hpp"

#include <cmath>
#include <unordered_set>

namespace ala::ag {

namespace {

thread_local bool g_grad_enabled = true;

// Builds the output node; parents and backward are only recorded when a
// gradient can flow.
Var make_result(Matrix value, std::vector<Var> parents, std::function<void(Node&)> bw) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(bw);
  }
  return Var(std::move(node));
}

void check(bool ok, const char* what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Var constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var leaf(Matrix value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

Var add(const Var& a, const Var& b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  return make_result(a.value() + b.value(), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->accumulate(self.grad);
    }
  });
}

Var add_row(const Var& a, const Var& row) {
  check(row.rows() == 1 && row.cols() == a.cols(), "add_row: shape mismatch");
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return make_result(std::move(out), {a, row}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate(self.grad.colwise().sum());
  });
}

Var mul(const Var& a, const Var& b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  Matrix out = a.value().cwiseProduct(b.value());
  return make_result(std::move(out), {a, b}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) pa.accumulate(self.grad.cwiseProduct(pb.value));
    if (pb.requires_grad) pb.accumulate(self.grad.cwiseProduct(pa.value));
  });
}

Var mul_col(const Var& a, const Var& col) {
  check(col.cols() == 1 && col.rows() == a.rows(), "mul_col: shape mismatch");
  Matrix out = a.value().array().colwise() * col.value().col(0).array();
  return make_result(std::move(out), {a, col}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pc = *self.parents[1];
    if (pa.requires_grad) {
      Matrix g = self.grad.array().colwise() * pc.value.col(0).array();
      pa.accumulate(g);
    }
    if (pc.requires_grad) {
      Matrix g = self.grad.cwiseProduct(pa.value).rowwise().sum();
      pc.accumulate(g);
    }
  });
}

Var scale(const Var& a, double s) {
  return make_result(a.value() * s, {a}, [s](Node& self) {
    self.parents[0]->accumulate(self.grad * s);
  });
}

Var matmul(const Var& a, const Var& b) {
  check(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Matrix out = a.value() * b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) pa.accumulate(self.grad * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate(pa.value.transpose() * self.grad);
  });
}

Var linear(const Var& x, const Var& w) {
  check(x.cols() == w.cols(), "linear: input width does not match weight");
  Matrix out = x.value() * w.value().transpose();
  return make_result(std::move(out), {x, w}, [](Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    if (px.requires_grad) px.accumulate(self.grad * pw.value);
    if (pw.requires_grad) pw.accumulate(self.grad.transpose() * px.value);
  });
}

Var linear(const Var& x, const Var& w, const Var& bias) {
  check(x.cols() == w.cols(), "linear: input width does not match weight");
  check(bias.rows() == 1 && bias.cols() == w.rows(), "linear: bias shape mismatch");
  Matrix out = x.value() * w.value().transpose();
  out.rowwise() += bias.value().row(0);
  return make_result(std::move(out), {x, w, bias}, [](Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    auto& pb = *self.parents[2];
    if (px.requires_grad) px.accumulate(self.grad * pw.value);
    if (pw.requires_grad) pw.accumulate(self.grad.transpose() * px.value);
    if (pb.requires_grad) pb.accumulate(self.grad.colwise().sum());
  });
}

Var transpose(const Var& a) {
  Matrix out = a.value().transpose();
  return make_result(std::move(out), {a}, [](Node& self) {
    self.parents[0]->accumulate(self.grad.transpose());
  });
}

Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return make_result(std::move(out), {a}, [](Node& self) {
    auto& p = *self.parents[0];
    Matrix g = (p.value.array() > 0.0).select(self.grad, 0.0);
    p.accumulate(g);
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  });
  return make_result(std::move(out), {a}, [](Node& self) {
    auto& p = *self.parents[0];
    Matrix d = p.value.unaryExpr([](double x) {
      const double u = kGeluC * (x + kGeluA * x * x * x);
      const double t = std::tanh(u);
      const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
      return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
    });
    p.accumulate(self.grad.cwiseProduct(d));
  });
}

Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  return make_result(std::move(out), {a}, [](Node& self) {
    const Matrix& y = self.value;
    Matrix g = self.grad.array() * y.array() * (1.0 - y.array());
    self.parents[0]->accumulate(g);
  });
}

Var softmax_rows(const Var& a) {
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return make_result(std::move(out), {a}, [](Node& self) {
    const Matrix& y = self.value;
    Matrix g(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = self.grad.row(r).dot(y.row(r));
      g.row(r) = y.row(r).array() * (self.grad.row(r).array() - dot);
    }
    self.parents[0]->accumulate(g);
  });
}

Var log_softmax_rows(const Var& a) {
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    const double lse = m + std::log((out.row(r).array() - m).exp().sum());
    out.row(r).array() -= lse;
  }
  return make_result(std::move(out), {a}, [](Node& self) {
    const Matrix& y = self.value;
    Matrix g(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double total = self.grad.row(r).sum();
      g.row(r) = self.grad.row(r).array() - y.row(r).array().exp() * total;
    }
    self.parents[0]->accumulate(g);
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index n = x.rows();
  const Eigen::Index c = x.cols();
  check(gamma.rows() == 1 && gamma.cols() == c && beta.rows() == 1 && beta.cols() == c,
        "layer_norm: affine shape mismatch");
  auto xhat = std::make_shared<Matrix>(n, c);
  auto inv_std = std::make_shared<Eigen::VectorXd>(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = x.value().row(r).mean();
    const double var = (x.value().row(r).array() - mu).square().mean();
    (*inv_std)(r) = 1.0 / std::sqrt(var + eps);
    xhat->row(r) = (x.value().row(r).array() - mu) * (*inv_std)(r);
  }
  Matrix out = xhat->array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return make_result(std::move(out), {x, gamma, beta}, [xhat, inv_std](Node& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    auto& pb = *self.parents[2];
    const Matrix& g = self.grad;
    if (px.requires_grad) {
      Matrix gxhat = g.array().rowwise() * pg.value.row(0).array();
      Matrix gx(g.rows(), g.cols());
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        const double m1 = gxhat.row(r).mean();
        const double m2 = gxhat.row(r).dot(xhat->row(r)) / static_cast<double>(g.cols());
        gx.row(r) = (*inv_std)(r) * (gxhat.row(r).array() - m1 - xhat->row(r).array() * m2);
      }
      px.accumulate(gx);
    }
    if (pg.requires_grad) pg.accumulate(g.cwiseProduct(*xhat).colwise().sum());
    if (pb.requires_grad) pb.accumulate(g.colwise().sum());
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  check(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows: out of range");
  Matrix out = a.value().middleRows(start, count);
  return make_result(std::move(out), {a}, [start, count](Node& self) {
    auto& p = *self.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g.middleRows(start, count) = self.grad;
    p.accumulate(g);
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  check(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols: out of range");
  Matrix out = a.value().middleCols(start, count);
  return make_result(std::move(out), {a}, [start, count](Node& self) {
    auto& p = *self.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g.middleCols(start, count) = self.grad;
    p.accumulate(g);
  });
}

Var concat_rows(const Var& top, const Var& bottom) {
  check(top.cols() == bottom.cols(), "concat_rows: width mismatch");
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top.value();
  out.bottomRows(bottom.rows()) = bottom.value();
  const Eigen::Index split = top.rows();
  return make_result(std::move(out), {top, bottom}, [split](Node& self) {
    auto& pt = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pt.requires_grad) pt.accumulate(self.grad.topRows(split));
    if (pb.requires_grad) pb.accumulate(self.grad.bottomRows(self.grad.rows() - split));
  });
}

Var concat_cols(std::span<const Var> parts) {
  check(!parts.empty(), "concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    check(p.rows() == rows, "concat_cols: height mismatch");
    total += p.cols();
  }
  Matrix out(rows, total);
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    offsets.push_back(off);
    off += p.cols();
  }
  return make_result(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                     [offsets](Node& self) {
                       for (std::size_t i = 0; i < self.parents.size(); ++i) {
                         auto& p = *self.parents[i];
                         if (p.requires_grad) {
                           p.accumulate(self.grad.middleCols(offsets[i], p.value.cols()));
                         }
                       }
                     });
}

Var im2col3x3(const Var& a, int height, int width) {
  check(a.rows() == static_cast<Eigen::Index>(height) * width, "im2col3x3: grid mismatch");
  const Eigen::Index c = a.cols();
  Matrix out = Matrix::Zero(a.rows(), 9 * c);
  const Matrix& in = a.value();
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Index row = static_cast<Eigen::Index>(y) * width + x;
      for (int dy = -1; dy <= 1; ++dy) {
        const int sy = y + dy;
        if (sy < 0 || sy >= height) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          const int sx = x + dx;
          if (sx < 0 || sx >= width) continue;
          const int k = 3 * (dy + 1) + (dx + 1);
          out.row(row).segment(k * c, c) = in.row(static_cast<Eigen::Index>(sy) * width + sx);
        }
      }
    }
  }
  return make_result(std::move(out), {a}, [height, width, c](Node& self) {
    auto& p = *self.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), c);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const Eigen::Index row = static_cast<Eigen::Index>(y) * width + x;
        for (int dy = -1; dy <= 1; ++dy) {
          const int sy = y + dy;
          if (sy < 0 || sy >= height) continue;
          for (int dx = -1; dx <= 1; ++dx) {
            const int sx = x + dx;
            if (sx < 0 || sx >= width) continue;
            const int k = 3 * (dy + 1) + (dx + 1);
            g.row(static_cast<Eigen::Index>(sy) * width + sx) += self.grad.row(row).segment(k * c, c);
          }
        }
      }
    }
    p.accumulate(g);
  });
}

Var avg_pool2x2(const Var& a, int height, int width) {
  check(a.rows() == static_cast<Eigen::Index>(height) * width, "avg_pool2x2: grid mismatch");
  check(height % 2 == 0 && width % 2 == 0, "avg_pool2x2: grid must have even sides");
  const int oh = height / 2;
  const int ow = width / 2;
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(oh) * ow, a.cols());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      out.row((y / 2) * ow + x / 2) += 0.25 * a.value().row(static_cast<Eigen::Index>(y) * width + x);
    }
  }
  return make_result(std::move(out), {a}, [height, width, ow](Node& self) {
    auto& p = *self.parents[0];
    Matrix g(p.value.rows(), p.value.cols());
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        g.row(static_cast<Eigen::Index>(y) * width + x) = 0.25 * self.grad.row((y / 2) * ow + x / 2);
      }
    }
    p.accumulate(g);
  });
}

Var mean_rows(const Var& a) {
  Matrix out = a.value().colwise().mean();
  return make_result(std::move(out), {a}, [](Node& self) {
    auto& p = *self.parents[0];
    const double inv = 1.0 / static_cast<double>(p.value.rows());
    Matrix g = self.grad.replicate(p.value.rows(), 1) * inv;
    p.accumulate(g);
  });
}

Var normalize_mean(const Var& col, double power) {
  check(col.cols() == 1 && col.rows() > 0, "normalize_mean: expected a non-empty column");
  const double m = col.value().mean();
  check(m > 0.0 && std::isfinite(m), "normalize_mean: mean must be positive and finite");
  const double d = std::pow(m, power);
  Matrix out = col.value() / d;
  return make_result(std::move(out), {col}, [m, d, power](Node& self) {
    auto& p = *self.parents[0];
    const double n = static_cast<double>(p.value.rows());
    const double dot = self.grad.cwiseProduct(p.value).sum();
    Matrix g = (self.grad.array() / d - power * dot / (d * m * n)).matrix();
    p.accumulate(g);
  });
}

Var pick(const Var& a, Eigen::Index row, Eigen::Index col) {
  check(row >= 0 && row < a.rows() && col >= 0 && col < a.cols(), "pick: out of range");
  Matrix out(1, 1);
  out(0, 0) = a.value()(row, col);
  return make_result(std::move(out), {a}, [row, col](Node& self) {
    auto& p = *self.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g(row, col) = self.grad(0, 0);
    p.accumulate(g);
  });
}

Var patchify(const Var& image, int channels, int height, int width, int patch) {
  check(image.rows() == channels && image.cols() == static_cast<Eigen::Index>(height) * width,
        "patchify: image shape mismatch");
  check(patch > 0 && height % patch == 0 && width % patch == 0,
        "patchify: image size not divisible by patch size");
  const int gh = height / patch;
  const int gw = width / patch;
  const int pp = patch * patch;
  // index[row * cols + col] = source pixel offset within the (c x hw) image
  auto index = std::make_shared<std::vector<Eigen::Index>>();
  index->reserve(static_cast<std::size_t>(gh) * gw * channels * pp);
  Matrix out(static_cast<Eigen::Index>(gh) * gw, static_cast<Eigen::Index>(channels) * pp);
  const Matrix& in = image.value();
  for (int py = 0; py < gh; ++py) {
    for (int px = 0; px < gw; ++px) {
      const Eigen::Index row = static_cast<Eigen::Index>(py) * gw + px;
      Eigen::Index col = 0;
      for (int c = 0; c < channels; ++c) {
        for (int y = 0; y < patch; ++y) {
          for (int x = 0; x < patch; ++x) {
            const Eigen::Index pix = static_cast<Eigen::Index>(py * patch + y) * width + (px * patch + x);
            out(row, col++) = in(c, pix);
            index->push_back(static_cast<Eigen::Index>(c) * height * width + pix);
          }
        }
      }
    }
  }
  return make_result(std::move(out), {image}, [index](Node& self) {
    auto& p = *self.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    const Eigen::Index cols = self.grad.cols();
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(index->size()); ++i) {
      g.data()[(*index)[i]] += self.grad(i / cols, i % cols);
    }
    p.accumulate(g);
  });
}

Var cross_entropy(const Var& logits, int y) {
  check(logits.rows() == 1 && y >= 0 && y < logits.cols(), "cross_entropy: bad class index");
  return scale(pick(log_softmax_rows(logits), 0, y), -1.0);
}

void backward(const Var& root) {
  check(root.rows() == 1 && root.cols() == 1, "backward: root must be a scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
  // Free intermediate gradients; leaves keep theirs.
  for (Node* n : order) {
    if (n->backward) n->grad.resize(0, 0);
  }
}

}  // namespace ag
