#include "dashkin/autograd.hpp"

#include "dashkin/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

namespace dashkin::nn {

namespace detail {

Matrix& Node::ensure_grad() {
  if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
    grad = Matrix::Zero(value.rows(), value.cols());
  }
  return grad;
}

void Node::accumulate(const Matrix& g) {
  if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
    grad = g;
  } else {
    grad += g;
  }
}

}  // namespace detail

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

Var make_result(Matrix value, std::initializer_list<Var> inputs,
                std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool any = false;
  for (const auto& in : inputs) {
    any = any || in.requires_grad();
  }
  if (any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) {
      node->inputs.push_back(in.node());
    }
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

Var make_result_n(Matrix value, std::span<const Var> inputs,
                  std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool any = std::any_of(inputs.begin(), inputs.end(),
                         [](const Var& v) { return v.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    for (const auto& in : inputs) {
      node->inputs.push_back(in.node());
    }
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

void push(const NodePtr& target, const Matrix& g) {
  if (target->requires_grad) {
    target->accumulate(g);
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
}

std::vector<double> resolve_weights(std::span<const double> weights, Index n) {
  if (weights.empty()) {
    return std::vector<double>(static_cast<std::size_t>(n), 1.0);
  }
  if (static_cast<Index>(weights.size()) != n) {
    throw DimensionError("loss weights length does not match prediction rows");
  }
  return {weights.begin(), weights.end()};
}

}  // namespace

Var Var::constant(Matrix value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::parameter(Matrix value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

double Var::item() const {
  if (rows() != 1 || cols() != 1) {
    throw DimensionError("item() on a non-scalar");
  }
  return node_->value(0, 0);
}

void Var::zero_grad() {
  if (node_) {
    node_->grad.resize(0, 0);
  }
}

void backward(const Var& loss) {
  if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1) {
    throw DimensionError("backward() expects a 1x1 loss");
  }
  if (!loss.requires_grad()) {
    return;
  }
  // Iterative post-order DFS for topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && node->grad.size() != 0) {
      node->backward_fn(*node);
    }
  }
  // Break the chain so long recurrent graphs are not torn down recursively.
  for (Node* node : order) {
    if (!node->inputs.empty()) {
      node->inputs.clear();
      node->backward_fn = nullptr;
    }
  }
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + ")");
  }
  Matrix out = a.value() * b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const auto& na = self.inputs[0];
    const auto& nb = self.inputs[1];
    if (na->requires_grad) {
      na->accumulate(self.grad * nb->value.transpose());
    }
    if (nb->requires_grad) {
      nb->accumulate(na->value.transpose() * self.grad);
    }
  });
}

Var matmul_transposed(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_transposed: column counts differ");
  }
  Matrix out = a.value() * b.value().transpose();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const auto& na = self.inputs[0];
    const auto& nb = self.inputs[1];
    if (na->requires_grad) {
      na->accumulate(self.grad * nb->value);
    }
    if (nb->requires_grad) {
      nb->accumulate(self.grad.transpose() * na->value);
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Matrix out = a.value() + b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    push(self.inputs[0], self.grad);
    push(self.inputs[1], self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a.value() - b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    push(self.inputs[0], self.grad);
    if (self.inputs[1]->requires_grad) {
      self.inputs[1]->accumulate(-self.grad);
    }
  });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a.value().cwiseProduct(b.value());
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const auto& na = self.inputs[0];
    const auto& nb = self.inputs[1];
    if (na->requires_grad) {
      na->accumulate(self.grad.cwiseProduct(nb->value));
    }
    if (nb->requires_grad) {
      nb->accumulate(self.grad.cwiseProduct(na->value));
    }
  });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row: row must be 1 x cols(a)");
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make_result(std::move(out), {a, row}, [](Node& self) {
    push(self.inputs[0], self.grad);
    if (self.inputs[1]->requires_grad) {
      self.inputs[1]->accumulate(self.grad.colwise().sum());
    }
  });
}

Var add_col(const Var& a, const Var& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) {
    throw DimensionError("add_col: column must be rows(a) x 1");
  }
  Matrix out = a.value().colwise() + col.value().col(0);
  return make_result(std::move(out), {a, col}, [](Node& self) {
    push(self.inputs[0], self.grad);
    if (self.inputs[1]->requires_grad) {
      self.inputs[1]->accumulate(self.grad.rowwise().sum());
    }
  });
}

Var scale(const Var& a, double s) {
  Matrix out = a.value() * s;
  return make_result(std::move(out), {a}, [s](Node& self) { push(self.inputs[0], self.grad * s); });
}

Var add_scalar(const Var& a, double s) {
  Matrix out = a.value().array() + s;
  return make_result(std::move(out), {a}, [](Node& self) { push(self.inputs[0], self.grad); });
}

Var one_minus(const Var& a) {
  Matrix out = 1.0 - a.value().array();
  return make_result(std::move(out), {a}, [](Node& self) {
    if (self.inputs[0]->requires_grad) {
      self.inputs[0]->accumulate(-self.grad);
    }
  });
}

Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return make_result(std::move(out), {a}, [](Node& self) {
    const auto& in = self.inputs[0];
    if (in->requires_grad) {
      Matrix g = (in->value.array() > 0.0).select(self.grad, 0.0);
      in->accumulate(g);
    }
  });
}

Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) {
    if (x >= 0) {
      return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return make_result(std::move(out), {a}, [](Node& self) {
    const auto& y = self.value.array();
    push(self.inputs[0], (self.grad.array() * y * (1.0 - y)).matrix());
  });
}

Var tanh(const Var& a) {
  Matrix out = a.value().array().tanh();
  return make_result(std::move(out), {a}, [](Node& self) {
    const auto& y = self.value.array();
    push(self.inputs[0], (self.grad.array() * (1.0 - y.square())).matrix());
  });
}

Var softmax_rows(const Var& a) {
  Matrix out = a.value();
  for (Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
  return make_result(std::move(out), {a}, [](Node& self) {
    const Matrix& y = self.value;
    Matrix g(y.rows(), y.cols());
    for (Index r = 0; r < y.rows(); ++r) {
      const double dot = self.grad.row(r).dot(y.row(r));
      g.row(r) = (y.row(r).array() * (self.grad.row(r).array() - dot)).matrix();
    }
    push(self.inputs[0], g);
  });
}

Var transpose(const Var& a) {
  Matrix out = a.value().transpose();
  return make_result(std::move(out), {a},
                     [](Node& self) { push(self.inputs[0], self.grad.transpose()); });
}

Var slice_rows(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw DimensionError("slice_rows out of range");
  }
  Matrix out = a.value().middleRows(start, count);
  return make_result(std::move(out), {a}, [start, count](Node& self) {
    const auto& in = self.inputs[0];
    if (in->requires_grad) {
      in->ensure_grad().middleRows(start, count) += self.grad;
    }
  });
}

Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw DimensionError("slice_cols out of range");
  }
  Matrix out = a.value().middleCols(start, count);
  return make_result(std::move(out), {a}, [start, count](Node& self) {
    const auto& in = self.inputs[0];
    if (in->requires_grad) {
      in->ensure_grad().middleCols(start, count) += self.grad;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) {
    throw DimensionError("concat_rows of nothing");
  }
  Index rows = 0;
  const Index cols = parts.front().cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: column counts differ");
    }
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return make_result_n(std::move(out), parts, [](Node& self) {
    Index offset = 0;
    for (const auto& in : self.inputs) {
      const Index r = in->value.rows();
      if (in->requires_grad) {
        in->accumulate(self.grad.middleRows(offset, r));
      }
      offset += r;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) {
    throw DimensionError("concat_cols of nothing");
  }
  Index cols = 0;
  const Index rows = parts.front().rows();
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row counts differ");
    }
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_result_n(std::move(out), parts, [](Node& self) {
    Index offset = 0;
    for (const auto& in : self.inputs) {
      const Index c = in->value.cols();
      if (in->requires_grad) {
        in->accumulate(self.grad.middleCols(offset, c));
      }
      offset += c;
    }
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_result(std::move(out), {a}, [](Node& self) {
    const auto& in = self.inputs[0];
    push(in, Matrix::Constant(in->value.rows(), in->value.cols(), self.grad(0, 0)));
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var row_means(const Var& a) {
  const double n = static_cast<double>(a.cols());
  Matrix out = a.value().rowwise().mean();
  return make_result(std::move(out), {a}, [n](Node& self) {
    const auto& in = self.inputs[0];
    if (in->requires_grad) {
      Matrix g = (self.grad / n).replicate(1, in->value.cols());
      in->accumulate(g);
    }
  });
}

Var layer_norm_rows(const Var& a, const Var& gamma, const Var& beta, double eps) {
  const Index n = a.cols();
  if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n) {
    throw DimensionError("layer_norm_rows: gamma/beta must be 1 x cols");
  }
  Matrix normalized(a.rows(), n);
  Eigen::VectorXd inv_std(a.rows());
  for (Index r = 0; r < a.rows(); ++r) {
    const auto row = a.value().row(r).array();
    const double mu = row.mean();
    const double var = (row - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    normalized.row(r) = ((row - mu) * inv_std(r)).matrix();
  }
  Matrix out = (normalized.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  return make_result(std::move(out), {a, gamma, beta},
                     [normalized = std::move(normalized), inv_std](Node& self) {
                       const auto& na = self.inputs[0];
                       const auto& ng = self.inputs[1];
                       const auto& nb = self.inputs[2];
                       if (ng->requires_grad) {
                         ng->accumulate(self.grad.cwiseProduct(normalized).colwise().sum());
                       }
                       if (nb->requires_grad) {
                         nb->accumulate(self.grad.colwise().sum());
                       }
                       if (na->requires_grad) {
                         const Matrix dxhat =
                             (self.grad.array().rowwise() * ng->value.row(0).array()).matrix();
                         Matrix g(dxhat.rows(), dxhat.cols());
                         for (Index r = 0; r < dxhat.rows(); ++r) {
                           const double m1 = dxhat.row(r).mean();
                           const double m2 = dxhat.row(r).dot(normalized.row(r)) /
                                             static_cast<double>(dxhat.cols());
                           g.row(r) = ((dxhat.row(r).array() - m1 -
                                        normalized.row(r).array() * m2) *
                                       inv_std(r))
                                          .matrix();
                         }
                         na->accumulate(g);
                       }
                     });
}

namespace {

Matrix im2col(const Matrix& input, const ConvGeometry& g) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const int k = g.kernel;
  Matrix col = Matrix::Zero(static_cast<Index>(g.in_channels) * k * k,
                            static_cast<Index>(oh) * ow);
  for (int c = 0; c < g.in_channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Index row = (static_cast<Index>(c) * k + ky) * k + kx;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.height) {
            continue;
          }
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            if (ix < 0 || ix >= g.width) {
              continue;
            }
            col(row, static_cast<Index>(oy) * ow + ox) =
                input(c, static_cast<Index>(iy) * g.width + ix);
          }
        }
      }
    }
  }
  return col;
}

Matrix col2im(const Matrix& col, const ConvGeometry& g) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const int k = g.kernel;
  Matrix image = Matrix::Zero(g.in_channels, static_cast<Index>(g.height) * g.width);
  for (int c = 0; c < g.in_channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Index row = (static_cast<Index>(c) * k + ky) * k + kx;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.height) {
            continue;
          }
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            if (ix < 0 || ix >= g.width) {
              continue;
            }
            image(c, static_cast<Index>(iy) * g.width + ix) +=
                col(row, static_cast<Index>(oy) * ow + ox);
          }
        }
      }
    }
  }
  return image;
}

}  // namespace

Var conv2d(const Var& input, const Var& weight, const Var& bias, const ConvGeometry& geom) {
  if (input.rows() != geom.in_channels ||
      input.cols() != static_cast<Index>(geom.height) * geom.width) {
    throw DimensionError("conv2d: input does not match geometry");
  }
  const Index patch = static_cast<Index>(geom.in_channels) * geom.kernel * geom.kernel;
  if (weight.cols() != patch || bias.rows() != weight.rows() || bias.cols() != 1) {
    throw DimensionError("conv2d: weight/bias shape mismatch");
  }
  Matrix col = im2col(input.value(), geom);
  Matrix out = weight.value() * col;
  out.colwise() += bias.value().col(0);
  return make_result(std::move(out), {input, weight, bias},
                     [col = std::move(col), geom](Node& self) {
                       const auto& ni = self.inputs[0];
                       const auto& nw = self.inputs[1];
                       const auto& nb = self.inputs[2];
                       if (nw->requires_grad) {
                         nw->accumulate(self.grad * col.transpose());
                       }
                       if (nb->requires_grad) {
                         nb->accumulate(self.grad.rowwise().sum());
                       }
                       if (ni->requires_grad) {
                         ni->accumulate(col2im(nw->value.transpose() * self.grad, geom));
                       }
                     });
}

Var mse_loss(const Var& predictions, std::span<const double> targets,
             std::span<const double> weights) {
  const Index n = predictions.rows();
  if (predictions.cols() != 1 || static_cast<Index>(targets.size()) != n) {
    throw DimensionError("mse_loss: predictions must be n x 1 matching targets");
  }
  const auto w = resolve_weights(weights, n);
  double total_w = 0.0;
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double d = predictions.value()(i, 0) - targets[static_cast<std::size_t>(i)];
    acc += w[static_cast<std::size_t>(i)] * d * d;
    total_w += w[static_cast<std::size_t>(i)];
  }
  Matrix out(1, 1);
  out(0, 0) = total_w > 0 ? acc / total_w : 0.0;
  std::vector<double> t(targets.begin(), targets.end());
  return make_result(std::move(out), {predictions},
                     [t = std::move(t), w, total_w](Node& self) {
                       const auto& in = self.inputs[0];
                       if (!in->requires_grad || total_w <= 0) {
                         return;
                       }
                       Matrix g(in->value.rows(), 1);
                       for (Index i = 0; i < g.rows(); ++i) {
                         const auto k = static_cast<std::size_t>(i);
                         g(i, 0) = self.grad(0, 0) * 2.0 * w[k] * (in->value(i, 0) - t[k]) / total_w;
                       }
                       in->accumulate(g);
                     });
}

Var bce_with_logits_loss(const Var& logits, std::span<const double> targets,
                         std::span<const double> weights) {
  const Index n = logits.rows();
  if (logits.cols() != 1 || static_cast<Index>(targets.size()) != n) {
    throw DimensionError("bce_with_logits_loss: logits must be n x 1 matching targets");
  }
  const auto w = resolve_weights(weights, n);
  double total_w = 0.0;
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double x = logits.value()(i, 0);
    // log(1 + exp(x)) - y*x, stable for both signs
    const double l = std::max(x, 0.0) - x * targets[k] + std::log1p(std::exp(-std::abs(x)));
    acc += w[k] * l;
    total_w += w[k];
  }
  Matrix out(1, 1);
  out(0, 0) = total_w > 0 ? acc / total_w : 0.0;
  std::vector<double> t(targets.begin(), targets.end());
  return make_result(std::move(out), {logits}, [t = std::move(t), w, total_w](Node& self) {
    const auto& in = self.inputs[0];
    if (!in->requires_grad || total_w <= 0) {
      return;
    }
    Matrix g(in->value.rows(), 1);
    for (Index i = 0; i < g.rows(); ++i) {
      const auto k = static_cast<std::size_t>(i);
      const double p = 1.0 / (1.0 + std::exp(-in->value(i, 0)));
      g(i, 0) = self.grad(0, 0) * w[k] * (p - t[k]) / total_w;
    }
    in->accumulate(g);
  });
}

Var cross_entropy_loss(const Var& logits, std::span<const int> classes,
                       std::span<const double> weights) {
  const Index n = logits.rows();
  if (static_cast<Index>(classes.size()) != n) {
    throw DimensionError("cross_entropy_loss: class count does not match rows");
  }
  const auto w = resolve_weights(weights, n);
  Matrix probs = logits.value();
  double total_w = 0.0;
  double acc = 0.0;
  for (Index r = 0; r < n; ++r) {
    const auto k = static_cast<std::size_t>(r);
    const int cls = classes[k];
    if (cls < 0 || cls >= logits.cols()) {
      throw DimensionError("cross_entropy_loss: class index out of range");
    }
    auto row = probs.row(r);
    const double mx = row.maxCoeff();
    row.array() -= mx;
    const double lse = std::log(row.array().exp().sum());
    acc += w[k] * (lse - row(cls));
    row = (row.array() - lse).exp().matrix();
    total_w += w[k];
  }
  Matrix out(1, 1);
  out(0, 0) = total_w > 0 ? acc / total_w : 0.0;
  std::vector<int> c(classes.begin(), classes.end());
  return make_result(std::move(out), {logits},
                     [probs = std::move(probs), c = std::move(c), w, total_w](Node& self) {
                       const auto& in = self.inputs[0];
                       if (!in->requires_grad || total_w <= 0) {
                         return;
                       }
                       Matrix g = probs;
                       for (Index r = 0; r < g.rows(); ++r) {
                         const auto k = static_cast<std::size_t>(r);
                         g(r, c[k]) -= 1.0;
                         g.row(r) *= self.grad(0, 0) * w[k] / total_w;
                       }
                       in->accumulate(g);
                     });
}

}  // namespace dashkin::nn
