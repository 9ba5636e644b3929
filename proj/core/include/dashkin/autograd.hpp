#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Every operation records a closure that pushes its output gradient
// back to its inputs; `backward` replays them in reverse topological order.

#include <Eigen/Dense>

#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

namespace dashkin::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Matrix& g);
  Matrix& ensure_grad();
};

}  // namespace detail

/// Handle to a node of the computation graph. Copies share the node.
class Var {
 public:
  Var() = default;

  static Var constant(Matrix value);
  /// Leaf that accumulates gradients (model parameter).
  static Var parameter(Matrix value);

  [[nodiscard]] bool defined() const { return node_ != nullptr; }
  [[nodiscard]] const Matrix& value() const { return node_->value; }
  /// In-place access for optimizers; only meaningful on leaves.
  [[nodiscard]] Matrix& mutable_value() { return node_->value; }
  /// Gradient accumulated by the last backward pass; zero-sized when none reached this node.
  [[nodiscard]] const Matrix& grad() const { return node_->grad; }
  [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
  [[nodiscard]] Index rows() const { return node_->value.rows(); }
  [[nodiscard]] Index cols() const { return node_->value.cols(); }
  [[nodiscard]] double item() const;
  void zero_grad();

  [[nodiscard]] const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Runs reverse accumulation from a 1x1 loss. The recorded graph is released
/// afterwards, so a graph can be differentiated once.
void backward(const Var& loss);

// Elementwise and linear algebra.
Var matmul(const Var& a, const Var& b);
/// a * b^T
Var matmul_transposed(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
/// Adds a 1 x n row to every row of a (m x n).
Var add_row(const Var& a, const Var& row);
/// Adds an m x 1 column to every column of a (m x n).
Var add_col(const Var& a, const Var& col);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// 1 - a
Var one_minus(const Var& a);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var softmax_rows(const Var& a);
Var transpose(const Var& a);

Var slice_rows(const Var& a, Index start, Index count);
Var slice_cols(const Var& a, Index start, Index count);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);

/// Sum of all entries, 1x1.
Var sum(const Var& a);
Var mean(const Var& a);
/// Mean over columns for each row: m x n -> m x 1.
Var row_means(const Var& a);

/// Normalizes every row to zero mean and unit variance, then applies gamma/beta (1 x n).
Var layer_norm_rows(const Var& a, const Var& gamma, const Var& beta, double eps = 1e-5);

struct ConvGeometry {
  int in_channels = 0;
  int height = 0;
  int width = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 1;

  [[nodiscard]] int out_height() const { return (height + 2 * padding - kernel) / stride + 1; }
  [[nodiscard]] int out_width() const { return (width + 2 * padding - kernel) / stride + 1; }
};

/// 2-D convolution of one image laid out as channels x (height*width).
/// weight: out_channels x (in_channels*kernel*kernel); bias: out_channels x 1.
Var conv2d(const Var& input, const Var& weight, const Var& bias, const ConvGeometry& geom);

// Fused losses. `weights` is per-row (frame) and may be empty for all-ones.
// Each returns the weighted mean over rows with non-zero weight, 1x1.

/// Squared error between a column of predictions and targets.
Var mse_loss(const Var& predictions, std::span<const double> targets,
             std::span<const double> weights = {});
/// Binary cross-entropy on logits with (possibly fractional) targets in [0, 1].
Var bce_with_logits_loss(const Var& logits, std::span<const double> targets,
                         std::span<const double> weights = {});
/// Categorical cross-entropy on rows of logits.
Var cross_entropy_loss(const Var& logits, std::span<const int> classes,
                       std::span<const double> weights = {});

}  // namespace dashkin::nn
