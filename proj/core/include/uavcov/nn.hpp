#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "uavcov/adjacency.hpp"
#include "uavcov/seeding.hpp"

namespace uavcov::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// A named trainable array. `shape` is {rows, cols} for weights and {cols}
/// for biases; storage is always a row-major matrix.
struct ParamTensor {
  std::string name;
  std::vector<std::size_t> shape;
  Matrix value;
  Matrix grad;

  ParamTensor() = default;
  ParamTensor(std::string name, std::vector<std::size_t> shape, Matrix value);

  std::size_t numel() const { return static_cast<std::size_t>(value.size()); }
  void zero_grad() { grad.setZero(); }
  bool all_finite() const { return value.allFinite() && grad.allFinite(); }
};

enum class Activation { none, tanh, relu, softmax };

struct MlpSpec {
  std::vector<int> layer_widths;
  Activation activation = Activation::tanh;
  Activation output_activation = Activation::none;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Reverse-mode tape.

/// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  bool valid() const { return id != static_cast<std::size_t>(-1); }
};

/// Records a forward computation over dense matrices and replays it backward.
/// A tape is single-use: build, call backward once, discard.
class Tape {
 public:
  Var constant(Matrix value);
  /// Leaf bound to a parameter; backward accumulates into `p.grad`.
  Var parameter(ParamTensor& p);

  Var matmul(Var a, Var b);
  /// x (B×F) plus a 1×F bias broadcast over rows.
  Var add_bias(Var x, Var bias);
  Var tanh(Var x);
  Var relu(Var x);
  Var softmax_rows(Var x);
  Var log_softmax_rows(Var x);
  Var exp(Var x);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var x, double s);
  Var clamp(Var x, double lo, double hi);
  Var minimum(Var a, Var b);
  Var square(Var x);
  /// B×1 column of x(r, index[r]).
  Var pick(Var x, std::span<const int> index);
  Var row_sum(Var x);
  Var mean(Var x);
  /// Left-multiplies consecutive blocks of `group` rows by the matching mixer:
  /// out[g] = mixers[g] · x[g]. Used for batched graph aggregation.
  Var block_mix(Var x, std::span<const Matrix> mixers);
  /// Identity forward; blocks gradient flow backward.
  Var stop_gradient(Var x);

  const Matrix& value(Var v) const;
  const Matrix& grad(Var v) const;
  double scalar(Var v) const;

  /// Propagates d(loss)/d(node) to every node reachable from `loss`, and
  /// accumulates into the grad of each bound ParamTensor.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    ParamTensor* param = nullptr;
    std::function<void(std::vector<Node>&, const Node&)> propagate;
  };

  Var push(Matrix value, std::function<void(std::vector<Node>&, const Node&)> propagate);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// ---------------------------------------------------------------------------

/// Row-wise softmax, max-shifted.
Matrix softmax_rows(const Matrix& logits);
Matrix log_softmax_rows(const Matrix& logits);

class Mlp {
 public:
  Mlp() = default;
  /// Orthogonal init with gain `gain` on hidden layers and `output_gain` on
  /// the last layer; zero biases.
  Mlp(std::string name, MlpSpec spec, Rng& rng, double gain = 1.4142135623730951,
      double output_gain = 1.0);

  const MlpSpec& spec() const { return spec_; }
  int input_width() const { return spec_.layer_widths.front(); }
  int output_width() const { return spec_.layer_widths.back(); }

  Matrix forward(const Matrix& input) const;
  Var forward(Tape& tape, Var input);

  std::vector<ParamTensor*> params();
  std::vector<const ParamTensor*> params() const;

 private:
  std::string name_;
  MlpSpec spec_;
  std::vector<ParamTensor> weights_;
  std::vector<ParamTensor> biases_;
};

/// Orthogonal matrix of shape rows×cols scaled by `gain`.
Matrix orthogonal_init(int rows, int cols, double gain, Rng& rng);

struct AggregatorParams {
  double alpha = 0.5;
  int feature_dim = 0;
};

/// alpha·I + (1 − alpha)·D^{-1/2} A D^{-1/2}, with D the row sums of A.
Matrix mixing_matrix(const AdjacencyMatrix& adj, double alpha);

/// alpha·x + (1 − alpha)·D^{-1/2} A D^{-1/2} x for an N×F feature matrix.
Matrix aggregate(const Matrix& features, const AdjacencyMatrix& adj, double alpha);

struct CategoricalDraw {
  int action = 0;
  double log_prob = 0.0;
};

/// Samples an index from `probs`; throws ContractViolation on an invalid
/// distribution.
CategoricalDraw categorical_sample(std::span<const double> probs, Rng& rng);

/// Index of the largest probability (lowest index on ties).
int argmax(std::span<const double> probs);

}  // namespace uavcov::nn
