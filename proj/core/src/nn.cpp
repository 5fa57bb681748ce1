#include "uavcov/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <utility>

#include "uavcov/errors.hpp"

namespace uavcov::nn {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeMismatch(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()) + ")");
}

}  // namespace

ParamTensor::ParamTensor(std::string n, std::vector<std::size_t> s, Matrix v)
    : name(std::move(n)), shape(std::move(s)), value(std::move(v)) {
  std::size_t count = 1;
  for (auto d : shape) count *= d;
  require(count == static_cast<std::size_t>(value.size()), "ParamTensor: shape does not match values");
  grad = Matrix::Zero(value.rows(), value.cols());
}

void MlpSpec::validate() const {
  require(layer_widths.size() >= 2, "MlpSpec needs at least two widths");
  for (int w : layer_widths) require(w > 0, "MlpSpec widths must be positive");
  require(activation == Activation::tanh || activation == Activation::relu,
          "hidden activation must be tanh or relu");
}

// ---------------------------------------------------------------------------

Var Tape::push(Matrix value, std::function<void(std::vector<Node>&, const Node&)> propagate) {
  Node n;
  n.grad = Matrix::Zero(value.rows(), value.cols());
  n.value = std::move(value);
  n.propagate = std::move(propagate);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw ContractViolation("Var does not belong to this tape");
  return nodes_[v.id];
}

const Matrix& Tape::value(Var v) const { return node(v).value; }
const Matrix& Tape::grad(Var v) const { return node(v).grad; }

double Tape::scalar(Var v) const {
  const Matrix& m = value(v);
  require(m.size() == 1, "scalar() on a non-scalar node");
  return m(0, 0);
}

Var Tape::constant(Matrix value) { return push(std::move(value), nullptr); }

Var Tape::parameter(ParamTensor& p) {
  Var v = push(p.value, nullptr);
  nodes_[v.id].param = &p;
  return v;
}

Var Tape::matmul(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  if (av.cols() != bv.rows())
    throw ShapeMismatch("matmul: inner dimensions " + std::to_string(av.cols()) + " and " +
                        std::to_string(bv.rows()));
  return push(av * bv, [a, b](std::vector<Node>& ns, const Node& self) {
    ns[a.id].grad.noalias() += self.grad * ns[b.id].value.transpose();
    ns[b.id].grad.noalias() += ns[a.id].value.transpose() * self.grad;
  });
}

Var Tape::add_bias(Var x, Var bias) {
  const Matrix& xv = value(x);
  const Matrix& bv = value(bias);
  if (bv.rows() != 1 || bv.cols() != xv.cols()) throw ShapeMismatch("add_bias: bias width mismatch");
  Matrix out = xv.rowwise() + bv.row(0);
  return push(std::move(out), [x, bias](std::vector<Node>& ns, const Node& self) {
    ns[x.id].grad += self.grad;
    ns[bias.id].grad += self.grad.colwise().sum();
  });
}

Var Tape::tanh(Var x) {
  Matrix out = value(x).array().tanh().matrix();
  return push(std::move(out), [x](std::vector<Node>& ns, const Node& self) {
    ns[x.id].grad.array() += self.grad.array() * (1.0 - self.value.array().square());
  });
}

Var Tape::relu(Var x) {
  Matrix out = value(x).cwiseMax(0.0);
  return push(std::move(out), [x](std::vector<Node>& ns, const Node& self) {
    ns[x.id].grad.array() += (ns[x.id].value.array() > 0.0).select(self.grad.array(), 0.0);
  });
}

Var Tape::softmax_rows(Var x) {
  return push(nn::softmax_rows(value(x)), [x](std::vector<Node>& ns, const Node& self) {
    // dx = p ⊙ (g − Σ g⊙p)
    const Eigen::VectorXd dot = (self.grad.array() * self.value.array()).rowwise().sum();
    ns[x.id].grad.array() +=
        self.value.array() * (self.grad.array().colwise() - dot.array());
  });
}

Var Tape::log_softmax_rows(Var x) {
  return push(nn::log_softmax_rows(value(x)), [x](std::vector<Node>& ns, const Node& self) {
    // dx = g − softmax ⊙ Σ g
    const Eigen::VectorXd total = self.grad.rowwise().sum();
    const Matrix p = self.value.array().exp().matrix();
    ns[x.id].grad.array() += self.grad.array() - (p.array().colwise() * total.array());
  });
}

Var Tape::exp(Var x) {
  Matrix out = value(x).array().exp().matrix();
  return push(std::move(out), [x](std::vector<Node>& ns, const Node& self) {
    ns[x.id].grad.array() += self.grad.array() * self.value.array();
  });
}

Var Tape::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  return push(value(a) + value(b), [a, b](std::vector<Node>& ns, const Node& self) {
    ns[a.id].grad += self.grad;
    ns[b.id].grad += self.grad;
  });
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  return push(value(a) - value(b), [a, b](std::vector<Node>& ns, const Node& self) {
    ns[a.id].grad += self.grad;
    ns[b.id].grad -= self.grad;
  });
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  Matrix out = value(a).cwiseProduct(value(b));
  return push(std::move(out), [a, b](std::vector<Node>& ns, const Node& self) {
    ns[a.id].grad += self.grad.cwiseProduct(ns[b.id].value);
    ns[b.id].grad += self.grad.cwiseProduct(ns[a.id].value);
  });
}

Var Tape::scale(Var x, double s) {
  return push(value(x) * s, [x, s](std::vector<Node>& ns, const Node& self) {
    ns[x.id].grad += s * self.grad;
  });
}

Var Tape::clamp(Var x, double lo, double hi) {
  require(lo <= hi, "clamp: lo > hi");
  Matrix out = value(x).cwiseMax(lo).cwiseMin(hi);
  return push(std::move(out), [x, lo, hi](std::vector<Node>& ns, const Node& self) {
    const auto& xv = ns[x.id].value.array();
    ns[x.id].grad.array() += ((xv >= lo) && (xv <= hi)).select(self.grad.array(), 0.0);
  });
}

Var Tape::minimum(Var a, Var b) {
  require_same_shape(value(a), value(b), "minimum");
  Matrix out = value(a).cwiseMin(value(b));
  return push(std::move(out), [a, b](std::vector<Node>& ns, const Node& self) {
    // Ties route the gradient to the first argument.
    const auto take_a = (ns[a.id].value.array() <= ns[b.id].value.array());
    ns[a.id].grad.array() += take_a.select(self.grad.array(), 0.0);
    ns[b.id].grad.array() += take_a.select(0.0, self.grad.array());
  });
}

Var Tape::square(Var x) {
  Matrix out = value(x).array().square().matrix();
  return push(std::move(out), [x](std::vector<Node>& ns, const Node& self) {
    ns[x.id].grad.array() += 2.0 * ns[x.id].value.array() * self.grad.array();
  });
}

Var Tape::pick(Var x, std::span<const int> index) {
  const Matrix& xv = value(x);
  if (static_cast<Eigen::Index>(index.size()) != xv.rows()) throw ShapeMismatch("pick: one index per row");
  Matrix out(xv.rows(), 1);
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const int c = index[static_cast<std::size_t>(r)];
    require(c >= 0 && c < xv.cols(), "pick: column index out of range");
    out(r, 0) = xv(r, c);
  }
  std::vector<int> idx(index.begin(), index.end());
  return push(std::move(out), [x, idx = std::move(idx)](std::vector<Node>& ns, const Node& self) {
    for (std::size_t r = 0; r < idx.size(); ++r)
      ns[x.id].grad(static_cast<Eigen::Index>(r), idx[r]) += self.grad(static_cast<Eigen::Index>(r), 0);
  });
}

Var Tape::row_sum(Var x) {
  Matrix out = value(x).rowwise().sum();
  return push(std::move(out), [x](std::vector<Node>& ns, const Node& self) {
    ns[x.id].grad.colwise() += self.grad.col(0);
  });
}

Var Tape::mean(Var x) {
  const Matrix& xv = value(x);
  require(xv.size() > 0, "mean of an empty node");
  Matrix out(1, 1);
  out(0, 0) = xv.mean();
  const double inv = 1.0 / static_cast<double>(xv.size());
  return push(std::move(out), [x, inv](std::vector<Node>& ns, const Node& self) {
    ns[x.id].grad.array() += self.grad(0, 0) * inv;
  });
}

Var Tape::block_mix(Var x, std::span<const Matrix> mixers) {
  const Matrix& xv = value(x);
  require(!mixers.empty(), "block_mix: no mixers");
  const Eigen::Index group = mixers.front().rows();
  if (group * static_cast<Eigen::Index>(mixers.size()) != xv.rows())
    throw ShapeMismatch("block_mix: rows must equal groups × group size");
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t g = 0; g < mixers.size(); ++g) {
    const Matrix& m = mixers[g];
    if (m.rows() != group || m.cols() != group) throw ShapeMismatch("block_mix: ragged mixer");
    const Eigen::Index r0 = static_cast<Eigen::Index>(g) * group;
    out.middleRows(r0, group).noalias() = m * xv.middleRows(r0, group);
  }
  std::vector<Matrix> held(mixers.begin(), mixers.end());
  return push(std::move(out), [x, held = std::move(held), group](std::vector<Node>& ns, const Node& self) {
    for (std::size_t g = 0; g < held.size(); ++g) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(g) * group;
      ns[x.id].grad.middleRows(r0, group).noalias() += held[g].transpose() * self.grad.middleRows(r0, group);
    }
  });
}

Var Tape::stop_gradient(Var x) { return push(value(x), nullptr); }

void Tape::backward(Var loss) {
  if (nodes_.empty()) throw ContractViolation("backward called before any forward pass");
  if (consumed_) throw ContractViolation("backward called twice on the same tape");
  const Node& l = node(loss);
  require(l.value.size() == 1, "backward needs a scalar loss");
  consumed_ = true;
  nodes_[loss.id].grad(0, 0) = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.propagate) n.propagate(nodes_, n);
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

// ---------------------------------------------------------------------------

Matrix softmax_rows(const Matrix& logits) {
  Matrix shifted = logits.colwise() - logits.rowwise().maxCoeff();
  Matrix e = shifted.array().exp().matrix();
  const Eigen::VectorXd z = e.rowwise().sum();
  return e.array().colwise() / z.array();
}

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix shifted = logits.colwise() - logits.rowwise().maxCoeff();
  const Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log();
  return shifted.colwise() - lse;
}

Matrix orthogonal_init(int rows, int cols, double gain, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int big = std::max(rows, cols);
  const int small = std::min(rows, cols);
  Eigen::MatrixXd g(big, small);
  for (int i = 0; i < big; ++i)
    for (int j = 0; j < small; ++j) g(i, j) = gauss(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  // Sign fix so the draw is uniform over the orthogonal group.
  const Eigen::MatrixXd r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
  for (int j = 0; j < small; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  Matrix out = rows >= cols ? Matrix(q) : Matrix(q.transpose());
  return gain * out;
}

Mlp::Mlp(std::string name, MlpSpec spec, Rng& rng, double gain, double output_gain)
    : name_(std::move(name)), spec_(std::move(spec)) {
  spec_.validate();
  const std::size_t layers = spec_.layer_widths.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = spec_.layer_widths[l];
    const int out = spec_.layer_widths[l + 1];
    const double g = l + 1 == layers ? output_gain : gain;
    weights_.emplace_back(name_ + "." + std::to_string(l) + ".weight",
                          std::vector<std::size_t>{static_cast<std::size_t>(in), static_cast<std::size_t>(out)},
                          orthogonal_init(in, out, g, rng));
    biases_.emplace_back(name_ + "." + std::to_string(l) + ".bias",
                         std::vector<std::size_t>{static_cast<std::size_t>(out)}, Matrix::Zero(1, out));
  }
}

namespace {

Matrix activate(const Matrix& x, Activation a) {
  switch (a) {
    case Activation::none: return x;
    case Activation::tanh: return x.array().tanh().matrix();
    case Activation::relu: return x.cwiseMax(0.0);
    case Activation::softmax: return softmax_rows(x);
  }
  return x;
}

Var activate(Tape& tape, Var x, Activation a) {
  switch (a) {
    case Activation::none: return x;
    case Activation::tanh: return tape.tanh(x);
    case Activation::relu: return tape.relu(x);
    case Activation::softmax: return tape.softmax_rows(x);
  }
  return x;
}

}  // namespace

Matrix Mlp::forward(const Matrix& input) const {
  if (input.cols() != input_width())
    throw ShapeMismatch(name_ + ": input width " + std::to_string(input.cols()) + ", expected " +
                        std::to_string(input_width()));
  Matrix h = input;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix z = h * weights_[l].value;
    z.rowwise() += biases_[l].value.row(0);
    h = activate(z, l + 1 == weights_.size() ? spec_.output_activation : spec_.activation);
  }
  return h;
}

Var Mlp::forward(Tape& tape, Var input) {
  if (tape.value(input).cols() != input_width())
    throw ShapeMismatch(name_ + ": input width " + std::to_string(tape.value(input).cols()) +
                        ", expected " + std::to_string(input_width()));
  Var h = input;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Var z = tape.add_bias(tape.matmul(h, tape.parameter(weights_[l])), tape.parameter(biases_[l]));
    h = activate(tape, z, l + 1 == weights_.size() ? spec_.output_activation : spec_.activation);
  }
  return h;
}

std::vector<ParamTensor*> Mlp::params() {
  std::vector<ParamTensor*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<const ParamTensor*> Mlp::params() const {
  std::vector<const ParamTensor*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

// ---------------------------------------------------------------------------

Matrix mixing_matrix(const AdjacencyMatrix& adj, double alpha) {
  require(alpha >= 0.0 && alpha <= 1.0, "aggregator alpha must lie in [0, 1]");
  const auto n = static_cast<Eigen::Index>(adj.size());
  Eigen::VectorXd inv_sqrt_deg(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t d = adj.degree(static_cast<std::size_t>(i));
    if (d == 0) throw ContractViolation("aggregate: zero-degree node");
    inv_sqrt_deg(i) = 1.0 / std::sqrt(static_cast<double>(d));
  }
  Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      m(i, j) = (1.0 - alpha) * adj.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) *
                inv_sqrt_deg(i) * inv_sqrt_deg(j);
  m.diagonal().array() += alpha;
  return m;
}

Matrix aggregate(const Matrix& features, const AdjacencyMatrix& adj, double alpha) {
  if (features.rows() != static_cast<Eigen::Index>(adj.size()))
    throw ShapeMismatch("aggregate: feature rows must equal node count");
  if (alpha == 1.0) return features;
  return mixing_matrix(adj, alpha) * features;
}

CategoricalDraw categorical_sample(std::span<const double> probs, Rng& rng) {
  require(!probs.empty(), "categorical_sample: empty distribution");
  double total = 0.0;
  for (double p : probs) {
    require(std::isfinite(p) && p >= 0.0, "categorical_sample: negative or non-finite probability");
    total += p;
  }
  require(std::abs(total - 1.0) <= 1e-9, "categorical_sample: probabilities do not sum to 1");
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * total;
  double acc = 0.0;
  int chosen = -1;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (probs[k] <= 0.0) continue;
    acc += probs[k];
    chosen = static_cast<int>(k);
    if (u < acc) break;
  }
  return {chosen, std::log(probs[static_cast<std::size_t>(chosen)])};
}

int argmax(std::span<const double> probs) {
  require(!probs.empty(), "argmax of an empty vector");
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

}  // namespace uavcov::nn
