// Copyright 2026 The vamt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over dense row-major double
// matrices. A Tape records operations in creation order, which is also a
// valid topological order, so backward() is a single reverse sweep.
//
// Graphs are define-by-run: build a fresh Tape per forward pass. Parameters
// live in a ParamStore and enter a tape through Tape::param(), which aliases
// the stored value and accumulates gradients straight into Parameter::grad.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace vamt::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string shape_string(const Matrix& m);

struct Parameter {
  Matrix value;
  Matrix grad;
};

// Named trainable parameters of one model. Iteration order is by name,
// which keeps checkpoints and optimizer sweeps deterministic.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Matrix init);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::vector<std::string> names() const;
  std::size_t size() const { return params_.size(); }
  std::size_t num_values() const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  // Text checkpoint: "name rows cols v0 v1 ..." per line, 17 significant
  // digits so a load reproduces every value bit for bit.
  void save(std::ostream& out) const;
  static ParamStore load(std::istream& in);
  void save_file(const std::string& path) const;
  static ParamStore load_file(const std::string& path);

  // Copies values of matching names from other; shapes must agree.
  void assign_values(const ParamStore& other);

 private:
  std::map<std::string, Parameter> params_;
};

enum class Op : std::uint8_t {
  Constant,
  Variable,
  Param,
  MatMul,
  Add,
  Sub,
  Mul,
  AddRow,
  Scale,
  ScaleBy,
  Sigmoid,
  Tanh,
  SoftmaxRows,
  ConcatCols,
  SliceCols,
  Row,
  StackRows,
  Transpose,
  GatherRows,
  MeanOf,
  MeanRows,
  Sum,
  Mse,
  CrossEntropy,
  Detach,
  LstmCell,
};

const char* op_name(Op op);

class Tape;

// Lightweight handle to a value recorded on a Tape.
class Node {
 public:
  Node() = default;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix& value() const;
  Matrix grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
  bool is_constant() const;
  Op op() const;

 private:
  friend class Tape;
  Node(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Node constant(Matrix value);
  // Trainable leaf owned by the tape (used by tests and gradient checks).
  Node variable(Matrix value);
  Node param(Parameter& p);
  // With frozen=true the parameter enters as a constant: no gradient.
  Node param(Parameter& p, bool frozen);

  const Matrix& value(Node n) const;
  Matrix grad(Node n) const;
  bool is_constant(Node n) const { return entry(n).constant; }
  Op op(Node n) const { return entry(n).op; }
  std::vector<Node> parents(Node n) const;
  std::size_t size() const { return entries_.size(); }

  // Accumulates d(root)/d(node) into every reachable non-constant node.
  // Interior gradients persist on the tape until zero_grad().
  void backward(Node root, double seed = 1.0);
  void zero_grad();

  // Low-level access used by the operation implementations.
  struct Entry {
    Op op = Op::Constant;
    bool constant = true;
    int a = -1;
    int b = -1;
    std::vector<int> inputs;
    std::vector<int> index;
    double scalar = 0.0;
    Matrix value;
    Matrix aux;
    Matrix grad;
    Parameter* param = nullptr;
  };

  const Entry& entry(Node n) const;
  Node push(Entry e);
  const Matrix& val(int id) const;

 private:
  std::deque<Entry> entries_;
};

Node matmul(Node a, Node b);

enum class Binary { add, mul };
enum class Unary { sigmoid, tanh };

Node elementwise(Node a, Node b, Binary kind);
Node unary(Node a, Unary kind);

Node add(Node a, Node b);
Node sub(Node a, Node b);
Node mul(Node a, Node b);
// Adds a 1×c row to every row of a.
Node add_row(Node a, Node row);
Node scale(Node a, double s);
// Multiplies every entry of a by the 1×1 node s.
Node scale_by(Node a, Node s);
Node sigmoid(Node a);
Node tanh(Node a);
// Row-wise softmax, stabilized by subtracting each row's max.
Node softmax_rows(Node a);
Node concat_cols(std::span<const Node> parts);
Node concat_cols(std::initializer_list<Node> parts);
Node slice_cols(Node a, int start, int count);
Node row(Node a, int i);
Node stack_rows(std::span<const Node> rows);
Node transpose(Node a);
Node gather_rows(Node table, std::span<const int> ids);
// Entry-wise mean of equally shaped nodes.
Node mean_of(std::span<const Node> parts);
Node mean_of(std::initializer_list<Node> parts);
// 1×c mean over the rows of a.
Node mean_rows(Node a);
Node sum(Node a);
Node mse(Node a, Node b);
// Mean over non-ignored rows of -log softmax(logits)[row, target].
Node cross_entropy(Node logits, std::span<const int> targets, int ignore_index);
Node detach(Node a);
// LSTM cell from gate pre-activations z (r×4d, gate order i f g o) and the
// previous cell c (r×d). Returns [h, c] packed as r×2d.
Node lstm_cell(Node z, Node c_prev);

void backward(Node root);

// ---------------------------------------------------------------------------
// Gradient checking

// |a - n| / max(|a|, |n|, floor); the floor keeps gradients that are zero
// up to round-off from reporting huge ratios.
double relative_error(double analytic, double numeric, double floor = 1e-6);

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_analytic = 0.0;
  double max_abs_numeric = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = true;
};

using ScalarFn = std::function<Node(Tape&)>;

// Compares analytic gradients of f against central finite differences for
// every parameter in store (or only those listed in names). f must build its
// loss from tape.param(store.at(...)) and be deterministic.
GradCheckReport check_gradients(const ScalarFn& f, ParamStore& store, double step, double tol,
                                const std::vector<std::string>& names = {});

}  // namespace vamt::ad
