// Copyright 2026 The vamt Authors
// SPDX-License-Identifier: Apache-2.0

#include "vamt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "vamt/errors.hpp"

namespace vamt::ad {

std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

// ---------------------------------------------------------------------------
// ParamStore

Parameter& ParamStore::add(const std::string& name, Matrix init) {
  if (params_.count(name) != 0) {
    throw ContractError("duplicate parameter name '" + name + "'");
  }
  Parameter p;
  p.grad = Matrix::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, p] : params_) out.push_back(name);
  return out;
}

std::size_t ParamStore::num_values() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) p.grad.setZero();
}

void ParamStore::save(std::ostream& out) const {
  out << "# vamt-params 1\n";
  std::ostringstream line;
  line << std::setprecision(17);
  for (const auto& [name, p] : params_) {
    line.str("");
    line << name << ' ' << p.value.rows() << ' ' << p.value.cols();
    for (Eigen::Index i = 0; i < p.value.size(); ++i) line << ' ' << p.value.data()[i];
    out << line.str() << '\n';
  }
}

ParamStore ParamStore::load(std::istream& in) {
  ParamStore store;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string name;
    long rows = -1;
    long cols = -1;
    if (!(ss >> name >> rows >> cols) || rows < 0 || cols < 0) {
      throw ParseError("expected 'name rows cols values...'", lineno);
    }
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      std::string tok;
      if (!(ss >> tok)) {
        throw ParseError("parameter '" + name + "' has fewer than " + std::to_string(m.size()) +
                             " values",
                         lineno);
      }
      try {
        std::size_t used = 0;
        m.data()[i] = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError("bad number '" + tok + "' in parameter '" + name + "'", lineno);
      }
    }
    std::string extra;
    if (ss >> extra) throw ParseError("trailing values after parameter '" + name + "'", lineno);
    if (store.contains(name)) throw ParseError("duplicate parameter '" + name + "'", lineno);
    store.add(name, std::move(m));
  }
  return store;
}

void ParamStore::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  save(out);
}

ParamStore ParamStore::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  return load(in);
}

void ParamStore::assign_values(const ParamStore& other) {
  for (auto& [name, p] : params_) {
    const Parameter& src = other.at(name);
    if (src.value.rows() != p.value.rows() || src.value.cols() != p.value.cols()) {
      throw DimensionError("parameter '" + name + "' has shape " + shape_string(p.value) +
                           " but checkpoint holds " + shape_string(src.value));
    }
    p.value = src.value;
  }
}

// ---------------------------------------------------------------------------
// Node / Tape

const char* op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Variable: return "variable";
    case Op::Param: return "param";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::AddRow: return "add_row";
    case Op::Scale: return "scale";
    case Op::ScaleBy: return "scale_by";
    case Op::Sigmoid: return "sigmoid";
    case Op::Tanh: return "tanh";
    case Op::SoftmaxRows: return "softmax_rows";
    case Op::ConcatCols: return "concat_cols";
    case Op::SliceCols: return "slice_cols";
    case Op::Row: return "row";
    case Op::StackRows: return "stack_rows";
    case Op::Transpose: return "transpose";
    case Op::GatherRows: return "gather_rows";
    case Op::MeanOf: return "mean_of";
    case Op::MeanRows: return "mean_rows";
    case Op::Sum: return "sum";
    case Op::Mse: return "mse";
    case Op::CrossEntropy: return "cross_entropy";
    case Op::Detach: return "detach";
    case Op::LstmCell: return "lstm_cell";
  }
  return "?";
}

const Matrix& Node::value() const { return tape_->value(*this); }
Matrix Node::grad() const { return tape_->grad(*this); }
bool Node::is_constant() const { return tape_->is_constant(*this); }
Op Node::op() const { return tape_->op(*this); }

double Node::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw ContractError("scalar() on node of shape " + shape_string(v));
  }
  return v(0, 0);
}

const Tape::Entry& Tape::entry(Node n) const {
  if (n.tape_ != this || n.id_ < 0 || static_cast<std::size_t>(n.id_) >= entries_.size()) {
    throw ContractError("node does not belong to this tape");
  }
  return entries_[static_cast<std::size_t>(n.id_)];
}

const Matrix& Tape::val(int id) const {
  const Entry& e = entries_[static_cast<std::size_t>(id)];
  return e.param != nullptr ? e.param->value : e.value;
}

Node Tape::push(Entry e) {
  entries_.push_back(std::move(e));
  return Node(this, static_cast<int>(entries_.size()) - 1);
}

Node Tape::constant(Matrix value) {
  Entry e;
  e.op = Op::Constant;
  e.constant = true;
  e.value = std::move(value);
  return push(std::move(e));
}

Node Tape::variable(Matrix value) {
  Entry e;
  e.op = Op::Variable;
  e.constant = false;
  e.value = std::move(value);
  return push(std::move(e));
}

Node Tape::param(Parameter& p) { return param(p, false); }

Node Tape::param(Parameter& p, bool frozen) {
  Entry e;
  e.op = Op::Param;
  e.constant = frozen;
  e.param = &p;
  return push(std::move(e));
}

const Matrix& Tape::value(Node n) const {
  entry(n);
  return val(n.id_);
}

Matrix Tape::grad(Node n) const {
  const Entry& e = entry(n);
  const Matrix& v = val(n.id_);
  if (e.param != nullptr && !e.constant) return e.param->grad;
  if (e.grad.size() == 0) return Matrix::Zero(v.rows(), v.cols());
  return e.grad;
}

std::vector<Node> Tape::parents(Node n) const {
  const Entry& e = entry(n);
  std::vector<Node> out;
  if (e.a >= 0) out.push_back(Node(const_cast<Tape*>(this), e.a));
  if (e.b >= 0) out.push_back(Node(const_cast<Tape*>(this), e.b));
  for (int i : e.inputs) out.push_back(Node(const_cast<Tape*>(this), i));
  return out;
}

void Tape::zero_grad() {
  for (auto& e : entries_) {
    if (e.param == nullptr) e.grad.resize(0, 0);
  }
}

namespace {

// Adds expr into g, allocating on first use.
template <typename Expr>
void accumulate(Matrix& g, const Expr& expr) {
  if (g.size() == 0) {
    g = expr;
  } else {
    g += expr;
  }
}

}  // namespace

void Tape::backward(Node root, double seed) {
  entry(root);
  const Matrix& rv = val(root.id_);
  if (rv.rows() != 1 || rv.cols() != 1) {
    throw ContractError("backward() needs a 1x1 root, got " + shape_string(rv));
  }
  const auto n = static_cast<std::size_t>(root.id_) + 1;
  std::vector<Matrix> g(n);
  g[n - 1] = Matrix::Constant(1, 1, seed);

  auto live = [&](int id) { return id >= 0 && !entries_[static_cast<std::size_t>(id)].constant; };

  for (std::size_t k = n; k-- > 0;) {
    Entry& e = entries_[k];
    Matrix& gk = g[k];
    if (gk.size() == 0 || e.constant) continue;
    const int a = e.a;
    const int b = e.b;
    switch (e.op) {
      case Op::Constant:
      case Op::Variable:
      case Op::Param:
        break;
      case Op::MatMul:
        if (live(a)) accumulate(g[a], gk * val(b).transpose());
        if (live(b)) accumulate(g[b], val(a).transpose() * gk);
        break;
      case Op::Add:
        if (live(a)) accumulate(g[a], gk);
        if (live(b)) accumulate(g[b], gk);
        break;
      case Op::Sub:
        if (live(a)) accumulate(g[a], gk);
        if (live(b)) accumulate(g[b], -gk);
        break;
      case Op::Mul:
        if (live(a)) accumulate(g[a], gk.cwiseProduct(val(b)));
        if (live(b)) accumulate(g[b], gk.cwiseProduct(val(a)));
        break;
      case Op::AddRow:
        if (live(a)) accumulate(g[a], gk);
        if (live(b)) accumulate(g[b], gk.colwise().sum());
        break;
      case Op::Scale:
        if (live(a)) accumulate(g[a], e.scalar * gk);
        break;
      case Op::ScaleBy: {
        const double s = val(b)(0, 0);
        if (live(a)) accumulate(g[a], s * gk);
        if (live(b)) accumulate(g[b], Matrix::Constant(1, 1, gk.cwiseProduct(val(a)).sum()));
        break;
      }
      case Op::Sigmoid:
        if (live(a)) {
          const Matrix& y = e.value;
          accumulate(g[a], gk.cwiseProduct(y).cwiseProduct((1.0 - y.array()).matrix()));
        }
        break;
      case Op::Tanh:
        if (live(a)) {
          const Matrix& y = e.value;
          accumulate(g[a], gk.cwiseProduct((1.0 - y.array().square()).matrix()));
        }
        break;
      case Op::SoftmaxRows:
        if (live(a)) {
          const Matrix& y = e.value;
          Matrix ga(y.rows(), y.cols());
          for (Eigen::Index i = 0; i < y.rows(); ++i) {
            const double dot = gk.row(i).dot(y.row(i));
            ga.row(i) = y.row(i).cwiseProduct((gk.row(i).array() - dot).matrix());
          }
          accumulate(g[a], ga);
        }
        break;
      case Op::ConcatCols: {
        Eigen::Index off = 0;
        for (int in : e.inputs) {
          const Eigen::Index c = val(in).cols();
          if (live(in)) accumulate(g[in], gk.middleCols(off, c));
          off += c;
        }
        break;
      }
      case Op::SliceCols:
        if (live(a)) {
          const Matrix& va = val(a);
          if (g[a].size() == 0) g[a] = Matrix::Zero(va.rows(), va.cols());
          g[a].middleCols(e.index[0], e.index[1]) += gk;
        }
        break;
      case Op::Row:
        if (live(a)) {
          const Matrix& va = val(a);
          if (g[a].size() == 0) g[a] = Matrix::Zero(va.rows(), va.cols());
          g[a].row(e.index[0]) += gk;
        }
        break;
      case Op::StackRows: {
        Eigen::Index off = 0;
        for (int in : e.inputs) {
          const Eigen::Index r2 = val(in).rows();
          if (live(in)) accumulate(g[in], gk.middleRows(off, r2));
          off += r2;
        }
        break;
      }
      case Op::Transpose:
        if (live(a)) accumulate(g[a], gk.transpose());
        break;
      case Op::GatherRows:
        if (live(a)) {
          const Matrix& va = val(a);
          if (g[a].size() == 0) g[a] = Matrix::Zero(va.rows(), va.cols());
          for (std::size_t i = 0; i < e.index.size(); ++i) {
            g[a].row(e.index[i]) += gk.row(static_cast<Eigen::Index>(i));
          }
        }
        break;
      case Op::MeanOf: {
        const double w = 1.0 / static_cast<double>(e.inputs.size());
        for (int in : e.inputs) {
          if (live(in)) accumulate(g[in], w * gk);
        }
        break;
      }
      case Op::MeanRows:
        if (live(a)) {
          const Matrix& va = val(a);
          const double w = 1.0 / static_cast<double>(va.rows());
          accumulate(g[a], (w * gk).replicate(va.rows(), 1));
        }
        break;
      case Op::Sum:
        if (live(a)) {
          const Matrix& va = val(a);
          accumulate(g[a], Matrix::Constant(va.rows(), va.cols(), gk(0, 0)));
        }
        break;
      case Op::Mse: {
        const Matrix& va = val(a);
        const double w = 2.0 * gk(0, 0) / static_cast<double>(va.size());
        if (live(a)) accumulate(g[a], w * (va - val(b)));
        if (live(b)) accumulate(g[b], w * (val(b) - va));
        break;
      }
      case Op::CrossEntropy:
        if (live(a)) {
          // aux holds softmax(logits) with the gold one-hot already
          // subtracted and ignored rows zeroed, scaled by 1/count.
          accumulate(g[a], gk(0, 0) * e.aux);
        }
        break;
      case Op::Detach:
        break;
      case Op::LstmCell: {
        // aux = [i f g o tanh(c)]
        const Eigen::Index d = e.value.cols() / 2;
        const Matrix& x = e.aux;
        const auto gi = x.middleCols(0, d).array();
        const auto gf = x.middleCols(d, d).array();
        const auto gg = x.middleCols(2 * d, d).array();
        const auto go = x.middleCols(3 * d, d).array();
        const auto tc = x.middleCols(4 * d, d).array();
        const Matrix dc = (gk.rightCols(d).array() +
                           gk.leftCols(d).array() * go * (1.0 - tc.square()))
                              .matrix();
        if (live(a)) {
          Matrix dz(e.value.rows(), 4 * d);
          dz.middleCols(0, d) = (dc.array() * gg * gi * (1.0 - gi)).matrix();
          dz.middleCols(d, d) = (dc.array() * val(b).array() * gf * (1.0 - gf)).matrix();
          dz.middleCols(2 * d, d) = (dc.array() * gi * (1.0 - gg.square())).matrix();
          dz.middleCols(3 * d, d) = (gk.leftCols(d).array() * tc * go * (1.0 - go)).matrix();
          accumulate(g[a], dz);
        }
        if (live(b)) accumulate(g[b], (dc.array() * gf).matrix());
        break;
      }
    }
  }

  for (std::size_t k = 0; k < n; ++k) {
    Entry& e = entries_[k];
    if (g[k].size() == 0 || e.constant) continue;
    if (e.param != nullptr) {
      e.param->grad += g[k];
    } else if (e.grad.size() == 0) {
      e.grad = std::move(g[k]);
    } else {
      e.grad += g[k];
    }
  }
}

void backward(Node root) {
  if (!root.valid()) throw ContractError("backward() on an empty node");
  root.tape()->backward(root);
}

// ---------------------------------------------------------------------------
// Operations

namespace {

Tape& same_tape(Node a, Node b, const char* what) {
  if (!a.valid() || !b.valid()) throw ContractError(std::string(what) + ": empty node");
  if (a.tape() != b.tape()) throw ContractError(std::string(what) + ": nodes on different tapes");
  return *a.tape();
}

Tape& tape_of(Node a, const char* what) {
  if (!a.valid()) throw ContractError(std::string(what) + ": empty node");
  return *a.tape();
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " +
                         shape_string(b));
  }
}

}  // namespace

Node matmul(Node a, Node b) {
  Tape& t = same_tape(a, b, "matmul");
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  if (va.cols() != vb.rows()) {
    throw DimensionError("matmul: cannot multiply " + shape_string(va) + " by " +
                         shape_string(vb));
  }
  Tape::Entry e;
  e.op = Op::MatMul;
  e.a = a.id();
  e.b = b.id();
  e.constant = a.is_constant() && b.is_constant();
  e.value.noalias() = va * vb;
  return t.push(std::move(e));
}

namespace {

Node binary_same_shape(Node a, Node b, Op op, const char* what) {
  Tape& t = same_tape(a, b, what);
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  require_same_shape(va, vb, what);
  Tape::Entry e;
  e.op = op;
  e.a = a.id();
  e.b = b.id();
  e.constant = a.is_constant() && b.is_constant();
  switch (op) {
    case Op::Add: e.value = va + vb; break;
    case Op::Sub: e.value = va - vb; break;
    case Op::Mul: e.value = va.cwiseProduct(vb); break;
    default: break;
  }
  return t.push(std::move(e));
}

}  // namespace

Node add(Node a, Node b) { return binary_same_shape(a, b, Op::Add, "add"); }
Node sub(Node a, Node b) { return binary_same_shape(a, b, Op::Sub, "sub"); }
Node mul(Node a, Node b) { return binary_same_shape(a, b, Op::Mul, "mul"); }

Node elementwise(Node a, Node b, Binary kind) {
  return kind == Binary::add ? add(a, b) : mul(a, b);
}

Node unary(Node a, Unary kind) { return kind == Unary::sigmoid ? sigmoid(a) : tanh(a); }

Node add_row(Node a, Node r) {
  Tape& t = same_tape(a, r, "add_row");
  const Matrix& va = a.value();
  const Matrix& vr = r.value();
  if (vr.rows() != 1 || vr.cols() != va.cols()) {
    throw DimensionError("add_row: cannot broadcast " + shape_string(vr) + " over " +
                         shape_string(va));
  }
  Tape::Entry e;
  e.op = Op::AddRow;
  e.a = a.id();
  e.b = r.id();
  e.constant = a.is_constant() && r.is_constant();
  e.value = va.rowwise() + vr.row(0);
  return t.push(std::move(e));
}

Node scale(Node a, double s) {
  Tape& t = tape_of(a, "scale");
  Tape::Entry e;
  e.op = Op::Scale;
  e.a = a.id();
  e.scalar = s;
  e.constant = a.is_constant();
  e.value = s * a.value();
  return t.push(std::move(e));
}

Node scale_by(Node a, Node s) {
  Tape& t = same_tape(a, s, "scale_by");
  const Matrix& vs = s.value();
  if (vs.rows() != 1 || vs.cols() != 1) {
    throw DimensionError("scale_by: scale must be 1x1, got " + shape_string(vs));
  }
  Tape::Entry e;
  e.op = Op::ScaleBy;
  e.a = a.id();
  e.b = s.id();
  e.constant = a.is_constant() && s.is_constant();
  e.value = vs(0, 0) * a.value();
  return t.push(std::move(e));
}

Node sigmoid(Node a) {
  Tape& t = tape_of(a, "sigmoid");
  Tape::Entry e;
  e.op = Op::Sigmoid;
  e.a = a.id();
  e.constant = a.is_constant();
  // Split by sign so exp() never overflows.
  e.value = a.value().unaryExpr([](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double z = std::exp(x);
    return z / (1.0 + z);
  });
  return t.push(std::move(e));
}

Node tanh(Node a) {
  Tape& t = tape_of(a, "tanh");
  Tape::Entry e;
  e.op = Op::Tanh;
  e.a = a.id();
  e.constant = a.is_constant();
  e.value = a.value().array().tanh().matrix();
  return t.push(std::move(e));
}

Node softmax_rows(Node a) {
  Tape& t = tape_of(a, "softmax_rows");
  const Matrix& va = a.value();
  if (!va.allFinite()) throw NumericError("softmax_rows: non-finite input");
  Tape::Entry e;
  e.op = Op::SoftmaxRows;
  e.a = a.id();
  e.constant = a.is_constant();
  e.value.resize(va.rows(), va.cols());
  for (Eigen::Index i = 0; i < va.rows(); ++i) {
    const double mx = va.row(i).maxCoeff();
    e.value.row(i) = (va.row(i).array() - mx).exp().matrix();
    e.value.row(i) /= e.value.row(i).sum();
  }
  return t.push(std::move(e));
}

Node concat_cols(std::span<const Node> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  Tape& t = tape_of(parts[0], "concat_cols");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  bool constant = true;
  for (const Node& p : parts) {
    if (p.tape() != &t) throw ContractError("concat_cols: nodes on different tapes");
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_string(parts[0].value()) +
                           " vs " + shape_string(p.value()));
    }
    cols += p.cols();
    constant = constant && p.is_constant();
  }
  Tape::Entry e;
  e.op = Op::ConcatCols;
  e.constant = constant;
  e.value.resize(rows, cols);
  Eigen::Index off = 0;
  for (const Node& p : parts) {
    e.value.middleCols(off, p.cols()) = p.value();
    off += p.cols();
    e.inputs.push_back(p.id());
  }
  return t.push(std::move(e));
}

Node concat_cols(std::initializer_list<Node> parts) {
  return concat_cols(std::span<const Node>(parts.begin(), parts.size()));
}

Node slice_cols(Node a, int start, int count) {
  Tape& t = tape_of(a, "slice_cols");
  const Matrix& va = a.value();
  if (start < 0 || count < 0 || start + count > va.cols()) {
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of " + shape_string(va));
  }
  Tape::Entry e;
  e.op = Op::SliceCols;
  e.a = a.id();
  e.index = {start, count};
  e.constant = a.is_constant();
  e.value = va.middleCols(start, count);
  return t.push(std::move(e));
}

Node row(Node a, int i) {
  Tape& t = tape_of(a, "row");
  const Matrix& va = a.value();
  if (i < 0 || i >= va.rows()) {
    throw DimensionError("row: index " + std::to_string(i) + " out of " + shape_string(va));
  }
  Tape::Entry e;
  e.op = Op::Row;
  e.a = a.id();
  e.index = {i};
  e.constant = a.is_constant();
  e.value = va.row(i);
  return t.push(std::move(e));
}

Node stack_rows(std::span<const Node> rows) {
  if (rows.empty()) throw ContractError("stack_rows: no operands");
  Tape& t = tape_of(rows[0], "stack_rows");
  const Eigen::Index cols = rows[0].cols();
  Eigen::Index total = 0;
  bool constant = true;
  for (const Node& r : rows) {
    if (r.tape() != &t) throw ContractError("stack_rows: nodes on different tapes");
    if (r.cols() != cols) {
      throw DimensionError("stack_rows: column mismatch " + shape_string(rows[0].value()) +
                           " vs " + shape_string(r.value()));
    }
    total += r.rows();
    constant = constant && r.is_constant();
  }
  Tape::Entry e;
  e.op = Op::StackRows;
  e.constant = constant;
  e.value.resize(total, cols);
  Eigen::Index off = 0;
  for (const Node& r : rows) {
    e.value.middleRows(off, r.rows()) = r.value();
    off += r.rows();
    e.inputs.push_back(r.id());
  }
  return t.push(std::move(e));
}

Node transpose(Node a) {
  Tape& t = tape_of(a, "transpose");
  Tape::Entry e;
  e.op = Op::Transpose;
  e.a = a.id();
  e.constant = a.is_constant();
  e.value = a.value().transpose();
  return t.push(std::move(e));
}

Node gather_rows(Node table, std::span<const int> ids) {
  Tape& t = tape_of(table, "gather_rows");
  const Matrix& vt = table.value();
  Tape::Entry e;
  e.op = Op::GatherRows;
  e.a = table.id();
  e.constant = table.is_constant();
  e.value.resize(static_cast<Eigen::Index>(ids.size()), vt.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vt.rows()) {
      throw ContractError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                          std::to_string(vt.rows()) + " rows");
    }
    e.value.row(static_cast<Eigen::Index>(i)) = vt.row(ids[i]);
  }
  e.index.assign(ids.begin(), ids.end());
  return t.push(std::move(e));
}

Node mean_of(std::span<const Node> parts) {
  if (parts.empty()) throw ContractError("mean_of: no operands");
  Tape& t = tape_of(parts[0], "mean_of");
  Tape::Entry e;
  e.op = Op::MeanOf;
  e.constant = true;
  e.value = parts[0].value();
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Node& p = parts[i];
    if (p.tape() != &t) throw ContractError("mean_of: nodes on different tapes");
    require_same_shape(parts[0].value(), p.value(), "mean_of");
    if (i > 0) e.value += p.value();
    e.constant = e.constant && p.is_constant();
    e.inputs.push_back(p.id());
  }
  // A single operand is returned bit for bit.
  if (parts.size() > 1) e.value /= static_cast<double>(parts.size());
  return t.push(std::move(e));
}

Node mean_of(std::initializer_list<Node> parts) {
  return mean_of(std::span<const Node>(parts.begin(), parts.size()));
}

Node mean_rows(Node a) {
  Tape& t = tape_of(a, "mean_rows");
  const Matrix& va = a.value();
  if (va.rows() == 0) throw DimensionError("mean_rows: empty matrix");
  Tape::Entry e;
  e.op = Op::MeanRows;
  e.a = a.id();
  e.constant = a.is_constant();
  e.value = va.colwise().mean();
  return t.push(std::move(e));
}

Node sum(Node a) {
  Tape& t = tape_of(a, "sum");
  Tape::Entry e;
  e.op = Op::Sum;
  e.a = a.id();
  e.constant = a.is_constant();
  e.value = Matrix::Constant(1, 1, a.value().sum());
  return t.push(std::move(e));
}

Node mse(Node a, Node b) {
  Tape& t = same_tape(a, b, "mse");
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  require_same_shape(va, vb, "mse");
  if (va.size() == 0) throw DimensionError("mse: empty operands");
  Tape::Entry e;
  e.op = Op::Mse;
  e.a = a.id();
  e.b = b.id();
  e.constant = a.is_constant() && b.is_constant();
  e.value = Matrix::Constant(1, 1, (va - vb).squaredNorm() / static_cast<double>(va.size()));
  return t.push(std::move(e));
}

Node cross_entropy(Node logits, std::span<const int> targets, int ignore_index) {
  Tape& t = tape_of(logits, "cross_entropy");
  const Matrix& v = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != v.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for logits " + shape_string(v));
  }
  if (!v.allFinite()) throw NumericError("cross_entropy: non-finite logits");
  Tape::Entry e;
  e.op = Op::CrossEntropy;
  e.a = logits.id();
  e.constant = logits.is_constant();
  e.aux = Matrix::Zero(v.rows(), v.cols());
  double total = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const int tgt = targets[static_cast<std::size_t>(i)];
    if (tgt == ignore_index) continue;
    if (tgt < 0 || tgt >= v.cols()) {
      throw ContractError("cross_entropy: target " + std::to_string(tgt) + " outside " +
                          std::to_string(v.cols()) + " classes");
    }
    const double mx = v.row(i).maxCoeff();
    e.aux.row(i) = (v.row(i).array() - mx).exp().matrix();
    const double z = e.aux.row(i).sum();
    total += mx + std::log(z) - v(i, tgt);
    e.aux.row(i) /= z;
    e.aux(i, tgt) -= 1.0;
    ++count;
  }
  if (count == 0) throw ContractError("cross_entropy: every target is ignored");
  e.aux /= static_cast<double>(count);
  e.value = Matrix::Constant(1, 1, total / count);
  return t.push(std::move(e));
}

Node detach(Node a) {
  Tape& t = tape_of(a, "detach");
  Tape::Entry e;
  e.op = Op::Detach;
  e.a = a.id();
  e.constant = true;
  e.value = a.value();
  return t.push(std::move(e));
}

Node lstm_cell(Node z, Node c_prev) {
  Tape& t = same_tape(z, c_prev, "lstm_cell");
  const Matrix& vz = z.value();
  const Matrix& vc = c_prev.value();
  const Eigen::Index d = vc.cols();
  if (vz.rows() != vc.rows() || vz.cols() != 4 * d) {
    throw DimensionError("lstm_cell: gates " + shape_string(vz) + " vs cell " + shape_string(vc));
  }
  auto sig = [](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double q = std::exp(x);
    return q / (1.0 + q);
  };
  Tape::Entry e;
  e.op = Op::LstmCell;
  e.a = z.id();
  e.b = c_prev.id();
  e.constant = z.is_constant() && c_prev.is_constant();
  e.aux.resize(vz.rows(), 5 * d);
  e.aux.middleCols(0, d) = vz.middleCols(0, d).unaryExpr(sig);
  e.aux.middleCols(d, d) = vz.middleCols(d, d).unaryExpr(sig);
  e.aux.middleCols(2 * d, d) = vz.middleCols(2 * d, d).array().tanh().matrix();
  e.aux.middleCols(3 * d, d) = vz.middleCols(3 * d, d).unaryExpr(sig);
  e.value.resize(vz.rows(), 2 * d);
  e.value.rightCols(d) = (e.aux.middleCols(d, d).array() * vc.array() +
                          e.aux.middleCols(0, d).array() * e.aux.middleCols(2 * d, d).array())
                             .matrix();
  e.aux.middleCols(4 * d, d) = e.value.rightCols(d).array().tanh().matrix();
  e.value.leftCols(d) =
      (e.aux.middleCols(3 * d, d).array() * e.aux.middleCols(4 * d, d).array()).matrix();
  return t.push(std::move(e));
}

// ---------------------------------------------------------------------------
// Gradient checking

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport check_gradients(const ScalarFn& f, ParamStore& store, double step, double tol,
                                const std::vector<std::string>& names) {
  auto evaluate = [&]() {
    Tape tape;
    const double v = f(tape).scalar();
    if (!std::isfinite(v)) throw NumericError("check_gradients: non-finite loss");
    return v;
  };

  store.zero_grad();
  {
    Tape tape;
    Node loss = f(tape);
    if (!std::isfinite(loss.scalar())) throw NumericError("check_gradients: non-finite loss");
    tape.backward(loss);
  }

  GradCheckReport report;
  report.tolerance = tol;
  const std::vector<std::string> which = names.empty() ? store.names() : names;
  for (const std::string& name : which) {
    Parameter& p = store.at(name);
    const Matrix analytic = p.grad;
    GradCheckEntry entry;
    entry.name = name;
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double orig = p.value.data()[i];
      p.value.data()[i] = orig + step;
      const double up = evaluate();
      p.value.data()[i] = orig - step;
      const double down = evaluate();
      p.value.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic.data()[i];
      entry.max_rel_error = std::max(entry.max_rel_error, relative_error(a, numeric));
      entry.max_abs_analytic = std::max(entry.max_abs_analytic, std::abs(a));
      entry.max_abs_numeric = std::max(entry.max_abs_numeric, std::abs(numeric));
    }
    entry.passed = entry.max_rel_error < tol;
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.passed = report.passed && entry.passed;
    report.entries.push_back(std::move(entry));
  }
  store.zero_grad();
  return report;
}

}  // namespace vamt::ad
