#include "tact/diff/tape.hpp"

#include <cmath>
#include <sstream>

namespace tact::diff {

namespace {

std::string dims(Eigen::Index r, Eigen::Index c) {
  return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
}

[[noreturn]] void shape_fail(Op op, const std::string& detail) {
  throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + detail);
}

Matrix row_softmax(const Eigen::Ref<const Matrix>& x) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Param: return "param";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::AddRowBroadcast: return "add_row_broadcast";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Softmax: return "softmax";
    case Op::LogSoftmax: return "log_softmax";
    case Op::ConcatCols: return "concat";
    case Op::StackRows: return "stack_rows";
    case Op::SliceCols: return "slice";
    case Op::Row: return "row";
    case Op::Transpose: return "transpose";
    case Op::Embedding: return "embedding_lookup";
    case Op::Dropout: return "dropout_mask_apply";
    case Op::Pick: return "pick";
    case Op::Sum: return "sum";
    case Op::Linear: return "linear";
  }
  return "?";
}

ConstMatrixMap Var::value() const { return tape->val(id); }

double Var::scalar() const {
  auto v = value();
  if (v.size() != 1) throw ShapeError("scalar(): node is " + dims(v.rows(), v.cols()));
  return v(0, 0);
}

Eigen::Index Var::rows() const { return tape->nodes_[id].rows; }
Eigen::Index Var::cols() const { return tape->nodes_[id].cols; }

ConstMatrixMap Tape::val(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return ConstMatrixMap(n.external ? n.external : n.own.data(), n.rows, n.cols);
}

Matrix& Tape::grad_buf(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.rows, n.cols);
  return n.grad;
}

void Tape::check_same_tape(Var v) const {
  if (v.tape != this) throw std::invalid_argument("Var belongs to a different tape");
}

Var Tape::push(Op op, Matrix value, bool needs_grad, Backward backward) {
  Node n;
  n.rows = value.rows();
  n.cols = value.cols();
  n.own = std::move(value);
  n.op = op;
  n.needs_grad = record_ && needs_grad;
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Matrix value) { return push(Op::Constant, std::move(value), false, {}); }

Var Tape::scalar_constant(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Var Tape::param(const ParamSet& params, std::size_t index) {
  if (bound_params_ == nullptr) {
    bound_params_ = &params;
    param_nodes_.assign(params.size(), -1);
  } else if (bound_params_ != &params) {
    throw std::invalid_argument("Tape::param: a tape binds a single ParamSet");
  }
  if (index >= params.size()) throw std::out_of_range("Tape::param: index out of range");
  if (param_nodes_[index] >= 0) {
    return Var{this, static_cast<std::uint32_t>(param_nodes_[index])};
  }
  const Tensor& t = params[index];
  Node n;
  n.external = t.values().data();
  n.rows = static_cast<Eigen::Index>(t.rows());
  n.cols = static_cast<Eigen::Index>(t.cols());
  n.op = Op::Param;
  n.needs_grad = record_;
  n.param_index = static_cast<int>(index);
  nodes_.push_back(std::move(n));
  param_nodes_[index] = static_cast<std::int64_t>(nodes_.size() - 1);
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::matmul(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  if (a.cols() != b.rows()) {
    shape_fail(Op::MatMul, dims(a.rows(), a.cols()) + " * " + dims(b.rows(), b.cols()));
  }
  Matrix out = a.value() * b.value();
  const auto ia = a.id, ib = b.id;
  return push(Op::MatMul, std::move(out), needs(a) || needs(b), [ia, ib](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_of(self);
    if (t.nodes_[ia].needs_grad) t.grad_buf(ia).noalias() += g * t.val(ib).transpose();
    if (t.nodes_[ib].needs_grad) t.grad_buf(ib).noalias() += t.val(ia).transpose() * g;
  });
}

Var Tape::add(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    shape_fail(Op::Add, dims(a.rows(), a.cols()) + " + " + dims(b.rows(), b.cols()));
  }
  Matrix out = a.value() + b.value();
  const auto ia = a.id, ib = b.id;
  return push(Op::Add, std::move(out), needs(a) || needs(b), [ia, ib](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_of(self);
    if (t.nodes_[ia].needs_grad) t.grad_buf(ia) += g;
    if (t.nodes_[ib].needs_grad) t.grad_buf(ib) += g;
  });
}

Var Tape::add_row_broadcast(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  if (b.rows() != 1 || a.cols() != b.cols()) {
    shape_fail(Op::AddRowBroadcast, dims(a.rows(), a.cols()) + " + " + dims(b.rows(), b.cols()));
  }
  Matrix out = a.value().rowwise() + b.value().row(0);
  const auto ia = a.id, ib = b.id;
  return push(Op::AddRowBroadcast, std::move(out), needs(a) || needs(b),
              [ia, ib](Tape& t, std::uint32_t self) {
                const Matrix& g = t.grad_of(self);
                if (t.nodes_[ia].needs_grad) t.grad_buf(ia) += g;
                if (t.nodes_[ib].needs_grad) t.grad_buf(ib) += g.colwise().sum();
              });
}

Var Tape::sub(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    shape_fail(Op::Sub, dims(a.rows(), a.cols()) + " - " + dims(b.rows(), b.cols()));
  }
  Matrix out = a.value() - b.value();
  const auto ia = a.id, ib = b.id;
  return push(Op::Sub, std::move(out), needs(a) || needs(b), [ia, ib](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_of(self);
    if (t.nodes_[ia].needs_grad) t.grad_buf(ia) += g;
    if (t.nodes_[ib].needs_grad) t.grad_buf(ib) -= g;
  });
}

Var Tape::mul(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    shape_fail(Op::Mul, dims(a.rows(), a.cols()) + " .* " + dims(b.rows(), b.cols()));
  }
  Matrix out = a.value().cwiseProduct(b.value());
  const auto ia = a.id, ib = b.id;
  return push(Op::Mul, std::move(out), needs(a) || needs(b), [ia, ib](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_of(self);
    if (t.nodes_[ia].needs_grad) t.grad_buf(ia) += g.cwiseProduct(t.val(ib));
    if (t.nodes_[ib].needs_grad) t.grad_buf(ib) += g.cwiseProduct(t.val(ia));
  });
}

Var Tape::scale(Var a, double s) {
  check_same_tape(a);
  Matrix out = a.value() * s;
  const auto ia = a.id;
  return push(Op::Scale, std::move(out), needs(a), [ia, s](Tape& t, std::uint32_t self) {
    t.grad_buf(ia) += t.grad_of(self) * s;
  });
}

Var Tape::tanh(Var a) {
  check_same_tape(a);
  Matrix out = a.value().array().tanh().matrix();
  const auto ia = a.id;
  return push(Op::Tanh, std::move(out), needs(a), [ia](Tape& t, std::uint32_t self) {
    auto y = t.val(self).array();
    t.grad_buf(ia).array() += t.grad_of(self).array() * (1.0 - y * y);
  });
}

Var Tape::sigmoid(Var a) {
  check_same_tape(a);
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  const auto ia = a.id;
  return push(Op::Sigmoid, std::move(out), needs(a), [ia](Tape& t, std::uint32_t self) {
    auto y = t.val(self).array();
    t.grad_buf(ia).array() += t.grad_of(self).array() * y * (1.0 - y);
  });
}

Var Tape::exp(Var a) {
  check_same_tape(a);
  Matrix out = a.value().array().exp().matrix();
  const auto ia = a.id;
  return push(Op::Exp, std::move(out), needs(a), [ia](Tape& t, std::uint32_t self) {
    t.grad_buf(ia).array() += t.grad_of(self).array() * t.val(self).array();
  });
}

Var Tape::log(Var a) {
  check_same_tape(a);
  Matrix out = a.value().array().log().matrix();
  const auto ia = a.id;
  return push(Op::Log, std::move(out), needs(a), [ia](Tape& t, std::uint32_t self) {
    t.grad_buf(ia).array() += t.grad_of(self).array() / t.val(ia).array();
  });
}

Var Tape::softmax(Var a) {
  check_same_tape(a);
  Matrix out = row_softmax(a.value());
  const auto ia = a.id;
  return push(Op::Softmax, std::move(out), needs(a), [ia](Tape& t, std::uint32_t self) {
    auto y = t.val(self);
    const Matrix& g = t.grad_of(self);
    Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    Matrix centered = g.colwise() - dot;
    t.grad_buf(ia) += y.cwiseProduct(centered);
  });
}

Var Tape::log_softmax(Var a) {
  check_same_tape(a);
  auto x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  const auto ia = a.id;
  return push(Op::LogSoftmax, std::move(out), needs(a), [ia](Tape& t, std::uint32_t self) {
    Matrix p = t.val(self).array().exp().matrix();
    const Matrix& g = t.grad_of(self);
    Eigen::VectorXd gsum = g.rowwise().sum();
    Matrix& dst = t.grad_buf(ia);
    for (Eigen::Index r = 0; r < g.rows(); ++r) dst.row(r) += g.row(r) - gsum(r) * p.row(r);
  });
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) shape_fail(Op::ConcatCols, "no operands");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  bool any = false;
  std::string desc;
  for (const Var& p : parts) {
    check_same_tape(p);
    desc += dims(p.rows(), p.cols());
    cols += p.cols();
    any = any || needs(p);
  }
  for (const Var& p : parts) {
    if (p.rows() != rows) shape_fail(Op::ConcatCols, desc);
  }
  Matrix out(rows, cols);
  std::vector<std::uint32_t> ids;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
    ids.push_back(p.id);
  }
  return push(Op::ConcatCols, std::move(out), any, [ids](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_of(self);
    Eigen::Index off = 0;
    for (auto id : ids) {
      const Eigen::Index c = t.nodes_[id].cols;
      if (t.nodes_[id].needs_grad) t.grad_buf(id) += g.middleCols(off, c);
      off += c;
    }
  });
}

Var Tape::stack_rows(std::span<const Var> rows) {
  if (rows.empty()) shape_fail(Op::StackRows, "no operands");
  const Eigen::Index cols = rows[0].cols();
  bool any = false;
  for (const Var& r : rows) {
    check_same_tape(r);
    if (r.rows() != 1 || r.cols() != cols) {
      shape_fail(Op::StackRows, "row " + dims(r.rows(), r.cols()) + " vs width " + std::to_string(cols));
    }
    any = any || needs(r);
  }
  Matrix out(static_cast<Eigen::Index>(rows.size()), cols);
  std::vector<std::uint32_t> ids;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = rows[i].value().row(0);
    ids.push_back(rows[i].id);
  }
  return push(Op::StackRows, std::move(out), any, [ids](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_of(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (t.nodes_[ids[i]].needs_grad) t.grad_buf(ids[i]) += g.row(static_cast<Eigen::Index>(i));
    }
  });
}

Var Tape::slice_cols(Var a, Eigen::Index begin, Eigen::Index count) {
  check_same_tape(a);
  if (begin < 0 || count < 0 || begin + count > a.cols()) {
    shape_fail(Op::SliceCols, dims(a.rows(), a.cols()) + " cols [" + std::to_string(begin) + "," +
                                  std::to_string(begin + count) + ")");
  }
  Matrix out = a.value().middleCols(begin, count);
  const auto ia = a.id;
  return push(Op::SliceCols, std::move(out), needs(a), [ia, begin, count](Tape& t, std::uint32_t self) {
    t.grad_buf(ia).middleCols(begin, count) += t.grad_of(self);
  });
}

Var Tape::row(Var a, Eigen::Index r) {
  check_same_tape(a);
  if (r < 0 || r >= a.rows()) {
    shape_fail(Op::Row, dims(a.rows(), a.cols()) + " row " + std::to_string(r));
  }
  Matrix out = a.value().row(r);
  const auto ia = a.id;
  return push(Op::Row, std::move(out), needs(a), [ia, r](Tape& t, std::uint32_t self) {
    t.grad_buf(ia).row(r) += t.grad_of(self).row(0);
  });
}

Var Tape::transpose(Var a) {
  check_same_tape(a);
  Matrix out = a.value().transpose();
  const auto ia = a.id;
  return push(Op::Transpose, std::move(out), needs(a), [ia](Tape& t, std::uint32_t self) {
    t.grad_buf(ia) += t.grad_of(self).transpose();
  });
}

Var Tape::embedding_lookup(Var table, std::span<const int> ids) {
  check_same_tape(table);
  auto tv = table.value();
  Matrix out(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tv.rows()) {
      shape_fail(Op::Embedding, "id " + std::to_string(ids[i]) + " outside table " +
                                    dims(tv.rows(), tv.cols()));
    }
    out.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
  }
  const auto it = table.id;
  std::vector<int> idv(ids.begin(), ids.end());
  return push(Op::Embedding, std::move(out), needs(table), [it, idv](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_of(self);
    Matrix& dst = t.grad_buf(it);
    for (std::size_t i = 0; i < idv.size(); ++i) dst.row(idv[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Var Tape::dropout_mask_apply(Var a, const Matrix& mask) {
  check_same_tape(a);
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) {
    shape_fail(Op::Dropout, dims(a.rows(), a.cols()) + " mask " + dims(mask.rows(), mask.cols()));
  }
  Matrix out = a.value().cwiseProduct(mask);
  const auto ia = a.id;
  Var m = constant(mask);
  const auto im = m.id;
  return push(Op::Dropout, std::move(out), needs(a), [ia, im](Tape& t, std::uint32_t self) {
    t.grad_buf(ia) += t.grad_of(self).cwiseProduct(t.val(im));
  });
}

Var Tape::pick(Var a, Eigen::Index r, Eigen::Index c) {
  check_same_tape(a);
  if (r < 0 || c < 0 || r >= a.rows() || c >= a.cols()) {
    shape_fail(Op::Pick, dims(a.rows(), a.cols()) + " at (" + std::to_string(r) + "," +
                             std::to_string(c) + ")");
  }
  Matrix out(1, 1);
  out(0, 0) = a.value()(r, c);
  const auto ia = a.id;
  return push(Op::Pick, std::move(out), needs(a), [ia, r, c](Tape& t, std::uint32_t self) {
    t.grad_buf(ia)(r, c) += t.grad_of(self)(0, 0);
  });
}

Var Tape::sum(Var a) {
  check_same_tape(a);
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const auto ia = a.id;
  return push(Op::Sum, std::move(out), needs(a), [ia](Tape& t, std::uint32_t self) {
    t.grad_buf(ia).array() += t.grad_of(self)(0, 0);
  });
}

Var Tape::linear(std::span<const Var> scalars, std::span<const double> weights) {
  if (scalars.size() != weights.size()) {
    shape_fail(Op::Linear, std::to_string(scalars.size()) + " terms vs " +
                               std::to_string(weights.size()) + " weights");
  }
  double acc = 0.0;
  bool any = false;
  std::vector<std::uint32_t> ids;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    check_same_tape(scalars[i]);
    acc += weights[i] * scalars[i].scalar();
    any = any || needs(scalars[i]);
    ids.push_back(scalars[i].id);
  }
  Matrix out(1, 1);
  out(0, 0) = acc;
  std::vector<double> w(weights.begin(), weights.end());
  return push(Op::Linear, std::move(out), any, [ids, w](Tape& t, std::uint32_t self) {
    const double g = t.grad_of(self)(0, 0);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (t.nodes_[ids[i]].needs_grad) t.grad_buf(ids[i])(0, 0) += g * w[i];
    }
  });
}

void Tape::backward(Var loss) {
  check_same_tape(loss);
  if (loss.value().size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + dims(loss.rows(), loss.cols()));
  }
  if (!record_) throw std::logic_error("backward: tape was not recording");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[loss.id].needs_grad) return;
  grad_buf(loss.id)(0, 0) = 1.0;
  for (std::int64_t i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.backward || n.grad.size() == 0) continue;
    if (has_fault_ && n.op == fault_op_) n.grad *= fault_factor_;
    n.backward(*this, static_cast<std::uint32_t>(i));
  }
}

ParamSet Tape::gradients(const ParamSet& params) const {
  ParamSet out = params.zeros_like();
  accumulate_gradients(params, out, 1.0);
  return out;
}

void Tape::accumulate_gradients(const ParamSet& params, ParamSet& into, double scale) const {
  if (bound_params_ == nullptr) return;
  if (bound_params_ != &params) throw std::invalid_argument("gradients: ParamSet not bound to tape");
  for (std::size_t i = 0; i < param_nodes_.size(); ++i) {
    if (param_nodes_[i] < 0) continue;
    const Node& n = nodes_[static_cast<std::size_t>(param_nodes_[i])];
    if (n.grad.size() == 0) continue;
    into[i].matrix() += scale * n.grad;
  }
}

Matrix Tape::gradient(Var v) const {
  check_same_tape(v);
  const Node& n = nodes_[v.id];
  if (n.grad.size() == 0) return Matrix::Zero(n.rows, n.cols);
  return n.grad;
}

}  // namespace tact::diff
