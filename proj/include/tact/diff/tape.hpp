#pragma once

#include "tact/diff/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tact::diff {

enum class Op : std::uint8_t {
  Constant,
  Param,
  MatMul,
  Add,
  AddRowBroadcast,
  Sub,
  Mul,
  Scale,
  Tanh,
  Sigmoid,
  Exp,
  Log,
  Softmax,
  LogSoftmax,
  ConcatCols,
  StackRows,
  SliceCols,
  Row,
  Transpose,
  Embedding,
  Dropout,
  Pick,
  Sum,
  Linear,
};

const char* op_name(Op op);

/// Raised for operand shape mismatches; the message names the op and shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while its tape lives.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  ConstMatrixMap value() const;
  double scalar() const;
  Eigen::Index rows() const;
  Eigen::Index cols() const;
};

/// Eager reverse-mode tape. Every op computes its value immediately and, when
/// recording, appends a backward rule. Nodes are stored in creation order,
/// which is a topological order, so backward is a single reverse sweep.
///
/// Parameter leaves alias the storage of the ParamSet they were drawn from;
/// that ParamSet must stay unmodified while the tape is alive.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Matrix value);
  Var scalar_constant(double v);
  /// Leaf for params[index]; repeated calls return the same node.
  Var param(const ParamSet& params, std::size_t index);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  /// a (n x m) plus row vector b (1 x m) added to every row.
  Var add_row_broadcast(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var exp(Var a);
  Var log(Var a);
  /// Softmax over the last axis (each row).
  Var softmax(Var a);
  Var log_softmax(Var a);
  Var concat_cols(std::span<const Var> parts);
  /// Stacks 1 x m rows into an n x m matrix.
  Var stack_rows(std::span<const Var> rows);
  Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count);
  Var row(Var a, Eigen::Index r);
  Var transpose(Var a);
  /// Gathers rows `ids` of the table into a (ids.size() x dim) matrix.
  Var embedding_lookup(Var table, std::span<const int> ids);
  /// Elementwise product with a caller-supplied constant mask.
  Var dropout_mask_apply(Var a, const Matrix& mask);
  Var pick(Var a, Eigen::Index r, Eigen::Index c);
  Var sum(Var a);
  /// sum_i weights[i] * scalars[i]; the weights are constants.
  Var linear(std::span<const Var> scalars, std::span<const double> weights);

  /// Propagates d(loss)/d(node) for every node. Clears earlier gradients, so
  /// it may be called again with a different loss on the same tape.
  void backward(Var loss);

  /// Gradient of the last backward() loss with respect to each tensor of
  /// `params`; tensors never drawn onto the tape get zeros.
  ParamSet gradients(const ParamSet& params) const;
  /// into += scale * gradients(params), without materializing the copy.
  void accumulate_gradients(const ParamSet& params, ParamSet& into, double scale = 1.0) const;
  /// Gradient with respect to an arbitrary node (zeros if unreachable).
  Matrix gradient(Var v) const;

  /// Test hook: multiplies the incoming gradient of every node of kind `op`
  /// before its backward rule runs, corrupting that rule.
  void inject_fault(Op op, double factor) {
    fault_op_ = op;
    fault_factor_ = factor;
    has_fault_ = true;
  }

 private:
  friend struct Var;
  using Backward = std::function<void(Tape&, std::uint32_t)>;

  struct Node {
    Matrix own;
    const double* external = nullptr;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    Matrix grad;
    Backward backward;
    Op op = Op::Constant;
    bool needs_grad = false;
    int param_index = -1;
  };

  ConstMatrixMap val(std::uint32_t id) const;
  const Matrix& grad_of(std::uint32_t id) const { return nodes_[id].grad; }
  /// Zero-initialized gradient buffer of node id, allocated on first use.
  Matrix& grad_buf(std::uint32_t id);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  Var push(Op op, Matrix value, bool needs_grad, Backward backward);
  void check_same_tape(Var v) const;

  std::vector<Node> nodes_;
  std::vector<std::int64_t> param_nodes_;
  const ParamSet* bound_params_ = nullptr;
  bool record_;
  bool has_fault_ = false;
  Op fault_op_ = Op::Constant;
  double fault_factor_ = 1.0;
};

}  // namespace tact::diff
