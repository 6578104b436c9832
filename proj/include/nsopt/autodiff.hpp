#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nsopt/tensor.hpp"
#include "nsopt/varspace.hpp"

namespace nsopt {

enum class OpKind : std::uint8_t {
  Leaf,       // differentiable input
  Constant,   // fixed data captured by the program
  Add,
  Sub,
  Neg,
  Mul,        // elementwise
  Smul,       // scalar * tensor
  MatMul,
  Transpose,
  Reshape,
  Sum,
  Dot,
  Abs,
  Sign,
  Relu,
  Max,        // elementwise two-argument max; ties go to the first argument
  Norm1,
  Norm2,
  SqNorm2,
};

/// Reverse-mode tape. Nodes are appended eagerly with their primal values
/// already computed, so inputs always reference earlier indices. A tape
/// belongs to a single evaluation and is not shared between threads.
class Tape {
public:
  struct Node {
    OpKind kind;
    int a = -1;
    int b = -1;
    double c = 0.0;  // scalar operand of Smul
    Tensor value;
  };

  int leaf(Tensor v);
  int constant(Tensor v);
  int apply(OpKind kind, int a, int b = -1, double c = 0.0, const Shape* reshape_to = nullptr);

  const Tensor& value(int id) const { return nodes_.at(id).value; }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Adjoints of every node reachable from `output`, seeded with `seed`
  /// (a scalar output gets seed 1 by default). Returns adjoints of the
  /// requested nodes, zero tensors for nodes the output does not depend on.
  std::vector<Tensor> backward(int output, std::span<const int> wrt,
                               double seed = 1.0) const;

private:
  int push(Node n);
  std::vector<Node> nodes_;
};

/// Handle to a tape node; supports operator syntax for building programs.
class TracedTensor {
public:
  TracedTensor() = default;
  TracedTensor(Tape* tape, int id) : tape_(tape), id_(id) {}

  int id() const { return id_; }
  Tape& tape() const { return *tape_; }
  const Tensor& value() const { return tape_->value(id_); }

private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

TracedTensor operator+(const TracedTensor& a, const TracedTensor& b);
TracedTensor operator-(const TracedTensor& a, const TracedTensor& b);
TracedTensor operator-(const TracedTensor& a);
TracedTensor operator*(const TracedTensor& a, const TracedTensor& b);  // elementwise
TracedTensor operator*(double c, const TracedTensor& a);
TracedTensor operator-(const TracedTensor& a, double c);

TracedTensor matmul(const TracedTensor& a, const TracedTensor& b);
TracedTensor transpose(const TracedTensor& a);
TracedTensor reshape(const TracedTensor& a, Shape shape);
TracedTensor sum(const TracedTensor& a);
TracedTensor dot(const TracedTensor& a, const TracedTensor& b);
TracedTensor abs(const TracedTensor& a);
TracedTensor sign(const TracedTensor& a);
TracedTensor relu(const TracedTensor& a);
TracedTensor max(const TracedTensor& a, const TracedTensor& b);
TracedTensor norm1(const TracedTensor& a);
TracedTensor norm2(const TracedTensor& a);
TracedTensor sqnorm2(const TracedTensor& a);

/// The traced variables handed to a program, in the order of their VarSpace.
class TracedVars {
public:
  TracedVars(std::vector<std::string> names, std::vector<TracedTensor> vars)
      : names_(std::move(names)), vars_(std::move(vars)) {}

  const TracedTensor& operator[](const std::string& name) const;
  const std::vector<TracedTensor>& all() const { return vars_; }

private:
  std::vector<std::string> names_;
  std::vector<TracedTensor> vars_;
};

/// Scalar outputs of a program: objective, inequality constraints
/// (c <= 0), equality constraints (c = 0).
struct ProgramOutputs {
  TracedTensor objective;
  std::vector<TracedTensor> ineq;
  std::vector<TracedTensor> eq;
};

/// A pure function from traced variables to outputs. Re-evaluating at the
/// same point must rebuild an identical tape.
using TensorProgram = std::function<ProgramOutputs(Tape&, const TracedVars&)>;

/// One recorded evaluation: the tape plus the ids needed to read values
/// and run backward passes.
struct Recording {
  Tape tape;
  int f_id = -1;
  std::vector<int> ci_ids;
  std::vector<int> ce_ids;
  std::vector<int> leaf_ids;  // one per VarSpace entry, declaration order

  double f() const { return tape.value(f_id).scalar_value(); }
  Eigen::VectorXd ci() const;
  Eigen::VectorXd ce() const;

  /// Gradient of the scalar node `output` with respect to the variables,
  /// packed in declaration order.
  FlatVector gradient(int output, const VarSpace& space, double seed = 1.0) const;
};

/// Runs the program at `point`, recording every primitive. Throws
/// NonFiniteValueError if any intermediate value is NaN/Inf.
Recording evaluate_and_record(const TensorProgram& prog, const VarSpace& space,
                              const VarStruct& point);

/// Max over outputs and coordinates of the relative difference between
/// the recorded gradients and central finite differences with step h.
double gradient_check(const TensorProgram& prog, const VarSpace& space,
                      const VarStruct& point, double h);

}  // namespace nsopt
