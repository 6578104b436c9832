#include "nsopt/autodiff.hpp"

#include <algorithm>

namespace nsopt {

namespace {

Tensor eval_primal(OpKind kind, const Tensor* a, const Tensor* b, double c,
                   const Shape* reshape_to) {
  using namespace kernels;
  switch (kind) {
    case OpKind::Add: return add(*a, *b);
    case OpKind::Sub: return sub(*a, *b);
    case OpKind::Neg: return neg(*a);
    case OpKind::Mul: return mul(*a, *b);
    case OpKind::Smul: return smul(c, *a);
    case OpKind::MatMul: return matmul(*a, *b);
    case OpKind::Transpose: return transpose(*a);
    case OpKind::Reshape: return reshape(*a, *reshape_to);
    case OpKind::Sum: return sum(*a);
    case OpKind::Dot: return dot(*a, *b);
    case OpKind::Abs: return abs(*a);
    case OpKind::Sign: return sign(*a);
    case OpKind::Relu: return relu(*a);
    case OpKind::Max: return max(*a, *b);
    case OpKind::Norm1: return norm1(*a);
    case OpKind::Norm2: return norm2(*a);
    case OpKind::SqNorm2: return sqnorm2(*a);
    default: throw UnsupportedOpError("eval_primal: not a computed op");
  }
}

void accumulate(Tensor& adj, const Tensor& contribution) {
  if (adj.empty()) adj = Tensor::zeros_like(contribution);
  for (Index i = 0; i < adj.size(); ++i) adj[i] = adj[i] + contribution[i];
}

}  // namespace

int Tape::push(Node n) {
  if (!n.value.all_finite())
    throw NonFiniteValueError("non-finite value produced during evaluation");
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(Tensor v) { return push(Node{OpKind::Leaf, -1, -1, 0.0, std::move(v)}); }

int Tape::constant(Tensor v) {
  return push(Node{OpKind::Constant, -1, -1, 0.0, std::move(v)});
}

int Tape::apply(OpKind kind, int a, int b, double c, const Shape* reshape_to) {
  const Tensor* av = a >= 0 ? &nodes_.at(a).value : nullptr;
  const Tensor* bv = b >= 0 ? &nodes_.at(b).value : nullptr;
  Tensor value = eval_primal(kind, av, bv, c, reshape_to);
  return push(Node{kind, a, b, c, std::move(value)});
}

std::vector<Tensor> Tape::backward(int output, std::span<const int> wrt,
                                   double seed) const {
  if (output < 0 || output >= static_cast<int>(nodes_.size()))
    throw UnknownOutputError("backward: unknown output node");
  if (!nodes_[output].value.is_scalar())
    throw UnknownOutputError("backward: output is not a recorded scalar");

  std::vector<Tensor> adj(nodes_.size());
  adj[output] = Tensor::scalar(seed);

  using namespace kernels;
  for (int id = output; id >= 0; --id) {
    const Node& n = nodes_[id];
    if (adj[id].empty()) continue;
    const Tensor& g = adj[id];
    switch (n.kind) {
      case OpKind::Leaf:
      case OpKind::Constant:
        break;
      case OpKind::Add:
        accumulate(adj[n.a], g);
        accumulate(adj[n.b], g);
        break;
      case OpKind::Sub:
        accumulate(adj[n.a], g);
        accumulate(adj[n.b], neg(g));
        break;
      case OpKind::Neg:
        accumulate(adj[n.a], neg(g));
        break;
      case OpKind::Mul:
        accumulate(adj[n.a], mul(g, nodes_[n.b].value));
        accumulate(adj[n.b], mul(g, nodes_[n.a].value));
        break;
      case OpKind::Smul:
        accumulate(adj[n.a], smul(n.c, g));
        break;
      case OpKind::MatMul: {
        const Tensor& a = nodes_[n.a].value;
        const Tensor& b = nodes_[n.b].value;
        if (b.rank() == 2) {
          accumulate(adj[n.a], matmul(g, transpose(b)));
          accumulate(adj[n.b], matmul(transpose(a), g));
        } else {
          // a [r,k] * b [k] -> g [r]:  da = outer(g, b), db = a^T g
          Tensor da(Shape{a.rows(), a.cols()});
          for (Index i = 0; i < a.rows(); ++i)
            for (Index j = 0; j < a.cols(); ++j) da.at2(i, j) = g[i] * b[j];
          accumulate(adj[n.a], da);
          accumulate(adj[n.b], matmul(transpose(a), g));
        }
        break;
      }
      case OpKind::Transpose:
        accumulate(adj[n.a], transpose(g));
        break;
      case OpKind::Reshape:
        accumulate(adj[n.a], reshape(g, nodes_[n.a].value.shape()));
        break;
      case OpKind::Sum: {
        const Tensor& a = nodes_[n.a].value;
        Tensor da = Tensor::zeros_like(a);
        for (Index i = 0; i < a.size(); ++i) da[i] = g[0];
        accumulate(adj[n.a], da);
        break;
      }
      case OpKind::Dot:
        accumulate(adj[n.a], smul(g[0], nodes_[n.b].value));
        accumulate(adj[n.b], smul(g[0], nodes_[n.a].value));
        break;
      case OpKind::Abs: {
        const Tensor& a = nodes_[n.a].value;
        Tensor da = Tensor::zeros_like(a);
        for (Index i = 0; i < a.size(); ++i) da[i] = g[i] * sign_of(a[i]);
        accumulate(adj[n.a], da);
        break;
      }
      case OpKind::Sign:
        // zero derivative almost everywhere; kinks contribute nothing
        break;
      case OpKind::Relu: {
        const Tensor& a = nodes_[n.a].value;
        Tensor da = Tensor::zeros_like(a);
        for (Index i = 0; i < a.size(); ++i) da[i] = a[i] > 0.0 ? g[i] : 0.0;
        accumulate(adj[n.a], da);
        break;
      }
      case OpKind::Max: {
        const Tensor& a = nodes_[n.a].value;
        const Tensor& b = nodes_[n.b].value;
        Tensor da = Tensor::zeros_like(a);
        Tensor db = Tensor::zeros_like(b);
        for (Index i = 0; i < a.size(); ++i) {
          if (a[i] >= b[i]) da[i] = g[i];
          else db[i] = g[i];
        }
        accumulate(adj[n.a], da);
        accumulate(adj[n.b], db);
        break;
      }
      case OpKind::Norm1: {
        const Tensor& a = nodes_[n.a].value;
        Tensor da = Tensor::zeros_like(a);
        for (Index i = 0; i < a.size(); ++i) da[i] = sign_of(a[i]) * g[0];
        accumulate(adj[n.a], da);
        break;
      }
      case OpKind::Norm2: {
        const Tensor& a = nodes_[n.a].value;
        const double nrm = n.value[0];
        Tensor da = Tensor::zeros_like(a);
        if (nrm != 0.0) {
          const double s = g[0] / nrm;
          for (Index i = 0; i < a.size(); ++i) da[i] = s * a[i];
        }
        accumulate(adj[n.a], da);
        break;
      }
      case OpKind::SqNorm2: {
        const Tensor& a = nodes_[n.a].value;
        const double s = 2.0 * g[0];
        Tensor da = Tensor::zeros_like(a);
        for (Index i = 0; i < a.size(); ++i) da[i] = s * a[i];
        accumulate(adj[n.a], da);
        break;
      }
      default:
        throw UnsupportedOpError("backward: unsupported op");
    }
  }

  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (int id : wrt) {
    if (adj[id].empty())
      out.push_back(Tensor::zeros_like(nodes_[id].value));
    else
      out.push_back(std::move(adj[id]));
  }
  return out;
}

namespace {
TracedTensor unary(const TracedTensor& a, OpKind k) {
  return {&a.tape(), a.tape().apply(k, a.id())};
}
TracedTensor binary(const TracedTensor& a, const TracedTensor& b, OpKind k) {
  return {&a.tape(), a.tape().apply(k, a.id(), b.id())};
}
}  // namespace

TracedTensor operator+(const TracedTensor& a, const TracedTensor& b) {
  return binary(a, b, OpKind::Add);
}
TracedTensor operator-(const TracedTensor& a, const TracedTensor& b) {
  return binary(a, b, OpKind::Sub);
}
TracedTensor operator-(const TracedTensor& a) { return unary(a, OpKind::Neg); }
TracedTensor operator*(const TracedTensor& a, const TracedTensor& b) {
  return binary(a, b, OpKind::Mul);
}
TracedTensor operator*(double c, const TracedTensor& a) {
  return {&a.tape(), a.tape().apply(OpKind::Smul, a.id(), -1, c)};
}
TracedTensor operator-(const TracedTensor& a, double c) {
  TracedTensor cnode{&a.tape(), a.tape().constant(Tensor::scalar(c))};
  return a - cnode;
}

TracedTensor matmul(const TracedTensor& a, const TracedTensor& b) {
  return binary(a, b, OpKind::MatMul);
}
TracedTensor transpose(const TracedTensor& a) { return unary(a, OpKind::Transpose); }
TracedTensor reshape(const TracedTensor& a, Shape shape) {
  return {&a.tape(), a.tape().apply(OpKind::Reshape, a.id(), -1, 0.0, &shape)};
}
TracedTensor sum(const TracedTensor& a) { return unary(a, OpKind::Sum); }
TracedTensor dot(const TracedTensor& a, const TracedTensor& b) {
  return binary(a, b, OpKind::Dot);
}
TracedTensor abs(const TracedTensor& a) { return unary(a, OpKind::Abs); }
TracedTensor sign(const TracedTensor& a) { return unary(a, OpKind::Sign); }
TracedTensor relu(const TracedTensor& a) { return unary(a, OpKind::Relu); }
TracedTensor max(const TracedTensor& a, const TracedTensor& b) {
  return binary(a, b, OpKind::Max);
}
TracedTensor norm1(const TracedTensor& a) { return unary(a, OpKind::Norm1); }
TracedTensor norm2(const TracedTensor& a) { return unary(a, OpKind::Norm2); }
TracedTensor sqnorm2(const TracedTensor& a) { return unary(a, OpKind::SqNorm2); }

const TracedTensor& TracedVars::operator[](const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return vars_[i];
  throw MissingVariableError("program requested unknown variable '" + name + "'");
}

Eigen::VectorXd Recording::ci() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(ci_ids.size()));
  for (std::size_t i = 0; i < ci_ids.size(); ++i) v[i] = tape.value(ci_ids[i]).scalar_value();
  return v;
}

Eigen::VectorXd Recording::ce() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(ce_ids.size()));
  for (std::size_t i = 0; i < ce_ids.size(); ++i) v[i] = tape.value(ce_ids[i]).scalar_value();
  return v;
}

FlatVector Recording::gradient(int output, const VarSpace& space, double seed) const {
  std::vector<Tensor> adj = tape.backward(output, leaf_ids, seed);
  FlatVector g(space.total_dim());
  const auto& entries = space.entries();
  for (std::size_t i = 0; i < entries.size(); ++i)
    g.segment(entries[i].offset, entries[i].size) = adj[i].flat();
  return g;
}

Recording evaluate_and_record(const TensorProgram& prog, const VarSpace& space,
                              const VarStruct& point) {
  Recording rec;
  std::vector<std::string> names;
  std::vector<TracedTensor> traced;
  for (const auto& e : space.entries()) {
    const Tensor& t = point.at(e.name);
    if (t.shape() != e.shape)
      throw ShapeMismatchError("variable '" + e.name + "' has the wrong shape");
    int id = rec.tape.leaf(t);
    rec.leaf_ids.push_back(id);
    names.push_back(e.name);
    traced.emplace_back(&rec.tape, id);
  }
  TracedVars vars(std::move(names), std::move(traced));
  ProgramOutputs out = prog(rec.tape, vars);
  if (!out.objective.value().is_scalar())
    throw ShapeMismatchError("objective is not a scalar");
  rec.f_id = out.objective.id();
  for (const auto& c : out.ineq) {
    if (!c.value().is_scalar()) throw ShapeMismatchError("inequality constraint is not a scalar");
    rec.ci_ids.push_back(c.id());
  }
  for (const auto& c : out.eq) {
    if (!c.value().is_scalar()) throw ShapeMismatchError("equality constraint is not a scalar");
    rec.ce_ids.push_back(c.id());
  }
  return rec;
}

double gradient_check(const TensorProgram& prog, const VarSpace& space,
                      const VarStruct& point, double h) {
  const Recording rec = evaluate_and_record(prog, space, point);
  const Index n = space.total_dim();
  const FlatVector x0 = pack(point, space);

  std::vector<int> outputs;
  outputs.push_back(rec.f_id);
  outputs.insert(outputs.end(), rec.ci_ids.begin(), rec.ci_ids.end());
  outputs.insert(outputs.end(), rec.ce_ids.begin(), rec.ce_ids.end());

  std::vector<FlatVector> ad;
  ad.reserve(outputs.size());
  for (int id : outputs) ad.push_back(rec.gradient(id, space));

  auto eval_outputs = [&](const FlatVector& x) {
    const Recording r = evaluate_and_record(prog, space, unpack(x, space));
    Eigen::VectorXd vals(static_cast<Eigen::Index>(outputs.size()));
    Eigen::Index k = 0;
    vals[k++] = r.f();
    for (int id : r.ci_ids) vals[k++] = r.tape.value(id).scalar_value();
    for (int id : r.ce_ids) vals[k++] = r.tape.value(id).scalar_value();
    return vals;
  };

  double max_err = 0.0;
  for (Index i = 0; i < n; ++i) {
    FlatVector xp = x0, xm = x0;
    xp[i] += h;
    xm[i] -= h;
    const Eigen::VectorXd vp = eval_outputs(xp);
    const Eigen::VectorXd vm = eval_outputs(xm);
    for (std::size_t k = 0; k < outputs.size(); ++k) {
      const double cd = (vp[static_cast<Eigen::Index>(k)] - vm[static_cast<Eigen::Index>(k)]) / (2.0 * h);
      const double err = std::abs(ad[k][i] - cd) / std::max(1.0, std::abs(cd));
      max_err = std::max(max_err, err);
    }
  }
  if (!std::isfinite(max_err)) throw NonFiniteValueError("gradient check produced non-finite error");
  return max_err;
}

}  // namespace nsopt
