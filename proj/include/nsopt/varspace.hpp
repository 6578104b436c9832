#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "nsopt/tensor.hpp"

namespace nsopt {

/// The flat vector the solver iterates on.
using FlatVector = Eigen::VectorXd;

/// Ordered set of named, shaped optimization variables plus the layout of
/// their concatenation into one flat vector. Immutable after construction
/// and safe to share across threads.
///
/// Layout: entries are concatenated in declaration order, each tensor
/// flattened row-major.
class VarSpace {
public:
  struct Entry {
    std::string name;
    Shape shape;
    Index offset = 0;
    Index size = 0;
  };

  using Spec = std::vector<std::pair<std::string, Shape>>;

  VarSpace() = default;  // empty space; use define() to build a real one
  static VarSpace define(const Spec& specs);

  Index total_dim() const { return total_dim_; }
  const std::vector<Entry>& entries() const { return entries_; }
  bool has(const std::string& name) const;
  const Entry& entry(const std::string& name) const;

private:
  std::vector<Entry> entries_;
  Index total_dim_ = 0;
};

/// Named tensor values conforming to some VarSpace. Plain value type.
struct VarStruct {
  std::map<std::string, Tensor> values;

  const Tensor& at(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw MissingVariableError("no variable named '" + name + "'");
    return it->second;
  }
};

/// Concatenates the variables into one flat vector (declaration order,
/// row-major per tensor).
FlatVector pack(const VarStruct& vars, const VarSpace& space);

/// Inverse of pack; unpack(pack(v)) is bit-identical to v.
VarStruct unpack(const FlatVector& x, const VarSpace& space);

}  // namespace nsopt
