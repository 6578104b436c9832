#include "nsopt/varspace.hpp"

#include <set>

namespace nsopt {

VarSpace VarSpace::define(const Spec& specs) {
  VarSpace space;
  std::set<std::string> seen;
  Index offset = 0;
  for (const auto& [name, shape] : specs) {
    if (name.empty()) throw DuplicateNameError("variable name must be nonempty");
    if (!seen.insert(name).second)
      throw DuplicateNameError("duplicate variable name '" + name + "'");
    if (shape.empty()) throw EmptyShapeError("variable '" + name + "' has an empty shape");
    for (Index d : shape)
      if (d < 1)
        throw ZeroDimensionError("variable '" + name + "' has a dimension < 1");
    Entry e;
    e.name = name;
    e.shape = shape;
    e.offset = offset;
    e.size = shape_size(shape);
    offset += e.size;
    space.entries_.push_back(std::move(e));
  }
  space.total_dim_ = offset;
  return space;
}

bool VarSpace::has(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

const VarSpace::Entry& VarSpace::entry(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw MissingVariableError("no variable named '" + name + "'");
}

FlatVector pack(const VarStruct& vars, const VarSpace& space) {
  for (const auto& [name, t] : vars.values)
    if (!space.has(name))
      throw ShapeMismatchError("unexpected variable '" + name + "'");
  FlatVector x(space.total_dim());
  for (const auto& e : space.entries()) {
    auto it = vars.values.find(e.name);
    if (it == vars.values.end())
      throw MissingVariableError("missing variable '" + e.name + "'");
    const Tensor& t = it->second;
    if (t.shape() != e.shape)
      throw ShapeMismatchError("variable '" + e.name + "' has the wrong shape");
    x.segment(e.offset, e.size) = t.flat();
  }
  return x;
}

VarStruct unpack(const FlatVector& x, const VarSpace& space) {
  if (x.size() != space.total_dim())
    throw LengthMismatchError("flat vector length does not match the variable space");
  VarStruct v;
  for (const auto& e : space.entries())
    v.values.emplace(e.name, Tensor(e.shape, x.segment(e.offset, e.size)));
  return v;
}

}  // namespace nsopt
