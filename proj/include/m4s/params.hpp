#pragma once

#include "m4s/autodiff.hpp"

#include <string>
#include <vector>

namespace m4s {

/// Binds every tensor of a Matrix-backed parameter struct as a leaf of
/// `tape`, filling the Var-backed twin `vars` (same alternative/layout).
/// `visit(p, f)` must enumerate tensors in the same order for both.
template <typename VarStruct, typename MatStruct, typename Visit>
void bind_leaves(Tape& tape, const MatStruct& params, VarStruct& vars, Visit&& visit) {
  std::vector<const Matrix*> src;
  visit(params, [&](const std::string&, const Matrix& m, bool) { src.push_back(&m); });
  std::size_t k = 0;
  visit(vars, [&](const std::string& name, Var& v, bool) {
    if (k >= src.size()) throw std::logic_error("bind_leaves: layout mismatch at " + name);
    v = tape.leaf(*src[k++]);
  });
  if (k != src.size()) throw std::logic_error("bind_leaves: layout mismatch");
}

}  // namespace m4s
