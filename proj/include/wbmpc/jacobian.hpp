#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wbmpc/symgraph.hpp"

namespace wbmpc::sym {

enum class SlotKind { Variable, Parameter };

struct WrtSlot {
  SlotKind kind = SlotKind::Variable;
  std::size_t slot = 0;
};

/// Columns 0..n-1 of the graph's Variable slots.
std::vector<WrtSlot> all_variables(const ExprGraph& graph);
std::vector<WrtSlot> all_parameters(const ExprGraph& graph);

struct JacobianEntry {
  std::size_t row = 0;
  std::size_t col = 0;
  NodeId expr = kNoNode;
};

/// Symbolic Jacobian in triplet form. Structurally zero entries are absent.
struct SparseJacobian {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<JacobianEntry> entries;  // row-major order

  double density() const {
    return n_rows * n_cols == 0 ? 0.0
                                : static_cast<double>(entries.size()) / static_cast<double>(n_rows * n_cols);
  }
  std::vector<NodeId> expressions() const;
  bool has(std::size_t row, std::size_t col) const;
};

/// Reverse-mode symbolic differentiation, one reverse sweep per row.
///
/// Derivative expressions are appended to `graph` so they share the forward
/// subexpressions. Only nodes that depend on a `wrt` slot receive adjoints;
/// literals and unrelated parameters are never visited. Min/Max pass the
/// whole adjoint to the left child on ties.
SparseJacobian jacobian(ExprGraph& graph, std::span<const NodeId> rows, std::span<const WrtSlot> wrt);

/// Jacobian of `graph.outputs()` with respect to every Variable slot.
SparseJacobian jacobian(ExprGraph& graph);

}  // namespace wbmpc::sym
