#include "wbmpc/jacobian.hpp"

#include <algorithm>

namespace wbmpc::sym {
namespace {

/// Adjoint arithmetic. Unit seeds are not multiplied in and literal zeros are
/// dropped, which is what keeps structural zeros out of the result.
class AdjointBuilder {
 public:
  explicit AdjointBuilder(ExprGraph& g) : g_(g) {}

  NodeId lit(double v) { return g_.make(Op::Constant, kNoNode, kNoNode, v); }

  bool is_zero(NodeId x) const { return x == kNoNode || g_.is_constant(x, 0.0); }

  NodeId mul(NodeId x, NodeId y) {
    if (is_zero(x) || is_zero(y)) return kNoNode;
    if (g_.is_constant(x, 1.0)) return y;
    if (g_.is_constant(y, 1.0)) return x;
    return g_.make(Op::Mul, x, y);
  }
  NodeId div(NodeId x, NodeId y) {
    if (is_zero(x)) return kNoNode;
    return g_.make(Op::Div, x, y);
  }
  NodeId neg(NodeId x) { return is_zero(x) ? kNoNode : g_.make(Op::Neg, x); }
  NodeId add(NodeId x, NodeId y) { return g_.make(Op::Add, x, y); }
  NodeId sub(NodeId x, NodeId y) { return g_.make(Op::Sub, x, y); }
  NodeId unary(Op op, NodeId x) { return g_.make(op, x); }

 private:
  ExprGraph& g_;
};

}  // namespace

std::vector<WrtSlot> all_variables(const ExprGraph& graph) {
  std::vector<WrtSlot> wrt(graph.n_vars());
  for (std::size_t i = 0; i < wrt.size(); ++i) wrt[i] = {SlotKind::Variable, i};
  return wrt;
}

std::vector<WrtSlot> all_parameters(const ExprGraph& graph) {
  std::vector<WrtSlot> wrt(graph.n_params());
  for (std::size_t i = 0; i < wrt.size(); ++i) wrt[i] = {SlotKind::Parameter, i};
  return wrt;
}

std::vector<NodeId> SparseJacobian::expressions() const {
  std::vector<NodeId> ids;
  ids.reserve(entries.size());
  for (const auto& e : entries) ids.push_back(e.expr);
  return ids;
}

bool SparseJacobian::has(std::size_t row, std::size_t col) const {
  return std::any_of(entries.begin(), entries.end(),
                     [&](const JacobianEntry& e) { return e.row == row && e.col == col; });
}

SparseJacobian jacobian(ExprGraph& graph, std::span<const NodeId> rows, std::span<const WrtSlot> wrt) {
  const std::size_t n0 = graph.size();
  SparseJacobian jac;
  jac.n_rows = rows.size();
  jac.n_cols = wrt.size();

  std::vector<int> col_of(n0, -1);
  for (std::size_t id = 0; id < n0; ++id) {
    const Node& nd = graph.node(static_cast<NodeId>(id));
    if (nd.op != Op::Variable && nd.op != Op::Parameter) continue;
    const SlotKind kind = nd.op == Op::Variable ? SlotKind::Variable : SlotKind::Parameter;
    for (std::size_t c = 0; c < wrt.size(); ++c) {
      if (wrt[c].kind == kind && wrt[c].slot == nd.slot()) col_of[id] = static_cast<int>(c);
    }
  }

  // dep[i]: node i is a function of at least one differentiation slot.
  std::vector<char> dep(n0, 0);
  for (std::size_t id = 0; id < n0; ++id) {
    const Node& nd = graph.node(static_cast<NodeId>(id));
    if (nd.op == Op::LessEq) continue;  // piecewise constant
    dep[id] = col_of[id] >= 0 || (nd.a != kNoNode && dep[static_cast<std::size_t>(nd.a)]) ||
              (nd.b != kNoNode && dep[static_cast<std::size_t>(nd.b)]);
  }

  AdjointBuilder ad(graph);
  const NodeId one = ad.lit(1.0);

  for (std::size_t r = 0; r < rows.size(); ++r) {
    const NodeId root = rows[r];
    if (root < 0 || static_cast<std::size_t>(root) >= n0) throw GraphError("jacobian row out of range");
    if (!dep[static_cast<std::size_t>(root)]) continue;

    std::vector<NodeId> adj(static_cast<std::size_t>(root) + 1, kNoNode);
    adj[static_cast<std::size_t>(root)] = one;
    const auto acc = [&](NodeId child, NodeId contrib) {
      if (child == kNoNode || !dep[static_cast<std::size_t>(child)] || ad.is_zero(contrib)) return;
      NodeId& slot = adj[static_cast<std::size_t>(child)];
      slot = slot == kNoNode ? contrib : ad.add(slot, contrib);
    };

    std::vector<JacobianEntry> row_entries;
    for (NodeId id = root; id >= 0; --id) {
      const NodeId g = adj[static_cast<std::size_t>(id)];
      if (g == kNoNode) continue;
      const Node nd = graph.node(id);  // copy: the graph grows below
      if (col_of[static_cast<std::size_t>(id)] >= 0) {
        if (!ad.is_zero(g)) {
          row_entries.push_back({r, static_cast<std::size_t>(col_of[static_cast<std::size_t>(id)]), g});
        }
        continue;
      }
      const NodeId a = nd.a;
      const NodeId b = nd.b;
      switch (nd.op) {
        case Op::Add:
          acc(a, g);
          acc(b, g);
          break;
        case Op::Sub:
          acc(a, g);
          if (dep[static_cast<std::size_t>(b)]) acc(b, ad.neg(g));
          break;
        case Op::Mul:
          if (dep[static_cast<std::size_t>(a)]) acc(a, ad.mul(g, b));
          if (dep[static_cast<std::size_t>(b)]) acc(b, ad.mul(g, a));
          break;
        case Op::Div:
          if (dep[static_cast<std::size_t>(a)]) acc(a, ad.div(g, b));
          if (dep[static_cast<std::size_t>(b)]) acc(b, ad.neg(ad.mul(g, ad.div(id, b))));
          break;
        case Op::Neg:
          acc(a, ad.neg(g));
          break;
        case Op::Sin:
          acc(a, ad.mul(g, ad.unary(Op::Cos, a)));
          break;
        case Op::Cos:
          acc(a, ad.neg(ad.mul(g, ad.unary(Op::Sin, a))));
          break;
        case Op::Tan:
          acc(a, ad.mul(g, ad.add(one, ad.mul(id, id))));
          break;
        case Op::ArcTan:
          acc(a, ad.div(g, ad.add(one, ad.mul(a, a))));
          break;
        case Op::ArcTan2: {
          const NodeId den = ad.add(ad.mul(b, b), ad.mul(a, a));
          if (dep[static_cast<std::size_t>(a)]) acc(a, ad.mul(g, ad.div(b, den)));
          if (dep[static_cast<std::size_t>(b)]) acc(b, ad.neg(ad.mul(g, ad.div(a, den))));
          break;
        }
        case Op::Tanh:
          acc(a, ad.mul(g, ad.sub(one, ad.mul(id, id))));
          break;
        case Op::Exp:
          acc(a, ad.mul(g, id));
          break;
        case Op::Sqrt:
          acc(a, ad.div(g, ad.mul(ad.lit(2.0), id)));
          break;
        case Op::Pow: {
          const double p = nd.attr;
          if (p == 0.0) break;
          if (p == 1.0) {
            acc(a, g);
          } else {
            const NodeId d = ad.mul(ad.lit(p), graph.make(Op::Pow, a, kNoNode, p - 1.0));
            acc(a, ad.mul(g, d));
          }
          break;
        }
        case Op::Min:
        case Op::Max: {
          // Left child takes the adjoint on ties.
          const NodeId left = nd.op == Op::Min ? graph.make(Op::LessEq, a, b) : graph.make(Op::LessEq, b, a);
          if (dep[static_cast<std::size_t>(a)]) acc(a, ad.mul(g, left));
          if (dep[static_cast<std::size_t>(b)]) acc(b, ad.mul(g, ad.sub(one, left)));
          break;
        }
        default:
          break;
      }
    }
    std::sort(row_entries.begin(), row_entries.end(),
              [](const JacobianEntry& x, const JacobianEntry& y) { return x.col < y.col; });
    jac.entries.insert(jac.entries.end(), row_entries.begin(), row_entries.end());
  }
  return jac;
}

SparseJacobian jacobian(ExprGraph& graph) {
  const std::vector<NodeId> rows = graph.outputs();
  const auto wrt = all_variables(graph);
  return jacobian(graph, rows, wrt);
}

}  // namespace wbmpc::sym
