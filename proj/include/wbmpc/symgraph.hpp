#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace wbmpc::sym {

/// Elementary operations of the expression graph.
///
/// `LessEq` is not a user-facing modelling op: the differentiator emits it to
/// select the Min/Max subgradient branch. It evaluates to 1.0 when a <= b.
enum class Op : std::uint8_t {
  Constant,
  Parameter,
  Variable,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Sin,
  Cos,
  Tan,
  ArcTan,
  ArcTan2,
  Tanh,
  Exp,
  Sqrt,
  Pow,
  Min,
  Max,
  LessEq,
};

inline constexpr std::size_t kOpCount = static_cast<std::size_t>(Op::LessEq) + 1;

constexpr int arity(Op op) {
  switch (op) {
    case Op::Constant:
    case Op::Parameter:
    case Op::Variable:
      return 0;
    case Op::Neg:
    case Op::Sin:
    case Op::Cos:
    case Op::Tan:
    case Op::ArcTan:
    case Op::Tanh:
    case Op::Exp:
    case Op::Sqrt:
    case Op::Pow:
      return 1;
    default:
      return 2;
  }
}

std::string_view op_name(Op op);
Op op_from_name(std::string_view name);

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

/// One vertex of the DAG. `attr` holds the literal for Constant, the exponent
/// for Pow and the slot index for Parameter/Variable.
struct Node {
  Op op = Op::Constant;
  NodeId a = kNoNode;
  NodeId b = kNoNode;
  double attr = 0.0;

  std::size_t slot() const { return static_cast<std::size_t>(attr); }
};

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ExprGraph;

/// Lightweight handle to a node of a graph. Arithmetic on handles appends
/// (hash-consed) nodes to the owning graph.
class Sym {
 public:
  Sym() = default;
  Sym(ExprGraph* graph, NodeId id) : graph_(graph), id_(id) {}

  NodeId id() const { return id_; }
  ExprGraph* graph() const { return graph_; }
  bool valid() const { return graph_ != nullptr && id_ != kNoNode; }

 private:
  ExprGraph* graph_ = nullptr;
  NodeId id_ = kNoNode;
};

/// Append-only symbolic computation graph with structural deduplication.
///
/// Nodes are created in topological order (children always have smaller ids),
/// identical (op, children, attr) tuples map to one id, and nodes whose
/// children are all literals are folded into a Constant.
class ExprGraph {
 public:
  ExprGraph(std::size_t n_vars = 0, std::size_t n_params = 0);

  ExprGraph(const ExprGraph&) = delete;
  ExprGraph& operator=(const ExprGraph&) = delete;
  ExprGraph(ExprGraph&&) noexcept = default;
  ExprGraph& operator=(ExprGraph&&) noexcept = default;

  Sym constant(double value);
  Sym variable(std::size_t slot);
  Sym parameter(std::size_t slot);

  /// Low-level constructor used by the builders and the differentiator.
  NodeId make(Op op, NodeId a = kNoNode, NodeId b = kNoNode, double attr = 0.0);

  Sym wrap(NodeId id) { return Sym(this, id); }

  const Node& node(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::span<const Node> nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  bool is_constant(NodeId id, double value) const;

  std::size_t n_vars() const { return n_vars_; }
  std::size_t n_params() const { return n_params_; }

  void set_outputs(std::vector<NodeId> outputs);
  void set_outputs(std::span<const Sym> outputs);
  const std::vector<NodeId>& outputs() const { return outputs_; }

  void reserve(std::size_t n);

 private:
  struct Key {
    Op op;
    NodeId a;
    NodeId b;
    std::uint64_t attr_bits;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept;
  };

  std::vector<Node> nodes_;
  std::vector<NodeId> outputs_;
  std::unordered_map<Key, NodeId, KeyHash> index_;
  std::size_t n_vars_ = 0;
  std::size_t n_params_ = 0;
};

// Handle arithmetic. Mixed double/Sym forms lift the literal to a Constant.
Sym operator+(Sym a, Sym b);
Sym operator-(Sym a, Sym b);
Sym operator*(Sym a, Sym b);
Sym operator/(Sym a, Sym b);
Sym operator-(Sym a);
Sym operator+(Sym a, double b);
Sym operator+(double a, Sym b);
Sym operator-(Sym a, double b);
Sym operator-(double a, Sym b);
Sym operator*(Sym a, double b);
Sym operator*(double a, Sym b);
Sym operator/(Sym a, double b);
Sym operator/(double a, Sym b);
Sym& operator+=(Sym& a, Sym b);
Sym& operator-=(Sym& a, Sym b);
Sym& operator*=(Sym& a, Sym b);

Sym sin(Sym x);
Sym cos(Sym x);
Sym tan(Sym x);
Sym atan(Sym x);
Sym atan2(Sym y, Sym x);
Sym tanh(Sym x);
Sym exp(Sym x);
Sym sqrt(Sym x);
Sym pow(Sym x, double exponent);
Sym min(Sym a, Sym b);
Sym max(Sym a, Sym b);

/// Scalar semantics of one op, shared by constant folding and evaluation.
/// Throws std::domain_error on division by exact zero and sqrt of a negative.
double apply(Op op, double a, double b, double attr);

/// Copies the part of `src` reachable from `roots` into `dst`. Variable slot i
/// becomes `vars[i]` and Parameter slot j becomes `params[j]`; empty spans
/// keep the slot numbering. Returns the images of `roots`.
std::vector<NodeId> import_graph(ExprGraph& dst, const ExprGraph& src, std::span<const NodeId> roots,
                                 std::span<const NodeId> vars = {}, std::span<const NodeId> params = {});

struct GraphStats {
  std::size_t node_count = 0;
  std::array<std::size_t, kOpCount> op_histogram{};
  std::size_t depth = 0;

  std::size_t count(Op op) const { return op_histogram[static_cast<std::size_t>(op)]; }
};

GraphStats graph_stats(const ExprGraph& graph);

/// Line-oriented text form: a header, one `id op[:attr] children...` line per
/// node and an `outputs ...` footer. Literals are written as hex floats so the
/// round trip is exact.
void dump(const ExprGraph& graph, std::ostream& out);
std::string dump(const ExprGraph& graph);
ExprGraph parse_dump(std::istream& in);

}  // namespace wbmpc::sym
