#include "wbmpc/symgraph.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace wbmpc::sym {
namespace {

constexpr std::array<std::string_view, kOpCount> kOpNames = {
    "const", "param", "var",  "add",   "sub",  "mul",  "div",
    "neg",   "sin",   "cos",  "tan",   "atan", "atan2", "tanh",
    "exp",   "sqrt",  "pow",  "min",   "max",  "le",
};

bool has_attr(Op op) {
  return op == Op::Constant || op == Op::Parameter || op == Op::Variable || op == Op::Pow;
}

std::string format_attr(Op op, double attr) {
  if (op == Op::Parameter || op == Op::Variable) {
    return std::to_string(static_cast<std::size_t>(attr));
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", attr);
  return buf;
}

ExprGraph* common_graph(Sym a, Sym b) {
  if (!a.valid() || !b.valid()) throw GraphError("operation on an empty symbol");
  if (a.graph() != b.graph()) throw GraphError("symbols belong to different graphs");
  return a.graph();
}

ExprGraph* graph_of(Sym a) {
  if (!a.valid()) throw GraphError("operation on an empty symbol");
  return a.graph();
}

Sym unary(Op op, Sym x, double attr = 0.0) {
  ExprGraph* g = graph_of(x);
  return g->wrap(g->make(op, x.id(), kNoNode, attr));
}

Sym binary(Op op, Sym x, Sym y) {
  ExprGraph* g = common_graph(x, y);
  return g->wrap(g->make(op, x.id(), y.id()));
}

}  // namespace

std::string_view op_name(Op op) { return kOpNames[static_cast<std::size_t>(op)]; }

Op op_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kOpNames.size(); ++i) {
    if (kOpNames[i] == name) return static_cast<Op>(i);
  }
  throw GraphError("unknown op '" + std::string(name) + "'");
}

double apply(Op op, double a, double b, double attr) {
  switch (op) {
    case Op::Constant: return attr;
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div:
      if (b == 0.0) throw std::domain_error("division by zero");
      return a / b;
    case Op::Neg: return -a;
    case Op::Sin: return std::sin(a);
    case Op::Cos: return std::cos(a);
    case Op::Tan: return std::tan(a);
    case Op::ArcTan: return std::atan(a);
    case Op::ArcTan2: return std::atan2(a, b);
    case Op::Tanh: return std::tanh(a);
    case Op::Exp: return std::exp(a);
    case Op::Sqrt:
      if (a < 0.0) throw std::domain_error("sqrt of negative value");
      return std::sqrt(a);
    case Op::Pow: return std::pow(a, attr);
    case Op::Min: return a <= b ? a : b;
    case Op::Max: return a >= b ? a : b;
    case Op::LessEq: return a <= b ? 1.0 : 0.0;
    case Op::Parameter:
    case Op::Variable: break;
  }
  throw GraphError("apply() on a leaf op");
}

std::size_t ExprGraph::KeyHash::operator()(const Key& k) const noexcept {
  std::uint64_t h = static_cast<std::uint64_t>(k.op) * 0x9E3779B97F4A7C15ull;
  h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.a)) + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
  h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.b)) + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
  h ^= k.attr_bits + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
  return static_cast<std::size_t>(h);
}

ExprGraph::ExprGraph(std::size_t n_vars, std::size_t n_params)
    : n_vars_(n_vars), n_params_(n_params) {}

void ExprGraph::reserve(std::size_t n) {
  nodes_.reserve(n);
  index_.reserve(n);
}

Sym ExprGraph::constant(double value) { return wrap(make(Op::Constant, kNoNode, kNoNode, value)); }

Sym ExprGraph::variable(std::size_t slot) {
  return wrap(make(Op::Variable, kNoNode, kNoNode, static_cast<double>(slot)));
}

Sym ExprGraph::parameter(std::size_t slot) {
  return wrap(make(Op::Parameter, kNoNode, kNoNode, static_cast<double>(slot)));
}

bool ExprGraph::is_constant(NodeId id, double value) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.op == Op::Constant && n.attr == value;
}

NodeId ExprGraph::make(Op op, NodeId a, NodeId b, double attr) {
  const int n_children = arity(op);
  const auto in_range = [this](NodeId id) {
    return id >= 0 && static_cast<std::size_t>(id) < nodes_.size();
  };
  if (n_children == 0 && (a != kNoNode || b != kNoNode)) {
    throw GraphError(std::string("leaf op '") + std::string(op_name(op)) + "' takes no children");
  }
  if (n_children >= 1 && !in_range(a)) {
    throw GraphError(std::string("child id out of range for '") + std::string(op_name(op)) + "'");
  }
  if (n_children == 1 && b != kNoNode) {
    throw GraphError(std::string("unary op '") + std::string(op_name(op)) + "' given two children");
  }
  if (n_children == 2 && !in_range(b)) {
    throw GraphError(std::string("child id out of range for '") + std::string(op_name(op)) + "'");
  }
  if (op == Op::Variable && !(attr >= 0.0 && static_cast<std::size_t>(attr) < n_vars_)) {
    throw GraphError("variable slot out of range");
  }
  if (op == Op::Parameter && !(attr >= 0.0 && static_cast<std::size_t>(attr) < n_params_)) {
    throw GraphError("parameter slot out of range");
  }
  if (op != Op::Constant && op != Op::Pow && n_children > 0) attr = 0.0;

  // Literal-only subtrees collapse to a single Constant.
  if (n_children > 0) {
    const bool a_lit = nodes_[static_cast<std::size_t>(a)].op == Op::Constant;
    const bool b_lit = n_children < 2 || nodes_[static_cast<std::size_t>(b)].op == Op::Constant;
    if (a_lit && b_lit) {
      const double av = nodes_[static_cast<std::size_t>(a)].attr;
      const double bv = n_children == 2 ? nodes_[static_cast<std::size_t>(b)].attr : 0.0;
      return make(Op::Constant, kNoNode, kNoNode, apply(op, av, bv, attr));
    }
  }

  const Key key{op, a, b, std::bit_cast<std::uint64_t>(attr)};
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  const auto id = static_cast<NodeId>(nodes_.size());
  nodes_.push_back(Node{op, a, b, attr});
  index_.emplace(key, id);
  return id;
}

void ExprGraph::set_outputs(std::vector<NodeId> outputs) {
  for (NodeId id : outputs) {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
      throw GraphError("output references a missing node");
    }
  }
  outputs_ = std::move(outputs);
}

void ExprGraph::set_outputs(std::span<const Sym> outputs) {
  std::vector<NodeId> ids;
  ids.reserve(outputs.size());
  for (const Sym& s : outputs) {
    if (s.graph() != this) throw GraphError("output symbol belongs to another graph");
    ids.push_back(s.id());
  }
  set_outputs(std::move(ids));
}

Sym operator+(Sym a, Sym b) { return binary(Op::Add, a, b); }
Sym operator-(Sym a, Sym b) { return binary(Op::Sub, a, b); }
Sym operator*(Sym a, Sym b) { return binary(Op::Mul, a, b); }
Sym operator/(Sym a, Sym b) { return binary(Op::Div, a, b); }
Sym operator-(Sym a) { return unary(Op::Neg, a); }
Sym operator+(Sym a, double b) { return a + graph_of(a)->constant(b); }
Sym operator+(double a, Sym b) { return graph_of(b)->constant(a) + b; }
Sym operator-(Sym a, double b) { return a - graph_of(a)->constant(b); }
Sym operator-(double a, Sym b) { return graph_of(b)->constant(a) - b; }
Sym operator*(Sym a, double b) { return a * graph_of(a)->constant(b); }
Sym operator*(double a, Sym b) { return graph_of(b)->constant(a) * b; }
Sym operator/(Sym a, double b) { return a / graph_of(a)->constant(b); }
Sym operator/(double a, Sym b) { return graph_of(b)->constant(a) / b; }
Sym& operator+=(Sym& a, Sym b) { return a = a + b; }
Sym& operator-=(Sym& a, Sym b) { return a = a - b; }
Sym& operator*=(Sym& a, Sym b) { return a = a * b; }

Sym sin(Sym x) { return unary(Op::Sin, x); }
Sym cos(Sym x) { return unary(Op::Cos, x); }
Sym tan(Sym x) { return unary(Op::Tan, x); }
Sym atan(Sym x) { return unary(Op::ArcTan, x); }
Sym atan2(Sym y, Sym x) { return binary(Op::ArcTan2, y, x); }
Sym tanh(Sym x) { return unary(Op::Tanh, x); }
Sym exp(Sym x) { return unary(Op::Exp, x); }
Sym sqrt(Sym x) { return unary(Op::Sqrt, x); }
Sym pow(Sym x, double exponent) { return unary(Op::Pow, x, exponent); }
Sym min(Sym a, Sym b) { return binary(Op::Min, a, b); }
Sym max(Sym a, Sym b) { return binary(Op::Max, a, b); }

std::vector<NodeId> import_graph(ExprGraph& dst, const ExprGraph& src, std::span<const NodeId> roots,
                                 std::span<const NodeId> vars, std::span<const NodeId> params) {
  if (!vars.empty() && vars.size() != src.n_vars()) throw GraphError("import_graph: variable map size mismatch");
  if (!params.empty() && params.size() != src.n_params()) throw GraphError("import_graph: parameter map size mismatch");
  std::vector<char> live(src.size(), 0);
  for (NodeId r : roots) live.at(static_cast<std::size_t>(r)) = 1;
  for (std::size_t i = src.size(); i-- > 0;) {
    if (!live[i]) continue;
    const Node& n = src.nodes()[i];
    if (n.a != kNoNode) live[static_cast<std::size_t>(n.a)] = 1;
    if (n.b != kNoNode) live[static_cast<std::size_t>(n.b)] = 1;
  }
  std::vector<NodeId> map(src.size(), kNoNode);
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!live[i]) continue;
    const Node& n = src.nodes()[i];
    switch (n.op) {
      case Op::Variable:
        map[i] = vars.empty() ? dst.variable(n.slot()).id() : vars[n.slot()];
        break;
      case Op::Parameter:
        map[i] = params.empty() ? dst.parameter(n.slot()).id() : params[n.slot()];
        break;
      default:
        map[i] = dst.make(n.op, n.a == kNoNode ? kNoNode : map[static_cast<std::size_t>(n.a)],
                          n.b == kNoNode ? kNoNode : map[static_cast<std::size_t>(n.b)], n.attr);
    }
  }
  std::vector<NodeId> out;
  out.reserve(roots.size());
  for (NodeId r : roots) out.push_back(map[static_cast<std::size_t>(r)]);
  return out;
}

GraphStats graph_stats(const ExprGraph& graph) {
  GraphStats stats;
  const auto nodes = graph.nodes();
  stats.node_count = nodes.size();
  std::vector<std::size_t> depth(nodes.size(), 0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    ++stats.op_histogram[static_cast<std::size_t>(n.op)];
    std::size_t d = 0;
    if (n.a != kNoNode) d = std::max(d, depth[static_cast<std::size_t>(n.a)]);
    if (n.b != kNoNode) d = std::max(d, depth[static_cast<std::size_t>(n.b)]);
    depth[i] = d + 1;
    stats.depth = std::max(stats.depth, depth[i]);
  }
  return stats;
}

void dump(const ExprGraph& graph, std::ostream& out) {
  out << "wbmpc-graph 1 vars " << graph.n_vars() << " params " << graph.n_params()
      << " nodes " << graph.size() << '\n';
  const auto nodes = graph.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    out << i << ' ' << op_name(n.op);
    if (has_attr(n.op)) out << ':' << format_attr(n.op, n.attr);
    if (n.a != kNoNode) out << ' ' << n.a;
    if (n.b != kNoNode) out << ' ' << n.b;
    out << '\n';
  }
  out << "outputs";
  for (NodeId id : graph.outputs()) out << ' ' << id;
  out << '\n';
}

std::string dump(const ExprGraph& graph) {
  std::ostringstream os;
  dump(graph, os);
  return os.str();
}

ExprGraph parse_dump(std::istream& in) {
  std::string magic, kw_vars, kw_params, kw_nodes;
  int version = 0;
  std::size_t n_vars = 0, n_params = 0, n_nodes = 0;
  if (!(in >> magic >> version >> kw_vars >> n_vars >> kw_params >> n_params >> kw_nodes >> n_nodes) ||
      magic != "wbmpc-graph" || version != 1) {
    throw GraphError("not a graph dump");
  }
  ExprGraph g(n_vars, n_params);
  g.reserve(n_nodes);
  std::string line;
  std::getline(in, line);
  for (std::size_t i = 0; i < n_nodes; ++i) {
    if (!std::getline(in, line)) throw GraphError("truncated graph dump");
    std::istringstream ls(line);
    std::size_t id = 0;
    std::string tok;
    ls >> id >> tok;
    if (id != i) throw GraphError("node ids out of order in dump");
    const auto colon = tok.find(':');
    const Op op = op_from_name(std::string_view(tok).substr(0, colon));
    double attr = 0.0;
    if (colon != std::string::npos) attr = std::strtod(tok.c_str() + colon + 1, nullptr);
    NodeId a = kNoNode, b = kNoNode;
    if (arity(op) >= 1) ls >> a;
    if (arity(op) == 2) ls >> b;
    if (g.make(op, a, b, attr) != static_cast<NodeId>(i)) {
      throw GraphError("dump is not in canonical (deduplicated) form");
    }
  }
  std::string kw;
  in >> kw;
  if (kw != "outputs") throw GraphError("missing outputs footer");
  std::getline(in, line);
  std::istringstream ls(line);
  std::vector<NodeId> outputs;
  for (NodeId id; ls >> id;) outputs.push_back(id);
  g.set_outputs(std::move(outputs));
  return g;
}

}  // namespace wbmpc::sym
