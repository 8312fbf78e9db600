#include "wbmpc/tape.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace wbmpc::sym {

Tape Tape::compile(const ExprGraph& graph) { return compile(graph, graph.outputs()); }

Tape Tape::compile(const ExprGraph& graph, std::span<const NodeId> outputs) {
  const auto nodes = graph.nodes();
  const std::size_t n = nodes.size();
  Tape tape;
  tape.n_vars_ = graph.n_vars();
  tape.n_params_ = graph.n_params();

  std::vector<char> live(n, 0);
  NodeId top = kNoNode;
  for (NodeId id : outputs) {
    if (id < 0 || static_cast<std::size_t>(id) >= n) throw GraphError("tape output out of range");
    live[static_cast<std::size_t>(id)] = 1;
    top = std::max(top, id);
  }
  for (NodeId id = top; id >= 0; --id) {
    if (!live[static_cast<std::size_t>(id)]) continue;
    const Node& nd = nodes[static_cast<std::size_t>(id)];
    if (nd.a != kNoNode) live[static_cast<std::size_t>(nd.a)] = 1;
    if (nd.b != kNoNode) live[static_cast<std::size_t>(nd.b)] = 1;
  }

  constexpr std::int32_t kForever = std::numeric_limits<std::int32_t>::max();
  std::vector<std::int32_t> last_use(n, -1);
  for (NodeId id = 0; id <= top; ++id) {
    if (!live[static_cast<std::size_t>(id)]) continue;
    const Node& nd = nodes[static_cast<std::size_t>(id)];
    if (nd.a != kNoNode) last_use[static_cast<std::size_t>(nd.a)] = id;
    if (nd.b != kNoNode) last_use[static_cast<std::size_t>(nd.b)] = id;
  }
  for (NodeId id : outputs) last_use[static_cast<std::size_t>(id)] = kForever;

  std::vector<std::int32_t> reg(n, -1);
  std::vector<std::int32_t> free_regs;
  std::int32_t n_regs = 0;
  const auto release = [&](NodeId child, NodeId user) {
    if (child != kNoNode && last_use[static_cast<std::size_t>(child)] == user) {
      free_regs.push_back(reg[static_cast<std::size_t>(child)]);
      last_use[static_cast<std::size_t>(child)] = -2;  // release once even if a == b
    }
  };

  for (NodeId id = 0; id <= top; ++id) {
    if (!live[static_cast<std::size_t>(id)]) continue;
    const Node& nd = nodes[static_cast<std::size_t>(id)];
    Instr ins{nd.op, 0, 0, 0};
    switch (nd.op) {
      case Op::Constant:
      case Op::Pow:
        ins.b = static_cast<std::int32_t>(tape.literals_.size());
        tape.literals_.push_back(nd.attr);
        break;
      case Op::Variable:
      case Op::Parameter:
        ins.a = static_cast<std::int32_t>(nd.slot());
        break;
      default:
        break;
    }
    if (nd.a != kNoNode) ins.a = reg[static_cast<std::size_t>(nd.a)];
    if (nd.b != kNoNode) ins.b = reg[static_cast<std::size_t>(nd.b)];
    release(nd.a, id);
    release(nd.b, id);
    if (!free_regs.empty()) {
      ins.out = free_regs.back();
      free_regs.pop_back();
    } else {
      ins.out = n_regs++;
    }
    reg[static_cast<std::size_t>(id)] = ins.out;
    tape.code_.push_back(ins);
    // A result nobody reads (possible only for dead outputs) would leak its register.
    if (last_use[static_cast<std::size_t>(id)] == -1) free_regs.push_back(ins.out);
  }

  tape.output_regs_.reserve(outputs.size());
  for (NodeId id : outputs) tape.output_regs_.push_back(reg[static_cast<std::size_t>(id)]);
  tape.workspace_size_ = static_cast<std::size_t>(n_regs);
  return tape;
}

void Tape::eval(std::span<const double> vars, std::span<const double> params, std::span<double> out,
                std::span<double> workspace) const {
  if (vars.size() != n_vars_) throw std::invalid_argument("tape: wrong number of variables");
  if (params.size() != n_params_) throw std::invalid_argument("tape: wrong number of parameters");
  if (out.size() != output_regs_.size()) throw std::invalid_argument("tape: wrong output size");
  if (workspace.size() < workspace_size_) throw std::invalid_argument("tape: workspace too small");
  for (double v : vars) {
    if (std::isnan(v)) throw std::invalid_argument("tape: NaN variable");
  }
  for (double v : params) {
    if (std::isnan(v)) throw std::invalid_argument("tape: NaN parameter");
  }

  double* w = workspace.data();
  const double* lit = literals_.data();
  for (const Instr& ins : code_) {
    double r;
    switch (ins.op) {
      case Op::Constant: r = lit[ins.b]; break;
      case Op::Variable: r = vars[static_cast<std::size_t>(ins.a)]; break;
      case Op::Parameter: r = params[static_cast<std::size_t>(ins.a)]; break;
      case Op::Add: r = w[ins.a] + w[ins.b]; break;
      case Op::Sub: r = w[ins.a] - w[ins.b]; break;
      case Op::Mul: r = w[ins.a] * w[ins.b]; break;
      case Op::Div:
        if (w[ins.b] == 0.0) throw std::domain_error("division by zero");
        r = w[ins.a] / w[ins.b];
        break;
      case Op::Neg: r = -w[ins.a]; break;
      case Op::Sin: r = std::sin(w[ins.a]); break;
      case Op::Cos: r = std::cos(w[ins.a]); break;
      case Op::Tan: r = std::tan(w[ins.a]); break;
      case Op::ArcTan: r = std::atan(w[ins.a]); break;
      case Op::ArcTan2: r = std::atan2(w[ins.a], w[ins.b]); break;
      case Op::Tanh: r = std::tanh(w[ins.a]); break;
      case Op::Exp: r = std::exp(w[ins.a]); break;
      case Op::Sqrt:
        if (w[ins.a] < 0.0) throw std::domain_error("sqrt of negative value");
        r = std::sqrt(w[ins.a]);
        break;
      case Op::Pow: r = std::pow(w[ins.a], lit[ins.b]); break;
      case Op::Min: r = w[ins.a] <= w[ins.b] ? w[ins.a] : w[ins.b]; break;
      case Op::Max: r = w[ins.a] >= w[ins.b] ? w[ins.a] : w[ins.b]; break;
      case Op::LessEq: r = w[ins.a] <= w[ins.b] ? 1.0 : 0.0; break;
      default: r = 0.0; break;
    }
    w[ins.out] = r;
  }
  for (std::size_t i = 0; i < output_regs_.size(); ++i) out[i] = w[output_regs_[i]];
}

std::vector<double> Tape::operator()(std::span<const double> vars, std::span<const double> params) const {
  std::vector<double> work(workspace_size_);
  std::vector<double> out(output_regs_.size());
  eval(vars, params, out, work);
  return out;
}

std::vector<double> eval(const ExprGraph& graph, std::span<const double> vars,
                         std::span<const double> params) {
  return Tape::compile(graph)(vars, params);
}

}  // namespace wbmpc::sym
