#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wbmpc/symgraph.hpp"

namespace wbmpc::sym {

/// Flat, topologically ordered instruction tape compiled once from a graph.
///
/// Only nodes reachable from the requested outputs are emitted. Registers are
/// recycled after their last use, so the workspace is much smaller than the
/// node count. A Tape is immutable; concurrent evaluations are fine as long as
/// each caller brings its own workspace.
class Tape {
 public:
  Tape() = default;

  static Tape compile(const ExprGraph& graph);
  static Tape compile(const ExprGraph& graph, std::span<const NodeId> outputs);

  std::size_t n_vars() const { return n_vars_; }
  std::size_t n_params() const { return n_params_; }
  std::size_t n_outputs() const { return output_regs_.size(); }
  std::size_t workspace_size() const { return workspace_size_; }
  std::size_t instruction_count() const { return code_.size(); }

  /// Single pass over the tape. Throws std::invalid_argument on size mismatch
  /// or NaN inputs and std::domain_error on division by zero or sqrt(<0).
  void eval(std::span<const double> vars, std::span<const double> params, std::span<double> out,
            std::span<double> workspace) const;

  std::vector<double> operator()(std::span<const double> vars, std::span<const double> params) const;

 private:
  struct Instr {
    Op op;
    std::int32_t out;
    std::int32_t a;
    std::int32_t b;
  };

  std::vector<Instr> code_;
  std::vector<double> literals_;
  std::vector<std::int32_t> output_regs_;
  std::size_t workspace_size_ = 0;
  std::size_t n_vars_ = 0;
  std::size_t n_params_ = 0;
};

/// Convenience evaluation of `graph.outputs()`; compiles a tape per call.
std::vector<double> eval(const ExprGraph& graph, std::span<const double> vars,
                         std::span<const double> params = {});

}  // namespace wbmpc::sym
