#pragma once

// Flat synchronous circuit shared by Verilog emission and simulation.
//
// Operand semantics: every operand is zero-extended to max(node width,
// operand width), the operation is computed, and the result is truncated to
// the node width. Comparisons and logical operators produce 1 bit and
// compare operands at their common width. This matches Verilog-2001
// context-determined evaluation of `wire [W-1:0] n = a op b;`.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tlflow/diagnostics.hpp"

namespace tlflow::net {

enum class Op {
  Input, Output, Const, Reg, Wire,
  Add, Sub, Mul, And, Or, Xor, Not, Neg,
  LNot, LAnd, LOr,
  Eq, Ne, Lt, Le, Gt, Ge,
  Mux,    // args: sel, then, else
  Slice,  // args: x; bits [lo + width - 1 : lo]
  Sqrt,   // floor(sqrt(x))
};

std::string_view to_string(Op op);
bool is_source(Op op);  // Input, Const, Reg: no combinational fan-in

struct Node {
  Op op = Op::Const;
  int width = 1;
  std::vector<int> args;  // Reg: {D}; Output/Wire: {x}
  std::uint64_t value = 0;  // Const value
  int lo = 0;               // Slice
  std::string name;         // identifier stem (inputs/outputs: exact port name)
  std::string src;          // source reference for diagnostics and dumps
  std::string group;        // Reg: register group, one always block each
};

// Simulator-facing description of one testbench stop.
struct StopPorts {
  int stim_valid = -1, stim_ready = -1;  // Input, Output
  std::map<std::string, int> stim_fields;  // Inputs
  int chk_valid = -1, chk_ready = -1;    // Output, Input
  std::map<std::string, int> chk_fields;   // Outputs
};

struct Probe {
  std::string kind;  // opp.take, opp.forced, opp.local, arb.v1, arb.v2, arb.t1, arb.t2, arb.ready
  std::string comp;
  int stop = -1;
  int node = -1;
};

struct OccupancyTerm {
  int node = -1;  // register whose value counts transactions held
  std::string what;
};

struct Netlist {
  std::vector<Node> nodes;
  std::vector<int> inputs;   // in creation order
  std::vector<int> outputs;  // ordered output list
  std::vector<int> regs;

  std::vector<StopPorts> stops;  // empty when the design has no testbench
  std::map<std::string, int> gen_widths;  // payload fields the stimulus creates
  std::vector<Probe> probes;
  std::vector<OccupancyTerm> occupancy;

  int add(Node n);
  int input(const std::string& name, int width);
  int output(const std::string& name, int x);
  int constant(std::uint64_t v, int width);
  int find_input(const std::string& name) const;
  int find_output(const std::string& name) const;
  size_t count(Op op) const;
};

std::uint64_t mask(int width);

/// Combinational evaluation order (sources excluded). Throws CompileError
/// naming a shortest cycle if the combinational subgraph is cyclic.
std::vector<int> topo_order(const Netlist& n);

/// Empty when acyclic; otherwise one diagnostic describing a shortest cycle.
std::vector<Diagnostic> check_acyclic(const Netlist& n);

/// `id kind width operands source-ref`, one node per line, then metadata.
std::string dump(const Netlist& n);

/// Drops nodes not reachable from outputs, registers, probes and occupancy
/// terms, forwards equal-width wires, and renumbers densely.
Netlist compact(const Netlist& n);

/// Test hook: flips bit 0 of register `reg`'s next-state value.
void corrupt_register(Netlist& n, int reg);

}  // namespace tlflow::net
