#pragma once

// Elaborated flow graph and demand-driven field resolution.
//
// Replicated scopes are flattened into pipeline instances. Pipelines chained
// by 1-cycle hops share a "lane": stage s of pipeline B is the same physical
// position as stage s+1 of its predecessor A. Each position of a lane is a
// slot; consecutive slots are joined by a register. A flow node is a slot
// plus a transaction subscope ("" is pipeline level).

#include <map>
#include <set>
#include <string>
#include <vector>

#include "tlflow/scope_graph.hpp"

namespace tlflow::flow {

using scope::ComponentKind;
using scope::PipelineClass;

struct Pipe {
  scope::ScopePath path;
  const scope::Node* node = nullptr;
  std::vector<int> replica;               // indices of replicated ancestors
  std::map<std::string, int> index_env;   // #name -> replica index
  std::string name;                       // e.g. /ring_stop[2]|stall0
  int lane = -1;
  int offset = 0;                          // position = stage + offset
  int lo = 0, hi = 0;                      // stage range
};

struct Lane {
  PipelineClass cls = PipelineClass::Free;
  int lo = 0, hi = 0;
  std::vector<int> slots;   // slot id per position lo..hi
  std::vector<int> pipes;
  std::string stall_input;  // Stall lanes: design-level stall input name
  std::string name;
};

struct Attach {
  enum class Kind { None, Reg, Comp };
  Kind kind = Kind::None;
  int comp = -1;
  int port = -1;  // index into Comp::ins / outs
  int slot = -1;  // Reg: the slot on the other side
  bool internal = false;  // Comp: `port` indexes Comp::internal
};

struct StmtRef {
  const scope::Statement* stmt = nullptr;
  int pipe = -1;
  int stage = 0;
};

struct Slot {
  int lane = -1;  // -1 for component-internal storage (ring slots)
  int pos = 0;
  std::string name;
  std::vector<std::pair<int, int>> points;  // (pipe, stage)
  Attach driver, consumer;
  std::vector<StmtRef> stmts;
};

struct Comp {
  ComponentKind kind{};
  const scope::ComponentInstance* decl = nullptr;
  std::string name;            // e.g. arb2#9[2]
  int stop = -1;               // replica index for per-stop components
  std::vector<int> ins, outs;  // slots; testbench: ins = checker points, outs = stimulus points
  std::vector<int> internal;   // ring: storage slot per stop
  std::string trans;           // transaction subscope carried across the component
};

struct NodeKey {
  int slot = -1;
  std::string sub;
  auto operator<=>(const NodeKey&) const = default;
};

struct FieldSource {
  enum class Kind { Local, Flow, Reg, Comp, Generated };
  Kind kind = Kind::Local;
  StmtRef stmt;               // Local / Flow
  std::vector<NodeKey> from;  // Flow / Reg / Comp
  int width = 0;
};

struct Demand {
  NodeKey node;
  std::string field;
  std::string what;  // description of the consumer
  bool soft = false;
};

/// One producer of one field, with everything downstream of it that carries
/// the field.
struct FieldRecord {
  std::string field;
  int width = 0;
  NodeKey producer;
  bool generated = false;
  std::vector<Demand> consumers;
  std::vector<std::pair<NodeKey, NodeKey>> route;  // edges (from, to)
};

struct StagePlanEntry {
  std::string field;
  NodeKey producer;
  int lane = -1;
  int entry = 0, exit = 0;  // positions
  int registers = 0;
};

struct StagePlan {
  std::vector<StagePlanEntry> entries;
};

struct FlowGraph {
  int ports = 4;
  std::vector<Pipe> pipes;
  std::vector<Lane> lanes;
  std::vector<Slot> slots;
  std::vector<Comp> comps;
  std::map<std::string, int> externals_in;   // input name -> width
  std::map<std::string, int> payload_widths; // fields the stimulus generator may create

  // Filled by resolve_fields.
  std::map<std::pair<NodeKey, std::string>, FieldSource> carried;
  std::vector<Demand> demands;
  std::vector<FieldRecord> fields;
  std::map<int, std::vector<std::string>> sink_fields;  // testbench comp -> fields delivered
  std::map<int, std::vector<std::string>> gen_fields;   // testbench comp -> fields generated
  bool resolved = false;

  std::string external_name(const std::string& name, int pipe) const;

  const FieldSource* source(const NodeKey& n, const std::string& f) const;
  std::string node_name(const NodeKey& n) const;
  int tb_comp() const;  // index of the router testbench, or -1
};

FlowGraph build_flow_graph(const scope::ScopeGraph& g);
FlowGraph resolve_fields(FlowGraph fg);
StagePlan plan_stages(const FlowGraph& fg);

/// Stable text listing: field -> producer, consumers, route; plus the stage plan.
std::string dump(const FlowGraph& fg, const StagePlan& plan);

/// Self-determined width of `e` appearing in statement `s` placed at `slot`.
/// Requires a resolved graph.
int self_width(const FlowGraph& fg, int slot, const scope::Statement& s, const frontend::Expr& e);

/// Self-determined width of a literal (at least 1 bit).
int literal_width(std::uint64_t v);
/// Bits needed to index `n` values (at least 1).
int index_width(int n);

}  // namespace tlflow::flow
