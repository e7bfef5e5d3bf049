#pragma once

// Merged design hierarchy: lexical-reentrance fusion, component expansion
// and reference binding.

#include <map>
#include <string>
#include <vector>

#include "tlflow/diagnostics.hpp"
#include "tlflow/frontend.hpp"

namespace tlflow::scope {

using frontend::PathElement;
using ScopePath = std::vector<PathElement>;

std::string to_string(const ScopePath& path);

enum class PipelineClass { Free, ReadyValid, Stall };
enum class Handshake { None, FreeFlow, ReadyValid, Stall, RingHop };

std::string_view to_string(PipelineClass c);
std::string_view to_string(Handshake h);

struct RefBinding {
  enum class Kind {
    Local,       // produced in the same pipeline, stage and subscope
    StageBack,   // produced earlier in the same pipeline; `distance` stages back
    FlowDemand,  // no producer in this pipeline; resolved along the flow
    Index,       // #name, bound to the replicated ancestor `index_scope`
    External,    // *name primary input
    Handshake,   // $valid / $ready
    Any,         // $ANY operand of a flow expression
  };
  Kind kind = Kind::FlowDemand;
  std::string signal;
  std::vector<std::string> subscope;
  int distance = 0;
  std::string index_scope;
  SourceLoc loc;
};

struct Statement {
  frontend::AssignStatement assign;
  std::vector<std::string> subscope;  // hierarchy inside the pipeline, e.g. {"trans"}
  SourceLoc loc;
  int order = 0;                      // global source order
  std::vector<RefBinding> bindings;   // filled by resolve_references
};

struct ChannelEndpoint {
  enum class Direction { Producer, Consumer };
  Direction direction = Direction::Producer;
  int channel = -1;  // -1 for stimulus/checker ports that are not channels
  ScopePath pipeline;
  int stage = 0;
  Handshake handshake = Handshake::None;
  int instance = -1;
  std::string port;
  int replica_offset = 0;  // ring arcs connect stop i to stop i+offset
};

struct Stage {
  std::vector<Statement> statements;
  std::vector<ChannelEndpoint> endpoints;
};

struct Node {
  PathElement element;  // root: Hier with empty name
  int count = 1;        // replication count for `[*]` scopes
  std::vector<Node> children;
  std::map<int, Stage> stages;  // pipelines only
  PipelineClass cls = PipelineClass::Free;
  int creator = -1;             // component instance that created the pipeline
  SourceLoc loc;

  bool is_pipeline() const { return element.kind == PathElement::Kind::Pipeline; }
  Node* find_child(PathElement::Kind kind, const std::string& name);
  const Node* find_child(PathElement::Kind kind, const std::string& name) const;
};

enum class ComponentKind {
  StallPipeline,
  BpPipeline,
  BypassFifo,
  Arb2,
  OpportunisticFlow,
  SimpleRing,
  RouterTestbench,
};

std::string_view to_string(ComponentKind k);

struct ComponentPort {
  std::string name;  // e.g. "in", "out", "in1", "taken", "hop2"
  ScopePath pipeline;
  int stage = 0;
  bool drives = false;  // the component produces transactions at this point
};

struct ComponentInstance {
  int id = -1;
  std::string template_name;
  ComponentKind kind{};
  ScopePath scope;       // component scope (resolved first argument)
  ScopePath stop_scope;  // ring/testbench: replicated stop scope
  std::vector<std::string> trans;  // transaction subscope, e.g. {"trans"}
  std::vector<ComponentPort> ports;
  std::vector<frontend::InstArg> args;
  int first = 0, last = 0;  // pipeline templates
  int depth = 0;            // fifo
  std::string condition;    // opportunistic_flow
  bool condition_negated = false;
  std::string stall_input;  // stall_pipeline: design-level stall input
  SourceLoc loc;

  const ComponentPort* port(const std::string& name) const;
};

struct PendingInstantiation {
  frontend::Instantiation inst;
  ScopePath site;
  SourceLoc loc;
  int order = 0;
};

struct ElaborationOptions {
  int ports = 4;  // replication count for every `[*]` scope
};

struct ScopeGraph {
  Node root;
  int ports = 4;
  std::vector<PendingInstantiation> pending;
  std::vector<ComponentInstance> components;

  Node* find(const ScopePath& path);
  const Node* find(const ScopePath& path) const;
};

/// Fuses every scope entry with an equal full path. Statements in a fused
/// stage keep source order across entries. Instantiations are collected,
/// not expanded.
ScopeGraph merge_reentrant(const std::vector<frontend::ParseTree>& trees,
                           const ElaborationOptions& opts = {});
ScopeGraph merge_reentrant(const frontend::ParseTree& tree, const ElaborationOptions& opts = {});

/// Replaces pending instantiations by the structure their flow_lib template
/// defines, merged with user content under reentrance rules.
ScopeGraph expand_instantiations(ScopeGraph g);

/// Binds every reference in every statement (see RefBinding).
ScopeGraph resolve_references(ScopeGraph g);

/// Stable text dump; also the "expanded TL-level form" used for code metrics.
std::string serialize(const ScopeGraph& g);

}  // namespace tlflow::scope
