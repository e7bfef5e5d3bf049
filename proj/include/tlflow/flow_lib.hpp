#pragma once

// Built-in flow components. A template only contributes structure:
// pipelines, channel endpoints and a ComponentInstance record. It never
// assigns transaction fields.

#include <string>
#include <string_view>
#include <vector>

#include "tlflow/scope_graph.hpp"

namespace tlflow::flowlib {

using frontend::InstArg;
using scope::ScopePath;

struct ComponentTemplate {
  std::string name;
  scope::ComponentKind kind;
  std::vector<InstArg::Kind> signature;
  bool replicated_stops = false;  // spans every replica of a stop scope (ring, testbench)
};

const std::vector<ComponentTemplate>& library();
const ComponentTemplate* find_template(std::string_view name);

struct PipelineDecl {
  ScopePath path;
  scope::PipelineClass cls = scope::PipelineClass::ReadyValid;
};

struct Fragment {
  std::vector<PipelineDecl> pipelines;
  std::vector<scope::ChannelEndpoint> endpoints;
  std::vector<scope::Statement> statements;  // always empty for built-in templates
  scope::ComponentInstance instance;
};

struct ExpansionContext {
  ScopePath scope;       // resolved first argument
  ScopePath stop_scope;  // ring/testbench: resolved replicated stop scope
  int instance_id = 0;
  int first_channel = 0;  // channel ids are allocated from here
  SourceLoc loc;
};

/// Arity and argument kinds must already match `t.signature`.
/// Throws CompileError on parameter errors (last < first, depth < 1).
Fragment expand(const ComponentTemplate& t, const frontend::Instantiation& inst,
                const ExpansionContext& ctx);

}  // namespace tlflow::flowlib
