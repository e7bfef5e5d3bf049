#pragma once

// End-to-end driver: sources -> expanded scopes -> flow graph -> netlist -> Verilog.

#include <memory>
#include <string>
#include <vector>

#include "tlflow/flow_resolver.hpp"
#include "tlflow/frontend.hpp"
#include "tlflow/netlist.hpp"
#include "tlflow/scope_graph.hpp"
#include "tlflow/staging.hpp"
#include "tlflow/verilog_backend.hpp"

namespace tlflow {

struct SourceFile {
  std::string name;
  std::string text;
};

struct CompileOptions {
  int ports = 4;
  staging::BuildOptions build;
  std::string module;  // empty: stem of the first source
};

struct Compilation {
  std::vector<SourceFile> sources;
  std::unique_ptr<scope::ScopeGraph> scopes;  // the flow graph points into it
  flow::FlowGraph flow;
  flow::StagePlan plan;
  net::Netlist netlist;
  std::string module;
  std::string expanded;  // serialized scope graph
  verilog::VerilogModuleText verilog;

  std::string source_text() const;  // all sources, concatenated
  std::string flow_dump() const { return flow::dump(flow, plan); }
  std::string netlist_dump() const { return net::dump(netlist); }
  verilog::CodeMetrics metrics() const;
};

/// Throws CompileError on any diagnostic, including combinational cycles.
Compilation compile(const std::vector<SourceFile>& sources, const CompileOptions& opts = {});

/// Netlist only; skips Verilog emission and the acyclicity check (for
/// mutation experiments that may build cyclic or broken designs).
net::Netlist build(const std::vector<SourceFile>& sources, const CompileOptions& opts = {});

/// Throws std::runtime_error when a file can't be read.
SourceFile read_source(const std::string& path);

}  // namespace tlflow
