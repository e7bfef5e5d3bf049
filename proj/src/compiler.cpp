#include "tlflow/compiler.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tlflow {

namespace {

struct Front {
  std::unique_ptr<scope::ScopeGraph> scopes;
  flow::FlowGraph flow;
  flow::StagePlan plan;
};

Front front(const std::vector<SourceFile>& sources, const CompileOptions& opts) {
  if (sources.empty()) fail({}, "no source files");
  std::vector<frontend::ParseTree> trees;
  for (const auto& s : sources) trees.push_back(frontend::parse_source(s.text, s.name));
  scope::ElaborationOptions eo;
  eo.ports = opts.ports;
  Front f;
  f.scopes = std::make_unique<scope::ScopeGraph>(
      scope::resolve_references(scope::expand_instantiations(scope::merge_reentrant(trees, eo))));
  f.flow = flow::resolve_fields(flow::build_flow_graph(*f.scopes));
  f.plan = flow::plan_stages(f.flow);
  return f;
}

}  // namespace

std::string Compilation::source_text() const {
  std::string s;
  for (const auto& f : sources) s += f.text;
  return s;
}

verilog::CodeMetrics Compilation::metrics() const {
  return verilog::measure_code(source_text(), expanded, verilog.text);
}

Compilation compile(const std::vector<SourceFile>& sources, const CompileOptions& opts) {
  Front f = front(sources, opts);
  Compilation c;
  c.sources = sources;
  c.expanded = scope::serialize(*f.scopes);
  c.scopes = std::move(f.scopes);
  c.flow = std::move(f.flow);
  c.plan = std::move(f.plan);
  c.netlist = staging::build_netlist(c.flow, c.plan, opts.build);
  auto cycles = net::check_acyclic(c.netlist);
  if (!cycles.empty()) throw CompileError(std::move(cycles));
  c.module = opts.module.empty() ? std::filesystem::path(sources.front().name).stem().string() : opts.module;
  c.verilog = verilog::emit_verilog(c.netlist, c.module);
  return c;
}

net::Netlist build(const std::vector<SourceFile>& sources, const CompileOptions& opts) {
  Front f = front(sources, opts);
  return staging::build_netlist(f.flow, f.plan, opts.build);
}

SourceFile read_source(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return {path, ss.str()};
}

}  // namespace tlflow
