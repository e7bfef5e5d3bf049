#pragma once

// Verilog-2001 emission and code-size metrics.

#include <cstddef>
#include <string>
#include <vector>

#include "tlflow/netlist.hpp"

namespace tlflow::verilog {

struct VerilogModuleText {
  std::string name;
  std::vector<std::string> ports;  // clk, reset, then primary inputs and outputs
  std::string text;
};

/// Deterministic for a given netlist. Requires an acyclic netlist.
VerilogModuleText emit_verilog(const net::Netlist& n, const std::string& module_name);

/// Legal Verilog identifier derived from `raw` (not yet collision-free).
std::string sanitize(const std::string& raw);

struct CodeMetrics {
  std::size_t source = 0, expanded = 0, verilog = 0;

  double expanded_per_source() const;  // 0 when source is empty
  double verilog_per_expanded() const;
  double verilog_per_source() const;
  /// Aligned table followed by key=value lines.
  std::string report() const;
};

/// Non-whitespace characters outside `//` and `/* */` comments.
std::size_t count_code_chars(const std::string& text);

CodeMetrics measure_code(const std::string& source, const std::string& expanded, const std::string& verilog);

/// Non-comment, non-blank lines.
std::size_t count_logical_lines(const std::string& text);

}  // namespace tlflow::verilog
