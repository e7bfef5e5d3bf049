#include <cstdio>
#include <sstream>

#include "tlflow/verilog_backend.hpp"

namespace tlflow::verilog {

namespace {

// Text with comments replaced by a single space each; newlines kept.
std::string strip_comments(const std::string& t) {
  std::string out;
  out.reserve(t.size());
  for (size_t i = 0; i < t.size(); ++i) {
    if (t[i] == '/' && i + 1 < t.size() && t[i + 1] == '/') {
      while (i < t.size() && t[i] != '\n') ++i;
      if (i < t.size()) out += '\n';
    } else if (t[i] == '/' && i + 1 < t.size() && t[i + 1] == '*') {
      i += 2;
      while (i + 1 < t.size() && !(t[i] == '*' && t[i + 1] == '/')) {
        if (t[i] == '\n') out += '\n';
        ++i;
      }
      ++i;
      out += ' ';
    } else {
      out += t[i];
    }
  }
  return out;
}

double ratio(std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); }

}  // namespace

std::size_t count_code_chars(const std::string& text) {
  std::size_t n = 0;
  for (char ch : strip_comments(text))
    if (ch != ' ' && ch != '\t' && ch != '\n' && ch != '\r' && ch != '\f' && ch != '\v') ++n;
  return n;
}

std::size_t count_logical_lines(const std::string& text) {
  std::istringstream in(strip_comments(text));
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);)
    if (line.find_first_not_of(" \t\r") != std::string::npos) ++n;
  return n;
}

CodeMetrics measure_code(const std::string& source, const std::string& expanded, const std::string& verilog) {
  return {count_code_chars(source), count_code_chars(expanded), count_code_chars(verilog)};
}

double CodeMetrics::expanded_per_source() const { return ratio(expanded, source); }
double CodeMetrics::verilog_per_expanded() const { return ratio(verilog, expanded); }
double CodeMetrics::verilog_per_source() const { return ratio(verilog, source); }

std::string CodeMetrics::report() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%-10s %10s\n%-10s %10zu\n%-10s %10zu\n%-10s %10zu\n"
                "%-22s %8.2f\n%-22s %8.2f\n%-22s %8.2f\n",
                "form", "chars", "source", source, "expanded", expanded, "verilog", verilog,
                "expanded/source", expanded_per_source(), "verilog/expanded", verilog_per_expanded(),
                "verilog/source", verilog_per_source());
  std::string s = buf;
  std::snprintf(buf, sizeof buf,
                "source_chars=%zu\nexpanded_chars=%zu\nverilog_chars=%zu\n"
                "ratio_expanded_source=%.4f\nratio_verilog_expanded=%.4f\nratio_verilog_source=%.4f\n",
                source, expanded, verilog, expanded_per_source(), verilog_per_expanded(), verilog_per_source());
  return s + buf;
}

}  // namespace tlflow::verilog
