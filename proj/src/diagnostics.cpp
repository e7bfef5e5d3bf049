#include "tlflow/diagnostics.hpp"

#include <sstream>

namespace tlflow {

namespace {

std::string join(const std::vector<Diagnostic>& diags) {
  std::ostringstream os;
  for (size_t i = 0; i < diags.size(); ++i) {
    if (i) os << '\n';
    os << diags[i].str();
  }
  return os.str();
}

}  // namespace

std::string Diagnostic::str() const {
  std::ostringstream os;
  os << (loc.file.empty() ? "<input>" : loc.file);
  if (loc.line > 0) {
    os << ':' << loc.line;
    if (loc.column > 0) os << ':' << loc.column;
  }
  os << ": error: " << message;
  return os.str();
}

CompileError::CompileError(std::vector<Diagnostic> diags)
    : std::runtime_error(join(diags)), diags_(std::move(diags)) {}

CompileError::CompileError(SourceLoc loc, std::string message)
    : CompileError(std::vector<Diagnostic>{{std::move(loc), std::move(message)}}) {}

void fail(const SourceLoc& loc, std::string message) {
  throw CompileError(loc, std::move(message));
}

}  // namespace tlflow
