#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace tlflow {

struct SourceLoc {
  std::string file;
  int line = 0;    // 1-based, 0 when unknown
  int column = 0;  // 1-based, 0 when unknown
};

struct Diagnostic {
  SourceLoc loc;
  std::string message;

  /// Renders as `file:line:column: error: message`.
  std::string str() const;
};

/// Thrown by every compilation stage. Carries one or more diagnostics.
class CompileError : public std::runtime_error {
 public:
  explicit CompileError(std::vector<Diagnostic> diags);
  CompileError(SourceLoc loc, std::string message);

  const std::vector<Diagnostic>& diagnostics() const { return diags_; }

 private:
  std::vector<Diagnostic> diags_;
};

[[noreturn]] void fail(const SourceLoc& loc, std::string message);

}  // namespace tlflow
