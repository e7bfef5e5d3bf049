#pragma once

// Tokenizer, parser and canonical printer for the TL-Verilog subset.

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tlflow/diagnostics.hpp"

namespace tlflow::frontend {

enum class TokenKind {
  Scope,        // /name or /name[*]
  Pipeline,     // |name
  Stage,        // @N
  Signal,       // $name
  ChildSignal,  // /child$name (possibly /a/b$name)
  Index,        // #name
  External,     // *name
  Identifier,
  Intrinsic,    // sqrt
  Integer,      // 42, 4'b1010, 8'hff
  BitRange,     // [hi:lo] or [bit]
  Operator,
  Punct,        // ( ) , ;
  Instantiate,  // m4+name
};

std::string_view to_string(TokenKind kind);

struct Token {
  TokenKind kind{};
  std::string text;
  int line = 0;
  int column = 0;
  int indent = 0;  // leading-whitespace depth of the token's line

  // Decoded payloads, populated according to kind.
  std::string name;                // identifier without its sigil
  std::vector<std::string> scopes; // ChildSignal: scope chain
  bool replicated = false;         // Scope: `[*]`
  std::uint64_t value = 0;         // Integer
  int width = 0;                   // Integer: sized literal width, 0 if unsized
  int hi = 0, lo = 0;              // BitRange, Stage (hi holds the stage)
};

/// Throws CompileError on a tab in leading whitespace or an illegal character.
std::vector<Token> tokenize(std::string_view source, const std::string& file = {});

// ---------------------------------------------------------------------------
// Expressions

struct Expr {
  enum class Kind {
    Signal,    // $name (name == "ANY" for $ANY)
    Child,     // /a/b$name
    IndexRef,  // #name
    External,  // *name
    Literal,
    Unary,     // op: ! ~ -
    Binary,    // op: ** * + - == != < <= > >= & ^ | && ||
    Ternary,   // args: cond, then, else
    Select,    // args[0][hi:lo]
    Sqrt,      // sqrt(args[0])
  };

  Kind kind = Kind::Literal;
  std::string op;
  std::string name;
  std::vector<std::string> scopes;  // Child: scope chain
  std::uint64_t value = 0;
  int width = 0;  // Literal: sized width (0 = unsized)
  int hi = 0, lo = 0;
  std::vector<Expr> args;
  SourceLoc loc;

  bool is_any() const {
    return (kind == Kind::Signal || kind == Kind::Child) && name == "ANY";
  }
  bool operator==(const Expr& o) const;
};

/// Checks that `$ANY` only appears as the whole expression or as a full arm
/// of a ternary (recursively). Returns the offending sub-expression or null.
const Expr* find_misplaced_any(const Expr& rhs);

// ---------------------------------------------------------------------------
// Parse tree

struct PathElement {
  enum class Kind { Hier, Pipeline };
  Kind kind = Kind::Hier;
  std::string name;
  bool replicated = false;

  bool operator==(const PathElement&) const = default;
};

struct LhsRef {
  enum class Kind { Signal, External };
  Kind kind = Kind::Signal;
  std::string name;  // "ANY" for $ANY
  bool has_range = false;
  int hi = 0, lo = 0;

  bool operator==(const LhsRef&) const = default;
};

struct InstArg {
  enum class Kind { Scope, Pipeline, Stage, Integer, Signal };
  Kind kind = Kind::Integer;
  std::string name;
  std::int64_t value = 0;  // Stage number or integer
  bool negated = false;    // Signal: `!$sig`
  SourceLoc loc;

  bool operator==(const InstArg& o) const {
    return kind == o.kind && name == o.name && value == o.value && negated == o.negated;
  }
};

std::string_view to_string(InstArg::Kind kind);

struct ParseNode;

struct ScopeEntry {
  PathElement element;
  std::vector<ParseNode> children;
};

struct StageEntry {
  int stage = 0;
  std::vector<ParseNode> children;
};

struct AssignStatement {
  LhsRef lhs;
  Expr rhs;
};

struct Instantiation {
  std::string component;
  std::vector<InstArg> args;
};

struct ParseNode {
  std::variant<ScopeEntry, StageEntry, AssignStatement, Instantiation> item;
  SourceLoc loc;

  bool operator==(const ParseNode& o) const;
};

struct ParseTree {
  std::string file;
  std::vector<ParseNode> root;

  bool operator==(const ParseTree& o) const { return root == o.root; }
};

/// Builds the indentation-derived tree. Same-named scope entries stay
/// separate siblings; fusion happens in scope_graph.
ParseTree parse(const std::vector<Token>& tokens, const std::string& file = {});

/// Convenience: parse(tokenize(source)).
ParseTree parse_source(std::string_view source, const std::string& file = {});

/// Canonical printer (3-space indentation). Re-parsing the output yields a
/// structurally identical tree.
std::string print(const ParseTree& tree);
std::string print_expr(const Expr& e);

}  // namespace tlflow::frontend
