#include <optional>

#include "tlflow/frontend.hpp"

namespace tlflow::frontend {

bool Expr::operator==(const Expr& o) const {
  return kind == o.kind && op == o.op && name == o.name && scopes == o.scopes &&
         value == o.value && width == o.width && hi == o.hi && lo == o.lo && args == o.args;
}

bool ParseNode::operator==(const ParseNode& o) const {
  if (item.index() != o.item.index()) return false;
  return std::visit(
      [&](const auto& a) -> bool {
        using T = std::decay_t<decltype(a)>;
        const auto& b = std::get<T>(o.item);
        if constexpr (std::is_same_v<T, ScopeEntry>) {
          return a.element == b.element && a.children == b.children;
        } else if constexpr (std::is_same_v<T, StageEntry>) {
          return a.stage == b.stage && a.children == b.children;
        } else if constexpr (std::is_same_v<T, AssignStatement>) {
          return a.lhs == b.lhs && a.rhs == b.rhs;
        } else {
          return a.component == b.component && a.args == b.args;
        }
      },
      item);
}

std::string_view to_string(InstArg::Kind kind) {
  switch (kind) {
    case InstArg::Kind::Scope: return "scope";
    case InstArg::Kind::Pipeline: return "pipeline";
    case InstArg::Kind::Stage: return "stage";
    case InstArg::Kind::Integer: return "integer";
    case InstArg::Kind::Signal: return "signal";
  }
  return "?";
}

const Expr* find_misplaced_any(const Expr& rhs) {
  // Walk the "steering" positions: the root and ternary arms.
  if (rhs.is_any()) return nullptr;
  if (rhs.kind == Expr::Kind::Ternary) {
    // The condition is an ordinary expression; $ANY anywhere inside it is misplaced.
    struct Finder {
      static const Expr* any_inside(const Expr& e) {
        if (e.is_any()) return &e;
        for (const auto& a : e.args)
          if (const Expr* f = any_inside(a)) return f;
        return nullptr;
      }
    };
    if (const Expr* f = Finder::any_inside(rhs.args[0])) return f;
    if (const Expr* f = find_misplaced_any(rhs.args[1])) return f;
    return find_misplaced_any(rhs.args[2]);
  }
  for (const auto& a : rhs.args) {
    if (a.is_any()) return &a;
    if (const Expr* f = find_misplaced_any(a)) return f;
  }
  return nullptr;
}

namespace {

class ExprParser {
 public:
  ExprParser(const std::vector<const Token*>& toks, size_t begin, size_t end,
             const std::string& file)
      : t_(toks), pos_(begin), end_(end), file_(file) {}

  Expr parse_all() {
    Expr e = ternary();
    if (pos_ != end_) error(*t_[pos_], "unexpected token '" + t_[pos_]->text + "'");
    return e;
  }

 private:
  [[noreturn]] void error(const Token& t, const std::string& msg) {
    fail({file_, t.line, t.column}, msg);
  }
  [[noreturn]] void error_eol(const std::string& msg) {
    const Token& last = *t_[end_ > 0 ? end_ - 1 : 0];
    fail({file_, last.line, last.column + static_cast<int>(last.text.size())}, msg);
  }

  const Token* peek() const { return pos_ < end_ ? t_[pos_] : nullptr; }
  bool peek_op(std::string_view op) const {
    const Token* t = peek();
    return t && t->kind == TokenKind::Operator && t->text == op;
  }
  bool peek_punct(std::string_view p) const {
    const Token* t = peek();
    return t && t->kind == TokenKind::Punct && t->text == p;
  }
  SourceLoc loc_of(const Token& t) const { return {file_, t.line, t.column}; }

  Expr ternary() {
    Expr cond = binary(0);
    if (peek_op("?")) {
      const Token& q = *peek();
      ++pos_;
      Expr a = ternary();
      if (!peek_op(":")) {
        if (peek()) error(*peek(), "expected ':' in conditional expression");
        error_eol("expected ':' in conditional expression");
      }
      ++pos_;
      Expr b = ternary();
      Expr e;
      e.kind = Expr::Kind::Ternary;
      e.loc = loc_of(q);
      e.args = {std::move(cond), std::move(a), std::move(b)};
      return e;
    }
    return cond;
  }

  static int precedence(std::string_view op) {
    if (op == "||") return 1;
    if (op == "&&") return 2;
    if (op == "|") return 3;
    if (op == "^") return 4;
    if (op == "&") return 5;
    if (op == "==" || op == "!=") return 6;
    if (op == "<" || op == "<=" || op == ">" || op == ">=") return 7;
    if (op == "+" || op == "-") return 8;
    if (op == "*") return 9;
    if (op == "**") return 10;
    return -1;
  }

  Expr binary(int min_prec) {
    Expr lhs = unary();
    while (true) {
      const Token* t = peek();
      if (!t || t->kind != TokenKind::Operator) break;
      int prec = precedence(t->text);
      if (prec < 0 || prec < min_prec) break;
      ++pos_;
      Expr rhs = binary(prec + 1);
      Expr e;
      e.kind = Expr::Kind::Binary;
      e.op = t->text;
      e.loc = loc_of(*t);
      e.args = {std::move(lhs), std::move(rhs)};
      lhs = std::move(e);
    }
    return lhs;
  }

  Expr unary() {
    const Token* t = peek();
    if (t && t->kind == TokenKind::Operator && (t->text == "!" || t->text == "~" || t->text == "-")) {
      ++pos_;
      Expr e;
      e.kind = Expr::Kind::Unary;
      e.op = t->text;
      e.loc = loc_of(*t);
      e.args = {unary()};
      return e;
    }
    return postfix();
  }

  Expr postfix() {
    Expr e = primary();
    while (const Token* t = peek()) {
      if (t->kind != TokenKind::BitRange) break;
      ++pos_;
      Expr s;
      s.kind = Expr::Kind::Select;
      s.hi = t->hi;
      s.lo = t->lo;
      s.loc = loc_of(*t);
      s.args = {std::move(e)};
      e = std::move(s);
    }
    return e;
  }

  Expr primary() {
    const Token* t = peek();
    if (!t) error_eol("expected expression");
    ++pos_;
    Expr e;
    e.loc = loc_of(*t);
    switch (t->kind) {
      case TokenKind::Signal:
        e.kind = Expr::Kind::Signal;
        e.name = t->name;
        return e;
      case TokenKind::ChildSignal:
        e.kind = Expr::Kind::Child;
        e.name = t->name;
        e.scopes = t->scopes;
        return e;
      case TokenKind::Index:
        e.kind = Expr::Kind::IndexRef;
        e.name = t->name;
        return e;
      case TokenKind::External:
        e.kind = Expr::Kind::External;
        e.name = t->name;
        return e;
      case TokenKind::Integer:
        e.kind = Expr::Kind::Literal;
        e.value = t->value;
        e.width = t->width;
        return e;
      case TokenKind::Intrinsic: {
        if (!peek_punct("(")) error(*t, "expected '(' after intrinsic");
        ++pos_;
        e.kind = Expr::Kind::Sqrt;
        e.args = {ternary()};
        if (!peek_punct(")")) error_eol("expected ')'");
        ++pos_;
        return e;
      }
      case TokenKind::Punct:
        if (t->text == "(") {
          Expr inner = ternary();
          if (!peek_punct(")")) {
            if (peek()) error(*peek(), "expected ')'");
            error_eol("expected ')'");
          }
          ++pos_;
          return inner;
        }
        break;
      default:
        break;
    }
    error(*t, "unexpected token '" + t->text + "' in expression");
  }

  const std::vector<const Token*>& t_;
  size_t pos_;
  size_t end_;
  const std::string& file_;
};

struct Block {
  int depth;                      // indentation of the line that opened the block
  std::vector<ParseNode>* children;
  std::optional<int> child_depth;
  bool in_pipeline;
  bool in_stage;
};

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<Token>& tokens, const std::string& file)
      : tokens_(tokens), file_(file) {}

  ParseTree run() {
    ParseTree tree;
    tree.file = file_;
    stack_.push_back({-1, &tree.root, std::nullopt, false, false});

    size_t i = 0;
    while (i < tokens_.size()) {
      size_t j = i;
      std::vector<const Token*> line;
      while (j < tokens_.size() && tokens_[j].line == tokens_[i].line) line.push_back(&tokens_[j++]);
      handle_line(line);
      i = j;
    }
    return tree;
  }

 private:
  [[noreturn]] void error(const Token& t, const std::string& msg) {
    fail({file_, t.line, t.column}, msg);
  }

  void handle_line(const std::vector<const Token*>& line) {
    const Token& first = *line.front();
    const int depth = first.indent;

    while (stack_.back().depth >= depth) stack_.pop_back();
    Block& parent = stack_.back();
    if (!parent.child_depth) {
      parent.child_depth = depth;
    } else if (*parent.child_depth != depth) {
      error(first, depth < *parent.child_depth
                       ? "inconsistent dedent: indentation returns to a depth never opened"
                       : "unexpected indentation");
    }

    ParseNode node;
    node.loc = {file_, first.line, first.column};

    auto sole = [&](const char* what) {
      if (line.size() != 1) error(*line[1], std::string("unexpected token after ") + what);
    };

    switch (first.kind) {
      case TokenKind::Scope: {
        sole("scope");
        ScopeEntry e;
        e.element = {PathElement::Kind::Hier, first.name, first.replicated};
        if (parent.in_pipeline && first.replicated)
          error(first, "replicated scopes are not allowed inside a pipeline");
        node.item = std::move(e);
        open(parent, std::move(node), depth, parent.in_pipeline, parent.in_stage);
        return;
      }
      case TokenKind::Pipeline: {
        sole("pipeline");
        if (parent.in_pipeline) error(first, "pipeline nested inside another pipeline");
        ScopeEntry e;
        e.element = {PathElement::Kind::Pipeline, first.name, false};
        node.item = std::move(e);
        open(parent, std::move(node), depth, true, false);
        return;
      }
      case TokenKind::Stage: {
        sole("stage");
        if (!parent.in_pipeline) error(first, "stage outside of a pipeline");
        if (parent.in_stage) error(first, "stage nested inside another stage");
        if (first.hi < 0) error(first, "negative stage numbers are not supported");
        node.item = StageEntry{first.hi, {}};
        open(parent, std::move(node), depth, true, true);
        return;
      }
      case TokenKind::Instantiate: {
        if (parent.in_pipeline) error(first, "component instantiation inside a pipeline");
        node.item = parse_instantiation(line);
        parent.children->push_back(std::move(node));
        return;
      }
      case TokenKind::Signal:
      case TokenKind::External: {
        if (!parent.in_stage) error(first, "statement outside of a stage");
        node.item = parse_assign(line);
        parent.children->push_back(std::move(node));
        return;
      }
      default:
        error(first, "unexpected '" + first.text + "' at start of statement");
    }
  }

  void open(Block& parent, ParseNode node, int depth, bool in_pipeline, bool in_stage) {
    parent.children->push_back(std::move(node));
    ParseNode& added = parent.children->back();
    std::vector<ParseNode>* kids = std::visit(
        [](auto& v) -> std::vector<ParseNode>* {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, ScopeEntry> || std::is_same_v<T, StageEntry>)
            return &v.children;
          else
            return nullptr;
        },
        added.item);
    stack_.push_back({depth, kids, std::nullopt, in_pipeline, in_stage});
  }

  Instantiation parse_instantiation(const std::vector<const Token*>& line) {
    Instantiation inst;
    inst.component = line[0]->name;
    size_t p = 1;
    auto bad = [&](size_t at, const std::string& msg) -> void {
      const Token& t = at < line.size() ? *line[at] : *line.back();
      error(t, "malformed instantiation argument list: " + msg);
    };
    auto is_punct = [&](size_t at, std::string_view s) {
      return at < line.size() && line[at]->kind == TokenKind::Punct && line[at]->text == s;
    };
    if (!is_punct(p, "(")) bad(p, "expected '('");
    ++p;
    if (is_punct(p, ")")) {
      ++p;
    } else {
      while (true) {
        if (p >= line.size()) bad(p, "unterminated argument list");
        const Token& t = *line[p];
        InstArg arg;
        arg.loc = {file_, t.line, t.column};
        if (t.kind == TokenKind::Scope && !t.replicated) {
          arg.kind = InstArg::Kind::Scope;
          arg.name = t.name;
        } else if (t.kind == TokenKind::Pipeline) {
          arg.kind = InstArg::Kind::Pipeline;
          arg.name = t.name;
        } else if (t.kind == TokenKind::Stage) {
          arg.kind = InstArg::Kind::Stage;
          arg.value = t.hi;
        } else if (t.kind == TokenKind::Integer) {
          arg.kind = InstArg::Kind::Integer;
          arg.value = static_cast<std::int64_t>(t.value);
        } else if (t.kind == TokenKind::Signal) {
          arg.kind = InstArg::Kind::Signal;
          arg.name = t.name;
        } else if (t.kind == TokenKind::Operator && t.text == "!" && p + 1 < line.size() &&
                   line[p + 1]->kind == TokenKind::Signal) {
          arg.kind = InstArg::Kind::Signal;
          arg.name = line[p + 1]->name;
          arg.negated = true;
          ++p;
        } else {
          bad(p, "unexpected '" + t.text + "'");
        }
        inst.args.push_back(std::move(arg));
        ++p;
        if (is_punct(p, ",")) {
          ++p;
          continue;
        }
        if (is_punct(p, ")")) {
          ++p;
          break;
        }
        bad(p, "expected ',' or ')'");
      }
    }
    if (is_punct(p, ";")) ++p;
    if (p != line.size()) bad(p, "trailing tokens after ')'");
    return inst;
  }

  AssignStatement parse_assign(const std::vector<const Token*>& line) {
    AssignStatement st;
    const Token& head = *line[0];
    size_t p = 1;
    if (head.kind == TokenKind::Signal) {
      st.lhs.kind = LhsRef::Kind::Signal;
      st.lhs.name = head.name;
      if (p < line.size() && line[p]->kind == TokenKind::BitRange) {
        st.lhs.has_range = true;
        st.lhs.hi = line[p]->hi;
        st.lhs.lo = line[p]->lo;
        ++p;
      }
    } else {
      st.lhs.kind = LhsRef::Kind::External;
      st.lhs.name = head.name;
    }
    if (p >= line.size() || line[p]->kind != TokenKind::Operator || line[p]->text != "=")
      error(p < line.size() ? *line[p] : head, "expected '=' in assignment");
    ++p;
    size_t end = line.size();
    if (line.back()->kind != TokenKind::Punct || line.back()->text != ";")
      error(*line.back(), "expected ';' at end of statement");
    --end;
    if (p >= end) error(*line[p - 1], "missing right-hand side");
    st.rhs = ExprParser(line, p, end, file_).parse_all();
    if (const Expr* bad = find_misplaced_any(st.rhs))
      fail(bad->loc, "$ANY must be a whole operand: the full right-hand side or a full arm of a conditional");
    return st;
  }

  const std::vector<Token>& tokens_;
  const std::string& file_;
  std::vector<Block> stack_;
};

}  // namespace

ParseTree parse(const std::vector<Token>& tokens, const std::string& file) {
  return TreeBuilder(tokens, file).run();
}

ParseTree parse_source(std::string_view source, const std::string& file) {
  return parse(tokenize(source, file), file);
}

}  // namespace tlflow::frontend
