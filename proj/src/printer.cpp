#include <sstream>

#include "tlflow/frontend.hpp"

namespace tlflow::frontend {

namespace {

bool is_primary(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::Signal:
    case Expr::Kind::Child:
    case Expr::Kind::IndexRef:
    case Expr::Kind::External:
    case Expr::Kind::Literal:
    case Expr::Kind::Sqrt:
    case Expr::Kind::Select:
      return true;
    default:
      return false;
  }
}

void emit(std::ostream& os, const Expr& e);

void emit_operand(std::ostream& os, const Expr& e) {
  if (is_primary(e)) {
    emit(os, e);
  } else {
    os << '(';
    emit(os, e);
    os << ')';
  }
}

void emit(std::ostream& os, const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::Signal:
      os << '$' << e.name;
      break;
    case Expr::Kind::Child:
      for (const auto& s : e.scopes) os << '/' << s;
      os << '$' << e.name;
      break;
    case Expr::Kind::IndexRef:
      os << '#' << e.name;
      break;
    case Expr::Kind::External:
      os << '*' << e.name;
      break;
    case Expr::Kind::Literal:
      if (e.width > 0) os << e.width << "'d" << e.value;
      else os << e.value;
      break;
    case Expr::Kind::Unary:
      os << e.op;
      emit_operand(os, e.args[0]);
      break;
    case Expr::Kind::Binary:
      emit_operand(os, e.args[0]);
      os << ' ' << e.op << ' ';
      emit_operand(os, e.args[1]);
      break;
    case Expr::Kind::Ternary:
      emit_operand(os, e.args[0]);
      os << " ? ";
      emit_operand(os, e.args[1]);
      os << " : ";
      emit_operand(os, e.args[2]);
      break;
    case Expr::Kind::Select:
      emit_operand(os, e.args[0]);
      os << '[' << e.hi;
      if (e.hi != e.lo) os << ':' << e.lo;
      os << ']';
      break;
    case Expr::Kind::Sqrt:
      os << "sqrt(";
      emit(os, e.args[0]);
      os << ')';
      break;
  }
}

void emit_arg(std::ostream& os, const InstArg& a) {
  switch (a.kind) {
    case InstArg::Kind::Scope: os << '/' << a.name; break;
    case InstArg::Kind::Pipeline: os << '|' << a.name; break;
    case InstArg::Kind::Stage: os << '@' << a.value; break;
    case InstArg::Kind::Integer: os << a.value; break;
    case InstArg::Kind::Signal: os << (a.negated ? "!$" : "$") << a.name; break;
  }
}

void emit_nodes(std::ostream& os, const std::vector<ParseNode>& nodes, int depth) {
  const std::string pad(static_cast<size_t>(depth) * 3, ' ');
  for (const auto& n : nodes) {
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, ScopeEntry>) {
            os << pad << (v.element.kind == PathElement::Kind::Pipeline ? '|' : '/')
               << v.element.name << (v.element.replicated ? "[*]" : "") << '\n';
            emit_nodes(os, v.children, depth + 1);
          } else if constexpr (std::is_same_v<T, StageEntry>) {
            os << pad << '@' << v.stage << '\n';
            emit_nodes(os, v.children, depth + 1);
          } else if constexpr (std::is_same_v<T, AssignStatement>) {
            os << pad << (v.lhs.kind == LhsRef::Kind::External ? '*' : '$') << v.lhs.name;
            if (v.lhs.has_range) os << '[' << v.lhs.hi << ':' << v.lhs.lo << ']';
            os << " = ";
            emit(os, v.rhs);
            os << ";\n";
          } else {
            os << pad << "m4+" << v.component << '(';
            for (size_t i = 0; i < v.args.size(); ++i) {
              if (i) os << ", ";
              emit_arg(os, v.args[i]);
            }
            os << ")\n";
          }
        },
        n.item);
  }
}

}  // namespace

std::string print_expr(const Expr& e) {
  std::ostringstream os;
  emit(os, e);
  return os.str();
}

std::string print(const ParseTree& tree) {
  std::ostringstream os;
  emit_nodes(os, tree.root, 0);
  return os.str();
}

}  // namespace tlflow::frontend
