#include <cctype>
#include <limits>
#include <sstream>

#include "tlflow/frontend.hpp"

namespace tlflow::frontend {

std::string_view to_string(TokenKind kind) {
  switch (kind) {
    case TokenKind::Scope: return "scope";
    case TokenKind::Pipeline: return "pipeline";
    case TokenKind::Stage: return "stage";
    case TokenKind::Signal: return "signal";
    case TokenKind::ChildSignal: return "child-signal";
    case TokenKind::Index: return "index";
    case TokenKind::External: return "external";
    case TokenKind::Identifier: return "identifier";
    case TokenKind::Intrinsic: return "intrinsic";
    case TokenKind::Integer: return "integer";
    case TokenKind::BitRange: return "bit-range";
    case TokenKind::Operator: return "operator";
    case TokenKind::Punct: return "punct";
    case TokenKind::Instantiate: return "instantiate";
  }
  return "?";
}

namespace {

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}
bool is_digit(char c) { return c >= '0' && c <= '9'; }

class LineLexer {
 public:
  LineLexer(std::string_view line, int lineno, int indent, const std::string& file,
            std::vector<Token>& out)
      : s_(line), line_(lineno), indent_(indent), file_(file), out_(out) {}

  void run() {
    pos_ = static_cast<size_t>(indent_);
    while (pos_ < s_.size()) {
      char c = s_[pos_];
      if (c == ' ') {
        ++pos_;
        continue;
      }
      if (c == '\t' || c == '\r') {
        ++pos_;
        continue;
      }
      lex_one();
    }
  }

 private:
  [[noreturn]] void error(size_t at, const std::string& msg) {
    fail({file_, line_, static_cast<int>(at) + 1}, msg);
  }

  char peek(size_t off = 0) const {
    return pos_ + off < s_.size() ? s_[pos_ + off] : '\0';
  }

  std::string ident_at(size_t at) const {
    size_t e = at;
    while (e < s_.size() && is_ident_char(s_[e])) ++e;
    return std::string(s_.substr(at, e - at));
  }

  Token& push(TokenKind kind, size_t start, size_t end) {
    Token t;
    t.kind = kind;
    t.text = std::string(s_.substr(start, end - start));
    t.line = line_;
    t.column = static_cast<int>(start) + 1;
    t.indent = indent_;
    out_.push_back(std::move(t));
    return out_.back();
  }

  bool prev_is_operand() const {
    if (out_.empty() || out_.back().line != line_) return false;
    const Token& t = out_.back();
    switch (t.kind) {
      case TokenKind::Signal:
      case TokenKind::ChildSignal:
      case TokenKind::Index:
      case TokenKind::External:
      case TokenKind::Identifier:
      case TokenKind::Integer:
      case TokenKind::BitRange:
        return true;
      case TokenKind::Punct:
        return t.text == ")";
      default:
        return false;
    }
  }

  std::uint64_t parse_number(size_t at, size_t end, int base) {
    std::uint64_t v = 0;
    bool any = false;
    for (size_t i = at; i < end; ++i) {
      char c = static_cast<char>(std::tolower(static_cast<unsigned char>(s_[i])));
      if (c == '_') continue;
      int d;
      if (is_digit(c)) d = c - '0';
      else if (c >= 'a' && c <= 'f') d = 10 + (c - 'a');
      else error(i, "illegal digit in integer literal");
      if (d >= base) error(i, "digit out of range for literal base");
      if (v > (std::numeric_limits<std::uint64_t>::max() - static_cast<std::uint64_t>(d)) /
                  static_cast<std::uint64_t>(base))
        error(at, "integer literal exceeds 64 bits");
      v = v * static_cast<std::uint64_t>(base) + static_cast<std::uint64_t>(d);
      any = true;
    }
    if (!any) error(at, "empty integer literal");
    return v;
  }

  void lex_one() {
    const size_t start = pos_;
    const char c = peek();

    if (static_cast<unsigned char>(c) >= 0x80) error(start, "illegal non-ASCII character");

    // m4+name
    if (s_.substr(pos_, 3) == "m4+") {
      if (!is_ident_start(peek(3))) error(start, "expected component name after 'm4+'");
      std::string name = ident_at(pos_ + 3);
      pos_ += 3 + name.size();
      push(TokenKind::Instantiate, start, pos_).name = name;
      return;
    }

    if (c == '/') {
      if (!is_ident_start(peek(1))) error(start, "expected scope name after '/'");
      std::vector<std::string> chain;
      while (peek() == '/' && is_ident_start(peek(1))) {
        std::string name = ident_at(pos_ + 1);
        chain.push_back(name);
        pos_ += 1 + name.size();
      }
      if (peek() == '$') {
        if (!is_ident_start(peek(1))) error(pos_, "expected signal name after '$'");
        std::string sig = ident_at(pos_ + 1);
        pos_ += 1 + sig.size();
        Token& t = push(TokenKind::ChildSignal, start, pos_);
        t.scopes = std::move(chain);
        t.name = sig;
        return;
      }
      if (chain.size() != 1) error(start, "nested scope path without signal");
      bool replicated = false;
      if (s_.substr(pos_, 3) == "[*]") {
        replicated = true;
        pos_ += 3;
      }
      Token& t = push(TokenKind::Scope, start, pos_);
      t.name = chain.front();
      t.replicated = replicated;
      return;
    }

    if (c == '|' && is_ident_start(peek(1))) {
      std::string name = ident_at(pos_ + 1);
      pos_ += 1 + name.size();
      push(TokenKind::Pipeline, start, pos_).name = name;
      return;
    }

    if (c == '@') {
      size_t p = pos_ + 1;
      bool neg = false;
      if (p < s_.size() && s_[p] == '-') {
        neg = true;
        ++p;
      }
      size_t e = p;
      while (e < s_.size() && is_digit(s_[e])) ++e;
      if (e == p) error(start, "expected stage number after '@'");
      std::uint64_t v = parse_number(p, e, 10);
      if (v > 1000000) error(start, "stage number too large");
      pos_ = e;
      Token& t = push(TokenKind::Stage, start, pos_);
      t.hi = neg ? -static_cast<int>(v) : static_cast<int>(v);
      return;
    }

    if (c == '$') {
      if (!is_ident_start(peek(1))) error(start, "expected signal name after '$'");
      std::string name = ident_at(pos_ + 1);
      pos_ += 1 + name.size();
      push(TokenKind::Signal, start, pos_).name = name;
      return;
    }

    if (c == '#') {
      if (!is_ident_start(peek(1))) error(start, "expected index name after '#'");
      std::string name = ident_at(pos_ + 1);
      pos_ += 1 + name.size();
      push(TokenKind::Index, start, pos_).name = name;
      return;
    }

    if (c == '*' && is_ident_start(peek(1)) && !prev_is_operand()) {
      std::string name = ident_at(pos_ + 1);
      pos_ += 1 + name.size();
      push(TokenKind::External, start, pos_).name = name;
      return;
    }

    if (is_ident_start(c)) {
      std::string name = ident_at(pos_);
      pos_ += name.size();
      push(name == "sqrt" ? TokenKind::Intrinsic : TokenKind::Identifier, start, pos_).name =
          name;
      return;
    }

    if (is_digit(c)) {
      size_t e = pos_;
      while (e < s_.size() && (is_digit(s_[e]) || s_[e] == '_')) ++e;
      if (e < s_.size() && s_[e] == '\'') {
        std::uint64_t width = parse_number(pos_, e, 10);
        if (width == 0 || width > 64) error(start, "sized literal width must be 1..64");
        char b = e + 1 < s_.size() ? static_cast<char>(std::tolower(s_[e + 1])) : '\0';
        int base = b == 'b' ? 2 : b == 'h' ? 16 : b == 'd' ? 10 : b == 'o' ? 8 : 0;
        if (base == 0) error(e, "expected base b, o, d or h in sized literal");
        size_t d = e + 2;
        size_t de = d;
        while (de < s_.size() && (std::isxdigit(static_cast<unsigned char>(s_[de])) || s_[de] == '_'))
          ++de;
        std::uint64_t v = parse_number(d, de, base);
        if (width < 64 && (v >> width) != 0) error(start, "literal value exceeds its width");
        pos_ = de;
        Token& t = push(TokenKind::Integer, start, pos_);
        t.value = v;
        t.width = static_cast<int>(width);
        return;
      }
      std::uint64_t v = parse_number(pos_, e, 10);
      pos_ = e;
      push(TokenKind::Integer, start, pos_).value = v;
      return;
    }

    if (c == '[') {
      size_t p = pos_ + 1;
      auto skip_ws = [&] {
        while (p < s_.size() && s_[p] == ' ') ++p;
      };
      auto number = [&]() -> int {
        skip_ws();
        size_t e = p;
        while (e < s_.size() && is_digit(s_[e])) ++e;
        if (e == p) error(p, "expected bit index");
        std::uint64_t v = parse_number(p, e, 10);
        if (v > 63) error(p, "bit index exceeds 63");
        p = e;
        skip_ws();
        return static_cast<int>(v);
      };
      int hi = number();
      int lo = hi;
      if (p < s_.size() && s_[p] == ':') {
        ++p;
        lo = number();
      }
      if (p >= s_.size() || s_[p] != ']') error(p, "expected ']'");
      ++p;
      if (hi < lo) error(start, "bit range must have hi >= lo");
      pos_ = p;
      Token& t = push(TokenKind::BitRange, start, pos_);
      t.hi = hi;
      t.lo = lo;
      return;
    }

    static constexpr std::string_view two_char[] = {"**", "==", "!=", "<=", ">=", "&&", "||"};
    for (auto op : two_char) {
      if (s_.substr(pos_, 2) == op) {
        pos_ += 2;
        push(TokenKind::Operator, start, pos_);
        return;
      }
    }
    static constexpr std::string_view one_char = "=+-*&|^~!<>?:";
    if (one_char.find(c) != std::string_view::npos) {
      ++pos_;
      push(TokenKind::Operator, start, pos_);
      return;
    }
    if (c == '(' || c == ')' || c == ',' || c == ';') {
      ++pos_;
      push(TokenKind::Punct, start, pos_);
      return;
    }
    std::ostringstream os;
    os << "illegal character '" << c << "'";
    error(start, os.str());
  }

  std::string_view s_;
  int line_;
  int indent_;
  const std::string& file_;
  std::vector<Token>& out_;
  size_t pos_ = 0;
};

}  // namespace

std::vector<Token> tokenize(std::string_view source, const std::string& file) {
  std::vector<Token> out;
  int lineno = 0;
  size_t start = 0;
  while (start <= source.size()) {
    size_t end = source.find('\n', start);
    if (end == std::string_view::npos) end = source.size();
    std::string_view line = source.substr(start, end - start);
    ++lineno;

    if (size_t cpos = line.find("//"); cpos != std::string_view::npos) line = line.substr(0, cpos);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\r' || line.back() == '\t'))
      line.remove_suffix(1);

    if (!line.empty()) {
      size_t indent = 0;
      while (indent < line.size() && (line[indent] == ' ' || line[indent] == '\t')) {
        if (line[indent] == '\t')
          fail({file, lineno, static_cast<int>(indent) + 1}, "tab character in indentation");
        ++indent;
      }
      LineLexer(line, lineno, static_cast<int>(indent), file, out).run();
    }
    if (end == source.size()) break;
    start = end + 1;
  }
  return out;
}

}  // namespace tlflow::frontend
