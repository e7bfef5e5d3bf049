#include "tlflow/verilog_backend.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>

namespace tlflow::verilog {

using net::Node;
using net::Op;

namespace {

const std::set<std::string>& keywords() {
  static const std::set<std::string> k = {
      "always", "and", "assign", "begin", "buf", "case", "casex", "casez", "default", "defparam",
      "disable", "edge", "else", "end", "endcase", "endfunction", "endmodule", "endtask", "event",
      "for", "force", "forever", "fork", "function", "if", "initial", "inout", "input", "integer",
      "join", "localparam", "module", "nand", "negedge", "nor", "not", "or", "output", "parameter",
      "posedge", "real", "reg", "release", "repeat", "signed", "specify", "supply0", "supply1", "task",
      "time", "tri", "wait", "wand", "while", "wire", "wor", "xnor", "xor", "generate", "genvar",
      "endgenerate", "automatic", "clk", "reset", "tl_sqrt"};
  return k;
}

std::string range(int w) { return "[" + std::to_string(w - 1) + ":0] "; }

std::string literal(std::uint64_t v, int w) { return std::to_string(w) + "'d" + std::to_string(v); }

}  // namespace

std::string sanitize(const std::string& raw) {
  std::string s;
  bool under = false;
  for (char ch : raw) {
    bool ok = std::isalnum(static_cast<unsigned char>(ch)) != 0;
    if (ok) {
      s += ch;
      under = false;
    } else if (!under && !s.empty()) {
      s += '_';
      under = true;
    }
  }
  while (!s.empty() && s.back() == '_') s.pop_back();
  if (s.empty()) return "n";
  if (std::isdigit(static_cast<unsigned char>(s[0]))) s = "n" + s;
  if (keywords().count(s)) s += "_q";
  return s;
}

VerilogModuleText emit_verilog(const net::Netlist& n, const std::string& module_name) {
  auto order = net::topo_order(n);
  const size_t N = n.nodes.size();

  // identifiers: ports keep their names; everything else is derived
  std::vector<std::string> id(N);
  std::set<std::string> used = {"clk", "reset"};
  auto claim = [&](size_t i, const std::string& stem) {
    std::string s = stem;
    for (int k = 2; used.count(s); ++k) s = stem + "_" + std::to_string(k);
    used.insert(s);
    id[i] = s;
  };
  for (int i : n.inputs) claim(static_cast<size_t>(i), sanitize(n.nodes[static_cast<size_t>(i)].name));
  for (int i : n.outputs) claim(static_cast<size_t>(i), sanitize(n.nodes[static_cast<size_t>(i)].name));
  for (size_t i = 0; i < N; ++i) {
    const Node& x = n.nodes[i];
    if (x.op == Op::Input || x.op == Op::Output || x.op == Op::Const) continue;
    claim(i, x.name.empty() ? "n" + std::to_string(i) : sanitize(x.name));
  }

  auto ref = [&](int a) {
    const Node& x = n.nodes[static_cast<size_t>(a)];
    return x.op == Op::Const ? literal(x.value, x.width) : id[static_cast<size_t>(a)];
  };

  VerilogModuleText out;
  out.name = sanitize(module_name);
  out.ports = {"clk", "reset"};
  std::ostringstream os;
  os << "// Generated by tlflow. Do not edit.\n";
  os << "`default_nettype none\n";
  os << "module " << out.name << " (\n";
  os << "   input  wire clk,\n   input  wire reset";
  for (int i : n.inputs) {
    const Node& x = n.nodes[static_cast<size_t>(i)];
    os << ",\n   input  wire " << range(x.width) << id[static_cast<size_t>(i)];
    out.ports.push_back(id[static_cast<size_t>(i)]);
  }
  for (int i : n.outputs) {
    const Node& x = n.nodes[static_cast<size_t>(i)];
    os << ",\n   output wire " << range(x.width) << id[static_cast<size_t>(i)];
    out.ports.push_back(id[static_cast<size_t>(i)]);
  }
  os << "\n);\n";

  if (n.count(Op::Sqrt)) {
    os << "\n   // floor(sqrt(x)), bit-pair restoring method\n";
    os << "   function [31:0] tl_sqrt;\n";
    os << "      input [63:0] x;\n";
    os << "      reg [63:0] num, res, b;\n";
    os << "      integer i;\n";
    os << "      begin\n";
    os << "         num = x;\n";
    os << "         res = 64'd0;\n";
    os << "         b = 64'h4000000000000000;\n";
    os << "         for (i = 0; i < 32; i = i + 1) begin\n";
    os << "            if (num >= res + b) begin\n";
    os << "               num = num - (res + b);\n";
    os << "               res = (res >> 1) + b;\n";
    os << "            end else begin\n";
    os << "               res = res >> 1;\n";
    os << "            end\n";
    os << "            b = b >> 2;\n";
    os << "         end\n";
    os << "         tl_sqrt = res[31:0];\n";
    os << "      end\n";
    os << "   endfunction\n";
  }

  if (!n.regs.empty()) os << '\n';
  for (int r : n.regs) {
    const Node& x = n.nodes[static_cast<size_t>(r)];
    os << "   reg  " << range(x.width) << id[static_cast<size_t>(r)] << ";";
    if (!x.src.empty()) os << "  // " << x.src;
    os << '\n';
  }

  // Operand `a` at exactly `w` bits: zero-extended or truncated explicitly,
  // so no assignment or operator relies on implicit width rules.
  auto fit = [&](int a, int w) -> std::string {
    const Node& x = n.nodes[static_cast<size_t>(a)];
    if (x.op == Op::Const) return literal(x.value & net::mask(w), w);
    const std::string& s = id[static_cast<size_t>(a)];
    if (x.width == w) return s;
    if (x.width < w) return "{" + literal(0, w - x.width) + ", " + s + "}";
    return s + "[" + std::to_string(w - 1) + ":0]";
  };

  std::ostringstream assigns;
  bool any_wire = false;
  for (int v : order) {
    const Node& x = n.nodes[static_cast<size_t>(v)];
    if (x.op == Op::Output) continue;
    any_wire = true;
    const std::string& me = id[static_cast<size_t>(v)];
    const int w = x.width;
    // comparison operands meet at their common width
    int cw = 0;
    for (int a : x.args) cw = std::max(cw, n.nodes[static_cast<size_t>(a)].width);
    auto a = [&](size_t i) { return fit(x.args[i], w); };
    auto c = [&](size_t i) { return fit(x.args[i], cw); };
    auto t = [&](size_t i) { return ref(x.args[i]); };
    std::string rhs;
    switch (x.op) {
      case Op::Wire: rhs = a(0); break;
      case Op::Add: rhs = a(0) + " + " + a(1); break;
      case Op::Sub: rhs = a(0) + " - " + a(1); break;
      case Op::Mul: rhs = a(0) + " * " + a(1); break;
      case Op::And: rhs = a(0) + " & " + a(1); break;
      case Op::Or: rhs = a(0) + " | " + a(1); break;
      case Op::Xor: rhs = a(0) + " ^ " + a(1); break;
      case Op::Not: rhs = "~" + a(0); break;
      case Op::Neg: rhs = "-" + a(0); break;
      case Op::LNot: rhs = "!" + t(0); break;
      case Op::LAnd: rhs = t(0) + " && " + t(1); break;
      case Op::LOr: rhs = t(0) + " || " + t(1); break;
      case Op::Eq: rhs = c(0) + " == " + c(1); break;
      case Op::Ne: rhs = c(0) + " != " + c(1); break;
      case Op::Lt: rhs = c(0) + " < " + c(1); break;
      case Op::Le: rhs = c(0) + " <= " + c(1); break;
      case Op::Gt: rhs = c(0) + " > " + c(1); break;
      case Op::Ge: rhs = c(0) + " >= " + c(1); break;
      case Op::Mux: rhs = t(0) + " ? " + a(1) + " : " + a(2); break;
      case Op::Sqrt: {
        // the function returns 32 bits; the root wire narrows it
        std::string root = me + "_root";
        for (int k = 2; used.count(root); ++k) root = me + "_root" + std::to_string(k);
        used.insert(root);
        os << "   wire [31:0] " << root << ";\n";
        assigns << "   assign " << root << " = tl_sqrt(" << fit(x.args[0], 64) << ");\n";
        rhs = w == 32 ? root
              : w < 32 ? root + "[" + std::to_string(w - 1) + ":0]"
                       : "{" + literal(0, w - 32) + ", " + root + "}";
        break;
      }
      case Op::Slice: {
        const Node& src = n.nodes[static_cast<size_t>(x.args[0])];
        if (src.op == Op::Const) {
          rhs = literal((src.value >> x.lo) & net::mask(w), w);
        } else if (x.lo + w > src.width) {
          // reaches past the operand's top bit: the missing bits read as 0
          int have = std::max(0, src.width - x.lo);
          if (have == 0) {
            rhs = literal(0, w);
          } else {
            std::string part = t(0) + "[" + std::to_string(src.width - 1) + ":" + std::to_string(x.lo) + "]";
            rhs = "{" + literal(0, w - have) + ", " + part + "}";
          }
        } else if (w == 1) {
          rhs = t(0) + "[" + std::to_string(x.lo) + "]";
        } else {
          rhs = t(0) + "[" + std::to_string(x.lo + w - 1) + ":" + std::to_string(x.lo) + "]";
        }
        break;
      }
      default: break;
    }
    os << "   wire " << range(w) << me << ";\n";
    assigns << "   assign " << me << " = " << rhs << ";\n";
  }
  if (any_wire) os << '\n' << assigns.str();

  // one always block per register group, in order of first appearance
  std::vector<std::string> groups;
  std::map<std::string, std::vector<int>> members;
  for (int r : n.regs) {
    const std::string& g = n.nodes[static_cast<size_t>(r)].group;
    if (!members.count(g)) groups.push_back(g);
    members[g].push_back(r);
  }
  for (const auto& g : groups) {
    os << '\n';
    if (!g.empty()) os << "   // " << g << '\n';
    os << "   always @(posedge clk) begin\n";
    os << "      if (reset) begin\n";
    for (int r : members[g])
      os << "         " << id[static_cast<size_t>(r)] << " <= "
         << literal(0, n.nodes[static_cast<size_t>(r)].width) << ";\n";
    os << "      end else begin\n";
    for (int r : members[g])
      os << "         " << id[static_cast<size_t>(r)] << " <= "
         << fit(n.nodes[static_cast<size_t>(r)].args[0], n.nodes[static_cast<size_t>(r)].width) << ";\n";
    os << "      end\n";
    os << "   end\n";
  }

  if (!n.outputs.empty()) os << '\n';
  for (int o : n.outputs) {
    const Node& x = n.nodes[static_cast<size_t>(o)];
    os << "   assign " << id[static_cast<size_t>(o)] << " = " << fit(x.args[0], x.width) << ";\n";
  }
  os << "endmodule\n";
  os << "`default_nettype wire\n";
  out.text = os.str();
  return out;
}

}  // namespace tlflow::verilog
