#include "tlflow/simulator.hpp"

#include <cctype>
#include <ostream>

namespace tlflow::sim {

using net::Node;
using net::Op;

std::uint64_t isqrt(std::uint64_t x) {
  std::uint64_t num = x, res = 0, bit = std::uint64_t{1} << 62;
  for (int i = 0; i < 32; ++i) {
    if (num >= res + bit) {
      num -= res + bit;
      res = (res >> 1) + bit;
    } else {
      res >>= 1;
    }
    bit >>= 2;
  }
  return res;
}

namespace {

inline std::uint64_t apply(Op op, std::uint64_t m, int lo, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  switch (op) {
    case Op::Wire:
    case Op::Output: return a & m;
    case Op::Add: return (a + b) & m;
    case Op::Sub: return (a - b) & m;
    case Op::Mul: return (a * b) & m;
    case Op::And: return a & b & m;
    case Op::Or: return (a | b) & m;
    case Op::Xor: return (a ^ b) & m;
    case Op::Not: return ~a & m;
    case Op::Neg: return (~a + 1) & m;
    case Op::LNot: return a == 0;
    case Op::LAnd: return a != 0 && b != 0;
    case Op::LOr: return a != 0 || b != 0;
    case Op::Eq: return a == b;
    case Op::Ne: return a != b;
    case Op::Lt: return a < b;
    case Op::Le: return a <= b;
    case Op::Gt: return a > b;
    case Op::Ge: return a >= b;
    case Op::Mux: return (a != 0 ? b : c) & m;
    case Op::Slice: return (lo >= 64 ? 0 : a >> lo) & m;
    case Op::Sqrt: return isqrt(a) & m;
    case Op::Input:
    case Op::Const:
    case Op::Reg: break;
  }
  return 0;
}

}  // namespace

std::uint64_t eval_node(const Node& n, const std::uint64_t* args) {
  if (n.op == Op::Const) return n.value;
  std::uint64_t a = n.args.size() > 0 ? args[0] : 0;
  std::uint64_t b = n.args.size() > 1 ? args[1] : 0;
  std::uint64_t c = n.args.size() > 2 ? args[2] : 0;
  return apply(n.op, net::mask(n.width), n.lo, a, b, c);
}

SimState initial_state(const net::Netlist& n) {
  SimState s;
  s.values.assign(n.nodes.size(), 0);
  for (size_t i = 0; i < n.nodes.size(); ++i)
    if (n.nodes[i].op == Op::Const) s.values[i] = n.nodes[i].value;
  return s;
}

SimState step(SimState state, const net::Netlist& n) {
  auto order = net::topo_order(n);
  std::vector<std::uint64_t>& v = state.values;
  for (int id : order) {
    const Node& x = n.nodes[static_cast<size_t>(id)];
    std::uint64_t args[3] = {0, 0, 0};
    for (size_t i = 0; i < x.args.size() && i < 3; ++i) args[i] = v[static_cast<size_t>(x.args[i])];
    v[static_cast<size_t>(id)] = eval_node(x, args);
  }
  std::vector<std::uint64_t> next;
  for (int r : n.regs) next.push_back(v[static_cast<size_t>(n.nodes[static_cast<size_t>(r)].args[0])] &
                                      net::mask(n.nodes[static_cast<size_t>(r)].width));
  for (size_t i = 0; i < n.regs.size(); ++i) v[static_cast<size_t>(n.regs[i])] = next[i];
  ++state.cycle;
  return state;
}

Simulator::Simulator(const net::Netlist& n) : n_(n), order_(net::topo_order(n)) {
  v_.assign(n.nodes.size(), 0);
  flat_.resize(n.nodes.size());
  for (size_t i = 0; i < n.nodes.size(); ++i) {
    const Node& x = n.nodes[i];
    Flat& f = flat_[i];
    f.op = x.op;
    f.width = x.width;
    f.mask = net::mask(x.width);
    f.lo = x.lo;
    if (x.args.size() > 0) f.a = x.args[0];
    if (x.args.size() > 1) f.b = x.args[1];
    if (x.args.size() > 2) f.c = x.args[2];
    if (x.op == Op::Const) v_[i] = x.value;
  }
  next_.resize(n.regs.size());
}

void Simulator::set(int input, std::uint64_t v) {
  v_[static_cast<size_t>(input)] = v & flat_[static_cast<size_t>(input)].mask;
}

void Simulator::eval() {
  std::uint64_t* v = v_.data();
  for (int id : order_) {
    const Flat& f = flat_[static_cast<size_t>(id)];
    std::uint64_t a = f.a >= 0 ? v[f.a] : 0;
    std::uint64_t b = f.b >= 0 ? v[f.b] : 0;
    std::uint64_t c = f.c >= 0 ? v[f.c] : 0;
    v[id] = apply(f.op, f.mask, f.lo, a, b, c);
  }
}

void Simulator::commit() {
  for (size_t i = 0; i < n_.regs.size(); ++i) {
    const Flat& f = flat_[static_cast<size_t>(n_.regs[i])];
    next_[i] = v_[static_cast<size_t>(f.a)] & f.mask;
  }
  for (size_t i = 0; i < n_.regs.size(); ++i) v_[static_cast<size_t>(n_.regs[i])] = next_[i];
  ++cycle_;
}

// ------------------------------------------------------------------------ VCD

namespace {

std::string vcd_code(size_t i) {
  std::string s;
  do {
    s += static_cast<char>('!' + i % 94);
    i /= 94;
  } while (i);
  return s;
}

std::string vcd_name(const std::string& raw, int id) {
  std::string s;
  for (char ch : raw) s += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_') ? ch : '_';
  if (s.empty()) s = "n" + std::to_string(id);
  return s;
}

}  // namespace

VcdWriter::VcdWriter(std::ostream& os, const net::Netlist& n, const std::string& module) : os_(os) {
  for (size_t i = 0; i < n.nodes.size(); ++i) {
    Op op = n.nodes[i].op;
    if (op == Op::Input || op == Op::Output || op == Op::Reg) ids_.push_back(static_cast<int>(i));
  }
  os_ << "$timescale 1ns $end\n$scope module " << module << " $end\n";
  for (size_t k = 0; k < ids_.size(); ++k) {
    const Node& x = n.nodes[static_cast<size_t>(ids_[k])];
    codes_.push_back(vcd_code(k));
    os_ << "$var wire " << x.width << ' ' << codes_.back() << ' ' << vcd_name(x.name, ids_[k]);
    if (x.width > 1) os_ << " [" << x.width - 1 << ":0]";
    os_ << " $end\n";
  }
  os_ << "$upscope $end\n$enddefinitions $end\n";
  last_.assign(ids_.size(), 0);
}

void VcdWriter::sample(const Simulator& s) {
  const auto& nodes = s.netlist().nodes;
  os_ << '#' << s.cycle() << '\n';
  for (size_t k = 0; k < ids_.size(); ++k) {
    std::uint64_t v = s.get(ids_[k]);
    if (!first_ && v == last_[k]) continue;
    last_[k] = v;
    int w = nodes[static_cast<size_t>(ids_[k])].width;
    if (w == 1) {
      os_ << (v & 1) << codes_[k] << '\n';
    } else {
      os_ << 'b';
      bool lead = true;
      for (int b = w - 1; b >= 0; --b) {
        int bit = static_cast<int>((v >> b) & 1);
        if (lead && bit == 0 && b > 0) continue;
        lead = false;
        os_ << bit;
      }
      os_ << ' ' << codes_[k] << '\n';
    }
  }
  first_ = false;
}

}  // namespace tlflow::sim
