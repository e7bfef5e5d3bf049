#include "tlflow/netlist.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <sstream>

namespace tlflow::net {

std::string_view to_string(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Output: return "output";
    case Op::Const: return "const";
    case Op::Reg: return "reg";
    case Op::Wire: return "wire";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::And: return "and";
    case Op::Or: return "or";
    case Op::Xor: return "xor";
    case Op::Not: return "not";
    case Op::Neg: return "neg";
    case Op::LNot: return "lnot";
    case Op::LAnd: return "land";
    case Op::LOr: return "lor";
    case Op::Eq: return "eq";
    case Op::Ne: return "ne";
    case Op::Lt: return "lt";
    case Op::Le: return "le";
    case Op::Gt: return "gt";
    case Op::Ge: return "ge";
    case Op::Mux: return "mux";
    case Op::Slice: return "slice";
    case Op::Sqrt: return "sqrt";
  }
  return "?";
}

bool is_source(Op op) { return op == Op::Input || op == Op::Const || op == Op::Reg; }

std::uint64_t mask(int width) {
  return width >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << width) - 1;
}

int Netlist::add(Node n) {
  int id = static_cast<int>(nodes.size());
  if (n.op == Op::Input) inputs.push_back(id);
  if (n.op == Op::Output) outputs.push_back(id);
  if (n.op == Op::Reg) regs.push_back(id);
  nodes.push_back(std::move(n));
  return id;
}

int Netlist::input(const std::string& name, int width) {
  Node n;
  n.op = Op::Input;
  n.width = width;
  n.name = name;
  return add(std::move(n));
}

int Netlist::output(const std::string& name, int x) {
  Node n;
  n.op = Op::Output;
  n.width = nodes[static_cast<size_t>(x)].width;
  n.args = {x};
  n.name = name;
  return add(std::move(n));
}

int Netlist::constant(std::uint64_t v, int width) {
  Node n;
  n.op = Op::Const;
  n.width = width;
  n.value = v & mask(width);
  return add(std::move(n));
}

int Netlist::find_input(const std::string& name) const {
  for (int id : inputs)
    if (nodes[static_cast<size_t>(id)].name == name) return id;
  return -1;
}

int Netlist::find_output(const std::string& name) const {
  for (int id : outputs)
    if (nodes[static_cast<size_t>(id)].name == name) return id;
  return -1;
}

size_t Netlist::count(Op op) const {
  return static_cast<size_t>(
      std::count_if(nodes.begin(), nodes.end(), [op](const Node& x) { return x.op == op; }));
}

namespace {

std::string describe(const Netlist& n, int id) {
  const Node& x = n.nodes[static_cast<size_t>(id)];
  std::ostringstream os;
  os << '#' << id << ' ' << to_string(x.op);
  if (!x.name.empty()) os << ' ' << x.name;
  if (!x.src.empty()) os << " (" << x.src << ')';
  return os.str();
}

// Shortest cycle through the combinational subgraph, or empty.
std::vector<int> shortest_cycle(const Netlist& n) {
  const size_t N = n.nodes.size();
  // Tarjan SCC (iterative) to restrict the search.
  std::vector<int> index(N, -1), low(N, 0), comp(N, -1);
  std::vector<bool> on(N, false);
  std::vector<int> stack;
  int counter = 0, ncomp = 0;
  std::vector<int> comp_size;
  auto comb = [&](int v) { return !is_source(n.nodes[static_cast<size_t>(v)].op); };
  for (size_t s = 0; s < N; ++s) {
    if (index[s] >= 0 || !comb(static_cast<int>(s))) continue;
    std::vector<std::pair<int, size_t>> work{{static_cast<int>(s), 0}};
    while (!work.empty()) {
      auto& [v, ei] = work.back();
      size_t vi = static_cast<size_t>(v);
      if (ei == 0 && index[vi] < 0) {
        index[vi] = low[vi] = counter++;
        stack.push_back(v);
        on[vi] = true;
      }
      const auto& args = n.nodes[vi].args;
      if (ei < args.size()) {
        int w = args[ei++];
        size_t wi = static_cast<size_t>(w);
        if (!comb(w)) continue;
        if (index[wi] < 0) {
          work.push_back({w, 0});
        } else if (on[wi]) {
          low[vi] = std::min(low[vi], index[wi]);
        }
        continue;
      }
      if (low[vi] == index[vi]) {
        int size = 0;
        while (true) {
          int w = stack.back();
          stack.pop_back();
          on[static_cast<size_t>(w)] = false;
          comp[static_cast<size_t>(w)] = ncomp;
          ++size;
          if (w == v) break;
        }
        comp_size.push_back(size);
        ++ncomp;
      }
      int done = v;
      work.pop_back();
      if (!work.empty()) {
        size_t pi = static_cast<size_t>(work.back().first);
        low[pi] = std::min(low[pi], low[static_cast<size_t>(done)]);
      }
    }
  }
  std::vector<int> best;
  for (size_t v = 0; v < N; ++v) {
    if (comp[v] < 0) continue;
    bool self = std::find(n.nodes[v].args.begin(), n.nodes[v].args.end(), static_cast<int>(v)) !=
                n.nodes[v].args.end();
    if (self) return {static_cast<int>(v)};
    if (comp_size[static_cast<size_t>(comp[v])] < 2) continue;
    // BFS from v inside its component back to v.
    std::map<int, int> parent;
    std::queue<int> q;
    q.push(static_cast<int>(v));
    parent[static_cast<int>(v)] = -1;
    bool found = false;
    int last = -1;
    while (!q.empty() && !found) {
      int x = q.front();
      q.pop();
      for (int y : n.nodes[static_cast<size_t>(x)].args) {
        if (comp[static_cast<size_t>(y)] != comp[v]) continue;
        if (y == static_cast<int>(v)) {
          found = true;
          last = x;
          break;
        }
        if (parent.count(y)) continue;
        parent[y] = x;
        q.push(y);
      }
    }
    if (!found) continue;
    std::vector<int> cyc;
    for (int x = last; x != -1; x = parent[x]) cyc.push_back(x);
    std::reverse(cyc.begin(), cyc.end());
    if (best.empty() || cyc.size() < best.size()) best = cyc;
  }
  return best;
}

}  // namespace

std::vector<Diagnostic> check_acyclic(const Netlist& n) {
  auto cyc = shortest_cycle(n);
  if (cyc.empty()) return {};
  std::ostringstream os;
  os << "combinational cycle of " << cyc.size() << " node" << (cyc.size() == 1 ? "" : "s") << ": ";
  for (size_t i = 0; i < cyc.size(); ++i) os << (i ? " -> " : "") << describe(n, cyc[i]);
  os << " -> back to #" << cyc.front();
  return {Diagnostic{{}, os.str()}};
}

std::vector<int> topo_order(const Netlist& n) {
  const size_t N = n.nodes.size();
  std::vector<int> pending(N, 0);
  std::vector<std::vector<int>> users(N);
  for (size_t v = 0; v < N; ++v) {
    if (is_source(n.nodes[v].op)) continue;
    for (int a : n.nodes[v].args) {
      if (is_source(n.nodes[static_cast<size_t>(a)].op)) continue;
      ++pending[v];
      users[static_cast<size_t>(a)].push_back(static_cast<int>(v));
    }
  }
  // Smallest id first keeps the order stable and close to creation order.
  std::priority_queue<int, std::vector<int>, std::greater<int>> ready;
  for (size_t v = 0; v < N; ++v)
    if (!is_source(n.nodes[v].op) && pending[v] == 0) ready.push(static_cast<int>(v));
  std::vector<int> order;
  while (!ready.empty()) {
    int v = ready.top();
    ready.pop();
    order.push_back(v);
    for (int u : users[static_cast<size_t>(v)])
      if (--pending[static_cast<size_t>(u)] == 0) ready.push(u);
  }
  size_t comb = 0;
  for (const auto& x : n.nodes) comb += is_source(x.op) ? 0 : 1;
  if (order.size() != comb) throw CompileError(check_acyclic(n));
  return order;
}

std::string dump(const Netlist& n) {
  std::ostringstream os;
  for (size_t i = 0; i < n.nodes.size(); ++i) {
    const Node& x = n.nodes[i];
    os << i << ' ' << to_string(x.op) << ' ' << x.width;
    for (int a : x.args) os << ' ' << a;
    if (x.op == Op::Const) os << " =" << x.value;
    if (x.op == Op::Slice) os << " [" << (x.lo + x.width - 1) << ':' << x.lo << ']';
    if (!x.name.empty()) os << ' ' << x.name;
    if (!x.src.empty()) os << " ; " << x.src;
    os << '\n';
  }
  for (size_t k = 0; k < n.stops.size(); ++k) {
    const StopPorts& s = n.stops[k];
    os << "stop " << k << " stim valid=" << s.stim_valid << " ready=" << s.stim_ready;
    for (const auto& [f, id] : s.stim_fields) os << ' ' << f << '=' << id;
    os << " chk valid=" << s.chk_valid << " ready=" << s.chk_ready;
    for (const auto& [f, id] : s.chk_fields) os << ' ' << f << '=' << id;
    os << '\n';
  }
  for (const auto& p : n.probes)
    os << "probe " << p.kind << ' ' << p.comp << " stop " << p.stop << " node " << p.node << '\n';
  for (const auto& t : n.occupancy) os << "occupancy " << t.node << ' ' << t.what << '\n';
  return os.str();
}

Netlist compact(const Netlist& in) {
  const size_t N = in.nodes.size();
  // Forward equal-width wires.
  std::vector<int> fwd(N);
  auto forwardable = [&](int x) {
    const Node& nx = in.nodes[static_cast<size_t>(x)];
    return nx.op == Op::Wire && !nx.args.empty() && nx.args[0] >= 0 &&
           in.nodes[static_cast<size_t>(nx.args[0])].width == nx.width;
  };
  for (size_t v = 0; v < N; ++v) {
    int x = static_cast<int>(v);
    size_t steps = 0;
    while (forwardable(x) && steps++ <= N) x = in.nodes[static_cast<size_t>(x)].args[0];
    // A pure wire loop stays as is so check_acyclic can report it.
    fwd[v] = forwardable(x) ? static_cast<int>(v) : x;
  }
  auto F = [&](int x) { return x < 0 ? x : fwd[static_cast<size_t>(x)]; };

  std::vector<bool> live(N, false);
  std::vector<int> work;
  auto root = [&](int x) {
    x = F(x);
    if (x >= 0 && !live[static_cast<size_t>(x)]) {
      live[static_cast<size_t>(x)] = true;
      work.push_back(x);
    }
  };
  for (int id : in.inputs) root(id);
  for (int id : in.outputs) root(id);
  for (const auto& p : in.probes) root(p.node);
  for (const auto& t : in.occupancy) root(t.node);
  while (!work.empty()) {
    int x = work.back();
    work.pop_back();
    for (int a : in.nodes[static_cast<size_t>(x)].args) root(a);
  }

  Netlist out;
  std::vector<int> remap(N, -1);
  int next = 0;
  for (size_t v = 0; v < N; ++v)
    if (live[v]) remap[v] = next++;
  auto R = [&](int x) { return x < 0 ? x : remap[static_cast<size_t>(F(x))]; };
  for (size_t v = 0; v < N; ++v) {
    if (!live[v]) continue;
    Node x = in.nodes[v];
    for (int& a : x.args) a = R(a);
    out.add(std::move(x));
  }
  out.stops = in.stops;
  for (auto& s : out.stops) {
    for (int* p : {&s.stim_valid, &s.stim_ready, &s.chk_valid, &s.chk_ready}) *p = R(*p);
    for (auto& [f, id] : s.stim_fields) id = R(id);
    for (auto& [f, id] : s.chk_fields) id = R(id);
  }
  out.gen_widths = in.gen_widths;
  for (auto p : in.probes) {
    p.node = R(p.node);
    out.probes.push_back(p);
  }
  for (auto t : in.occupancy) {
    t.node = R(t.node);
    out.occupancy.push_back(t);
  }
  return out;
}

void corrupt_register(Netlist& n, int reg) {
  Node& r = n.nodes[static_cast<size_t>(reg)];
  int d = r.args.at(0);
  int w = r.width;
  int one = n.constant(1, w);
  Node x;
  x.op = Op::Xor;
  x.width = w;
  x.args = {d, one};
  x.src = "corrupted";
  int id = n.add(std::move(x));
  n.nodes[static_cast<size_t>(reg)].args[0] = id;
}

}  // namespace tlflow::net
