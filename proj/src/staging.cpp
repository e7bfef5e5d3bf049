#include "tlflow/staging.hpp"

#include <functional>
#include <set>
#include <sstream>

namespace tlflow::staging {

using flow::Attach;
using flow::Comp;
using flow::FieldSource;
using flow::FlowGraph;
using flow::NodeKey;
using flow::Slot;
using frontend::Expr;
using net::Netlist;
using net::Node;
using net::Op;
using scope::ComponentKind;
using scope::PipelineClass;

namespace {

const std::string kMarker = "#marker";

std::string join_sub(const std::vector<std::string>& sub) {
  std::string s;
  for (size_t i = 0; i < sub.size(); ++i) s += (i ? "/" : "") + sub[i];
  return s;
}

std::string child_sub(const std::string& base, const std::vector<std::string>& scopes) {
  std::string s = base;
  for (const auto& x : scopes) s += (s.empty() ? "" : "/") + x;
  return s;
}

bool is_cmp(const std::string& op) {
  return op == "==" || op == "!=" || op == "<" || op == "<=" || op == ">" || op == ">=";
}

class Builder {
 public:
  Builder(const FlowGraph& fg, const BuildOptions& opts) : fg_(fg), opts_(opts) {}

  Netlist run() {
    if (!fg_.resolved) fail({}, "internal: build_netlist needs a resolved flow graph");
    find_marker_paths();
    declare_ports();
    drive_outputs();
    while (!deferred_.empty()) {
      auto task = std::move(deferred_.back());
      deferred_.pop_back();
      task();
    }
    return net::compact(n_);
  }

 private:
  // ---------------------------------------------------------------- helpers

  const Slot& slot(int s) const { return fg_.slots[static_cast<size_t>(s)]; }
  const Comp& comp(int c) const { return fg_.comps[static_cast<size_t>(c)]; }
  int width(int x) const { return n_.nodes[static_cast<size_t>(x)].width; }

  // Follows settled equal-width wires so constant folding sees through them.
  int look(int x) const {
    for (int guard = 0; guard < 64; ++guard) {
      const Node& nx = n_.nodes[static_cast<size_t>(x)];
      if (nx.op != Op::Wire || nx.args.empty() || nx.args[0] < 0) break;
      if (width(nx.args[0]) != nx.width) break;
      x = nx.args[0];
    }
    return x;
  }
  bool is_const(int x, std::uint64_t v) const {
    const Node& nx = n_.nodes[static_cast<size_t>(look(x))];
    return nx.op == Op::Const && nx.value == v;
  }

  int node(Op op, int w, std::vector<int> args, std::string src = {}) {
    Node x;
    x.op = op;
    x.width = w;
    x.args = std::move(args);
    x.src = std::move(src);
    return n_.add(std::move(x));
  }
  int konst(std::uint64_t v, int w) {
    auto key = std::make_pair(v & net::mask(w), w);
    auto it = consts_.find(key);
    if (it != consts_.end()) return it->second;
    int id = n_.constant(v, w);
    consts_[key] = id;
    return id;
  }
  int one() { return konst(1, 1); }
  int zero() { return konst(0, 1); }

  int lnot(int a) {
    if (is_const(a, 0)) return one();
    if (is_const(a, 1) && width(look(a)) == 1) return zero();
    return node(Op::LNot, 1, {a});
  }
  int land(int a, int b) {
    if (is_const(a, 0) || is_const(b, 0)) return zero();
    if (is_const(a, 1) && width(look(a)) == 1) return b;
    if (is_const(b, 1) && width(look(b)) == 1) return a;
    return node(Op::LAnd, 1, {a, b});
  }
  int lor(int a, int b) {
    if (is_const(a, 1) || is_const(b, 1)) return one();
    if (is_const(a, 0)) return b;
    if (is_const(b, 0)) return a;
    return node(Op::LOr, 1, {a, b});
  }
  int mux(int s, int a, int b, int w) {
    if (is_const(s, 1)) return a;
    if (is_const(s, 0)) return b;
    if (look(a) == look(b)) return a;
    return node(Op::Mux, w, {s, a, b});
  }
  int eq(int a, int b) {
    if (n_.nodes[static_cast<size_t>(look(a))].op == Op::Const &&
        n_.nodes[static_cast<size_t>(look(b))].op == Op::Const)
      return n_.nodes[static_cast<size_t>(look(a))].value == n_.nodes[static_cast<size_t>(look(b))].value
                 ? one()
                 : zero();
    return node(Op::Eq, 1, {a, b});
  }
  int fit(int x, int w) {
    if (width(x) == w) return x;
    if (width(x) > w) {
      Node s;
      s.op = Op::Slice;
      s.width = w;
      s.args = {x};
      s.lo = 0;
      return n_.add(std::move(s));
    }
    return node(Op::Wire, w, {x});
  }

  // Lazily computed combinational signal. The placeholder wire lets a
  // genuine cycle close instead of recursing forever; check_acyclic reports it.
  int lazy(const std::string& key, int w, const std::function<int()>& fn) {
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    int ph = node(Op::Wire, w, {-1});
    memo_[key] = ph;
    int v = fn();
    n_.nodes[static_cast<size_t>(ph)].args[0] = v;
    if (width(v) != w) n_.nodes[static_cast<size_t>(ph)].args[0] = fit(v, w);
    memo_[key] = look(ph);
    return memo_[key];
  }

  // Register whose next state (data, enable) is computed after construction.
  int state(const std::string& key, int w, std::string name, std::string src, std::string group,
            std::function<std::pair<int, int>()> next) {
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    Node r;
    r.op = Op::Reg;
    r.width = w;
    r.args = {-1};
    r.name = std::move(name);
    r.src = std::move(src);
    r.group = std::move(group);
    int id = n_.add(std::move(r));
    memo_[key] = id;
    deferred_.push_back([this, id, w, next = std::move(next)] {
      auto [d, en] = next();
      d = fit(d, w);
      int D = is_const(en, 1) ? d : mux(en, d, id, w);
      n_.nodes[static_cast<size_t>(id)].args[0] = D;
    });
    return id;
  }

  std::string slot_key(int s) const { return "s" + std::to_string(s); }
  std::string comp_key(int c) const { return "c" + std::to_string(c); }
  std::string node_label(const NodeKey& k) const { return fg_.node_name(k); }

  // ------------------------------------------------------------ lane logic

  const flow::Lane& lane_of(int s) const { return fg_.lanes[static_cast<size_t>(slot(s).lane)]; }

  // Enable of the lane register that feeds slot `s`.
  int advance_into(int s) {
    return lazy(slot_key(s) + ".adv", 1, [&, s] {
      switch (lane_of(s).cls) {
        case PipelineClass::Free: return one();
        case PipelineClass::Stall: return lnot(stall(slot(s).lane));
        case PipelineClass::ReadyValid: return lor(lnot(valid(s)), ready(s));
      }
      return one();
    });
  }

  int stall(int lane) {
    return lazy("L" + std::to_string(lane) + ".stall", 1, [&, lane] {
      const flow::Lane& l = fg_.lanes[static_cast<size_t>(lane)];
      int st = l.stall_input.empty() ? zero() : stall_inputs_.at(l.stall_input);
      for (int s : l.slots) {
        if (slot(s).consumer.kind == Attach::Kind::Reg) continue;
        st = lor(st, land(valid(s), lnot(ready(s))));
      }
      return st;
    });
  }

  int valid(int s) {
    return lazy(slot_key(s) + ".valid", 1, [&, s] {
      const Slot& sl = slot(s);
      switch (sl.driver.kind) {
        case Attach::Kind::None: return one();
        case Attach::Kind::Reg: {
          int prev = sl.driver.slot;
          int r = state(slot_key(s) + ".V", 1, sl.name + "_valid", "valid " + sl.name, sl.name,
                        [this, s, prev] { return std::make_pair(valid(prev), advance_into(s)); });
          n_.occupancy.push_back({r, sl.name});
          return r;
        }
        case Attach::Kind::Comp: return comp_valid(sl.driver, s);
      }
      return one();
    });
  }

  int ready(int s) {
    return lazy(slot_key(s) + ".ready", 1, [&, s] {
      const Slot& sl = slot(s);
      switch (sl.consumer.kind) {
        case Attach::Kind::None: return one();
        case Attach::Kind::Reg: return advance_into(sl.consumer.slot);
        case Attach::Kind::Comp: return comp_ready(sl.consumer, s);
      }
      return one();
    });
  }

  // ----------------------------------------------------------- field values

  int value(const NodeKey& k, const std::string& f) {
    const FieldSource* src = fg_.source(k, f);
    if (!src) fail({}, "internal: no route for $" + f + " at " + node_label(k));
    std::string key = slot_key(k.slot) + "/" + k.sub + "$" + f;
    const int w = src->width;
    const std::string name = slot(k.slot).name + (k.sub.empty() ? "" : "/" + k.sub) + "$" + f;
    const std::string where = "$" + f + " " + node_label(k);
    switch (src->kind) {
      case FieldSource::Kind::Reg: {
        NodeKey fk = src->from.at(0);
        return state(key, w, name, where, slot(k.slot).name,
                     [this, k, fk, f] { return std::make_pair(value(fk, f), advance_into(k.slot)); });
      }
      case FieldSource::Kind::Generated:
        return stim_field(k.slot, f);
      case FieldSource::Kind::Comp:
        if (slot(k.slot).driver.internal) return ring_slot_value(k, f, w, name, where);
        break;
      default:
        break;
    }
    return lazy(key, w, [&, k, f, w, src, where] {
      int v = -1;
      switch (src->kind) {
        case FieldSource::Kind::Local: {
          const auto& st = *src->stmt.stmt;
          int ctx = std::max(w, self(k.slot, st, st.assign.rhs));
          v = lower(st.assign.rhs, ctx, k.slot, src->stmt);
          break;
        }
        case FieldSource::Kind::Flow:
          v = lower_any(src->stmt.stmt->assign.rhs, k, f, w, src->stmt);
          break;
        case FieldSource::Kind::Comp:
          v = comp_value(slot(k.slot).driver, k, f, w);
          break;
        default:
          fail({}, "internal: unexpected source kind");
      }
      v = fit(v, w);
      Node& nv = n_.nodes[static_cast<size_t>(v)];
      if (nv.src.empty() && nv.op != Op::Input && nv.op != Op::Const && nv.op != Op::Reg) nv.src = where;
      return v;
    });
  }

  int lower_any(const Expr& e, const NodeKey& k, const std::string& f, int w, const flow::StmtRef& sr) {
    if (e.is_any()) return value({k.slot, child_sub(k.sub, e.scopes)}, f);
    // ternary of $ANY arms
    int c = lower(e.args[0], self(k.slot, *sr.stmt, e.args[0]), k.slot, sr);
    return mux(c, lower_any(e.args[1], k, f, w, sr), lower_any(e.args[2], k, f, w, sr), w);
  }

  int self(int s, const scope::Statement& st, const Expr& e) const {
    return flow::self_width(fg_, s, st, e);
  }

  int lower(const Expr& e, int ctx, int s, const flow::StmtRef& sr) {
    const scope::Statement& st = *sr.stmt;
    auto W = [&] { return std::max(ctx, self(s, st, e)); };
    switch (e.kind) {
      case Expr::Kind::Signal:
      case Expr::Kind::Child: {
        NodeKey k{s, child_sub(join_sub(st.subscope), e.scopes)};
        if (fg_.source(k, e.name)) return value(k, e.name);
        if (e.name == "valid") return valid(s);
        if (e.name == "ready") return ready(s);
        fail(e.loc, "internal: $" + e.name + " has no route to " + node_label(k));
      }
      case Expr::Kind::IndexRef: {
        const auto& env = fg_.pipes[static_cast<size_t>(sr.pipe)].index_env;
        auto it = env.find(e.name);
        if (it == env.end()) fail(e.loc, "#" + e.name + " is not a replicated ancestor");
        return konst(static_cast<std::uint64_t>(it->second), flow::index_width(fg_.ports));
      }
      case Expr::Kind::External: {
        auto name = fg_.external_name(e.name, sr.pipe);
        return external_inputs_.at(name);
      }
      case Expr::Kind::Literal:
        return konst(e.value, e.width > 0 ? e.width : flow::literal_width(e.value));
      case Expr::Kind::Unary: {
        if (e.op == "!") return lnot(lower(e.args[0], self(s, st, e.args[0]), s, sr));
        int w = W();
        return node(e.op == "~" ? Op::Not : Op::Neg, w, {lower(e.args[0], w, s, sr)});
      }
      case Expr::Kind::Binary: {
        const std::string& op = e.op;
        if (is_cmp(op)) {
          int w = std::max(self(s, st, e.args[0]), self(s, st, e.args[1]));
          int a = lower(e.args[0], w, s, sr), b = lower(e.args[1], w, s, sr);
          Op o = op == "==" ? Op::Eq : op == "!=" ? Op::Ne : op == "<" ? Op::Lt : op == "<=" ? Op::Le
                 : op == ">" ? Op::Gt : Op::Ge;
          return node(o, 1, {a, b});
        }
        if (op == "&&" || op == "||") {
          int a = lower(e.args[0], self(s, st, e.args[0]), s, sr);
          int b = lower(e.args[1], self(s, st, e.args[1]), s, sr);
          return node(op == "&&" ? Op::LAnd : Op::LOr, 1, {a, b});
        }
        int w = W();
        if (op == "**") {
          if (e.args[1].kind != Expr::Kind::Literal)
            fail(e.loc, "exponent of ** must be a constant");
          std::uint64_t k = e.args[1].value;
          if (k > 16) fail(e.loc, "exponent of ** is limited to 16");
          if (k == 0) return konst(1, w);
          int x = lower(e.args[0], w, s, sr);
          int acc = x;
          for (std::uint64_t i = 1; i < k; ++i) acc = node(Op::Mul, w, {acc, x});
          return acc;
        }
        Op o = op == "+" ? Op::Add : op == "-" ? Op::Sub : op == "*" ? Op::Mul : op == "&" ? Op::And
               : op == "|" ? Op::Or : Op::Xor;
        int a = lower(e.args[0], w, s, sr), b = lower(e.args[1], w, s, sr);
        return node(o, w, {a, b});
      }
      case Expr::Kind::Ternary: {
        int c = lower(e.args[0], self(s, st, e.args[0]), s, sr);
        int w = W();
        return mux(c, lower(e.args[1], w, s, sr), lower(e.args[2], w, s, sr), w);
      }
      case Expr::Kind::Select: {
        int x = lower(e.args[0], self(s, st, e.args[0]), s, sr);
        int w = e.hi - e.lo + 1;
        if (e.lo == 0 && w == width(x)) return x;
        Node sl;
        sl.op = Op::Slice;
        sl.width = w;
        sl.lo = e.lo;
        sl.args = {x};
        return n_.add(std::move(sl));
      }
      case Expr::Kind::Sqrt: {
        int x = lower(e.args[0], self(s, st, e.args[0]), s, sr);
        return node(Op::Sqrt, (width(x) + 1) / 2, {x});
      }
    }
    fail(e.loc, "internal: unhandled expression");
  }

  // -------------------------------------------------------------- components

  int comp_valid(const Attach& a, int s) {
    const Comp& c = comp(a.comp);
    switch (c.kind) {
      case ComponentKind::BypassFifo:
        return lor(lnot(fifo_empty(a.comp)), valid(c.ins[0]));
      case ComponentKind::Arb2:
        return lor(valid(c.ins[0]), valid(c.ins[1]));
      case ComponentKind::OpportunisticFlow:
        return a.port == 0 ? land(valid(c.ins[0]), opp_takeable(a.comp))
                           : land(valid(c.ins[0]), lnot(opp_takeable(a.comp)));
      case ComponentKind::SimpleRing:
        if (a.internal) return ring_rv(a.comp, a.port);
        // the whole ring holds while any stop is blocked, so nobody leaves
        return land(ring_eject(a.comp, a.port), lnot(ring_stall(a.comp)));
      case ComponentKind::RouterTestbench:
        return stim_valid_.at(s);
      default:
        return one();
    }
  }

  int comp_ready(const Attach& a, int s) {
    const Comp& c = comp(a.comp);
    (void)s;
    switch (c.kind) {
      case ComponentKind::BypassFifo:
        return lor(lnot(fifo_full(a.comp)), ready(c.outs[0]));
      case ComponentKind::Arb2: {
        bool favoured = (a.port == 0) != opts_.swap_arb_priority;
        int rO = ready(c.outs[0]);
        return favoured ? rO : land(rO, lnot(valid(c.ins[a.port == 0 ? 1 : 0])));
      }
      case ComponentKind::OpportunisticFlow:
        return lor(opp_takeable(a.comp), ready(c.outs[1]));
      case ComponentKind::SimpleRing:
        return land(lnot(ring_stall(a.comp)), lnot(ring_pass(a.comp, a.port)));
      case ComponentKind::RouterTestbench:
        return chk_ready_.at(s);
      default:
        return one();
    }
  }

  // Field (or marker) value at a component output.
  int comp_value(const Attach& a, const NodeKey& k, const std::string& f, int w) {
    const Comp& c = comp(a.comp);
    auto in = [&](int i) { return NodeKey{c.ins[static_cast<size_t>(i)], k.sub}; };
    switch (c.kind) {
      case ComponentKind::BypassFifo:
        return fifo_out(a.comp, f, w, [this, i = in(0), f] { return value(i, f); });
      case ComponentKind::Arb2: {
        int first = opts_.swap_arb_priority ? 1 : 0;
        return mux(valid(c.ins[static_cast<size_t>(first)]), value(in(first), f), value(in(1 - first), f), w);
      }
      case ComponentKind::OpportunisticFlow:
        return value(in(0), f);
      case ComponentKind::SimpleRing:
        return value({c.internal[static_cast<size_t>(a.port)], k.sub}, f);
      default:
        fail({}, "internal: no field path through " + c.name);
    }
  }

  // -- bypass FIFO

  int fifo_count(int ci) {
    const Comp& c = comp(ci);
    int depth = c.decl->depth;
    int cw = flow::index_width(depth + 1);
    int r = state(comp_key(ci) + ".count", cw, c.name + "_count", c.name + " occupancy", c.name, [this, ci, cw] {
      int cnt = fifo_count(ci);
      int inc = node(Op::Add, cw, {cnt, fifo_push(ci)});
      return std::make_pair(node(Op::Sub, cw, {inc, fifo_pop(ci)}), one());
    });
    if (counted_.insert(comp_key(ci) + ".count").second) n_.occupancy.push_back({r, c.name});
    return r;
  }
  int fifo_empty(int ci) {
    return lazy(comp_key(ci) + ".empty", 1, [&, ci] {
      int cnt = fifo_count(ci);
      return eq(cnt, konst(0, width(cnt)));
    });
  }
  int fifo_full(int ci) {
    return lazy(comp_key(ci) + ".full", 1, [&, ci] {
      int cnt = fifo_count(ci);
      return eq(cnt, konst(static_cast<std::uint64_t>(comp(ci).decl->depth), width(cnt)));
    });
  }
  int fifo_pop(int ci) {
    return lazy(comp_key(ci) + ".pop", 1,
                [&, ci] { return land(lnot(fifo_empty(ci)), ready(comp(ci).outs[0])); });
  }
  int fifo_push(int ci) {
    return lazy(comp_key(ci) + ".push", 1, [&, ci] {
      const Comp& c = comp(ci);
      int bypass = land(land(fifo_empty(ci), valid(c.ins[0])), ready(c.outs[0]));
      return land(land(valid(c.ins[0]), ready(c.ins[0])), lnot(bypass));
    });
  }
  int ptr_next(int p, int depth) {
    int w = width(p);
    int wrap = eq(p, konst(static_cast<std::uint64_t>(depth - 1), w));
    return mux(wrap, konst(0, w), node(Op::Add, w, {p, konst(1, w)}), w);
  }
  int fifo_ptr(int ci, bool write) {
    const Comp& c = comp(ci);
    int depth = c.decl->depth;
    int pw = flow::index_width(depth);
    std::string nm = c.name + (write ? "_wr" : "_rd");
    return state(comp_key(ci) + (write ? ".wr" : ".rd"), pw, nm, c.name + (write ? " write pointer" : " read pointer"),
                 c.name, [this, ci, write, depth] {
                   int p = fifo_ptr(ci, write);
                   return std::make_pair(ptr_next(p, depth), write ? fifo_push(ci) : fifo_pop(ci));
                 });
  }
  int fifo_out(int ci, const std::string& f, int w, const std::function<int()>& in_value) {
    const Comp& c = comp(ci);
    int depth = c.decl->depth;
    std::vector<int> entries;
    for (int j = 0; j < depth; ++j) {
      std::string key = comp_key(ci) + ".e" + std::to_string(j) + f;
      entries.push_back(state(key, w, c.name + "_entry" + std::to_string(j) + "$" + f,
                              "$" + f + " " + c.name + " entry " + std::to_string(j), c.name,
                              [this, ci, j, in_value] {
                                int wr = fifo_ptr(ci, true);
                                int hit = eq(wr, konst(static_cast<std::uint64_t>(j), width(wr)));
                                return std::make_pair(in_value(), land(fifo_push(ci), hit));
                              }));
    }
    int head = entries[0];
    if (depth > 1) {
      int rd = fifo_ptr(ci, false);
      head = entries[static_cast<size_t>(depth - 1)];
      for (int j = depth - 2; j >= 0; --j)
        head = mux(eq(rd, konst(static_cast<std::uint64_t>(j), width(rd))), entries[static_cast<size_t>(j)], head, w);
    }
    return mux(fifo_empty(ci), in_value(), head, w);
  }

  // -- opportunistic flow

  int opp_eligible(int ci) {
    return lazy(comp_key(ci) + ".eligible", 1, [&, ci] {
      const Comp& c = comp(ci);
      int cond = value({c.ins[0], ""}, c.decl->condition);
      int t = width(cond) == 1 ? cond : node(Op::Ne, 1, {cond, konst(0, width(cond))});
      return c.decl->condition_negated ? lnot(t) : t;
    });
  }
  int opp_guard(int ci) {
    // Forced transactions still on their detour; bypass waits until they land.
    if (!marker_reaches_arb_.count(ci)) return -1;
    return state(comp_key(ci) + ".guard", 8, comp(ci).name + "_inflight",
                 comp(ci).name + " forced transactions in flight", comp(ci).name, [this, ci] {
                   int g = opp_guard(ci);
                   int up = node(Op::Add, 8, {g, opp_forced(ci)});
                   int dec = zero();
                   int id = marker_id_.at(ci);
                   for (size_t ai = 0; ai < fg_.comps.size(); ++ai) {
                     const Comp& a = fg_.comps[ai];
                     if (a.kind != ComponentKind::Arb2) continue;
                     for (int i = 0; i < 2; ++i) {
                       int s = a.ins[static_cast<size_t>(i)];
                       if (!marker_slots_.count(s)) continue;
                       int m = marker(s);
                       int hit = land(arb_take(static_cast<int>(ai), i),
                                      eq(m, konst(static_cast<std::uint64_t>(id), marker_w_)));
                       dec = lor(dec, hit);
                     }
                   }
                   return std::make_pair(node(Op::Sub, 8, {up, dec}), one());
                 });
  }
  int opp_takeable(int ci) {
    return lazy(comp_key(ci) + ".take", 1, [&, ci] {
      const Comp& c = comp(ci);
      int t = land(opp_eligible(ci), ready(c.outs[0]));
      int g = opp_guard(ci);
      if (g >= 0) t = land(t, eq(g, konst(0, 8)));
      return t;
    });
  }
  int opp_forced(int ci) {
    return lazy(comp_key(ci) + ".forced", 1, [&, ci] {
      const Comp& c = comp(ci);
      int v = land(valid(c.ins[0]), opp_eligible(ci));
      return land(land(v, lnot(opp_takeable(ci))), ready(c.outs[1]));
    });
  }

  // -- arb2

  int arb_take(int ci, int i) {
    return lazy(comp_key(ci) + ".t" + std::to_string(i), 1, [&, ci, i] {
      const Comp& c = comp(ci);
      return land(valid(c.ins[static_cast<size_t>(i)]), ready(c.ins[static_cast<size_t>(i)]));
    });
  }

  // -- ring

  int ring_rv(int ci, int k) {
    const Comp& c = comp(ci);
    int n = static_cast<int>(c.ins.size());
    int r = state(comp_key(ci) + ".rv" + std::to_string(k), 1, c.name + "_stop" + std::to_string(k) + "_valid",
                  "valid " + c.name + " stop " + std::to_string(k), c.name, [this, ci, k, n] {
                    int prev = (k + n - 1) % n;
                    int d = lor(ring_pass(ci, prev), valid(comp(ci).ins[static_cast<size_t>(prev)]));
                    return std::make_pair(d, lnot(ring_stall(ci)));
                  });
    if (counted_.insert(comp_key(ci) + ".rv" + std::to_string(k)).second)
      n_.occupancy.push_back({r, c.name + " stop " + std::to_string(k)});
    return r;
  }
  int ring_eject(int ci, int k) {
    return lazy(comp_key(ci) + ".eject" + std::to_string(k), 1, [&, ci, k] {
      const Comp& c = comp(ci);
      int dest = value({c.internal[static_cast<size_t>(k)], c.trans}, "dest");
      return land(ring_rv(ci, k), eq(dest, konst(static_cast<std::uint64_t>(k), width(dest))));
    });
  }
  int ring_pass(int ci, int k) {
    return lazy(comp_key(ci) + ".pass" + std::to_string(k), 1,
                [&, ci, k] { return land(ring_rv(ci, k), lnot(ring_eject(ci, k))); });
  }
  int ring_stall(int ci) {
    return lazy(comp_key(ci) + ".stall", 1, [&, ci] {
      const Comp& c = comp(ci);
      int st = zero();
      for (size_t k = 0; k < c.outs.size(); ++k)
        st = lor(st, land(ring_eject(ci, static_cast<int>(k)), lnot(ready(c.outs[k]))));
      return st;
    });
  }
  int ring_slot_value(const NodeKey& k, const std::string& f, int w, const std::string& name,
                      const std::string& where) {
    const Attach& a = slot(k.slot).driver;
    int ci = a.comp, stop = a.port;
    std::string key = slot_key(k.slot) + "/" + k.sub + "$" + f;
    return state(key, w, name, where, comp(ci).name, [this, ci, stop, k, f] {
      const Comp& c = comp(ci);
      int n = static_cast<int>(c.ins.size());
      int prev = (stop + n - 1) % n;
      int held = f == kMarker ? marker(c.internal[static_cast<size_t>(prev)])
                              : value({c.internal[static_cast<size_t>(prev)], k.sub}, f);
      int fresh = f == kMarker ? marker(c.ins[static_cast<size_t>(prev)])
                               : value({c.ins[static_cast<size_t>(prev)], k.sub}, f);
      int w2 = width(held);
      return std::make_pair(mux(ring_pass(ci, prev), held, fresh, w2), lnot(ring_stall(ci)));
    });
  }

  // -- order-guard markers

  void find_marker_paths() {
    int id = 0;
    for (size_t ci = 0; ci < fg_.comps.size(); ++ci) {
      const Comp& c = fg_.comps[ci];
      if (c.kind != ComponentKind::OpportunisticFlow) continue;
      marker_id_[static_cast<int>(ci)] = ++id;
      std::set<int> seen;
      std::vector<int> work{c.outs[1]};
      bool reaches = false;
      while (!work.empty()) {
        int s = work.back();
        work.pop_back();
        if (!seen.insert(s).second) continue;
        const Slot& sl = slot(s);
        if (sl.consumer.kind == Attach::Kind::Reg) {
          work.push_back(sl.consumer.slot);
          continue;
        }
        if (sl.consumer.kind != Attach::Kind::Comp) continue;
        const Comp& d = comp(sl.consumer.comp);
        switch (d.kind) {
          case ComponentKind::BypassFifo:
          case ComponentKind::OpportunisticFlow:
            for (int o : d.outs) work.push_back(o);
            break;
          case ComponentKind::SimpleRing: {
            // into the ring storage, then every stop and every output
            for (int r : d.internal) seen.insert(r);
            for (int o : d.outs) work.push_back(o);
            break;
          }
          case ComponentKind::Arb2:
            reaches = true;
            break;
          default:
            break;
        }
      }
      for (int s : seen) marker_slots_.insert(s);
      if (reaches) marker_reaches_arb_.insert(static_cast<int>(ci));
    }
    marker_w_ = flow::index_width(id + 1);
  }

  int marker(int s) {
    if (!marker_slots_.count(s)) return konst(0, marker_w_);
    const Slot& sl = slot(s);
    std::string key = slot_key(s) + kMarker;
    switch (sl.driver.kind) {
      case Attach::Kind::None:
        return konst(0, marker_w_);
      case Attach::Kind::Reg: {
        int prev = sl.driver.slot;
        return state(key, marker_w_, sl.name + "_marker", "order marker " + sl.name, sl.name,
                     [this, s, prev] { return std::make_pair(marker(prev), advance_into(s)); });
      }
      case Attach::Kind::Comp:
        break;
    }
    const Comp& c = comp(sl.driver.comp);
    int ci = sl.driver.comp;
    switch (c.kind) {
      case ComponentKind::BypassFifo:
        return lazy(key, marker_w_, [&, ci] {
          int in = comp(ci).ins[0];
          return fifo_out(ci, kMarker, marker_w_, [this, in] { return marker(in); });
        });
      case ComponentKind::OpportunisticFlow:
        if (sl.driver.port == 0) return marker(c.ins[0]);
        return lazy(key, marker_w_, [&, ci] {
          return mux(opp_forced(ci), konst(static_cast<std::uint64_t>(marker_id_.at(ci)), marker_w_),
                     marker(comp(ci).ins[0]), marker_w_);
        });
      case ComponentKind::SimpleRing:
        if (sl.driver.internal)
          return ring_slot_value({s, c.trans}, kMarker, marker_w_, c.name + "_stop" + std::to_string(sl.driver.port) + "_marker",
                                 "order marker " + sl.name);
        return marker(c.internal[static_cast<size_t>(sl.driver.port)]);
      default:
        return konst(0, marker_w_);
    }
  }

  // ------------------------------------------------------------- testbench

  int stim_field(int s, const std::string& f) {
    auto it = stim_fields_.find({s, f});
    if (it == stim_fields_.end()) fail({}, "internal: $" + f + " is not generated at " + slot(s).name);
    return it->second;
  }

  void declare_ports() {
    int tb = fg_.tb_comp();
    if (tb >= 0) {
      const Comp& c = comp(tb);
      auto gen = fg_.gen_fields.count(tb) ? fg_.gen_fields.at(tb) : std::vector<std::string>{};
      n_.stops.resize(c.outs.size());
      for (size_t k = 0; k < c.outs.size(); ++k) {
        auto& sp = n_.stops[k];
        std::string p = "stim" + std::to_string(k) + "_";
        int s = c.outs[k];
        sp.stim_valid = stim_valid_[s] = n_.input(p + "valid", 1);
        for (const auto& f : gen) {
          const FieldSource* src = fg_.source({s, c.trans}, f);
          if (!src) continue;
          int id = n_.input(p + f, src->width);
          stim_fields_[{s, f}] = id;
          sp.stim_fields[f] = id;
          if (f != "tag" && f != "dest") n_.gen_widths[f] = src->width;
        }
      }
      for (size_t k = 0; k < c.ins.size(); ++k) {
        int id = n_.input("chk" + std::to_string(k) + "_ready", 1);
        chk_ready_[c.ins[k]] = id;
        n_.stops[k].chk_ready = id;
      }
    }
    for (const auto& lane : fg_.lanes)
      if (!lane.stall_input.empty() && !stall_inputs_.count(lane.stall_input))
        stall_inputs_[lane.stall_input] = n_.input(lane.stall_input, 1);
    for (const auto& [name, w] : fg_.externals_in) external_inputs_[name] = n_.input(name, w);
  }

  void drive_outputs() {
    int tb = fg_.tb_comp();
    if (tb >= 0) {
      const Comp& c = comp(tb);
      for (size_t k = 0; k < c.outs.size(); ++k)
        n_.stops[k].stim_ready = n_.output("stim" + std::to_string(k) + "_ready", ready(c.outs[k]));
      auto sinks = fg_.sink_fields.count(tb) ? fg_.sink_fields.at(tb) : std::vector<std::string>{};
      for (size_t k = 0; k < c.ins.size(); ++k) {
        std::string p = "chk" + std::to_string(k) + "_";
        int s = c.ins[k];
        n_.stops[k].chk_valid = n_.output(p + "valid", valid(s));
        for (const auto& f : sinks) n_.stops[k].chk_fields[f] = n_.output(p + f, value({s, c.trans}, f));
      }
    }
    for (size_t si = 0; si < fg_.slots.size(); ++si) {
      for (const auto& sr : fg_.slots[si].stmts) {
        const auto& lhs = sr.stmt->assign.lhs;
        if (lhs.kind != frontend::LhsRef::Kind::External) continue;
        const auto& rhs = sr.stmt->assign.rhs;
        int s = static_cast<int>(si);
        int w = self(s, *sr.stmt, rhs);
        int v = lower(rhs, w, s, sr);
        std::string name = fg_.external_name(lhs.name, sr.pipe);
        if (n_.find_output(name) >= 0) fail(sr.stmt->loc, "output *" + lhs.name + " is assigned twice");
        n_.output(name, fit(v, w));
      }
    }
    for (size_t ci = 0; ci < fg_.comps.size(); ++ci) {
      const Comp& c = fg_.comps[ci];
      int i = static_cast<int>(ci);
      if (c.kind == ComponentKind::OpportunisticFlow) {
        n_.probes.push_back({"opp.take", c.name, c.stop, valid(c.outs[0])});
        n_.probes.push_back({"opp.forced", c.name, c.stop, opp_forced(i)});
        n_.probes.push_back({"opp.local", c.name, c.stop,
                             land(land(valid(c.ins[0]), opp_eligible(i)), ready(c.ins[0]))});
      } else if (c.kind == ComponentKind::Arb2) {
        n_.probes.push_back({"arb.v1", c.name, c.stop, valid(c.ins[0])});
        n_.probes.push_back({"arb.v2", c.name, c.stop, valid(c.ins[1])});
        n_.probes.push_back({"arb.t1", c.name, c.stop, arb_take(i, 0)});
        n_.probes.push_back({"arb.t2", c.name, c.stop, arb_take(i, 1)});
        n_.probes.push_back({"arb.ready", c.name, c.stop, ready(c.outs[0])});
      }
    }
  }

  const FlowGraph& fg_;
  BuildOptions opts_;
  Netlist n_;
  std::map<std::string, int> memo_;
  std::map<std::pair<std::uint64_t, int>, int> consts_;
  std::vector<std::function<void()>> deferred_;
  std::set<std::string> counted_;

  std::map<int, int> stim_valid_, chk_ready_;
  std::map<std::pair<int, std::string>, int> stim_fields_;
  std::map<std::string, int> stall_inputs_, external_inputs_;

  std::set<int> marker_slots_;
  std::set<int> marker_reaches_arb_;
  std::map<int, int> marker_id_;
  int marker_w_ = 1;
};

}  // namespace

net::Netlist build_netlist(const flow::FlowGraph& fg, const flow::StagePlan& plan, const BuildOptions& opts) {
  (void)plan;  // registers follow the resolved routes; the plan is their summary
  return Builder(fg, opts).run();
}

}  // namespace tlflow::staging
