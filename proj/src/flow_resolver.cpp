#include "tlflow/flow_resolver.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>

namespace tlflow::flow {

using frontend::Expr;
using scope::ComponentInstance;
using scope::PathElement;
using scope::ScopePath;
using scope::Statement;

int literal_width(std::uint64_t v) {
  int w = 1;
  while (w < 64 && (v >> w) != 0) ++w;
  return w;
}

int index_width(int n) {
  int w = 1;
  while ((1 << w) < n) ++w;
  return w;
}

namespace {

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

void walk_expr(const Expr& e, const std::function<void(const Expr&)>& fn) {
  fn(e);
  for (const auto& a : e.args) walk_expr(a, fn);
}

std::string pipe_key(const ScopePath& path, const std::vector<int>& replica) {
  std::string k = scope::to_string(path);
  for (int r : replica) k += "#" + std::to_string(r);
  return k;
}

std::string instance_name(const ScopePath& path, const std::vector<int>& replica) {
  std::string s;
  size_t r = 0;
  for (const auto& e : path) {
    s += e.kind == PathElement::Kind::Pipeline ? '|' : '/';
    s += e.name;
    if (e.replicated) s += "[" + std::to_string(replica[r++]) + "]";
  }
  return s;
}

// ---------------------------------------------------------------------------

class GraphBuilder {
 public:
  explicit GraphBuilder(const scope::ScopeGraph& g) : g_(g) { fg_.ports = g.ports; }

  FlowGraph run() {
    ScopePath path;
    std::vector<int> rep;
    std::map<std::string, int> env;
    flatten(g_.root, path, rep, env);

    uf_parent_.resize(fg_.pipes.size());
    std::iota(uf_parent_.begin(), uf_parent_.end(), 0);
    uf_off_.assign(fg_.pipes.size(), 0);

    for (const auto& decl : g_.components) expand_component(decl);
    build_lanes();
    attach_components();
    scan_statements();
    return std::move(fg_);
  }

 private:
  void flatten(const scope::Node& n, ScopePath& path, std::vector<int>& rep,
               std::map<std::string, int>& env) {
    if (n.is_pipeline()) {
      if (n.stages.empty()) return;
      Pipe p;
      p.path = path;
      p.node = &n;
      p.replica = rep;
      p.index_env = env;
      p.name = instance_name(path, rep);
      p.lo = n.stages.begin()->first;
      p.hi = n.stages.rbegin()->first;
      pipe_ids_[pipe_key(path, rep)] = static_cast<int>(fg_.pipes.size());
      fg_.pipes.push_back(std::move(p));
      return;
    }
    for (const auto& c : n.children) {
      path.push_back(c.element);
      if (c.element.replicated) {
        for (int k = 0; k < c.count; ++k) {
          rep.push_back(k);
          int saved = env.count(c.element.name) ? env[c.element.name] : -1;
          env[c.element.name] = k;
          flatten(c, path, rep, env);
          if (saved >= 0) env[c.element.name] = saved;
          else env.erase(c.element.name);
          rep.pop_back();
        }
      } else {
        flatten(c, path, rep, env);
      }
      path.pop_back();
    }
  }

  int pipe_id(const ScopePath& path, const std::vector<int>& rep, const SourceLoc& loc) {
    auto it = pipe_ids_.find(pipe_key(path, rep));
    if (it == pipe_ids_.end()) fail(loc, "internal: no pipeline instance " + instance_name(path, rep));
    return it->second;
  }

  // Every replica combination of the replicated elements of `path`.
  std::vector<std::vector<int>> envs(const ScopePath& path) {
    std::vector<std::vector<int>> out{{}};
    const scope::Node* n = &g_.root;
    for (const auto& e : path) {
      n = n->find_child(e.kind, e.name);
      if (!n) break;
      if (!e.replicated) continue;
      std::vector<std::vector<int>> next;
      for (const auto& v : out)
        for (int k = 0; k < n->count; ++k) {
          auto w = v;
          w.push_back(k);
          next.push_back(std::move(w));
        }
      out = std::move(next);
    }
    return out;
  }

  int uf_find(int x) {
    if (uf_parent_[static_cast<size_t>(x)] == x) return x;
    int root = uf_find(uf_parent_[static_cast<size_t>(x)]);
    uf_off_[static_cast<size_t>(x)] += uf_off_[static_cast<size_t>(uf_parent_[static_cast<size_t>(x)])];
    uf_parent_[static_cast<size_t>(x)] = root;
    return root;
  }
  // offset(x) relative to its root after uf_find
  int uf_offset(int x) {
    uf_find(x);
    return uf_off_[static_cast<size_t>(x)];
  }
  // Enforce pos(b) = pos(a) + 1 at their entry stages: offset(b) = offset(a) + d.
  void uf_join(int a, int b, int d, const SourceLoc& loc) {
    int ra = uf_find(a), rb = uf_find(b);
    int oa = uf_offset(a), ob = uf_offset(b);
    if (ra == rb) {
      if (ob != oa + d) fail(loc, "inconsistent hop latency between " + fg_.pipes[static_cast<size_t>(a)].name +
                                      " and " + fg_.pipes[static_cast<size_t>(b)].name);
      return;
    }
    // attach rb under ra: offset(rb) = oa + d - ob
    uf_parent_[static_cast<size_t>(rb)] = ra;
    uf_off_[static_cast<size_t>(rb)] = oa + d - ob;
  }

  struct PendingPort {
    int comp;
    bool input;
    bool internal;
    int index;
    int pipe;
    int stage;
  };

  void expand_component(const ComponentInstance& decl) {
    using K = ComponentKind;
    if (decl.kind == K::StallPipeline || decl.kind == K::BpPipeline) {
      for (const auto& env : envs(decl.scope)) {
        int prev = -1;
        for (const auto& port : decl.ports) {
          if (port.name == "in" || port.name == "out") continue;
          // hopN: drives the next pipeline's entry
          int b = pipe_id(port.pipeline, env, decl.loc);
          ScopePath a_path = port.pipeline;
          a_path.back().name = decl.args[1].name + port.name.substr(3);
          int a = pipe_id(a_path, env, decl.loc);
          int sa = 1, sb = port.stage;
          // b@sb == a@(sa+1): offset_b = offset_a + sa + 1 - sb
          uf_join(a, b, sa + 1 - sb, decl.loc);
          prev = b;
        }
        (void)prev;
        if (decl.kind == K::StallPipeline) {
          int first = pipe_id(decl.ports.front().pipeline, env, decl.loc);
          std::string suffix;
          for (int r : env) suffix += "_" + std::to_string(r);
          stall_pipes_.push_back({first, decl.stall_input + suffix});
        }
      }
      return;
    }

    auto add_comp = [&](int stop, const std::vector<int>& env_for_name) {
      Comp c;
      c.kind = decl.kind;
      c.decl = &decl;
      c.stop = stop;
      c.trans = join_sub(decl.trans);
      c.name = decl.template_name + "#" + std::to_string(decl.id);
      if (!env_for_name.empty()) {
        c.name += "[";
        for (size_t i = 0; i < env_for_name.size(); ++i)
          c.name += (i ? "," : "") + std::to_string(env_for_name[i]);
        c.name += "]";
      }
      fg_.comps.push_back(std::move(c));
      return static_cast<int>(fg_.comps.size()) - 1;
    };

    if (decl.kind == K::SimpleRing || decl.kind == K::RouterTestbench) {
      const scope::Node* stop_node = g_.find(decl.stop_scope);
      int n_stops = stop_node ? stop_node->count : 0;
      for (const auto& env : envs(decl.scope)) {
        int ci = add_comp(-1, env);
        Comp& c = fg_.comps[static_cast<size_t>(ci)];
        c.ins.assign(static_cast<size_t>(n_stops), -1);
        c.outs.assign(static_cast<size_t>(n_stops), -1);
        const auto* in_port = decl.port("in");
        const auto* out_port = decl.port("out");
        for (int k = 0; k < n_stops; ++k) {
          auto stop_env = env;
          stop_env.push_back(k);
          int pin = pipe_id(in_port->pipeline, stop_env, decl.loc);
          int pout = pipe_id(out_port->pipeline, stop_env, decl.loc);
          if (decl.kind == K::SimpleRing) {
            pending_.push_back({ci, true, false, k, pin, in_port->stage});
            pending_.push_back({ci, false, false, k, pout, out_port->stage});
          } else {
            // testbench: stimulus drives the design's in-point, checker reads the out-point
            pending_.push_back({ci, false, false, k, pin, in_port->stage});
            pending_.push_back({ci, true, false, k, pout, out_port->stage});
          }
        }
      }
      return;
    }

    for (const auto& env : envs(decl.scope)) {
      int ci = add_comp(env.empty() ? -1 : env.back(), env);
      int in_idx = 0, out_idx = 0;
      for (const auto& port : decl.ports) {
        int p = pipe_id(port.pipeline, env, decl.loc);
        if (port.drives)
          pending_.push_back({ci, false, false, out_idx++, p, port.stage});
        else
          pending_.push_back({ci, true, false, in_idx++, p, port.stage});
      }
      fg_.comps[static_cast<size_t>(ci)].ins.assign(static_cast<size_t>(in_idx), -1);
      fg_.comps[static_cast<size_t>(ci)].outs.assign(static_cast<size_t>(out_idx), -1);
    }
  }

  int new_slot(int lane, int pos, std::string name) {
    Slot s;
    s.lane = lane;
    s.pos = pos;
    s.name = std::move(name);
    fg_.slots.push_back(std::move(s));
    return static_cast<int>(fg_.slots.size()) - 1;
  }

  void build_lanes() {
    std::map<int, int> lane_of_root;
    for (size_t i = 0; i < fg_.pipes.size(); ++i) {
      int root = uf_find(static_cast<int>(i));
      auto [it, fresh] = lane_of_root.emplace(root, static_cast<int>(fg_.lanes.size()));
      if (fresh) fg_.lanes.emplace_back();
      Pipe& p = fg_.pipes[i];
      Lane& lane = fg_.lanes[static_cast<size_t>(it->second)];
      p.lane = it->second;
      p.offset = uf_offset(static_cast<int>(i));
      int lo = p.lo + p.offset, hi = p.hi + p.offset;
      if (lane.pipes.empty()) {
        lane.lo = lo;
        lane.hi = hi;
        lane.cls = p.node->cls;
        lane.name = p.name;
      } else {
        lane.lo = std::min(lane.lo, lo);
        lane.hi = std::max(lane.hi, hi);
        if (lane.cls != p.node->cls)
          fail(p.node->loc, "pipeline " + p.name + " mixes flow-control classes with " + lane.name);
      }
      lane.pipes.push_back(static_cast<int>(i));
    }

    for (size_t li = 0; li < fg_.lanes.size(); ++li) {
      Lane& lane = fg_.lanes[li];
      for (int pos = lane.lo; pos <= lane.hi; ++pos)
        lane.slots.push_back(new_slot(static_cast<int>(li), pos, {}));
      for (int pi : lane.pipes) {
        const Pipe& p = fg_.pipes[static_cast<size_t>(pi)];
        for (int st = p.lo; st <= p.hi; ++st) {
          Slot& s = fg_.slots[static_cast<size_t>(lane.slots[static_cast<size_t>(st + p.offset - lane.lo)])];
          s.points.emplace_back(pi, st);
        }
        for (const auto& [st, stage] : p.node->stages)
          for (const auto& stmt : stage.statements) {
            Slot& s = fg_.slots[static_cast<size_t>(lane.slots[static_cast<size_t>(st + p.offset - lane.lo)])];
            s.stmts.push_back({&stmt, pi, st});
          }
      }
      for (int sid : lane.slots) {
        Slot& s = fg_.slots[static_cast<size_t>(sid)];
        std::sort(s.stmts.begin(), s.stmts.end(),
                  [](const StmtRef& a, const StmtRef& b) { return a.stmt->order < b.stmt->order; });
        // Name a slot after its earliest-stage point (the pipeline it enters).
        const std::pair<int, int>* best = nullptr;
        for (const auto& pt : s.points)
          if (!best || pt.second < best->second) best = &pt;
        if (best)
          s.name = fg_.pipes[static_cast<size_t>(best->first)].name + "@" + std::to_string(best->second);
        else
          s.name = lane.name + "+" + std::to_string(s.pos);
      }
      for (size_t k = 0; k + 1 < lane.slots.size(); ++k) {
        Slot& a = fg_.slots[static_cast<size_t>(lane.slots[k])];
        Slot& b = fg_.slots[static_cast<size_t>(lane.slots[k + 1])];
        a.consumer = {Attach::Kind::Reg, -1, -1, lane.slots[k + 1]};
        b.driver = {Attach::Kind::Reg, -1, -1, lane.slots[k]};
      }
    }

    for (const auto& [pipe, name] : stall_pipes_) {
      Lane& lane = fg_.lanes[static_cast<size_t>(fg_.pipes[static_cast<size_t>(pipe)].lane)];
      lane.stall_input = name;
    }
  }

  int slot_of(int pipe, int stage) const {
    const Pipe& p = fg_.pipes[static_cast<size_t>(pipe)];
    const Lane& lane = fg_.lanes[static_cast<size_t>(p.lane)];
    return lane.slots[static_cast<size_t>(stage + p.offset - lane.lo)];
  }

  std::string attach_desc(const Attach& a) const {
    if (a.kind == Attach::Kind::Reg) return "the register from " + fg_.slots[static_cast<size_t>(a.slot)].name;
    return fg_.comps[static_cast<size_t>(a.comp)].name;
  }

  void attach_components() {
    for (const auto& pp : pending_) {
      Comp& c = fg_.comps[static_cast<size_t>(pp.comp)];
      int sid = slot_of(pp.pipe, pp.stage);
      Slot& s = fg_.slots[static_cast<size_t>(sid)];
      Attach a{Attach::Kind::Comp, pp.comp, pp.index, -1, false};
      if (pp.input) {
        if (s.consumer.kind != Attach::Kind::None)
          fail(c.decl->loc, "flow point " + s.name + " is consumed by both " + attach_desc(s.consumer) +
                                " and " + c.name);
        s.consumer = a;
        c.ins[static_cast<size_t>(pp.index)] = sid;
      } else {
        if (s.driver.kind != Attach::Kind::None)
          fail(c.decl->loc, "flow point " + s.name + " is driven by both " + attach_desc(s.driver) +
                                " and " + c.name);
        s.driver = a;
        c.outs[static_cast<size_t>(pp.index)] = sid;
      }
    }
    for (size_t ci = 0; ci < fg_.comps.size(); ++ci) {
      Comp& c = fg_.comps[ci];
      if (c.kind == ComponentKind::SimpleRing) {
        int n = static_cast<int>(c.ins.size());
        if (n < 2) fail(c.decl->loc, "simple_ring needs at least 2 stops");
        for (int k = 0; k < n; ++k)
          c.internal.push_back(new_slot(-1, k, c.name + ".stop" + std::to_string(k)));
        for (int k = 0; k < n; ++k) {
          Slot& s = fg_.slots[static_cast<size_t>(c.internal[static_cast<size_t>(k)])];
          s.driver = {Attach::Kind::Comp, static_cast<int>(ci), k, -1, true};
          s.consumer = {Attach::Kind::Comp, static_cast<int>(ci), k, -1, true};
        }
      }
      if (c.kind == ComponentKind::RouterTestbench) {
        // Carry the transaction subscope used by whatever consumes the stimulus.
        std::string trans = "trans";
        for (int sid : c.outs) {
          int pipe = fg_.slots[static_cast<size_t>(sid)].points.empty()
                         ? -1
                         : fg_.slots[static_cast<size_t>(sid)].points.front().first;
          if (pipe < 0) continue;
          int creator = fg_.pipes[static_cast<size_t>(pipe)].node->creator;
          if (creator >= 0 && creator != c.decl->id) {
            const auto& cr = g_.components[static_cast<size_t>(creator)];
            if (!cr.trans.empty()) trans = join_sub(cr.trans);
          }
          break;
        }
        c.trans = trans;
      }
    }
  }

  void scan_statements() {
    for (size_t si = 0; si < fg_.slots.size(); ++si) {
      for (const auto& sr : fg_.slots[si].stmts) {
        const Statement& st = *sr.stmt;
        walk_expr(st.assign.rhs, [&](const Expr& e) {
          if (e.kind == Expr::Kind::Select && !e.args.empty()) {
            const Expr& a = e.args[0];
            if ((a.kind == Expr::Kind::Signal || a.kind == Expr::Kind::Child) && a.name != "ANY") {
              int& w = fg_.payload_widths[a.name];
              w = std::max(w, e.hi + 1);
            }
            if (a.kind == Expr::Kind::External) {
              int& w = fg_.externals_in[fg_.external_name(a.name, sr.pipe)];
              w = std::max(w, e.hi + 1);
            }
          }
        });
        // `$x[w] = *ext;` sizes the input
        if (st.assign.rhs.kind == Expr::Kind::External) {
          int& w = fg_.externals_in[fg_.external_name(st.assign.rhs.name, sr.pipe)];
          int lw = st.assign.lhs.has_range ? st.assign.lhs.hi - st.assign.lhs.lo + 1 : 0;
          w = std::max(w, lw);
        }
        walk_expr(st.assign.rhs, [&](const Expr& e) {
          if (e.kind == Expr::Kind::External) {
            auto name = fg_.external_name(e.name, sr.pipe);
            if (fg_.externals_in[name] == 0)
              fail(e.loc, "cannot infer the width of input *" + e.name +
                              "; assign it to a sized signal or bit-select it");
          }
        });
      }
    }
  }

  const scope::ScopeGraph& g_;
  FlowGraph fg_;
  std::map<std::string, int> pipe_ids_;
  std::vector<int> uf_parent_, uf_off_;
  std::vector<PendingPort> pending_;
  std::vector<std::pair<int, std::string>> stall_pipes_;
};

// ---------------------------------------------------------------------------
// Field resolution

struct Upstream {
  enum class Kind { None, Local, Flow, Reg, Comp, Generated };
  Kind kind = Kind::None;
  StmtRef stmt;
  std::vector<NodeKey> from;
};

bool assigns(const StmtRef& sr, const std::string& sub, const std::string& field) {
  const auto& lhs = sr.stmt->assign.lhs;
  return lhs.kind == frontend::LhsRef::Kind::Signal && lhs.name == field &&
         join_sub(sr.stmt->subscope) == sub;
}

class Resolver {
 public:
  explicit Resolver(FlowGraph& fg) : fg_(fg) {}

  void run() {
    collect_demands();
    for (const auto& d : hard_) resolve_demand(d);
    resolve_soft();
    check_multiply_driven();
    compute_widths();
    check_selects();
    build_records();
    fg_.resolved = true;
  }

 private:
  std::string node_name(const NodeKey& n) const { return fg_.node_name(n); }

  Upstream upstream(const NodeKey& n, const std::string& f, bool allow_gen,
                    bool skip_local = false) const {
    Upstream u;
    const Slot& s = fg_.slots[static_cast<size_t>(n.slot)];
    if (!skip_local) {
      const StmtRef* found = nullptr;
      for (const auto& sr : s.stmts) {
        if (!assigns(sr, n.sub, f)) continue;
        if (found)
          fail(sr.stmt->loc, "field $" + f + " is multiply driven at " + node_name(n) + " (also line " +
                                 std::to_string(found->stmt->loc.line) + ")");
        found = &sr;
      }
      if (found) {
        u.kind = Upstream::Kind::Local;
        u.stmt = *found;
        return u;
      }
    }
    for (const auto& sr : s.stmts) {
      if (!assigns(sr, n.sub, "ANY")) continue;
      u.kind = Upstream::Kind::Flow;
      u.stmt = sr;
      collect_any_arms(sr.stmt->assign.rhs, n, u.from);
      return u;
    }
    switch (s.driver.kind) {
      case Attach::Kind::None:
        return u;
      case Attach::Kind::Reg:
        u.kind = Upstream::Kind::Reg;
        u.from.push_back({s.driver.slot, n.sub});
        return u;
      case Attach::Kind::Comp:
        break;
    }
    const Comp& c = fg_.comps[static_cast<size_t>(s.driver.comp)];
    if (n.sub != c.trans) return u;
    auto in = [&](size_t i) { return NodeKey{c.ins[i], n.sub}; };
    u.kind = Upstream::Kind::Comp;
    switch (c.kind) {
      case ComponentKind::BypassFifo:
      case ComponentKind::OpportunisticFlow:
        u.from.push_back(in(0));
        break;
      case ComponentKind::Arb2:
        u.from.push_back(in(0));
        u.from.push_back(in(1));
        break;
      case ComponentKind::SimpleRing: {
        size_t k = static_cast<size_t>(s.driver.port);
        size_t n_stops = c.ins.size();
        if (s.driver.internal) {
          size_t prev = (k + n_stops - 1) % n_stops;
          u.from.push_back({c.internal[prev], n.sub});
          u.from.push_back(in(prev));
        } else {
          u.from.push_back({c.internal[k], n.sub});
        }
        break;
      }
      case ComponentKind::RouterTestbench:
        u.from.clear();
        if (f == "dest" || f == "tag" || (allow_gen && fg_.payload_widths.count(f)))
          u.kind = Upstream::Kind::Generated;
        else
          u.kind = Upstream::Kind::None;
        break;
      default:
        u.kind = Upstream::Kind::None;
    }
    return u;
  }

  static void collect_any_arms(const Expr& e, const NodeKey& n, std::vector<NodeKey>& out) {
    if (e.is_any()) {
      out.push_back({n.slot, child_sub(n.sub, e.scopes)});
      return;
    }
    if (e.kind == Expr::Kind::Ternary) {
      collect_any_arms(e.args[1], n, out);
      collect_any_arms(e.args[2], n, out);
    }
  }

  void add_demand(NodeKey n, std::string f, std::string what, bool soft) {
    Demand d{std::move(n), std::move(f), std::move(what), soft};
    (soft ? soft_ : hard_).push_back(d);
  }

  void collect_demands() {
    std::set<std::string> produced_in_trans;
    std::set<std::string> consumed;
    std::string tb_trans;
    for (const auto& c : fg_.comps)
      if (c.kind == ComponentKind::RouterTestbench) tb_trans = c.trans;

    for (size_t si = 0; si < fg_.slots.size(); ++si) {
      const Slot& s = fg_.slots[si];
      for (const auto& sr : s.stmts) {
        const Statement& st = *sr.stmt;
        const auto& lhs = st.assign.lhs;
        if (lhs.kind == frontend::LhsRef::Kind::Signal && lhs.name == "ANY") {
          if (const Expr* bad = frontend::find_misplaced_any(st.assign.rhs))
            fail(bad->loc, "$ANY may only be steered unaltered (whole right-hand side or a full "
                           "arm of a conditional)");
        } else {
          bool any_rhs = false;
          walk_expr(st.assign.rhs, [&](const Expr& e) { any_rhs |= e.is_any(); });
          if (any_rhs)
            fail(st.loc, "$ANY operand in an assignment whose left-hand side is not $ANY");
        }
        if (lhs.kind == frontend::LhsRef::Kind::Signal && lhs.name != "ANY" &&
            join_sub(st.subscope) == tb_trans)
          produced_in_trans.insert(lhs.name);

        const std::string sub = join_sub(st.subscope);
        for (const auto& b : st.bindings) {
          using BK = scope::RefBinding::Kind;
          if (b.kind != BK::Local && b.kind != BK::StageBack && b.kind != BK::FlowDemand) continue;
          consumed.insert(b.signal);
          if (b.kind == BK::FlowDemand) check_negative_distance(sr, b);
          std::ostringstream what;
          what << "line " << b.loc.line;
          add_demand({static_cast<int>(si), join_sub(b.subscope)}, b.signal, what.str(), false);
          (void)sub;
        }
      }
    }
    for (size_t ci = 0; ci < fg_.comps.size(); ++ci) {
      const Comp& c = fg_.comps[ci];
      if (c.kind == ComponentKind::OpportunisticFlow) {
        consumed.insert(c.decl->condition);
        add_demand({c.ins[0], ""}, c.decl->condition, c.name + " condition", false);
      } else if (c.kind == ComponentKind::SimpleRing) {
        consumed.insert("dest");
        for (int sid : c.internal) add_demand({sid, c.trans}, "dest", c.name + " routing", false);
      }
    }
    for (size_t ci = 0; ci < fg_.comps.size(); ++ci) {
      const Comp& c = fg_.comps[ci];
      if (c.kind != ComponentKind::RouterTestbench) continue;
      for (int sid : c.ins) {
        add_demand({sid, c.trans}, "tag", c.name + " checker", false);
        add_demand({sid, c.trans}, "dest", c.name + " checker", false);
      }
      std::vector<std::string> delivered = {"tag", "dest"};
      for (const auto& f : produced_in_trans) {
        if (consumed.count(f) || f == "tag" || f == "dest") continue;
        soft_fields_.push_back({static_cast<int>(ci), f});
      }
      fg_.sink_fields[static_cast<int>(ci)] = delivered;
    }
  }

  void check_negative_distance(const StmtRef& sr, const scope::RefBinding& b) {
    const Pipe& p = fg_.pipes[static_cast<size_t>(sr.pipe)];
    for (const auto& [stage, st] : p.node->stages) {
      if (stage <= sr.stage) continue;
      for (const auto& s : st.statements) {
        if (s.assign.lhs.kind == frontend::LhsRef::Kind::Signal && s.assign.lhs.name == b.signal &&
            s.subscope == b.subscope) {
          fail(b.loc, "$" + b.signal + " is consumed at " + p.name + "@" + std::to_string(sr.stage) +
                          " but produced later at @" + std::to_string(stage) +
                          " (negative stage distance)");
        }
      }
    }
  }

  void resolve_demand(const Demand& d) {
    fg_.demands.push_back(d);
    std::vector<NodeKey> path;
    resolve(d.node, d.field, path, d);
  }

  void resolve(const NodeKey& n, const std::string& f, std::vector<NodeKey>& path, const Demand& d) {
    auto key = std::make_pair(n, f);
    if (fg_.carried.count(key) || in_progress_.count(key)) return;
    path.push_back(n);
    Upstream u = upstream(n, f, true);
    if (u.kind == Upstream::Kind::None) {
      std::ostringstream os;
      os << "unresolved field $" << f << " consumed at " << node_name(d.node) << " (" << d.what
         << "): no producer upstream along ";
      for (size_t i = 0; i < path.size(); ++i) os << (i ? " <- " : "") << node_name(path[i]);
      SourceLoc loc;
      for (const auto& sr : fg_.slots[static_cast<size_t>(d.node.slot)].stmts)
        for (const auto& b : sr.stmt->bindings)
          if (b.signal == f && !loc.line) loc = b.loc;
      fail(loc, os.str());
    }
    in_progress_.insert(key);
    FieldSource src;
    src.stmt = u.stmt;
    src.from = u.from;
    switch (u.kind) {
      case Upstream::Kind::Local: src.kind = FieldSource::Kind::Local; break;
      case Upstream::Kind::Flow: src.kind = FieldSource::Kind::Flow; break;
      case Upstream::Kind::Reg: src.kind = FieldSource::Kind::Reg; break;
      case Upstream::Kind::Comp: src.kind = FieldSource::Kind::Comp; break;
      case Upstream::Kind::Generated: src.kind = FieldSource::Kind::Generated; break;
      case Upstream::Kind::None: break;
    }
    for (const auto& up : u.from) resolve(up, f, path, d);
    in_progress_.erase(key);
    fg_.carried[key] = std::move(src);
    path.pop_back();
  }

  // Side-effect free: can `f` be resolved at `n` without generating payload?
  bool can_resolve(const NodeKey& n, const std::string& f, std::set<NodeKey>& seen) const {
    if (fg_.carried.count({n, f})) {
      // Already routed; make sure it was not via generated payload.
      return !reaches_generated(n, f);
    }
    if (!seen.insert(n).second) return true;
    Upstream u = upstream(n, f, false);
    if (u.kind == Upstream::Kind::None) return false;
    for (const auto& up : u.from)
      if (!can_resolve(up, f, seen)) return false;
    return true;
  }

  bool reaches_generated(const NodeKey& n, const std::string& f) const {
    std::set<NodeKey> seen;
    std::vector<NodeKey> stack{n};
    while (!stack.empty()) {
      NodeKey x = stack.back();
      stack.pop_back();
      if (!seen.insert(x).second) continue;
      auto it = fg_.carried.find({x, f});
      if (it == fg_.carried.end()) continue;
      if (it->second.kind == FieldSource::Kind::Generated && f != "tag" && f != "dest") return true;
      for (const auto& up : it->second.from) stack.push_back(up);
    }
    return false;
  }

  void resolve_soft() {
    for (const auto& [ci, f] : soft_fields_) {
      const Comp& c = fg_.comps[static_cast<size_t>(ci)];
      bool all = true;
      for (int sid : c.ins) {
        std::set<NodeKey> seen;
        if (!can_resolve({sid, c.trans}, f, seen)) all = false;
      }
      if (!all) continue;
      for (int sid : c.ins) resolve_demand({{sid, c.trans}, f, c.name + " checker", true});
      fg_.sink_fields[ci].push_back(f);
    }
  }

  // A producer must not find another producer of the same field upstream.
  void check_multiply_driven() {
    for (const auto& [key, src] : fg_.carried) {
      if (src.kind != FieldSource::Kind::Local) continue;
      const auto& [n, f] = key;
      std::set<NodeKey> seen;
      std::vector<NodeKey> stack;
      Upstream u = upstream(n, f, false, true);
      for (const auto& x : u.from) stack.push_back(x);
      while (!stack.empty()) {
        NodeKey x = stack.back();
        stack.pop_back();
        if (!seen.insert(x).second) continue;
        Upstream v = upstream(x, f, false);
        if (v.kind == Upstream::Kind::Local ||
            (v.kind == Upstream::Kind::Generated && (f == "dest" || f == "tag"))) {
          std::string other = v.kind == Upstream::Kind::Local ? node_name(x) : "the stimulus generator";
          fail(src.stmt.stmt->loc, "field $" + f + " is multiply driven: produced at " + node_name(n) +
                                       " and again upstream at " + other);
        }
        for (const auto& y : v.from) stack.push_back(y);
      }
    }
  }

  int width_of(const NodeKey& n, const std::string& f) {
    auto it = fg_.carried.find({n, f});
    if (it == fg_.carried.end()) return 0;
    FieldSource& src = it->second;
    if (src.width > 0) return src.width;
    if (src.width < 0) return 0;  // cycle (ring) or combinational loop
    src.width = -1;
    int w = 0;
    switch (src.kind) {
      case FieldSource::Kind::Local: {
        const auto& lhs = src.stmt.stmt->assign.lhs;
        w = lhs.has_range ? lhs.hi - lhs.lo + 1 : expr_width(n.slot, *src.stmt.stmt, src.stmt.stmt->assign.rhs);
        break;
      }
      case FieldSource::Kind::Generated:
        if (f == "dest") w = index_width(fg_.ports);
        else if (f == "tag") w = 32;
        else w = fg_.payload_widths.at(f);
        break;
      default: {
        const NodeKey* first = nullptr;
        for (const auto& up : src.from) {
          int uw = width_of(up, f);
          if (uw == 0) continue;
          if (w != 0 && uw != w)
            fail({}, "width mismatch for $" + f + " at " + node_name(n) + ": " + node_name(*first) +
                         " carries " + std::to_string(w) + " bits, " + node_name(up) + " carries " +
                         std::to_string(uw));
          if (!first) first = &up;
          w = uw;
        }
        break;
      }
    }
    // re-find: recursion may have rehashed nothing (std::map is node-stable)
    src.width = std::max(w, 0);
    return src.width;
  }

 public:
  int expr_width(int slot, const Statement& st, const Expr& e) {
    switch (e.kind) {
      case Expr::Kind::Signal:
      case Expr::Kind::Child: {
        if (e.name == "valid" || e.name == "ready") return 1;
        NodeKey n{slot, child_sub(join_sub(st.subscope), e.scopes)};
        return std::max(1, width_of(n, e.name));
      }
      case Expr::Kind::IndexRef: return index_width(fg_.ports);
      case Expr::Kind::External: {
        for (const auto& sr : fg_.slots[static_cast<size_t>(slot)].stmts)
          if (sr.stmt == &st) return fg_.externals_in.at(fg_.external_name(e.name, sr.pipe));
        return 1;
      }
      case Expr::Kind::Literal: return e.width > 0 ? e.width : literal_width(e.value);
      case Expr::Kind::Unary:
        return e.op == "!" ? 1 : expr_width(slot, st, e.args[0]);
      case Expr::Kind::Binary: {
        const std::string& op = e.op;
        if (op == "==" || op == "!=" || op == "<" || op == "<=" || op == ">" || op == ">=" ||
            op == "&&" || op == "||")
          return 1;
        if (op == "**") return expr_width(slot, st, e.args[0]);
        return std::max(expr_width(slot, st, e.args[0]), expr_width(slot, st, e.args[1]));
      }
      case Expr::Kind::Ternary:
        return std::max(expr_width(slot, st, e.args[1]), expr_width(slot, st, e.args[2]));
      case Expr::Kind::Select: return e.hi - e.lo + 1;
      case Expr::Kind::Sqrt: return (expr_width(slot, st, e.args[0]) + 1) / 2;
    }
    return 1;
  }

 private:
  void compute_widths() {
    for (auto& [key, src] : fg_.carried) width_of(key.first, key.second);
    for (auto& [key, src] : fg_.carried)
      if (src.width <= 0) src.width = 1;
    for (const auto& c : fg_.comps) {
      if (c.kind != ComponentKind::SimpleRing) continue;
      int need = index_width(static_cast<int>(c.ins.size()));
      for (int sid : c.internal) {
        auto it = fg_.carried.find({{sid, c.trans}, "dest"});
        if (it != fg_.carried.end() && it->second.width < need)
          fail(c.decl->loc, "$dest is " + std::to_string(it->second.width) + " bits wide; the ring needs " +
                                std::to_string(need));
      }
    }
  }

  void check_selects() {
    for (size_t si = 0; si < fg_.slots.size(); ++si) {
      for (const auto& sr : fg_.slots[si].stmts) {
        const Statement& st = *sr.stmt;
        walk_expr(st.assign.rhs, [&](const Expr& e) {
          if (e.kind != Expr::Kind::Select) return;
          const Expr& a = e.args[0];
          int w;
          if (a.kind == Expr::Kind::External)
            w = fg_.externals_in[fg_.external_name(a.name, sr.pipe)];
          else
            w = expr_width(static_cast<int>(si), st, a);
          if (e.hi >= w) {
            fail(e.loc, "bit-select [" + std::to_string(e.hi) + ":" + std::to_string(e.lo) +
                            "] exceeds the " + std::to_string(w) + "-bit width of " +
                            frontend::print_expr(a));
          }
        });
      }
    }
  }

  void build_records() {
    // forward adjacency per field
    std::map<std::string, std::map<NodeKey, std::vector<NodeKey>>> fwd;
    for (const auto& [key, src] : fg_.carried)
      for (const auto& up : src.from) fwd[key.second][up].push_back(key.first);
    std::map<std::pair<NodeKey, std::string>, std::vector<const Demand*>> demands_at;
    for (const auto& d : fg_.demands) demands_at[{d.node, d.field}].push_back(&d);

    for (const auto& [key, src] : fg_.carried) {
      if (src.kind != FieldSource::Kind::Local && src.kind != FieldSource::Kind::Generated) continue;
      FieldRecord r;
      r.field = key.second;
      r.producer = key.first;
      r.width = src.width;
      r.generated = src.kind == FieldSource::Kind::Generated;
      std::set<NodeKey> seen{key.first};
      std::vector<NodeKey> q{key.first};
      auto& adj = fwd[key.second];
      for (size_t i = 0; i < q.size(); ++i) {
        NodeKey x = q[i];
        if (auto it = demands_at.find({x, key.second}); it != demands_at.end())
          for (const Demand* d : it->second) r.consumers.push_back(*d);
        auto a = adj.find(x);
        if (a == adj.end()) continue;
        for (const auto& y : a->second) {
          // an edge into a node that produces the field locally does not carry it
          const auto& ys = fg_.carried.at({y, key.second});
          if (ys.kind == FieldSource::Kind::Local || ys.kind == FieldSource::Kind::Generated) continue;
          r.route.emplace_back(x, y);
          if (seen.insert(y).second) q.push_back(y);
        }
      }
      std::sort(r.route.begin(), r.route.end());
      fg_.fields.push_back(std::move(r));
    }
    for (auto& c : fg_.comps) {
      if (c.kind != ComponentKind::RouterTestbench) continue;
      std::set<std::string> gen;
      for (int sid : c.outs)
        for (const auto& [key, src] : fg_.carried)
          if (key.first.slot == sid && src.kind == FieldSource::Kind::Generated) gen.insert(key.second);
      int ci = static_cast<int>(&c - fg_.comps.data());
      fg_.gen_fields[ci] = {gen.begin(), gen.end()};
    }
  }

  FlowGraph& fg_;
  std::vector<Demand> hard_, soft_;
  std::vector<std::pair<int, std::string>> soft_fields_;
  std::set<std::pair<NodeKey, std::string>> in_progress_;
};

std::string lane_pos_name(const FlowGraph& fg, int slot) { return fg.slots[static_cast<size_t>(slot)].name; }

}  // namespace

std::string FlowGraph::external_name(const std::string& name, int pipe) const {
  std::string s = name;
  for (int r : pipes[static_cast<size_t>(pipe)].replica) s += "_" + std::to_string(r);
  return s;
}

const FieldSource* FlowGraph::source(const NodeKey& n, const std::string& f) const {
  auto it = carried.find({n, f});
  return it == carried.end() ? nullptr : &it->second;
}

std::string FlowGraph::node_name(const NodeKey& n) const {
  std::string s = lane_pos_name(*this, n.slot);
  if (!n.sub.empty()) s += "/" + n.sub;
  return s;
}

int FlowGraph::tb_comp() const {
  for (size_t i = 0; i < comps.size(); ++i)
    if (comps[i].kind == ComponentKind::RouterTestbench) return static_cast<int>(i);
  return -1;
}

FlowGraph build_flow_graph(const scope::ScopeGraph& g) { return GraphBuilder(g).run(); }

FlowGraph resolve_fields(FlowGraph fg) {
  Resolver(fg).run();
  return fg;
}

int self_width(const FlowGraph& fg, int slot, const scope::Statement& s, const frontend::Expr& e) {
  // width_of memoizes into `carried`; a resolved graph already has every width filled in.
  FlowGraph& mut = const_cast<FlowGraph&>(fg);
  return Resolver(mut).expr_width(slot, s, e);
}

StagePlan plan_stages(const FlowGraph& fg) {
  StagePlan plan;
  for (const auto& r : fg.fields) {
    std::map<int, StagePlanEntry> per_lane;
    auto touch = [&](const NodeKey& n, bool reg) {
      const Slot& s = fg.slots[static_cast<size_t>(n.slot)];
      if (s.lane < 0) return;
      auto [it, fresh] = per_lane.try_emplace(s.lane);
      StagePlanEntry& e = it->second;
      if (fresh) {
        e.field = r.field;
        e.producer = r.producer;
        e.lane = s.lane;
        e.entry = e.exit = s.pos;
      }
      e.entry = std::min(e.entry, s.pos);
      e.exit = std::max(e.exit, s.pos);
      if (reg) ++e.registers;
    };
    touch(r.producer, false);
    for (const auto& [from, to] : r.route) {
      const FieldSource* src = fg.source(to, r.field);
      touch(to, src && src->kind == FieldSource::Kind::Reg);
    }
    for (auto& [lane, e] : per_lane) {
      if (e.registers != e.exit - e.entry && e.registers > e.exit - e.entry)
        fail({}, "internal: stage plan for $" + r.field + " is inconsistent");
      if (e.exit < e.entry)
        fail({}, "$" + r.field + " is consumed before it is produced (negative stage distance)");
      plan.entries.push_back(e);
    }
  }
  return plan;
}

std::string dump(const FlowGraph& fg, const StagePlan& plan) {
  std::ostringstream os;
  os << "lanes\n";
  for (size_t i = 0; i < fg.lanes.size(); ++i) {
    const Lane& l = fg.lanes[i];
    os << "   L" << i << ' ' << scope::to_string(l.cls) << ' ' << l.name << " positions " << l.lo << ".."
       << l.hi;
    if (!l.stall_input.empty()) os << " stall=" << l.stall_input;
    os << '\n';
  }
  os << "components\n";
  for (const auto& c : fg.comps) {
    os << "   " << c.name << " carries /" << c.trans << '\n';
    for (size_t i = 0; i < c.ins.size(); ++i)
      os << "      in" << i << ' ' << fg.slots[static_cast<size_t>(c.ins[i])].name << '\n';
    for (size_t i = 0; i < c.outs.size(); ++i)
      os << "      out" << i << ' ' << fg.slots[static_cast<size_t>(c.outs[i])].name << '\n';
  }
  os << "fields\n";
  for (const auto& r : fg.fields) {
    os << "   $" << r.field << '[' << r.width << "] from " << fg.node_name(r.producer)
       << (r.generated ? " (stimulus)" : "") << '\n';
    for (const auto& d : r.consumers)
      os << "      used " << fg.node_name(d.node) << " by " << d.what << (d.soft ? " (observed)" : "") << '\n';
    for (const auto& [a, b] : r.route) {
      const FieldSource* src = fg.source(b, r.field);
      const char* how = "?";
      if (src) {
        switch (src->kind) {
          case FieldSource::Kind::Reg: how = "reg"; break;
          case FieldSource::Kind::Comp: how = "channel"; break;
          case FieldSource::Kind::Flow: how = "flow"; break;
          default: how = "local"; break;
        }
      }
      os << "      " << how << ' ' << fg.node_name(a) << " -> " << fg.node_name(b) << '\n';
    }
  }
  os << "stage plan\n";
  for (const auto& e : plan.entries) {
    os << "   $" << e.field << " from " << fg.node_name(e.producer) << " lane L" << e.lane << " @"
       << e.entry << "..@" << e.exit << " registers " << e.registers << '\n';
  }
  return os.str();
}

}  // namespace tlflow::flow
