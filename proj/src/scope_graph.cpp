#include "tlflow/scope_graph.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <sstream>

#include "tlflow/flow_lib.hpp"

namespace tlflow::scope {

using frontend::AssignStatement;
using frontend::Expr;
using frontend::InstArg;
using frontend::Instantiation;
using frontend::ParseNode;
using frontend::ScopeEntry;
using frontend::StageEntry;

std::string to_string(const ScopePath& path) {
  std::string s;
  for (const auto& e : path) {
    s += e.kind == PathElement::Kind::Pipeline ? '|' : '/';
    s += e.name;
    if (e.replicated) s += "[*]";
  }
  return s;
}

std::string_view to_string(PipelineClass c) {
  switch (c) {
    case PipelineClass::Free: return "free";
    case PipelineClass::ReadyValid: return "ready-valid";
    case PipelineClass::Stall: return "stall";
  }
  return "?";
}

std::string_view to_string(Handshake h) {
  switch (h) {
    case Handshake::None: return "none";
    case Handshake::FreeFlow: return "free-flow";
    case Handshake::ReadyValid: return "ready-valid";
    case Handshake::Stall: return "stall";
    case Handshake::RingHop: return "ring-hop";
  }
  return "?";
}

std::string_view to_string(ComponentKind k) {
  switch (k) {
    case ComponentKind::StallPipeline: return "stall_pipeline";
    case ComponentKind::BpPipeline: return "bp_pipeline";
    case ComponentKind::BypassFifo: return "bypass_fifo";
    case ComponentKind::Arb2: return "arb2";
    case ComponentKind::OpportunisticFlow: return "opportunistic_flow";
    case ComponentKind::SimpleRing: return "simple_ring";
    case ComponentKind::RouterTestbench: return "router_testbench";
  }
  return "?";
}

Node* Node::find_child(PathElement::Kind kind, const std::string& name) {
  for (auto& c : children)
    if (c.element.kind == kind && c.element.name == name) return &c;
  return nullptr;
}

const Node* Node::find_child(PathElement::Kind kind, const std::string& name) const {
  for (const auto& c : children)
    if (c.element.kind == kind && c.element.name == name) return &c;
  return nullptr;
}

const ComponentPort* ComponentInstance::port(const std::string& name) const {
  for (const auto& p : ports)
    if (p.name == name) return &p;
  return nullptr;
}

Node* ScopeGraph::find(const ScopePath& path) {
  Node* n = &root;
  for (const auto& e : path) {
    n = n->find_child(e.kind, e.name);
    if (!n) return nullptr;
  }
  return n;
}

const Node* ScopeGraph::find(const ScopePath& path) const {
  return const_cast<ScopeGraph*>(this)->find(path);
}

namespace {

std::string join_sub(const std::vector<std::string>& sub) {
  std::string s;
  for (const auto& x : sub) s += "/" + x;
  return s;
}

// ---------------------------------------------------------------------------
// merge_reentrant

class Merger {
 public:
  Merger(ScopeGraph& g, int ports) : g_(g), ports_(ports) {}

  void add(const frontend::ParseTree& tree) {
    Ctx ctx;
    walk(tree.root, g_.root, ctx);
  }

 private:
  struct Ctx {
    ScopePath path;
    bool in_pipeline = false;
    int stage = -1;
    std::vector<std::string> sub;
  };

  Node& child(Node& parent, const PathElement& el, const SourceLoc& loc) {
    if (Node* existing = parent.find_child(el.kind, el.name)) {
      if (existing->element.replicated != el.replicated)
        fail(loc, "conflicting replication markers for /" + el.name + " (first declared at line " +
                      std::to_string(existing->loc.line) + ")");
      return *existing;
    }
    Node n;
    n.element = el;
    n.count = el.replicated ? ports_ : 1;
    n.loc = loc;
    parent.children.push_back(std::move(n));
    return parent.children.back();
  }

  void walk(const std::vector<ParseNode>& nodes, Node& cur, const Ctx& ctx) {
    for (const auto& pn : nodes) {
      if (const auto* se = std::get_if<ScopeEntry>(&pn.item)) {
        Ctx c = ctx;
        if (ctx.in_pipeline) {
          // hierarchy inside a pipeline is a transaction subscope
          c.sub.push_back(se->element.name);
          walk(se->children, cur, c);
        } else {
          Node& n = child(cur, se->element, pn.loc);
          c.path.push_back(se->element);
          c.in_pipeline = se->element.kind == PathElement::Kind::Pipeline;
          walk(se->children, n, c);
        }
      } else if (const auto* st = std::get_if<StageEntry>(&pn.item)) {
        Ctx c = ctx;
        c.stage = st->stage;
        cur.stages[st->stage];
        walk(st->children, cur, c);
      } else if (const auto* as = std::get_if<AssignStatement>(&pn.item)) {
        Stage& stage = cur.stages[ctx.stage];
        for (const auto& prev : stage.statements) {
          if (prev.subscope == ctx.sub && prev.assign.lhs.kind == as->lhs.kind &&
              prev.assign.lhs.name == as->lhs.name) {
            fail(pn.loc, "duplicate assignment to " +
                             std::string(as->lhs.kind == frontend::LhsRef::Kind::External ? "*" : "$") +
                             as->lhs.name + " in " + to_string(ctx.path) + "@" +
                             std::to_string(ctx.stage) + join_sub(ctx.sub) + " (previous at line " +
                             std::to_string(prev.loc.line) + ")");
          }
        }
        Statement s;
        s.assign = *as;
        s.subscope = ctx.sub;
        s.loc = pn.loc;
        s.order = order_++;
        stage.statements.push_back(std::move(s));
      } else if (const auto* inst = std::get_if<Instantiation>(&pn.item)) {
        g_.pending.push_back({*inst, ctx.path, pn.loc, order_++});
      }
    }
  }

  ScopeGraph& g_;
  int ports_;
  int order_ = 0;
};

// ---------------------------------------------------------------------------
// expand_instantiations

ScopePath resolve_scope_arg(const ScopeGraph& g, const ScopePath& site, const InstArg& a) {
  if (!site.empty() && site.back().kind == PathElement::Kind::Hier && site.back().name == a.name)
    return site;
  const Node* n = g.find(site);
  if (n) {
    if (const Node* c = n->find_child(PathElement::Kind::Hier, a.name)) {
      ScopePath p = site;
      p.push_back(c->element);
      return p;
    }
  }
  if (site.empty() && a.name == "top") return {};
  fail(a.loc, "unknown scope /" + a.name + " at " + (site.empty() ? "top level" : to_string(site)));
}

void check_signature(const flowlib::ComponentTemplate& t, const PendingInstantiation& p) {
  const auto& args = p.inst.args;
  if (args.size() != t.signature.size()) {
    fail(p.loc, "component '" + p.inst.component + "' expects " +
                    std::to_string(t.signature.size()) + " arguments, got " +
                    std::to_string(args.size()));
  }
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i].kind != t.signature[i]) {
      fail(args[i].loc.line ? args[i].loc : p.loc,
           "argument " + std::to_string(i + 1) + " of '" + p.inst.component + "' must be a " +
               std::string(frontend::to_string(t.signature[i])) + ", got a " +
               std::string(frontend::to_string(args[i].kind)));
    }
    if (args[i].kind == InstArg::Kind::Signal && args[i].negated &&
        t.kind != ComponentKind::OpportunisticFlow)
      fail(args[i].loc, "negated signal argument is only accepted as a condition");
  }
}

Node& ensure_pipeline(ScopeGraph& g, const ScopePath& path, const SourceLoc& loc) {
  Node* n = &g.root;
  for (const auto& e : path) {
    Node* c = n->find_child(e.kind, e.name);
    if (!c) {
      if (e.kind == PathElement::Kind::Hier) fail(loc, "unknown scope " + to_string(path));
      Node fresh;
      fresh.element = e;
      fresh.loc = loc;
      n->children.push_back(std::move(fresh));
      c = &n->children.back();
    }
    n = c;
  }
  return *n;
}

// ---------------------------------------------------------------------------
// resolve_references

struct PipeIndex {
  // per pipeline: (subscope, signal) -> stages assigning it
  std::map<std::pair<std::vector<std::string>, std::string>, std::vector<int>> producers;
  std::set<std::vector<std::string>> subscopes;
};

class RefResolver {
 public:
  explicit RefResolver(ScopeGraph& g) : g_(g) {
    // transaction subscopes contributed by components
    for (const auto& c : g_.components) {
      for (const auto& p : c.ports) comp_subs_[to_string(p.pipeline)].insert(c.trans);
    }
  }

  void run() {
    ScopePath path;
    std::vector<const Node*> chain;
    walk(g_.root, path, chain);
  }

 private:
  void walk(Node& n, ScopePath& path, std::vector<const Node*>& chain) {
    chain.push_back(&n);
    if (n.is_pipeline()) resolve_pipeline(n, path, chain);
    for (auto& c : n.children) {
      path.push_back(c.element);
      walk(c, path, chain);
      path.pop_back();
    }
    chain.pop_back();
  }

  void resolve_pipeline(Node& pipe, const ScopePath& path, const std::vector<const Node*>& chain) {
    PipeIndex idx;
    for (const auto& [stage, st] : pipe.stages) {
      for (const auto& s : st.statements) {
        if (s.assign.lhs.kind == frontend::LhsRef::Kind::Signal)
          idx.producers[{s.subscope, s.assign.lhs.name}].push_back(stage);
        for (size_t k = 0; k <= s.subscope.size(); ++k)
          idx.subscopes.insert(std::vector<std::string>(s.subscope.begin(), s.subscope.begin() + k));
      }
    }
    if (auto it = comp_subs_.find(to_string(path)); it != comp_subs_.end())
      for (const auto& sub : it->second)
        for (size_t k = 0; k <= sub.size(); ++k)
          idx.subscopes.insert(std::vector<std::string>(sub.begin(), sub.begin() + k));

    for (auto& [stage, st] : pipe.stages) {
      for (auto& s : st.statements) {
        s.bindings.clear();
        bind(s.assign.rhs, s, stage, idx, path, chain);
      }
    }
  }

  void bind(const Expr& e, Statement& s, int stage, const PipeIndex& idx, const ScopePath& path,
            const std::vector<const Node*>& chain) {
    switch (e.kind) {
      case Expr::Kind::Signal:
      case Expr::Kind::Child: {
        std::vector<std::string> sub = s.subscope;
        sub.insert(sub.end(), e.scopes.begin(), e.scopes.end());
        if (e.kind == Expr::Kind::Child && !idx.subscopes.count(sub))
          fail(e.loc, "/" + e.scopes.front() + " is not a scope of " + to_string(path) +
                          join_sub(s.subscope));
        RefBinding b;
        b.signal = e.name;
        b.subscope = sub;
        b.loc = e.loc;
        if (e.name == "ANY") {
          b.kind = RefBinding::Kind::Any;
        } else if (e.name == "valid" || e.name == "ready") {
          b.kind = RefBinding::Kind::Handshake;
        } else {
          b.kind = RefBinding::Kind::FlowDemand;
          if (auto it = idx.producers.find({sub, e.name}); it != idx.producers.end()) {
            int best = -1;
            for (int ps : it->second)
              if (ps <= stage) best = std::max(best, ps);
            if (best == stage) {
              b.kind = RefBinding::Kind::Local;
            } else if (best >= 0) {
              b.kind = RefBinding::Kind::StageBack;
              b.distance = stage - best;
            }
          }
        }
        s.bindings.push_back(std::move(b));
        break;
      }
      case Expr::Kind::IndexRef: {
        bool found = false;
        for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
          const Node* n = *it;
          if (n->element.kind == PathElement::Kind::Hier && n->element.replicated &&
              n->element.name == e.name) {
            found = true;
            break;
          }
        }
        if (!found) fail(e.loc, "#" + e.name + " has no enclosing replicated scope /" + e.name + "[*]");
        RefBinding b;
        b.kind = RefBinding::Kind::Index;
        b.signal = e.name;
        b.index_scope = e.name;
        b.loc = e.loc;
        s.bindings.push_back(std::move(b));
        break;
      }
      case Expr::Kind::External: {
        RefBinding b;
        b.kind = RefBinding::Kind::External;
        b.signal = e.name;
        b.loc = e.loc;
        s.bindings.push_back(std::move(b));
        break;
      }
      default:
        for (const auto& a : e.args) bind(a, s, stage, idx, path, chain);
        break;
    }
  }

  ScopeGraph& g_;
  std::map<std::string, std::set<std::vector<std::string>>> comp_subs_;
};

// ---------------------------------------------------------------------------
// serialize

std::string_view binding_kind(RefBinding::Kind k) {
  switch (k) {
    case RefBinding::Kind::Local: return "local";
    case RefBinding::Kind::StageBack: return "back";
    case RefBinding::Kind::FlowDemand: return "flow";
    case RefBinding::Kind::Index: return "index";
    case RefBinding::Kind::External: return "external";
    case RefBinding::Kind::Handshake: return "handshake";
    case RefBinding::Kind::Any: return "any";
  }
  return "?";
}

void dump_node(std::ostream& os, const Node& n, const ScopeGraph& g, int depth) {
  const std::string pad(static_cast<size_t>(std::max(depth, 0)) * 3, ' ');
  if (depth >= 0) {
    os << pad << (n.is_pipeline() ? '|' : '/') << n.element.name;
    if (n.element.replicated) os << "[*] x" << n.count << " #" << n.element.name;
    if (n.is_pipeline()) {
      os << ' ' << to_string(n.cls);
      if (n.creator >= 0) os << " by " << g.components[static_cast<size_t>(n.creator)].template_name
                             << '#' << n.creator;
    }
    os << '\n';
  }
  const std::string in(static_cast<size_t>(depth + 1) * 3, ' ');
  for (const auto& [stage, st] : n.stages) {
    os << in << '@' << stage << '\n';
    for (const auto& e : st.endpoints) {
      os << in << "   ~ " << (e.direction == ChannelEndpoint::Direction::Producer ? "produce" : "consume");
      if (e.channel >= 0) os << " ch" << e.channel;
      os << ' ' << to_string(e.handshake) << ' '
         << g.components[static_cast<size_t>(e.instance)].template_name << '#' << e.instance << '.'
         << e.port << '\n';
    }
    for (const auto& s : st.statements) {
      os << in << "   " << join_sub(s.subscope) << (s.subscope.empty() ? "" : " ")
         << (s.assign.lhs.kind == frontend::LhsRef::Kind::External ? '*' : '$') << s.assign.lhs.name;
      if (s.assign.lhs.has_range) os << '[' << s.assign.lhs.hi << ':' << s.assign.lhs.lo << ']';
      os << " = " << frontend::print_expr(s.assign.rhs) << ';';
      if (!s.bindings.empty()) {
        os << "  //";
        for (const auto& b : s.bindings) {
          os << ' ' << binding_kind(b.kind) << ':' << b.signal;
          if (b.kind == RefBinding::Kind::StageBack) os << '-' << b.distance;
        }
      }
      os << '\n';
    }
  }
  for (const auto& c : n.children) dump_node(os, c, g, depth + 1);
}

}  // namespace

ScopeGraph merge_reentrant(const std::vector<frontend::ParseTree>& trees,
                           const ElaborationOptions& opts) {
  if (opts.ports < 1) fail({}, "replication count must be at least 1");
  ScopeGraph g;
  g.ports = opts.ports;
  Merger m(g, opts.ports);
  for (const auto& t : trees) m.add(t);
  return g;
}

ScopeGraph merge_reentrant(const frontend::ParseTree& tree, const ElaborationOptions& opts) {
  return merge_reentrant(std::vector<frontend::ParseTree>{tree}, opts);
}

ScopeGraph expand_instantiations(ScopeGraph g) {
  std::vector<PendingInstantiation> pending = std::move(g.pending);
  g.pending.clear();
  int next_channel = 0;
  std::map<std::string, int> drivers;  // "path@stage" -> instance id

  for (const auto& p : pending) {
    const flowlib::ComponentTemplate* t = flowlib::find_template(p.inst.component);
    if (!t) fail(p.loc, "unknown component '" + p.inst.component + "'");
    check_signature(*t, p);

    flowlib::ExpansionContext ctx;
    ctx.instance_id = static_cast<int>(g.components.size());
    ctx.first_channel = next_channel;
    ctx.loc = p.loc;
    ctx.scope = resolve_scope_arg(g, p.site, p.inst.args[0]);
    if (t->replicated_stops) {
      const InstArg& stop_arg =
          t->kind == ComponentKind::RouterTestbench ? p.inst.args[1] : p.inst.args[0];
      ctx.stop_scope = t->kind == ComponentKind::RouterTestbench
                           ? resolve_scope_arg(g, ctx.scope, stop_arg)
                           : ctx.scope;
      if (t->kind == ComponentKind::SimpleRing) ctx.scope = p.site;
      if (ctx.stop_scope.empty() || !ctx.stop_scope.back().replicated)
        fail(stop_arg.loc, "replication count unknown: /" + stop_arg.name +
                               " is not a replicated scope");
    }

    flowlib::Fragment frag = flowlib::expand(*t, p.inst, ctx);
    for (const auto& e : frag.endpoints) next_channel = std::max(next_channel, e.channel + 1);

    for (const auto& decl : frag.pipelines) {
      Node& n = ensure_pipeline(g, decl.path, p.loc);
      if (n.creator >= 0) {
        const auto& other = g.components[static_cast<size_t>(n.creator)];
        bool chain_kind = other.kind == ComponentKind::StallPipeline ||
                          other.kind == ComponentKind::BpPipeline;
        bool this_chain = t->kind == ComponentKind::StallPipeline || t->kind == ComponentKind::BpPipeline;
        if (chain_kind && this_chain)
          fail(p.loc, "pipeline " + to_string(decl.path) + " already created by " +
                          other.template_name);
        if (this_chain) {
          n.cls = decl.cls;
          n.creator = ctx.instance_id;
        }
      } else if (n.creator < 0) {
        n.creator = ctx.instance_id;
        n.cls = decl.cls;
      }
    }
    for (const auto& port : frag.instance.ports) {
      ensure_pipeline(g, port.pipeline, p.loc).stages[port.stage];
      if (!port.drives) continue;
      std::string key = to_string(port.pipeline) + "@" + std::to_string(port.stage);
      auto [it, fresh] = drivers.emplace(key, ctx.instance_id);
      if (!fresh) {
        fail(p.loc, "flow point " + key + " is driven by both " +
                        g.components[static_cast<size_t>(it->second)].template_name + " and " +
                        t->name);
      }
    }
    for (const auto& e : frag.endpoints)
      ensure_pipeline(g, e.pipeline, p.loc).stages[e.stage].endpoints.push_back(e);
    g.components.push_back(std::move(frag.instance));
  }
  return g;
}

ScopeGraph resolve_references(ScopeGraph g) {
  RefResolver(g).run();
  return g;
}

std::string serialize(const ScopeGraph& g) {
  std::ostringstream os;
  os << "design ports=" << g.ports << '\n';
  dump_node(os, g.root, g, -1);
  for (const auto& c : g.components) {
    os << "component #" << c.id << ' ' << c.template_name << '(';
    for (size_t i = 0; i < c.args.size(); ++i) {
      const auto& a = c.args[i];
      if (i) os << ", ";
      switch (a.kind) {
        case InstArg::Kind::Scope: os << '/' << a.name; break;
        case InstArg::Kind::Pipeline: os << '|' << a.name; break;
        case InstArg::Kind::Stage: os << '@' << a.value; break;
        case InstArg::Kind::Integer: os << a.value; break;
        case InstArg::Kind::Signal: os << (a.negated ? "!$" : "$") << a.name; break;
      }
    }
    os << ") at " << (c.scope.empty() ? "/top" : to_string(c.scope));
    if (!c.stall_input.empty()) os << " stall=" << c.stall_input;
    os << '\n';
    for (const auto& p : c.ports) {
      os << "   " << (p.drives ? "drives " : "reads  ") << p.name << ' ' << to_string(p.pipeline)
         << '@' << p.stage << '\n';
    }
  }
  return os.str();
}

}  // namespace tlflow::scope
