#include "tlflow/flow_lib.hpp"

#include <sstream>

namespace tlflow::flowlib {

using K = InstArg::Kind;
using scope::ChannelEndpoint;
using scope::ComponentKind;
using scope::ComponentPort;
using scope::Handshake;
using scope::PathElement;
using scope::PipelineClass;

const std::vector<ComponentTemplate>& library() {
  static const std::vector<ComponentTemplate> lib = {
      {"stall_pipeline", ComponentKind::StallPipeline,
       {K::Scope, K::Pipeline, K::Integer, K::Integer, K::Scope}},
      {"bp_pipeline", ComponentKind::BpPipeline,
       {K::Scope, K::Pipeline, K::Integer, K::Integer, K::Scope}},
      {"simple_bypass_fifo", ComponentKind::BypassFifo,
       {K::Scope, K::Pipeline, K::Stage, K::Pipeline, K::Stage, K::Integer, K::Scope}},
      {"simple_bypass_fifo_v2", ComponentKind::BypassFifo,
       {K::Scope, K::Pipeline, K::Stage, K::Pipeline, K::Stage, K::Integer, K::Scope}},
      {"arb2", ComponentKind::Arb2,
       {K::Scope, K::Pipeline, K::Stage, K::Pipeline, K::Stage, K::Pipeline, K::Stage, K::Scope}},
      {"opportunistic_flow", ComponentKind::OpportunisticFlow,
       {K::Scope, K::Pipeline, K::Stage, K::Pipeline, K::Stage, K::Signal, K::Pipeline, K::Stage,
        K::Scope}},
      {"simple_ring", ComponentKind::SimpleRing,
       {K::Scope, K::Pipeline, K::Stage, K::Pipeline, K::Stage, K::Scope},
       true},
      {"router_testbench", ComponentKind::RouterTestbench,
       {K::Scope, K::Scope, K::Pipeline, K::Stage, K::Pipeline, K::Stage},
       true},
  };
  return lib;
}

const ComponentTemplate* find_template(std::string_view name) {
  for (const auto& t : library())
    if (t.name == name) return &t;
  return nullptr;
}

namespace {

class Builder {
 public:
  Builder(const ComponentTemplate& t, const frontend::Instantiation& inst,
          const ExpansionContext& ctx)
      : inst_(inst), ctx_(ctx), next_channel_(ctx.first_channel) {
    auto& ci = frag_.instance;
    ci.id = ctx.instance_id;
    ci.template_name = t.name;
    ci.kind = t.kind;
    ci.scope = ctx.scope;
    ci.stop_scope = ctx.stop_scope;
    ci.args = inst.args;
    ci.loc = ctx.loc;
  }

  ScopePath pipe(const ScopePath& base, const std::string& name) const {
    ScopePath p = base;
    p.push_back({PathElement::Kind::Pipeline, name, false});
    return p;
  }

  void declare(const ScopePath& p, PipelineClass cls) {
    for (const auto& d : frag_.pipelines)
      if (d.path == p) return;
    frag_.pipelines.push_back({p, cls});
  }

  void port(const std::string& name, const ScopePath& p, int stage, bool drives) {
    frag_.instance.ports.push_back({name, p, stage, drives});
  }

  // One channel: producer endpoint at `from`, consumer endpoint at `to`.
  void channel(const ScopePath& from, int fs, const ScopePath& to, int ts, Handshake hs,
               const std::string& name) {
    int id = next_channel_++;
    ChannelEndpoint a;
    a.direction = ChannelEndpoint::Direction::Producer;
    a.channel = id;
    a.pipeline = from;
    a.stage = fs;
    a.handshake = hs;
    a.instance = frag_.instance.id;
    a.port = name;
    ChannelEndpoint b = a;
    b.direction = ChannelEndpoint::Direction::Consumer;
    b.pipeline = to;
    b.stage = ts;
    frag_.endpoints.push_back(std::move(a));
    frag_.endpoints.push_back(std::move(b));
  }

  void loose_endpoint(ChannelEndpoint::Direction dir, const ScopePath& p, int stage,
                      const std::string& name) {
    ChannelEndpoint e;
    e.direction = dir;
    e.pipeline = p;
    e.stage = stage;
    e.handshake = Handshake::ReadyValid;
    e.instance = frag_.instance.id;
    e.port = name;
    frag_.endpoints.push_back(std::move(e));
  }

  const InstArg& arg(size_t i) const { return inst_.args[i]; }
  int stage_arg(size_t i) const { return static_cast<int>(arg(i).value); }
  [[noreturn]] void error(size_t i, const std::string& msg) const {
    fail(arg(i).loc.line ? arg(i).loc : ctx_.loc, msg);
  }

  void pipeline_chain(PipelineClass cls, Handshake hs) {
    auto& ci = frag_.instance;
    const std::string base = arg(1).name;
    ci.first = static_cast<int>(arg(2).value);
    ci.last = static_cast<int>(arg(3).value);
    if (ci.first < 0) error(2, "pipeline index must be >= 0");
    if (ci.last < ci.first) error(3, "last pipeline index is less than first");
    ci.trans = {arg(4).name};
    for (int i = ci.first; i <= ci.last; ++i) declare(pipe(ctx_.scope, base + std::to_string(i)), cls);
    port("in", pipe(ctx_.scope, base + std::to_string(ci.first)), 1, false);
    for (int i = ci.first; i < ci.last; ++i) {
      auto a = pipe(ctx_.scope, base + std::to_string(i));
      auto b = pipe(ctx_.scope, base + std::to_string(i + 1));
      channel(a, 1, b, 1, hs, "hop" + std::to_string(i));
      port("hop" + std::to_string(i), b, 1, true);
    }
    port("out", pipe(ctx_.scope, base + std::to_string(ci.last)), 1, false);
    if (cls == PipelineClass::Stall) ci.stall_input = base + "_stall";
  }

  Fragment run() {
    auto& ci = frag_.instance;
    const ScopePath& s = ctx_.scope;
    switch (ci.kind) {
      case ComponentKind::StallPipeline:
        pipeline_chain(PipelineClass::Stall, Handshake::Stall);
        break;
      case ComponentKind::BpPipeline:
        pipeline_chain(PipelineClass::ReadyValid, Handshake::ReadyValid);
        break;
      case ComponentKind::BypassFifo: {
        ci.depth = static_cast<int>(arg(5).value);
        if (ci.depth < 1) error(5, "FIFO depth must be at least 1");
        ci.trans = {arg(6).name};
        auto in = pipe(s, arg(1).name), out = pipe(s, arg(3).name);
        declare(in, PipelineClass::ReadyValid);
        declare(out, PipelineClass::ReadyValid);
        port("in", in, stage_arg(2), false);
        port("out", out, stage_arg(4), true);
        channel(in, stage_arg(2), out, stage_arg(4), Handshake::ReadyValid, "queue");
        break;
      }
      case ComponentKind::Arb2: {
        ci.trans = {arg(7).name};
        auto in1 = pipe(s, arg(1).name), in2 = pipe(s, arg(3).name), out = pipe(s, arg(5).name);
        for (const auto* p : {&in1, &in2, &out}) declare(*p, PipelineClass::ReadyValid);
        port("in1", in1, stage_arg(2), false);
        port("in2", in2, stage_arg(4), false);
        port("out", out, stage_arg(6), true);
        channel(in1, stage_arg(2), out, stage_arg(6), Handshake::ReadyValid, "in1");
        channel(in2, stage_arg(4), out, stage_arg(6), Handshake::ReadyValid, "in2");
        break;
      }
      case ComponentKind::OpportunisticFlow: {
        ci.trans = {arg(8).name};
        ci.condition = arg(5).name;
        ci.condition_negated = arg(5).negated;
        auto in = pipe(s, arg(1).name), taken = pipe(s, arg(3).name), main = pipe(s, arg(6).name);
        for (const auto* p : {&in, &taken, &main}) declare(*p, PipelineClass::ReadyValid);
        port("in", in, stage_arg(2), false);
        port("taken", taken, stage_arg(4), true);
        port("main", main, stage_arg(7), true);
        channel(in, stage_arg(2), taken, stage_arg(4), Handshake::ReadyValid, "taken");
        channel(in, stage_arg(2), main, stage_arg(7), Handshake::ReadyValid, "main");
        break;
      }
      case ComponentKind::SimpleRing: {
        ci.trans = {arg(5).name};
        auto in = pipe(ctx_.stop_scope, arg(1).name), out = pipe(ctx_.stop_scope, arg(3).name);
        declare(in, PipelineClass::ReadyValid);
        declare(out, PipelineClass::ReadyValid);
        port("in", in, stage_arg(2), false);
        port("out", out, stage_arg(4), true);
        channel(in, stage_arg(2), out, stage_arg(4), Handshake::RingHop, "ring");
        break;
      }
      case ComponentKind::RouterTestbench: {
        ci.trans = {"trans"};  // refined by the flow resolver from the neighbouring components
        auto in = pipe(ctx_.stop_scope, arg(2).name), out = pipe(ctx_.stop_scope, arg(4).name);
        declare(in, PipelineClass::ReadyValid);
        declare(out, PipelineClass::ReadyValid);
        port("in", in, stage_arg(3), true);
        port("out", out, stage_arg(5), false);
        loose_endpoint(ChannelEndpoint::Direction::Consumer, in, stage_arg(3), "stimulus");
        loose_endpoint(ChannelEndpoint::Direction::Producer, out, stage_arg(5), "checker");
        break;
      }
    }
    return std::move(frag_);
  }

 private:
  const frontend::Instantiation& inst_;
  const ExpansionContext& ctx_;
  int next_channel_;
  Fragment frag_;
};

}  // namespace

Fragment expand(const ComponentTemplate& t, const frontend::Instantiation& inst,
                const ExpansionContext& ctx) {
  return Builder(t, inst, ctx).run();
}

}  // namespace tlflow::flowlib
