#include <deque>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "tlflow/simulator.hpp"

namespace tlflow::sim {

namespace {

constexpr size_t kMaxMessages = 20;

// One independent stream per (seed, stop, purpose) so stimulus does not
// depend on how the design reacts to it.
class Stream {
 public:
  Stream(std::uint64_t seed, int stop, int purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stop), static_cast<std::uint32_t>(purpose)};
    rng_.seed(seq);
  }
  bool bernoulli(double p) { return static_cast<double>(rng_() >> 11) * 0x1.0p-53 < p; }
  std::uint64_t uniform(std::uint64_t n) { return n ? rng_() % n : 0; }
  std::uint64_t bits(int w) { return rng_() & net::mask(w); }

 private:
  std::mt19937_64 rng_;
};

struct Harness {
  const net::Netlist& n;
  const StimulusConfig& cfg;
  Simulator sim;
  RunResult res;
  std::vector<Stream> gen, bp;
  std::vector<std::deque<TransactionRecord>> queues;
  std::map<std::uint64_t, TransactionRecord> live;  // injected, keyed by tag
  std::map<std::pair<int, std::uint64_t>, std::uint64_t> last_tag;  // (src, dest) -> last delivered tag
  std::uint64_t next_tag = 1;
  std::uint64_t injected = 0, delivered = 0;
  std::uint64_t hash = 1469598103934665603ull;
  int ports;

  Harness(const net::Netlist& nl, const StimulusConfig& c) : n(nl), cfg(c), sim(nl) {
    ports = static_cast<int>(n.stops.size());
    for (int k = 0; k < ports; ++k) {
      gen.emplace_back(cfg.seed, k, 0);
      bp.emplace_back(cfg.seed, k, 1);
    }
    queues.resize(static_cast<size_t>(ports));
    res.perf.stops.resize(static_cast<size_t>(ports));
  }

  void violation(const std::string& msg) {
    ++res.violation_count;
    if (res.violations.size() < kMaxMessages)
      res.violations.push_back("cycle " + std::to_string(sim.cycle()) + ": " + msg);
  }

  void generate(int k) {
    auto& g = gen[static_cast<size_t>(k)];
    if (!g.bernoulli(cfg.p)) return;
    TransactionRecord r;
    r.tag = next_tag++;
    r.source = k;
    r.dest = g.uniform(static_cast<std::uint64_t>(ports));
    for (const auto& [f, w] : n.gen_widths) r.payload[f] = g.bits(w);
    r.created = sim.cycle();
    queues[static_cast<size_t>(k)].push_back(std::move(r));
  }

  void drive(bool offering) {
    for (int k = 0; k < ports; ++k) {
      const auto& sp = n.stops[static_cast<size_t>(k)];
      auto& q = queues[static_cast<size_t>(k)];
      bool v = offering && !q.empty();
      sim.set(sp.stim_valid, v);
      for (const auto& [f, id] : sp.stim_fields) {
        std::uint64_t x = 0;
        if (v) {
          const auto& head = q.front();
          x = f == "tag" ? head.tag : f == "dest" ? head.dest : head.payload.at(f);
        }
        sim.set(id, x);
      }
      bool ready = cfg.q <= 0.0 ? true : !bp[static_cast<size_t>(k)].bernoulli(cfg.q);
      sim.set(sp.chk_ready, ready);
    }
  }

  std::uint64_t occupancy() const {
    std::uint64_t s = 0;
    for (const auto& t : n.occupancy) s += sim.get(t.node);
    return s;
  }

  void observe() {
    const std::uint64_t cyc = sim.cycle();
    for (int k = 0; k < ports; ++k) {
      const auto& sp = n.stops[static_cast<size_t>(k)];
      auto& st = res.perf.stops[static_cast<size_t>(k)];
      if (sim.get(sp.stim_valid) && sim.get(sp.stim_ready)) {
        auto& q = queues[static_cast<size_t>(k)];
        TransactionRecord r = std::move(q.front());
        q.pop_front();
        r.injected = static_cast<std::int64_t>(cyc);
        ++st.injected;
        ++injected;
        live.emplace(r.tag, std::move(r));
      }
      if (sim.get(sp.chk_valid) && sim.get(sp.chk_ready)) deliver(k, cyc);
    }
    // arb2 handshake discipline
    std::map<std::string, std::map<std::string, std::uint64_t>> arbs;
    for (const auto& p : n.probes) {
      std::uint64_t v = sim.get(p.node);
      auto& st = res.perf.stops[static_cast<size_t>(std::max(p.stop, 0)) % res.perf.stops.size()];
      if (p.kind == "opp.take") st.bypass_taken += v;
      else if (p.kind == "opp.forced") st.forced_onto_ring += v;
      else if (p.kind == "opp.local") st.locally_destined += v;
      else if (p.kind.rfind("arb.", 0) == 0) arbs[p.comp][p.kind] = v;
    }
    for (const auto& [name, a] : arbs) {
      auto get = [&](const char* k) { auto it = a.find(k); return it == a.end() ? 0 : it->second; };
      std::uint64_t v1 = get("arb.v1"), t1 = get("arb.t1"), t2 = get("arb.t2"), rdy = get("arb.ready");
      std::string err;
      if (t1 && t2) err = "both inputs transferred";
      else if ((t1 || t2) && !rdy) err = "transfer while the output is not ready";
      else if (v1 && t2) err = "second input won over a valid first input";
      if (!err.empty()) {
        ++res.protocol_violations;
        violation(name + ": " + err);
      }
    }
  }

  void deliver(int k, std::uint64_t cyc) {
    const auto& sp = n.stops[static_cast<size_t>(k)];
    auto& st = res.perf.stops[static_cast<size_t>(k)];
    ++st.delivered;
    ++delivered;
    auto fetch = [&](const std::string& f) {
      auto it = sp.chk_fields.find(f);
      return it == sp.chk_fields.end() ? std::uint64_t{0} : sim.get(it->second);
    };
    std::uint64_t tag = fetch("tag");
    auto it = live.find(tag);
    if (it == live.end()) {
      violation("stop " + std::to_string(k) + " delivered unknown tag " + std::to_string(tag));
      return;
    }
    TransactionRecord& r = it->second;
    if (!r.delivery_cycles.empty()) violation("tag " + std::to_string(tag) + " delivered twice");
    if (r.dest != static_cast<std::uint64_t>(k))
      violation("tag " + std::to_string(tag) + " for port " + std::to_string(r.dest) + " delivered at port " +
                std::to_string(k));
    if (fetch("dest") != r.dest)
      violation("tag " + std::to_string(tag) + " arrived with $dest " + std::to_string(fetch("dest")) +
                ", injected with " + std::to_string(r.dest));
    auto key = std::make_pair(r.source, r.dest);
    auto lt = last_tag.find(key);
    if (lt != last_tag.end() && lt->second > tag)
      violation("tag " + std::to_string(tag) + " from " + std::to_string(r.source) + " to " +
                std::to_string(r.dest) + " overtook tag " + std::to_string(lt->second));
    last_tag[key] = std::max(lt == last_tag.end() ? 0 : lt->second, tag);
    if (r.delivery_cycles.empty()) {
      for (const auto& [f, id] : sp.chk_fields) r.delivered[f] = sim.get(id);
      for (const auto& [f, v] : r.payload) {
        auto d = r.delivered.find(f);
        if (d != r.delivered.end() && d->second != v)
          violation("tag " + std::to_string(tag) + " field $" + f + " changed in flight");
      }
      st.latency_sum += cyc - static_cast<std::uint64_t>(r.injected);
    }
    r.delivery_cycles.push_back(cyc);
    r.delivery_ports.push_back(k);
  }

  void fold_hash() {
    for (int id : n.outputs) {
      std::uint64_t v = sim.get(id);
      for (int b = 0; b < 8; ++b) {
        hash ^= (v >> (8 * b)) & 0xff;
        hash *= 1099511628211ull;
      }
    }
  }

  void cycle(bool offering, bool generating, VcdWriter* vcd) {
    if (generating)
      for (int k = 0; k < ports; ++k) generate(k);
    drive(offering);
    sim.eval();
    if (vcd) vcd->sample(sim);
    observe();
    fold_hash();
    sim.commit();
    std::uint64_t in_flight = injected - delivered;
    res.perf.max_in_flight = std::max(res.perf.max_in_flight, in_flight);
    std::uint64_t occ = occupancy();
    if (occ != in_flight) {
      ++res.conservation_violations;
      violation("conservation: " + std::to_string(in_flight) + " in flight, components hold " +
                std::to_string(occ));
    }
  }

  RunResult go() {
    if (n.stops.empty()) throw std::invalid_argument("design has no router testbench");
    std::ofstream vcd_file;
    std::unique_ptr<VcdWriter> vcd;
    if (!cfg.vcd_path.empty()) {
      vcd_file.open(cfg.vcd_path);
      vcd = std::make_unique<VcdWriter>(vcd_file, n);
    }
    for (std::uint64_t c = 0; c < cfg.cycles; ++c) cycle(true, true, vcd.get());
    if (cfg.drain) {
      std::uint64_t waited = 0;
      while (injected != delivered && waited < cfg.drain_timeout) {
        cycle(false, false, vcd.get());
        ++waited;
      }
      res.perf.drain_cycles = waited;
      if (injected != delivered) {
        res.drain_timeout = true;
        std::ostringstream os;
        os << "drain timeout after " << waited << " cycles: " << injected - delivered << " in flight; stuck tags";
        int shown = 0;
        for (const auto& [tag, r] : live)
          if (r.delivery_cycles.empty() && shown++ < 8) os << ' ' << tag;
        os << "; holding:";
        for (const auto& t : n.occupancy)
          if (sim.get(t.node)) os << ' ' << t.what;
        violation(os.str());
      }
      for (const auto& [tag, r] : live)
        if (r.delivery_cycles.empty() && !res.drain_timeout)
          violation("tag " + std::to_string(tag) + " never delivered");
    }
    res.perf.cycles = sim.cycle();
    res.trace_hash = hash;
    for (auto& [tag, r] : live) res.records.push_back(std::move(r));
    return std::move(res);
  }
};

}  // namespace

std::string RunResult::log() const {
  std::ostringstream os;
  for (const auto& r : records) {
    os << r.tag << ' ' << r.source << ' ' << r.dest << ' ' << r.injected << ' ';
    if (r.delivery_cycles.empty()) os << '-';
    else os << r.delivery_cycles.front();
    for (const auto& [f, v] : r.delivered)
      if (f != "tag" && f != "dest") os << ' ' << f << '=' << v;
    os << '\n';
  }
  return os.str();
}

std::string RunResult::summary() const {
  std::ostringstream os;
  os << "cycles " << perf.cycles << " (drain " << perf.drain_cycles << ")\n";
  os << "stop  injected  delivered  bypass  forced  local  avg_latency\n";
  for (size_t k = 0; k < perf.stops.size(); ++k) {
    const auto& s = perf.stops[k];
    double avg = s.delivered ? static_cast<double>(s.latency_sum) / static_cast<double>(s.delivered) : 0.0;
    os << k << "     " << s.injected << "  " << s.delivered << "  " << s.bypass_taken << "  " << s.forced_onto_ring
       << "  " << s.locally_destined << "  " << avg << '\n';
  }
  os << "violations " << violation_count << " (conservation " << conservation_violations << ", protocol "
     << protocol_violations << ")\n";
  for (const auto& v : violations) os << "  " << v << '\n';
  return os.str();
}

RunResult run(const net::Netlist& n, const StimulusConfig& cfg) { return Harness(n, cfg).go(); }

Verdict check_equivalence(const net::Netlist& a, const net::Netlist& b, const StimulusConfig& cfg) {
  auto iface = [](const net::Netlist& n) {
    std::ostringstream os;
    os << n.stops.size() << ':';
    for (const auto& [f, w] : n.gen_widths) os << f << '/' << w << ',';
    if (!n.stops.empty())
      for (const auto& [f, id] : n.stops[0].chk_fields) os << f << '/' << n.nodes[static_cast<size_t>(id)].width << ';';
    return os.str();
  };
  if (iface(a) != iface(b))
    throw std::invalid_argument("interface mismatch: " + iface(a) + " vs " + iface(b));
  RunResult ra = run(a, cfg), rb = run(b, cfg);
  Verdict v;
  auto note = [&](const std::string& msg) {
    ++v.divergent;
    if (v.first_divergence.empty()) v.first_divergence = msg;
  };
  std::map<std::uint64_t, const TransactionRecord*> mb;
  for (const auto& r : rb.records) mb[r.tag] = &r;
  std::map<std::pair<int, std::uint64_t>, std::vector<std::uint64_t>> oa, ob;
  auto order = [](const RunResult& r, auto& out) {
    std::vector<std::pair<std::uint64_t, const TransactionRecord*>> by_cycle;
    for (const auto& t : r.records)
      if (!t.delivery_cycles.empty()) by_cycle.push_back({t.delivery_cycles.front(), &t});
    std::stable_sort(by_cycle.begin(), by_cycle.end(),
                     [](const auto& x, const auto& y) { return x.first < y.first; });
    for (const auto& [c, t] : by_cycle) out[{t->source, t->dest}].push_back(t->tag);
  };
  order(ra, oa);
  order(rb, ob);
  for (const auto& r : ra.records) {
    auto it = mb.find(r.tag);
    if (it == mb.end()) {
      note("tag " + std::to_string(r.tag) + " was injected only into the first design");
      continue;
    }
    ++v.compared;
    if (r.delivered != it->second->delivered) {
      std::ostringstream os;
      os << "tag " << r.tag << " delivered different fields:";
      for (const auto& [f, x] : r.delivered) {
        auto y = it->second->delivered.find(f);
        if (y == it->second->delivered.end() || y->second != x)
          os << " $" << f << ' ' << x << " vs " << (y == it->second->delivered.end() ? std::string("-") : std::to_string(y->second));
      }
      note(os.str());
    }
    mb.erase(it);
  }
  for (const auto& [tag, r] : mb) note("tag " + std::to_string(tag) + " was injected only into the second design");
  if (oa != ob) note("per-(source, dest) delivery order differs");
  if (!ra.ok()) note("first design failed its run checks: " + (ra.violations.empty() ? "" : ra.violations.front()));
  if (!rb.ok()) note("second design failed its run checks: " + (rb.violations.empty() ? "" : rb.violations.front()));
  v.equivalent = v.divergent == 0;
  return v;
}

}  // namespace tlflow::sim
