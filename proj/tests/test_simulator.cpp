#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "support.hpp"

using namespace tlflow;
using net::Op;

namespace {

net::Netlist toggle() {
  net::Netlist n;
  int r = n.add({Op::Reg, 1, {}, 0, 0, "q", "", "g"});
  int x = n.add({Op::Not, 1, {r}, 0, 0, "nq", "", ""});
  n.nodes[static_cast<size_t>(r)].args = {x};
  n.output("q_out", r);
  return n;
}

// Independent oracle: largest r with r*r <= x, by long double and a fix-up.
std::uint64_t root_oracle(std::uint64_t x) {
  auto r = static_cast<std::uint64_t>(std::sqrt(static_cast<long double>(x)));
  while (r > 0 && (r > 0xFFFFFFFFull || r * r > x)) --r;
  while (r + 1 <= 0xFFFFFFFFull && (r + 1) * (r + 1) <= x) ++r;
  return r;
}

sim::StimulusConfig config(std::uint64_t seed, std::uint64_t cycles, double q = 0.0) {
  sim::StimulusConfig cfg;
  cfg.seed = seed;
  cfg.cycles = cycles;
  cfg.q = q;
  return cfg;
}

}  // namespace

TEST_SUITE("simulator") {
  TEST_CASE("a register toggles 0,1,0,1 after reset") {
    auto n = toggle();
    sim::Simulator s(n);
    int out = n.find_output("q_out");
    std::vector<std::uint64_t> seen;
    for (int k = 0; k < 4; ++k) {
      s.eval();
      seen.push_back(s.get(out));
      s.commit();
    }
    CHECK(seen == std::vector<std::uint64_t>{0, 1, 0, 1});
    CHECK(s.cycle() == 4);
  }

  TEST_CASE("functional step matches the stepper") {
    auto n = toggle();
    auto st = sim::initial_state(n);
    sim::Simulator s(n);
    for (int k = 0; k < 5; ++k) {
      st = sim::step(st, n);
      s.step();
      CHECK(st.values == s.values());
    }
    CHECK(st.cycle == 5);
  }

  TEST_CASE("pipelined calculation: result two cycles after the inputs") {
    auto c = testing::compile_sources(testing::files({"pythagoras.tlv"}));
    const auto& n = c.netlist;
    sim::Simulator s(n);
    int aa = n.find_input("aa"), bb = n.find_input("bb"), cc = n.find_output("cc");
    std::vector<std::pair<int, int>> in = {{3, 4}, {15, 15}, {0, 0}, {5, 12}, {1, 1}};
    std::vector<std::uint64_t> out;
    for (size_t k = 0; k < in.size() + 2; ++k) {
      s.set(aa, k < in.size() ? in[k].first : 0);
      s.set(bb, k < in.size() ? in[k].second : 0);
      s.eval();
      out.push_back(s.get(cc));
      s.commit();
    }
    CHECK(out[2] == 5);
    CHECK(out[3] == 21);
    CHECK(out[4] == 0);
    CHECK(out[5] == 13);
    CHECK(out[6] == 1);
  }

  TEST_CASE("integer square root against an independent oracle") {
    for (std::uint64_t x = 0; x < 70000; ++x) REQUIRE(sim::isqrt(x) == root_oracle(x));
    std::mt19937_64 rng(9);
    for (int k = 0; k < 20000; ++k) {
      std::uint64_t x = rng() >> (rng() % 64);
      CAPTURE(x);
      REQUIRE(sim::isqrt(x) == root_oracle(x));
    }
    for (std::uint64_t x : {~0ull, 0xFFFFFFFE00000001ull, 0xFFFFFFFE00000000ull, 1ull << 63})
      CHECK(sim::isqrt(x) == root_oracle(x));
  }

  TEST_CASE("node evaluation masks to the node width") {
    net::Node add{Op::Add, 4, {0, 1}, 0, 0, "", "", ""};
    std::uint64_t a[] = {15, 1};
    CHECK(sim::eval_node(add, a) == 0);
    net::Node sub{Op::Sub, 4, {0, 1}, 0, 0, "", "", ""};
    std::uint64_t b[] = {0, 1};
    CHECK(sim::eval_node(sub, b) == 15);
    net::Node lt{Op::Lt, 1, {0, 1}, 0, 0, "", "", ""};
    std::uint64_t c[] = {3, 200};
    CHECK(sim::eval_node(lt, c) == 1);
    net::Node sl{Op::Slice, 3, {0}, 0, 2, "", "", ""};
    std::uint64_t d[] = {0b1101100};
    CHECK(sim::eval_node(sl, d) == 0b011);
    net::Node mux{Op::Mux, 8, {0, 1, 2}, 0, 0, "", "", ""};
    std::uint64_t e[] = {2, 7, 9};
    CHECK(sim::eval_node(mux, e) == 7);
  }

  TEST_CASE("zero cycles without drain produce nothing") {
    auto c = testing::compile_sources(testing::files({"showcase.tlv"}));
    auto cfg = config(1, 0);
    cfg.drain = false;
    auto r = sim::run(c.netlist, cfg);
    CHECK(r.records.empty());
    CHECK(r.perf.cycles == 0);
    CHECK(r.ok());
    CHECK(r.log().empty());
  }

  TEST_CASE("runs are deterministic per seed") {
    auto c = testing::compile_sources(testing::files({"showcase.tlv", "pythagoras_flow.tlv"}));
    auto a = sim::run(c.netlist, config(4, 1500, 0.2));
    auto b = sim::run(c.netlist, config(4, 1500, 0.2));
    auto d = sim::run(c.netlist, config(5, 1500, 0.2));
    CHECK(a.trace_hash == b.trace_hash);
    CHECK(a.log() == b.log());
    CHECK(a.summary() == b.summary());
    CHECK(a.trace_hash != d.trace_hash);
  }

  TEST_CASE("every delivered root matches the squares it was injected with") {
    auto c = testing::compile_sources(testing::files({"showcase.tlv", "pythagoras_flow.tlv"}));
    auto r = sim::run(c.netlist, config(8, 3000, 0.3));
    REQUIRE(r.ok());
    REQUIRE(!r.records.empty());
    for (const auto& t : r.records) {
      REQUIRE(t.delivery_cycles.size() == 1);
      CHECK(t.delivery_ports.front() == static_cast<int>(t.dest));
      auto aa = t.payload.at("aa"), bb = t.payload.at("bb");
      CHECK(t.delivered.at("cc") == root_oracle(aa * aa + bb * bb));
      CHECK(t.delivered.at("tag") == t.tag);
      CHECK(t.delivery_cycles.front() > static_cast<std::uint64_t>(t.injected));
    }
  }

  TEST_CASE("locally destined traffic takes the bypass or is forced onto the ring") {
    auto c = testing::compile_sources(testing::files({"showcase.tlv"}));
    for (double q : {0.0, 0.5}) {
      auto r = sim::run(c.netlist, config(2, 4000, q));
      REQUIRE(r.ok());
      std::uint64_t forced = 0, bypass = 0;
      for (const auto& s : r.perf.stops) {
        CHECK(s.bypass_taken + s.forced_onto_ring == s.locally_destined);
        forced += s.forced_onto_ring;
        bypass += s.bypass_taken;
      }
      CHECK(bypass > 0);
      if (q > 0) CHECK(forced > 0);
    }
  }

  TEST_CASE("waveform file lists every port and register") {
    auto c = testing::compile_sources(testing::files({"pythagoras.tlv"}));
    std::ostringstream os;
    sim::VcdWriter w(os, c.netlist, "pythagoras");
    sim::Simulator s(c.netlist);
    for (int k = 0; k < 4; ++k) {
      s.set(c.netlist.find_input("aa"), static_cast<std::uint64_t>(k));
      s.eval();
      w.sample(s);
      s.commit();
    }
    auto v = os.str();
    CHECK(v.find("$scope module pythagoras $end") != std::string::npos);
    CHECK(v.find("$enddefinitions $end") != std::string::npos);
    for (const char* p : {" aa ", " bb ", " cc "}) CHECK(v.find(p) != std::string::npos);
    CHECK(v.find("#3") != std::string::npos);
    size_t vars = 0;
    for (size_t p = 0; (p = v.find("$var", p)) != std::string::npos; ++p) ++vars;
    CHECK(vars == c.netlist.inputs.size() + c.netlist.outputs.size() + c.netlist.regs.size());
  }

  TEST_CASE("equivalence checking") {
    auto flow = testing::compile_sources(testing::files({"showcase.tlv", "pythagoras_flow.tlv"}));
    auto early = testing::compile_sources(testing::files({"showcase.tlv", "pythagoras_early.tlv"}));
    auto cfg = config(6, 2000, 0.3);

    SUBCASE("a design is equivalent to itself") {
      auto v = sim::check_equivalence(flow.netlist, flow.netlist, cfg);
      CHECK(v.equivalent);
      CHECK(v.compared > 0);
    }
    SUBCASE("early and late placement agree") {
      auto v = sim::check_equivalence(early.netlist, flow.netlist, cfg);
      CHECK(v.equivalent);
      CHECK(v.divergent == 0);
      CHECK(v.compared > 1000);
    }
    SUBCASE("a changed operator is caught") {
      auto src = testing::files({"showcase.tlv", "pythagoras_flow.tlv"});
      auto& t = src[1].text;
      t.replace(t.find("$aa_sq + $bb_sq"), 15, "$aa_sq - $bb_sq");
      auto bad = testing::compile_sources(src);
      auto v = sim::check_equivalence(flow.netlist, bad.netlist, cfg);
      CHECK_FALSE(v.equivalent);
      CHECK(v.divergent > 0);
      CHECK(!v.first_divergence.empty());
    }
    SUBCASE("different interfaces are rejected") {
      auto plain = testing::compile_sources(testing::files({"showcase.tlv"}));
      CHECK_THROWS_AS(sim::check_equivalence(plain.netlist, flow.netlist, cfg), std::invalid_argument);
    }
  }

  TEST_CASE("a misrouting comparison is reported") {
    auto src = testing::files({"showcase.tlv"});
    auto& t = src[0].text;
    auto at = t.find("!=");
    REQUIRE(at != std::string::npos);
    t.replace(at, 2, "==");
    auto c = testing::compile_sources(src);
    auto r = sim::run(c.netlist, config(1, 2000));
    CHECK_FALSE(r.ok());
    CHECK(r.violation_count > 0);
  }

  TEST_CASE("swapped arbiter priority is reported") {
    auto c = testing::compile_sources(testing::files({"showcase.tlv"}), 4, true);
    auto r = sim::run(c.netlist, config(1, 4000, 0.3));
    CHECK_FALSE(r.ok());
    CHECK(r.protocol_violations > 0);
  }
}
