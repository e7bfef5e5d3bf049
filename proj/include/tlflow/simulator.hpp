#pragma once

// Two-phase cycle simulation of a Netlist, plus the router testbench:
// seeded stimulus, exactly-once/order checking, performance counters and
// transaction-level equivalence of two netlists.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tlflow/netlist.hpp"

namespace tlflow::sim {

/// floor(sqrt(x)) by the bit-pair restoring method (same algorithm as the
/// emitted Verilog function).
std::uint64_t isqrt(std::uint64_t x);

/// One node evaluation with already-masked operand values.
std::uint64_t eval_node(const net::Node& n, const std::uint64_t* args);

struct SimState {
  std::uint64_t cycle = 0;
  std::vector<std::uint64_t> values;  // per node; inputs are set by the caller
};

SimState initial_state(const net::Netlist& n);

/// Phase 1 settles every combinational node from inputs and register
/// outputs; phase 2 commits all registers at once. Cycle advances by one.
SimState step(SimState state, const net::Netlist& n);

/// Reusable stepper with the evaluation order computed once.
class Simulator {
 public:
  explicit Simulator(const net::Netlist& n);

  void set(int input, std::uint64_t v);
  std::uint64_t get(int node) const { return v_[static_cast<size_t>(node)]; }
  void eval();    // phase 1
  void commit();  // phase 2
  void step() { eval(); commit(); }
  std::uint64_t cycle() const { return cycle_; }
  const net::Netlist& netlist() const { return n_; }
  const std::vector<std::uint64_t>& values() const { return v_; }

 private:
  struct Flat {
    net::Op op;
    int width;
    std::uint64_t mask;
    int a = -1, b = -1, c = -1;
    int lo = 0;
  };
  const net::Netlist& n_;
  std::vector<int> order_;
  std::vector<Flat> flat_;
  std::vector<std::uint64_t> v_;
  std::vector<std::uint64_t> next_;
  std::uint64_t cycle_ = 0;
};

/// VCD dump of inputs, outputs and registers.
class VcdWriter {
 public:
  VcdWriter(std::ostream& os, const net::Netlist& n, const std::string& module = "top");
  void sample(const Simulator& s);

 private:
  std::ostream& os_;
  std::vector<int> ids_;
  std::vector<std::string> codes_;
  std::vector<std::uint64_t> last_;
  bool first_ = true;
};

// ------------------------------------------------------------------ testbench

struct StimulusConfig {
  std::uint64_t cycles = 10000;
  std::uint64_t seed = 1;
  double p = 0.5;  // injection probability per stop per cycle
  double q = 0.0;  // probability a checker deasserts ready in a cycle
  bool drain = true;
  std::uint64_t drain_timeout = 20000;
  std::string vcd_path;  // empty: no waveform
};

struct TransactionRecord {
  std::uint64_t tag = 0;
  int source = -1;
  std::uint64_t dest = 0;
  std::map<std::string, std::uint64_t> payload;  // generated fields
  std::uint64_t created = 0;
  std::int64_t injected = -1;  // cycle the design accepted it
  std::vector<std::uint64_t> delivery_cycles;
  std::vector<int> delivery_ports;
  std::map<std::string, std::uint64_t> delivered;  // checker-visible fields at first delivery
};

struct StopCounters {
  std::uint64_t injected = 0, delivered = 0;
  std::uint64_t bypass_taken = 0, forced_onto_ring = 0, locally_destined = 0;
  std::uint64_t latency_sum = 0;
};

struct PerfCounters {
  std::vector<StopCounters> stops;
  std::uint64_t cycles = 0;        // including drain
  std::uint64_t drain_cycles = 0;
  std::uint64_t max_in_flight = 0;
};

struct RunResult {
  std::vector<TransactionRecord> records;  // injected transactions, by tag
  PerfCounters perf;
  std::vector<std::string> violations;     // first few messages
  std::uint64_t violation_count = 0;
  std::uint64_t conservation_violations = 0;
  std::uint64_t protocol_violations = 0;
  bool drain_timeout = false;
  std::uint64_t trace_hash = 0;  // FNV-1a over every output, every cycle

  bool ok() const { return violation_count == 0; }
  /// `tag src dest inject_cycle deliver_cycle fields...`, one line each.
  std::string log() const;
  std::string summary() const;
};

/// Drives the netlist's testbench ports. Requires netlist stops.
RunResult run(const net::Netlist& n, const StimulusConfig& cfg);

struct Verdict {
  bool equivalent = false;
  std::size_t compared = 0;
  std::size_t divergent = 0;
  std::string first_divergence;
};

/// Same stimulus into both; compares per-tag delivered fields and each
/// (source, dest) delivery order. Cycle numbers are ignored. Throws
/// std::invalid_argument when the two testbench interfaces differ.
Verdict check_equivalence(const net::Netlist& a, const net::Netlist& b, const StimulusConfig& cfg);

}  // namespace tlflow::sim
