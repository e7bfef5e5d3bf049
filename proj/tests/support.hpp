#pragma once

#include <string>
#include <vector>

#include <map>

#include "tlflow/compiler.hpp"
#include "tlflow/simulator.hpp"

namespace testing {

inline std::string corpus(const std::string& name) { return std::string(TLFLOW_SOURCE_DIR) + "/corpus/" + name; }
inline std::string golden(const std::string& name) { return std::string(TLFLOW_SOURCE_DIR) + "/tests/golden/" + name; }

inline std::vector<tlflow::SourceFile> files(std::initializer_list<const char*> names) {
  std::vector<tlflow::SourceFile> v;
  for (const char* n : names) v.push_back(tlflow::read_source(corpus(n)));
  return v;
}

inline tlflow::SourceFile text(const std::string& name, const std::string& body) { return {name, body}; }

inline tlflow::Compilation compile_text(const std::string& body, int ports = 4) {
  tlflow::CompileOptions o;
  o.ports = ports;
  return tlflow::compile({text("t.tlv", body)}, o);
}

inline tlflow::Compilation compile_sources(const std::vector<tlflow::SourceFile>& src, int ports = 4,
                                           bool swap_arb = false) {
  tlflow::CompileOptions o;
  o.ports = ports;
  o.build.swap_arb_priority = swap_arb;
  return tlflow::compile(src, o);
}

// Drives testbench ports by hand, one cycle at a time: set inputs, eval(),
// inspect, commit().
class Bench {
 public:
  explicit Bench(const tlflow::net::Netlist& n) : n_(n), s_(n) {
    for (int i : n.inputs) s_.set(i, 0);
    for (const auto& st : n.stops) s_.set(st.chk_ready, 1);
  }
  void offer(int stop, const std::map<std::string, std::uint64_t>& fields) {
    const auto& st = n_.stops.at(static_cast<size_t>(stop));
    s_.set(st.stim_valid, 1);
    for (const auto& [f, v] : fields) s_.set(st.stim_fields.at(f), v);
  }
  void withdraw(int stop) { s_.set(n_.stops.at(static_cast<size_t>(stop)).stim_valid, 0); }
  void ready(int stop, bool r) { s_.set(n_.stops.at(static_cast<size_t>(stop)).chk_ready, r ? 1 : 0); }
  void set(const std::string& input, std::uint64_t v) { s_.set(n_.find_input(input), v); }
  void eval() { s_.eval(); }
  void commit() { s_.commit(); }
  bool accepted(int stop) const {
    const auto& st = n_.stops.at(static_cast<size_t>(stop));
    return s_.get(st.stim_valid) && s_.get(st.stim_ready);
  }
  bool stim_ready(int stop) const { return s_.get(n_.stops.at(static_cast<size_t>(stop)).stim_ready) != 0; }
  bool out_valid(int stop) const { return s_.get(n_.stops.at(static_cast<size_t>(stop)).chk_valid) != 0; }
  bool delivered(int stop) const {
    const auto& st = n_.stops.at(static_cast<size_t>(stop));
    return s_.get(st.chk_valid) && s_.get(st.chk_ready);
  }
  std::uint64_t out(int stop, const std::string& f) const {
    return s_.get(n_.stops.at(static_cast<size_t>(stop)).chk_fields.at(f));
  }
  std::uint64_t cycle() const { return s_.cycle(); }
  const tlflow::sim::Simulator& sim() const { return s_; }

 private:
  const tlflow::net::Netlist& n_;
  tlflow::sim::Simulator s_;
};

}  // namespace testing
