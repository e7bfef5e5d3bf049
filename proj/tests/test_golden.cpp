#include <doctest.h>

#include <fstream>
#include <sstream>

#include "support.hpp"

using namespace tlflow;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in, "missing golden " << path << " (tools/regen_goldens.sh writes it)");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// First differing line, for a readable failure.
std::string first_difference(const std::string& a, const std::string& b) {
  std::istringstream x(a), y(b);
  std::string l, r;
  for (int line = 1;; ++line) {
    bool more_l = static_cast<bool>(std::getline(x, l)), more_r = static_cast<bool>(std::getline(y, r));
    if (!more_l && !more_r) return "";
    if (l != r || more_l != more_r)
      return "line " + std::to_string(line) + "\n  got:    " + l + "\n  golden: " + r;
  }
}

void check_golden(const std::string& got, const std::string& name) {
  auto want = slurp(testing::golden(name));
  CHECK_MESSAGE(got == want, name << ": " << first_difference(got, want));
}

}  // namespace

TEST_SUITE("golden") {
  TEST_CASE("pipelined calculation") {
    auto c = testing::compile_sources(testing::files({"pythagoras.tlv"}));
    check_golden(c.verilog.text, "pythagoras.v");
    check_golden(c.netlist_dump(), "pythagoras.netlist");
    check_golden(c.flow_dump(), "pythagoras.flow");
  }

  TEST_CASE("showcase alone") {
    auto c = testing::compile_sources(testing::files({"showcase.tlv"}));
    check_golden(c.verilog.text, "showcase.v");
    check_golden(c.expanded, "showcase.scopes");
  }

  TEST_CASE("showcase with the calculation placed along the flow") {
    auto c = testing::compile_sources(testing::files({"showcase.tlv", "pythagoras_flow.tlv"}));
    check_golden(c.verilog.text, "showcase_flow.v");
    check_golden(c.netlist_dump(), "showcase_flow.netlist");
    check_golden(c.flow_dump(), "showcase_flow.flow");
  }

  TEST_CASE("pipelined calculation netlist, checked by hand") {
    // two squares at @1, their sum at @2, the root at @3; registers between
    auto c = testing::compile_sources(testing::files({"pythagoras.tlv"}));
    const auto& d = c.netlist_dump();
    CHECK(d.find("mul 8 0 0 ; $aa_sq |calc@1") != std::string::npos);
    CHECK(d.find("mul 8 1 1 ; $bb_sq |calc@1") != std::string::npos);
    CHECK(d.find("sqrt 5 2 ; $cc |calc@3") != std::string::npos);
    CHECK(d.find("output 5 3 cc") != std::string::npos);
  }

  TEST_CASE("the outputs are stable across repeated runs") {
    auto a = testing::compile_sources(testing::files({"showcase.tlv", "pythagoras_flow.tlv"}));
    for (int k = 0; k < 2; ++k) {
      auto b = testing::compile_sources(testing::files({"showcase.tlv", "pythagoras_flow.tlv"}));
      CHECK(a.verilog.text == b.verilog.text);
      CHECK(a.netlist_dump() == b.netlist_dump());
      CHECK(a.flow_dump() == b.flow_dump());
      CHECK(a.expanded == b.expanded);
    }
  }
}
