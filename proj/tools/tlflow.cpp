// tlflow command line: compile, simulate and inspect TL-Verilog flow designs.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <random>

#include "tlflow/compiler.hpp"
#include "tlflow/simulator.hpp"

using namespace tlflow;

namespace {

struct Common {
  std::vector<std::string> files;
  int ports = 4;
  std::string module;
  bool swap_arb = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("files", c.files, "TL-Verilog sources, merged in order")->required()->check(CLI::ExistingFile);
  app->add_option("--ports", c.ports, "replication count for [*] scopes")->check(CLI::Range(1, 64));
  app->add_option("--module", c.module, "Verilog module name (default: first file's stem)");
  app->add_flag("--swap-arb-priority", c.swap_arb, "mutation: arbiters favour the bypass input");
  app->fallthrough();  // --config belongs to the top-level app
}

// CLI11 reads config files on the top-level app only. Keys outside any
// [section] are given to whichever subcommand was invoked.
class SubcommandConfig : public CLI::ConfigINI {
 public:
  explicit SubcommandConfig(const CLI::App* app) : app_(app) {}
  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    auto items = CLI::ConfigINI::from_config(in);
    auto subs = app_->get_subcommands();
    if (subs.empty()) return items;
    for (auto& item : items)
      if (item.parents.empty() && item.name != "++" && item.name != "--") item.parents = {subs.front()->get_name()};
    return items;
  }

 private:
  const CLI::App* app_;
};

std::vector<SourceFile> load(const Common& c) {
  std::vector<SourceFile> v;
  for (const auto& f : c.files) v.push_back(read_source(f));
  return v;
}

CompileOptions options(const Common& c) {
  CompileOptions o;
  o.ports = c.ports;
  o.module = c.module;
  o.build.swap_arb_priority = c.swap_arb;
  return o;
}

void write_out(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

// Designs without a router testbench: random inputs, hash of all outputs.
int sim_plain(const net::Netlist& n, const sim::StimulusConfig& cfg, bool log) {
  sim::Simulator s(n);
  std::mt19937_64 rng(cfg.seed);
  std::ofstream vcd_file;
  std::unique_ptr<sim::VcdWriter> vcd;
  if (!cfg.vcd_path.empty()) {
    vcd_file.open(cfg.vcd_path);
    vcd = std::make_unique<sim::VcdWriter>(vcd_file, n);
  }
  std::uint64_t h = 1469598103934665603ull;
  for (std::uint64_t c = 0; c < cfg.cycles; ++c) {
    for (int i : n.inputs) s.set(i, rng());
    s.eval();
    if (vcd) vcd->sample(s);
    if (log) {
      std::cout << c;
      for (int i : n.inputs) std::cout << ' ' << n.nodes[static_cast<size_t>(i)].name << '=' << s.get(i);
      for (int o : n.outputs) std::cout << ' ' << n.nodes[static_cast<size_t>(o)].name << '=' << s.get(o);
      std::cout << '\n';
    }
    for (int o : n.outputs) {
      h ^= s.get(o);
      h *= 1099511628211ull;
    }
    s.commit();
  }
  std::cout << "cycles=" << cfg.cycles << "\ntrace_hash=" << std::hex << h << std::dec << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tlflow: transaction-flow TL-Verilog compiler and simulator"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value file with option values; flags win");
  app.config_formatter(std::make_shared<SubcommandConfig>(&app));
  app.allow_config_extras(CLI::config_extras_mode::error);

  Common common;
  std::string out_path;
  auto* compile_cmd = app.add_subcommand("compile", "emit Verilog");
  add_common(compile_cmd, common);
  compile_cmd->add_option("-o,--output", out_path, "output file (default stdout)");

  sim::StimulusConfig cfg;
  bool log = false, no_drain = false;
  std::string other;
  auto* sim_cmd = app.add_subcommand("sim", "simulate with the built-in testbench");
  add_common(sim_cmd, common);
  sim_cmd->add_option("--cycles", cfg.cycles, "stimulus cycles");
  sim_cmd->add_option("--seed", cfg.seed, "stimulus seed");
  sim_cmd->add_option("--p,--injection", cfg.p, "injection probability per stop per cycle")->check(CLI::Range(0.0, 1.0));
  sim_cmd->add_option("--q,--random-backpressure", cfg.q, "probability a sink withholds ready")->check(CLI::Range(0.0, 1.0));
  sim_cmd->add_option("--drain-timeout", cfg.drain_timeout, "cycles allowed to drain");
  sim_cmd->add_flag("--no-drain", no_drain, "stop after the stimulus cycles");
  sim_cmd->add_option("--vcd", cfg.vcd_path, "waveform output");
  sim_cmd->add_flag("--log", log, "print the transaction log");

  auto* equiv_cmd = app.add_subcommand("equiv", "compare two designs transaction by transaction");
  add_common(equiv_cmd, common);
  equiv_cmd->add_option("--against", other, "second design (same extra files)")->required();
  equiv_cmd->add_option("--cycles", cfg.cycles, "stimulus cycles");
  equiv_cmd->add_option("--seed", cfg.seed, "stimulus seed");
  equiv_cmd->add_option("--p", cfg.p, "injection probability")->check(CLI::Range(0.0, 1.0));
  equiv_cmd->add_option("--q", cfg.q, "ready withholding probability")->check(CLI::Range(0.0, 1.0));

  auto* metrics_cmd = app.add_subcommand("metrics", "code-size comparison");
  add_common(metrics_cmd, common);
  auto* flow_cmd = app.add_subcommand("dump-flow", "resolved field routes and stage plan");
  add_common(flow_cmd, common);
  auto* net_cmd = app.add_subcommand("dump-netlist", "netlist listing");
  add_common(net_cmd, common);
  auto* scope_cmd = app.add_subcommand("dump-scopes", "expanded scope tree");
  add_common(scope_cmd, common);

  CLI11_PARSE(app, argc, argv);
  cfg.drain = !no_drain;

  try {
    auto sources = load(common);
    auto opts = options(common);
    if (*equiv_cmd) {
      std::vector<SourceFile> alt = sources;
      alt.front() = read_source(other);
      auto a = compile(sources, opts);
      auto b = compile(alt, opts);
      auto v = sim::check_equivalence(a.netlist, b.netlist, cfg);
      std::cout << "equivalent=" << (v.equivalent ? 1 : 0) << "\ncompared=" << v.compared
                << "\ndivergent=" << v.divergent << '\n';
      if (!v.equivalent) std::cout << "first_divergence=" << v.first_divergence << '\n';
      return v.equivalent ? 0 : 2;
    }
    auto c = compile(sources, opts);
    if (*compile_cmd) write_out(out_path, c.verilog.text);
    if (*metrics_cmd) std::cout << c.metrics().report();
    if (*flow_cmd) std::cout << c.flow_dump();
    if (*net_cmd) std::cout << c.netlist_dump();
    if (*scope_cmd) std::cout << c.expanded;
    if (*sim_cmd) {
      if (c.netlist.stops.empty()) return sim_plain(c.netlist, cfg, log);
      auto r = sim::run(c.netlist, cfg);
      if (log) std::cout << r.log();
      std::cout << r.summary();
      return r.ok() ? 0 : 2;
    }
  } catch (const CompileError& e) {
    for (const auto& d : e.diagnostics()) std::cerr << d.str() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
