#pragma once

// Lowering of a resolved flow graph to a netlist: staging registers,
// steering muxes, handshake logic and component storage.

#include "tlflow/flow_resolver.hpp"
#include "tlflow/netlist.hpp"

namespace tlflow::staging {

using flow::plan_stages;
using net::check_acyclic;

struct BuildOptions {
  bool swap_arb_priority = false;  // mutation hook: arb2 favours its second input
};

/// Requires a resolved FlowGraph (resolve_fields). The returned netlist is
/// compacted; combinational cycles are reported by check_acyclic, not here.
net::Netlist build_netlist(const flow::FlowGraph& fg, const flow::StagePlan& plan,
                           const BuildOptions& opts = {});

}  // namespace tlflow::staging
