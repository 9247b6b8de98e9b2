#pragma once

#include <string>
#include <vector>

#include "crossflow/ir.hpp"
#include "crossflow/sim.hpp"

// Canonical example workflows used by the CLI, the tests and the scenario
// harness. Each fixture is a workflow definition plus the user functions and
// predicates it needs.
namespace crossflow::fixtures {

// Two platforms: p1 (256 KiB invocation payload limit) and p2 (128 KiB).
sim::Topology default_topology();

std::vector<std::string> fixture_names();

// Workflow definition JSON for a fixture; throws std::out_of_range on an
// unknown name.
std::string workflow_json(const std::string& name);

ir::WorkflowDef workflow(const std::string& name);

// Parameterized variants.
std::string chain_json(int length);            // f0 -> f1 -> ... alternating platforms
std::string mapfan_json(int width);            // map -> width workers -> fan-in

// Registers the fixture's user functions and predicates with a simulation.
void register_functions(sim::SimCloud& cloud, const std::string& name);

}  // namespace crossflow::fixtures
