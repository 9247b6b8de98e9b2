#pragma once

#include <set>
#include <string>
#include <vector>

#include "crossflow/fixtures.hpp"
#include "crossflow/sim.hpp"

// Scenario files, invariant checking and crash-point sweeps on top of the
// simulation.
namespace crossflow::harness {

using json = nlohmann::ordered_json;

struct Submit {
    std::string workflow;  // fixture or inline workflow name
    std::string input = "hello";
    std::string session;
    int count = 1;
};

struct Scenario {
    std::vector<std::string> fixtures;
    std::vector<json> inline_workflows;  // workflow definition documents
    sim::Topology topology = fixtures::default_topology();
    sim::FaultPlan faults;
    sim::SimConfig sim;
    std::vector<Submit> submits;

    static Scenario from_json(const json& j);
    json to_json() const;
};

struct SubmittedRun {
    std::string workflow_name;
    std::string workflow_id;
    std::string entry;
    std::string terminal;
};

struct RunResult {
    sim::RunReport report;
    std::vector<SubmittedRun> runs;

    json to_json() const;
};

RunResult run_scenario(const Scenario& scenario);

struct CheckSpec {
    bool allow_dead = false;
    bool allow_any_duplicates = false;
    std::set<std::string> allowed_duplicate_ids;  // rendered ids permitted > 1 delivery
};

// Observable exactly-once and cleanup invariants; empty result means the run
// is clean.
std::vector<std::string> check_invariants(const RunResult& result, const CheckSpec& spec);

// Reruns the scenario once per (function, protocol point) crash injection and
// checks the invariants each time. Returns all violations, prefixed with the
// injection that produced them.
std::vector<std::string> verify_scenario(const Scenario& scenario);

// Writes fixture workflow definitions, compiled sub-graph sets, the default
// topology and runnable scenario files into a directory.
void emit_fixtures(const std::string& out_dir);

// Structural comparison of two report documents; lists differing paths.
std::vector<std::string> report_diff(const json& a, const json& b);

}  // namespace crossflow::harness
