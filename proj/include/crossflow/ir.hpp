#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crossflow/naming.hpp"

#include <json.hpp>

// Global workflow descriptions and their compilation into per-function
// sub-graphs. The runtime consumes only sub-graphs; the global DAG exists for
// authoring and validation, and hand-written sub-graph sets remain first-class
// inputs (see parse_subgraph_set).
namespace crossflow::ir {

using json = nlohmann::ordered_json;

enum class InvokeMode {
    Sequence,
    Parallel,
    Map,
    FanIn,
    Choice,
    Cycle,
    ByBatch,
    ByRedundant,
    GcTrigger,
};

std::string to_string(InvokeMode mode);
std::optional<InvokeMode> invoke_mode_from_string(const std::string& s);

enum class DsKind { Table, Object };

struct PlatformDecl {
    std::string id;
    std::int64_t payload_limit_bytes = 0;

    bool operator==(const PlatformDecl&) const = default;
};

struct FunctionDecl {
    std::string name;
    std::string platform;
    std::vector<std::string> failover;  // ordered backups, excludes primary
    std::string memory_class;           // metadata only
    bool transfer_by_ds = false;
    DsKind ds = DsKind::Table;

    bool operator==(const FunctionDecl&) const = default;
};

struct Edge {
    std::string from;
    std::string to;
    InvokeMode mode = InvokeMode::Sequence;
    int fan_in_arity = 0;   // fanin: declared arity (0 = infer)
    int map_width = 0;      // map
    int cycle_bound = 0;    // cycle: number of body passes, >= 1
    std::string predicate;  // choice: registered predicate id
    int batch_size = 0;     // bybatch
    int redundancy = 0;     // byredundant

    bool operator==(const Edge&) const = default;
};

struct WorkflowDef {
    std::string name;
    std::vector<PlatformDecl> platforms;
    std::vector<FunctionDecl> functions;
    std::vector<Edge> edges;
    std::string entry;
    std::string terminal;

    bool operator==(const WorkflowDef&) const = default;

    const FunctionDecl* find_function(const std::string& name) const;
    const PlatformDecl* find_platform(const std::string& id) const;
};

struct Diagnostic {
    std::string code;    // e.g. "DanglingEdge", "SyntaxError"
    std::string detail;

    bool operator==(const Diagnostic&) const = default;
};

// A fan-in participant slot. `instance` is -1 for distinct-function
// participants; for a mapped participant it is the map instance index and
// doubles as the bitmap position. `branch` is the participant's branch stack
// when it is fully known at compile time (empty for mapped participants,
// whose stacks depend on the runtime instance index).
struct ParticipantRef {
    std::string name;
    int instance = -1;
    naming::BranchStack branch;

    bool operator==(const ParticipantRef&) const = default;
};

// How fan-in participants derive the aggregator's branch stack locally.
enum class AggregatorBranchRule {
    ParentPrefix,  // own stack minus the popped level; participants share it
    Static,        // precomputed at compile time (unequal participant stacks)
};

struct InvokePrimitive {
    InvokeMode mode = InvokeMode::Sequence;
    std::vector<std::string> targets;  // deterministic order = nextFuncs order

    // Fan-in
    std::vector<ParticipantRef> participants;
    AggregatorBranchRule agg_branch_rule = AggregatorBranchRule::ParentPrefix;
    naming::BranchStack agg_static_branch;

    int map_width = 0;
    int cycle_bound = 0;
    std::string predicate;
    int batch_size = 0;
    int redundancy = 0;

    bool operator==(const InvokePrimitive&) const = default;
};

struct TransferPrimitive {
    bool transfer_by_ds = false;
    DsKind ds = DsKind::Table;
    // Resolved placement platform id. When transfer_by_ds is false this is
    // only used for checkpoints, which stay co-located with the current
    // platform at runtime.
    std::string placement;

    bool operator==(const TransferPrimitive&) const = default;
};

struct NextFunctionInfo {
    std::string name;
    std::string platform;
    InvokeMode invoke_mode = InvokeMode::Sequence;
    std::vector<std::string> failover;
    std::int64_t payload_limit = 0;

    bool operator==(const NextFunctionInfo&) const = default;
};

struct SubGraph {
    FunctionDecl self;
    InvokePrimitive invoke;
    TransferPrimitive transfer;
    std::vector<NextFunctionInfo> next_funcs;

    bool operator==(const SubGraph&) const = default;
};

// Ordered by function name so that serialization is byte-stable.
using SubGraphSet = std::map<std::string, SubGraph>;

struct ParseResult {
    std::optional<WorkflowDef> def;
    std::vector<Diagnostic> diagnostics;

    bool ok() const { return def.has_value() && diagnostics.empty(); }
};

struct CompileResult {
    std::optional<SubGraphSet> subgraphs;
    std::vector<Diagnostic> diagnostics;

    bool ok() const { return subgraphs.has_value() && diagnostics.empty(); }
};

// Total: never throws on malformed input; every problem becomes a diagnostic.
ParseResult parse_workflow_def(const std::string& text);

json workflow_def_to_json(const WorkflowDef& def);

CompileResult compile_subgraphs(const WorkflowDef& def);

// Cross-sub-graph consistency: every target present, fan-in participant lists
// agree. Empty result iff consistent.
std::vector<Diagnostic> validate_subgraph_set(const SubGraphSet& set);

json subgraph_set_to_json(const SubGraphSet& set);
std::string serialize_subgraph_set(const SubGraphSet& set);

// Parses a serialized sub-graph set (the runtime's native input format).
struct SubGraphParseResult {
    std::optional<SubGraphSet> set;
    std::vector<Diagnostic> diagnostics;
};
SubGraphParseResult parse_subgraph_set(const std::string& text);

// Majority platform among self + targets; ties go to `self_platform`, then
// the lexicographically smallest id.
std::string majority_placement(const std::string& self_platform,
                               const std::vector<std::string>& target_platforms);

// Reserved name prefix for per-platform garbage-collection functions.
inline std::string gc_function_name(const std::string& platform_id) { return "gc." + platform_id; }
inline bool is_gc_function(const std::string& name) { return name.rfind("gc.", 0) == 0; }

}  // namespace crossflow::ir
