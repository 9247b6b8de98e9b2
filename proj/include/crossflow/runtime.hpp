#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "crossflow/ir.hpp"
#include "crossflow/naming.hpp"
#include "crossflow/shim.hpp"

// The function-side orchestrator: unwrap/wrap, the exactly-once protocol over
// output and invocation checkpoints, fan-out grouping, fan-in bitmap
// coordination, cross-workflow collaboration, failover, transfer-mode
// selection, majority-rule placement, and garbage collection.
//
// The runtime holds no cross-invocation mutable state; all shared state lives
// behind the shim's atomic operations.
namespace crossflow::rt {

using shim::Bytes;
using json = nlohmann::ordered_json;

struct DataRef {
    std::string key;
    shim::DsSpec ds;
};

// The cloud-event envelope carrying control state and data between functions.
// Wire schema is JSON with a version field `v`.
struct Envelope {
    int v = 1;
    // control
    std::string workflow_id;
    int step = 0;
    naming::BranchStack branch;
    std::string session;
    ir::InvokeMode invoke_mode = ir::InvokeMode::Sequence;
    // data: exactly one of direct/ref is set
    std::optional<Bytes> direct;
    std::optional<DataRef> ref;
    // meta
    std::string caller;  // rendered FunctionId of the invoker, if any
    int iteration = 0;   // cycle iteration counter

    json to_json() const;
    static Envelope from_json(const json& j);
    std::string serialize() const;
    static Envelope parse(const std::string& text);
    std::size_t wire_size() const { return serialize().size(); }
};

struct WorkflowState {
    std::string workflow_id;
    int step = 0;
    naming::BranchStack branch;
    naming::FunctionId self;
    const ir::SubGraph* sub_graph = nullptr;
    naming::KeySet keys;
    std::string exec_platform;  // where this execution runs (may be a backup)
    std::string session;
    int iteration = 0;
};

struct ExecOutcome {
    Bytes output;
    bool is_stored = false;
    bool from_checkpoint = false;
    DataRef stored_at;  // valid when is_stored
};

enum class CrashPoint {
    BeforeOutputCkpt,
    AfterOutputBeforeInvoke,
    MidInvokeBatch,
    AfterInvokeBeforeIvkAppend,
    MidGcSweep,
};

std::string to_string(CrashPoint p);
std::optional<CrashPoint> crash_point_from_string(const std::string& s);

// Thrown by the host's crash hook to abort the current execution at an
// injected fault point.
class CrashInjected : public std::runtime_error {
  public:
    explicit CrashInjected(const std::string& where)
        : std::runtime_error("crash injected at " + where) {}
};

class AllPlatformsFailed : public shim::ShimError {
  public:
    explicit AllPlatformsFailed(const std::string& target)
        : ShimError("AllPlatformsFailed", target) {}
};

class MissingUpstreamCheckpoint : public shim::ShimError {
  public:
    explicit MissingUpstreamCheckpoint(const std::string& key)
        : ShimError("MissingUpstreamCheckpoint", key) {}
};

class MalformedEnvelope : public shim::ShimError {
  public:
    explicit MalformedEnvelope(const std::string& what)
        : ShimError("MalformedEnvelope", what) {}
};

class UserFunctionError : public std::runtime_error {
  public:
    explicit UserFunctionError(const std::string& what)
        : std::runtime_error("user function failed: " + what) {}
};

struct RuntimeConfig {
    // "atomic": the bitmap update returns the post-update snapshot in one
    // step (exactly one all-true observer). "read-after-write": the update
    // and the strong read are separate steps, reproducing the weaker
    // behavior where duplicate aggregator invocations can occur and are
    // absorbed by downstream checkpoints.
    std::string coordination = "atomic";
    std::int64_t envelope_allowance_bytes = 4096;
    int group_size = 10;
    int retry_budget = 2;

    // Test-only protocol mutation: drop invocation-list appends. Used to
    // validate that the exactly-once oracle catches a broken protocol.
    bool mutant_skip_ivk_append = false;

    static RuntimeConfig from_json(const json& j);
    json to_json() const;
};

// Pending second step of read-after-write fan-in coordination: the strong
// read and trigger decision, scheduled by the host as a separate step.
struct CoordContinuation {
    std::string workflow_id;
    std::string bitmap_key;
    shim::DsSpec bitmap_ds;
    bool pre_all_true = false;
    std::string self_id;  // rendered participant id
    std::string ivk_key;
    shim::DsSpec ivk_ds;
    std::string aggregator_name;
    ir::NextFunctionInfo aggregator;
    std::string aggregator_envelope;  // serialized
};

struct UserContext;
using UserFunction = std::function<Bytes(const Bytes& input, UserContext& ctx)>;
// Choice predicate: pure function of the function output, returns the index
// of the target branch.
using PredicateFunction = std::function<int(const Bytes& output)>;

// Everything the host (simulator or a real platform adapter) provides to one
// wrapper execution.
class Host {
  public:
    virtual ~Host() = default;
    virtual shim::DataStorePtr ds_create(const shim::DsSpec& spec) = 0;
    virtual shim::FaasClientPtr faas_create(const shim::FaaSSpec& spec) = 0;
    // Fault-injection hook; may throw CrashInjected.
    virtual void crash_point(CrashPoint p, int batch_index) = 0;
    // Schedules the deferred coordination read (read-after-write mode).
    virtual void defer_coord_read(const CoordContinuation& cont) = 0;
    virtual const UserFunction* find_user_function(const std::string& name) = 0;
    virtual const PredicateFunction* find_predicate(const std::string& id) = 0;
    virtual const ir::SubGraph* find_subgraph(const std::string& name) = 0;
    // Platforms of the deployment, for GC sweeps.
    virtual std::vector<std::string> platform_ids() = 0;
};

struct UserContext {
    const WorkflowState* state = nullptr;
    std::string output_key;
    bool is_stored = false;
    // Reads a checkpointed value, e.g. a fan-in manifest entry.
    std::function<Bytes(const DataRef& ref)> fetch;
};

enum class TransferMode { Direct, Indirect };

// -- Operations --------------------------------------------------------------

// Input extraction plus state reconstruction from the envelope.
std::pair<Bytes, WorkflowState> unwrap(Host& host, const Envelope& env,
                                       const ir::SubGraph& sub_graph,
                                       const std::string& exec_platform);

ExecOutcome exec_with_output_checkpoint(Host& host, WorkflowState& state,
                                        const UserFunction& user_fn, const Bytes& input);

void invoke_next(Host& host, WorkflowState& state, const ExecOutcome& outcome,
                 const RuntimeConfig& config);

shim::AcceptToken failover_invoke(Host& host, const WorkflowState& state,
                                  const ir::NextFunctionInfo& target,
                                  const std::string& envelope);

// Returns true iff this participant triggered the aggregator.
bool coordinate_fan_in(Host& host, WorkflowState& state, const ExecOutcome& outcome,
                       const RuntimeConfig& config);

void coordinate_collab(Host& host, WorkflowState& state, const ExecOutcome& outcome,
                       const RuntimeConfig& config);

shim::DsSpec resolve_placement(const ir::SubGraph& sub_graph);

TransferMode choose_transfer(std::size_t payload_size, const ir::NextFunctionInfo& target,
                             const ir::TransferPrimitive& transfer, const RuntimeConfig& config);

// Deletes everything with the workflow-id prefix from both stores of one
// platform. Idempotent; safe to rerun after a partial sweep.
struct GcResult {
    std::int64_t table_deleted = 0;
    std::int64_t object_deleted = 0;
};
GcResult run_gc(Host& host, const std::string& workflow_id, const std::string& platform_id);

// Completes a deferred fan-in coordination read (read-after-write mode).
void finish_fan_in(Host& host, const CoordContinuation& cont);

// Top-level wrapper for one delivery to `function`: unwrap, execute with
// checkpoints, invoke successors. GC functions short-circuit to run_gc.
// Returns the outcome for inspection by the host.
ExecOutcome handle_delivery(Host& host, const std::string& function, const Envelope& env,
                            const std::string& exec_platform, const RuntimeConfig& config);

}  // namespace crossflow::rt
