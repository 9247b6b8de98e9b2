#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <variant>
#include <vector>

#include "crossflow/runtime.hpp"
#include "crossflow/shim.hpp"

// Deterministic event-driven model of a multi-cloud deployment: per-platform
// tables, object stores and FaaS queues, plus fault injection (platform
// outages, crashes at protocol points, duplicate deliveries). A run is fully
// determined by (topology, fault plan, seed, tie-break salt).
namespace crossflow::sim {

using json = nlohmann::ordered_json;

struct PlatformSim {
    std::string id;
    std::int64_t payload_limit_bytes = 262144;
    std::int64_t table_item_limit = 400000;
};

struct Topology {
    std::vector<PlatformSim> platforms;

    const PlatformSim* find(const std::string& id) const;
    static Topology from_json(const json& j);
    json to_json() const;
};

// Outage window in processed-event indices: the platform rejects function
// invocations while the global event counter is in [from_event, to_event).
struct Outage {
    std::string platform;
    std::int64_t from_event = 0;
    std::int64_t to_event = 0;
};

// Crash rule: abort execution of the function whose rendered id (minus the
// workflow-id prefix) equals `function` at `point`. `batch` restricts
// mid-batch points to one batch index (-1 = any). The rule fires on the first
// `times` matching attempts, so retries eventually succeed.
struct CrashRule {
    std::string function;
    rt::CrashPoint point = rt::CrashPoint::BeforeOutputCkpt;
    int batch = -1;
    int times = 1;
};

// Extra at-least-once copies of matching deliveries.
struct DuplicateRule {
    std::string function;  // id minus the workflow prefix
    int copies = 1;        // extra deliveries beyond the original
};

struct FaultPlan {
    std::vector<Outage> outages;
    std::vector<CrashRule> crashes;
    std::vector<DuplicateRule> duplicates;

    static FaultPlan from_json(const json& j);
    json to_json() const;
};

struct OpCounts {
    std::int64_t writes = 0;
    std::int64_t reads = 0;
    std::int64_t object_writes = 0;
    std::int64_t object_reads = 0;
    std::int64_t invokes = 0;
    std::int64_t cross_cloud_transfers = 0;
    std::int64_t faas_client_creates = 0;

    bool operator==(const OpCounts&) const = default;
    OpCounts& operator+=(const OpCounts& o);
    json to_json() const;
};

struct HistoryRecord {
    std::int64_t tick = 0;
    std::string actor;     // executing function id ("client" for submissions)
    std::string platform;  // platform the operation ran against
    std::string op;
    std::string key;
    std::string result;
};

struct SimConfig {
    std::uint64_t seed = 0;
    std::uint64_t tie_break_salt = 0;  // permutes ordering of same-tick events
    std::int64_t max_events = 100000;
    std::int64_t gc_delay_ticks = 6;  // lets retries drain before the sweep
    rt::RuntimeConfig runtime;
};

struct DeadDelivery {
    std::string function_id;
    std::string reason;
};

struct RunReport {
    std::string status;  // "ok" | "budget-exceeded"
    std::int64_t events_processed = 0;
    std::int64_t final_tick = 0;
    OpCounts totals;
    std::map<std::string, OpCounts> per_function;  // keyed by rendered id
    // Delivery counts per rendered function id (values > 1 are duplicates).
    std::map<std::string, std::int64_t> deliveries;
    // Observable effects: conditional creates that succeeded, per key.
    std::map<std::string, std::int64_t> output_creates;
    std::map<std::string, std::vector<std::string>> invocation_lists;
    std::vector<DeadDelivery> dead;
    std::vector<std::string> errors;
    std::map<std::string, std::vector<std::string>> remaining_keys;  // "P1/table" -> keys

    json to_json() const;
};

class EventBudgetExceeded : public std::runtime_error {
  public:
    EventBudgetExceeded() : std::runtime_error("event budget exceeded") {}
};

class SimCloud;

// One platform's store of a given kind.
class SimStore final : public shim::DataStore {
  public:
    SimStore(SimCloud& cloud, shim::DsSpec spec, std::int64_t item_limit);

    bool store_output_data(const std::string& key, const shim::Bytes& data) override;
    std::optional<shim::Bytes> get_value(const std::string& key) override;
    bool create_invocation_list(const std::string& key) override;
    std::vector<std::string> append_and_get_list(const std::string& key,
                                                 const std::vector<std::string>& names) override;
    bool create_bitmap(int size, const std::string& key) override;
    shim::BitmapSnapshot update_bitmap(int index, const std::string& key) override;
    std::vector<std::string> keys_with_prefix(const std::string& prefix) override;
    bool remove(const std::string& key) override;
    std::int64_t item_size_limit() const override { return item_limit_; }
    const shim::DsSpec& spec() const override { return spec_; }

    std::vector<std::string> all_keys() const;
    std::optional<std::vector<std::string>> list_at(const std::string& key) const;

  private:
    struct List {
        std::vector<std::string> names;
    };
    struct Bitmap {
        std::vector<bool> bits;
    };
    using Cell = std::variant<shim::Bytes, List, Bitmap>;

    SimCloud& cloud_;
    shim::DsSpec spec_;
    std::int64_t item_limit_;
    std::map<std::string, Cell> cells_;

    friend class SimCloud;
};

class SimCloud final : public rt::Host, public shim::Backend {
  public:
    SimCloud(Topology topology, FaultPlan faults, SimConfig config);

    // Registration.
    void load_subgraphs(const ir::SubGraphSet& set);
    void register_user_function(const std::string& name, rt::UserFunction fn);
    void register_predicate(const std::string& id, rt::PredicateFunction fn);

    // Enqueues the entry delivery; returns the workflow id.
    std::string submit(const std::string& entry_function, const shim::Bytes& input,
                       const std::string& workflow_name, const std::string& session = {});
    // Same, with a caller-chosen workflow id (collaboration tests).
    void submit_as(const std::string& entry_function, const shim::Bytes& input,
                   const std::string& workflow_id, const std::string& session = {});

    // Enqueues an arbitrary delivery at now + delay, for tests that need a
    // specific completion order.
    void inject_delivery(const std::string& platform, const std::string& function,
                         const rt::Envelope& envelope, std::int64_t delay);

    RunReport run_until_quiescent();

    // Host interface (used by the runtime during event processing).
    shim::DataStorePtr ds_create(const shim::DsSpec& spec) override;
    shim::FaasClientPtr faas_create(const shim::FaaSSpec& spec) override;
    void crash_point(rt::CrashPoint p, int batch_index) override;
    void defer_coord_read(const rt::CoordContinuation& cont) override;
    const rt::UserFunction* find_user_function(const std::string& name) override;
    const rt::PredicateFunction* find_predicate(const std::string& id) override;
    const ir::SubGraph* find_subgraph(const std::string& name) override;
    std::vector<std::string> platform_ids() override;

    const std::vector<HistoryRecord>& history() const { return history_; }
    const SimConfig& config() const { return config_; }
    const Topology& topology() const { return topology_; }

  private:
    struct Event {
        std::int64_t tick = 0;
        std::uint64_t order = 0;  // permuted sequence number, breaks tick ties
        std::int64_t seq = 0;
        enum class Kind { Delivery, CoordRead } kind = Kind::Delivery;
        // Delivery
        std::string platform;
        std::string function;
        std::string envelope;
        int attempt = 0;
        // CoordRead
        rt::CoordContinuation cont;
        std::string actor_platform;
    };
    struct EventAfter {
        bool operator()(const Event& a, const Event& b) const {
            if (a.tick != b.tick) return a.tick > b.tick;
            return a.order > b.order;
        }
    };

    friend class SimStore;
    friend class SimFaasClient;

    void enqueue(Event ev, std::int64_t delay);
    void process(const Event& ev, RunReport& report);
    bool in_outage(const std::string& platform) const;
    std::string render_delivery_id(const std::string& function, const rt::Envelope& env) const;
    void meter(const shim::DsSpec& spec, std::int64_t writes, std::int64_t reads);
    void record(const std::string& platform, const std::string& op, const std::string& key,
                const std::string& result);
    CrashRule* match_crash(const std::string& short_id, rt::CrashPoint p, int batch);

    Topology topology_;
    FaultPlan faults_;
    SimConfig config_;

    ir::SubGraphSet subgraphs_;
    std::map<std::string, rt::UserFunction> user_functions_;
    std::map<std::string, rt::PredicateFunction> predicates_;
    std::map<std::string, std::shared_ptr<SimStore>> stores_;  // "P1/table"
    std::map<std::string, int> crash_fired_;  // per-rule firing counter

    std::priority_queue<Event, std::vector<Event>, EventAfter> queue_;
    std::int64_t now_ = 0;
    std::int64_t seq_ = 0;
    std::int64_t events_processed_ = 0;
    int submit_counter_ = 0;

    // Execution context of the event being processed.
    std::string current_actor_;     // rendered function id
    std::string current_platform_;  // platform the function runs on
    std::string current_short_id_;  // id minus the workflow prefix
    RunReport* current_report_ = nullptr;

    std::vector<HistoryRecord> history_;
};

}  // namespace crossflow::sim
