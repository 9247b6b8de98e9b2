#include "crossflow/sim.hpp"

#include <algorithm>

namespace crossflow::sim {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string store_key(const shim::DsSpec& spec) {
    return spec.platform_id + "/" + (spec.kind == ir::DsKind::Object ? "object" : "table");
}

std::string hex8(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(8, '0');
    for (int i = 7; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

constexpr std::int64_t kObjectItemLimit = std::int64_t{1} << 40;

}  // namespace

// ---------------------------------------------------------------------------
// Plain data

const PlatformSim* Topology::find(const std::string& id) const {
    for (const auto& p : platforms)
        if (p.id == id) return &p;
    return nullptr;
}

Topology Topology::from_json(const json& j) {
    Topology t;
    for (const auto& [id, spec] : j.at("platforms").items()) {
        PlatformSim p;
        p.id = id;
        p.payload_limit_bytes = spec.value("payloadLimitBytes", p.payload_limit_bytes);
        p.table_item_limit = spec.value("tableItemLimit", p.table_item_limit);
        t.platforms.push_back(std::move(p));
    }
    return t;
}

json Topology::to_json() const {
    json out = json::object();
    for (const auto& p : platforms)
        out[p.id] = {{"payloadLimitBytes", p.payload_limit_bytes},
                     {"tableItemLimit", p.table_item_limit}};
    return {{"platforms", std::move(out)}};
}

FaultPlan FaultPlan::from_json(const json& j) {
    FaultPlan plan;
    for (const auto& o : j.value("outages", json::array()))
        plan.outages.push_back(Outage{o.at("platform").get<std::string>(),
                                      o.value("fromEvent", std::int64_t{0}),
                                      o.value("toEvent", std::int64_t{0})});
    for (const auto& c : j.value("crashes", json::array())) {
        CrashRule rule;
        rule.function = c.at("function").get<std::string>();
        rule.point = rt::crash_point_from_string(c.at("point").get<std::string>())
                         .value_or(rt::CrashPoint::BeforeOutputCkpt);
        rule.batch = c.value("batch", -1);
        rule.times = c.value("times", 1);
        plan.crashes.push_back(std::move(rule));
    }
    for (const auto& d : j.value("duplicates", json::array()))
        plan.duplicates.push_back(
            DuplicateRule{d.at("function").get<std::string>(), d.value("copies", 1)});
    return plan;
}

json FaultPlan::to_json() const {
    json doc;
    json oj = json::array();
    for (const auto& o : outages)
        oj.push_back({{"platform", o.platform}, {"fromEvent", o.from_event},
                      {"toEvent", o.to_event}});
    json cj = json::array();
    for (const auto& c : crashes)
        cj.push_back({{"function", c.function}, {"point", rt::to_string(c.point)},
                      {"batch", c.batch}, {"times", c.times}});
    json dj = json::array();
    for (const auto& d : duplicates)
        dj.push_back({{"function", d.function}, {"copies", d.copies}});
    doc["outages"] = std::move(oj);
    doc["crashes"] = std::move(cj);
    doc["duplicates"] = std::move(dj);
    return doc;
}

OpCounts& OpCounts::operator+=(const OpCounts& o) {
    writes += o.writes;
    reads += o.reads;
    object_writes += o.object_writes;
    object_reads += o.object_reads;
    invokes += o.invokes;
    cross_cloud_transfers += o.cross_cloud_transfers;
    faas_client_creates += o.faas_client_creates;
    return *this;
}

json OpCounts::to_json() const {
    return {{"writes", writes},
            {"reads", reads},
            {"objectWrites", object_writes},
            {"objectReads", object_reads},
            {"invokes", invokes},
            {"crossCloudTransfers", cross_cloud_transfers},
            {"faasClientCreates", faas_client_creates}};
}

json RunReport::to_json() const {
    json per_fn = json::object();
    for (const auto& [id, counts] : per_function) per_fn[id] = counts.to_json();
    json deliveries_j = json::object();
    for (const auto& [id, n] : deliveries) deliveries_j[id] = n;
    json creates_j = json::object();
    for (const auto& [key, n] : output_creates) creates_j[key] = n;
    json lists_j = json::object();
    for (const auto& [key, names] : invocation_lists) lists_j[key] = names;
    json dead_j = json::array();
    for (const auto& d : dead) dead_j.push_back({{"function", d.function_id}, {"reason", d.reason}});
    json remaining_j = json::object();
    for (const auto& [store, keys] : remaining_keys) remaining_j[store] = keys;
    return {{"status", status},
            {"eventsProcessed", events_processed},
            {"finalTick", final_tick},
            {"totals", totals.to_json()},
            {"perFunction", std::move(per_fn)},
            {"deliveries", std::move(deliveries_j)},
            {"outputCreates", std::move(creates_j)},
            {"invocationLists", std::move(lists_j)},
            {"dead", std::move(dead_j)},
            {"errors", errors},
            {"remainingKeys", std::move(remaining_j)}};
}

// ---------------------------------------------------------------------------
// SimStore

SimStore::SimStore(SimCloud& cloud, shim::DsSpec spec, std::int64_t item_limit)
    : cloud_(cloud), spec_(std::move(spec)), item_limit_(item_limit) {}

bool SimStore::store_output_data(const std::string& key, const shim::Bytes& data) {
    cloud_.meter(spec_, 1, 0);
    if (static_cast<std::int64_t>(data.size()) > item_limit_) throw shim::ValueTooLarge(key);
    auto [it, created] = cells_.try_emplace(key, data);
    (void)it;
    cloud_.record(spec_.platform_id, "store_output_data", key, created ? "created" : "exists");
    if (created && cloud_.current_report_) cloud_.current_report_->output_creates[key] += 1;
    return created;
}

std::optional<shim::Bytes> SimStore::get_value(const std::string& key) {
    cloud_.meter(spec_, 0, 1);
    auto it = cells_.find(key);
    if (it == cells_.end()) {
        cloud_.record(spec_.platform_id, "get_value", key, "missing");
        return std::nullopt;
    }
    cloud_.record(spec_.platform_id, "get_value", key, "hit");
    if (const auto* bytes = std::get_if<shim::Bytes>(&it->second)) return *bytes;
    if (const auto* list = std::get_if<List>(&it->second)) return json(list->names).dump();
    const auto& bm = std::get<Bitmap>(it->second);
    return json(std::vector<bool>(bm.bits.begin(), bm.bits.end())).dump();
}

bool SimStore::create_invocation_list(const std::string& key) {
    cloud_.meter(spec_, 1, 0);
    auto [it, created] = cells_.try_emplace(key, List{});
    (void)it;
    cloud_.record(spec_.platform_id, "create_invocation_list", key,
                  created ? "created" : "exists");
    return created;
}

std::vector<std::string> SimStore::append_and_get_list(const std::string& key,
                                                       const std::vector<std::string>& names) {
    // The post-append snapshot rides on the write acknowledgement, so the
    // whole call meters as a single write.
    cloud_.meter(spec_, 1, 0);
    auto it = cells_.find(key);
    if (it == cells_.end() || !std::holds_alternative<List>(it->second))
        throw shim::MissingList(key);
    auto& list = std::get<List>(it->second);
    list.names.insert(list.names.end(), names.begin(), names.end());
    cloud_.record(spec_.platform_id, "append_and_get_list", key,
                  "size=" + std::to_string(list.names.size()));
    return list.names;
}

bool SimStore::create_bitmap(int size, const std::string& key) {
    cloud_.meter(spec_, 1, 0);
    if (size <= 0) throw shim::IndexOutOfRange(key);
    auto [it, created] = cells_.try_emplace(key, Bitmap{std::vector<bool>(size, false)});
    (void)it;
    cloud_.record(spec_.platform_id, "create_bitmap", key, created ? "created" : "exists");
    return created;
}

shim::BitmapSnapshot SimStore::update_bitmap(int index, const std::string& key) {
    // A conditional update with a returned snapshot: one write plus one read.
    cloud_.meter(spec_, 1, 1);
    auto it = cells_.find(key);
    if (it == cells_.end() || !std::holds_alternative<Bitmap>(it->second))
        throw shim::MissingBitmap(key);
    auto& bm = std::get<Bitmap>(it->second);
    if (index < 0 || index >= static_cast<int>(bm.bits.size())) throw shim::IndexOutOfRange(key);
    shim::BitmapSnapshot snap;
    snap.flipped = !bm.bits[static_cast<std::size_t>(index)];
    bm.bits[static_cast<std::size_t>(index)] = true;
    snap.bits = bm.bits;
    cloud_.record(spec_.platform_id, "update_bitmap", key,
                  (snap.flipped ? "flipped" : "idempotent"));
    return snap;
}

std::vector<std::string> SimStore::keys_with_prefix(const std::string& prefix) {
    cloud_.meter(spec_, 0, 1);
    std::vector<std::string> out;
    for (auto it = cells_.lower_bound(prefix); it != cells_.end(); ++it) {
        if (it->first.rfind(prefix, 0) != 0) break;
        out.push_back(it->first);
    }
    cloud_.record(spec_.platform_id, "keys_with_prefix", prefix,
                  "count=" + std::to_string(out.size()));
    return out;
}

bool SimStore::remove(const std::string& key) {
    cloud_.meter(spec_, 1, 0);
    bool existed = cells_.erase(key) > 0;
    cloud_.record(spec_.platform_id, "remove", key, existed ? "removed" : "missing");
    return existed;
}

std::vector<std::string> SimStore::all_keys() const {
    std::vector<std::string> out;
    for (const auto& [key, cell] : cells_) {
        (void)cell;
        out.push_back(key);
    }
    return out;
}

std::optional<std::vector<std::string>> SimStore::list_at(const std::string& key) const {
    auto it = cells_.find(key);
    if (it == cells_.end() || !std::holds_alternative<List>(it->second)) return std::nullopt;
    return std::get<List>(it->second).names;
}

// ---------------------------------------------------------------------------
// Faas client

class SimFaasClient final : public shim::FaasClient {
  public:
    SimFaasClient(SimCloud& cloud, std::string platform)
        : cloud_(cloud), platform_(std::move(platform)) {}

    shim::AcceptToken async_invoke(const std::string& function,
                                   const shim::Bytes& payload) override;
    const std::string& platform_id() const override { return platform_; }

  private:
    SimCloud& cloud_;
    std::string platform_;
};

shim::AcceptToken SimFaasClient::async_invoke(const std::string& function,
                                              const shim::Bytes& payload) {
    if (cloud_.in_outage(platform_)) {
        cloud_.record(platform_, "async_invoke", function, "outage");
        throw shim::PlatformUnavailable(platform_);
    }
    const PlatformSim* plat = cloud_.topology_.find(platform_);
    if (!plat) throw shim::PlatformUnavailable(platform_);
    if (static_cast<std::int64_t>(payload.size()) > plat->payload_limit_bytes)
        throw shim::PayloadTooLarge(payload.size(), plat->payload_limit_bytes);

    OpCounts delta;
    delta.invokes = 1;
    if (!cloud_.current_platform_.empty() && cloud_.current_platform_ != platform_)
        delta.cross_cloud_transfers = 1;
    if (cloud_.current_report_) {
        cloud_.current_report_->totals += delta;
        if (!cloud_.current_actor_.empty())
            cloud_.current_report_->per_function[cloud_.current_actor_] += delta;
    }
    cloud_.record(platform_, "async_invoke", function, "accepted");

    rt::Envelope env = rt::Envelope::parse(payload);
    std::string rendered = cloud_.render_delivery_id(function, env);
    std::string short_id = rendered.substr(env.workflow_id.size() + 1);

    std::int64_t delay = cloud_.current_platform_ == platform_ ? 1 : 2;
    if (ir::is_gc_function(function)) delay = cloud_.config_.gc_delay_ticks;

    int copies = 1;
    for (const auto& rule : cloud_.faults_.duplicates)
        if (rule.function == short_id) copies += rule.copies;

    for (int i = 0; i < copies; ++i) {
        SimCloud::Event ev;
        ev.kind = SimCloud::Event::Kind::Delivery;
        ev.platform = platform_;
        ev.function = function;
        ev.envelope = payload;
        ev.attempt = 0;
        cloud_.enqueue(std::move(ev), delay + i);
    }

    shim::AcceptToken token;
    token.request_id = "req-" + std::to_string(cloud_.seq_);
    token.platform_id = platform_;
    return token;
}

// ---------------------------------------------------------------------------
// SimCloud

SimCloud::SimCloud(Topology topology, FaultPlan faults, SimConfig config)
    : topology_(std::move(topology)), faults_(std::move(faults)), config_(std::move(config)) {}

void SimCloud::load_subgraphs(const ir::SubGraphSet& set) {
    for (const auto& [name, sg] : set) subgraphs_[name] = sg;
}

void SimCloud::register_user_function(const std::string& name, rt::UserFunction fn) {
    user_functions_[name] = std::move(fn);
}

void SimCloud::register_predicate(const std::string& id, rt::PredicateFunction fn) {
    predicates_[id] = std::move(fn);
}

std::string SimCloud::submit(const std::string& entry_function, const shim::Bytes& input,
                             const std::string& workflow_name, const std::string& session) {
    std::string workflow_id =
        workflow_name + "-" +
        hex8(splitmix64(config_.seed ^ (0x5151ULL + static_cast<std::uint64_t>(submit_counter_))));
    ++submit_counter_;
    submit_as(entry_function, input, workflow_id, session);
    return workflow_id;
}

void SimCloud::submit_as(const std::string& entry_function, const shim::Bytes& input,
                         const std::string& workflow_id, const std::string& session) {
    auto it = subgraphs_.find(entry_function);
    if (it == subgraphs_.end()) throw shim::UnknownFunction(entry_function);

    rt::Envelope env;
    env.workflow_id = workflow_id;
    env.step = 0;
    env.session = session;
    env.invoke_mode = ir::InvokeMode::Sequence;
    env.caller = "client";
    env.direct = input;

    Event ev;
    ev.kind = Event::Kind::Delivery;
    ev.platform = it->second.self.platform;
    ev.function = entry_function;
    ev.envelope = env.serialize();
    ev.attempt = 0;
    enqueue(std::move(ev), 0);
}

void SimCloud::inject_delivery(const std::string& platform, const std::string& function,
                               const rt::Envelope& envelope, std::int64_t delay) {
    Event ev;
    ev.kind = Event::Kind::Delivery;
    ev.platform = platform;
    ev.function = function;
    ev.envelope = envelope.serialize();
    ev.attempt = 0;
    enqueue(std::move(ev), delay);
}

void SimCloud::enqueue(Event ev, std::int64_t delay) {
    ev.tick = now_ + delay;
    ev.seq = seq_++;
    std::uint64_t seq = static_cast<std::uint64_t>(ev.seq);
    ev.order = config_.tie_break_salt == 0 ? seq : splitmix64(seq ^ config_.tie_break_salt);
    queue_.push(std::move(ev));
}

bool SimCloud::in_outage(const std::string& platform) const {
    for (const auto& o : faults_.outages)
        if (o.platform == platform && events_processed_ >= o.from_event &&
            events_processed_ < o.to_event)
            return true;
    return false;
}

std::string SimCloud::render_delivery_id(const std::string& function,
                                         const rt::Envelope& env) const {
    return naming::render(
        naming::compute_function_id(env.workflow_id, function, env.step, env.branch));
}

void SimCloud::meter(const shim::DsSpec& spec, std::int64_t writes, std::int64_t reads) {
    if (!current_report_) return;
    OpCounts delta;
    if (spec.kind == ir::DsKind::Object) {
        delta.object_writes = writes;
        delta.object_reads = reads;
    } else {
        delta.writes = writes;
        delta.reads = reads;
    }
    if (!current_platform_.empty() && current_platform_ != spec.platform_id)
        delta.cross_cloud_transfers = 1;
    current_report_->totals += delta;
    if (!current_actor_.empty()) current_report_->per_function[current_actor_] += delta;
}

void SimCloud::record(const std::string& platform, const std::string& op, const std::string& key,
                      const std::string& result) {
    history_.push_back(HistoryRecord{now_, current_actor_.empty() ? "client" : current_actor_,
                                     platform, op, key, result});
}

CrashRule* SimCloud::match_crash(const std::string& short_id, rt::CrashPoint p, int batch) {
    for (std::size_t i = 0; i < faults_.crashes.size(); ++i) {
        CrashRule& rule = faults_.crashes[i];
        if (rule.function != short_id || rule.point != p) continue;
        if (rule.batch >= 0 && p == rt::CrashPoint::MidInvokeBatch && rule.batch != batch)
            continue;
        if (rule.batch >= 0 && p == rt::CrashPoint::MidGcSweep && rule.batch != batch) continue;
        std::string key = rule.function + "#" + rt::to_string(rule.point) + "#" +
                          std::to_string(i);
        if (crash_fired_[key] >= rule.times) continue;
        crash_fired_[key] += 1;
        return &rule;
    }
    return nullptr;
}

shim::DataStorePtr SimCloud::ds_create(const shim::DsSpec& spec) {
    const PlatformSim* plat = topology_.find(spec.platform_id);
    if (!plat) throw shim::PlatformUnavailable(spec.platform_id);
    std::string key = store_key(spec);
    auto it = stores_.find(key);
    if (it == stores_.end()) {
        std::int64_t limit =
            spec.kind == ir::DsKind::Object ? kObjectItemLimit : plat->table_item_limit;
        it = stores_.emplace(key, std::make_shared<SimStore>(*this, spec, limit)).first;
    }
    return it->second;
}

shim::FaasClientPtr SimCloud::faas_create(const shim::FaaSSpec& spec) {
    if (!topology_.find(spec.platform_id)) throw shim::PlatformUnavailable(spec.platform_id);
    if (current_report_) {
        OpCounts delta;
        delta.faas_client_creates = 1;
        current_report_->totals += delta;
        if (!current_actor_.empty()) current_report_->per_function[current_actor_] += delta;
    }
    record(spec.platform_id, "faas_create", "", "ok");
    return std::make_shared<SimFaasClient>(*this, spec.platform_id);
}

void SimCloud::crash_point(rt::CrashPoint p, int batch_index) {
    if (current_short_id_.empty()) return;
    if (match_crash(current_short_id_, p, batch_index)) {
        record(current_platform_, "crash", current_short_id_, rt::to_string(p));
        throw rt::CrashInjected(rt::to_string(p) + " in " + current_short_id_);
    }
}

void SimCloud::defer_coord_read(const rt::CoordContinuation& cont) {
    Event ev;
    ev.kind = Event::Kind::CoordRead;
    ev.cont = cont;
    ev.actor_platform = current_platform_;
    enqueue(std::move(ev), 1);
}

const rt::UserFunction* SimCloud::find_user_function(const std::string& name) {
    auto it = user_functions_.find(name);
    return it == user_functions_.end() ? nullptr : &it->second;
}

const rt::PredicateFunction* SimCloud::find_predicate(const std::string& id) {
    auto it = predicates_.find(id);
    return it == predicates_.end() ? nullptr : &it->second;
}

const ir::SubGraph* SimCloud::find_subgraph(const std::string& name) {
    auto it = subgraphs_.find(name);
    return it == subgraphs_.end() ? nullptr : &it->second;
}

std::vector<std::string> SimCloud::platform_ids() {
    std::vector<std::string> out;
    for (const auto& p : topology_.platforms) out.push_back(p.id);
    return out;
}

void SimCloud::process(const Event& ev, RunReport& report) {
    if (ev.kind == Event::Kind::CoordRead) {
        current_actor_ = ev.cont.self_id;
        current_platform_ = ev.actor_platform;
        current_short_id_.clear();
        try {
            rt::finish_fan_in(*this, ev.cont);
        } catch (const std::exception& e) {
            report.errors.push_back(std::string("coord-read: ") + e.what());
        }
        return;
    }

    rt::Envelope env;
    try {
        env = rt::Envelope::parse(ev.envelope);
    } catch (const std::exception& e) {
        report.errors.push_back(std::string("envelope: ") + e.what());
        return;
    }
    std::string rendered = render_delivery_id(ev.function, env);

    if (in_outage(ev.platform)) {
        if (ev.attempt < config_.runtime.retry_budget) {
            Event retry = ev;
            retry.attempt += 1;
            enqueue(std::move(retry), 1);
        } else {
            report.dead.push_back(DeadDelivery{rendered, "outage retry budget exhausted"});
        }
        return;
    }

    current_actor_ = rendered;
    current_platform_ = ev.platform;
    current_short_id_ = rendered.substr(env.workflow_id.size() + 1);
    report.deliveries[rendered] += 1;

    try {
        rt::handle_delivery(*this, ev.function, env, ev.platform, config_.runtime);
    } catch (const rt::CrashInjected& e) {
        if (ev.attempt < config_.runtime.retry_budget) {
            Event retry = ev;
            retry.attempt += 1;
            enqueue(std::move(retry), 1);
        } else {
            report.dead.push_back(DeadDelivery{rendered, e.what()});
        }
    } catch (const rt::AllPlatformsFailed& e) {
        if (ev.attempt < config_.runtime.retry_budget) {
            Event retry = ev;
            retry.attempt += 1;
            enqueue(std::move(retry), 1);
        } else {
            report.dead.push_back(DeadDelivery{rendered, e.what()});
        }
    } catch (const std::exception& e) {
        report.errors.push_back(rendered + ": " + e.what());
    }
}

RunReport SimCloud::run_until_quiescent() {
    RunReport report;
    current_report_ = &report;
    while (!queue_.empty()) {
        if (events_processed_ >= config_.max_events) {
            report.status = "budget-exceeded";
            break;
        }
        Event ev = queue_.top();
        queue_.pop();
        now_ = std::max(now_, ev.tick);
        ++events_processed_;
        process(ev, report);
        current_actor_.clear();
        current_platform_.clear();
        current_short_id_.clear();
    }
    if (report.status.empty()) report.status = "ok";
    report.events_processed = events_processed_;
    report.final_tick = now_;

    for (const auto& [skey, store] : stores_) {
        auto keys = store->all_keys();
        if (!keys.empty()) report.remaining_keys[skey] = keys;
        for (const auto& key : keys) {
            if (key.size() >= 4 && key.compare(key.size() - 4, 4, "-ivk") == 0) {
                if (auto names = store->list_at(key)) report.invocation_lists[key] = *names;
            }
        }
    }
    current_report_ = nullptr;
    return report;
}

}  // namespace crossflow::sim
