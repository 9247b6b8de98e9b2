#include "crossflow/runtime.hpp"

#include <algorithm>
#include <string_view>
#include <unordered_set>

namespace crossflow::rt {

namespace {

// Table entry standing in for a value that was routed to the object store.
constexpr std::string_view kObjPointer = "\x1f@objstore";

std::string ds_kind_to_string(ir::DsKind k) {
    return k == ir::DsKind::Object ? "object" : "table";
}

ir::DsKind ds_kind_from_string(const std::string& s) {
    return s == "object" ? ir::DsKind::Object : ir::DsKind::Table;
}

json data_ref_to_json(const DataRef& ref) {
    return {{"key", ref.key},
            {"platform", ref.ds.platform_id},
            {"ds", ds_kind_to_string(ref.ds.kind)}};
}

DataRef data_ref_from_json(const json& j) {
    DataRef ref;
    ref.key = j.at("key").get<std::string>();
    ref.ds.platform_id = j.at("platform").get<std::string>();
    ref.ds.kind = ds_kind_from_string(j.value("ds", std::string{"table"}));
    return ref;
}

std::vector<std::string> parse_name_list(const std::optional<Bytes>& raw) {
    std::vector<std::string> names;
    if (!raw) return names;
    json j = json::parse(*raw, nullptr, false);
    if (!j.is_array()) return names;
    for (const auto& e : j)
        if (e.is_string()) names.push_back(e.get<std::string>());
    return names;
}

bool contains(const std::vector<std::string>& names, const std::string& name) {
    return std::find(names.begin(), names.end(), name) != names.end();
}

Bytes fetch_ref(Host& host, const DataRef& ref) {
    auto ds = host.ds_create(ref.ds);
    auto value = ds->get_value(ref.key);
    if (!value) throw MissingUpstreamCheckpoint(ref.key);
    return *value;
}

}  // namespace

// ---------------------------------------------------------------------------
// Envelope

json Envelope::to_json() const {
    json control = {{"workflowId", workflow_id},
                    {"step", step},
                    {"branch", branch},
                    {"session", session},
                    {"invokeMode", ir::to_string(invoke_mode)}};
    json data = json::object();
    if (direct) data["direct"] = *direct;
    if (ref) data["ref"] = data_ref_to_json(*ref);
    json meta = {{"caller", caller}, {"iteration", iteration}};
    return {{"v", v}, {"control", std::move(control)}, {"data", std::move(data)},
            {"meta", std::move(meta)}};
}

Envelope Envelope::from_json(const json& j) {
    Envelope env;
    try {
        env.v = j.at("v").get<int>();
        if (env.v != 1) throw MalformedEnvelope("unsupported version " + std::to_string(env.v));
        const json& control = j.at("control");
        env.workflow_id = control.at("workflowId").get<std::string>();
        env.step = control.at("step").get<int>();
        env.branch = control.value("branch", naming::BranchStack{});
        env.session = control.value("session", std::string{});
        env.invoke_mode = ir::invoke_mode_from_string(
                              control.value("invokeMode", std::string{"sequence"}))
                              .value_or(ir::InvokeMode::Sequence);
        const json& data = j.at("data");
        if (data.contains("direct")) env.direct = data["direct"].get<std::string>();
        if (data.contains("ref")) env.ref = data_ref_from_json(data["ref"]);
        const json meta = j.value("meta", json::object());
        env.caller = meta.value("caller", std::string{});
        env.iteration = meta.value("iteration", 0);
    } catch (const nlohmann::json::exception& e) {
        throw MalformedEnvelope(e.what());
    }
    if (env.direct && env.ref) throw MalformedEnvelope("both direct and ref data set");
    if (!env.direct && !env.ref) throw MalformedEnvelope("envelope carries no data");
    if (env.step < 0) throw MalformedEnvelope("negative step");
    return env;
}

std::string Envelope::serialize() const { return to_json().dump(); }

Envelope Envelope::parse(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw MalformedEnvelope("invalid JSON");
    return from_json(j);
}

// ---------------------------------------------------------------------------
// Config / crash points

std::string to_string(CrashPoint p) {
    switch (p) {
        case CrashPoint::BeforeOutputCkpt: return "beforeOutputCkpt";
        case CrashPoint::AfterOutputBeforeInvoke: return "afterOutputBeforeInvoke";
        case CrashPoint::MidInvokeBatch: return "midInvokeBatch";
        case CrashPoint::AfterInvokeBeforeIvkAppend: return "afterInvokeBeforeIvkAppend";
        case CrashPoint::MidGcSweep: return "midGcSweep";
    }
    return "beforeOutputCkpt";
}

std::optional<CrashPoint> crash_point_from_string(const std::string& s) {
    for (CrashPoint p : {CrashPoint::BeforeOutputCkpt, CrashPoint::AfterOutputBeforeInvoke,
                         CrashPoint::MidInvokeBatch, CrashPoint::AfterInvokeBeforeIvkAppend,
                         CrashPoint::MidGcSweep})
        if (to_string(p) == s) return p;
    return std::nullopt;
}

RuntimeConfig RuntimeConfig::from_json(const json& j) {
    RuntimeConfig c;
    c.coordination = j.value("coordination", c.coordination);
    c.envelope_allowance_bytes = j.value("envelopeAllowanceBytes", c.envelope_allowance_bytes);
    c.group_size = j.value("groupSize", c.group_size);
    c.retry_budget = j.value("retryBudget", c.retry_budget);
    return c;
}

json RuntimeConfig::to_json() const {
    return {{"coordination", coordination},
            {"envelopeAllowanceBytes", envelope_allowance_bytes},
            {"groupSize", group_size},
            {"retryBudget", retry_budget}};
}

// ---------------------------------------------------------------------------
// Unwrap / execute

std::pair<Bytes, WorkflowState> unwrap(Host& host, const Envelope& env,
                                       const ir::SubGraph& sub_graph,
                                       const std::string& exec_platform) {
    WorkflowState state;
    state.workflow_id = env.workflow_id;
    state.step = env.step;
    state.branch = env.branch;
    state.self = naming::compute_function_id(env.workflow_id, sub_graph.self.name, env.step,
                                             env.branch);
    state.sub_graph = &sub_graph;
    state.keys = naming::derive_keys(state.self);
    state.exec_platform = exec_platform;
    state.session = env.session;
    state.iteration = env.iteration;

    Bytes input = env.direct ? *env.direct : fetch_ref(host, *env.ref);
    return {std::move(input), std::move(state)};
}

shim::DsSpec resolve_placement(const ir::SubGraph& sub_graph) {
    return shim::DsSpec{sub_graph.transfer.placement, ir::DsKind::Table, "sim"};
}

ExecOutcome exec_with_output_checkpoint(Host& host, WorkflowState& state,
                                        const UserFunction& user_fn, const Bytes& input) {
    const std::string& placement = state.sub_graph->transfer.placement;
    auto table = host.ds_create(shim::DsSpec{placement, ir::DsKind::Table, "sim"});

    host.crash_point(CrashPoint::BeforeOutputCkpt, -1);

    ExecOutcome outcome;
    if (auto prior = table->get_value(state.keys.output_key)) {
        outcome.from_checkpoint = true;
        outcome.is_stored = true;
        if (*prior == kObjPointer) {
            outcome.stored_at = DataRef{state.keys.output_key,
                                        {placement, ir::DsKind::Object, "sim"}};
            outcome.output = fetch_ref(host, outcome.stored_at);
        } else {
            outcome.stored_at = DataRef{state.keys.output_key,
                                        {placement, ir::DsKind::Table, "sim"}};
            outcome.output = *prior;
        }
        return outcome;
    }

    UserContext ctx;
    ctx.state = &state;
    ctx.output_key = state.keys.output_key;
    ctx.fetch = [&host](const DataRef& ref) { return fetch_ref(host, ref); };
    try {
        outcome.output = user_fn(input, ctx);
    } catch (const CrashInjected&) {
        throw;
    } catch (const std::exception& e) {
        throw UserFunctionError(e.what());
    }

    bool to_object = state.sub_graph->transfer.ds == ir::DsKind::Object ||
                     static_cast<std::int64_t>(outcome.output.size()) > table->item_size_limit();
    if (to_object) {
        auto object = host.ds_create(shim::DsSpec{placement, ir::DsKind::Object, "sim"});
        object->store_output_data(state.keys.output_key, outcome.output);
        table->store_output_data(state.keys.output_key, std::string(kObjPointer));
        outcome.stored_at = DataRef{state.keys.output_key, {placement, ir::DsKind::Object, "sim"}};
    } else {
        bool created = table->store_output_data(state.keys.output_key, outcome.output);
        if (!created) {
            // Lost a race against a duplicate execution; its value is the one
            // that counts.
            auto winner = table->get_value(state.keys.output_key);
            if (winner && *winner != kObjPointer) outcome.output = *winner;
            outcome.from_checkpoint = true;
        }
        outcome.stored_at = DataRef{state.keys.output_key, {placement, ir::DsKind::Table, "sim"}};
    }
    outcome.is_stored = true;
    return outcome;
}

// ---------------------------------------------------------------------------
// Invocation

TransferMode choose_transfer(std::size_t payload_size, const ir::NextFunctionInfo& target,
                             const ir::TransferPrimitive& transfer, const RuntimeConfig& config) {
    if (transfer.transfer_by_ds) return TransferMode::Indirect;
    if (static_cast<std::int64_t>(payload_size) + config.envelope_allowance_bytes >
        target.payload_limit)
        return TransferMode::Indirect;
    return TransferMode::Direct;
}

shim::AcceptToken failover_invoke(Host& host, const WorkflowState& state,
                                  const ir::NextFunctionInfo& target,
                                  const std::string& envelope) {
    std::vector<std::string> platforms{target.platform};
    platforms.insert(platforms.end(), target.failover.begin(), target.failover.end());
    for (const auto& platform : platforms) {
        try {
            auto client = host.faas_create(shim::FaaSSpec{platform, "sim"});
            return client->async_invoke(target.name, envelope);
        } catch (const shim::PlatformUnavailable&) {
            continue;
        }
    }
    (void)state;
    throw AllPlatformsFailed(target.name);
}

namespace {

struct PendingInvoke {
    std::string id;  // rendered target FunctionId, recorded in the ivk list
    ir::NextFunctionInfo target;
    Envelope envelope;
};

Envelope child_envelope(const WorkflowState& state, const ExecOutcome& outcome,
                        const ir::NextFunctionInfo& target, const naming::BranchStack& branch,
                        int step, int iteration, const RuntimeConfig& config) {
    Envelope env;
    env.workflow_id = state.workflow_id;
    env.step = step;
    env.branch = branch;
    env.session = state.session;
    env.invoke_mode = target.invoke_mode;
    env.caller = naming::render(state.self);
    env.iteration = iteration;
    if (choose_transfer(outcome.output.size(), target, state.sub_graph->transfer, config) ==
        TransferMode::Direct)
        env.direct = outcome.output;
    else
        env.ref = outcome.stored_at;
    return env;
}

// Invoke-then-record, guarded by an invocation list: a name already in the
// list was handled by a previous attempt and is skipped. Crashing between the
// invoke and the append makes the retry re-invoke; the duplicate delivery is
// absorbed by the target's own checkpoints.
void invoke_guarded(Host& host, const WorkflowState& state, const shim::DsSpec& ivk_ds,
                    const std::string& ivk_key, std::vector<PendingInvoke> children,
                    const RuntimeConfig& config) {
    auto ds = host.ds_create(ivk_ds);
    ds->create_invocation_list(ivk_key);
    std::vector<std::string> done = parse_name_list(ds->get_value(ivk_key));

    std::vector<const PendingInvoke*> pending;
    for (const auto& c : children)
        if (!contains(done, c.id)) pending.push_back(&c);

    const int group_size = std::max(config.group_size, 1);
    int global_index = 0;
    for (std::size_t begin = 0; begin < pending.size();
         begin += static_cast<std::size_t>(group_size)) {
        std::size_t end = std::min(pending.size(), begin + static_cast<std::size_t>(group_size));
        std::vector<std::string> group_ids;
        for (std::size_t i = begin; i < end; ++i) {
            const PendingInvoke& c = *pending[i];
            failover_invoke(host, state, c.target, c.envelope.serialize());
            host.crash_point(CrashPoint::MidInvokeBatch, global_index++);
            group_ids.push_back(c.id);
        }
        host.crash_point(CrashPoint::AfterInvokeBeforeIvkAppend,
                         static_cast<int>(begin) / group_size);
        if (!config.mutant_skip_ivk_append) ds->append_and_get_list(ivk_key, group_ids);
    }
}

naming::BranchStack aggregator_branch(const WorkflowState& state) {
    const auto& invoke = state.sub_graph->invoke;
    if (invoke.agg_branch_rule == ir::AggregatorBranchRule::Static)
        return invoke.agg_static_branch;
    if (state.branch.empty()) throw naming::EmptyStackError();
    return naming::BranchStack(state.branch.begin(), state.branch.end() - 1);
}

// Participant ids of a fan-in, in bitmap order. Mapped participants derive
// their stacks from the aggregator prefix plus the instance index; distinct
// participants carry compile-time stacks.
std::vector<naming::FunctionId> participant_ids(const WorkflowState& state,
                                                const naming::BranchStack& agg_branch) {
    const auto& parts = state.sub_graph->invoke.participants;
    std::vector<naming::FunctionId> ids;
    ids.reserve(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const auto& p = parts[i];
        naming::BranchStack branch = p.branch;
        if (branch.empty())
            branch = naming::push_branch(agg_branch,
                                         p.instance >= 0 ? p.instance : static_cast<int>(i));
        ids.push_back(naming::compute_function_id(state.workflow_id, p.name, state.step, branch));
    }
    return ids;
}

Envelope aggregator_envelope(Host& host, const WorkflowState& state,
                             const naming::FunctionId& agg_id,
                             const std::vector<naming::FunctionId>& parts) {
    json manifest = json::array();
    for (const auto& pid : parts) {
        const ir::SubGraph* psg = host.find_subgraph(pid.name);
        std::string placement = psg ? psg->transfer.placement : state.sub_graph->transfer.placement;
        ir::DsKind kind = psg ? psg->transfer.ds : ir::DsKind::Table;
        manifest.push_back({{"id", naming::render(pid)},
                            {"key", naming::derive_keys(pid).output_key},
                            {"platform", placement},
                            {"ds", ds_kind_to_string(kind)}});
    }
    Envelope env;
    env.workflow_id = state.workflow_id;
    env.step = agg_id.step;
    env.branch = agg_id.branch;
    env.session = state.session;
    env.invoke_mode = ir::InvokeMode::FanIn;
    env.caller = naming::render(state.self);
    env.iteration = 0;
    env.direct = manifest.dump();
    return env;
}

}  // namespace

void invoke_next(Host& host, WorkflowState& state, const ExecOutcome& outcome,
                 const RuntimeConfig& config) {
    const ir::SubGraph& sg = *state.sub_graph;
    host.crash_point(CrashPoint::AfterOutputBeforeInvoke, -1);

    switch (sg.invoke.mode) {
        case ir::InvokeMode::FanIn:
            coordinate_fan_in(host, state, outcome, config);
            return;
        case ir::InvokeMode::ByBatch:
        case ir::InvokeMode::ByRedundant:
            coordinate_collab(host, state, outcome, config);
            return;
        default:
            break;
    }

    std::vector<PendingInvoke> children;
    auto add_child = [&](const ir::NextFunctionInfo& target, const naming::BranchStack& branch,
                         int step, int iteration) {
        PendingInvoke inv;
        inv.id = naming::render(
            naming::compute_function_id(state.workflow_id, target.name, step, branch));
        inv.target = target;
        inv.envelope = child_envelope(state, outcome, target, branch, step, iteration, config);
        children.push_back(std::move(inv));
    };

    switch (sg.invoke.mode) {
        case ir::InvokeMode::Sequence:
            for (const auto& target : sg.next_funcs)
                add_child(target, state.branch, state.step + 1, state.iteration);
            break;
        case ir::InvokeMode::Choice: {
            const PredicateFunction* pred = host.find_predicate(sg.invoke.predicate);
            if (!pred) throw shim::UnknownFunction("predicate " + sg.invoke.predicate);
            int idx = (*pred)(outcome.output);
            if (idx < 0 || idx >= static_cast<int>(sg.next_funcs.size()))
                throw std::out_of_range("choice predicate '" + sg.invoke.predicate +
                                        "' selected branch " + std::to_string(idx));
            add_child(sg.next_funcs[idx], state.branch, state.step + 1, state.iteration);
            break;
        }
        case ir::InvokeMode::Parallel: {
            int pos = 0;
            for (const auto& target : sg.next_funcs)
                add_child(target, naming::push_branch(state.branch, pos++), state.step + 1,
                          state.iteration);
            break;
        }
        case ir::InvokeMode::Map: {
            const ir::NextFunctionInfo& target = sg.next_funcs.front();
            for (int i = 0; i < sg.invoke.map_width; ++i)
                add_child(target, naming::push_branch(state.branch, i), state.step + 1,
                          state.iteration);
            break;
        }
        case ir::InvokeMode::Cycle: {
            // next_funcs[0] is the cycle head, next_funcs[1] the exit.
            if (state.iteration + 1 < sg.invoke.cycle_bound)
                add_child(sg.next_funcs[0], state.branch, state.step + 1, state.iteration + 1);
            else
                add_child(sg.next_funcs[1], state.branch, state.step + 1, 0);
            break;
        }
        case ir::InvokeMode::GcTrigger: {
            for (const auto& target : sg.next_funcs) {
                PendingInvoke inv;
                inv.id = naming::render(naming::compute_function_id(
                    state.workflow_id, target.name, state.step + 1, state.branch));
                inv.target = target;
                Envelope env;
                env.workflow_id = state.workflow_id;
                env.step = state.step + 1;
                env.branch = state.branch;
                env.session = state.session;
                env.invoke_mode = ir::InvokeMode::GcTrigger;
                env.caller = naming::render(state.self);
                env.direct = state.workflow_id;
                inv.envelope = std::move(env);
                children.push_back(std::move(inv));
            }
            break;
        }
        default:
            return;  // fan-in / collab handled above
    }

    invoke_guarded(host, state, resolve_placement(sg), state.keys.ivk_key, std::move(children),
                   config);
}

// ---------------------------------------------------------------------------
// Fan-in coordination

namespace {

void trigger_aggregator(Host& host, const WorkflowState& state, const shim::DsSpec& ivk_ds,
                        const std::string& ivk_key, const std::string& agg_rendered,
                        const ir::NextFunctionInfo& target, const std::string& envelope,
                        const RuntimeConfig& config) {
    auto ds = host.ds_create(ivk_ds);
    ds->create_invocation_list(ivk_key);
    std::vector<std::string> done = parse_name_list(ds->get_value(ivk_key));
    if (contains(done, agg_rendered)) return;
    failover_invoke(host, state, target, envelope);
    host.crash_point(CrashPoint::AfterInvokeBeforeIvkAppend, 0);
    if (!config.mutant_skip_ivk_append) ds->append_and_get_list(ivk_key, {agg_rendered});
}

bool bits_all_true(const std::optional<Bytes>& raw) {
    if (!raw) return false;
    json j = json::parse(*raw, nullptr, false);
    if (!j.is_array() || j.empty()) return false;
    for (const auto& b : j)
        if (!b.is_boolean() || !b.get<bool>()) return false;
    return true;
}

}  // namespace

bool coordinate_fan_in(Host& host, WorkflowState& state, const ExecOutcome& outcome,
                       const RuntimeConfig& config) {
    (void)outcome;  // the aggregator pulls participant outputs via the manifest
    const ir::SubGraph& sg = *state.sub_graph;
    const ir::NextFunctionInfo& target = sg.next_funcs.front();

    naming::BranchStack agg_branch = aggregator_branch(state);
    naming::FunctionId agg_id = naming::compute_function_id(state.workflow_id, target.name,
                                                            state.step + 1, agg_branch);
    std::string bitmap_key = naming::derive_keys(agg_id).bitmap_key;

    // Own slot in the bitmap.
    const auto& parts = sg.invoke.participants;
    int my_level = state.branch.empty() ? -1 : state.branch.back();
    int index = -1;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (parts[i].name != sg.self.name) continue;
        if (parts[i].instance >= 0 ? parts[i].instance == my_level
                                   : (parts[i].branch.empty() || parts[i].branch == state.branch)) {
            index = static_cast<int>(i);
            break;
        }
    }
    if (index < 0) throw shim::IndexOutOfRange(bitmap_key);

    // The bitmap lives on the aggregator's platform: the one location every
    // participant can derive without talking to the others.
    shim::DsSpec bitmap_ds{target.platform, ir::DsKind::Table, "sim"};
    auto ds = host.ds_create(bitmap_ds);

    auto pre = ds->get_value(bitmap_key);
    ds->create_bitmap(static_cast<int>(parts.size()), bitmap_key);
    shim::BitmapSnapshot snap = ds->update_bitmap(index, bitmap_key);

    Envelope agg_env =
        aggregator_envelope(host, state, agg_id, participant_ids(state, agg_branch));

    if (config.coordination == "read-after-write") {
        // Weak coordination: the trigger decision runs on a later, separate
        // read. Near-simultaneous finishers can both observe the full bitmap
        // and both invoke the aggregator; its checkpoints absorb the
        // duplicate.
        CoordContinuation cont;
        cont.workflow_id = state.workflow_id;
        cont.bitmap_key = bitmap_key;
        cont.bitmap_ds = bitmap_ds;
        cont.pre_all_true = bits_all_true(pre);
        cont.self_id = naming::render(state.self);
        cont.ivk_key = state.keys.ivk_key;
        cont.ivk_ds = resolve_placement(sg);
        cont.aggregator_name = naming::render(agg_id);
        cont.aggregator = target;
        cont.aggregator_envelope = agg_env.serialize();
        host.defer_coord_read(cont);
        return false;
    }

    if (!snap.all_true()) return false;
    // `flipped` is false only on a retry whose earlier attempt already set the
    // bit; the own-list guard below keeps the trigger single-shot either way.
    trigger_aggregator(host, state, resolve_placement(sg), state.keys.ivk_key,
                       naming::render(agg_id), target, agg_env.serialize(), config);
    return true;
}

void finish_fan_in(Host& host, const CoordContinuation& cont) {
    auto ds = host.ds_create(cont.bitmap_ds);
    if (!bits_all_true(ds->get_value(cont.bitmap_key))) return;

    auto ivk = host.ds_create(cont.ivk_ds);
    ivk->create_invocation_list(cont.ivk_key);
    std::vector<std::string> done = parse_name_list(ivk->get_value(cont.ivk_key));
    if (contains(done, cont.aggregator_name)) return;

    std::vector<std::string> platforms{cont.aggregator.platform};
    platforms.insert(platforms.end(), cont.aggregator.failover.begin(),
                     cont.aggregator.failover.end());
    bool sent = false;
    for (const auto& platform : platforms) {
        try {
            auto client = host.faas_create(shim::FaaSSpec{platform, "sim"});
            client->async_invoke(cont.aggregator.name, cont.aggregator_envelope);
            sent = true;
            break;
        } catch (const shim::PlatformUnavailable&) {
            continue;
        }
    }
    if (!sent) throw AllPlatformsFailed(cont.aggregator.name);
    ivk->append_and_get_list(cont.ivk_key, {cont.aggregator_name});
}

// ---------------------------------------------------------------------------
// Cross-workflow collaboration

namespace {

// First-occurrence ranks of contributor ids in a shared collaboration list.
// Retries append duplicate entries; only the first occurrence counts, so
// every contributor derives the same ranking from any later snapshot.
struct CollabView {
    std::vector<json> entries_in_rank_order;
    int rank_of(const std::string& id) const {
        for (std::size_t i = 0; i < entries_in_rank_order.size(); ++i)
            if (entries_in_rank_order[i].value("id", std::string{}) == id)
                return static_cast<int>(i);
        return -1;
    }
};

CollabView collab_view(const std::vector<std::string>& raw, const std::string& session) {
    CollabView view;
    std::unordered_set<std::string> seen;
    for (const auto& line : raw) {
        json e = json::parse(line, nullptr, false);
        if (!e.is_object() || e.value("kind", std::string{}) != "in") continue;
        if (!session.empty() && e.value("session", std::string{}) != session) continue;
        std::string id = e.value("id", std::string{});
        if (id.empty() || !seen.insert(id).second) continue;
        view.entries_in_rank_order.push_back(std::move(e));
    }
    return view;
}

}  // namespace

void coordinate_collab(Host& host, WorkflowState& state, const ExecOutcome& outcome,
                       const RuntimeConfig& config) {
    const ir::SubGraph& sg = *state.sub_graph;
    const ir::NextFunctionInfo& target = sg.next_funcs.front();
    const bool redundant = sg.invoke.mode == ir::InvokeMode::ByRedundant;
    const std::string session =
        redundant ? (state.session.empty() ? "0" : state.session) : std::string{};

    std::string key = naming::collaboration_key({target.name});
    auto ds = host.ds_create(shim::DsSpec{target.platform, ir::DsKind::Table, "sim"});
    ds->create_invocation_list(key);

    json entry = {{"kind", "in"},
                  {"id", naming::render(state.self)},
                  {"key", outcome.stored_at.key},
                  {"platform", outcome.stored_at.ds.platform_id},
                  {"ds", ds_kind_to_string(outcome.stored_at.ds.kind)}};
    if (redundant) entry["session"] = session;
    std::vector<std::string> snapshot = ds->append_and_get_list(key, {entry.dump()});

    CollabView view = collab_view(snapshot, session);
    int rank = view.rank_of(naming::render(state.self));
    if (rank < 0) return;

    if (redundant) {
        // First contribution of the session wins the round; later (slower)
        // redundant results are dropped.
        if (rank != 0) return;
        Envelope env;
        env.workflow_id = key + "#s" + session;
        env.step = 0;
        env.session = session;
        env.invoke_mode = ir::InvokeMode::Sequence;
        env.caller = naming::render(state.self);
        if (choose_transfer(outcome.output.size(), target, sg.transfer, config) ==
            TransferMode::Direct)
            env.direct = outcome.output;
        else
            env.ref = outcome.stored_at;
        failover_invoke(host, state, target, env.serialize());
        return;
    }

    // Batch window: the contributor whose first occurrence completes a window
    // of `batch_size` distinct ids dispatches that window downstream.
    const int k = std::max(sg.invoke.batch_size, 1);
    if ((rank + 1) % k != 0) return;
    int window = rank / k;
    json manifest = json::array();
    for (int i = window * k; i < (window + 1) * k; ++i)
        manifest.push_back(view.entries_in_rank_order[static_cast<std::size_t>(i)]);

    Envelope env;
    env.workflow_id = key + "#w" + std::to_string(window);
    env.step = 0;
    env.session = state.session;
    env.invoke_mode = ir::InvokeMode::Sequence;
    env.caller = naming::render(state.self);
    env.direct = manifest.dump();
    failover_invoke(host, state, target, env.serialize());
}

// ---------------------------------------------------------------------------
// Garbage collection

GcResult run_gc(Host& host, const std::string& workflow_id, const std::string& platform_id) {
    GcResult result;
    const std::string prefix = workflow_id + "/";
    int sweep_index = 0;
    for (ir::DsKind kind : {ir::DsKind::Table, ir::DsKind::Object}) {
        auto ds = host.ds_create(shim::DsSpec{platform_id, kind, "sim"});
        for (const auto& key : ds->keys_with_prefix(prefix)) {
            host.crash_point(CrashPoint::MidGcSweep, sweep_index++);
            if (ds->remove(key)) {
                if (kind == ir::DsKind::Table)
                    ++result.table_deleted;
                else
                    ++result.object_deleted;
            }
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Top level

ExecOutcome handle_delivery(Host& host, const std::string& function, const Envelope& env,
                            const std::string& exec_platform, const RuntimeConfig& config) {
    if (ir::is_gc_function(function)) {
        GcResult gc = run_gc(host, env.workflow_id, exec_platform);
        ExecOutcome outcome;
        outcome.output = json{{"tableDeleted", gc.table_deleted},
                              {"objectDeleted", gc.object_deleted}}
                             .dump();
        return outcome;
    }

    const ir::SubGraph* sg = host.find_subgraph(function);
    if (!sg) throw shim::UnknownFunction(function);

    auto [input, state] = unwrap(host, env, *sg, exec_platform);

    static const UserFunction identity = [](const Bytes& in, UserContext&) { return in; };
    const UserFunction* user_fn = host.find_user_function(function);
    if (!user_fn) user_fn = &identity;

    ExecOutcome outcome = exec_with_output_checkpoint(host, state, *user_fn, input);
    invoke_next(host, state, outcome, config);
    return outcome;
}

}  // namespace crossflow::rt
