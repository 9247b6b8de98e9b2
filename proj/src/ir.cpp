#include "crossflow/ir.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace crossflow::ir {

namespace {

// Symbolic branch level: >= 0 is a fixed fan-out index, kMapLevel stands for
// a runtime map instance index.
constexpr int kMapLevel = -1;
using SymStack = std::vector<int>;

void diag(std::vector<Diagnostic>& out, std::string code, std::string detail) {
    out.push_back(Diagnostic{std::move(code), std::move(detail)});
}

}  // namespace

std::string to_string(InvokeMode mode) {
    switch (mode) {
        case InvokeMode::Sequence: return "sequence";
        case InvokeMode::Parallel: return "parallel";
        case InvokeMode::Map: return "map";
        case InvokeMode::FanIn: return "fanin";
        case InvokeMode::Choice: return "choice";
        case InvokeMode::Cycle: return "cycle";
        case InvokeMode::ByBatch: return "bybatch";
        case InvokeMode::ByRedundant: return "byredundant";
        case InvokeMode::GcTrigger: return "gc";
    }
    return "sequence";
}

std::optional<InvokeMode> invoke_mode_from_string(const std::string& s) {
    static const std::unordered_map<std::string, InvokeMode> table = {
        {"sequence", InvokeMode::Sequence},   {"parallel", InvokeMode::Parallel},
        {"map", InvokeMode::Map},             {"fanin", InvokeMode::FanIn},
        {"choice", InvokeMode::Choice},       {"cycle", InvokeMode::Cycle},
        {"bybatch", InvokeMode::ByBatch},     {"byredundant", InvokeMode::ByRedundant},
        {"gc", InvokeMode::GcTrigger},
    };
    auto it = table.find(s);
    if (it == table.end()) return std::nullopt;
    return it->second;
}

const FunctionDecl* WorkflowDef::find_function(const std::string& fname) const {
    for (const auto& f : functions)
        if (f.name == fname) return &f;
    return nullptr;
}

const PlatformDecl* WorkflowDef::find_platform(const std::string& id) const {
    for (const auto& p : platforms)
        if (p.id == id) return &p;
    return nullptr;
}

std::string majority_placement(const std::string& self_platform,
                               const std::vector<std::string>& target_platforms) {
    std::map<std::string, int> tally;
    tally[self_platform] += 1;
    for (const auto& p : target_platforms) tally[p] += 1;
    std::string best = self_platform;
    int best_count = tally[self_platform];
    for (const auto& [platform, count] : tally) {
        if (count > best_count) {
            best = platform;
            best_count = count;
        } else if (count == best_count && best != self_platform && platform < best) {
            best = platform;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Parsing

ParseResult parse_workflow_def(const std::string& text) {
    ParseResult result;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        diag(result.diagnostics, "SyntaxError",
             "byte " + std::to_string(e.byte) + ": " + e.what());
        return result;
    }
    if (!doc.is_object()) {
        diag(result.diagnostics, "SyntaxError", "top-level value must be an object");
        return result;
    }

    WorkflowDef def;
    auto& d = result.diagnostics;

    auto require_string = [&](const char* key) -> std::string {
        if (!doc.contains(key) || !doc[key].is_string()) {
            diag(d, "SyntaxError", std::string("missing or non-string key '") + key + "'");
            return {};
        }
        return doc[key].get<std::string>();
    };

    def.name = require_string("name");
    def.entry = require_string("entry");
    def.terminal = require_string("terminal");

    if (doc.contains("platforms") && doc["platforms"].is_object()) {
        for (const auto& [id, spec] : doc["platforms"].items()) {
            PlatformDecl p;
            p.id = id;
            p.payload_limit_bytes = spec.value("payloadLimitBytes", std::int64_t{0});
            if (p.payload_limit_bytes <= 0)
                diag(d, "SyntaxError", "platform '" + id + "' needs a positive payloadLimitBytes");
            def.platforms.push_back(std::move(p));
        }
    } else {
        diag(d, "SyntaxError", "missing 'platforms' object");
    }

    if (doc.contains("functions") && doc["functions"].is_object()) {
        for (const auto& [fname, spec] : doc["functions"].items()) {
            FunctionDecl f;
            f.name = fname;
            if (!naming::valid_function_name(fname))
                diag(d, "InvalidName", "function name '" + fname + "' (allowed: [A-Za-z0-9.])");
            f.platform = spec.value("platform", std::string{});
            f.memory_class = spec.value("memoryClass", std::string{});
            f.transfer_by_ds = spec.value("transferByDs", false);
            f.ds = spec.value("ds", std::string{"table"}) == "object" ? DsKind::Object
                                                                      : DsKind::Table;
            if (!def.find_platform(f.platform))
                diag(d, "UnknownPlatform", "function '" + fname + "' on '" + f.platform + "'");
            if (spec.contains("failover")) {
                for (const auto& b : spec["failover"]) {
                    std::string backup = b.get<std::string>();
                    if (!def.find_platform(backup))
                        diag(d, "UnknownPlatform", "failover '" + backup + "' of '" + fname + "'");
                    if (backup == f.platform)
                        diag(d, "InvalidFailover",
                             "failover of '" + fname + "' repeats its primary platform");
                    f.failover.push_back(backup);
                }
            }
            def.functions.push_back(std::move(f));
        }
    } else {
        diag(d, "SyntaxError", "missing 'functions' object");
    }

    if (doc.contains("edges") && doc["edges"].is_array()) {
        for (const auto& e : doc["edges"]) {
            Edge edge;
            edge.from = e.value("from", std::string{});
            edge.to = e.value("to", std::string{});
            auto mode = invoke_mode_from_string(e.value("mode", std::string{"sequence"}));
            if (!mode) {
                diag(d, "SyntaxError", "unknown edge mode '" + e.value("mode", std::string{}) + "'");
                continue;
            }
            edge.mode = *mode;
            const json params = e.value("params", json::object());
            edge.fan_in_arity = params.value("arity", 0);
            edge.map_width = params.value("width", 0);
            edge.cycle_bound = params.value("bound", 0);
            edge.predicate = params.value("predicate", std::string{});
            edge.batch_size = params.value("batchSize", 0);
            edge.redundancy = params.value("count", 0);
            if (!def.find_function(edge.from))
                diag(d, "DanglingEdge", edge.from + " -> " + edge.to + " (unknown '" + edge.from + "')");
            if (!def.find_function(edge.to))
                diag(d, "DanglingEdge", edge.from + " -> " + edge.to + " (unknown '" + edge.to + "')");
            def.edges.push_back(std::move(edge));
        }
    } else {
        diag(d, "SyntaxError", "missing 'edges' array");
    }

    if (!d.empty()) return result;

    // Structural invariants. Collaboration edges are inter-workflow and are
    // excluded from the entry/terminal/DAG analysis; a function that appears
    // only as a collaboration target is an external declaration.
    std::unordered_set<std::string> external;
    std::unordered_map<std::string, int> intra_in, intra_out;
    for (const auto& f : def.functions) {
        intra_in[f.name] = 0;
        intra_out[f.name] = 0;
    }
    for (const auto& e : def.edges) {
        bool collab = e.mode == InvokeMode::ByBatch || e.mode == InvokeMode::ByRedundant;
        bool back_edge = e.mode == InvokeMode::Cycle;
        if (collab) continue;
        intra_out[e.from] += 1;
        if (!back_edge) intra_in[e.to] += 1;
    }
    for (const auto& f : def.functions) {
        bool touched = false;
        for (const auto& e : def.edges) {
            bool collab = e.mode == InvokeMode::ByBatch || e.mode == InvokeMode::ByRedundant;
            if (e.from == f.name || (e.to == f.name && !collab)) touched = true;
        }
        if (!touched && f.name != def.entry) external.insert(f.name);
    }

    if (!def.find_function(def.entry)) {
        diag(d, "UnknownFunction", "entry '" + def.entry + "' not declared");
    } else {
        for (const auto& f : def.functions) {
            if (external.count(f.name)) continue;
            if (intra_in[f.name] == 0 && f.name != def.entry)
                diag(d, "MultipleEntries", "'" + f.name + "' has no incoming edges");
        }
        if (intra_in[def.entry] != 0)
            diag(d, "InvalidEntry", "entry '" + def.entry + "' has incoming edges");
    }
    if (!def.find_function(def.terminal)) {
        diag(d, "UnknownFunction", "terminal '" + def.terminal + "' not declared");
    } else {
        for (const auto& f : def.functions) {
            if (external.count(f.name)) continue;
            if (intra_out[f.name] == 0 && f.name != def.terminal)
                diag(d, "MultipleTerminals", "'" + f.name + "' has no outgoing edges");
        }
    }

    if (d.empty()) result.def = std::move(def);
    return result;
}

json workflow_def_to_json(const WorkflowDef& def) {
    json doc;
    doc["name"] = def.name;
    json platforms = json::object();
    for (const auto& p : def.platforms)
        platforms[p.id] = {{"payloadLimitBytes", p.payload_limit_bytes}};
    doc["platforms"] = std::move(platforms);
    json functions = json::object();
    for (const auto& f : def.functions) {
        json spec = {{"platform", f.platform},
                     {"failover", f.failover},
                     {"memoryClass", f.memory_class}};
        if (f.transfer_by_ds) spec["transferByDs"] = true;
        if (f.ds == DsKind::Object) spec["ds"] = "object";
        functions[f.name] = std::move(spec);
    }
    doc["functions"] = std::move(functions);
    json edges = json::array();
    for (const auto& e : def.edges) {
        json params = json::object();
        if (e.fan_in_arity > 0) params["arity"] = e.fan_in_arity;
        if (e.map_width > 0) params["width"] = e.map_width;
        if (e.cycle_bound > 0) params["bound"] = e.cycle_bound;
        if (!e.predicate.empty()) params["predicate"] = e.predicate;
        if (e.batch_size > 0) params["batchSize"] = e.batch_size;
        if (e.redundancy > 0) params["count"] = e.redundancy;
        edges.push_back({{"from", e.from}, {"to", e.to}, {"mode", to_string(e.mode)},
                         {"params", std::move(params)}});
    }
    doc["edges"] = std::move(edges);
    doc["entry"] = def.entry;
    doc["terminal"] = def.terminal;
    return doc;
}

// ---------------------------------------------------------------------------
// Compilation

namespace {

struct NodeAnalysis {
    std::vector<const Edge*> out_edges;  // declaration order, intra + collab
    std::vector<const Edge*> in_edges;   // declaration order
    int step = 0;
    SymStack stack;
    bool stack_known = false;
};

bool is_collab(const Edge& e) {
    return e.mode == InvokeMode::ByBatch || e.mode == InvokeMode::ByRedundant;
}

}  // namespace

CompileResult compile_subgraphs(const WorkflowDef& def) {
    CompileResult result;
    auto& d = result.diagnostics;

    std::map<std::string, NodeAnalysis> nodes;
    std::set<std::string> external;  // collab-only targets, compiled elsewhere
    for (const auto& f : def.functions) nodes[f.name];
    for (const auto& e : def.edges) {
        nodes[e.from].out_edges.push_back(&e);
        nodes[e.to].in_edges.push_back(&e);
    }
    for (const auto& f : def.functions) {
        const auto& n = nodes[f.name];
        if (n.in_edges.empty() || !n.out_edges.empty()) continue;
        bool collab_only = std::all_of(n.in_edges.begin(), n.in_edges.end(),
                                       [](const Edge* e) { return is_collab(*e); });
        if (collab_only) external.insert(f.name);
    }

    // Topological order over intra non-back edges.
    std::unordered_map<std::string, int> indegree;
    for (const auto& [name, n] : nodes) {
        if (external.count(name)) continue;
        int deg = 0;
        for (const Edge* e : n.in_edges)
            if (!is_collab(*e) && e->mode != InvokeMode::Cycle) ++deg;
        indegree[name] = deg;
    }
    std::vector<std::string> topo;
    std::deque<std::string> ready;
    for (const auto& f : def.functions)
        if (indegree.count(f.name) && indegree[f.name] == 0) ready.push_back(f.name);
    while (!ready.empty()) {
        std::string name = ready.front();
        ready.pop_front();
        topo.push_back(name);
        for (const Edge* e : nodes[name].out_edges) {
            if (is_collab(*e) || e->mode == InvokeMode::Cycle) continue;
            if (--indegree[e->to] == 0) ready.push_back(e->to);
        }
    }
    if (topo.size() != indegree.size()) {
        diag(d, "CyclicWithoutCyclePrimitive",
             "workflow graph has a cycle not expressed via the cycle primitive");
        return result;
    }

    // Static steps and symbolic branch stacks, in topological order.
    for (const auto& name : topo) {
        auto& n = nodes[name];
        if (name == def.entry) {
            n.step = 0;
            n.stack_known = true;
            continue;
        }
        bool any_fanin = false, all_fanin = true;
        for (const Edge* e : n.in_edges) {
            if (is_collab(*e) || e->mode == InvokeMode::Cycle) continue;
            if (e->mode == InvokeMode::FanIn)
                any_fanin = true;
            else
                all_fanin = false;
        }
        if (any_fanin && !all_fanin) {
            diag(d, "MixedFanIn", "'" + name + "' mixes fan-in and non-fan-in incoming edges");
            continue;
        }

        std::optional<int> step;
        std::optional<SymStack> stack;
        bool consistent = true;
        std::vector<SymStack> popped;
        for (const Edge* e : n.in_edges) {
            if (is_collab(*e) || e->mode == InvokeMode::Cycle) continue;
            const auto& parent = nodes[e->from];
            int s = parent.step + 1;
            SymStack st = parent.stack;
            switch (e->mode) {
                case InvokeMode::Parallel: {
                    int pos = 0;
                    for (const Edge* oe : nodes[e->from].out_edges) {
                        if (oe == e) break;
                        if (oe->mode == InvokeMode::Parallel) ++pos;
                    }
                    st.push_back(pos);
                    break;
                }
                case InvokeMode::Map:
                    st.push_back(kMapLevel);
                    break;
                case InvokeMode::FanIn:
                    if (st.empty()) {
                        diag(d, "FanInAtRoot", "fan-in participant '" + e->from +
                                                   "' has an empty branch stack");
                        consistent = false;
                    } else {
                        popped.push_back(SymStack(st.begin(), st.end() - 1));
                    }
                    break;
                default:
                    break;  // sequence / choice / cycle exit: unchanged
            }
            if (step && *step != s && any_fanin) {
                diag(d, "FanInStepMismatch",
                     "fan-in participants of '" + name + "' are at unequal steps");
                consistent = false;
            }
            step = step ? std::max(*step, s) : s;
            if (e->mode != InvokeMode::FanIn) {
                if (stack && *stack != st) {
                    diag(d, "InconsistentBranch",
                         "'" + name + "' is reached with conflicting branch stacks");
                    consistent = false;
                }
                stack = std::move(st);
            }
        }
        if (!consistent) continue;
        n.step = step.value_or(0);
        if (any_fanin) {
            // Aggregator stack = merge of the popped participant stacks.
            bool all_equal = true;
            for (const auto& p : popped)
                if (p != popped.front()) all_equal = false;
            if (all_equal) {
                n.stack = popped.empty() ? SymStack{} : popped.front();
                n.stack_known = true;
            } else {
                bool concrete = true;
                for (const auto& p : popped)
                    for (int lvl : p)
                        if (lvl == kMapLevel) concrete = false;
                if (!concrete) {
                    diag(d, "UnsupportedFanIn",
                         "'" + name + "': map instances with unequal participant stacks");
                    continue;
                }
                std::vector<naming::BranchStack> with_level;
                for (const auto& p : popped) with_level.push_back(naming::BranchStack(
                    p.begin(), p.end()));
                // Re-add a sentinel level so pop_and_merge pops it back off.
                for (auto& s : with_level) s.push_back(0);
                n.stack = naming::pop_and_merge(with_level);
                n.stack_known = true;
            }
        } else if (stack) {
            n.stack = std::move(*stack);
            n.stack_known = true;
        }
    }
    if (!d.empty()) return result;

    SubGraphSet set;
    for (const auto& f : def.functions) {
        if (external.count(f.name)) continue;
        const auto& n = nodes[f.name];
        SubGraph sg;
        sg.self = f;

        auto next_info = [&](const std::string& target, InvokeMode mode) {
            const FunctionDecl* decl = def.find_function(target);
            const PlatformDecl* plat = decl ? def.find_platform(decl->platform) : nullptr;
            NextFunctionInfo info;
            info.name = target;
            info.platform = decl ? decl->platform : std::string{};
            info.invoke_mode = mode;
            info.failover = decl ? decl->failover : std::vector<std::string>{};
            info.payload_limit = plat ? plat->payload_limit_bytes : 0;
            return info;
        };

        std::vector<const Edge*> out = n.out_edges;
        if (out.empty()) {
            // Terminal node: its next functions are the GC trigger set.
            sg.invoke.mode = InvokeMode::GcTrigger;
            for (const auto& p : def.platforms) {
                sg.invoke.targets.push_back(gc_function_name(p.id));
                NextFunctionInfo info;
                info.name = gc_function_name(p.id);
                info.platform = p.id;
                info.invoke_mode = InvokeMode::GcTrigger;
                info.payload_limit = p.payload_limit_bytes;
                sg.next_funcs.push_back(std::move(info));
            }
        } else {
            const Edge* cycle_edge = nullptr;
            std::vector<const Edge*> plain;
            for (const Edge* e : out) {
                if (e->mode == InvokeMode::Cycle)
                    cycle_edge = e;
                else
                    plain.push_back(e);
            }
            if (cycle_edge) {
                if (cycle_edge->cycle_bound < 1) {
                    diag(d, "InvalidParams", "'" + f.name + "': cycle bound must be >= 1");
                    continue;
                }
                if (plain.size() != 1 || plain[0]->mode != InvokeMode::Sequence) {
                    diag(d, "InvalidCycle",
                         "'" + f.name + "' needs exactly one sequence exit edge beside the cycle");
                    continue;
                }
                sg.invoke.mode = InvokeMode::Cycle;
                sg.invoke.cycle_bound = cycle_edge->cycle_bound;
                sg.invoke.targets = {cycle_edge->to, plain[0]->to};
                sg.next_funcs.push_back(next_info(cycle_edge->to, InvokeMode::Cycle));
                sg.next_funcs.push_back(next_info(plain[0]->to, InvokeMode::Sequence));
            } else {
                InvokeMode mode = plain[0]->mode;
                for (const Edge* e : plain)
                    if (e->mode != mode)
                        diag(d, "MixedInvokeModes", "'" + f.name + "' mixes invocation modes");
                sg.invoke.mode = mode;
                switch (mode) {
                    case InvokeMode::Sequence:
                    case InvokeMode::FanIn:
                    case InvokeMode::Map:
                    case InvokeMode::ByBatch:
                    case InvokeMode::ByRedundant:
                        if (plain.size() != 1)
                            diag(d, "InvalidParams", "'" + f.name + "': mode '" +
                                                         to_string(mode) +
                                                         "' takes exactly one target");
                        break;
                    default:
                        break;
                }
                for (const Edge* e : plain) {
                    sg.invoke.targets.push_back(e->to);
                    sg.next_funcs.push_back(next_info(e->to, mode));
                }
                if (mode == InvokeMode::Map) {
                    if (plain[0]->map_width < 1)
                        diag(d, "InvalidParams", "'" + f.name + "': map width must be >= 1");
                    sg.invoke.map_width = plain[0]->map_width;
                }
                if (mode == InvokeMode::Choice) {
                    sg.invoke.predicate = plain[0]->predicate;
                    for (const Edge* e : plain)
                        if (e->predicate != sg.invoke.predicate)
                            diag(d, "InvalidParams",
                                 "'" + f.name + "': choice edges disagree on predicate");
                    if (sg.invoke.predicate.empty())
                        diag(d, "InvalidParams", "'" + f.name + "': choice needs a predicate id");
                }
                if (mode == InvokeMode::ByBatch) {
                    if (plain[0]->batch_size < 1)
                        diag(d, "InvalidParams", "'" + f.name + "': batch size must be >= 1");
                    sg.invoke.batch_size = plain[0]->batch_size;
                }
                if (mode == InvokeMode::ByRedundant) {
                    if (plain[0]->redundancy < 2)
                        diag(d, "InvalidParams", "'" + f.name + "': redundancy must be >= 2");
                    sg.invoke.redundancy = plain[0]->redundancy;
                }
            }
        }

        sg.transfer.transfer_by_ds = f.transfer_by_ds;
        sg.transfer.ds = f.ds;
        std::vector<std::string> target_platforms;
        for (const auto& nf : sg.next_funcs) target_platforms.push_back(nf.platform);
        sg.transfer.placement = majority_placement(f.platform, target_platforms);

        set.emplace(f.name, std::move(sg));
    }
    if (!d.empty()) return result;

    // Fan-in participant lists: attached to every participant's sub-graph.
    for (const auto& f : def.functions) {
        const auto& n = nodes[f.name];
        std::vector<const Edge*> fanin_edges;
        for (const Edge* e : n.in_edges)
            if (e->mode == InvokeMode::FanIn) fanin_edges.push_back(e);
        if (fanin_edges.empty()) continue;

        std::vector<ParticipantRef> participants;
        int declared_arity = 0;
        bool mapped = false;
        if (fanin_edges.size() == 1) {
            const auto& src = nodes[fanin_edges[0]->from];
            if (src.in_edges.size() == 1 && src.in_edges[0]->mode == InvokeMode::Map) {
                mapped = true;
                int width = src.in_edges[0]->map_width;
                for (int i = 0; i < width; ++i)
                    participants.push_back(ParticipantRef{fanin_edges[0]->from, i});
            }
        }
        if (!mapped) {
            for (const Edge* e : fanin_edges) {
                ParticipantRef ref{e->from, -1, {}};
                const SymStack& st = nodes[e->from].stack;
                bool concrete = std::none_of(st.begin(), st.end(),
                                             [](int lvl) { return lvl == kMapLevel; });
                if (concrete) ref.branch = naming::BranchStack(st.begin(), st.end());
                participants.push_back(std::move(ref));
            }
        }
        for (const Edge* e : fanin_edges)
            if (e->fan_in_arity > 0) declared_arity = e->fan_in_arity;
        if (declared_arity > 0 && declared_arity != static_cast<int>(participants.size())) {
            diag(d, "FanInArityMismatch",
                 "'" + f.name + "': declared arity " + std::to_string(declared_arity) +
                     " != in-degree " + std::to_string(participants.size()));
            continue;
        }

        // Branch rule for deriving the aggregator id locally.
        bool shared_prefix = true;
        SymStack first;
        bool have_first = false;
        for (const Edge* e : fanin_edges) {
            SymStack st = nodes[e->from].stack;
            if (st.empty()) continue;
            st.pop_back();
            if (!have_first) {
                first = st;
                have_first = true;
            } else if (st != first) {
                shared_prefix = false;
            }
        }
        if (mapped) shared_prefix = true;

        for (const Edge* e : fanin_edges) {
            auto it = set.find(e->from);
            if (it == set.end()) continue;
            auto& inv = it->second.invoke;
            inv.participants = participants;
            if (shared_prefix) {
                inv.agg_branch_rule = AggregatorBranchRule::ParentPrefix;
            } else {
                inv.agg_branch_rule = AggregatorBranchRule::Static;
                inv.agg_static_branch =
                    naming::BranchStack(n.stack.begin(), n.stack.end());
            }
        }
    }

    if (d.empty()) result.subgraphs = std::move(set);
    return result;
}

std::vector<Diagnostic> validate_subgraph_set(const SubGraphSet& set) {
    std::vector<Diagnostic> d;
    std::map<std::string, std::pair<std::string, std::vector<ParticipantRef>>> fanins;
    for (const auto& [name, sg] : set) {
        for (const auto& nf : sg.next_funcs) {
            if (nf.invoke_mode == InvokeMode::GcTrigger || is_gc_function(nf.name)) continue;
            if (nf.invoke_mode == InvokeMode::ByBatch ||
                nf.invoke_mode == InvokeMode::ByRedundant)
                continue;  // another workflow's entry
            if (!set.count(nf.name))
                diag(d, "MissingSubGraph", "target '" + nf.name + "' of '" + name + "'");
        }
        if (sg.invoke.mode == InvokeMode::FanIn && !sg.invoke.targets.empty()) {
            const std::string& agg = sg.invoke.targets.front();
            auto it = fanins.find(agg);
            if (it == fanins.end()) {
                fanins.emplace(agg, std::make_pair(name, sg.invoke.participants));
            } else if (it->second.second != sg.invoke.participants) {
                diag(d, "InconsistentFanIn",
                     "participant lists of '" + name + "' and '" + it->second.first +
                         "' disagree for aggregator '" + agg + "'");
            }
        }
    }
    return d;
}

// ---------------------------------------------------------------------------
// Sub-graph serialization (mirrors the TYPE fields one-to-one)

namespace {

json subgraph_to_json(const SubGraph& sg) {
    json self = {{"name", sg.self.name},
                 {"platform", sg.self.platform},
                 {"failover", sg.self.failover},
                 {"memoryClass", sg.self.memory_class}};
    json invoke;
    invoke["mode"] = to_string(sg.invoke.mode);
    invoke["targets"] = sg.invoke.targets;
    if (!sg.invoke.participants.empty()) {
        json parts = json::array();
        for (const auto& p : sg.invoke.participants) {
            json pj = {{"name", p.name}, {"instance", p.instance}};
            if (!p.branch.empty()) pj["branch"] = p.branch;
            parts.push_back(std::move(pj));
        }
        invoke["participants"] = std::move(parts);
        invoke["aggBranchRule"] =
            sg.invoke.agg_branch_rule == AggregatorBranchRule::Static ? "static" : "parentPrefix";
        if (sg.invoke.agg_branch_rule == AggregatorBranchRule::Static)
            invoke["aggStaticBranch"] = sg.invoke.agg_static_branch;
    }
    if (sg.invoke.map_width > 0) invoke["width"] = sg.invoke.map_width;
    if (sg.invoke.cycle_bound > 0) invoke["bound"] = sg.invoke.cycle_bound;
    if (!sg.invoke.predicate.empty()) invoke["predicate"] = sg.invoke.predicate;
    if (sg.invoke.batch_size > 0) invoke["batchSize"] = sg.invoke.batch_size;
    if (sg.invoke.redundancy > 0) invoke["count"] = sg.invoke.redundancy;

    json transfer = {{"transferByDs", sg.transfer.transfer_by_ds},
                     {"ds", sg.transfer.ds == DsKind::Object ? "object" : "table"},
                     {"placement", sg.transfer.placement}};
    json nexts = json::array();
    for (const auto& nf : sg.next_funcs)
        nexts.push_back({{"name", nf.name},
                         {"platform", nf.platform},
                         {"invokeMode", to_string(nf.invoke_mode)},
                         {"failover", nf.failover},
                         {"payloadLimit", nf.payload_limit}});
    return {{"self", std::move(self)},
            {"invoke", std::move(invoke)},
            {"transfer", std::move(transfer)},
            {"nextFuncs", std::move(nexts)}};
}

SubGraph subgraph_from_json(const json& j) {
    SubGraph sg;
    const json& self = j.at("self");
    sg.self.name = self.at("name").get<std::string>();
    sg.self.platform = self.at("platform").get<std::string>();
    sg.self.failover = self.value("failover", std::vector<std::string>{});
    sg.self.memory_class = self.value("memoryClass", std::string{});

    const json& invoke = j.at("invoke");
    sg.invoke.mode = invoke_mode_from_string(invoke.at("mode").get<std::string>())
                         .value_or(InvokeMode::Sequence);
    sg.invoke.targets = invoke.value("targets", std::vector<std::string>{});
    if (invoke.contains("participants")) {
        for (const auto& p : invoke["participants"])
            sg.invoke.participants.push_back(ParticipantRef{p.at("name").get<std::string>(),
                                                            p.value("instance", -1),
                                                            p.value("branch", naming::BranchStack{})});
        sg.invoke.agg_branch_rule = invoke.value("aggBranchRule", std::string{"parentPrefix"}) ==
                                            "static"
                                        ? AggregatorBranchRule::Static
                                        : AggregatorBranchRule::ParentPrefix;
        sg.invoke.agg_static_branch =
            invoke.value("aggStaticBranch", naming::BranchStack{});
    }
    sg.invoke.map_width = invoke.value("width", 0);
    sg.invoke.cycle_bound = invoke.value("bound", 0);
    sg.invoke.predicate = invoke.value("predicate", std::string{});
    sg.invoke.batch_size = invoke.value("batchSize", 0);
    sg.invoke.redundancy = invoke.value("count", 0);

    const json& transfer = j.at("transfer");
    sg.transfer.transfer_by_ds = transfer.value("transferByDs", false);
    sg.transfer.ds =
        transfer.value("ds", std::string{"table"}) == "object" ? DsKind::Object : DsKind::Table;
    sg.transfer.placement = transfer.value("placement", std::string{});

    for (const auto& nf : j.value("nextFuncs", json::array())) {
        NextFunctionInfo info;
        info.name = nf.at("name").get<std::string>();
        info.platform = nf.at("platform").get<std::string>();
        info.invoke_mode = invoke_mode_from_string(nf.at("invokeMode").get<std::string>())
                               .value_or(InvokeMode::Sequence);
        info.failover = nf.value("failover", std::vector<std::string>{});
        info.payload_limit = nf.value("payloadLimit", std::int64_t{0});
        sg.next_funcs.push_back(std::move(info));
    }
    return sg;
}

}  // namespace

json subgraph_set_to_json(const SubGraphSet& set) {
    json doc = json::object();
    for (const auto& [name, sg] : set) doc[name] = subgraph_to_json(sg);
    return doc;
}

std::string serialize_subgraph_set(const SubGraphSet& set) {
    return subgraph_set_to_json(set).dump(2);
}

SubGraphParseResult parse_subgraph_set(const std::string& text) {
    SubGraphParseResult result;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        diag(result.diagnostics, "SyntaxError",
             "byte " + std::to_string(e.byte) + ": " + e.what());
        return result;
    }
    if (!doc.is_object()) {
        diag(result.diagnostics, "SyntaxError", "sub-graph set must be an object");
        return result;
    }
    SubGraphSet set;
    for (const auto& [name, j] : doc.items()) {
        try {
            set.emplace(name, subgraph_from_json(j));
        } catch (const nlohmann::json::exception& e) {
            diag(result.diagnostics, "SyntaxError", "sub-graph '" + name + "': " + e.what());
        }
    }
    if (result.diagnostics.empty()) result.set = std::move(set);
    return result;
}

}  // namespace crossflow::ir
