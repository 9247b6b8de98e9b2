#include "crossflow/harness.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

namespace crossflow::harness {

namespace {

ir::WorkflowDef parse_or_throw(const std::string& text, const std::string& label) {
    ir::ParseResult parsed = ir::parse_workflow_def(text);
    if (!parsed.ok()) {
        std::string what = label + " failed to parse:";
        for (const auto& d : parsed.diagnostics) what += " " + d.code + "(" + d.detail + ")";
        throw std::runtime_error(what);
    }
    return *parsed.def;
}

ir::SubGraphSet compile_or_throw(const ir::WorkflowDef& def) {
    ir::CompileResult compiled = ir::compile_subgraphs(def);
    if (!compiled.ok()) {
        std::string what = "workflow '" + def.name + "' failed to compile:";
        for (const auto& d : compiled.diagnostics) what += " " + d.code + "(" + d.detail + ")";
        throw std::runtime_error(what);
    }
    return *compiled.subgraphs;
}

struct LoadedWorkflows {
    std::map<std::string, ir::WorkflowDef> defs;  // by workflow name
    ir::SubGraphSet merged;
};

LoadedWorkflows load_workflows(const Scenario& scenario) {
    LoadedWorkflows loaded;
    auto add = [&](const ir::WorkflowDef& def) {
        ir::SubGraphSet set = compile_or_throw(def);
        for (auto& [name, sg] : set) loaded.merged[name] = sg;
        loaded.defs[def.name] = def;
    };
    for (const auto& name : scenario.fixtures) add(fixtures::workflow(name));
    for (const auto& doc : scenario.inline_workflows)
        add(parse_or_throw(doc.dump(), "inline workflow"));
    return loaded;
}

bool starts_with(const std::string& s, const std::string& prefix) {
    return s.rfind(prefix, 0) == 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Scenario (de)serialization

Scenario Scenario::from_json(const json& j) {
    Scenario s;
    for (const auto& f : j.value("fixtures", json::array())) s.fixtures.push_back(f);
    for (const auto& w : j.value("workflows", json::array())) s.inline_workflows.push_back(w);
    if (j.contains("topology")) s.topology = sim::Topology::from_json(j["topology"]);
    if (j.contains("faults")) s.faults = sim::FaultPlan::from_json(j["faults"]);
    if (j.contains("config")) s.sim.runtime = rt::RuntimeConfig::from_json(j["config"]);
    if (j.contains("sim")) {
        const json& sj = j["sim"];
        s.sim.seed = sj.value("seed", s.sim.seed);
        s.sim.tie_break_salt = sj.value("tieBreakSalt", s.sim.tie_break_salt);
        s.sim.max_events = sj.value("maxEvents", s.sim.max_events);
        s.sim.gc_delay_ticks = sj.value("gcDelayTicks", s.sim.gc_delay_ticks);
    }
    for (const auto& sub : j.value("submits", json::array())) {
        Submit submit;
        submit.workflow = sub.at("workflow").get<std::string>();
        submit.input = sub.value("input", submit.input);
        submit.session = sub.value("session", submit.session);
        submit.count = sub.value("count", 1);
        s.submits.push_back(std::move(submit));
    }
    return s;
}

json Scenario::to_json() const {
    json j;
    j["fixtures"] = fixtures;
    if (!inline_workflows.empty()) j["workflows"] = inline_workflows;
    j["topology"] = topology.to_json();
    j["faults"] = faults.to_json();
    j["config"] = sim.runtime.to_json();
    j["sim"] = {{"seed", sim.seed},
                {"tieBreakSalt", sim.tie_break_salt},
                {"maxEvents", sim.max_events},
                {"gcDelayTicks", sim.gc_delay_ticks}};
    json submits_j = json::array();
    for (const auto& s : submits)
        submits_j.push_back({{"workflow", s.workflow},
                             {"input", s.input},
                             {"session", s.session},
                             {"count", s.count}});
    j["submits"] = std::move(submits_j);
    return j;
}

json RunResult::to_json() const {
    json runs_j = json::array();
    for (const auto& r : runs)
        runs_j.push_back({{"workflow", r.workflow_name},
                          {"workflowId", r.workflow_id},
                          {"entry", r.entry},
                          {"terminal", r.terminal}});
    return {{"runs", std::move(runs_j)}, {"report", report.to_json()}};
}

// ---------------------------------------------------------------------------
// Running

RunResult run_scenario(const Scenario& scenario) {
    LoadedWorkflows loaded = load_workflows(scenario);

    sim::SimCloud cloud(scenario.topology, scenario.faults, scenario.sim);
    cloud.load_subgraphs(loaded.merged);
    for (const auto& name : scenario.fixtures) fixtures::register_functions(cloud, name);

    RunResult result;
    std::vector<Submit> submits = scenario.submits;
    if (submits.empty() && !loaded.defs.empty()) {
        Submit def_submit;
        def_submit.workflow = loaded.defs.begin()->first;
        submits.push_back(def_submit);
    }
    for (const auto& submit : submits) {
        auto it = loaded.defs.find(submit.workflow);
        if (it == loaded.defs.end())
            throw std::runtime_error("submit references unknown workflow '" + submit.workflow +
                                     "'");
        for (int i = 0; i < submit.count; ++i) {
            std::string wfid =
                cloud.submit(it->second.entry, submit.input, it->second.name, submit.session);
            result.runs.push_back(
                SubmittedRun{it->second.name, wfid, it->second.entry, it->second.terminal});
        }
    }

    result.report = cloud.run_until_quiescent();
    return result;
}

// ---------------------------------------------------------------------------
// Invariants

std::vector<std::string> check_invariants(const RunResult& result, const CheckSpec& spec) {
    std::vector<std::string> violations;
    const sim::RunReport& report = result.report;

    if (report.status != "ok") violations.push_back("run status: " + report.status);
    for (const auto& e : report.errors) violations.push_back("error: " + e);
    if (!spec.allow_dead)
        for (const auto& d : report.dead)
            violations.push_back("dead delivery: " + d.function_id + " (" + d.reason + ")");

    // At-most-once data production: every checkpoint key was created exactly
    // once over the whole run (a re-creation after garbage collection would
    // show up as a second create).
    for (const auto& [key, n] : report.output_creates)
        if (n != 1)
            violations.push_back("output '" + key + "' created " + std::to_string(n) + " times");

    // At-least-once completion: the terminal function of every submitted
    // workflow ran.
    for (const auto& run : result.runs) {
        std::string prefix = run.workflow_id + "/" + run.terminal + "_";
        bool reached = false;
        for (const auto& [id, n] : report.deliveries) {
            (void)n;
            if (starts_with(id, prefix)) reached = true;
        }
        if (!reached)
            violations.push_back("workflow " + run.workflow_id + " never reached terminal '" +
                                 run.terminal + "'");
    }

    // Cleanup: once a workflow's sweep ran, nothing with its prefix survives.
    for (const auto& run : result.runs) {
        bool swept = false;
        for (const auto& [id, n] : report.deliveries) {
            (void)n;
            if (starts_with(id, run.workflow_id + "/gc.")) swept = true;
        }
        if (!swept) continue;
        for (const auto& [store, keys] : report.remaining_keys)
            for (const auto& key : keys)
                if (starts_with(key, run.workflow_id + "/"))
                    violations.push_back("gc residue in " + store + ": " + key);
    }

    // At-most-once invocation: duplicate deliveries only where the fault plan
    // explains them.
    if (!spec.allow_any_duplicates) {
        for (const auto& [id, n] : report.deliveries) {
            if (n <= 1) continue;
            if (spec.allowed_duplicate_ids.count(id)) continue;
            violations.push_back("duplicate delivery (" + std::to_string(n) + "x): " + id);
        }
    }

    return violations;
}

// ---------------------------------------------------------------------------
// Crash-point sweep

std::vector<std::string> verify_scenario(const Scenario& scenario) {
    std::vector<std::string> violations;

    RunResult baseline = run_scenario(scenario);
    CheckSpec strict;
    for (const auto& v : check_invariants(baseline, strict))
        violations.push_back("baseline: " + v);
    if (!violations.empty()) return violations;

    // One injection per function execution and protocol point observed in the
    // crash-free run. Workflow ids are seed-derived, so the short ids carry
    // over between reruns.
    struct Injection {
        std::string function;
        rt::CrashPoint point;
    };
    std::vector<Injection> injections;
    for (const auto& [id, n] : baseline.report.deliveries) {
        (void)n;
        auto slash = id.find('/');
        if (slash == std::string::npos) continue;
        std::string short_id = id.substr(slash + 1);
        if (starts_with(short_id, "gc.")) {
            injections.push_back({short_id, rt::CrashPoint::MidGcSweep});
            continue;
        }
        injections.push_back({short_id, rt::CrashPoint::BeforeOutputCkpt});
        injections.push_back({short_id, rt::CrashPoint::AfterOutputBeforeInvoke});
        injections.push_back({short_id, rt::CrashPoint::MidInvokeBatch});
        injections.push_back({short_id, rt::CrashPoint::AfterInvokeBeforeIvkAppend});
    }

    for (const auto& inj : injections) {
        Scenario variant = scenario;
        sim::CrashRule rule;
        rule.function = inj.function;
        rule.point = inj.point;
        rule.batch = -1;
        rule.times = 1;
        variant.faults.crashes.push_back(rule);

        RunResult result = run_scenario(variant);
        CheckSpec spec;
        spec.allow_any_duplicates = true;  // redeliveries are the point here
        for (const auto& v : check_invariants(result, spec))
            violations.push_back("crash " + rt::to_string(inj.point) + " in " + inj.function +
                                 ": " + v);
    }
    return violations;
}

// ---------------------------------------------------------------------------
// Fixture emission / report diff

void emit_fixtures(const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    auto write = [&](const std::string& name, const std::string& content) {
        std::ofstream out(fs::path(out_dir) / name, std::ios::binary);
        out << content << '\n';
    };

    write("topology.json", fixtures::default_topology().to_json().dump(2));
    for (const auto& name : fixtures::fixture_names()) {
        write(name + ".workflow.json", fixtures::workflow_json(name));
        ir::SubGraphSet set = compile_or_throw(fixtures::workflow(name));
        write(name + ".subgraphs.json", ir::serialize_subgraph_set(set));
    }

    auto scenario_doc = [](std::vector<std::string> fixture_list, json submits) {
        json j;
        j["fixtures"] = std::move(fixture_list);
        j["sim"] = {{"seed", 7}, {"maxEvents", 100000}};
        j["submits"] = std::move(submits);
        return j;
    };
    for (const std::string& name :
         {"seq-3", "diamond", "mapfan", "cycle-2", "failover", "choice", "bigdata", "chain-6"}) {
        write(name + ".scenario.json",
              scenario_doc({name}, json::array({{{"workflow", name}, {"input", "hello"}}}))
                  .dump(2));
    }
    write("batch.scenario.json",
          scenario_doc({"batch", "batchsink"},
                       json::array({{{"workflow", "batch"}, {"input", "hello"}, {"count", 2}}}))
              .dump(2));
    write("redundant.scenario.json",
          scenario_doc({"redundant", "redundantsink"},
                       json::array({{{"workflow", "redundant"},
                                     {"input", "hello"},
                                     {"session", "s1"},
                                     {"count", 2}}}))
              .dump(2));

    json failover_scenario;
    failover_scenario["fixtures"] = json::array({"failover"});
    failover_scenario["sim"] = {{"seed", 7}, {"maxEvents", 100000}};
    // The window covers the entry's invocation of B (so it fails over to p1)
    // but ends before the gc sweep needs p2 again.
    failover_scenario["faults"] = {{"outages", json::array({{{"platform", "p2"},
                                                             {"fromEvent", 0},
                                                             {"toEvent", 3}}})}};
    failover_scenario["submits"] = json::array({{{"workflow", "failover"}, {"input", "hello"}}});
    write("failover-outage.scenario.json", failover_scenario.dump(2));
}

namespace {

void diff_into(const json& a, const json& b, const std::string& path,
               std::vector<std::string>& out) {
    if (a == b) return;
    if (a.type() != b.type() || (!a.is_object() && !a.is_array())) {
        out.push_back(path + ": " + a.dump() + " != " + b.dump());
        return;
    }
    if (a.is_object()) {
        for (const auto& [key, value] : a.items()) {
            if (!b.contains(key))
                out.push_back(path + "/" + key + ": only in first");
            else
                diff_into(value, b[key], path + "/" + key, out);
        }
        for (const auto& [key, value] : b.items()) {
            (void)value;
            if (!a.contains(key)) out.push_back(path + "/" + key + ": only in second");
        }
        return;
    }
    if (a.size() != b.size()) {
        out.push_back(path + ": array sizes " + std::to_string(a.size()) + " != " +
                      std::to_string(b.size()));
        return;
    }
    for (std::size_t i = 0; i < a.size(); ++i)
        diff_into(a[i], b[i], path + "/" + std::to_string(i), out);
}

}  // namespace

std::vector<std::string> report_diff(const json& a, const json& b) {
    std::vector<std::string> out;
    diff_into(a, b, "", out);
    return out;
}

}  // namespace crossflow::harness
