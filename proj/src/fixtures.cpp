#include "crossflow/fixtures.hpp"

#include <stdexcept>

namespace crossflow::fixtures {

using json = nlohmann::ordered_json;

namespace {

json platforms_decl() {
    return {{"p1", {{"payloadLimitBytes", 262144}}}, {"p2", {{"payloadLimitBytes", 131072}}}};
}

json fn(const std::string& platform) { return {{"platform", platform}}; }

json edge(const std::string& from, const std::string& to, const std::string& mode,
          json params = json::object()) {
    return {{"from", from}, {"to", to}, {"mode", mode}, {"params", std::move(params)}};
}

json def(const std::string& name, json functions, json edges, const std::string& entry,
         const std::string& terminal) {
    return {{"name", name},          {"platforms", platforms_decl()},
            {"functions", std::move(functions)}, {"edges", std::move(edges)},
            {"entry", entry},        {"terminal", terminal}};
}

// Aggregators receive a manifest of participant output locations and pull
// each value through the context.
rt::UserFunction make_aggregator() {
    return [](const shim::Bytes& input, rt::UserContext& ctx) -> shim::Bytes {
        json manifest = json::parse(input);
        std::string joined;
        for (const auto& entry : manifest) {
            rt::DataRef ref;
            ref.key = entry.at("key").get<std::string>();
            ref.ds.platform_id = entry.at("platform").get<std::string>();
            ref.ds.kind = entry.value("ds", std::string{"table"}) == "object"
                              ? ir::DsKind::Object
                              : ir::DsKind::Table;
            if (!joined.empty()) joined += '|';
            joined += ctx.fetch(ref);
        }
        return joined;
    };
}

}  // namespace

sim::Topology default_topology() {
    sim::Topology topo;
    topo.platforms.push_back(sim::PlatformSim{"p1", 262144, 400000});
    topo.platforms.push_back(sim::PlatformSim{"p2", 131072, 400000});
    return topo;
}

std::vector<std::string> fixture_names() {
    return {"seq-3",  "diamond",   "fanout-3", "mapfan",  "cycle-2",      "failover",
            "choice", "bigdata",   "chain-6",  "batch",   "batchsink",
            "redundant", "redundantsink"};
}

std::string chain_json(int length) {
    if (length < 2) throw std::invalid_argument("chain needs at least two functions");
    json functions = json::object();
    json edges = json::array();
    for (int i = 0; i < length; ++i) {
        std::string name = "f" + std::to_string(i);
        functions[name] = fn(i % 2 == 0 ? "p1" : "p2");
        if (i > 0) edges.push_back(edge("f" + std::to_string(i - 1), name, "sequence"));
    }
    return def("chain-" + std::to_string(length), std::move(functions), std::move(edges), "f0",
               "f" + std::to_string(length - 1))
        .dump(2);
}

std::string mapfan_json(int width) {
    json functions = {{"data.map", fn("p1")},
                      {"data.process", fn("p1")},
                      {"data.aggregation", fn("p1")},
                      {"data.out", fn("p1")}};
    json edges = json::array();
    edges.push_back(edge("data.map", "data.process", "map", {{"width", width}}));
    edges.push_back(edge("data.process", "data.aggregation", "fanin"));
    edges.push_back(edge("data.aggregation", "data.out", "sequence"));
    return def("mapfan", std::move(functions), std::move(edges), "data.map", "data.out").dump(2);
}

std::string workflow_json(const std::string& name) {
    if (name == "seq-3") {
        json functions = {{"A", fn("p1")}, {"B", fn("p2")}, {"C", fn("p1")}};
        json edges = {edge("A", "B", "sequence"), edge("B", "C", "sequence")};
        return def("seq-3", functions, edges, "A", "C").dump(2);
    }
    if (name == "diamond") {
        json functions = {{"A", fn("p1")}, {"B", fn("p1")}, {"C", fn("p2")}, {"D", fn("p1")}};
        json edges = {edge("A", "B", "parallel"), edge("A", "C", "parallel"),
                      edge("B", "D", "fanin"), edge("C", "D", "fanin")};
        return def("diamond", functions, edges, "A", "D").dump(2);
    }
    if (name == "fanout-3") {
        json functions = {{"A", fn("p1")}, {"B0", fn("p1")}, {"B1", fn("p2")},
                          {"B2", fn("p1")}, {"E", fn("p1")}};
        json edges = {edge("A", "B0", "parallel"), edge("A", "B1", "parallel"),
                      edge("A", "B2", "parallel"), edge("B0", "E", "fanin"),
                      edge("B1", "E", "fanin"), edge("B2", "E", "fanin")};
        return def("fanout-3", functions, edges, "A", "E").dump(2);
    }
    if (name == "mapfan") return mapfan_json(32);
    if (name == "cycle-2") {
        json functions = {{"A", fn("p1")}, {"B", fn("p1")}, {"C", fn("p1")}};
        json edges = {edge("A", "B", "sequence"), edge("B", "A", "cycle", {{"bound", 2}}),
                      edge("B", "C", "sequence")};
        return def("cycle-2", functions, edges, "A", "C").dump(2);
    }
    if (name == "failover") {
        json functions = json::object();
        functions["A"] = fn("p1");
        functions["B"] = {{"platform", "p2"}, {"failover", json::array({"p1"})}};
        functions["C"] = fn("p1");
        json edges = {edge("A", "B", "sequence"), edge("B", "C", "sequence")};
        return def("failover", functions, edges, "A", "C").dump(2);
    }
    if (name == "choice") {
        json functions = {{"A", fn("p1")}, {"B", fn("p1")}, {"C", fn("p2")}, {"D", fn("p1")}};
        json edges = {edge("A", "B", "choice", {{"predicate", "parity"}}),
                      edge("A", "C", "choice", {{"predicate", "parity"}}),
                      edge("B", "D", "sequence"), edge("C", "D", "sequence")};
        return def("choice", functions, edges, "A", "D").dump(2);
    }
    if (name == "bigdata") {
        json functions = {{"A", fn("p1")}, {"B", fn("p2")}, {"C", fn("p1")}};
        json edges = {edge("A", "B", "sequence"), edge("B", "C", "sequence")};
        return def("bigdata", functions, edges, "A", "C").dump(2);
    }
    if (name == "chain-6") return chain_json(6);
    if (name == "batch") {
        json functions = {{"src", fn("p1")}, {"bsink", fn("p1")}};
        json edges = {edge("src", "bsink", "bybatch", {{"batchSize", 2}})};
        return def("batch", functions, edges, "src", "src").dump(2);
    }
    if (name == "batchsink") {
        json functions = {{"bsink", fn("p1")}, {"bdone", fn("p1")}};
        json edges = {edge("bsink", "bdone", "sequence")};
        return def("batchsink", functions, edges, "bsink", "bdone").dump(2);
    }
    if (name == "redundant") {
        json functions = {{"rgen", fn("p1")}, {"rsink", fn("p1")}};
        json edges = {edge("rgen", "rsink", "byredundant", {{"count", 2}})};
        return def("redundant", functions, edges, "rgen", "rgen").dump(2);
    }
    if (name == "redundantsink") {
        json functions = {{"rsink", fn("p1")}, {"rdone", fn("p1")}};
        json edges = {edge("rsink", "rdone", "sequence")};
        return def("redundantsink", functions, edges, "rsink", "rdone").dump(2);
    }
    throw std::out_of_range("unknown fixture '" + name + "'");
}

ir::WorkflowDef workflow(const std::string& name) {
    ir::ParseResult parsed = ir::parse_workflow_def(workflow_json(name));
    if (!parsed.ok()) {
        std::string what = "fixture '" + name + "' failed to parse:";
        for (const auto& d : parsed.diagnostics) what += " " + d.code + "(" + d.detail + ")";
        throw std::runtime_error(what);
    }
    return *parsed.def;
}

void register_functions(sim::SimCloud& cloud, const std::string& name) {
    if (name == "diamond") {
        cloud.register_user_function("D", make_aggregator());
        return;
    }
    if (name == "fanout-3") {
        cloud.register_user_function("E", make_aggregator());
        return;
    }
    if (name == "mapfan") {
        cloud.register_user_function(
            "data.process", [](const shim::Bytes& input, rt::UserContext& ctx) -> shim::Bytes {
                int instance = ctx.state->branch.empty() ? 0 : ctx.state->branch.back();
                return input + ":" + std::to_string(instance);
            });
        cloud.register_user_function("data.aggregation", make_aggregator());
        return;
    }
    if (name == "choice") {
        cloud.register_predicate("parity", [](const shim::Bytes& output) {
            return static_cast<int>(output.size() % 2);
        });
        return;
    }
    if (name == "bigdata") {
        cloud.register_user_function("A", [](const shim::Bytes&, rt::UserContext&) {
            return shim::Bytes(200000, 'x');
        });
        cloud.register_user_function("B", [](const shim::Bytes& input, rt::UserContext&) {
            return std::to_string(input.size());
        });
        return;
    }
    if (name == "batchsink") {
        cloud.register_user_function("bsink", make_aggregator());
        return;
    }
    // Remaining fixtures run on the identity default.
    (void)cloud;
}

}  // namespace crossflow::fixtures
