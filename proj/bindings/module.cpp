#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "crossflow/harness.hpp"

namespace py = pybind11;
using json = nlohmann::ordered_json;

namespace {

// The Python surface exchanges JSON text; the typed API stays in C++.
std::string compile_workflow(const std::string& workflow_json) {
    auto parsed = crossflow::ir::parse_workflow_def(workflow_json);
    if (!parsed.ok()) {
        std::string what = "workflow failed to parse:";
        for (const auto& d : parsed.diagnostics) what += " " + d.code + "(" + d.detail + ")";
        throw std::invalid_argument(what);
    }
    auto compiled = crossflow::ir::compile_subgraphs(*parsed.def);
    if (!compiled.ok()) {
        std::string what = "workflow failed to compile:";
        for (const auto& d : compiled.diagnostics) what += " " + d.code + "(" + d.detail + ")";
        throw std::invalid_argument(what);
    }
    return crossflow::ir::serialize_subgraph_set(*compiled.subgraphs);
}

std::vector<std::string> workflow_diagnostics(const std::string& workflow_json) {
    std::vector<std::string> out;
    auto parsed = crossflow::ir::parse_workflow_def(workflow_json);
    for (const auto& d : parsed.diagnostics) out.push_back(d.code + ": " + d.detail);
    if (!parsed.def) return out;
    auto compiled = crossflow::ir::compile_subgraphs(*parsed.def);
    for (const auto& d : compiled.diagnostics) out.push_back(d.code + ": " + d.detail);
    return out;
}

crossflow::harness::Scenario scenario_from_text(const std::string& text) {
    json doc = json::parse(text);
    return crossflow::harness::Scenario::from_json(doc);
}

std::string run_scenario_text(const std::string& scenario_json) {
    auto result = crossflow::harness::run_scenario(scenario_from_text(scenario_json));
    return result.to_json().dump(2);
}

std::vector<std::string> verify_scenario_text(const std::string& scenario_json) {
    return crossflow::harness::verify_scenario(scenario_from_text(scenario_json));
}

std::vector<std::string> report_diff_text(const std::string& a, const std::string& b) {
    return crossflow::harness::report_diff(json::parse(a), json::parse(b));
}

}  // namespace

PYBIND11_MODULE(_crossflow, m) {
    m.doc() = "Serverless workflow orchestration sandbox";

    m.def("fixture_names", &crossflow::fixtures::fixture_names);
    m.def("fixture_workflow", &crossflow::fixtures::workflow_json, py::arg("name"));
    m.def("compile_workflow", &compile_workflow, py::arg("workflow_json"),
          "Compile a workflow definition into its per-function sub-graph set.");
    m.def("workflow_diagnostics", &workflow_diagnostics, py::arg("workflow_json"));
    m.def("run_scenario", &run_scenario_text, py::arg("scenario_json"),
          "Run a scenario and return the report document.");
    m.def("verify_scenario", &verify_scenario_text, py::arg("scenario_json"),
          "Sweep crash injections over a scenario; returns violations.");
    m.def("emit_fixtures", &crossflow::harness::emit_fixtures, py::arg("out_dir"));
    m.def("report_diff", &report_diff_text, py::arg("first"), py::arg("second"));

    m.def("render_function_id",
          [](const std::string& workflow_id, const std::string& name, int step,
             const std::vector<int>& branch) {
              return crossflow::naming::render(
                  crossflow::naming::compute_function_id(workflow_id, name, step, branch));
          },
          py::arg("workflow_id"), py::arg("name"), py::arg("step"),
          py::arg("branch") = std::vector<int>{});
    m.def("pop_and_merge", [](std::vector<std::vector<int>> stacks) {
        return crossflow::naming::pop_and_merge(std::move(stacks));
    });
}
