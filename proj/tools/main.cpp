#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "crossflow/harness.hpp"

namespace {

using json = nlohmann::ordered_json;

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

std::optional<std::string> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

bool write_output(const std::string& out_path, const std::string& content) {
    if (out_path.empty()) {
        std::cout << content << '\n';
        return true;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) return false;
    out << content << '\n';
    return true;
}

std::optional<crossflow::harness::Scenario> load_scenario(const std::string& path,
                                                          std::optional<std::uint64_t> seed) {
    auto text = read_file(path);
    if (!text) {
        std::cerr << "cannot read scenario file: " << path << '\n';
        return std::nullopt;
    }
    json doc = json::parse(*text, nullptr, false);
    if (doc.is_discarded()) {
        std::cerr << "scenario file is not valid JSON: " << path << '\n';
        return std::nullopt;
    }
    try {
        auto scenario = crossflow::harness::Scenario::from_json(doc);
        if (seed) scenario.sim.seed = *seed;
        return scenario;
    } catch (const std::exception& e) {
        std::cerr << "invalid scenario: " << e.what() << '\n';
        return std::nullopt;
    }
}

std::string render_totals(const crossflow::sim::OpCounts& totals) {
    std::ostringstream out;
    out << "writes=" << totals.writes << " reads=" << totals.reads
        << " objectWrites=" << totals.object_writes << " objectReads=" << totals.object_reads
        << " invokes=" << totals.invokes << " crossCloud=" << totals.cross_cloud_transfers
        << " clientCreates=" << totals.faas_client_creates;
    return out.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Serverless workflow orchestration sandbox"};
    app.require_subcommand(1);

    std::string scenario_path, out_path, format = "json";
    std::optional<std::uint64_t> seed;

    auto add_common = [&](CLI::App* cmd, bool needs_scenario) {
        if (needs_scenario)
            cmd->add_option("--scenario", scenario_path, "scenario file")->required();
        cmd->add_option("--seed", seed, "override the scenario seed");
        cmd->add_option("--out", out_path, "write output to this path");
        cmd->add_option("--format", format, "json or text")
            ->check(CLI::IsMember({"json", "text"}));
    };

    CLI::App* run_cmd = app.add_subcommand("run", "execute a scenario and emit its report");
    add_common(run_cmd, true);

    CLI::App* verify_cmd =
        app.add_subcommand("verify", "sweep crash injections over a scenario");
    add_common(verify_cmd, true);

    CLI::App* fixtures_cmd = app.add_subcommand("fixtures", "write the bundled fixtures");
    std::string fixtures_dir;
    fixtures_cmd->add_option("--out", fixtures_dir, "output directory")->required();

    CLI::App* diff_cmd = app.add_subcommand("report-diff", "compare two report files");
    std::string diff_a, diff_b;
    diff_cmd->add_option("first", diff_a, "first report")->required();
    diff_cmd->add_option("second", diff_b, "second report")->required();
    diff_cmd->add_option("--format", format, "json or text")
        ->check(CLI::IsMember({"json", "text"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (run_cmd->parsed()) {
            auto scenario = load_scenario(scenario_path, seed);
            if (!scenario) return kUsage;
            auto result = crossflow::harness::run_scenario(*scenario);
            if (format == "json") {
                write_output(out_path, result.to_json().dump(2));
            } else {
                std::ostringstream out;
                out << "status: " << result.report.status << '\n'
                    << "events: " << result.report.events_processed << '\n'
                    << "totals: " << render_totals(result.report.totals);
                write_output(out_path, out.str());
            }
            bool ok = result.report.status == "ok" && result.report.errors.empty() &&
                      result.report.dead.empty();
            return ok ? kOk : kFailure;
        }

        if (verify_cmd->parsed()) {
            auto scenario = load_scenario(scenario_path, seed);
            if (!scenario) return kUsage;
            auto violations = crossflow::harness::verify_scenario(*scenario);
            if (format == "json") {
                json doc = {{"ok", violations.empty()}, {"violations", violations}};
                write_output(out_path, doc.dump(2));
            } else {
                std::ostringstream out;
                if (violations.empty()) {
                    out << "ok";
                } else {
                    for (const auto& v : violations) out << v << '\n';
                }
                write_output(out_path, out.str());
            }
            return violations.empty() ? kOk : kFailure;
        }

        if (fixtures_cmd->parsed()) {
            crossflow::harness::emit_fixtures(fixtures_dir);
            return kOk;
        }

        if (diff_cmd->parsed()) {
            auto text_a = read_file(diff_a);
            auto text_b = read_file(diff_b);
            if (!text_a || !text_b) {
                std::cerr << "cannot read report files\n";
                return kUsage;
            }
            json a = json::parse(*text_a, nullptr, false);
            json b = json::parse(*text_b, nullptr, false);
            if (a.is_discarded() || b.is_discarded()) {
                std::cerr << "report files are not valid JSON\n";
                return kUsage;
            }
            auto diffs = crossflow::harness::report_diff(a, b);
            if (format == "json") {
                json doc = {{"equal", diffs.empty()}, {"differences", diffs}};
                std::cout << doc.dump(2) << '\n';
            } else {
                for (const auto& d : diffs) std::cout << d << '\n';
            }
            return diffs.empty() ? kOk : kFailure;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kUsage;
}
