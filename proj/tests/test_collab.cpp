#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "crossflow/harness.hpp"

using namespace crossflow;
using json = nlohmann::ordered_json;

namespace {

harness::Scenario batch_scenario(int submits, std::uint64_t seed = 7) {
    harness::Scenario s;
    s.fixtures = {"batch", "batchsink"};
    s.sim.seed = seed;
    harness::Submit submit;
    submit.workflow = "batch";
    submit.count = submits;
    s.submits = {submit};
    return s;
}

harness::Scenario redundant_scenario(const std::vector<std::pair<std::string, int>>& sessions,
                                     std::uint64_t seed = 7) {
    harness::Scenario s;
    s.fixtures = {"redundant", "redundantsink"};
    s.sim.seed = seed;
    for (const auto& [session, count] : sessions) {
        harness::Submit submit;
        submit.workflow = "redundant";
        submit.session = session;
        submit.count = count;
        s.submits.push_back(submit);
    }
    return s;
}

long window_deliveries(const harness::RunResult& result, const std::string& id) {
    auto it = result.report.deliveries.find(id);
    return it == result.report.deliveries.end() ? 0 : it->second;
}

}  // namespace

TEST_CASE("a full batch window launches the downstream workflow exactly once") {
    auto result = harness::run_scenario(batch_scenario(2));
    harness::CheckSpec spec;
    spec.allow_any_duplicates = true;
    REQUIRE(harness::check_invariants(result, spec).empty());

    CHECK(window_deliveries(result, "collab/bsink#w0/bsink_0") == 1);
    CHECK(window_deliveries(result, "collab/bsink#w1/bsink_0") == 0);
    // The sink workflow runs to its own terminal and gets collected.
    CHECK(window_deliveries(result, "collab/bsink#w0/bdone_1") == 1);
    CHECK(result.report.output_creates.at("collab/bsink#w0/bsink_0-output") == 1);
}

TEST_CASE("each additional full batch opens its own window") {
    auto result = harness::run_scenario(batch_scenario(4));
    harness::CheckSpec spec;
    spec.allow_any_duplicates = true;
    REQUIRE(harness::check_invariants(result, spec).empty());

    CHECK(window_deliveries(result, "collab/bsink#w0/bsink_0") == 1);
    CHECK(window_deliveries(result, "collab/bsink#w1/bsink_0") == 1);
    CHECK(window_deliveries(result, "collab/bsink#w2/bsink_0") == 0);
}

TEST_CASE("a partial batch waits without firing") {
    auto result = harness::run_scenario(batch_scenario(3));
    CHECK(window_deliveries(result, "collab/bsink#w0/bsink_0") == 1);
    CHECK(window_deliveries(result, "collab/bsink#w1/bsink_0") == 0);
    CHECK(result.report.dead.empty());
}

TEST_CASE("a retried batch contributor does not double-fire its window") {
    auto scenario = batch_scenario(2);
    scenario.faults.crashes.push_back(
        sim::CrashRule{"src_0", rt::CrashPoint::AfterInvokeBeforeIvkAppend, -1, 1});
    auto result = harness::run_scenario(scenario);
    harness::CheckSpec spec;
    spec.allow_any_duplicates = true;
    REQUIRE(harness::check_invariants(result, spec).empty());
    CHECK(window_deliveries(result, "collab/bsink#w0/bsink_0") >= 1);
    // Observables stay single even if the launch itself was re-sent.
    CHECK(result.report.output_creates.at("collab/bsink#w0/bsink_0-output") == 1);
    CHECK(window_deliveries(result, "collab/bsink#w1/bsink_0") == 0);
}

TEST_CASE("redundant submissions in one session race to a single winner") {
    auto result = harness::run_scenario(redundant_scenario({{"s1", 3}}));
    harness::CheckSpec spec;
    spec.allow_any_duplicates = true;
    REQUIRE(harness::check_invariants(result, spec).empty());

    CHECK(window_deliveries(result, "collab/rsink#ss1/rsink_0") == 1);
    CHECK(result.report.output_creates.at("collab/rsink#ss1/rsink_0-output") == 1);
}

TEST_CASE("distinct sessions each get their own redundant round") {
    auto result = harness::run_scenario(redundant_scenario({{"s1", 2}, {"s2", 2}}));
    harness::CheckSpec spec;
    spec.allow_any_duplicates = true;
    REQUIRE(harness::check_invariants(result, spec).empty());

    CHECK(window_deliveries(result, "collab/rsink#ss1/rsink_0") == 1);
    CHECK(window_deliveries(result, "collab/rsink#ss2/rsink_0") == 1);
}

TEST_CASE("collaboration launches survive the crash-point sweep") {
    auto violations = harness::verify_scenario(batch_scenario(2));
    std::string first = violations.empty() ? std::string{} : violations.front();
    CHECK_MESSAGE(violations.empty(), first);

    violations = harness::verify_scenario(redundant_scenario({{"s1", 2}}));
    first = violations.empty() ? std::string{} : violations.front();
    CHECK_MESSAGE(violations.empty(), first);
}
