#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "crossflow/naming.hpp"

using namespace crossflow::naming;

TEST_CASE("function name validation") {
    CHECK(valid_function_name("A"));
    CHECK(valid_function_name("data.process"));
    CHECK(valid_function_name("f12"));
    CHECK(valid_function_name("gc.p1"));
    CHECK_FALSE(valid_function_name(""));
    CHECK_FALSE(valid_function_name(".hidden"));
    CHECK_FALSE(valid_function_name("a_b"));   // '_' separates name and step
    CHECK_FALSE(valid_function_name("a-b"));   // '-' introduces the branch suffix
    CHECK_FALSE(valid_function_name("a+b"));   // '+' separates branch levels
    CHECK_FALSE(valid_function_name("a/b"));   // '/' separates workflow id and name
}

TEST_CASE("push_branch appends the most recent level") {
    BranchStack s;
    s = push_branch(s, 1);
    s = push_branch(s, 0);
    CHECK(s == BranchStack{1, 0});
    CHECK_THROWS_AS(push_branch(s, -1), std::invalid_argument);
}

TEST_CASE("rendering grammar") {
    CHECK(render(FunctionId{"w", "A", 0, {}}) == "w/A_0");
    CHECK(render(FunctionId{"w", "A", 4, {0}}) == "w/A_4-bindex-0");
    CHECK(render(FunctionId{"wf7", "data.process", 2, {1, 0, 3}}) ==
          "wf7/data.process_2-bindex-1+0+3");
    CHECK(render_branch({}) == "");
    CHECK(render_branch({2}) == "2");
    CHECK(render_branch({2, 0, 5}) == "2+0+5");
}

TEST_CASE("derived keys") {
    KeySet keys = derive_keys(FunctionId{"w", "B", 1, {0}});
    CHECK(keys.output_key == "w/B_1-bindex-0-output");
    CHECK(keys.ivk_key == "w/B_1-bindex-0-ivk");
    CHECK(keys.bitmap_key == "w/B_1-bindex-0-bitmap");
}

TEST_CASE("pop_and_merge drops the most recent level of each participant") {
    // Equal-depth participants collapsing one fan-out level.
    CHECK(pop_and_merge({{0}, {1}}) == BranchStack{});
    CHECK(pop_and_merge({{2, 0}, {2, 1}, {2, 2}}) == BranchStack{2});
}

TEST_CASE("pop_and_merge survivor on unequal depths") {
    // The merge keeps the deepest remaining stack; depth ties resolve to the
    // smallest level sequence.
    CHECK(pop_and_merge({{0, 0}, {1, 0}, {1}}) == BranchStack{0});
    CHECK(pop_and_merge({{1, 0}, {0, 0}, {1}}) == BranchStack{0});
    CHECK(pop_and_merge({{3, 1, 4}, {2}}) == BranchStack{3, 1});
    CHECK(pop_and_merge({{5}, {5, 1}}) == BranchStack{5});
}

TEST_CASE("pop_and_merge rejects empty stacks") {
    CHECK_THROWS_AS(pop_and_merge({{}}), EmptyStackError);
    CHECK_THROWS_AS(pop_and_merge({{1}, {}}), EmptyStackError);
    CHECK_THROWS_AS(pop_and_merge({}), std::invalid_argument);
}

TEST_CASE("pop_and_merge is permutation invariant") {
    std::mt19937 rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<BranchStack> stacks;
        int n = 2 + static_cast<int>(rng() % 5);
        for (int i = 0; i < n; ++i) {
            BranchStack s;
            int depth = 1 + static_cast<int>(rng() % 4);
            for (int d = 0; d < depth; ++d) s.push_back(static_cast<int>(rng() % 4));
            stacks.push_back(std::move(s));
        }
        BranchStack expected = pop_and_merge(stacks);
        for (int shuffle = 0; shuffle < 5; ++shuffle) {
            std::shuffle(stacks.begin(), stacks.end(), rng);
            CHECK(pop_and_merge(stacks) == expected);
        }
    }
}

TEST_CASE("rendering is injective over distinct ids") {
    std::mt19937 rng(7);
    std::map<std::string, FunctionId> seen;
    for (int trial = 0; trial < 2000; ++trial) {
        FunctionId id;
        id.workflow_id = "w" + std::to_string(rng() % 3);
        id.name = (rng() % 2 == 0) ? "A" : "data.process";
        id.step = static_cast<int>(rng() % 6);
        int depth = static_cast<int>(rng() % 4);
        for (int d = 0; d < depth; ++d) id.branch.push_back(static_cast<int>(rng() % 12));
        std::string rendered = render(id);
        auto [it, inserted] = seen.emplace(rendered, id);
        if (!inserted) CHECK(it->second == id);
    }
}

TEST_CASE("compute_function_id validates inputs") {
    CHECK_THROWS_AS(compute_function_id("w", "A", -1, {}), std::invalid_argument);
    FunctionId id = compute_function_id("w", "A", 3, {1});
    CHECK(id.step == 3);
    CHECK(id.branch == BranchStack{1});
}

TEST_CASE("collaboration keys are namespaced, not workflow-prefixed") {
    CHECK(collaboration_key({"bsink"}) == "collab/bsink");
    CHECK(collaboration_key({"a", "b"}) == "collab/a+b");
}
