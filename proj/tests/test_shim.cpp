#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "crossflow/fixtures.hpp"
#include "crossflow/sim.hpp"

using namespace crossflow;

namespace {

sim::SimCloud make_cloud() {
    return sim::SimCloud(fixtures::default_topology(), sim::FaultPlan{}, sim::SimConfig{});
}

shim::DsSpec table_p1() { return shim::DsSpec{"p1", ir::DsKind::Table, "sim"}; }
shim::DsSpec object_p1() { return shim::DsSpec{"p1", ir::DsKind::Object, "sim"}; }

}  // namespace

TEST_CASE("conditional create is first-writer-wins and immutable") {
    auto cloud = make_cloud();
    auto ds = cloud.ds_create(table_p1());

    CHECK(ds->store_output_data("k", "first"));
    CHECK_FALSE(ds->store_output_data("k", "second"));
    CHECK(ds->get_value("k") == shim::Bytes("first"));

    // Any interleaving of two writers leaves exactly one creation.
    auto ds2 = cloud.ds_create(table_p1());
    int creations = 0;
    if (ds->store_output_data("race", "a")) ++creations;
    if (ds2->store_output_data("race", "b")) ++creations;
    CHECK(creations == 1);
    CHECK(ds->get_value("race") == shim::Bytes("a"));
}

TEST_CASE("ds_create returns the same store per platform and kind") {
    auto cloud = make_cloud();
    auto a = cloud.ds_create(table_p1());
    auto b = cloud.ds_create(table_p1());
    CHECK(a->store_output_data("shared", "v"));
    CHECK(b->get_value("shared") == shim::Bytes("v"));
    CHECK(a.get() == b.get());

    auto object = cloud.ds_create(object_p1());
    CHECK(object.get() != a.get());
    CHECK_FALSE(object->get_value("shared").has_value());
}

TEST_CASE("table items have a size limit, object items do not") {
    auto cloud = make_cloud();
    auto table = cloud.ds_create(table_p1());
    auto object = cloud.ds_create(object_p1());
    shim::Bytes big(400001, 'x');
    CHECK_THROWS_AS(table->store_output_data("big", big), shim::ValueTooLarge);
    CHECK(object->store_output_data("big", big));
    CHECK(object->get_value("big")->size() == big.size());
    CHECK(table->item_size_limit() == 400000);
}

TEST_CASE("invocation lists append atomically and read back as JSON") {
    auto cloud = make_cloud();
    auto ds = cloud.ds_create(table_p1());

    CHECK_THROWS_AS(ds->append_and_get_list("l", {"x"}), shim::MissingList);
    CHECK(ds->create_invocation_list("l"));
    CHECK_FALSE(ds->create_invocation_list("l"));  // idempotent create

    CHECK(ds->append_and_get_list("l", {"a", "b"}) == std::vector<std::string>{"a", "b"});
    CHECK(ds->append_and_get_list("l", {"c"}) == std::vector<std::string>{"a", "b", "c"});
    CHECK(ds->append_and_get_list("l", {}) == std::vector<std::string>{"a", "b", "c"});

    // get_value renders the list as a JSON array.
    CHECK(ds->get_value("l") == shim::Bytes(R"(["a","b","c"])"));
}

TEST_CASE("bitmaps flip once per index and report the transition") {
    auto cloud = make_cloud();
    auto ds = cloud.ds_create(table_p1());

    CHECK_THROWS_AS(ds->update_bitmap(0, "bm"), shim::MissingBitmap);
    CHECK(ds->create_bitmap(3, "bm"));
    CHECK_FALSE(ds->create_bitmap(3, "bm"));

    auto s0 = ds->update_bitmap(0, "bm");
    CHECK(s0.flipped);
    CHECK_FALSE(s0.all_true());

    auto s0again = ds->update_bitmap(0, "bm");
    CHECK_FALSE(s0again.flipped);  // idempotent
    CHECK_FALSE(s0again.all_true());

    ds->update_bitmap(1, "bm");
    auto last = ds->update_bitmap(2, "bm");
    CHECK(last.flipped);
    CHECK(last.all_true());

    CHECK_THROWS_AS(ds->update_bitmap(3, "bm"), shim::IndexOutOfRange);
    CHECK_THROWS_AS(ds->update_bitmap(-1, "bm"), shim::IndexOutOfRange);

    CHECK(ds->get_value("bm") == shim::Bytes("[true,true,true]"));
}

TEST_CASE("only the full bitmap reads back all-true") {
    shim::BitmapSnapshot empty;
    CHECK_FALSE(empty.all_true());
    shim::BitmapSnapshot partial{{true, false}, true};
    CHECK_FALSE(partial.all_true());
    shim::BitmapSnapshot full{{true, true}, true};
    CHECK(full.all_true());
}

TEST_CASE("prefix scan and removal") {
    auto cloud = make_cloud();
    auto ds = cloud.ds_create(table_p1());
    ds->store_output_data("w1/a", "1");
    ds->store_output_data("w1/b", "2");
    ds->store_output_data("w10/a", "3");
    ds->store_output_data("w2/a", "4");

    CHECK(ds->keys_with_prefix("w1/") == std::vector<std::string>{"w1/a", "w1/b"});
    CHECK(ds->keys_with_prefix("nope/").empty());

    CHECK(ds->remove("w1/a"));
    CHECK_FALSE(ds->remove("w1/a"));
    CHECK(ds->keys_with_prefix("w1/") == std::vector<std::string>{"w1/b"});
}

TEST_CASE("unknown platforms are rejected") {
    auto cloud = make_cloud();
    CHECK_THROWS_AS(cloud.ds_create(shim::DsSpec{"p9", ir::DsKind::Table, "sim"}),
                    shim::PlatformUnavailable);
    CHECK_THROWS_AS(cloud.faas_create(shim::FaaSSpec{"p9", "sim"}), shim::PlatformUnavailable);
}

TEST_CASE("faas clients enforce the platform payload limit") {
    auto cloud = make_cloud();
    // Load a function so invocations resolve.
    ir::CompileResult compiled = ir::compile_subgraphs(fixtures::workflow("seq-3"));
    REQUIRE(compiled.ok());
    cloud.load_subgraphs(*compiled.subgraphs);

    auto client = cloud.faas_create(shim::FaaSSpec{"p2", "sim"});
    CHECK(client->platform_id() == "p2");

    rt::Envelope env;
    env.workflow_id = "w";
    env.step = 1;
    env.direct = shim::Bytes(200000, 'x');  // beyond p2's 131072 limit
    CHECK_THROWS_AS(client->async_invoke("B", env.serialize()), shim::PayloadTooLarge);

    env.direct = "small";
    auto token = client->async_invoke("B", env.serialize());
    CHECK(token.platform_id == "p2");
}
