#include <doctest.h>

#include <fstream>

#include "test_support.hpp"
#include "world_fixtures.hpp"
#include "twnm/metrics.hpp"

using namespace twnm;
using namespace twnm::testing;

namespace {

FixtureWorld weather_world() {
    WorldBuilder b;
    b.api("get_weather", "current weather for a city",
          {{"city_name", "name of the city"}}, {{"temperature", "current temperature"}})
        .value("get_weather", "temperature", "21C_${city_name}")
        .api("get_mock", "placeholder service", {{"city_name", "name of the city"}},
             {{"humidity", "relative humidity"}});
    b.world.api_behaviors.at("get_mock").mock_only = true;
    b.down("get_weather", {2});
    return b.world;
}

}  // namespace

TEST_CASE("simulate_call covers the response contract") {
    const FixtureWorld world = weather_world();

    SUBCASE("available api with valid inputs answers from the fixture") {
        const SimResponse r = simulate_call(world, "get_weather", {{"city_name", "paris"}}, 1);
        CHECK(r.status == "success");
        CHECK(r.type == "success");
        CHECK(r.data.at("temperature") == "21C_paris");
    }
    SUBCASE("phase unavailability turns into an error response") {
        const SimResponse r = simulate_call(world, "get_weather", {{"city_name", "paris"}}, 2);
        CHECK(r.type == "error");
    }
    SUBCASE("seeded outage set applies to phase 1 only") {
        const std::set<std::string> down{"get_weather"};
        CHECK(simulate_call(world, "get_weather", {{"city_name", "x"}}, 1, &down).type ==
              "error");
    }
    SUBCASE("missing required input names the parameter") {
        const SimResponse r = simulate_call(world, "get_weather", {}, 1);
        CHECK(r.type == "error");
        CHECK(r.message.find("city_name") != std::string::npos);
    }
    SUBCASE("schema-only apis answer mock placeholders") {
        const SimResponse r = simulate_call(world, "get_mock", {{"city_name", "x"}}, 1);
        CHECK(r.type == "mock");
        CHECK(r.data.at("humidity") == "mock_humidity");
        CHECK(r.ok());
    }
    SUBCASE("unknown api is an error response, not an exception") {
        const SimResponse r = simulate_call(world, "nope", {}, 1);
        CHECK(r.type == "error");
    }
    SUBCASE("purity: identical inputs, identical responses") {
        const SimResponse a = simulate_call(world, "get_weather", {{"city_name", "rome"}}, 1);
        const SimResponse b = simulate_call(world, "get_weather", {{"city_name", "rome"}}, 1);
        CHECK(a.type == b.type);
        CHECK(a.data == b.data);
    }
}

TEST_CASE("judge normalizes and requires every fact") {
    CHECK(judge("Temperature=21C", "Temperature=21C"));
    CHECK(judge("  temperature=21c\n", "Temperature=21C"));
    CHECK(judge("temperature=21c; humidity=60", "temperature=21c; humidity=60"));
    CHECK(judge("humidity=60 and temperature=21c", "temperature=21c; humidity=60"));
    CHECK_FALSE(judge("temperature=21c", "temperature=21c; humidity=60"));
    CHECK_FALSE(judge("nothing useful", "temperature=21c"));
}

TEST_CASE("metrics arithmetic and step accounting") {
    auto rec = [](bool completed, int steps) {
        EpisodeRecord r;
        r.completed = completed;
        r.llm_calls = steps;
        return r;
    };
    SUBCASE("10 tasks, 8 completed, 6 successful") {
        std::vector<EpisodeRecord> records;
        std::vector<bool> judged;
        for (int i = 0; i < 10; ++i) {
            const bool completed = i < 8;
            records.push_back(rec(completed, 3));
            judged.push_back(i < 6);
        }
        const MetricsReport report = compute_metrics(records, judged);
        CHECK(report.overall.tcr == doctest::Approx(80.0));
        CHECK(report.overall.tsr == doctest::Approx(60.0));
        CHECK(report.overall.tsr <= report.overall.tcr);
    }
    SUBCASE("nothing completes: steps are absent") {
        const MetricsReport report =
            compute_metrics({rec(false, 5), rec(false, 7)}, {false, false});
        CHECK(report.overall.tsr == 0.0);
        CHECK(!report.overall.mean_steps.has_value());
        CHECK(render_kv(report).find("all.steps=absent") != std::string::npos);
    }
    SUBCASE("single successful episode") {
        const MetricsReport report = compute_metrics({rec(true, 4)}, {true});
        REQUIRE(report.overall.mean_steps.has_value());
        CHECK(*report.overall.mean_steps == doctest::Approx(4.0));
    }
    SUBCASE("incomplete episodes are never judged successful") {
        const MetricsReport report = compute_metrics({rec(false, 4)}, {true});
        CHECK(report.overall.tsr == 0.0);
    }
    SUBCASE("empty record list is an error") {
        CHECK_THROWS_AS(compute_metrics({}, {}), GraphError);
    }
}

TEST_CASE("records file round trip") {
    std::vector<EpisodeRecord> records;
    std::vector<bool> judged;
    for (int i = 0; i < 5; ++i) {
        EpisodeRecord r;
        r.task_id = "t" + std::to_string(i);
        r.difficulty = i % 2 ? Difficulty::Medium : Difficulty::Hard;
        r.completed = i != 2;
        r.llm_calls = 2 + i;
        records.push_back(r);
        judged.push_back(i % 2 == 0 && r.completed);
    }
    const std::string path = temp_path("records");
    save_records(records, judged, path);
    const auto [loaded, loaded_judged] = load_records(path);
    REQUIRE(loaded.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(loaded[i].task_id == records[i].task_id);
        CHECK(loaded[i].difficulty == records[i].difficulty);
        CHECK(loaded[i].completed == records[i].completed);
        CHECK(loaded[i].llm_calls == records[i].llm_calls);
        CHECK(loaded_judged[i] == judged[i]);
    }
    const std::string kv1 = render_kv(compute_metrics(records, judged));
    const std::string kv2 = render_kv(compute_metrics(loaded, loaded_judged));
    CHECK(kv1 == kv2);
    std::remove(path.c_str());
}

TEST_CASE("world files parse into behaviors, facts and tasks") {
    const std::string path = temp_path("world");
    {
        std::ofstream f(path);
        f << "WORLD v1\n";
        f << "# a comment line\n";
        f << "API get_weather \"current weather for a city\"\n";
        f << "IN get_weather city_name \"name of the city\"\n";
        f << "OUT get_weather temperature \"current temperature\"\n";
        f << "VAL get_weather temperature \"21C_${city_name}\"\n";
        f << "API ghost \"schema only service\"\n";
        f << "MOCK ghost\n";
        f << "DOWN ghost phase=1,2\n";
        f << "FACT \"is beijing in china\" \"yes, beijing is in china\"\n";
        f << "TASK t1 difficulty=easy query=\"need temperature given city_name=rome\" "
             "answer=\"temperature=21C_rome\" hints=\"city_name=rome\"\n";
    }
    const FixtureWorld world = load_world(path);
    CHECK(world.api_behaviors.size() == 2);
    CHECK(world.api_behaviors.at("get_weather").inputs.size() == 1);
    CHECK(world.api_behaviors.at("get_weather").output_templates.at("temperature") ==
          "21C_${city_name}");
    CHECK(world.api_behaviors.at("ghost").mock_only);
    CHECK(!world.available("ghost", 1, nullptr));
    CHECK(!world.available("ghost", 2, nullptr));
    CHECK(world.facts.count("is beijing in china") == 1);
    REQUIRE(world.tasks.size() == 1);
    CHECK(world.tasks[0].difficulty == Difficulty::Easy);
    CHECK(world.tasks[0].hints.at("city_name") == "rome");
    std::remove(path.c_str());

    SUBCASE("bad header is a parse error") {
        const std::string bad = temp_path("badworld");
        {
            std::ofstream f(bad);
            f << "NOT A WORLD\n";
        }
        CHECK_THROWS_AS(load_world(bad), ParseError);
        std::remove(bad.c_str());
    }
}

TEST_CASE("world executor translates canonical names both ways") {
    WorldBuilder b;
    // Two apis whose parameters cluster: original names differ.
    b.api("get_locations", "city directory", {{"name", "Name of the city"}}, {})
        .api("find_weather", "weather by city",
             {{"city", "The city where the weather is requested"}},
             {{"temperature", "current temperature"}})
        .value("find_weather", "temperature", "hot_in_${city}");
    LexicalSimilarity sim;
    ToolGraph g = build_graph(b.world.api_specs(), sim, 0.3);
    const auto cluster = g.param_for_member("find_weather", "city");
    REQUIRE(cluster.has_value());

    WorldExecutor exec(b.world, g);
    const SimResponse r = exec.invoke("find_weather", {{*cluster, "oslo"}});
    CHECK(r.type == "success");
    // Output keyed by the canonical cluster id of (find_weather, temperature).
    const auto out_cluster = g.param_for_member("find_weather", "temperature");
    REQUIRE(out_cluster.has_value());
    CHECK(r.data.at(*out_cluster) == "hot_in_oslo");
}
