#include <doctest.h>

#include "test_support.hpp"
#include "twnm/search.hpp"
#include "twnm/treetext.hpp"

using namespace twnm;
using namespace twnm::testing;

namespace {

ToolGraph chain_graph() {
    // upstream -> feeds_city -> target; target also needs direct_input.
    std::vector<ApiSpec> specs{
        make_api("upstream", "resolves a city", {}, {{"city_ref", "city reference"}}),
        make_api("target", "books a visit",
                 {{"city_ref", "city reference"}, {"direct_input", "given directly"}}, {}),
    };
    ExactNameSimilarity sim;
    return build_graph(specs, sim, 1.0);
}

SubgraphPlan full_plan(const ToolGraph& g, const std::string& target) {
    std::set<std::string> nodes;
    for (const auto& a : g.apis()) nodes.insert(a.id);
    for (const auto& p : g.params()) nodes.insert(p.id);
    return make_plan(g, target, {}, decode_connected(g, {target}, nodes), 0.0);
}

}  // namespace

TEST_CASE("dependency tree renders depth-2 indentation and round trips") {
    const ToolGraph g = chain_graph();
    const SubgraphPlan plan = full_plan(g, "target");
    REQUIRE(plan.nodes.size() == 4);

    const std::string text = serialize_subgraph(g, plan);
    CHECK(text ==
          "api:target\n"
          "  param:city_ref\n"
          "    api:upstream\n"
          "  param:direct_input\n");

    const ParsedTree tree = parse_subgraph_tree(text);
    CHECK(tree.root == "target");
    CHECK(tree.nodes.size() == plan.nodes.size());
    std::set<PlanEdge> plan_edges(plan.edges.begin(), plan.edges.end());
    CHECK(tree.edges == plan_edges);
}

TEST_CASE("single node plan is a one-line tree") {
    const ToolGraph g = chain_graph();
    const SubgraphPlan plan = make_plan(g, "upstream", {}, {"upstream"}, 0.0);
    CHECK(serialize_subgraph(g, plan) == "api:upstream\n");
}

TEST_CASE("behavioral cycles terminate with a back reference") {
    ExactNameSimilarity sim;
    ToolGraph g = build_graph(
        {make_api("aa", "x", {}, {}), make_api("bb", "y", {}, {}), make_api("tt", "z", {}, {})},
        sim, 1.0);
    g.add_edge("aa", "tt", EdgeKind::Behavioral);
    g.add_edge("bb", "aa", EdgeKind::Behavioral);
    g.add_edge("aa", "bb", EdgeKind::Behavioral);  // aa <-> bb cycle

    const SubgraphPlan plan = full_plan(g, "tt");
    const std::string text = serialize_subgraph(g, plan);
    CHECK(text.find("[ref]") != std::string::npos);

    const ParsedTree tree = parse_subgraph_tree(text);
    CHECK(tree.nodes.size() == 3);
    std::set<PlanEdge> plan_edges(plan.edges.begin(), plan.edges.end());
    CHECK(tree.edges == plan_edges);
}

TEST_CASE("disconnected subgraphs are rejected") {
    const ToolGraph g = chain_graph();
    SubgraphPlan plan = full_plan(g, "target");
    plan.nodes.insert("upstream_extra");  // unknown to the walk
    plan.node_kinds["upstream_extra"] = NodeKind::Api;
    CHECK_THROWS_AS(serialize_subgraph(g, plan), GraphError);
}

TEST_CASE("parser rejects malformed trees") {
    CHECK_THROWS_AS(parse_subgraph_tree(""), ParseError);
    CHECK_THROWS_AS(parse_subgraph_tree("api:\n"), ParseError);
    CHECK_THROWS_AS(parse_subgraph_tree(" api:x\n"), ParseError);        // odd indent
    CHECK_THROWS_AS(parse_subgraph_tree("api:x\n    api:y\n"), ParseError);  // level jump
    CHECK_THROWS_AS(parse_subgraph_tree("thing:x\n"), ParseError);
}

TEST_CASE("serialize/parse identity on generated subgraphs") {
    Rng rng(123);
    int checked = 0;
    for (int i = 0; i < 40; ++i) {
        ToolGraph g = random_graph(rng, 3 + rng.next_index(4), 3 + rng.next_index(4), 0.35);
        const std::string target = "a00";
        const SubgraphPlan plan = full_plan(g, target);
        if (plan.nodes.empty()) continue;
        const std::string text = serialize_subgraph(g, plan);
        CHECK(text == serialize_subgraph(g, plan));  // byte-identical rerun
        const ParsedTree tree = parse_subgraph_tree(text);
        std::set<std::pair<std::string, NodeKind>> expected_nodes;
        for (const auto& id : plan.nodes) expected_nodes.insert({id, g.kind_of(id)});
        CHECK(tree.nodes == expected_nodes);
        std::set<PlanEdge> plan_edges(plan.edges.begin(), plan.edges.end());
        CHECK(tree.edges == plan_edges);
        ++checked;
    }
    CHECK(checked > 20);
}
