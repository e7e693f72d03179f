#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "twnm/evolution.hpp"
#include "twnm/search.hpp"
#include "twnm/util.hpp"

using namespace twnm;
using namespace twnm::testing;

TEST_CASE("prune score hand evaluations") {
    CHECK(prune_score(0.0, 1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(prune_score(1.0, 1.0, 0.5) == doctest::Approx(sigmoid(1.0)).epsilon(1e-12));
    CHECK(prune_score(1.0, 1.0, 0.5) == doctest::Approx(0.731059).epsilon(1e-6));
    // Never-used nodes saturate toward 1.
    CHECK(prune_score(0.0, 0.0, 0.0) == doctest::Approx(sigmoid(20.0)).epsilon(1e-15));
    CHECK(std::abs(prune_score(0.0, 0.0, 0.0) - 1.0) < 1e-8);
    CHECK_THROWS_AS(prune_score(1.5, 1.0, 0.5), GraphError);
    CHECK_THROWS_AS(prune_score(0.5, -1.0, 0.5), GraphError);
}

TEST_CASE("prune score grid monotonicity") {
    for (int i = 0; i < 20; ++i) {
        const double f1 = i / 20.0;
        const double f2 = (i + 1) / 20.0;
        // Increasing in the failure rate for lambda > 0.
        CHECK(prune_score(f2, 1.0, 0.6) > prune_score(f1, 1.0, 0.6));
        // Decreasing in the frequency for lambda < 1.
        CHECK(prune_score(0.5, 0.2 + f2, 0.6) < prune_score(0.5, 0.2 + f1, 0.6));
    }
}

namespace {

ToolGraph two_api_graph() {
    ExactNameSimilarity sim;
    return build_graph(
        {make_api("flaky", "keeps failing", {}, {}), make_api("steady", "works fine", {}, {})},
        sim, 1.0);
}

struct FixedProber final : AvailabilityProber {
    bool value;
    explicit FixedProber(bool v) : value(v) {}
    bool probe(const std::string&) const override { return value; }
};

}  // namespace

TEST_CASE("pruning marks failing apis inactive and leaves healthy ones") {
    ToolGraph g = two_api_graph();
    EvolutionConfig cfg;
    cfg.lambda = 0.5;
    cfg.tau_days = 7;
    // flaky: all failures in the window -> score above 0.7.
    for (int i = 0; i < 4; ++i) g.record_invocation(std::nullopt, "flaky", false, 1.0 + i);
    // steady: frequent successes -> score around 0.5.
    for (int i = 0; i < 40; ++i) {
        g.record_invocation(std::nullopt, "steady", true, 0.1 * i);
    }
    const auto pruned = apply_pruning(g, cfg, 4.0);
    CHECK(pruned == std::vector<std::string>{"flaky"});
    CHECK(!g.api("flaky").active);
    CHECK(g.api("steady").active);
    CHECK(!g.is_active("flaky"));

    SUBCASE("soft delete keeps the record") {
        CHECK(g.has_node("flaky"));
        CHECK(g.api("flaky").stats.n_fail == 4);
    }
    SUBCASE("pruned nodes never appear in search results") {
        for (const auto& e : g.edges()) g.edge_mut(e.src, e.dst).w_search = 1.0;
        const SubgraphPlan ab = alpha_beta_search(g, "steady", std::nullopt, SearchConfig{});
        CHECK(ab.nodes.count("flaky") == 0);
        const auto plans = heuristic_search(g, {"steady"}, SearchConfig{});
        CHECK(plans[0].nodes.count("flaky") == 0);
        const SubgraphPlan ex = exhaustive_search(g, "steady", 4);
        CHECK(ex.nodes.count("flaky") == 0);
    }
}

TEST_CASE("pruning on an empty graph is a no-op") {
    ToolGraph g;
    const auto before = g.version();
    CHECK(apply_pruning(g, EvolutionConfig{}, 10.0).empty());
    CHECK(g.version() == before);
}

TEST_CASE("reactivation samples a seeded share of the pruned set") {
    ExactNameSimilarity sim;
    std::vector<ApiSpec> specs;
    for (int i = 0; i < 10; ++i) {
        specs.push_back(make_api("api" + std::to_string(i), "api", {}, {}));
    }
    ToolGraph g = build_graph(specs, sim, 1.0);
    for (const auto& a : g.apis()) g.api_mut(a.id).active = false;
    EvolutionConfig cfg;  // reactivate_frac = 0.1 -> exactly one probe

    SUBCASE("recovered probes are restored and searchable again") {
        FixedProber up(true);
        Rng rng(5);
        const auto restored = reactivate(g, cfg, up, rng);
        CHECK(restored.size() == 1);
        CHECK(g.is_active(restored.front()));
        const SubgraphPlan plan =
            alpha_beta_search(g, restored.front(), std::nullopt, SearchConfig{});
        CHECK(plan.nodes.count(restored.front()) == 1);
    }
    SUBCASE("still-dead probes stay inactive") {
        FixedProber down(false);
        Rng rng(5);
        CHECK(reactivate(g, cfg, down, rng).empty());
        for (const auto& a : g.apis()) CHECK(!a.active);
    }
    SUBCASE("no pruned nodes, no probes") {
        for (const auto& a : g.apis()) g.api_mut(a.id).active = true;
        FixedProber up(true);
        Rng rng(5);
        CHECK(reactivate(g, cfg, up, rng).empty());
    }
    SUBCASE("fixed seed fixes the sample") {
        FixedProber up(true);
        Rng r1(9), r2(9);
        ToolGraph g2 = g;
        CHECK(reactivate(g, cfg, up, r1) == reactivate(g2, cfg, up, r2));
    }
}

TEST_CASE("reactivation clears the failure window but not lifetime counters") {
    ToolGraph g = two_api_graph();
    for (int i = 0; i < 3; ++i) g.record_invocation(std::nullopt, "flaky", false, 1.0 + i);
    g.record_invocation(std::nullopt, "flaky", true, 4.0);
    g.api_mut("flaky").active = false;
    EvolutionConfig cfg;
    cfg.reactivate_frac = 1.0;
    FixedProber up(true);
    Rng rng(1);
    reactivate(g, cfg, up, rng);
    CHECK(g.api("flaky").active);
    CHECK(g.api("flaky").stats.n_fail == 3);  // lifetime counters untouched
    CHECK(g.api("flaky").stats.n_succ == 1);
    for (const auto& ev : g.api("flaky").stats.recent) CHECK(ev.success);
}

TEST_CASE("edge weight propagation blends memory and recent evidence") {
    CHECK(propagate_edge_weight(0.8, 3, 4, 1.0) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(propagate_edge_weight(0.8, 3, 4, 0.5) == doctest::Approx(0.775).epsilon(1e-12));
    CHECK(propagate_edge_weight(0.8, 3, 4, 0.0) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(propagate_edge_weight(0.8, 0, 0, 0.25) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK_THROWS_AS(propagate_edge_weight(0.8, 5, 4, 0.5), GraphError);

    // Convex combination bound: output between w_prev and the recent ratio.
    Rng rng(17);
    for (int i = 0; i < 10000; ++i) {
        const double w_prev = rng.next_double();
        const std::int64_t succ_v = static_cast<std::int64_t>(rng.next_index(20));
        const std::int64_t succ_uv =
            succ_v == 0 ? 0 : static_cast<std::int64_t>(rng.next_index(succ_v + 1));
        const double eta = rng.next_double();
        const double recent =
            succ_v == 0 ? 0.0 : static_cast<double>(succ_uv) / static_cast<double>(succ_v);
        const double out = propagate_edge_weight(w_prev, succ_uv, succ_v, eta);
        CHECK(out >= std::min(w_prev, recent) - 1e-12);
        CHECK(out <= std::max(w_prev, recent) + 1e-12);
    }
}

TEST_CASE("graph-level propagation uses the window counts") {
    ToolGraph g = two_api_graph();
    g.add_edge("steady", "flaky", EdgeKind::Behavioral);
    g.edge_mut("steady", "flaky").w_stat = 0.8;
    // Window: 3 successes of flaky, 3 attributed to steady, plus one miss.
    for (int i = 0; i < 3; ++i) {
        g.record_invocation(std::optional<std::string>("steady"), "flaky", true, 10.0 + i);
        g.note_pair("steady", "flaky", true, 10.0 + i);
    }
    g.record_invocation(std::nullopt, "flaky", true, 13.0);
    EvolutionConfig cfg;
    cfg.eta_prop = 0.5;
    cfg.tau_days = 30;
    propagate_weights(g, cfg, 13.0);
    CHECK(g.edge("steady", "flaky").w_stat == doctest::Approx(0.5 * 0.8 + 0.5 * 0.75));
}

TEST_CASE("evolution config validation") {
    EvolutionConfig bad;
    bad.lambda = 1.5;
    CHECK_THROWS_AS(bad.validate(), GraphError);
    bad = EvolutionConfig{};
    bad.tau_days = 0;
    CHECK_THROWS_AS(bad.validate(), GraphError);
    CHECK_NOTHROW(EvolutionConfig{}.validate());
}
