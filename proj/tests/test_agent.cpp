#include <doctest.h>

#include "test_support.hpp"
#include "world_fixtures.hpp"
#include "twnm/agent.hpp"
#include "twnm/external_policy.hpp"
#include "twnm/treetext.hpp"

using namespace twnm;
using namespace twnm::testing;

namespace {

// Health-record world shaped like a two-call chain with a knowledge part.
WorldBuilder health_world() {
    WorldBuilder b;
    b.fact("what is gastroenteritis", "gastroenteritis is stomach inflammation")
        .api("query_health", "reads stored user health metrics",
             {{"user_id", "user identifier"}, {"time", "measurement time"}},
             {{"health_data", "recorded metrics"}})
        .value("query_health", "health_data", "bp_130_80_${user_id}")
        .api("record_health", "stores user health metrics record",
             {{"user_id", "user identifier"},
              {"time", "measurement time"},
              {"health_data", "recorded metrics"}},
             {{"record_id", "new entry identifier"}})
        .value("record_health", "record_id", "rec_${user_id}");
    return b;
}

ToolGraph trained_graph(const WorldBuilder& b) {
    ToolGraph g = b.graph();
    for (const auto& e : g.edges()) g.edge_mut(e.src, e.dst).w_search = 1.0;
    return g;
}

RunOptions quiet_options() {
    RunOptions opts;
    opts.limits.max_steps = 12;
    opts.search_config.rng_seed = 7;
    return opts;
}

DecisionContext make_ctx(const std::string& payload,
                         std::optional<SubgraphPlan> plan = std::nullopt) {
    DecisionContext ctx;
    ctx.current = Observation{ObservationKind::UserQuery, payload, 0};
    ctx.subgraph = std::move(plan);
    return ctx;
}

std::vector<ActionKind> trace_kinds(const EpisodeRecord& rec) {
    std::vector<ActionKind> kinds;
    for (const auto& [_, action] : rec.trace) kinds.push_back(action.kind);
    return kinds;
}

}  // namespace

TEST_CASE("rule policy: knowledge queries answer directly") {
    RulePolicy policy({{"is beijing in china", "yes, beijing is in china"}});
    const Action a = policy.decide(make_ctx("task=Is Beijing in China?"));
    CHECK(a.kind == ActionKind::DirectResponse);
    CHECK(a.final_answer);
    CHECK(a.answer.find("beijing is in china") != std::string::npos);
}

TEST_CASE("rule policy: tool intents retrieve before executing") {
    RulePolicy policy({});
    const Action a = policy.decide(make_ctx("task=need temperature given city_name=rome"));
    CHECK(a.kind == ActionKind::ToolchainRetrieval);
    CHECK(a.request.desired_outputs == std::set<std::string>{"temperature"});
    CHECK(a.request.known_inputs.count("city_name") == 1);
    for (const auto& d : a.request.desired_outputs) {
        CHECK(a.request.known_inputs.count(d) == 0);  // sets stay disjoint
    }
}

TEST_CASE("rule policy: plan plus bound inputs yields tool execution") {
    WorldBuilder b = health_world();
    ToolGraph g = trained_graph(b);
    const SubgraphPlan plan =
        alpha_beta_search(g, "record_health", std::nullopt, SearchConfig{});
    RulePolicy policy(b.world.facts);
    const Action a = policy.decide(make_ctx(
        "task=need record_id given user_id=12345, time=2025-03-05|"
        "bindings=health_data=bp_130_80_12345",
        plan));
    CHECK(a.kind == ActionKind::ToolExecution);
    CHECK(a.api_id == "record_health");
    CHECK(a.params.at("user_id") == "12345");
    CHECK(a.params.at("health_data") == "bp_130_80_12345");
}

TEST_CASE("rule policy: a parameter absent everywhere asks for clarification") {
    WorldBuilder b = health_world();
    ToolGraph g = trained_graph(b);
    const SubgraphPlan plan =
        alpha_beta_search(g, "query_health", std::nullopt, SearchConfig{});
    RulePolicy policy(b.world.facts);
    // user_id given, time absent from query and history, no producer exists.
    const Action a =
        policy.decide(make_ctx("task=need health_data given user_id=12345", plan));
    CHECK(a.kind == ActionKind::IntentClarification);
    CHECK(a.question.find("time") != std::string::npos);
}

TEST_CASE("rule policy determinism: identical context, identical action") {
    RulePolicy policy({});
    const auto ctx = make_ctx("task=need temperature given city_name=rome");
    const Action a1 = policy.decide(ctx);
    const Action a2 = policy.decide(ctx);
    CHECK(a1.kind == a2.kind);
    CHECK(a1.request.description == a2.request.description);
    CHECK(a1.request.known_inputs == a2.request.known_inputs);
}

TEST_CASE("retrieval ranks the named api first and searches from it") {
    WorldBuilder b = health_world();
    ToolGraph g = trained_graph(b);
    RetrievalRequest req;
    req.description = "record_health stores user health metrics record";
    LexicalRanker ranker;
    const auto result = retrieve_toolchain(req, g, ranker, RetrievalOptions{});
    REQUIRE(result.has_value());
    CHECK(result->per_target.front().target_api == "record_health");
    CHECK(result->merged.nodes.count("record_health") == 1);
    CHECK(!result->tree_text.empty());

    SUBCASE("empty graph signals an empty plan") {
        ExactNameSimilarity sim;
        ToolGraph empty = build_graph({make_api("zzz", "unrelated thing entirely", {}, {})},
                                      sim, 1.0);
        RetrievalRequest unmatched;
        unmatched.description = "qwerty asdf";
        CHECK(!retrieve_toolchain(unmatched, empty, ranker, RetrievalOptions{}).has_value());
    }
    SUBCASE("excluded apis never rank") {
        RetrievalOptions opts;
        opts.exclude = {"record_health"};
        const auto r2 = retrieve_toolchain(req, g, ranker, opts);
        if (r2) {
            for (const auto& p : r2->per_target) CHECK(p.target_api != "record_health");
        }
    }
}

TEST_CASE("execute_step respects dependency order") {
    WorldBuilder b = health_world();
    ToolGraph g = trained_graph(b);
    WorldExecutor exec(b.world, g);
    const SubgraphPlan plan =
        alpha_beta_search(g, "record_health", std::nullopt, SearchConfig{});
    ExecutionState state;
    state.bindings["user_id"] = "12345";
    state.bindings["time"] = "2025-03-05";

    // query_health must run before record_health: health_data is unbound.
    StepOutcome s1 = execute_step(g, plan, state, exec, 1.0);
    CHECK(s1.executed);
    CHECK(s1.api_id == "query_health");
    CHECK(s1.success);
    CHECK(state.bindings.at("health_data") == "bp_130_80_12345");

    StepOutcome s2 = execute_step(g, plan, state, exec, 1.0);
    CHECK(s2.api_id == "record_health");
    CHECK(s2.success);
    CHECK(state.bindings.at("record_id") == "rec_12345");
    CHECK(g.api("record_health").stats.n_succ == 1);

    // Plan exhausted afterwards.
    StepOutcome s3 = execute_step(g, plan, state, exec, 1.0);
    CHECK(s3.deadlock);
}

TEST_CASE("execute_step: single no-input api runs immediately; failures are observed") {
    WorldBuilder b;
    b.api("list_cities", "lists known cities", {}, {{"city_name", "name of the city"}});
    b.down("list_cities", {1});
    ToolGraph g = trained_graph(b);
    WorldExecutor exec(b.world, g);
    const SubgraphPlan plan = alpha_beta_search(g, "list_cities", std::nullopt, SearchConfig{});
    ExecutionState state;

    SUBCASE("phase 2: immediate execution") {
        exec.set_phase(2);
        const StepOutcome s = execute_step(g, plan, state, exec, 1.0);
        CHECK(s.success);
        CHECK(s.observation.kind == ObservationKind::ToolResult);
    }
    SUBCASE("phase 1: failure with the failing node id") {
        exec.set_phase(1);
        const StepOutcome s = execute_step(g, plan, state, exec, 1.0);
        CHECK(!s.success);
        CHECK(s.api_id == "list_cities");
        CHECK(s.observation.kind == ObservationKind::ToolFailure);
        CHECK(state.failed.count("list_cities") == 1);
        CHECK(g.api("list_cities").stats.n_fail == 1);
    }
}

TEST_CASE("recombination strategy i: io-equivalent substitution") {
    WorldBuilder b;
    b.api("weather_main", "city weather primary", {{"city_name", "name of the city"}},
          {{"temperature", "current temperature"}})
        .api("weather_backup", "city weather fallback", {{"city_name", "name of the city"}},
             {{"temperature", "current temperature"}});
    ToolGraph g = trained_graph(b);
    const SubgraphPlan plan = alpha_beta_search(g, "weather_main", std::nullopt, SearchConfig{});
    ExecutionState state;
    state.bindings["city_name"] = "rome";
    state.failed.insert("weather_main");

    const auto before_weights = [&] {
        std::vector<double> w;
        for (const auto& e : g.edges()) w.push_back(e.w_stat);
        return w;
    }();
    const auto result =
        recombine(g, plan, "weather_main", SearchConfig{}, state, {"temperature"}, nullptr);
    REQUIRE(std::holds_alternative<SubgraphPlan>(result));
    const SubgraphPlan& next = std::get<SubgraphPlan>(result);
    CHECK(next.target_api == "weather_backup");
    CHECK(next.nodes.count("weather_main") == 0);
    // Edge weights are untouched by recombination.
    std::size_t i = 0;
    for (const auto& e : g.edges()) CHECK(e.w_stat == before_weights[i++]);
}

TEST_CASE("recombination strategy ii: upstream rerouting around a failed producer") {
    // Diamond: target needs `token`; producers token_maker_a (failed) and
    // token_maker_b (alive, needs seed given in bindings).
    WorldBuilder b;
    b.api("use_token", "spends an access token", {{"token", "access token"}},
          {{"receipt", "spend receipt"}})
        .api("token_maker_a", "mints an access token", {{"seed", "entropy seed"}},
             {{"token", "access token"}})
        .api("token_maker_b", "derives an access token", {{"seed", "entropy seed"}},
             {{"token", "access token"}});
    ToolGraph g = trained_graph(b);
    std::set<std::string> nodes{"use_token", "token_maker_a"};
    nodes.insert(*g.param_for_member("use_token", "token"));
    nodes.insert(*g.param_for_member("token_maker_a", "seed"));
    const SubgraphPlan plan = make_plan(g, "use_token", {}, nodes, 0.0);

    ExecutionState state;
    state.bindings["seed"] = "42";
    state.failed.insert("token_maker_a");
    const auto result =
        recombine(g, plan, "token_maker_a", SearchConfig{}, state, {"token"}, nullptr);
    REQUIRE(std::holds_alternative<SubgraphPlan>(result));
    const SubgraphPlan& next = std::get<SubgraphPlan>(result);
    CHECK(next.nodes.count("token_maker_a") == 0);
    CHECK(next.nodes.count("token_maker_b") == 1);
    CHECK(next.target_api == "use_token");
}

TEST_CASE("recombination strategy iii: subgraph switching via re-retrieval") {
    WorldBuilder b;
    b.api("pay_v1", "payment gateway", {{"amount", "payment amount"}},
          {{"receipt", "payment receipt"}})
        .api("pay_v2", "payment processor service", {{"amount", "payment amount"},
                                                     {"currency", "iso currency"}},
             {{"receipt", "payment receipt"}});
    ToolGraph g = trained_graph(b);
    const SubgraphPlan plan = alpha_beta_search(g, "pay_v1", std::nullopt, SearchConfig{});
    ExecutionState state;
    state.bindings["amount"] = "10";
    state.failed.insert("pay_v1");

    // No substitute (pay_v2 needs currency, unbound -> inputs not covered;
    // rerouting fails too since receipt's only other producer needs an
    // unbound input... but switching provides a fresh plan).
    bool switched = false;
    SwitchFn switch_fn = [&](const std::set<std::string>& excluded)
        -> std::optional<SubgraphPlan> {
        CHECK(excluded.count("pay_v1") == 1);
        switched = true;
        return alpha_beta_search(g, "pay_v2", std::nullopt, SearchConfig{});
    };
    ExecutionState no_currency = state;
    const auto result =
        recombine(g, plan, "pay_v1", SearchConfig{}, no_currency, {"receipt"}, switch_fn);
    if (std::holds_alternative<SubgraphPlan>(result)) {
        const SubgraphPlan& next = std::get<SubgraphPlan>(result);
        CHECK(next.nodes.count("pay_v1") == 0);
    }
    // Rerouting may legitimately pick pay_v2's closure when currency is
    // producible; in this fixture it is not, so switching must have fired
    // unless substitution/rerouting found something without pay_v1.
    CHECK((switched || std::holds_alternative<SubgraphPlan>(result)));
}

TEST_CASE("recombination exhausts on a cut vertex") {
    WorldBuilder b;
    b.api("only_source", "the sole data source", {{"key", "lookup key"}},
          {{"payload", "the data"}});
    ToolGraph g = trained_graph(b);
    const SubgraphPlan plan = alpha_beta_search(g, "only_source", std::nullopt, SearchConfig{});
    ExecutionState state;
    state.bindings["key"] = "k";
    state.failed.insert("only_source");
    const auto result =
        recombine(g, plan, "only_source", SearchConfig{}, state, {"payload"}, nullptr);
    CHECK(std::holds_alternative<RecombineExhausted>(result));
}

TEST_CASE("episode: knowledge query completes in one step") {
    WorldBuilder b = health_world();
    ToolGraph g = trained_graph(b);
    RulePolicy policy(b.world.facts);
    WorldExecutor exec(b.world, g);
    const EpisodeRecord rec =
        run_episode("what is gastroenteritis", g, policy, exec, quiet_options());
    CHECK(rec.completed);
    CHECK(rec.llm_calls == 1);
    CHECK(judge(rec.final_answer, "gastroenteritis is stomach inflammation"));
}

TEST_CASE("episode: compound health task reproduces the expected round structure") {
    WorldBuilder b = health_world();
    ToolGraph g = trained_graph(b);
    RulePolicy policy(b.world.facts);
    WorldExecutor exec(b.world, g);
    const EpisodeRecord rec = run_episode(
        "what is gastroenteritis and also need record_id given user_id=12345, time=2025-03-05",
        g, policy, exec, quiet_options());
    REQUIRE(rec.completed);
    const auto kinds = trace_kinds(rec);
    const std::vector<ActionKind> expected{
        ActionKind::DirectResponse,      // partial: the knowledge half
        ActionKind::ToolchainRetrieval,  // toolchain for the record half
        ActionKind::ToolExecution,       // query_health
        ActionKind::ToolExecution,       // record_health
        ActionKind::DirectResponse,      // final synthesis
    };
    CHECK(kinds == expected);
    CHECK(judge(rec.final_answer,
                "gastroenteritis is stomach inflammation; record_id=rec_12345"));
}

TEST_CASE("episode: max_steps of one forces an incomplete tool episode") {
    WorldBuilder b = health_world();
    ToolGraph g = trained_graph(b);
    RulePolicy policy(b.world.facts);
    WorldExecutor exec(b.world, g);
    RunOptions opts = quiet_options();
    opts.limits.max_steps = 1;
    const EpisodeRecord rec = run_episode("need record_id given user_id=1, time=2", g, policy,
                                          exec, opts);
    CHECK(!rec.completed);
    CHECK(rec.llm_calls <= 1);
}

TEST_CASE("episode: sliding window keeps exactly the last three pairs in order") {
    WorldBuilder b = health_world();
    ToolGraph g = trained_graph(b);
    WorldExecutor exec(b.world, g);

    struct WindowSpy final : DecisionPolicy {
        RulePolicy inner;
        std::vector<std::size_t> window_sizes;
        std::vector<std::vector<int>> window_steps;
        explicit WindowSpy(const std::map<std::string, std::string>& facts) : inner(facts) {}
        Action decide(const DecisionContext& ctx) override {
            window_sizes.push_back(ctx.history.size());
            std::vector<int> steps;
            for (const auto& [obs, _] : ctx.history) steps.push_back(obs.step_index);
            window_steps.push_back(std::move(steps));
            return inner.decide(ctx);
        }
    };
    WindowSpy spy(b.world.facts);
    const EpisodeRecord rec = run_episode(
        "what is gastroenteritis and also need record_id given user_id=12345, time=2025-03-05",
        g, spy, exec, quiet_options());
    REQUIRE(rec.completed);
    REQUIRE(spy.window_sizes.size() >= 5);
    for (std::size_t i = 0; i < spy.window_sizes.size(); ++i) {
        CHECK(spy.window_sizes[i] == std::min<std::size_t>(i, 3));  // exact FIFO of 3
        const auto& steps = spy.window_steps[i];
        for (std::size_t k = 1; k < steps.size(); ++k) CHECK(steps[k - 1] < steps[k]);
    }
    // Observation step indices strictly increase along the trace.
    for (std::size_t i = 1; i < rec.trace.size(); ++i) {
        CHECK(rec.trace[i - 1].first.step_index < rec.trace[i].first.step_index);
    }
}

TEST_CASE("episode: failed target is substituted and never reused") {
    WorldBuilder b;
    b.api("geo_primary", "city geocoder lookup latitude", {{"city_name", "name of the city"}},
          {{"latitude", "degrees north"}})
        .api("geo_backup", "city geocoder lookup latitude", {{"city_name", "name of the city"}},
             {{"latitude", "degrees north"}})
        .down("geo_primary", {1});
    ToolGraph g = trained_graph(b);
    RulePolicy policy({});
    WorldExecutor exec(b.world, g);
    exec.set_phase(1);
    const EpisodeRecord rec = run_episode("need latitude given city_name=oslo", g, policy, exec,
                                          quiet_options());
    REQUIRE(rec.completed);
    CHECK(judge(rec.final_answer, "latitude=latitude_value"));
    CHECK(rec.failed_apis.count("geo_primary") == 1);
    // After the failure is recorded, no action references the failed node.
    bool saw_failure = false;
    for (const auto& [obs, action] : rec.trace) {
        if (saw_failure && action.kind == ActionKind::ToolExecution) {
            CHECK(action.api_id != "geo_primary");
        }
        if (obs.kind == ObservationKind::ToolFailure) saw_failure = true;
    }
}

TEST_CASE("episode: cut-vertex failure exhausts recombination and stays incomplete") {
    WorldBuilder b;
    b.api("lone_gateway", "sole gateway to the payload data", {{"key", "lookup key"}},
          {{"payload", "the data"}})
        .down("lone_gateway", {1});
    ToolGraph g = trained_graph(b);
    RulePolicy policy({});
    WorldExecutor exec(b.world, g);
    exec.set_phase(1);
    const EpisodeRecord rec =
        run_episode("need payload given key=alpha", g, policy, exec, quiet_options());
    CHECK(!rec.completed);
    CHECK(rec.failed_apis.count("lone_gateway") == 1);
}

TEST_CASE("episode: clarification pulls a missing value from the simulated user") {
    WorldBuilder b = health_world();
    ToolGraph g = trained_graph(b);
    RulePolicy policy(b.world.facts);
    WorldExecutor exec(b.world, g);
    RunOptions opts = quiet_options();
    opts.responder = [](const std::string& question) -> std::string {
        if (question.find("time") != std::string::npos) return "time=2025-03-05";
        return "unknown";
    };
    const EpisodeRecord rec =
        run_episode("need health_data given user_id=77", g, policy, exec, opts);
    REQUIRE(rec.completed);
    CHECK(judge(rec.final_answer, "health_data=bp_130_80_77"));
    bool clarified = false;
    for (const auto& [_, action] : rec.trace) {
        if (action.kind == ActionKind::IntentClarification) clarified = true;
    }
    CHECK(clarified);
}

TEST_CASE("episode: pruned apis are infeasible for the projected policy") {
    WorldBuilder b;
    b.api("alpha_service", "alpha data lookup service", {{"key", "lookup key"}},
          {{"data_out", "the data"}})
        .api("beta_service", "beta data lookup service", {{"key", "lookup key"}},
             {{"data_out", "the data"}});
    ToolGraph g = trained_graph(b);
    g.api_mut("alpha_service").active = false;  // soft-deleted before the episode
    RulePolicy policy({});
    WorldExecutor exec(b.world, g);
    const EpisodeRecord rec =
        run_episode("need data_out given key=zz", g, policy, exec, quiet_options());
    REQUIRE(rec.completed);
    for (const auto& [_, action] : rec.trace) {
        for (const auto& api : action.referenced_apis()) {
            CHECK(api != "alpha_service");
        }
    }
    CHECK(judge(rec.final_answer, "data_out=data_out_value"));
}

TEST_CASE("external policy adapter speaks the wire contract") {
    WorldBuilder b = health_world();
    ToolGraph g = trained_graph(b);
    WorldExecutor exec(b.world, g);

    SUBCASE("direct answer round trip") {
        ExternalPolicy policy([](const std::string& request) {
            CHECK(request.find("\"observation\"") != std::string::npos);
            return R"([{"dependency_rank":1,"action":"direct_answer","answer":"all done"}])";
        });
        const EpisodeRecord rec = run_episode("anything", g, policy, exec, quiet_options());
        CHECK(rec.completed);
        CHECK(rec.final_answer == "all done");
    }
    SUBCASE("multi-intent arrays are served in dependency order") {
        int calls = 0;
        ExternalPolicy policy([&calls](const std::string&) {
            ++calls;
            return R"([
                {"dependency_rank":2,"action":"direct_answer","answer":"second"},
                {"dependency_rank":1,"action":"direct_answer","answer":"first"}
            ])";
        });
        const EpisodeRecord rec = run_episode("anything", g, policy, exec, quiet_options());
        CHECK(calls == 1);
        REQUIRE(rec.trace.size() == 2);
        CHECK(rec.trace[0].second.answer == "first");
        CHECK(!rec.trace[0].second.final_answer);
        CHECK(rec.trace[1].second.answer == "second");
        CHECK(rec.completed);
    }
    SUBCASE("malformed responses are protocol errors that cost completion") {
        ExternalPolicy policy([](const std::string&) { return "not json at all"; });
        const EpisodeRecord rec = run_episode("anything", g, policy, exec, quiet_options());
        CHECK(!rec.completed);
        CHECK(rec.protocol_error);
    }
    SUBCASE("call_api actions execute through the plan") {
        int step = 0;
        ExternalPolicy policy([&step](const std::string&) -> std::string {
            switch (step++) {
                case 0:
                    return R"([{"action":"retrieve_api","recall_description":
                        "query_health(description: reads stored user health metrics, input: user_id:string/user identifier; time:string/measurement time; output: health_data:string/recorded metrics)"}])";
                case 1:
                    return R"([{"action":"call_api","target_api":"query_health",
                        "params":{"user_id":"9","time":"t0"}}])";
                default:
                    return R"([{"action":"direct_answer","answer":"done"}])";
            }
        });
        const EpisodeRecord rec = run_episode("anything", g, policy, exec, quiet_options());
        CHECK(rec.completed);
        CHECK(g.api("query_health").stats.n_succ == 1);
    }
}
