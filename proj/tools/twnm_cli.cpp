#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "twnm/experiment.hpp"
#include "twnm/external_policy.hpp"
#include "twnm/scoring.hpp"
#include "twnm/treetext.hpp"
#include "twnm/util.hpp"

namespace {

using namespace twnm;

EvolutionConfig load_evolution_config(const std::string& path) {
    EvolutionConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream f(path);
    if (!f) throw GraphError("cannot read config " + path);
    std::string line;
    while (std::getline(f, line)) {
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw GraphError("bad config line: " + t);
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key == "lambda") cfg.lambda = std::stod(value);
        else if (key == "prune_threshold") cfg.prune_threshold = std::stod(value);
        else if (key == "reactivate_frac") cfg.reactivate_frac = std::stod(value);
        else if (key == "eta_prop") cfg.eta_prop = std::stod(value);
        else if (key == "tau_days") cfg.tau_days = std::stoi(value);
        else throw GraphError("unknown config key: " + key);
    }
    cfg.validate();
    return cfg;
}

double resolve_now(const ToolGraph& g, double now_flag) {
    if (now_flag >= 0.0) return now_flag;
    double latest = 0.0;
    auto scan = [&latest](const InvocationStats& st) {
        for (const auto& ev : st.recent) latest = std::max(latest, ev.timestamp);
    };
    for (const auto& a : g.apis()) scan(a.stats);
    for (const auto& p : g.params()) scan(p.stats);
    return latest;
}

int cmd_graph_build(const std::string& world_path, const std::string& out_path,
                    double threshold) {
    const FixtureWorld world = load_world(world_path);
    LexicalSimilarity sim;
    ToolGraph g = build_graph(world.api_specs(), sim, threshold);
    StatisticalScorer scorer;
    score_edges(g, scorer);
    g.set_version(1);
    save_graph(g, out_path);
    std::cout << "graph: " << g.apis().size() << " apis, " << g.params().size() << " params, "
              << g.edges().size() << " edges -> " << out_path << "\n";
    return 0;
}

void print_plan(const ToolGraph& g, const SubgraphPlan& plan) {
    std::cout << serialize_subgraph(g, plan);
    std::cout << "score=" << format_fixed6(plan.score) << " nodes=" << plan.nodes.size()
              << " edges=" << plan.edges.size() << " target=" << plan.target_api << "\n";
}

struct SimulatedUser {
    const TaskSpec* task;
    std::string operator()(const std::string& question) const {
        for (const auto& [k, v] : task->hints) {
            if (question.find(k) != std::string::npos) return k + "=" + v;
        }
        return "unknown";
    }
};

int cmd_run(const std::string& world_path, const std::string& graph_path,
            const std::string& policy_kind, const std::string& policy_cmd, std::uint64_t seed,
            int max_steps, const std::string& records_path) {
    const FixtureWorld world = load_world(world_path);
    ToolGraph g = load_graph(graph_path);
    WorldExecutor executor(world, g);

    std::unique_ptr<DecisionPolicy> policy;
    if (policy_kind == "rule") {
        policy = std::make_unique<RulePolicy>(world.facts);
    } else if (policy_kind == "external") {
        if (policy_cmd.empty()) throw GraphError("--policy external requires --policy-cmd");
        policy = std::make_unique<ExternalPolicy>(subprocess_transport(policy_cmd));
    } else {
        throw GraphError("unknown policy: " + policy_kind);
    }

    std::vector<EpisodeRecord> records;
    std::vector<bool> judgments;
    double clock = 0.0;
    for (const auto& task : world.tasks) {
        clock += 0.2;
        RunOptions opts;
        opts.limits.max_steps = max_steps;
        opts.search_config.rng_seed = seed;
        opts.timestamp = clock;
        opts.responder = SimulatedUser{&task};
        EpisodeRecord rec = run_episode(task.query, g, *policy, executor, opts);
        rec.task_id = task.id;
        rec.difficulty = task.difficulty;
        const bool ok = rec.completed && judge(rec.final_answer, task.answer);
        std::cout << task.id << ": " << (rec.completed ? "completed" : "incomplete")
                  << (ok ? ", correct" : ", incorrect") << ", steps=" << rec.llm_calls << "\n";
        records.push_back(std::move(rec));
        judgments.push_back(ok);
    }
    const MetricsReport report = compute_metrics(records, judgments);
    std::cout << render_table(report) << render_kv(report);
    if (!records_path.empty()) save_records(records, judgments, records_path);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tool dependency graph navigation engine"};
    app.require_subcommand(1);

    // graph build
    auto* graph_cmd = app.add_subcommand("graph", "graph construction and maintenance");
    graph_cmd->require_subcommand(1);
    auto* build_cmd = graph_cmd->add_subcommand("build", "build a graph from a world file");
    std::string build_world, build_out;
    double build_threshold = 0.8;
    build_cmd->add_option("--specs,--world", build_world, "world/spec file")->required();
    build_cmd->add_option("--out", build_out, "output graph file")->required();
    build_cmd->add_option("--threshold", build_threshold, "clustering similarity threshold");

    // search ab | heur
    auto* search_cmd = app.add_subcommand("search", "toolchain subgraph search");
    search_cmd->require_subcommand(1);
    auto* ab_cmd = search_cmd->add_subcommand("ab", "alpha-beta backward pruning");
    std::string ab_graph, ab_target, ab_param;
    ab_cmd->add_option("--graph", ab_graph)->required();
    ab_cmd->add_option("--target", ab_target)->required();
    ab_cmd->add_option("--param", ab_param);
    auto* heur_cmd = search_cmd->add_subcommand("heur", "hybrid annealing/genetic search");
    std::string heur_graph, heur_targets;
    std::uint64_t heur_seed = 0;
    heur_cmd->add_option("--graph", heur_graph)->required();
    heur_cmd->add_option("--targets", heur_targets, "comma-separated target ids")->required();
    heur_cmd->add_option("--seed", heur_seed);

    // evolve prune|reactivate|propagate
    auto* evolve_cmd = app.add_subcommand("evolve", "graph evolution under churn");
    evolve_cmd->require_subcommand(1);
    std::string ev_graph, ev_config, ev_out, ev_world;
    double ev_now = -1.0;
    int ev_phase = 2;
    std::uint64_t ev_seed = 0;
    bool ev_assume_recovered = false;
    for (const char* name : {"prune", "reactivate", "propagate"}) {
        auto* sub = evolve_cmd->add_subcommand(name);
        sub->add_option("--graph", ev_graph)->required();
        sub->add_option("--config", ev_config, "key=value evolution config");
        sub->add_option("--out", ev_out, "output graph path (defaults to --graph)");
        sub->add_option("--now", ev_now, "logical day for window statistics");
        if (std::string(name) == "reactivate") {
            sub->add_option("--world", ev_world, "world file used as availability oracle");
            sub->add_option("--phase", ev_phase);
            sub->add_option("--seed", ev_seed);
            sub->add_flag("--assume-recovered", ev_assume_recovered,
                          "treat every probed api as recovered");
        }
    }

    // run
    auto* run_cmd = app.add_subcommand("run", "run the episode loop over a task set");
    std::string run_world, run_graph, run_policy = "rule", run_policy_cmd, run_records;
    std::uint64_t run_seed = 0;
    int run_max_steps = 12;
    run_cmd->add_option("--world", run_world)->required();
    run_cmd->add_option("--graph", run_graph)->required();
    run_cmd->add_option("--policy", run_policy, "rule|external");
    run_cmd->add_option("--policy-cmd", run_policy_cmd, "command for the external policy");
    run_cmd->add_option("--seed", run_seed);
    run_cmd->add_option("--max-steps", run_max_steps);
    run_cmd->add_option("--records", run_records, "write per-episode records here");

    // experiment churn
    auto* exp_cmd = app.add_subcommand("experiment", "evaluation protocols");
    exp_cmd->require_subcommand(1);
    auto* churn_cmd = exp_cmd->add_subcommand("churn", "two-phase availability experiment");
    std::string churn_world, churn_graph;
    std::uint64_t churn_seed = 0;
    double churn_fail_frac = 0.1;
    churn_cmd->add_option("--world", churn_world)->required();
    churn_cmd->add_option("--graph", churn_graph)->required();
    churn_cmd->add_option("--seed", churn_seed);
    churn_cmd->add_option("--fail-frac", churn_fail_frac);

    // metrics
    auto* metrics_cmd = app.add_subcommand("metrics", "recompute a metrics report");
    std::string metrics_records;
    metrics_cmd->add_option("--records", metrics_records)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (build_cmd->parsed()) {
            return cmd_graph_build(build_world, build_out, build_threshold);
        }
        if (ab_cmd->parsed()) {
            const ToolGraph g = load_graph(ab_graph);
            SearchConfig cfg;
            const auto param =
                ab_param.empty() ? std::nullopt : std::optional<std::string>(ab_param);
            print_plan(g, alpha_beta_search(g, ab_target, param, cfg));
            return 0;
        }
        if (heur_cmd->parsed()) {
            const ToolGraph g = load_graph(heur_graph);
            SearchConfig cfg;
            cfg.rng_seed = heur_seed;
            std::vector<std::string> targets;
            for (const auto& t : split(heur_targets, ',')) {
                if (!trim(t).empty()) targets.push_back(trim(t));
            }
            const auto plans = heuristic_search(g, targets, cfg);
            print_plan(g, merge_plans(g, plans));
            return 0;
        }
        if (evolve_cmd->parsed()) {
            ToolGraph g = load_graph(ev_graph);
            const EvolutionConfig cfg = load_evolution_config(ev_config);
            const double now = resolve_now(g, ev_now);
            const std::string out = ev_out.empty() ? ev_graph : ev_out;
            const std::string verb = evolve_cmd->get_subcommands().front()->get_name();
            if (verb == "prune") {
                const auto pruned = apply_pruning(g, cfg, now);
                std::cout << "pruned " << pruned.size() << " api(s)\n";
                for (const auto& id : pruned) std::cout << "  " << id << "\n";
            } else if (verb == "propagate") {
                propagate_weights(g, cfg, now);
                std::cout << "propagated weights over " << g.edges().size() << " edge(s)\n";
            } else {
                struct CliProber final : AvailabilityProber {
                    const FixtureWorld* world = nullptr;
                    int phase = 2;
                    bool assume = false;
                    bool probe(const std::string& api_id) const override {
                        if (assume || !world) return true;
                        return world->available(api_id, phase, nullptr);
                    }
                };
                CliProber prober;
                FixtureWorld world;
                if (!ev_world.empty()) {
                    world = load_world(ev_world);
                    prober.world = &world;
                }
                prober.phase = ev_phase;
                prober.assume = ev_assume_recovered || ev_world.empty();
                Rng rng(ev_seed);
                const auto restored = reactivate(g, cfg, prober, rng);
                std::cout << "restored " << restored.size() << " api(s)\n";
                for (const auto& id : restored) std::cout << "  " << id << "\n";
            }
            save_graph(g, out);
            return 0;
        }
        if (run_cmd->parsed()) {
            return cmd_run(run_world, run_graph, run_policy, run_policy_cmd, run_seed,
                           run_max_steps, run_records);
        }
        if (churn_cmd->parsed()) {
            const FixtureWorld world = load_world(churn_world);
            const ToolGraph g = load_graph(churn_graph);
            ChurnConfig cfg;
            cfg.fail_frac = churn_fail_frac;
            cfg.search.rng_seed = churn_seed;
            const ChurnOutcome outcome = run_churn_experiment(world, g, cfg, churn_seed);
            std::cout << "downed:";
            for (const auto& id : outcome.downed) std::cout << " " << id;
            std::cout << "\n-- with mechanisms --\n"
                      << render_table(outcome.with_mechanisms.report)
                      << "-- without mechanisms --\n"
                      << render_table(outcome.without_mechanisms.report);
            std::cout << "on.tsr=" << format_fixed6(outcome.with_mechanisms.report.overall.tsr)
                      << " off.tsr="
                      << format_fixed6(outcome.without_mechanisms.report.overall.tsr) << "\n";
            return 0;
        }
        if (metrics_cmd->parsed()) {
            const auto [records, judgments] = load_records(metrics_records);
            const MetricsReport report = compute_metrics(records, judgments);
            std::cout << render_table(report) << render_kv(report);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
