#include "twnm/experiment.hpp"

#include <algorithm>
#include <cmath>

#include "twnm/rng.hpp"

namespace twnm {

namespace {

class PhaseProber final : public AvailabilityProber {
public:
    PhaseProber(const FixtureWorld& world, const int& phase, const std::set<std::string>& down)
        : world_(&world), phase_(&phase), down_(&down) {}

    bool probe(const std::string& api_id) const override {
        return world_->available(api_id, *phase_, down_);
    }

private:
    const FixtureWorld* world_;
    const int* phase_;
    const std::set<std::string>* down_;
};

ChurnArm run_arm(const FixtureWorld& world, ToolGraph graph, const ChurnConfig& cfg,
                 const std::set<std::string>& down, std::uint64_t seed, bool mechanisms) {
    ChurnArm arm;
    RulePolicy policy(world.facts);
    WorldExecutor executor(world, graph);
    executor.set_extra_down(&down);

    Rng reactivation_rng(seed + 1000);
    double clock = 0.0;
    int phase = 1;
    PhaseProber prober(world, phase, down);

    for (phase = 1; phase <= 2; ++phase) {
        executor.set_phase(phase);
        for (const auto& task : world.tasks) {
            clock += cfg.clock_step;

            RunOptions opts;
            opts.limits.max_steps = cfg.max_steps;
            opts.search = cfg.search_kind;
            opts.search_config = cfg.search;
            opts.recombination = mechanisms;
            opts.timestamp = clock;
            opts.responder = [&task](const std::string& question) -> std::string {
                // The simulated user answers from the task's hint table: the
                // question names the parameter it needs.
                for (const auto& [k, v] : task.hints) {
                    if (question.find(k) != std::string::npos) return k + "=" + v;
                }
                return "unknown";
            };

            EpisodeRecord record = run_episode(task.query, graph, policy, executor, opts);
            record.task_id = task.id;
            record.difficulty = task.difficulty;
            const bool judged = record.completed && judge(record.final_answer, task.answer);
            arm.records.push_back(std::move(record));
            arm.judgments.push_back(judged);

            if (mechanisms) {
                apply_pruning(graph, cfg.evolution, clock);
                reactivate(graph, cfg.evolution, prober, reactivation_rng);
            }
        }
    }
    arm.report = compute_metrics(arm.records, arm.judgments);
    arm.final_graph_version = graph.version();
    return arm;
}

}  // namespace

ChurnOutcome run_churn_experiment(const FixtureWorld& world, const ToolGraph& graph,
                                  const ChurnConfig& cfg, std::uint64_t seed) {
    if (world.api_behaviors.size() < 10) {
        throw GraphError("churn experiment needs at least 10 APIs, got " +
                         std::to_string(world.api_behaviors.size()));
    }
    cfg.search.validate();
    cfg.evolution.validate();

    // Seeded outage set: ceil(fail_frac * N) APIs, Fisher-Yates over the
    // sorted id list so the choice is reproducible.
    std::vector<std::string> ids;
    for (const auto& [id, _] : world.api_behaviors) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    Rng rng(seed);
    for (std::size_t i = ids.size(); i > 1; --i) {
        std::swap(ids[i - 1], ids[rng.next_index(i)]);
    }
    const std::size_t down_count = static_cast<std::size_t>(
        std::ceil(cfg.fail_frac * static_cast<double>(ids.size())));

    ChurnOutcome outcome;
    for (std::size_t i = 0; i < down_count && i < ids.size(); ++i) {
        outcome.downed.insert(ids[i]);
    }

    outcome.with_mechanisms = run_arm(world, graph, cfg, outcome.downed, seed, true);
    outcome.without_mechanisms = run_arm(world, graph, cfg, outcome.downed, seed, false);
    return outcome;
}

}  // namespace twnm
