#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "twnm/agent.hpp"
#include "twnm/metrics.hpp"

namespace twnm {

struct ChurnConfig {
    double fail_frac = 0.1;    // share of APIs knocked out in phase 1
    int max_steps = 12;
    double clock_step = 0.2;   // logical days advanced per query
    SearchConfig search;
    EvolutionConfig evolution;
    SearchKind search_kind = SearchKind::Heuristic;
};

struct ChurnArm {
    MetricsReport report;
    std::vector<EpisodeRecord> records;
    std::vector<bool> judgments;
    std::uint64_t final_graph_version = 0;
};

struct ChurnOutcome {
    ChurnArm with_mechanisms;
    ChurnArm without_mechanisms;
    std::set<std::string> downed;  // APIs unavailable during phase 1
};

// Two-phase availability protocol on one query set: phase 1 knocks out a
// seeded share of APIs, phase 2 restores them and replays the same queries.
// The with-mechanisms arm runs recombination plus per-query pruning and
// reactivation; the other arm runs the bare loop. Both arms see the same
// query order and the same outage set; graph state carries across phases.
ChurnOutcome run_churn_experiment(const FixtureWorld& world, const ToolGraph& graph,
                                  const ChurnConfig& cfg, std::uint64_t seed);

}  // namespace twnm
