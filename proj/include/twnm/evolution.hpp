#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "twnm/graph.hpp"
#include "twnm/rng.hpp"

namespace twnm {

struct EvolutionConfig {
    double lambda = 0.85;          // failure-rate vs frequency trade-off
    double prune_threshold = 0.7;  // scores above this mark a node inactive
    double reactivate_frac = 0.1;  // share of pruned nodes probed per round
    double eta_prop = 0.7;         // long-term memory share in weight propagation
    int tau_days = 7;              // sliding window for failure/usage statistics

    void validate() const;
};

// lambda * sigmoid(f_fail) + (1-lambda) * sigmoid(1/f_freq). A frequency of
// zero uses the cap 1/f_freq = 20, so never-used nodes are maximally prunable.
double prune_score(double f_fail, double f_freq, double lambda);

// Marks every active API whose prune score exceeds the threshold as inactive
// (soft delete: the record stays, search stops seeing it). Failure rate and
// frequency come from the recent-event window ending at `now`. Returns the
// ids pruned in this pass.
std::vector<std::string> apply_pruning(ToolGraph& g, const EvolutionConfig& cfg, double now);

// Availability oracle for reactivation probes; deterministic for a fixed
// environment state.
struct AvailabilityProber {
    virtual ~AvailabilityProber() = default;
    virtual bool probe(const std::string& api_id) const = 0;
};

// Samples ceil(reactivate_frac * |pruned|) inactive APIs with the caller's
// rng, probes each, and restores the recovered ones. Restoration clears the
// failure events in the recent window; lifetime counters stay.
std::vector<std::string> reactivate(ToolGraph& g, const EvolutionConfig& cfg,
                                    const AvailabilityProber& prober, Rng& rng);

// eta * w_prev + (1-eta) * recent success ratio; the ratio is 0 when the
// window holds no successful invocations of the head node.
double propagate_edge_weight(double w_prev, std::int64_t succ_uv_window,
                             std::int64_t succ_v_window, double eta_prop);

// Applies the propagation rule to every edge's w_stat using window counts
// ending at `now`; one version bump for the whole batch.
void propagate_weights(ToolGraph& g, const EvolutionConfig& cfg, double now);

// integrate_node lives in graph.hpp next to build_graph; the clustering it
// reuses is the same greedy agglomeration.

}  // namespace twnm
