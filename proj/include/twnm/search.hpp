#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "twnm/plan.hpp"

namespace twnm {

struct SearchConfig {
    double alpha0 = 0.4;  // lower bound for acceptable path scores
    double beta0 = 0.9;   // upper bound for candidate evaluation
    int d_max_ab = 5;     // path-length bound for alpha-beta results
    double t0 = 200.0;    // initial annealing temperature
    double eta = 0.7;     // cooling rate
    int pop_size = 20;
    int d_max_h = 4;      // backward neighborhood radius for the hybrid search
    int max_gens = 10;
    double elite_frac = 0.6;
    std::uint64_t rng_seed = 0;
    std::array<double, 5> fitness_weights{0.35, 0.15, 0.3, 0.15, 0.05};

    void validate() const;
};

// 1/(1+sqrt(d)): longer paths score less.
double depth_attenuation(int d);

// max(0.3, 0.5 * 0.9^d): the pruning bar decays with depth down to a floor.
double dynamic_threshold(int d);

// Three-term average of the direct edge weight and the edges from u straight
// to the target API / target parameter when those exist, attenuated by
// depth. The indicator terms are literal: expanding the target itself counts
// the direct edge under both the first and the second term.
double node_score(const ToolGraph& g, const std::string& u, const std::string& v,
                  const std::string& target_api, const std::optional<std::string>& target_param,
                  int d);

// One (alpha, beta) state per accepted predecessor, in visit order.
struct AlphaBetaTrace {
    std::vector<std::pair<double, double>> threshold_states;
    std::size_t alpha_prunes = 0;
    std::size_t beta_cuts = 0;
};

// Breadth-first backward traversal from the target with alpha pruning and
// beta cuts at parameter nodes; thresholds tighten as scores come in. The
// result keeps the visited nodes within d_max_ab hops and always contains
// the target. Inactive nodes are never expanded.
SubgraphPlan alpha_beta_search(const ToolGraph& g, const std::string& target_api,
                               const std::optional<std::string>& target_param,
                               const SearchConfig& cfg, AlphaBetaTrace* trace = nullptr);

// Composite fitness over a target-connected node set, in [0,1]:
//   0.35 * mean closeness centrality of API nodes (undirected)
// + 0.15 * ln(1 + parameter-node share)
// + 0.30 * (0.2 e^{-d/10} + 0.8 e^{-n/8})   d = mean hop distance, n = |nodes|
// + 0.15 * mean w_search over induced edges (0 when edgeless)
// + 0.05 * 1/(1 + max(0, |E| - |V| + 1))    tree-likeness
double subgraph_fitness(const ToolGraph& g, const std::string& target_api,
                        const std::set<std::string>& nodes,
                        const std::array<double, 5>& weights);

struct GenerationStats {
    double best_fitness = 0.0;
    double temperature = 0.0;
};

struct HeuristicTrace {
    // One entry per target searched.
    std::vector<std::vector<GenerationStats>> generations;
};

// Hybrid annealing/genetic search over the d_max_h-hop backward neighborhood
// of each target. Chromosomes are bit vectors over the candidate nodes;
// decoding keeps the target-connected part. Deterministic per target for a
// fixed seed: target i draws from seed rng_seed + i, so per-target searches
// can run concurrently without changing results.
std::vector<SubgraphPlan> heuristic_search(const ToolGraph& g,
                                           const std::vector<std::string>& targets,
                                           const SearchConfig& cfg,
                                           HeuristicTrace* trace = nullptr);

// Union of per-target plans; the first plan's target becomes the primary.
SubgraphPlan merge_plans(const ToolGraph& g, const std::vector<SubgraphPlan>& plans);

// Enumerates every target-connected subset of the bounded backward
// neighborhood and returns the fitness-maximal one; ties break toward the
// lexicographically smallest node set. Refuses neighborhoods above 20 nodes.
SubgraphPlan exhaustive_search(const ToolGraph& g, const std::string& target_api, int d_max,
                               const std::array<double, 5>& weights = SearchConfig{}.fitness_weights);

// Active nodes reachable backward from the target within `depth` hops.
std::vector<std::string> backward_neighborhood(const ToolGraph& g, const std::string& target,
                                               int depth);

}  // namespace twnm
