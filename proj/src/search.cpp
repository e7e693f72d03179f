#include "twnm/search.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>

#include "twnm/rng.hpp"
#include "twnm/util.hpp"

namespace twnm {

void SearchConfig::validate() const {
    if (!(0.0 <= alpha0 && alpha0 < beta0 && beta0 <= 1.0)) {
        throw GraphError("search config requires 0 <= alpha0 < beta0 <= 1");
    }
    if (!(eta > 0.0 && eta < 1.0)) throw GraphError("eta must lie in (0,1)");
    if (pop_size < 2) throw GraphError("population size must be at least 2");
    if (!(elite_frac > 0.0 && elite_frac <= 1.0)) throw GraphError("elite_frac must lie in (0,1]");
    if (d_max_ab < 0 || d_max_h < 0 || max_gens < 0) throw GraphError("depth/generation bounds must be non-negative");
    if (t0 <= 0.0) throw GraphError("initial temperature must be positive");
    double wsum = 0.0;
    for (double w : fitness_weights) wsum += w;
    if (std::abs(wsum - 1.0) > 1e-9) throw GraphError("fitness weights must sum to 1");
}

double depth_attenuation(int d) {
    if (d < 0) throw GraphError("depth must be non-negative");
    return 1.0 / (1.0 + std::sqrt(static_cast<double>(d)));
}

double dynamic_threshold(int d) {
    if (d < 0) throw GraphError("depth must be non-negative");
    return std::max(0.3, 0.5 * std::pow(0.9, static_cast<double>(d)));
}

double node_score(const ToolGraph& g, const std::string& u, const std::string& v,
                  const std::string& target_api, const std::optional<std::string>& target_param,
                  int d) {
    const Edge& direct = g.edge(u, v);  // throws for a missing direct edge
    double sum = direct.w_search;
    if (g.has_edge(u, target_api)) {
        sum += g.edge(u, target_api).w_search;
    }
    if (target_param && g.has_edge(u, *target_param)) {
        sum += g.edge(u, *target_param).w_search;
    }
    return sum / 3.0 * depth_attenuation(d);
}

std::vector<std::string> backward_neighborhood(const ToolGraph& g, const std::string& target,
                                               int depth) {
    if (!g.has_node(target)) throw GraphError("unknown target: " + target);
    std::map<std::string, int> dist{{target, 0}};
    std::deque<std::string> queue{target};
    while (!queue.empty()) {
        const std::string v = queue.front();
        queue.pop_front();
        const int dv = dist[v];
        if (dv == depth) continue;
        for (const auto& p : g.predecessors(v)) {
            if (!g.is_active(p) || dist.count(p)) continue;
            dist[p] = dv + 1;
            queue.push_back(p);
        }
    }
    std::vector<std::string> out;
    out.reserve(dist.size());
    for (const auto& [id, _] : dist) out.push_back(id);
    return out;  // std::map iteration is already sorted by id
}

// ---------------------------------------------------------------------------
// Alpha-beta backward pruning

SubgraphPlan alpha_beta_search(const ToolGraph& g, const std::string& target_api,
                               const std::optional<std::string>& target_param,
                               const SearchConfig& cfg, AlphaBetaTrace* trace) {
    cfg.validate();
    if (!g.has_node(target_api)) throw GraphError("unknown target: " + target_api);
    if (target_param && !g.has_node(*target_param)) {
        throw GraphError("unknown target parameter: " + *target_param);
    }

    double alpha = cfg.alpha0;
    double beta = cfg.beta0;
    std::map<std::string, int> depth{{target_api, 0}};
    std::deque<std::string> queue{target_api};

    while (!queue.empty()) {
        const std::string v = queue.front();
        queue.pop_front();
        const int dv = depth[v];
        if (dv >= cfg.d_max_ab) continue;  // predecessors would exceed the path bound
        for (const auto& p : g.predecessors(v)) {
            if (depth.count(p) || !g.is_active(p)) continue;
            const double s = node_score(g, p, v, target_api, target_param, dv);
            const double bar = dynamic_threshold(dv);
            if (g.kind_of(p) == NodeKind::Param) {
                if (s < bar && s < alpha) {
                    if (trace) ++trace->alpha_prunes;
                    continue;  // alpha-prune: weak parameter branch
                }
                if (s > beta) {
                    if (trace) ++trace->beta_cuts;
                    break;  // beta-cut: stop expanding v's remaining predecessors
                }
            }
            alpha = std::max(alpha, 0.85 * s);
            beta = std::min(beta, 1.15 * s);
            if (trace) trace->threshold_states.emplace_back(alpha, beta);
            depth[p] = dv + 1;
            queue.push_back(p);
        }
    }

    std::set<std::string> nodes;
    for (const auto& [id, d] : depth) {
        if (d <= cfg.d_max_ab) nodes.insert(id);
    }
    SubgraphPlan plan = make_plan(g, target_api, {}, nodes, 0.0);
    plan.score = subgraph_fitness(g, target_api, nodes, cfg.fitness_weights);
    return plan;
}

// ---------------------------------------------------------------------------
// Fitness

namespace {

// Closeness centrality of `source` on the undirected induced subgraph:
// (n-1) / sum of hop distances, and 0 for isolated or singleton nodes.
double closeness(const std::map<std::string, std::vector<std::string>>& undirected,
                 const std::string& source, std::size_t n) {
    if (n <= 1) return 0.0;
    std::map<std::string, int> dist{{source, 0}};
    std::deque<std::string> queue{source};
    long long total = 0;
    while (!queue.empty()) {
        const std::string v = queue.front();
        queue.pop_front();
        auto it = undirected.find(v);
        if (it == undirected.end()) continue;
        for (const auto& w : it->second) {
            if (!dist.count(w)) {
                dist[w] = dist[v] + 1;
                total += dist[w];
                queue.push_back(w);
            }
        }
    }
    if (dist.size() <= 1 || total == 0) return 0.0;
    // Reachable-count convention keeps the value in [0,1] even if the
    // undirected view were ever disconnected.
    return static_cast<double>(dist.size() - 1) / static_cast<double>(total);
}

}  // namespace

double subgraph_fitness(const ToolGraph& g, const std::string& target_api,
                        const std::set<std::string>& nodes,
                        const std::array<double, 5>& weights) {
    if (nodes.empty()) throw GraphError("fitness over an empty subgraph");
    if (!nodes.count(target_api)) throw GraphError("subgraph does not contain its target");

    const std::size_t n = nodes.size();
    std::size_t param_count = 0;
    for (const auto& id : nodes) {
        if (g.kind_of(id) == NodeKind::Param) ++param_count;
    }

    // Induced edges once; everything below reuses them.
    std::vector<const Edge*> induced;
    std::map<std::string, std::vector<std::string>> undirected;
    std::map<std::string, std::vector<std::string>> preds;
    for (const auto& e : g.edges()) {
        if (nodes.count(e.src) && nodes.count(e.dst)) {
            induced.push_back(&e);
            undirected[e.src].push_back(e.dst);
            undirected[e.dst].push_back(e.src);
            preds[e.dst].push_back(e.src);
        }
    }

    // Mean closeness centrality over API nodes.
    double cc_sum = 0.0;
    std::size_t api_count = 0;
    for (const auto& id : nodes) {
        if (g.kind_of(id) == NodeKind::Api) {
            cc_sum += closeness(undirected, id, n);
            ++api_count;
        }
    }
    const double compactness = api_count == 0 ? 0.0 : cc_sum / static_cast<double>(api_count);

    const double rho_p = static_cast<double>(param_count) / static_cast<double>(n);
    const double density_term = std::log(1.0 + rho_p);

    // Mean hop distance to the target over all subgraph nodes.
    std::map<std::string, int> depth{{target_api, 0}};
    std::deque<std::string> queue{target_api};
    long long depth_sum = 0;
    while (!queue.empty()) {
        const std::string v = queue.front();
        queue.pop_front();
        for (const auto& p : preds[v]) {
            if (!depth.count(p)) {
                depth[p] = depth[v] + 1;
                depth_sum += depth[p];
                queue.push_back(p);
            }
        }
    }
    if (depth.size() != n) throw GraphError("fitness requires a target-connected subgraph");
    const double mean_depth = static_cast<double>(depth_sum) / static_cast<double>(n);
    const double depth_penalty =
        0.2 * std::exp(-mean_depth / 10.0) + 0.8 * std::exp(-static_cast<double>(n) / 8.0);

    double weight_sum = 0.0;
    for (const Edge* e : induced) weight_sum += e->w_search;
    const double mean_weight =
        induced.empty() ? 0.0 : weight_sum / static_cast<double>(induced.size());

    const double extra_edges =
        std::max(0.0, static_cast<double>(induced.size()) - static_cast<double>(n) + 1.0);
    const double simplicity = 1.0 / (1.0 + extra_edges);

    return weights[0] * compactness + weights[1] * density_term + weights[2] * depth_penalty +
           weights[3] * mean_weight + weights[4] * simplicity;
}

// ---------------------------------------------------------------------------
// Hybrid heuristic search

namespace {

using Genome = std::vector<char>;

std::set<std::string> genome_nodes(const Genome& genome,
                                   const std::vector<std::string>& candidates) {
    std::set<std::string> out;
    for (std::size_t i = 0; i < genome.size(); ++i) {
        if (genome[i]) out.insert(candidates[i]);
    }
    return out;
}

// Decode: force the target bit, keep only the target-connected part.
std::set<std::string> repair(const ToolGraph& g, const std::string& target,
                             const std::vector<std::string>& candidates, Genome& genome,
                             std::size_t target_idx) {
    genome[target_idx] = 1;
    std::set<std::string> nodes = genome_nodes(genome, candidates);
    std::set<std::string> kept = decode_connected(g, {target}, nodes);
    for (std::size_t i = 0; i < genome.size(); ++i) {
        genome[i] = kept.count(candidates[i]) ? 1 : 0;
    }
    return kept;
}

struct Chromosome {
    Genome genome;
    double fitness = 0.0;
};

}  // namespace

std::vector<SubgraphPlan> heuristic_search(const ToolGraph& g,
                                           const std::vector<std::string>& targets,
                                           const SearchConfig& cfg, HeuristicTrace* trace) {
    cfg.validate();
    if (targets.empty()) throw GraphError("heuristic search needs at least one target");
    for (const auto& t : targets) {
        if (!g.has_node(t)) throw GraphError("unknown target: " + t);
    }

    std::vector<SubgraphPlan> plans;
    plans.reserve(targets.size());
    if (trace) trace->generations.assign(targets.size(), {});

    for (std::size_t ti = 0; ti < targets.size(); ++ti) {
        const std::string& target = targets[ti];
        Rng rng(cfg.rng_seed + ti);  // independent stream per target

        const std::vector<std::string> candidates = backward_neighborhood(g, target, cfg.d_max_h);
        const std::size_t m = candidates.size();
        std::size_t target_idx = 0;
        for (std::size_t i = 0; i < m; ++i) {
            if (candidates[i] == target) target_idx = i;
        }

        auto evaluate = [&](Chromosome& c) {
            c.fitness = subgraph_fitness(g, target, genome_nodes(c.genome, candidates),
                                         cfg.fitness_weights);
        };

        // Seed the population with the two extremes plus random fills.
        std::vector<Chromosome> pop(static_cast<std::size_t>(cfg.pop_size));
        for (std::size_t i = 0; i < pop.size(); ++i) {
            Genome genome(m, 0);
            if (i == 1) {
                std::fill(genome.begin(), genome.end(), 1);
            } else if (i >= 2) {
                for (std::size_t b = 0; b < m; ++b) genome[b] = rng.next_bool() ? 1 : 0;
            }
            repair(g, target, candidates, genome, target_idx);
            pop[i].genome = std::move(genome);
            evaluate(pop[i]);
        }

        double temperature = cfg.t0;
        int k = 0;
        while (temperature > 1.0 && k <= cfg.max_gens) {
            // Rank by fitness; stable order keeps runs reproducible.
            std::vector<std::size_t> order(pop.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::stable_sort(order.begin(), order.end(), [&pop](std::size_t a, std::size_t b) {
                return pop[a].fitness > pop[b].fitness;
            });
            if (trace) {
                trace->generations[ti].push_back(
                    GenerationStats{pop[order[0]].fitness, temperature});
            }

            const std::size_t elite_count = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::floor(cfg.elite_frac * pop.size() + 1e-9)));
            std::vector<Chromosome> next;
            next.reserve(pop.size());
            for (std::size_t i = 0; i < elite_count && i < pop.size(); ++i) {
                next.push_back(pop[order[i]]);  // elites pass through unmodified
            }

            const int theta = static_cast<int>(std::floor(temperature / 100.0));
            while (next.size() < pop.size()) {
                const Chromosome& pa = pop[order[rng.next_index(elite_count)]];
                const Chromosome& pb = pop[order[rng.next_index(elite_count)]];
                Chromosome child;
                child.genome.resize(m);
                for (std::size_t b = 0; b < m; ++b) {
                    child.genome[b] = rng.next_bool() ? pa.genome[b] : pb.genome[b];
                }
                for (int f = 0; f < theta && m > 0; ++f) {
                    const std::size_t bit = rng.next_index(m);
                    if (bit != target_idx) child.genome[bit] ^= 1;
                }
                repair(g, target, candidates, child.genome, target_idx);
                evaluate(child);

                // Metropolis step against the weaker parent: worse offspring
                // only replace it with probability exp(-dF * 100 / T).
                const Chromosome& weaker = pa.fitness <= pb.fitness ? pa : pb;
                const double delta = weaker.fitness - child.fitness;
                if (delta <= 0.0 || rng.next_double() < std::exp(-delta * 100.0 / temperature)) {
                    next.push_back(std::move(child));
                } else {
                    next.push_back(weaker);
                }
            }
            pop = std::move(next);
            temperature = std::pow(cfg.eta, 1.0 + static_cast<double>(k) / 5.0) * temperature;
            ++k;
        }

        const Chromosome* best = &pop.front();
        for (const auto& c : pop) {
            if (c.fitness > best->fitness) best = &c;
        }
        SubgraphPlan plan =
            make_plan(g, target, {}, genome_nodes(best->genome, candidates), best->fitness);
        plans.push_back(std::move(plan));
    }
    return plans;
}

SubgraphPlan merge_plans(const ToolGraph& g, const std::vector<SubgraphPlan>& plans) {
    if (plans.empty()) throw GraphError("no plans to merge");
    std::set<std::string> nodes;
    double best_score = 0.0;
    std::vector<std::string> extra;
    for (std::size_t i = 0; i < plans.size(); ++i) {
        nodes.insert(plans[i].nodes.begin(), plans[i].nodes.end());
        best_score = std::max(best_score, plans[i].score);
        if (i > 0) extra.push_back(plans[i].target_api);
    }
    return make_plan(g, plans.front().target_api, extra, nodes, best_score);
}

// ---------------------------------------------------------------------------
// Exhaustive oracle

SubgraphPlan exhaustive_search(const ToolGraph& g, const std::string& target_api, int d_max,
                               const std::array<double, 5>& weights) {
    const std::vector<std::string> neighborhood = backward_neighborhood(g, target_api, d_max);
    if (neighborhood.size() > 20) {
        throw GraphError("exhaustive search refused: neighborhood has " +
                         std::to_string(neighborhood.size()) + " nodes (limit 20)");
    }
    std::vector<std::string> others;
    for (const auto& id : neighborhood) {
        if (id != target_api) others.push_back(id);
    }

    std::set<std::string> best_nodes{target_api};
    double best_fitness = subgraph_fitness(g, target_api, best_nodes, weights);
    const std::size_t m = others.size();
    for (std::uint64_t mask = 1; mask < (1ull << m); ++mask) {
        std::set<std::string> nodes{target_api};
        for (std::size_t i = 0; i < m; ++i) {
            if (mask & (1ull << i)) nodes.insert(others[i]);
        }
        // Only target-connected subsets are admissible.
        if (decode_connected(g, {target_api}, nodes).size() != nodes.size()) continue;
        const double f = subgraph_fitness(g, target_api, nodes, weights);
        if (f > best_fitness || (f == best_fitness && nodes < best_nodes)) {
            best_fitness = f;
            best_nodes = std::move(nodes);
        }
    }
    return make_plan(g, target_api, {}, best_nodes, best_fitness);
}

}  // namespace twnm
