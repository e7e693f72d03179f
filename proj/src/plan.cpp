#include "twnm/plan.hpp"

#include <algorithm>
#include <deque>

namespace twnm {

std::set<std::string> decode_connected(const ToolGraph& g,
                                       const std::vector<std::string>& targets,
                                       const std::set<std::string>& candidates) {
    std::set<std::string> reached;
    std::deque<std::string> queue;
    for (const auto& t : targets) {
        if (candidates.count(t) && !reached.count(t)) {
            reached.insert(t);
            queue.push_back(t);
        }
    }
    while (!queue.empty()) {
        const std::string v = queue.front();
        queue.pop_front();
        for (const auto& p : g.predecessors(v)) {
            if (candidates.count(p) && !reached.count(p)) {
                reached.insert(p);
                queue.push_back(p);
            }
        }
    }
    return reached;
}

SubgraphPlan make_plan(const ToolGraph& g, const std::string& target_api,
                       const std::vector<std::string>& extra_targets,
                       const std::set<std::string>& nodes, double score) {
    SubgraphPlan plan;
    plan.target_api = target_api;
    plan.extra_targets = extra_targets;
    plan.nodes = nodes;
    plan.score = score;
    for (const auto& id : nodes) plan.node_kinds[id] = g.kind_of(id);

    for (const auto& e : g.edges()) {
        if (nodes.count(e.src) && nodes.count(e.dst)) {
            plan.edges.push_back(PlanEdge{e.src, e.dst, e.kind});
        }
    }
    std::sort(plan.edges.begin(), plan.edges.end());

    // Reverse BFS from the targets over the induced edges.
    std::deque<std::string> queue;
    for (const auto& t : plan.all_targets()) {
        if (nodes.count(t) && !plan.depth_of.count(t)) {
            plan.depth_of[t] = 0;
            queue.push_back(t);
        }
    }
    std::map<std::string, std::vector<std::string>> preds;
    for (const auto& e : plan.edges) preds[e.dst].push_back(e.src);
    while (!queue.empty()) {
        const std::string v = queue.front();
        queue.pop_front();
        const int d = plan.depth_of[v];
        for (const auto& p : preds[v]) {
            if (!plan.depth_of.count(p)) {
                plan.depth_of[p] = d + 1;
                queue.push_back(p);
            }
        }
    }
    return plan;
}

}  // namespace twnm
