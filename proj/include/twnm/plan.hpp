#pragma once

#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "twnm/graph.hpp"

namespace twnm {

struct PlanEdge {
    std::string src;
    std::string dst;
    EdgeKind kind = EdgeKind::Structural;

    friend bool operator==(const PlanEdge& a, const PlanEdge& b) {
        return a.src == b.src && a.dst == b.dst && a.kind == b.kind;
    }
    friend bool operator<(const PlanEdge& a, const PlanEdge& b) {
        return std::tie(a.src, a.dst, a.kind) < std::tie(b.src, b.dst, b.kind);
    }
};

// Target-rooted dependency subgraph selected by search. Nodes are a subset of
// the graph; edges are the induced ones. Every node has a directed path to
// target_api, or to one of extra_targets when plans have been merged.
struct SubgraphPlan {
    std::string target_api;
    std::vector<std::string> extra_targets;  // non-empty only for merged plans
    std::set<std::string> nodes;
    std::vector<PlanEdge> edges;  // sorted
    double score = 0.0;
    std::map<std::string, int> depth_of;          // hop distance to the nearest target
    std::map<std::string, NodeKind> node_kinds;   // snapshot; keeps plans self-contained

    std::vector<std::string> all_targets() const {
        std::vector<std::string> t{target_api};
        t.insert(t.end(), extra_targets.begin(), extra_targets.end());
        return t;
    }
};

// Restricts `candidates` to the nodes with a directed path to one of the
// targets inside the candidate-induced subgraph (the decode/repair step).
std::set<std::string> decode_connected(const ToolGraph& g,
                                       const std::vector<std::string>& targets,
                                       const std::set<std::string>& candidates);

// Assembles a plan from a node set: induces edges, computes hop distances via
// reverse BFS from the targets. The node set must already be decoded.
SubgraphPlan make_plan(const ToolGraph& g, const std::string& target_api,
                       const std::vector<std::string>& extra_targets,
                       const std::set<std::string>& nodes, double score);

}  // namespace twnm
