#pragma once

#include <set>
#include <string>
#include <vector>

#include "twnm/plan.hpp"

namespace twnm {

// Node/edge sets reconstructed from a serialized tree; used to verify that
// serialization is lossless on the structure it encodes.
struct ParsedTree {
    std::set<std::pair<std::string, NodeKind>> nodes;
    std::set<PlanEdge> edges;
    std::string root;
};

// Renders the plan as an indented dependency tree rooted at the target: two
// spaces per level, one `api:<id>` or `param:<id>` label per line, children
// are the node's in-plan predecessors in id order. A node that was already
// expanded elsewhere is emitted once more with a ` [ref]` marker and no
// children, which cuts cycles and keeps the output finite. Deterministic:
// identical plans serialize to identical bytes.
std::string serialize_subgraph(const ToolGraph& g, const SubgraphPlan& sub);

// Inverse of serialize_subgraph on node/edge sets. Throws ParseError on
// malformed text.
ParsedTree parse_subgraph_tree(const std::string& text);

}  // namespace twnm
