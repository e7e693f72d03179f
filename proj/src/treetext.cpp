#include "twnm/treetext.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "twnm/util.hpp"

namespace twnm {

namespace {

// In-plan predecessors of `id`, sorted for stable output.
std::vector<std::string> plan_predecessors(const SubgraphPlan& sub, const std::string& id) {
    std::vector<std::string> out;
    for (const auto& e : sub.edges) {
        if (e.dst == id) out.push_back(e.src);
    }
    std::sort(out.begin(), out.end());
    return out;
}

void render(const ToolGraph& g, const SubgraphPlan& sub, const std::string& id, int depth,
            std::set<std::string>& expanded, std::ostringstream& out) {
    const std::string label =
        (g.kind_of(id) == NodeKind::Api ? "api:" : "param:") + id;
    for (int i = 0; i < depth; ++i) out << "  ";
    if (expanded.count(id)) {
        out << label << " [ref]\n";
        return;
    }
    out << label << "\n";
    expanded.insert(id);
    for (const auto& pred : plan_predecessors(sub, id)) {
        render(g, sub, pred, depth + 1, expanded, out);
    }
}

}  // namespace

std::string serialize_subgraph(const ToolGraph& g, const SubgraphPlan& sub) {
    if (!sub.nodes.count(sub.target_api)) {
        throw GraphError("plan does not contain its target api");
    }
    std::ostringstream out;
    std::set<std::string> expanded;
    for (const auto& target : sub.all_targets()) {
        if (!sub.nodes.count(target)) continue;
        render(g, sub, target, 0, expanded, out);
    }
    // Connectivity precondition: the backward walk must reach every node.
    for (const auto& id : sub.nodes) {
        if (!expanded.count(id)) {
            throw GraphError("subgraph is not connected to the target: " + id);
        }
    }
    return out.str();
}

ParsedTree parse_subgraph_tree(const std::string& text) {
    ParsedTree tree;
    std::vector<std::string> stack;  // node id per depth
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::size_t indent = 0;
        while (indent < line.size() && line[indent] == ' ') ++indent;
        if (indent % 2 != 0) throw ParseError(lineno, "odd indentation");
        const std::size_t depth = indent / 2;
        if (depth > stack.size()) throw ParseError(lineno, "indentation jumps a level");

        std::string body = line.substr(indent);
        const std::string ref_marker = " [ref]";
        if (body.size() > ref_marker.size() &&
            body.compare(body.size() - ref_marker.size(), ref_marker.size(), ref_marker) == 0) {
            body = body.substr(0, body.size() - ref_marker.size());
        }
        NodeKind kind;
        std::string id;
        if (body.rfind("api:", 0) == 0) {
            kind = NodeKind::Api;
            id = body.substr(4);
        } else if (body.rfind("param:", 0) == 0) {
            kind = NodeKind::Param;
            id = body.substr(6);
        } else {
            throw ParseError(lineno, "expected api:<id> or param:<id>");
        }
        if (id.empty()) throw ParseError(lineno, "empty node id");

        stack.resize(depth);
        if (depth > 0) {
            const std::string& parent = stack[depth - 1];
            NodeKind pk = tree.nodes.count({parent, NodeKind::Api}) ? NodeKind::Api
                                                                    : NodeKind::Param;
            const EdgeKind ek = (pk == kind) ? EdgeKind::Behavioral : EdgeKind::Structural;
            tree.edges.insert(PlanEdge{id, parent, ek});
        } else if (tree.root.empty()) {
            tree.root = id;  // first root; merged plans may render several trees
        }
        tree.nodes.insert({id, kind});
        stack.push_back(id);
    }
    if (tree.root.empty()) throw ParseError(lineno == 0 ? 1 : lineno, "empty tree");
    return tree;
}

}  // namespace twnm
