#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "twnm/api_spec.hpp"
#include "twnm/similarity.hpp"

namespace twnm {

class GraphError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

struct InvocationEvent {
    double timestamp = 0.0;  // logical days; injected, never wall clock
    std::string peer;        // empty when the caller is unknown
    bool success = false;
};

struct InvocationStats {
    std::int64_t n_succ = 0;
    std::int64_t n_fail = 0;
    std::vector<InvocationEvent> recent;  // sorted by timestamp, bounded by the tau window

    std::int64_t total() const { return n_succ + n_fail; }
};

enum class NodeKind { Api, Param };

struct ApiNode {
    std::string id;
    std::string name;
    std::string description;
    InvocationStats stats;
    bool active = true;  // soft delete: pruned nodes stay in storage, leave search
};

struct MemberParam {
    std::string api_id;
    std::string original_name;
    std::string description;
};

struct ParamNode {
    std::string id;  // equals canonical_name unless disambiguated for uniqueness
    std::string canonical_name;
    std::vector<MemberParam> members;
    InvocationStats stats;
};

enum class EdgeKind { Structural, Behavioral };

struct Edge {
    std::string src;
    std::string dst;
    EdgeKind kind = EdgeKind::Structural;
    double w_stat = 0.0;    // empirical success ratio, the long-term statistical weight
    double w_search = 0.0;  // weight consumed by search; set by an EdgeScorer
};

// Directed weighted graph over API and parameter nodes. Structural edges
// (param->api inputs, api->param outputs) come from schemas; behavioral edges
// (api->api, param->param) are created from observed co-invocations.
//
// Mutation entry points bump `version` once per batch; readers that need a
// stable view take a copy (see GraphStore for the snapshot-swap wrapper).
class ToolGraph {
public:
    // -- construction ------------------------------------------------------
    void add_api(ApiNode node);
    void add_param(ParamNode node);
    // Kind is implied by the endpoint kinds; rejects self-loops, duplicate
    // (src,dst) pairs, unknown endpoints, and kind/endpoint mismatches.
    void add_edge(const std::string& src, const std::string& dst, EdgeKind kind);

    // -- lookup ------------------------------------------------------------
    bool has_node(const std::string& id) const { return index_.count(id) != 0; }
    NodeKind kind_of(const std::string& id) const;
    const ApiNode& api(const std::string& id) const;
    const ParamNode& param(const std::string& id) const;
    ApiNode& api_mut(const std::string& id);
    ParamNode& param_mut(const std::string& id);

    const std::vector<ApiNode>& apis() const { return apis_; }
    const std::vector<ParamNode>& params() const { return params_; }
    const std::vector<Edge>& edges() const { return edges_; }

    bool has_edge(const std::string& src, const std::string& dst) const;
    const Edge& edge(const std::string& src, const std::string& dst) const;
    Edge& edge_mut(const std::string& src, const std::string& dst);

    // Sorted by node id; deterministic traversal order everywhere.
    std::vector<std::string> predecessors(const std::string& id) const;
    std::vector<std::string> successors(const std::string& id) const;
    std::size_t in_degree(const std::string& id) const;
    std::size_t out_degree(const std::string& id) const;

    bool is_active(const std::string& id) const;

    // Structural helpers.
    std::vector<std::string> input_params(const std::string& api_id) const;
    std::vector<std::string> output_params(const std::string& api_id) const;
    std::vector<std::string> producers(const std::string& param_id) const;
    std::optional<std::string> param_for_member(const std::string& api_id,
                                                const std::string& original_name) const;

    // -- invocation bookkeeping ---------------------------------------------
    // Records one call of `dst`: lifetime counters and the bounded
    // recent-event window. `peer` is informational (stored on the event).
    void record_invocation(const std::optional<std::string>& peer, const std::string& dst,
                           bool success, double timestamp);

    // Attributes one (src -> dst) co-invocation: lifetime pair success count
    // plus the windowed pair log. Does not touch node counters and does not
    // bump the version; callers batch it under a record_invocation.
    void note_pair(const std::string& src, const std::string& dst, bool success,
                   double timestamp);

    // Behavioral chains appear on the first observed co-invocation.
    // No-op when the edge exists, the kinds differ, or src == dst.
    void ensure_behavioral_edge(const std::string& src, const std::string& dst);

    std::int64_t pair_successes(const std::string& src, const std::string& dst) const;

    struct WindowCounts {
        std::int64_t succ = 0;
        std::int64_t fail = 0;
    };
    WindowCounts window_counts(const std::string& id, double now, double tau_days) const;
    std::int64_t window_pair_successes(const std::string& src, const std::string& dst,
                                       double now, double tau_days) const;

    double tau_days() const { return tau_days_; }
    void set_tau_days(double tau);

    // -- versioning ----------------------------------------------------------
    std::uint64_t version() const { return version_; }
    void bump_version() { ++version_; }
    void set_version(std::uint64_t v) { version_ = v; }

    // Text file round trip; see README for the line grammar.
    void save(const std::string& path) const;
    static ToolGraph load(const std::string& path);

    friend bool operator==(const ToolGraph& a, const ToolGraph& b);

private:
    struct NodeRef {
        NodeKind kind;
        std::size_t index;
    };

    const NodeRef& ref(const std::string& id) const;
    void check_new_id(const std::string& id) const;
    void trim_window(InvocationStats& stats) const;

    std::vector<ApiNode> apis_;
    std::vector<ParamNode> params_;
    std::vector<Edge> edges_;
    std::map<std::string, NodeRef> index_;
    std::map<std::pair<std::string, std::string>, std::size_t> edge_index_;
    std::map<std::string, std::set<std::string>> out_adj_;
    std::map<std::string, std::set<std::string>> in_adj_;
    std::map<std::pair<std::string, std::string>, std::int64_t> pair_succ_;
    std::map<std::pair<std::string, std::string>, std::vector<InvocationEvent>> pair_events_;
    std::map<std::pair<std::string, std::string>, std::string> member_index_;
    double tau_days_ = 30.0;
    std::uint64_t version_ = 0;
    double latest_timestamp_ = 0.0;

    friend ToolGraph build_graph(const std::vector<ApiSpec>&, const SimilarityProvider&, double);
    friend ToolGraph& integrate_node(ToolGraph&, const ApiSpec&, const SimilarityProvider&, double);
};

bool operator==(const ToolGraph& a, const ToolGraph& b);

// Builds the graph from API schemas: one ApiNode per spec, raw parameters
// clustered into ParamNodes by greedy agglomeration (join the best-matching
// cluster whose member similarity reaches `threshold`), structural edges
// param->api for inputs and api->param for outputs, all weights zero.
ToolGraph build_graph(const std::vector<ApiSpec>& api_specs, const SimilarityProvider& sim,
                      double threshold);

// Success ratio N(src->dst)/N(dst) written into the edge's w_stat and
// returned; 0 when dst has never been invoked.
double update_statistical_weight(ToolGraph& g, const std::string& src, const std::string& dst);

// Applies the ratio to every edge in one version bump.
void update_all_statistical_weights(ToolGraph& g);

void save_graph(const ToolGraph& g, const std::string& path);
ToolGraph load_graph(const std::string& path);

// Snapshot-swap container: readers hold immutable snapshots identified by
// version while mutation batches build a successor and swap it in atomically.
class GraphStore {
public:
    explicit GraphStore(ToolGraph g)
        : current_(std::make_shared<const ToolGraph>(std::move(g))) {}

    std::shared_ptr<const ToolGraph> snapshot() const {
        std::lock_guard<std::mutex> lock(mu_);
        return current_;
    }

    // Serializes mutators; each batch produces a new version.
    void apply(const std::function<void(ToolGraph&)>& mutate) {
        std::lock_guard<std::mutex> lock(mu_);
        ToolGraph next = *current_;
        mutate(next);
        next.bump_version();
        current_ = std::make_shared<const ToolGraph>(std::move(next));
    }

private:
    mutable std::mutex mu_;
    std::shared_ptr<const ToolGraph> current_;
};

}  // namespace twnm
