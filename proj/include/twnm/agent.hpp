#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "twnm/evolution.hpp"
#include "twnm/plan.hpp"
#include "twnm/projection.hpp"
#include "twnm/search.hpp"
#include "twnm/similarity.hpp"
#include "twnm/simulator.hpp"

namespace twnm {

class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ObservationKind { UserQuery, ToolResult, ToolFailure, ClarificationReply };

// Observation payloads are structured text: '|'-separated key=value fields
// assembled by the episode loop, so a policy decision is a pure function of
// its context even though the sliding window forgets old steps.
struct Observation {
    ObservationKind kind = ObservationKind::UserQuery;
    std::string payload;
    int step_index = 0;
};

enum class ActionKind { DirectResponse, IntentClarification, ToolchainRetrieval, ToolExecution };

struct RetrievalRequest {
    std::array<std::optional<std::string>, 3> top3_targets;
    std::set<std::string> known_inputs;
    std::set<std::string> desired_outputs;
    std::string description;  // free-text recall description for the ranker
};

struct Action {
    ActionKind kind = ActionKind::DirectResponse;
    std::string answer;        // DirectResponse
    bool final_answer = true;  // false for a partial answer to one sub-intent
    std::string question;      // IntentClarification
    RetrievalRequest request;  // ToolchainRetrieval
    std::string api_id;        // ToolExecution
    std::map<std::string, std::string> params;

    static Action direct(std::string text, bool final_answer = true);
    static Action clarify(std::string question);
    static Action retrieve(RetrievalRequest req);
    static Action execute(std::string api, std::map<std::string, std::string> params);

    // Ids this action references; drives feasibility checks.
    std::vector<std::string> referenced_apis() const;
};

std::string action_kind_name(ActionKind k);

struct DecisionContext {
    std::vector<std::pair<Observation, Action>> history;  // at most 3, oldest first
    Observation current;
    std::optional<SubgraphPlan> subgraph;
    std::string subgraph_text;  // serialized dependency tree(s)
};

// A policy proposes a ranked candidate list with probabilities; the loop may
// project the distribution onto a feasible set before acting. decide() is
// the single-action view used by simple policies.
struct DecisionPolicy {
    virtual ~DecisionPolicy() = default;
    virtual Action decide(const DecisionContext& ctx) = 0;
    virtual std::pair<std::vector<Action>, PolicyDistribution> decide_distribution(
        const DecisionContext& ctx);
};

// ---------------------------------------------------------------------------
// Retrieval

struct RetrievalResult {
    SubgraphPlan merged;
    std::vector<SubgraphPlan> per_target;  // ordered by rank
    std::string tree_text;
};

enum class SearchKind { Heuristic, AlphaBeta };

struct RetrievalOptions {
    SearchKind search = SearchKind::Heuristic;
    SearchConfig config;
    std::set<std::string> exclude;  // episode-failed APIs, etc.
};

// Ranks active APIs against the request description, searches backward from
// the top-3 targets, and merges the per-target plans. Returns nullopt when no
// candidate scores above zero (the empty-plan signal).
std::optional<RetrievalResult> retrieve_toolchain(const RetrievalRequest& req, const ToolGraph& g,
                                                  const TextRanker& ranker,
                                                  const RetrievalOptions& opts);

// ---------------------------------------------------------------------------
// Execution over a plan

struct ExecutionState {
    std::map<std::string, std::string> bindings;  // canonical name -> value
    std::set<std::string> done;                   // successfully executed APIs
    std::set<std::string> failed;                 // episode-failed APIs
    std::optional<std::string> last_api;          // most recent success
};

// Next plan API ready to run: dependency order over structural edges
// (producers before consumers), ties broken by node id. An API is ready when
// every in-plan input parameter is bound and it is neither done nor failed.
std::optional<std::string> next_executable(const SubgraphPlan& plan,
                                           const ExecutionState& state);

struct StepOutcome {
    Observation observation;
    bool executed = false;
    bool success = false;
    bool deadlock = false;
    std::string api_id;
};

// Invokes the next ready API (or `preferred` when it is ready), merges its
// outputs into the bindings, records invocation statistics into the graph,
// and reports the result as an observation. No ready API means deadlock,
// which the caller maps to recombination.
StepOutcome execute_step(ToolGraph& g, const SubgraphPlan& plan, ExecutionState& state,
                         ToolExecutor& executor, double timestamp,
                         const std::optional<std::string>& preferred = std::nullopt);

// ---------------------------------------------------------------------------
// Path recombination

struct RecombineExhausted {};

using SwitchFn =
    std::function<std::optional<SubgraphPlan>(const std::set<std::string>& excluded)>;

// Recovery after `failed_api` failed, trying in order: (i) substitution by an
// active API whose inputs are covered by the bound parameters and whose
// outputs cover what the plan still needs from the failed node; (ii) upstream
// rerouting to alternative producers of the needed outputs; (iii) subgraph
// switching through `switch_fn` (re-retrieval excluding the failed set).
// The returned plan never contains the failed node.
std::variant<SubgraphPlan, RecombineExhausted> recombine(
    const ToolGraph& g, const SubgraphPlan& plan, const std::string& failed_api,
    const SearchConfig& cfg, const ExecutionState& state,
    const std::set<std::string>& required_outputs, const SwitchFn& switch_fn = nullptr);

// ---------------------------------------------------------------------------
// Rule-based policy

// Deterministic decision flow over fixture knowledge: common-sense lookup,
// then API matching via retrieval, then parameter completion. Compound
// queries split on " and also " are handled one sub-intent at a time.
class RulePolicy final : public DecisionPolicy {
public:
    explicit RulePolicy(std::map<std::string, std::string> facts) : facts_(std::move(facts)) {}

    Action decide(const DecisionContext& ctx) override;
    std::pair<std::vector<Action>, PolicyDistribution> decide_distribution(
        const DecisionContext& ctx) override;

private:
    std::map<std::string, std::string> facts_;
};

// ---------------------------------------------------------------------------
// Episode loop

struct EpisodeLimits {
    int max_steps = 12;
};

struct EpisodeRecord {
    std::string task_id;
    Difficulty difficulty = Difficulty::Easy;
    std::string query;
    bool completed = false;
    bool protocol_error = false;
    int llm_calls = 0;
    std::string final_answer;
    std::vector<std::pair<Observation, Action>> trace;
    std::set<std::string> failed_apis;
};

using FeasibleSupplier =
    std::function<FeasibleSet(const DecisionContext&, const std::vector<Action>&)>;

using ClarificationResponder = std::function<std::string(const std::string& question)>;

struct RunOptions {
    EpisodeLimits limits;
    SearchKind search = SearchKind::Heuristic;
    SearchConfig search_config;
    bool recombination = true;
    bool project_to_feasible = true;
    double timestamp = 0.0;  // injected logical clock for stats
    ClarificationResponder responder;  // defaults to "unknown"
    const TextRanker* ranker = nullptr;  // defaults to LexicalRanker
};

// Feasibility default: actions may not reference inactive or episode-failed
// APIs; non-referencing actions are always admissible.
FeasibleSet default_feasible_set(const ToolGraph& g, const std::set<std::string>& failed,
                                 const std::vector<Action>& actions);

EpisodeRecord run_episode(const std::string& query, ToolGraph& g, DecisionPolicy& policy,
                          ToolExecutor& executor, const RunOptions& opts);

}  // namespace twnm
