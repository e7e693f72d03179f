#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "twnm/api_spec.hpp"
#include "twnm/graph.hpp"

namespace twnm {

enum class Difficulty { Easy, Medium, Hard };

std::string difficulty_name(Difficulty d);
Difficulty difficulty_from(const std::string& s);

// Runtime behavior of one API: schema plus deterministic output templates.
// `${name}` inside a template substitutes the bound input of that name.
// An API with `mock_only` answers schema-shaped placeholder values.
struct ApiBehavior {
    std::string name;
    std::string description;
    std::vector<ParamSpec> inputs;
    std::vector<ParamSpec> outputs;
    std::map<std::string, std::string> output_templates;
    bool mock_only = false;
    std::set<int> down_phases;  // fixed unavailability per phase
};

struct TaskSpec {
    std::string id;
    Difficulty difficulty = Difficulty::Easy;
    std::string query;
    std::string answer;                         // ground truth for the judge
    std::map<std::string, std::string> hints;   // simulated user's clarification answers
};

// Authored, fully deterministic API world: behaviors, availability, tasks,
// and the common-sense fact table the rule policy consults.
struct FixtureWorld {
    std::map<std::string, ApiBehavior> api_behaviors;
    std::vector<TaskSpec> tasks;
    std::map<std::string, std::string> facts;  // normalized question -> answer

    std::vector<ApiSpec> api_specs() const;
    bool available(const std::string& api_id, int phase,
                   const std::set<std::string>* extra_down) const;
};

FixtureWorld load_world(const std::string& path);

struct SimResponse {
    std::string status;  // always "success" on protocol level
    std::string type;    // success | mock | error
    std::map<std::string, std::string> data;
    std::string message;

    bool ok() const { return type == "success" || type == "mock"; }
};

// Pure function of (world, api, bindings, phase, extra_down): unavailable
// APIs answer type=error, behavior-backed APIs answer their template outputs,
// schema-only APIs answer mock placeholders. Unknown ids produce an error
// response, not an exception.
SimResponse simulate_call(const FixtureWorld& world, const std::string& api_id,
                          const std::map<std::string, std::string>& bindings, int phase,
                          const std::set<std::string>* extra_down = nullptr);

// Deterministic replacement for answer comparison: both sides are lowercased
// and whitespace-normalized; the ground truth splits into ';'-separated
// facts, each of which must occur in the answer.
bool judge(const std::string& final_answer, const std::string& ground_truth);

// Executor contract used by the agent: request is (api id, bound parameter
// map), response mirrors the simulator format.
struct ToolExecutor {
    virtual ~ToolExecutor() = default;
    virtual SimResponse invoke(const std::string& api_id,
                               const std::map<std::string, std::string>& params) = 0;
};

// Bridges plans (which bind canonical parameter names) to the world (which
// speaks each API's original names), using the graph's member records.
class WorldExecutor final : public ToolExecutor {
public:
    WorldExecutor(const FixtureWorld& world, const ToolGraph& graph)
        : world_(&world), graph_(&graph) {}

    void set_phase(int phase) { phase_ = phase; }
    int phase() const { return phase_; }
    void set_extra_down(const std::set<std::string>* down) { extra_down_ = down; }

    SimResponse invoke(const std::string& api_id,
                       const std::map<std::string, std::string>& params) override;

private:
    const FixtureWorld* world_;
    const ToolGraph* graph_;
    int phase_ = 1;
    const std::set<std::string>* extra_down_ = nullptr;
};

}  // namespace twnm
