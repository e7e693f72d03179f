#pragma once

#include <deque>
#include <functional>
#include <string>

#include "twnm/agent.hpp"

namespace twnm {

// Text transport for an external completion service: request in, response
// out. The CLI wires this to a subprocess; tests inject plain functions.
using PolicyTransport = std::function<std::string(const std::string& request)>;

// Serialized decision context handed to the service: history pairs, the
// current observation, and the subgraph tree text, as a JSON object.
std::string serialize_context(const DecisionContext& ctx);

// Adapter for an external decision service. The response is a JSON array of
// action records sorted by dependency_rank, each with fields
// {action, target_api, params, recall_description, answer}; the adapter
// serves them to the loop one at a time. Malformed responses raise
// ProtocolError, which the episode harness counts against completion.
class ExternalPolicy final : public DecisionPolicy {
public:
    explicit ExternalPolicy(PolicyTransport transport) : transport_(std::move(transport)) {}

    Action decide(const DecisionContext& ctx) override;

private:
    PolicyTransport transport_;
    std::deque<Action> pending_;
};

// Runs `command` once per decision, writing the serialized context to its
// stdin and reading the JSON response from its stdout.
PolicyTransport subprocess_transport(const std::string& command);

}  // namespace twnm
