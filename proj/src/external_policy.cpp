#include "twnm/external_policy.hpp"

#include <cstdio>
#include <stdexcept>

#include <json.hpp>

#include "twnm/util.hpp"

namespace twnm {

namespace {

using nlohmann::json;

json observation_json(const Observation& obs) {
    const char* kind = "user_query";
    switch (obs.kind) {
        case ObservationKind::UserQuery: kind = "user_query"; break;
        case ObservationKind::ToolResult: kind = "tool_result"; break;
        case ObservationKind::ToolFailure: kind = "tool_failure"; break;
        case ObservationKind::ClarificationReply: kind = "clarification_reply"; break;
    }
    return json{{"kind", kind}, {"payload", obs.payload}, {"step", obs.step_index}};
}

json action_json(const Action& a) {
    json out{{"action", action_kind_name(a.kind)}};
    switch (a.kind) {
        case ActionKind::DirectResponse: out["answer"] = a.answer; break;
        case ActionKind::IntentClarification: out["answer"] = a.question; break;
        case ActionKind::ToolchainRetrieval: out["recall_description"] = a.request.description; break;
        case ActionKind::ToolExecution:
            out["target_api"] = a.api_id;
            out["params"] = a.params;
            break;
    }
    return out;
}

// recall_description format: 'Name(description: ..., input: a:type/desc;
// output: b:type/desc)'. Only the name tokens matter for retrieval.
RetrievalRequest parse_recall_description(const std::string& text) {
    RetrievalRequest req;
    req.description = text;
    const std::string lower = to_lower(text);
    auto section = [&](const std::string& key) -> std::string {
        const std::size_t at = lower.find(key);
        if (at == std::string::npos) return "";
        std::size_t end = text.find_first_of(";)", at + key.size());
        std::size_t begin = at + key.size();
        std::string out;
        while (begin < text.size()) {
            end = text.find(';', begin);
            const std::string item = text.substr(
                begin, (end == std::string::npos ? text.size() : end) - begin);
            // Stop at the next section marker.
            if (to_lower(item).find("output:") != std::string::npos && key != "output:") break;
            out += item + ";";
            if (end == std::string::npos) break;
            begin = end + 1;
        }
        return out;
    };
    auto collect = [](const std::string& body, std::set<std::string>& into) {
        for (const auto& item : split(body, ';')) {
            const std::string t = trim(item);
            if (t.empty()) continue;
            const std::size_t colon = t.find(':');
            const std::string name = trim(colon == std::string::npos ? t : t.substr(0, colon));
            if (!name.empty() && name.find(' ') == std::string::npos) into.insert(name);
        }
    };
    collect(section("input:"), req.known_inputs);
    collect(section("output:"), req.desired_outputs);
    // The sets must stay disjoint; outputs win for retrieval purposes.
    for (const auto& d : req.desired_outputs) req.known_inputs.erase(d);
    return req;
}

Action parse_action(const json& item) {
    if (!item.is_object() || !item.contains("action")) {
        throw ProtocolError("action record is not an object with an 'action' field");
    }
    const std::string kind = item["action"].get<std::string>();
    if (kind == "direct_answer") {
        return Action::direct(item.value("answer", ""));
    }
    if (kind == "clarify_intent") {
        return Action::clarify(item.value("answer", ""));
    }
    if (kind == "retrieve_api") {
        return Action::retrieve(parse_recall_description(item.value("recall_description", "")));
    }
    if (kind == "call_api") {
        if (!item.contains("target_api")) throw ProtocolError("call_api without target_api");
        std::map<std::string, std::string> params;
        if (item.contains("params") && item["params"].is_object()) {
            for (const auto& [k, v] : item["params"].items()) {
                params[k] = v.is_string() ? v.get<std::string>() : v.dump();
            }
        }
        return Action::execute(item["target_api"].get<std::string>(), std::move(params));
    }
    throw ProtocolError("unknown action kind: " + kind);
}

}  // namespace

std::string serialize_context(const DecisionContext& ctx) {
    json history = json::array();
    for (const auto& [obs, act] : ctx.history) {
        history.push_back(json{{"observation", observation_json(obs)},
                               {"action", action_json(act)}});
    }
    json out{{"history", history},
             {"observation", observation_json(ctx.current)},
             {"subgraph", ctx.subgraph_text}};
    return out.dump();
}

Action ExternalPolicy::decide(const DecisionContext& ctx) {
    if (!pending_.empty()) {
        Action a = pending_.front();
        pending_.pop_front();
        // Intermediate answers from a multi-intent response are partial.
        if (a.kind == ActionKind::DirectResponse && !pending_.empty()) a.final_answer = false;
        return a;
    }
    const std::string raw = transport_(serialize_context(ctx));
    json parsed;
    try {
        parsed = json::parse(raw);
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed policy response: ") + e.what());
    }
    if (parsed.is_object()) parsed = json::array({parsed});
    if (!parsed.is_array() || parsed.empty()) {
        throw ProtocolError("policy response must be a non-empty action array");
    }
    // Order by dependency_rank when present; stable otherwise.
    std::vector<json> items(parsed.begin(), parsed.end());
    std::stable_sort(items.begin(), items.end(), [](const json& a, const json& b) {
        return a.value("dependency_rank", 0) < b.value("dependency_rank", 0);
    });
    for (const auto& item : items) pending_.push_back(parse_action(item));
    Action a = pending_.front();
    pending_.pop_front();
    if (a.kind == ActionKind::DirectResponse && !pending_.empty()) a.final_answer = false;
    return a;
}

PolicyTransport subprocess_transport(const std::string& command) {
    return [command](const std::string& request) -> std::string {
        // Request goes through a temp file so the child can read stdin
        // without bidirectional pipe plumbing.
        char tmpl[] = "/tmp/twnm_policy_XXXXXX";
        const int fd = mkstemp(tmpl);
        if (fd < 0) throw ProtocolError("cannot create policy request file");
        FILE* tf = fdopen(fd, "w");
        std::fwrite(request.data(), 1, request.size(), tf);
        std::fclose(tf);

        const std::string full = command + " < " + tmpl;
        FILE* pipe = popen(full.c_str(), "r");
        if (!pipe) {
            std::remove(tmpl);
            throw ProtocolError("cannot spawn policy command");
        }
        std::string out;
        char buf[4096];
        std::size_t n;
        while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) out.append(buf, n);
        pclose(pipe);
        std::remove(tmpl);
        return out;
    };
}

}  // namespace twnm
