#include "twnm/agent.hpp"

#include <algorithm>
#include <sstream>

#include "twnm/treetext.hpp"
#include "twnm/util.hpp"

namespace twnm {

// ---------------------------------------------------------------------------
// Actions

Action Action::direct(std::string text, bool final_answer) {
    Action a;
    a.kind = ActionKind::DirectResponse;
    a.answer = std::move(text);
    a.final_answer = final_answer;
    return a;
}

Action Action::clarify(std::string question) {
    Action a;
    a.kind = ActionKind::IntentClarification;
    a.question = std::move(question);
    return a;
}

Action Action::retrieve(RetrievalRequest req) {
    Action a;
    a.kind = ActionKind::ToolchainRetrieval;
    a.request = std::move(req);
    return a;
}

Action Action::execute(std::string api, std::map<std::string, std::string> params) {
    Action a;
    a.kind = ActionKind::ToolExecution;
    a.api_id = std::move(api);
    a.params = std::move(params);
    return a;
}

std::vector<std::string> Action::referenced_apis() const {
    if (kind == ActionKind::ToolExecution) return {api_id};
    return {};
}

std::string action_kind_name(ActionKind k) {
    switch (k) {
        case ActionKind::DirectResponse: return "direct_answer";
        case ActionKind::IntentClarification: return "clarify_intent";
        case ActionKind::ToolchainRetrieval: return "retrieve_api";
        case ActionKind::ToolExecution: return "call_api";
    }
    return "direct_answer";
}

std::pair<std::vector<Action>, PolicyDistribution> DecisionPolicy::decide_distribution(
    const DecisionContext& ctx) {
    std::vector<Action> actions{decide(ctx)};
    return {std::move(actions), PolicyDistribution({1.0})};
}

// ---------------------------------------------------------------------------
// Observation payloads
//
// The loop writes every observation as '|'-separated key=value fields so a
// policy decision depends only on its context. Lists use ',' for ids and
// ';;' for free text.

namespace {

std::string sanitize(std::string s) {
    std::replace(s.begin(), s.end(), '|', '/');
    return s;
}

struct ObsState {
    std::string task;
    std::vector<std::string> answers;
    std::map<std::string, std::string> bindings;
    std::set<std::string> done;
    std::set<std::string> failed;
    std::string status;
    std::string api;
    std::string error;
    std::string reply;
    std::vector<std::string> targets;
};

std::string join(const std::vector<std::string>& items, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        out += items[i];
    }
    return out;
}

std::string encode_obs(const ObsState& st) {
    std::vector<std::string> fields;
    fields.push_back("task=" + sanitize(st.task));
    if (!st.answers.empty()) {
        std::vector<std::string> clean;
        for (const auto& a : st.answers) clean.push_back(sanitize(a));
        fields.push_back("answers=" + join(clean, ";;"));
    }
    if (!st.bindings.empty()) {
        std::vector<std::string> kv;
        for (const auto& [k, v] : st.bindings) kv.push_back(k + "=" + sanitize(v));
        fields.push_back("bindings=" + join(kv, ";;"));
    }
    if (!st.done.empty()) {
        fields.push_back("done=" + join({st.done.begin(), st.done.end()}, ","));
    }
    if (!st.failed.empty()) {
        fields.push_back("failed=" + join({st.failed.begin(), st.failed.end()}, ","));
    }
    if (!st.status.empty()) fields.push_back("status=" + st.status);
    if (!st.api.empty()) fields.push_back("api=" + st.api);
    if (!st.error.empty()) fields.push_back("error=" + sanitize(st.error));
    if (!st.reply.empty()) fields.push_back("reply=" + sanitize(st.reply));
    if (!st.targets.empty()) fields.push_back("targets=" + join(st.targets, ","));
    return join(fields, "|");
}

std::vector<std::string> split_list(const std::string& text, const std::string& sep) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t next = text.find(sep, pos);
        if (next == std::string::npos) {
            out.push_back(text.substr(pos));
            break;
        }
        out.push_back(text.substr(pos, next - pos));
        pos = next + sep.size();
    }
    return out;
}

ObsState parse_obs(const std::string& payload) {
    ObsState st;
    for (const auto& field : split(payload, '|')) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = field.substr(0, eq);
        const std::string value = field.substr(eq + 1);
        if (key == "task") {
            st.task = value;
        } else if (key == "answers") {
            for (auto& a : split_list(value, ";;")) {
                if (!a.empty()) st.answers.push_back(a);
            }
        } else if (key == "bindings") {
            for (auto& kv : split_list(value, ";;")) {
                const auto e = kv.find('=');
                if (e != std::string::npos) st.bindings[kv.substr(0, e)] = kv.substr(e + 1);
            }
        } else if (key == "done") {
            for (auto& id : split(value, ',')) {
                if (!id.empty()) st.done.insert(id);
            }
        } else if (key == "failed") {
            for (auto& id : split(value, ',')) {
                if (!id.empty()) st.failed.insert(id);
            }
        } else if (key == "status") {
            st.status = value;
        } else if (key == "api") {
            st.api = value;
        } else if (key == "error") {
            st.error = value;
        } else if (key == "reply") {
            st.reply = value;
        } else if (key == "targets") {
            for (auto& id : split(value, ',')) {
                if (!id.empty()) st.targets.push_back(id);
            }
        }
    }
    return st;
}

std::string normalize_question(const std::string& s) {
    std::string out;
    bool pending = false;
    for (char raw : s) {
        const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
        if (std::isalnum(static_cast<unsigned char>(c))) {
            if (pending && !out.empty()) out.push_back(' ');
            pending = false;
            out.push_back(c);
        } else {
            pending = true;
        }
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Retrieval

std::optional<RetrievalResult> retrieve_toolchain(const RetrievalRequest& req, const ToolGraph& g,
                                                  const TextRanker& ranker,
                                                  const RetrievalOptions& opts) {
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& a : g.apis()) {
        if (!a.active || opts.exclude.count(a.id)) continue;
        std::string doc = a.name + " " + a.description;
        for (const auto& pid : g.input_params(a.id)) {
            doc += " " + g.param(pid).canonical_name;
            for (const auto& m : g.param(pid).members) {
                if (m.api_id == a.id) doc += " " + m.original_name;
            }
        }
        for (const auto& pid : g.output_params(a.id)) {
            doc += " " + g.param(pid).canonical_name;
            for (const auto& m : g.param(pid).members) {
                if (m.api_id == a.id) doc += " " + m.original_name;
            }
        }
        const double s = ranker.score(req.description, doc);
        if (s > 0.0) ranked.emplace_back(s, a.id);
    }
    if (ranked.empty()) return std::nullopt;
    std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
        if (x.first != y.first) return x.first > y.first;
        return x.second < y.second;
    });

    std::vector<std::string> targets;
    for (std::size_t i = 0; i < ranked.size() && i < 3; ++i) targets.push_back(ranked[i].second);

    RetrievalResult result;
    if (opts.search == SearchKind::Heuristic) {
        result.per_target = heuristic_search(g, targets, opts.config);
    } else {
        for (const auto& t : targets) {
            result.per_target.push_back(alpha_beta_search(g, t, std::nullopt, opts.config));
        }
    }
    result.merged = merge_plans(g, result.per_target);
    result.tree_text = serialize_subgraph(g, result.merged);
    return result;
}

// ---------------------------------------------------------------------------
// Execution over a plan

namespace {

std::vector<std::string> plan_apis(const SubgraphPlan& plan) {
    std::vector<std::string> out;
    for (const auto& id : plan.nodes) {
        auto it = plan.node_kinds.find(id);
        if (it != plan.node_kinds.end() && it->second == NodeKind::Api) out.push_back(id);
    }
    return out;  // already sorted: plan.nodes is ordered
}

std::vector<std::string> plan_inputs(const SubgraphPlan& plan, const std::string& api_id) {
    std::vector<std::string> out;
    for (const auto& e : plan.edges) {
        if (e.dst == api_id && e.kind == EdgeKind::Structural) out.push_back(e.src);
    }
    return out;
}

bool ready(const SubgraphPlan& plan, const ExecutionState& state, const std::string& api_id) {
    if (state.done.count(api_id) || state.failed.count(api_id)) return false;
    for (const auto& p : plan_inputs(plan, api_id)) {
        if (!state.bindings.count(p)) return false;
    }
    return true;
}

// Execution-side readiness consults the graph schema: an API never runs
// while any of its input parameter nodes is unbound, whether or not the
// plan happened to include that parameter.
bool graph_ready(const ToolGraph& g, const ExecutionState& state, const std::string& api_id) {
    if (state.done.count(api_id) || state.failed.count(api_id)) return false;
    for (const auto& p : g.input_params(api_id)) {
        if (!state.bindings.count(p)) return false;
    }
    return true;
}

}  // namespace

std::optional<std::string> next_executable(const SubgraphPlan& plan,
                                           const ExecutionState& state) {
    // Readiness encodes dependency order: a consumer only becomes ready once
    // its in-plan input parameters are bound; ids break ties.
    for (const auto& api_id : plan_apis(plan)) {
        if (ready(plan, state, api_id)) return api_id;
    }
    return std::nullopt;
}

StepOutcome execute_step(ToolGraph& g, const SubgraphPlan& plan, ExecutionState& state,
                         ToolExecutor& executor, double timestamp,
                         const std::optional<std::string>& preferred) {
    StepOutcome out;
    std::optional<std::string> chosen;
    if (preferred && plan.nodes.count(*preferred) && graph_ready(g, state, *preferred)) {
        chosen = preferred;
    } else {
        for (const auto& api_id : plan_apis(plan)) {
            if (graph_ready(g, state, api_id)) {
                chosen = api_id;
                break;
            }
        }
    }
    if (!chosen) {
        out.deadlock = true;
        out.observation.kind = ObservationKind::ToolFailure;
        return out;
    }
    const std::string api_id = *chosen;
    out.executed = true;
    out.api_id = api_id;

    std::map<std::string, std::string> params;
    std::vector<std::string> inputs = g.input_params(api_id);
    for (const auto& p : plan_inputs(plan, api_id)) {
        if (std::find(inputs.begin(), inputs.end(), p) == inputs.end()) inputs.push_back(p);
    }
    for (const auto& p : inputs) {
        auto it = state.bindings.find(p);
        if (it != state.bindings.end()) params[p] = it->second;
    }
    const SimResponse resp = executor.invoke(api_id, params);
    const bool success = resp.ok();
    out.success = success;

    g.record_invocation(state.last_api, api_id, success, timestamp);
    if (state.last_api) {
        g.note_pair(*state.last_api, api_id, success, timestamp);
        g.ensure_behavioral_edge(*state.last_api, api_id);
    }
    for (const auto& [p, _] : params) {
        g.record_invocation(std::optional<std::string>(api_id), p, success, timestamp);
        g.note_pair(p, api_id, success, timestamp);
    }
    if (success) {
        for (const auto& [key, value] : resp.data) {
            state.bindings[key] = value;
            if (g.has_node(key) && g.kind_of(key) == NodeKind::Param) {
                g.record_invocation(std::optional<std::string>(api_id), key, true, timestamp);
                g.note_pair(api_id, key, true, timestamp);
            }
        }
        state.done.insert(api_id);
        state.last_api = api_id;
        out.observation.kind = ObservationKind::ToolResult;
    } else {
        state.failed.insert(api_id);
        out.observation.kind = ObservationKind::ToolFailure;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Path recombination

namespace {

// Dependency closure check: could `api_id` eventually run, given the current
// bindings and graph producers? Bounded depth; avoids failed/excluded nodes.
bool feasible_closure(const ToolGraph& g, const std::string& api_id,
                      const std::map<std::string, std::string>& bindings,
                      const std::set<std::string>& excluded, int depth,
                      std::set<std::string>& visiting, std::set<std::string>& closure) {
    if (depth < 0) return false;
    if (visiting.count(api_id)) return false;  // cycle guard
    visiting.insert(api_id);
    closure.insert(api_id);
    for (const auto& p : g.input_params(api_id)) {
        if (bindings.count(p)) continue;
        bool producible = false;
        for (const auto& producer : g.producers(p)) {
            if (excluded.count(producer) || !g.is_active(producer)) continue;
            std::set<std::string> sub_closure;
            if (feasible_closure(g, producer, bindings, excluded, depth - 1, visiting,
                                 sub_closure)) {
                closure.insert(p);
                closure.insert(sub_closure.begin(), sub_closure.end());
                producible = true;
                break;
            }
        }
        if (!producible) {
            visiting.erase(api_id);
            return false;
        }
    }
    visiting.erase(api_id);
    return true;
}

SubgraphPlan rebuild_plan(const ToolGraph& g, const SubgraphPlan& old,
                          const std::string& failed_api, const std::string& replacement,
                          const std::set<std::string>& additions) {
    std::vector<std::string> targets;
    for (const auto& t : old.all_targets()) {
        if (t == failed_api) {
            if (!replacement.empty()) targets.push_back(replacement);
        } else {
            targets.push_back(t);
        }
    }
    if (targets.empty() && !replacement.empty()) targets.push_back(replacement);
    if (targets.empty()) targets.push_back(old.target_api);

    std::set<std::string> candidate = old.nodes;
    candidate.erase(failed_api);
    candidate.insert(additions.begin(), additions.end());
    if (!replacement.empty()) {
        candidate.insert(replacement);
        for (const auto& p : g.input_params(replacement)) candidate.insert(p);
        for (const auto& p : g.output_params(replacement)) {
            if (old.nodes.count(p)) candidate.insert(p);
        }
    }
    candidate.erase(failed_api);

    const std::set<std::string> kept = decode_connected(g, targets, candidate);
    std::vector<std::string> extra(targets.begin() + 1, targets.end());
    return make_plan(g, targets.front(), extra, kept, old.score);
}

}  // namespace

std::variant<SubgraphPlan, RecombineExhausted> recombine(
    const ToolGraph& g, const SubgraphPlan& plan, const std::string& failed_api,
    const SearchConfig& cfg, const ExecutionState& state,
    const std::set<std::string>& required_outputs, const SwitchFn& switch_fn) {
    if (!plan.nodes.count(failed_api)) {
        throw GraphError("failed api is not part of the plan: " + failed_api);
    }
    std::set<std::string> excluded = state.failed;
    excluded.insert(failed_api);

    // Bound inputs of the failed node; substitutes must run on these alone.
    std::set<std::string> bound_inputs;
    for (const auto& p : g.input_params(failed_api)) {
        if (state.bindings.count(p)) bound_inputs.insert(p);
    }

    std::set<std::string> required = required_outputs;
    if (required.empty()) {
        for (const auto& p : g.output_params(failed_api)) required.insert(p);
    }

    // (i) I/O-equivalent substitution: compatible schema, local continuity.
    for (const auto& a : g.apis()) {
        if (!a.active || excluded.count(a.id)) continue;
        bool inputs_ok = true;
        for (const auto& p : g.input_params(a.id)) {
            if (!bound_inputs.count(p)) {
                inputs_ok = false;
                break;
            }
        }
        if (!inputs_ok) continue;
        const auto outs = g.output_params(a.id);
        const std::set<std::string> out_set(outs.begin(), outs.end());
        bool outputs_ok = true;
        for (const auto& r : required) {
            if (!out_set.count(r)) {
                outputs_ok = false;
                break;
            }
        }
        if (!outputs_ok) continue;
        SubgraphPlan next = rebuild_plan(g, plan, failed_api, a.id, {});
        if (!next.nodes.count(failed_api)) return next;
    }

    // (ii) Upstream rerouting: alternative subpaths producing the required
    // intermediate outputs.
    {
        std::set<std::string> additions;
        bool all_covered = !required.empty();
        for (const auto& r : required) {
            if (!g.has_node(r) || g.kind_of(r) != NodeKind::Param) {
                all_covered = false;
                break;
            }
            bool covered = false;
            for (const auto& producer : g.producers(r)) {
                if (excluded.count(producer) || !g.is_active(producer)) continue;
                std::set<std::string> visiting;
                std::set<std::string> closure;
                if (feasible_closure(g, producer, state.bindings, excluded, cfg.d_max_h, visiting,
                                     closure)) {
                    additions.insert(r);
                    additions.insert(closure.begin(), closure.end());
                    covered = true;
                    break;
                }
            }
            if (!covered) {
                all_covered = false;
                break;
            }
        }
        if (all_covered) {
            const bool failed_was_target =
                plan.target_api == failed_api ||
                std::count(plan.extra_targets.begin(), plan.extra_targets.end(), failed_api) > 0;
            std::string replacement;
            if (failed_was_target) {
                // Re-target onto a producer of every required output.
                for (const auto& a : additions) {
                    if (g.has_node(a) && g.kind_of(a) == NodeKind::Api) {
                        const auto outs = g.output_params(a);
                        const std::set<std::string> out_set(outs.begin(), outs.end());
                        bool covers = true;
                        for (const auto& r : required) {
                            if (!out_set.count(r)) {
                                covers = false;
                                break;
                            }
                        }
                        if (covers) {
                            replacement = a;
                            break;
                        }
                    }
                }
            }
            if (!failed_was_target || !replacement.empty()) {
                SubgraphPlan next = rebuild_plan(g, plan, failed_api, replacement, additions);
                if (!next.nodes.count(failed_api) && next.nodes.count(next.target_api)) {
                    return next;
                }
            }
        }
    }

    // (iii) Subgraph switching: a fresh goal-oriented retrieval that avoids
    // the failed set entirely.
    if (switch_fn) {
        const std::optional<SubgraphPlan> switched = switch_fn(excluded);
        if (switched && !switched->nodes.count(failed_api)) {
            return *switched;
        }
    }
    return RecombineExhausted{};
}

// ---------------------------------------------------------------------------
// Rule-based policy

namespace {

struct Intent {
    std::vector<std::string> desired;  // in query order
    std::map<std::string, std::string> givens;
    std::string text;
};

std::vector<std::string> split_parts(const std::string& task) {
    std::vector<std::string> parts;
    for (const auto& p : split_list(task, " and also ")) {
        const std::string t = trim(p);
        if (!t.empty()) parts.push_back(t);
    }
    return parts;
}

Intent parse_intent(const std::string& part) {
    Intent intent;
    intent.text = part;
    const std::string lower = to_lower(part);
    std::size_t need_pos = lower.rfind("need ", 0) == 0 ? 0 : lower.find(" need ");
    if (need_pos == std::string::npos) return intent;
    if (need_pos != 0) need_pos += 1;  // skip the leading space of " need "
    const std::size_t desired_begin = need_pos + 5;
    const std::size_t given_pos = lower.find(" given ", desired_begin);
    const std::string desired_text =
        given_pos == std::string::npos ? part.substr(desired_begin)
                                       : part.substr(desired_begin, given_pos - desired_begin);
    for (const auto& d : split(desired_text, ',')) {
        const std::string name = trim(d);
        if (!name.empty()) intent.desired.push_back(name);
    }
    if (given_pos != std::string::npos) {
        for (const auto& kv : split(part.substr(given_pos + 7), ',')) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) continue;
            const std::string k = trim(kv.substr(0, eq));
            const std::string v = trim(kv.substr(eq + 1));
            if (!k.empty()) intent.givens[k] = v;
        }
    }
    return intent;
}

std::string compose_part_answer(const Intent& intent,
                                const std::map<std::string, std::string>& merged) {
    std::vector<std::string> parts;
    for (const auto& d : intent.desired) {
        auto it = merged.find(d);
        parts.push_back(d + "=" + (it == merged.end() ? "?" : it->second));
    }
    return join(parts, "; ");
}

std::string compose_final(const std::vector<std::string>& answers, const std::string& last_part) {
    std::vector<std::string> all = answers;
    if (!last_part.empty()) all.push_back(last_part);
    return join(all, "; ");
}

std::string limitation_answer(const std::string& reason) {
    return "unable to complete: " + reason;
}

}  // namespace

Action RulePolicy::decide(const DecisionContext& ctx) {
    auto [actions, dist] = decide_distribution(ctx);
    std::size_t best = 0;
    for (std::size_t i = 1; i < dist.probs.size(); ++i) {
        if (dist.probs[i] > dist.probs[best]) best = i;
    }
    return actions[best];
}

std::pair<std::vector<Action>, PolicyDistribution> RulePolicy::decide_distribution(
    const DecisionContext& ctx) {
    const ObsState st = parse_obs(ctx.current.payload);
    auto single = [](Action a) {
        std::vector<Action> actions{std::move(a)};
        return std::make_pair(std::move(actions), PolicyDistribution({1.0}));
    };

    const std::vector<std::string> parts = split_parts(st.task);
    if (parts.empty()) {
        return single(Action::clarify("what would you like me to do?"));
    }
    const std::size_t idx = std::min(st.answers.size(), parts.size() - 1);
    const bool last = idx + 1 == parts.size();
    if (st.answers.size() >= parts.size()) {
        // Everything answered; synthesize the final response.
        return single(Action::direct(compose_final(st.answers, ""), true));
    }
    const std::string& part = parts[idx];

    // Phase 1: common-sense lookup.
    auto fact = facts_.find(normalize_question(part));
    if (fact != facts_.end()) {
        const std::string ans = fact->second;
        return single(Action::direct(last ? compose_final(st.answers, ans) : ans, last));
    }

    // Phase 2: tool intent.
    const Intent intent = parse_intent(part);
    if (intent.desired.empty()) {
        if (!st.reply.empty()) {
            // Already asked once; a non-actionable exchange ends the part.
            const std::string ans = limitation_answer("request not understood: " + part);
            return single(Action::direct(last ? compose_final(st.answers, ans) : ans, last));
        }
        return single(Action::clarify("what output do you need for: " + part));
    }

    std::map<std::string, std::string> merged = st.bindings;
    for (const auto& [k, v] : intent.givens) merged.emplace(k, v);

    // Goal reached: every desired output is bound.
    bool satisfied = true;
    for (const auto& d : intent.desired) {
        if (!merged.count(d)) {
            satisfied = false;
            break;
        }
    }
    if (satisfied) {
        const std::string ans = compose_part_answer(intent, merged);
        return single(Action::direct(last ? compose_final(st.answers, ans) : ans, last));
    }

    // Retrieval failed outright for this part.
    if (st.status == "no_candidates") {
        const std::string ans = limitation_answer("no tools found for: " + part);
        return single(Action::direct(last ? compose_final(st.answers, ans) : ans, last));
    }

    // Phase 3: need a plan first.
    if (!ctx.subgraph) {
        RetrievalRequest req;
        req.description = part;
        for (const auto& [k, _] : merged) req.known_inputs.insert(k);
        for (const auto& d : intent.desired) {
            if (!req.known_inputs.count(d)) req.desired_outputs.insert(d);
        }
        return single(Action::retrieve(std::move(req)));
    }

    const SubgraphPlan& plan = *ctx.subgraph;
    ExecutionState view;
    view.bindings = merged;
    view.done = st.done;
    view.failed = st.failed;

    const std::optional<std::string> next = next_executable(plan, view);
    if (next) {
        std::map<std::string, std::string> params;
        for (const auto& e : plan.edges) {
            if (e.dst == *next && e.kind == EdgeKind::Structural && merged.count(e.src)) {
                params[e.src] = merged[e.src];
            }
        }
        // Ranked candidates: execute, refresh the toolchain, or ask the user.
        std::vector<Action> actions;
        actions.push_back(Action::execute(*next, std::move(params)));
        RetrievalRequest refresh;
        refresh.description = part;
        for (const auto& [k, _] : merged) refresh.known_inputs.insert(k);
        for (const auto& d : intent.desired) {
            if (!refresh.known_inputs.count(d)) refresh.desired_outputs.insert(d);
        }
        actions.push_back(Action::retrieve(std::move(refresh)));
        actions.push_back(Action::clarify("please rephrase: " + part));
        return {std::move(actions), PolicyDistribution({0.7, 0.2, 0.1})};
    }

    // No executable API: identify an unbound input with no viable producer.
    std::vector<std::string> missing;
    for (const auto& api_id : plan.nodes) {
        auto kind_it = plan.node_kinds.find(api_id);
        if (kind_it == plan.node_kinds.end() || kind_it->second != NodeKind::Api) continue;
        if (view.done.count(api_id) || view.failed.count(api_id)) continue;
        for (const auto& e : plan.edges) {
            if (e.dst != api_id || e.kind != EdgeKind::Structural) continue;
            if (merged.count(e.src)) continue;
            bool has_producer = false;
            for (const auto& e2 : plan.edges) {
                if (e2.dst == e.src && e2.kind == EdgeKind::Structural &&
                    !view.failed.count(e2.src)) {
                    has_producer = true;
                    break;
                }
            }
            if (!has_producer) missing.push_back(e.src);
        }
    }
    std::sort(missing.begin(), missing.end());
    missing.erase(std::unique(missing.begin(), missing.end()), missing.end());

    if (!missing.empty()) {
        if (st.reply == "unknown") {
            const std::string ans = limitation_answer("missing parameter " + missing.front());
            return single(Action::direct(last ? compose_final(st.answers, ans) : ans, last));
        }
        return single(Action::clarify("please provide " + missing.front()));
    }

    // Blocked by failures with nothing to reroute locally.
    const std::string ans = limitation_answer(
        st.api.empty() ? "no executable toolchain for: " + part : st.api + " failed");
    return single(Action::direct(last ? compose_final(st.answers, ans) : ans, last));
}

// ---------------------------------------------------------------------------
// Episode loop

FeasibleSet default_feasible_set(const ToolGraph& g, const std::set<std::string>& failed,
                                 const std::vector<Action>& actions) {
    std::vector<int> allowed;
    for (std::size_t i = 0; i < actions.size(); ++i) {
        bool ok = true;
        for (const auto& api : actions[i].referenced_apis()) {
            if (failed.count(api) || !g.has_node(api) || !g.is_active(api)) {
                ok = false;
                break;
            }
        }
        if (ok) allowed.push_back(static_cast<int>(i));
    }
    if (allowed.empty()) {
        throw InfeasibleError("every candidate action references an unavailable api");
    }
    return FeasibleSet(allowed);
}

namespace {

// Deadlock repair: a plan API is blocked on a parameter the plan cannot
// produce. Extend the plan with a feasible producer closure (upstream
// rerouting applied to the missing inputs).
std::optional<SubgraphPlan> extend_for_deadlock(const ToolGraph& g, const SubgraphPlan& plan,
                                                const ExecutionState& state,
                                                const SearchConfig& cfg) {
    std::set<std::string> additions;
    for (const auto& id : plan.nodes) {
        auto kind_it = plan.node_kinds.find(id);
        if (kind_it == plan.node_kinds.end() || kind_it->second != NodeKind::Api) continue;
        if (state.done.count(id) || state.failed.count(id)) continue;
        for (const auto& p : g.input_params(id)) {
            if (state.bindings.count(p) || additions.count(p)) continue;
            for (const auto& producer : g.producers(p)) {
                if (state.failed.count(producer) || !g.is_active(producer)) continue;
                std::set<std::string> visiting;
                std::set<std::string> closure;
                if (feasible_closure(g, producer, state.bindings, state.failed, cfg.d_max_h,
                                     visiting, closure)) {
                    additions.insert(p);
                    additions.insert(closure.begin(), closure.end());
                    break;
                }
            }
        }
    }
    if (additions.empty()) return std::nullopt;
    std::set<std::string> candidate = plan.nodes;
    candidate.insert(additions.begin(), additions.end());
    const std::set<std::string> kept = decode_connected(g, plan.all_targets(), candidate);
    if (kept == plan.nodes) return std::nullopt;
    return make_plan(g, plan.target_api, plan.extra_targets, kept, plan.score);
}

// Required-output set for recombination: what downstream consumers (or the
// caller's goal) still need from the failed node.
std::set<std::string> required_outputs_for(const ToolGraph& g, const SubgraphPlan& plan,
                                           const std::string& failed_api,
                                           const std::optional<RetrievalRequest>& request) {
    std::set<std::string> required;
    for (const auto& e : plan.edges) {
        if (e.src != failed_api || e.kind != EdgeKind::Structural) continue;
        for (const auto& e2 : plan.edges) {
            if (e2.src == e.dst && e2.kind == EdgeKind::Structural) {
                required.insert(e.dst);
                break;
            }
        }
    }
    if (request) {
        const auto outs = g.output_params(failed_api);
        const std::set<std::string> out_set(outs.begin(), outs.end());
        for (const auto& d : request->desired_outputs) {
            if (out_set.count(d)) required.insert(d);
        }
    }
    return required;
}

}  // namespace

EpisodeRecord run_episode(const std::string& query, ToolGraph& g, DecisionPolicy& policy,
                          ToolExecutor& executor, const RunOptions& opts) {
    EpisodeRecord record;
    record.query = query;

    LexicalRanker default_ranker;
    const TextRanker& ranker = opts.ranker ? *opts.ranker : default_ranker;

    ExecutionState state;
    std::optional<SubgraphPlan> plan;
    std::string plan_text;
    std::optional<RetrievalRequest> last_request;
    std::vector<std::string> answers;

    ObsState obs_state;
    obs_state.task = query;
    Observation current{ObservationKind::UserQuery, encode_obs(obs_state), 0};
    std::vector<std::pair<Observation, Action>> window;
    int step_index = 0;

    auto next_observation = [&](ObservationKind kind, ObsState st) {
        st.task = query;
        st.answers = answers;
        st.bindings = state.bindings;
        st.done = state.done;
        st.failed = state.failed;
        current = Observation{kind, encode_obs(st), ++step_index};
    };

    while (record.llm_calls < opts.limits.max_steps) {
        DecisionContext ctx;
        ctx.history = window;
        ctx.current = current;
        ctx.subgraph = plan;
        ctx.subgraph_text = plan_text;

        std::vector<Action> actions;
        PolicyDistribution dist;
        try {
            std::tie(actions, dist) = policy.decide_distribution(ctx);
            ++record.llm_calls;
            if (actions.empty() || actions.size() != dist.size()) {
                throw ProtocolError("policy returned a malformed action set");
            }
            if (opts.project_to_feasible) {
                dist = project(dist, default_feasible_set(g, state.failed, actions));
            }
        } catch (const InfeasibleError&) {
            record.protocol_error = true;
            break;
        } catch (const ProtocolError&) {
            record.protocol_error = true;
            break;
        }
        std::size_t pick = 0;
        for (std::size_t i = 1; i < dist.probs.size(); ++i) {
            if (dist.probs[i] > dist.probs[pick]) pick = i;
        }
        const Action action = actions[pick];

        record.trace.emplace_back(current, action);
        window.emplace_back(current, action);
        while (window.size() > 3) window.erase(window.begin());

        if (action.kind == ActionKind::DirectResponse) {
            if (action.final_answer) {
                record.completed = true;
                record.final_answer = action.answer;
                break;
            }
            answers.push_back(action.answer);
            next_observation(ObservationKind::UserQuery, {});
            continue;
        }

        if (action.kind == ActionKind::IntentClarification) {
            const std::string reply =
                opts.responder ? opts.responder(action.question) : "unknown";
            const auto eq = reply.find('=');
            if (eq != std::string::npos && reply != "unknown") {
                state.bindings[trim(reply.substr(0, eq))] = trim(reply.substr(eq + 1));
            }
            ObsState st;
            st.reply = reply;
            next_observation(ObservationKind::ClarificationReply, std::move(st));
            continue;
        }

        if (action.kind == ActionKind::ToolchainRetrieval) {
            RetrievalOptions ropts;
            ropts.search = opts.search;
            ropts.config = opts.search_config;
            ropts.exclude = state.failed;
            // Query-given values become bindings once retrieval commits to
            // the toolchain; the policy echoes them in known_inputs.
            last_request = action.request;
            const auto result = retrieve_toolchain(action.request, g, ranker, ropts);
            ObsState st;
            if (!result) {
                st.status = "no_candidates";
                next_observation(ObservationKind::ToolFailure, std::move(st));
                continue;
            }
            plan = result->merged;
            plan_text = result->tree_text;
            st.status = "retrieved";
            for (const auto& p : result->per_target) st.targets.push_back(p.target_api);
            next_observation(ObservationKind::ToolResult, std::move(st));
            continue;
        }

        // ToolExecution
        if (!plan) {
            record.protocol_error = true;
            break;
        }
        for (const auto& [k, v] : action.params) state.bindings.emplace(k, v);
        StepOutcome outcome = execute_step(g, *plan, state, executor, opts.timestamp,
                                           action.api_id.empty()
                                               ? std::nullopt
                                               : std::optional<std::string>(action.api_id));
        if (outcome.deadlock) {
            // Unbound inputs everywhere: first try to extend the plan with
            // producers for the missing parameters; then, if an earlier
            // failure is still part of the plan, recombination gets another
            // chance to route around it before the policy falls back to
            // clarification.
            if (opts.recombination) {
                if (const auto extended =
                        extend_for_deadlock(g, *plan, state, opts.search_config)) {
                    plan = *extended;
                    plan_text = serialize_subgraph(g, *plan);
                    ObsState st;
                    st.status = "deadlock_recovered";
                    next_observation(ObservationKind::ToolFailure, std::move(st));
                    continue;
                }
                std::optional<std::string> stuck;
                for (const auto& id : state.failed) {
                    if (plan->nodes.count(id)) {
                        stuck = id;
                        break;
                    }
                }
                if (stuck) {
                    const auto required = required_outputs_for(g, *plan, *stuck, last_request);
                    const auto result = recombine(g, *plan, *stuck, opts.search_config, state,
                                                  required, nullptr);
                    if (std::holds_alternative<SubgraphPlan>(result)) {
                        plan = std::get<SubgraphPlan>(result);
                        plan_text = serialize_subgraph(g, *plan);
                        ObsState st;
                        st.status = "deadlock_recovered";
                        next_observation(ObservationKind::ToolFailure, std::move(st));
                        continue;
                    }
                }
            }
            ObsState st;
            st.status = "deadlock";
            next_observation(ObservationKind::ToolFailure, std::move(st));
            continue;
        }
        ObsState st;
        st.api = outcome.api_id;
        if (outcome.success) {
            st.status = "success";
            next_observation(ObservationKind::ToolResult, std::move(st));
            continue;
        }
        st.status = "error";
        st.error = outcome.api_id + " failed";
        bool recovered = false;
        if (opts.recombination) {
            SwitchFn switch_fn = [&](const std::set<std::string>& excluded)
                -> std::optional<SubgraphPlan> {
                if (!last_request) return std::nullopt;
                RetrievalOptions ropts;
                ropts.search = opts.search;
                ropts.config = opts.search_config;
                ropts.exclude = excluded;
                const auto result = retrieve_toolchain(*last_request, g, ranker, ropts);
                if (!result) return std::nullopt;
                return result->merged;
            };
            const auto required = required_outputs_for(g, *plan, outcome.api_id, last_request);
            const auto result = recombine(g, *plan, outcome.api_id, opts.search_config, state,
                                          required, switch_fn);
            if (std::holds_alternative<SubgraphPlan>(result)) {
                plan = std::get<SubgraphPlan>(result);
                plan_text = serialize_subgraph(g, *plan);
                recovered = true;
            } else {
                // Exhausted: the episode cannot reach its goal.
                record.failed_apis = state.failed;
                return record;
            }
        }
        st.status = recovered ? "error_recovered" : "error";
        next_observation(ObservationKind::ToolFailure, std::move(st));
    }

    record.failed_apis = state.failed;
    return record;
}

}  // namespace twnm
