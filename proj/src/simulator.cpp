#include "twnm/simulator.hpp"

#include <fstream>
#include <sstream>

#include "twnm/util.hpp"

namespace twnm {

std::string difficulty_name(Difficulty d) {
    switch (d) {
        case Difficulty::Easy: return "easy";
        case Difficulty::Medium: return "medium";
        case Difficulty::Hard: return "hard";
    }
    return "easy";
}

Difficulty difficulty_from(const std::string& s) {
    const std::string v = to_lower(s);
    if (v == "easy" || v == "e") return Difficulty::Easy;
    if (v == "medium" || v == "m") return Difficulty::Medium;
    if (v == "hard" || v == "h") return Difficulty::Hard;
    throw GraphError("unknown difficulty: " + s);
}

std::vector<ApiSpec> FixtureWorld::api_specs() const {
    std::vector<ApiSpec> out;
    for (const auto& [id, b] : api_behaviors) {
        ApiSpec spec;
        spec.id = id;
        spec.name = b.name.empty() ? id : b.name;
        spec.description = b.description;
        spec.inputs = b.inputs;
        spec.outputs = b.outputs;
        out.push_back(std::move(spec));
    }
    return out;
}

bool FixtureWorld::available(const std::string& api_id, int phase,
                             const std::set<std::string>* extra_down) const {
    auto it = api_behaviors.find(api_id);
    if (it == api_behaviors.end()) return false;
    if (it->second.down_phases.count(phase)) return false;
    // Seeded outage injection applies to phase 1 only; phase 2 is recovery.
    if (extra_down && phase == 1 && extra_down->count(api_id)) return false;
    return true;
}

namespace {

std::string substitute(const std::string& tmpl,
                       const std::map<std::string, std::string>& bindings) {
    std::string out;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '$' && i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
            const std::size_t end = tmpl.find('}', i + 2);
            if (end != std::string::npos) {
                const std::string key = tmpl.substr(i + 2, end - i - 2);
                auto it = bindings.find(key);
                out += (it != bindings.end()) ? it->second : tmpl.substr(i, end - i + 1);
                i = end + 1;
                continue;
            }
        }
        out.push_back(tmpl[i]);
        ++i;
    }
    return out;
}

}  // namespace

SimResponse simulate_call(const FixtureWorld& world, const std::string& api_id,
                          const std::map<std::string, std::string>& bindings, int phase,
                          const std::set<std::string>* extra_down) {
    SimResponse resp;
    resp.status = "success";

    auto it = world.api_behaviors.find(api_id);
    if (it == world.api_behaviors.end()) {
        resp.type = "error";
        resp.message = "unknown api: " + api_id;
        return resp;
    }
    if (!world.available(api_id, phase, extra_down)) {
        resp.type = "error";
        resp.message = "api unavailable: " + api_id;
        return resp;
    }
    const ApiBehavior& b = it->second;
    for (const auto& in : b.inputs) {
        if (!bindings.count(in.name)) {
            resp.type = "error";
            resp.message = "missing required input: " + in.name;
            return resp;
        }
    }
    if (b.mock_only) {
        resp.type = "mock";
        for (const auto& out : b.outputs) {
            resp.data[out.name] = "mock_" + out.name;
        }
        return resp;
    }
    resp.type = "success";
    for (const auto& out : b.outputs) {
        auto t = b.output_templates.find(out.name);
        resp.data[out.name] =
            t != b.output_templates.end() ? substitute(t->second, bindings) : "mock_" + out.name;
    }
    return resp;
}

// ---------------------------------------------------------------------------
// Judge

namespace {

std::string normalize_answer(const std::string& s) {
    std::string out;
    bool pending_space = false;
    for (char raw : s) {
        const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(c);
    }
    return out;
}

}  // namespace

bool judge(const std::string& final_answer, const std::string& ground_truth) {
    const std::string answer = normalize_answer(final_answer);
    for (const auto& part : split(ground_truth, ';')) {
        const std::string fact = normalize_answer(part);
        if (fact.empty()) continue;
        if (answer.find(fact) == std::string::npos) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Canonical-name translation

SimResponse WorldExecutor::invoke(const std::string& api_id,
                                  const std::map<std::string, std::string>& params) {
    // Canonical keys -> the API's original input names.
    std::map<std::string, std::string> raw;
    auto behavior = world_->api_behaviors.find(api_id);
    if (behavior != world_->api_behaviors.end()) {
        for (const auto& in : behavior->second.inputs) {
            const auto cluster = graph_->param_for_member(api_id, in.name);
            if (cluster) {
                auto it = params.find(*cluster);
                if (it != params.end()) {
                    raw[in.name] = it->second;
                    continue;
                }
            }
            auto direct = params.find(in.name);
            if (direct != params.end()) raw[in.name] = direct->second;
        }
    }
    SimResponse resp = simulate_call(*world_, api_id, raw, phase_, extra_down_);
    // Original output names -> canonical keys.
    std::map<std::string, std::string> canonical;
    for (const auto& [name, value] : resp.data) {
        const auto cluster = graph_->param_for_member(api_id, name);
        canonical[cluster ? *cluster : name] = value;
    }
    resp.data = std::move(canonical);
    return resp;
}

// ---------------------------------------------------------------------------
// World file parsing

namespace {

std::string read_quoted(const std::string& line, std::size_t& pos, std::size_t lineno) {
    while (pos < line.size() && line[pos] == ' ') ++pos;
    if (pos >= line.size() || line[pos] != '"') throw ParseError(lineno, "expected quoted field");
    std::string out;
    bool esc = false;
    for (std::size_t i = pos + 1; i < line.size(); ++i) {
        const char c = line[i];
        if (esc) {
            out.push_back(c == 'n' ? '\n' : c);
            esc = false;
        } else if (c == '\\') {
            esc = true;
        } else if (c == '"') {
            pos = i + 1;
            return out;
        } else {
            out.push_back(c);
        }
    }
    throw ParseError(lineno, "unterminated quoted field");
}

std::map<std::string, std::string> parse_pairs(const std::string& text) {
    std::map<std::string, std::string> out;
    for (const auto& item : split(text, ',')) {
        const std::string t = trim(item);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) continue;
        out[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return out;
}

}  // namespace

FixtureWorld load_world(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw GraphError("cannot read " + path);

    FixtureWorld world;
    std::string line;
    std::size_t lineno = 0;

    if (!std::getline(f, line) || trim(line) != "WORLD v1") {
        throw ParseError(1, "expected 'WORLD v1' header");
    }
    ++lineno;

    while (std::getline(f, line)) {
        ++lineno;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        std::istringstream ls(stripped);
        std::string tag;
        ls >> tag;
        if (tag == "API") {
            std::string id;
            ls >> id;
            if (id.empty()) throw ParseError(lineno, "API needs an id");
            if (world.api_behaviors.count(id)) throw ParseError(lineno, "duplicate api " + id);
            ApiBehavior b;
            b.name = id;
            std::size_t qpos = stripped.find('"');
            if (qpos != std::string::npos) {
                b.description = read_quoted(stripped, qpos, lineno);
            }
            world.api_behaviors[id] = std::move(b);
        } else if (tag == "IN" || tag == "OUT") {
            std::string api_id, pname;
            ls >> api_id >> pname;
            auto it = world.api_behaviors.find(api_id);
            if (it == world.api_behaviors.end()) throw ParseError(lineno, "unknown api " + api_id);
            ParamSpec p;
            p.name = pname;
            std::size_t qpos = stripped.find('"');
            if (qpos != std::string::npos) p.description = read_quoted(stripped, qpos, lineno);
            if (tag == "IN") it->second.inputs.push_back(std::move(p));
            else it->second.outputs.push_back(std::move(p));
        } else if (tag == "VAL") {
            std::string api_id, pname;
            ls >> api_id >> pname;
            auto it = world.api_behaviors.find(api_id);
            if (it == world.api_behaviors.end()) throw ParseError(lineno, "unknown api " + api_id);
            std::size_t qpos = stripped.find('"');
            it->second.output_templates[pname] = read_quoted(stripped, qpos, lineno);
        } else if (tag == "MOCK") {
            std::string api_id;
            ls >> api_id;
            auto it = world.api_behaviors.find(api_id);
            if (it == world.api_behaviors.end()) throw ParseError(lineno, "unknown api " + api_id);
            it->second.mock_only = true;
        } else if (tag == "DOWN") {
            std::string api_id, phase_tok;
            ls >> api_id >> phase_tok;
            auto it = world.api_behaviors.find(api_id);
            if (it == world.api_behaviors.end()) throw ParseError(lineno, "unknown api " + api_id);
            if (phase_tok.rfind("phase=", 0) != 0) throw ParseError(lineno, "expected phase=");
            for (const auto& p : split(phase_tok.substr(6), ',')) {
                it->second.down_phases.insert(std::stoi(p));
            }
        } else if (tag == "FACT") {
            std::size_t pos = stripped.find('"');
            const std::string q = read_quoted(stripped, pos, lineno);
            const std::string a = read_quoted(stripped, pos, lineno);
            world.facts[normalize_answer(q)] = a;
        } else if (tag == "TASK") {
            TaskSpec task;
            std::string diff_tok;
            ls >> task.id >> diff_tok;
            if (diff_tok.rfind("difficulty=", 0) != 0) {
                throw ParseError(lineno, "expected difficulty=");
            }
            task.difficulty = difficulty_from(diff_tok.substr(11));
            std::size_t pos = stripped.find('"');
            task.query = read_quoted(stripped, pos, lineno);
            task.answer = read_quoted(stripped, pos, lineno);
            // Optional trailing hints block.
            while (pos < stripped.size() && stripped[pos] == ' ') ++pos;
            if (pos < stripped.size() && stripped.compare(pos, 6, "hints=") == 0) {
                std::size_t hq = pos + 6;
                task.hints = parse_pairs(read_quoted(stripped, hq, lineno));
            }
            world.tasks.push_back(std::move(task));
        } else {
            throw ParseError(lineno, "unknown record tag '" + tag + "'");
        }
    }
    return world;
}

}  // namespace twnm
