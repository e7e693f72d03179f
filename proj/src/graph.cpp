#include "twnm/graph.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "twnm/util.hpp"

namespace twnm {

namespace {

const std::set<std::string>& stopwords() {
    static const std::set<std::string> kStop = {
        "a",  "an",  "the", "of",   "in",   "for",  "to", "is",   "are", "was",
        "were", "where", "when", "and", "or", "with", "on", "at", "by", "that",
        "this", "it", "as", "be", "from"};
    return kStop;
}

bool valid_token(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
        const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ||
                        c == '.' || c == '+';
        if (!ok) return false;
    }
    return true;
}

void require_token(const std::string& s, const std::string& what) {
    if (!valid_token(s)) {
        throw GraphError(what + " must be non-empty and free of whitespace/punctuation: '" + s +
                         "'");
    }
}

std::string quote_escape(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '"': out += "\\\""; break;
            case '\n': out += "\\n"; break;
            default: out.push_back(c);
        }
    }
    out.push_back('"');
    return out;
}

// Reads a trailing quoted field starting at `pos`; returns the unescaped text.
std::string quote_unescape(const std::string& line, std::size_t pos, std::size_t lineno) {
    if (pos >= line.size() || line[pos] != '"') {
        throw ParseError(lineno, "expected quoted field");
    }
    std::string out;
    bool esc = false;
    for (std::size_t i = pos + 1; i < line.size(); ++i) {
        char c = line[i];
        if (esc) {
            if (c == 'n') out.push_back('\n');
            else out.push_back(c);
            esc = false;
        } else if (c == '\\') {
            esc = true;
        } else if (c == '"') {
            return out;
        } else {
            out.push_back(c);
        }
    }
    throw ParseError(lineno, "unterminated quoted field");
}

std::int64_t parse_count(const std::string& tok, const std::string& key, std::size_t lineno) {
    if (tok.rfind(key + "=", 0) != 0) throw ParseError(lineno, "expected " + key + "=<n>");
    try {
        return std::stoll(tok.substr(key.size() + 1));
    } catch (const std::exception&) {
        throw ParseError(lineno, "bad integer in " + tok);
    }
}

double parse_real(const std::string& tok, const std::string& key, std::size_t lineno) {
    if (tok.rfind(key + "=", 0) != 0) throw ParseError(lineno, "expected " + key + "=<f>");
    try {
        return std::stod(tok.substr(key.size() + 1));
    } catch (const std::exception&) {
        throw ParseError(lineno, "bad real in " + tok);
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// ToolGraph basics

const ToolGraph::NodeRef& ToolGraph::ref(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw GraphError("unknown node: " + id);
    return it->second;
}

void ToolGraph::check_new_id(const std::string& id) const {
    if (index_.count(id)) throw GraphError("duplicate node id: " + id);
}

NodeKind ToolGraph::kind_of(const std::string& id) const { return ref(id).kind; }

const ApiNode& ToolGraph::api(const std::string& id) const {
    const NodeRef& r = ref(id);
    if (r.kind != NodeKind::Api) throw GraphError("not an API node: " + id);
    return apis_[r.index];
}

const ParamNode& ToolGraph::param(const std::string& id) const {
    const NodeRef& r = ref(id);
    if (r.kind != NodeKind::Param) throw GraphError("not a parameter node: " + id);
    return params_[r.index];
}

ApiNode& ToolGraph::api_mut(const std::string& id) {
    return const_cast<ApiNode&>(static_cast<const ToolGraph*>(this)->api(id));
}

ParamNode& ToolGraph::param_mut(const std::string& id) {
    return const_cast<ParamNode&>(static_cast<const ToolGraph*>(this)->param(id));
}

void ToolGraph::add_api(ApiNode node) {
    require_token(node.id, "api id");
    require_token(node.name, "api name");
    if (node.description.empty()) throw GraphError("api description must be non-empty: " + node.id);
    check_new_id(node.id);
    index_[node.id] = NodeRef{NodeKind::Api, apis_.size()};
    apis_.push_back(std::move(node));
}

void ToolGraph::add_param(ParamNode node) {
    require_token(node.id, "param id");
    require_token(node.canonical_name, "canonical name");
    if (node.members.empty()) throw GraphError("param node needs at least one member: " + node.id);
    check_new_id(node.id);
    for (const auto& m : node.members) {
        auto key = std::make_pair(m.api_id, m.original_name);
        if (member_index_.count(key)) {
            throw GraphError("raw parameter already clustered: " + m.api_id + ":" +
                             m.original_name);
        }
    }
    for (const auto& m : node.members) {
        member_index_[{m.api_id, m.original_name}] = node.id;
    }
    index_[node.id] = NodeRef{NodeKind::Param, params_.size()};
    params_.push_back(std::move(node));
}

void ToolGraph::add_edge(const std::string& src, const std::string& dst, EdgeKind kind) {
    if (src == dst) throw GraphError("self-loop rejected: " + src);
    const NodeKind ks = kind_of(src);
    const NodeKind kd = kind_of(dst);
    const EdgeKind implied = (ks == kd) ? EdgeKind::Behavioral : EdgeKind::Structural;
    if (kind != implied) {
        throw GraphError("edge kind does not match endpoint kinds: " + src + " -> " + dst);
    }
    auto key = std::make_pair(src, dst);
    if (edge_index_.count(key)) throw GraphError("duplicate edge: " + src + " -> " + dst);
    edge_index_[key] = edges_.size();
    edges_.push_back(Edge{src, dst, kind, 0.0, 0.0});
    out_adj_[src].insert(dst);
    in_adj_[dst].insert(src);
}

bool ToolGraph::has_edge(const std::string& src, const std::string& dst) const {
    return edge_index_.count({src, dst}) != 0;
}

const Edge& ToolGraph::edge(const std::string& src, const std::string& dst) const {
    auto it = edge_index_.find({src, dst});
    if (it == edge_index_.end()) throw GraphError("unknown edge: " + src + " -> " + dst);
    return edges_[it->second];
}

Edge& ToolGraph::edge_mut(const std::string& src, const std::string& dst) {
    return const_cast<Edge&>(static_cast<const ToolGraph*>(this)->edge(src, dst));
}

std::vector<std::string> ToolGraph::predecessors(const std::string& id) const {
    ref(id);
    auto it = in_adj_.find(id);
    if (it == in_adj_.end()) return {};
    return {it->second.begin(), it->second.end()};
}

std::vector<std::string> ToolGraph::successors(const std::string& id) const {
    ref(id);
    auto it = out_adj_.find(id);
    if (it == out_adj_.end()) return {};
    return {it->second.begin(), it->second.end()};
}

std::size_t ToolGraph::in_degree(const std::string& id) const {
    auto it = in_adj_.find(id);
    return it == in_adj_.end() ? 0 : it->second.size();
}

std::size_t ToolGraph::out_degree(const std::string& id) const {
    auto it = out_adj_.find(id);
    return it == out_adj_.end() ? 0 : it->second.size();
}

bool ToolGraph::is_active(const std::string& id) const {
    const NodeRef& r = ref(id);
    return r.kind == NodeKind::Param || apis_[r.index].active;
}

std::vector<std::string> ToolGraph::input_params(const std::string& api_id) const {
    std::vector<std::string> out;
    for (const auto& p : predecessors(api_id)) {
        if (kind_of(p) == NodeKind::Param) out.push_back(p);
    }
    return out;
}

std::vector<std::string> ToolGraph::output_params(const std::string& api_id) const {
    std::vector<std::string> out;
    for (const auto& s : successors(api_id)) {
        if (kind_of(s) == NodeKind::Param) out.push_back(s);
    }
    return out;
}

std::vector<std::string> ToolGraph::producers(const std::string& param_id) const {
    std::vector<std::string> out;
    for (const auto& p : predecessors(param_id)) {
        if (kind_of(p) == NodeKind::Api) out.push_back(p);
    }
    return out;
}

std::optional<std::string> ToolGraph::param_for_member(const std::string& api_id,
                                                       const std::string& original_name) const {
    auto it = member_index_.find({api_id, original_name});
    if (it == member_index_.end()) return std::nullopt;
    return it->second;
}

void ToolGraph::set_tau_days(double tau) {
    if (tau <= 0.0) throw GraphError("tau must be positive");
    tau_days_ = tau;
}

void ToolGraph::trim_window(InvocationStats& stats) const {
    const double cutoff = latest_timestamp_ - tau_days_;
    auto it = stats.recent.begin();
    while (it != stats.recent.end() && it->timestamp < cutoff) ++it;
    stats.recent.erase(stats.recent.begin(), it);
}

void ToolGraph::record_invocation(const std::optional<std::string>& peer, const std::string& dst,
                                  bool success, double timestamp) {
    const NodeRef& rd = ref(dst);
    latest_timestamp_ = std::max(latest_timestamp_, timestamp);
    InvocationStats& stats =
        rd.kind == NodeKind::Api ? apis_[rd.index].stats : params_[rd.index].stats;
    if (success) ++stats.n_succ; else ++stats.n_fail;
    InvocationEvent ev{timestamp, peer.value_or(""), success};
    auto pos = std::upper_bound(stats.recent.begin(), stats.recent.end(), timestamp,
                                [](double t, const InvocationEvent& e) { return t < e.timestamp; });
    stats.recent.insert(pos, ev);
    trim_window(stats);
    bump_version();
}

void ToolGraph::note_pair(const std::string& src, const std::string& dst, bool success,
                          double timestamp) {
    ref(src);
    ref(dst);
    latest_timestamp_ = std::max(latest_timestamp_, timestamp);
    if (success) pair_succ_[{src, dst}] += 1;
    auto& log = pair_events_[{src, dst}];
    auto pos = std::upper_bound(log.begin(), log.end(), timestamp,
                                [](double t, const InvocationEvent& e) { return t < e.timestamp; });
    log.insert(pos, InvocationEvent{timestamp, "", success});
    const double cutoff = latest_timestamp_ - tau_days_;
    auto it = log.begin();
    while (it != log.end() && it->timestamp < cutoff) ++it;
    log.erase(log.begin(), it);
}

void ToolGraph::ensure_behavioral_edge(const std::string& src, const std::string& dst) {
    if (src == dst) return;
    if (kind_of(src) != kind_of(dst)) return;
    if (!has_edge(src, dst)) add_edge(src, dst, EdgeKind::Behavioral);
}

std::int64_t ToolGraph::pair_successes(const std::string& src, const std::string& dst) const {
    auto it = pair_succ_.find({src, dst});
    return it == pair_succ_.end() ? 0 : it->second;
}

ToolGraph::WindowCounts ToolGraph::window_counts(const std::string& id, double now,
                                                 double tau_days) const {
    const NodeRef& r = ref(id);
    const InvocationStats& stats =
        r.kind == NodeKind::Api ? apis_[r.index].stats : params_[r.index].stats;
    WindowCounts out;
    for (const auto& ev : stats.recent) {
        if (ev.timestamp >= now - tau_days && ev.timestamp <= now) {
            if (ev.success) ++out.succ; else ++out.fail;
        }
    }
    return out;
}

std::int64_t ToolGraph::window_pair_successes(const std::string& src, const std::string& dst,
                                              double now, double tau_days) const {
    auto it = pair_events_.find({src, dst});
    if (it == pair_events_.end()) return 0;
    std::int64_t n = 0;
    for (const auto& ev : it->second) {
        if (ev.success && ev.timestamp >= now - tau_days && ev.timestamp <= now) ++n;
    }
    return n;
}

// ---------------------------------------------------------------------------
// Statistical weights

double update_statistical_weight(ToolGraph& g, const std::string& src, const std::string& dst) {
    Edge& e = g.edge_mut(src, dst);  // throws GraphError for unknown dependencies
    const std::int64_t total = g.kind_of(dst) == NodeKind::Api ? g.api(dst).stats.total()
                                                               : g.param(dst).stats.total();
    double w = 0.0;
    if (total > 0) {
        w = static_cast<double>(g.pair_successes(src, dst)) / static_cast<double>(total);
        w = std::min(1.0, std::max(0.0, w));
    }
    e.w_stat = w;
    g.bump_version();
    return w;
}

void update_all_statistical_weights(ToolGraph& g) {
    for (const auto& e : g.edges()) {
        const std::string dst = e.dst;
        const std::int64_t total = g.kind_of(dst) == NodeKind::Api ? g.api(dst).stats.total()
                                                                   : g.param(dst).stats.total();
        double w = 0.0;
        if (total > 0) {
            w = static_cast<double>(g.pair_successes(e.src, dst)) / static_cast<double>(total);
            w = std::min(1.0, std::max(0.0, w));
        }
        g.edge_mut(e.src, dst).w_stat = w;
    }
    g.bump_version();
}

// ---------------------------------------------------------------------------
// Parameter clustering

namespace {

struct RawParam {
    std::string api_id;
    ParamSpec spec;
    bool is_input = false;
    bool is_output = false;
};

struct Cluster {
    std::vector<RawParam> members;
};

double cluster_similarity(const SimilarityProvider& sim, const RawParam& raw, const Cluster& c) {
    double best = 0.0;
    for (const auto& m : c.members) {
        best = std::max(best, sim.similarity(raw.spec, m.spec));
    }
    return best;
}

// Canonical name: the shared original name when members agree, otherwise the
// two most frequent non-stopword tokens over member names and descriptions,
// joined alphabetically (ties broken toward the alphabetically smaller token).
std::string canonical_name_for(const Cluster& c) {
    std::set<std::string> names;
    for (const auto& m : c.members) names.insert(to_lower(m.spec.name));
    if (names.size() == 1) return *names.begin();

    std::map<std::string, int> counts;
    for (const auto& m : c.members) {
        for (const auto& t : tokenize(m.spec.name)) {
            if (!stopwords().count(t)) ++counts[t];
        }
        for (const auto& t : tokenize(m.spec.description)) {
            if (!stopwords().count(t)) ++counts[t];
        }
    }
    std::vector<std::pair<std::string, int>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> picked;
    for (std::size_t i = 0; i < ranked.size() && picked.size() < 2; ++i) {
        picked.push_back(ranked[i].first);
    }
    if (picked.empty()) return to_lower(c.members.front().spec.name);
    std::sort(picked.begin(), picked.end());
    std::string out = picked[0];
    for (std::size_t i = 1; i < picked.size(); ++i) out += "_" + picked[i];
    return out;
}

std::string unique_node_id(const ToolGraph& g, const std::string& base) {
    if (!g.has_node(base)) return base;
    for (int i = 2;; ++i) {
        std::string cand = base + "_" + std::to_string(i);
        if (!g.has_node(cand)) return cand;
    }
}

std::vector<RawParam> collect_raw_params(const ApiSpec& spec) {
    std::vector<RawParam> raws;
    auto find = [&raws](const std::string& name) -> RawParam* {
        for (auto& r : raws) {
            if (r.spec.name == name) return &r;
        }
        return nullptr;
    };
    for (const auto& p : spec.inputs) {
        if (p.name.empty()) throw GraphError("parameter with empty name in api " + spec.id);
        require_token(p.name, "parameter name");
        if (find(p.name)) throw GraphError("duplicate input parameter " + p.name + " in " + spec.id);
        raws.push_back(RawParam{spec.id, p, true, false});
    }
    for (const auto& p : spec.outputs) {
        if (p.name.empty()) throw GraphError("parameter with empty name in api " + spec.id);
        require_token(p.name, "parameter name");
        if (RawParam* existing = find(p.name)) {
            if (existing->is_output) {
                throw GraphError("duplicate output parameter " + p.name + " in " + spec.id);
            }
            existing->is_output = true;  // same name used as both input and output
        } else {
            raws.push_back(RawParam{spec.id, p, false, true});
        }
    }
    return raws;
}

void attach_cluster(ToolGraph& g, const Cluster& c) {
    ParamNode node;
    node.canonical_name = canonical_name_for(c);
    node.id = unique_node_id(g, node.canonical_name);
    for (const auto& m : c.members) {
        node.members.push_back(MemberParam{m.api_id, m.spec.name, m.spec.description});
    }
    const std::string pid = node.id;
    g.add_param(std::move(node));
    for (const auto& m : c.members) {
        if (m.is_input && !g.has_edge(pid, m.api_id)) {
            g.add_edge(pid, m.api_id, EdgeKind::Structural);
        }
        if (m.is_output && !g.has_edge(m.api_id, pid)) {
            g.add_edge(m.api_id, pid, EdgeKind::Structural);
        }
    }
}

}  // namespace

ToolGraph build_graph(const std::vector<ApiSpec>& api_specs, const SimilarityProvider& sim,
                      double threshold) {
    if (api_specs.empty()) throw GraphError("api spec list is empty");
    if (threshold < 0.0 || threshold > 1.0) throw GraphError("threshold must lie in [0,1]");

    ToolGraph g;
    for (const auto& spec : api_specs) {
        ApiNode node;
        node.id = spec.id;
        node.name = spec.name.empty() ? spec.id : spec.name;
        node.description = spec.description;
        g.add_api(std::move(node));  // rejects duplicate ids
    }

    // Greedy agglomeration in declaration order: each raw parameter joins the
    // best-matching existing cluster at or above the threshold, else starts
    // its own. The result is a partition of all (api, name) pairs.
    std::vector<Cluster> clusters;
    for (const auto& spec : api_specs) {
        for (const auto& raw : collect_raw_params(spec)) {
            double best = -1.0;
            std::size_t best_idx = 0;
            for (std::size_t i = 0; i < clusters.size(); ++i) {
                const double s = cluster_similarity(sim, raw, clusters[i]);
                if (s > best) {
                    best = s;
                    best_idx = i;
                }
            }
            if (best >= threshold && !clusters.empty()) {
                clusters[best_idx].members.push_back(raw);
            } else {
                clusters.push_back(Cluster{{raw}});
            }
        }
    }
    for (const auto& c : clusters) attach_cluster(g, c);

    g.set_version(1);
    return g;
}

ToolGraph& integrate_node(ToolGraph& g, const ApiSpec& spec, const SimilarityProvider& sim,
                          double threshold) {
    if (g.has_node(spec.id)) throw GraphError("duplicate node id: " + spec.id);

    ApiNode node;
    node.id = spec.id;
    node.name = spec.name.empty() ? spec.id : spec.name;
    node.description = spec.description;
    g.add_api(std::move(node));

    for (const auto& raw : collect_raw_params(spec)) {
        // Match against existing clusters through their members.
        double best = -1.0;
        std::string best_id;
        for (const auto& pn : g.params()) {
            double s = 0.0;
            for (const auto& m : pn.members) {
                s = std::max(s, sim.similarity(raw.spec, ParamSpec{m.original_name, m.description}));
            }
            if (s > best) {
                best = s;
                best_id = pn.id;
            }
        }
        if (best >= threshold && !best_id.empty()) {
            g.param_mut(best_id).members.push_back(
                MemberParam{raw.api_id, raw.spec.name, raw.spec.description});
            g.member_index_[{raw.api_id, raw.spec.name}] = best_id;
            if (raw.is_input && !g.has_edge(best_id, raw.api_id)) {
                g.add_edge(best_id, raw.api_id, EdgeKind::Structural);
            }
            if (raw.is_output && !g.has_edge(raw.api_id, best_id)) {
                g.add_edge(raw.api_id, best_id, EdgeKind::Structural);
            }
        } else {
            Cluster c;
            c.members.push_back(raw);
            attach_cluster(g, c);
        }
    }
    g.bump_version();
    return g;
}

// ---------------------------------------------------------------------------
// Equality

static bool operator==(const InvocationEvent& a, const InvocationEvent& b) {
    return a.timestamp == b.timestamp && a.peer == b.peer && a.success == b.success;
}

static bool operator==(const InvocationStats& a, const InvocationStats& b) {
    return a.n_succ == b.n_succ && a.n_fail == b.n_fail && a.recent == b.recent;
}

static bool operator==(const MemberParam& a, const MemberParam& b) {
    return a.api_id == b.api_id && a.original_name == b.original_name &&
           a.description == b.description;
}

static bool eq(const ApiNode& a, const ApiNode& b) {
    return a.id == b.id && a.name == b.name && a.description == b.description &&
           a.stats == b.stats && a.active == b.active;
}

static bool eq(const ParamNode& a, const ParamNode& b) {
    return a.id == b.id && a.canonical_name == b.canonical_name &&
           a.members.size() == b.members.size() &&
           std::equal(a.members.begin(), a.members.end(), b.members.begin(),
                      [](const MemberParam& x, const MemberParam& y) { return x == y; }) &&
           a.stats == b.stats;
}

static bool eq(const Edge& a, const Edge& b) {
    return a.src == b.src && a.dst == b.dst && a.kind == b.kind && a.w_stat == b.w_stat &&
           a.w_search == b.w_search;
}

bool operator==(const ToolGraph& a, const ToolGraph& b) {
    if (a.version_ != b.version_ || a.tau_days_ != b.tau_days_) return false;
    if (a.apis_.size() != b.apis_.size() || a.params_.size() != b.params_.size() ||
        a.edges_.size() != b.edges_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.apis_.size(); ++i) {
        if (!eq(a.apis_[i], b.apis_[i])) return false;
    }
    for (std::size_t i = 0; i < a.params_.size(); ++i) {
        if (!eq(a.params_[i], b.params_[i])) return false;
    }
    for (std::size_t i = 0; i < a.edges_.size(); ++i) {
        if (!eq(a.edges_[i], b.edges_[i])) return false;
    }
    return a.pair_succ_ == b.pair_succ_ && a.pair_events_ == b.pair_events_;
}

// ---------------------------------------------------------------------------
// Text file round trip

void ToolGraph::save(const std::string& path) const {
    std::ostringstream out;
    out << "TWNM v1 version=" << version_ << "\n";
    out << "T tau=" << format_fixed6(tau_days_) << " latest=" << format_fixed6(latest_timestamp_)
        << "\n";
    for (const auto& a : apis_) {
        out << "A " << a.id << " " << a.name << " succ=" << a.stats.n_succ
            << " fail=" << a.stats.n_fail << " active=" << (a.active ? 1 : 0) << " "
            << quote_escape(a.description) << "\n";
    }
    for (const auto& p : params_) {
        out << "P " << p.id << " " << p.canonical_name << " members=";
        for (std::size_t i = 0; i < p.members.size(); ++i) {
            if (i) out << ";";
            out << p.members[i].api_id << ":" << p.members[i].original_name;
        }
        out << " succ=" << p.stats.n_succ << " fail=" << p.stats.n_fail << "\n";
        for (const auto& m : p.members) {
            out << "D " << p.id << " " << m.api_id << " " << m.original_name << " "
                << quote_escape(m.description) << "\n";
        }
    }
    for (const auto& e : edges_) {
        out << "E " << e.src << " " << e.dst
            << " kind=" << (e.kind == EdgeKind::Structural ? "S" : "B")
            << " wstat=" << format_fixed6(e.w_stat) << " wsearch=" << format_fixed6(e.w_search)
            << "\n";
    }
    auto dump_events = [&out](const std::string& id, const InvocationStats& st) {
        for (const auto& ev : st.recent) {
            out << "R " << id << " " << format_fixed6(ev.timestamp) << " "
                << (ev.peer.empty() ? "-" : ev.peer) << " " << (ev.success ? "S" : "F") << "\n";
        }
    };
    for (const auto& a : apis_) dump_events(a.id, a.stats);
    for (const auto& p : params_) dump_events(p.id, p.stats);
    for (const auto& [key, n] : pair_succ_) {
        out << "C " << key.first << " " << key.second << " " << n << "\n";
    }
    for (const auto& [key, evs] : pair_events_) {
        for (const auto& ev : evs) {
            out << "W " << key.first << " " << key.second << " " << format_fixed6(ev.timestamp)
                << " " << (ev.success ? "S" : "F") << "\n";
        }
    }

    std::ofstream f(path, std::ios::binary);
    if (!f) throw GraphError("cannot write " + path);
    f << out.str();
}

ToolGraph ToolGraph::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw GraphError("cannot read " + path);

    ToolGraph g;
    std::string line;
    std::size_t lineno = 0;

    if (!std::getline(f, line)) throw ParseError(1, "empty file");
    ++lineno;
    {
        std::istringstream hs(line);
        std::string magic, ver, vfield;
        hs >> magic >> ver >> vfield;
        if (magic != "TWNM" || ver != "v1") throw ParseError(lineno, "bad header");
        g.version_ = static_cast<std::uint64_t>(parse_count(vfield, "version", lineno));
    }

    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        try {
            if (tag == "T") {
                std::string tau_tok, latest_tok;
                ls >> tau_tok >> latest_tok;
                g.tau_days_ = parse_real(tau_tok, "tau", lineno);
                g.latest_timestamp_ = parse_real(latest_tok, "latest", lineno);
            } else if (tag == "A") {
                ApiNode a;
                std::string succ_tok, fail_tok, active_tok;
                ls >> a.id >> a.name >> succ_tok >> fail_tok >> active_tok;
                a.stats.n_succ = parse_count(succ_tok, "succ", lineno);
                a.stats.n_fail = parse_count(fail_tok, "fail", lineno);
                a.active = parse_count(active_tok, "active", lineno) != 0;
                auto qpos = line.find('"');
                a.description = quote_unescape(line, qpos, lineno);
                g.add_api(std::move(a));
            } else if (tag == "P") {
                ParamNode p;
                std::string members_tok, succ_tok, fail_tok;
                ls >> p.id >> p.canonical_name >> members_tok >> succ_tok >> fail_tok;
                if (members_tok.rfind("members=", 0) != 0) {
                    throw ParseError(lineno, "expected members=");
                }
                for (const auto& part : split(members_tok.substr(8), ';')) {
                    if (part.empty()) continue;
                    auto colon = part.find(':');
                    if (colon == std::string::npos) throw ParseError(lineno, "bad member " + part);
                    p.members.push_back(MemberParam{part.substr(0, colon), part.substr(colon + 1), ""});
                }
                p.stats.n_succ = parse_count(succ_tok, "succ", lineno);
                p.stats.n_fail = parse_count(fail_tok, "fail", lineno);
                g.add_param(std::move(p));
            } else if (tag == "D") {
                std::string pid, api_id, orig;
                ls >> pid >> api_id >> orig;
                ParamNode& p = g.param_mut(pid);
                bool found = false;
                for (auto& m : p.members) {
                    if (m.api_id == api_id && m.original_name == orig) {
                        m.description = quote_unescape(line, line.find('"'), lineno);
                        found = true;
                        break;
                    }
                }
                if (!found) throw ParseError(lineno, "D line for unknown member");
            } else if (tag == "E") {
                std::string src, dst, kind_tok, wstat_tok, wsearch_tok;
                ls >> src >> dst >> kind_tok >> wstat_tok >> wsearch_tok;
                EdgeKind kind;
                if (kind_tok == "kind=S") kind = EdgeKind::Structural;
                else if (kind_tok == "kind=B") kind = EdgeKind::Behavioral;
                else throw ParseError(lineno, "bad edge kind " + kind_tok);
                g.add_edge(src, dst, kind);
                Edge& e = g.edge_mut(src, dst);
                e.w_stat = parse_real(wstat_tok, "wstat", lineno);
                e.w_search = parse_real(wsearch_tok, "wsearch", lineno);
                if (e.w_stat < 0.0 || e.w_stat > 1.0 || e.w_search < 0.0 || e.w_search > 1.0) {
                    throw ParseError(lineno, "edge weight out of [0,1]");
                }
            } else if (tag == "R") {
                std::string id, flag, peer;
                double ts;
                ls >> id >> ts >> peer >> flag;
                const NodeRef& r = g.ref(id);
                InvocationStats& st = r.kind == NodeKind::Api ? g.apis_[r.index].stats
                                                              : g.params_[r.index].stats;
                st.recent.push_back(
                    InvocationEvent{ts, peer == "-" ? "" : peer, flag == "S"});
            } else if (tag == "C") {
                std::string src, dst;
                std::int64_t n;
                ls >> src >> dst >> n;
                g.ref(src);
                g.ref(dst);
                g.pair_succ_[{src, dst}] = n;
            } else if (tag == "W") {
                std::string src, dst, flag;
                double ts;
                ls >> src >> dst >> ts >> flag;
                g.ref(src);
                g.ref(dst);
                g.pair_events_[{src, dst}].push_back(InvocationEvent{ts, "", flag == "S"});
            } else {
                throw ParseError(lineno, "unknown record tag '" + tag + "'");
            }
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(lineno, e.what());
        }
    }
    return g;
}

void save_graph(const ToolGraph& g, const std::string& path) { g.save(path); }

ToolGraph load_graph(const std::string& path) { return ToolGraph::load(path); }

}  // namespace twnm
