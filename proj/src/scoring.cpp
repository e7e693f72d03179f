#include "twnm/scoring.hpp"

#include <cmath>
#include <stdexcept>

#include "twnm/util.hpp"

namespace twnm {

HashingEmbedder::HashingEmbedder(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw std::invalid_argument("embedder dimension must be positive");
}

std::vector<double> HashingEmbedder::embed(const std::string& text) const {
    std::vector<double> v(dim_, 0.0);
    for (const auto& tok : tokenize(text)) {
        v[fnv1a64(tok) % dim_] += 1.0;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0) {
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
    }
    return v;
}

std::vector<double> NodeFeatures::concat() const {
    std::vector<double> out = embedding;
    out.push_back(succ_sig);
    out.push_back(ratio_sig);
    out.push_back(indeg_sig);
    out.push_back(outdeg_sig);
    return out;
}

std::string node_text(const ToolGraph& g, const std::string& id) {
    if (g.kind_of(id) == NodeKind::Api) {
        const ApiNode& a = g.api(id);
        return a.name + " " + a.description;
    }
    const ParamNode& p = g.param(id);
    std::string text = p.canonical_name;
    for (const auto& m : p.members) {
        text += " " + m.original_name + " " + m.description;
    }
    return text;
}

NodeFeatures fuse_features(const ToolGraph& g, const std::string& id,
                           const TextEmbedder& embedder) {
    const InvocationStats& stats =
        g.kind_of(id) == NodeKind::Api ? g.api(id).stats : g.param(id).stats;
    NodeFeatures f;
    f.embedding = embedder.embed(node_text(g, id));
    const double ratio =
        stats.total() == 0 ? 0.0
                           : static_cast<double>(stats.n_succ) / static_cast<double>(stats.total());
    f.succ_sig = sigmoid(static_cast<double>(stats.n_succ));
    f.ratio_sig = sigmoid(ratio);
    f.indeg_sig = sigmoid(static_cast<double>(g.in_degree(id)));
    f.outdeg_sig = sigmoid(static_cast<double>(g.out_degree(id)));
    return f;
}

double ce_loss(const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("ce_loss needs at least one pair");
    double sum = 0.0;
    for (const auto& [p, w] : pairs) {
        if (p <= 0.0 || p >= 1.0) {
            throw std::domain_error("predicted probability must lie strictly in (0,1)");
        }
        sum += w * std::log(p) + (1.0 - w) * std::log(1.0 - p);
    }
    return -sum / static_cast<double>(pairs.size());
}

double adaptive_margin(double m0, double w_stat) {
    if (m0 <= 0.0) throw std::invalid_argument("base margin must be positive");
    return m0 * (1.0 + sigmoid(w_stat));
}

double margin_loss(const std::vector<MarginSample>& positives) {
    if (positives.empty()) throw std::invalid_argument("margin_loss needs at least one positive");
    double total = 0.0;
    for (const auto& sample : positives) {
        if (sample.s_negs.empty()) {
            throw std::invalid_argument("each positive needs at least one negative");
        }
        double inner = 0.0;
        for (double s_neg : sample.s_negs) {
            inner += std::max(0.0, sample.margin - sample.s_pos + s_neg);
        }
        total += inner / static_cast<double>(sample.s_negs.size());
    }
    return total / static_cast<double>(positives.size());
}

double curriculum_weight(double mu0, double gamma, int t) {
    if (mu0 < 0.0 || mu0 > 1.0) throw std::invalid_argument("mu0 must lie in [0,1]");
    if (gamma <= 0.0 || gamma >= 1.0) throw std::invalid_argument("gamma must lie in (0,1)");
    if (t < 0) throw std::invalid_argument("epoch index must be non-negative");
    return mu0 * std::pow(gamma, static_cast<double>(t));
}

LossBreakdown LossBreakdown::combine(double ce, double margin, double mu_t) {
    LossBreakdown b;
    b.ce = ce;
    b.margin = margin;
    b.mu_t = mu_t;
    b.total = mu_t * ce + (1.0 - mu_t) * margin;
    return b;
}

std::vector<double> StatisticalScorer::score(const ToolGraph&,
                                             const std::vector<const Edge*>& edges) const {
    std::vector<double> out;
    out.reserve(edges.size());
    for (const Edge* e : edges) out.push_back(e->w_stat);
    return out;
}

void score_edges(ToolGraph& g, const EdgeScorer& scorer) {
    std::vector<const Edge*> refs;
    refs.reserve(g.edges().size());
    for (const auto& e : g.edges()) refs.push_back(&e);
    const std::vector<double> scores = scorer.score(g, refs);
    if (scores.size() != refs.size()) {
        throw GraphError("scorer returned wrong number of scores");
    }
    for (double s : scores) {
        if (!(s >= 0.0 && s <= 1.0)) {
            throw GraphError("scorer output outside [0,1]; batch rejected");
        }
    }
    for (std::size_t i = 0; i < refs.size(); ++i) {
        g.edge_mut(refs[i]->src, refs[i]->dst).w_search = scores[i];
    }
    g.bump_version();
}

}  // namespace twnm
