#pragma once

#include <string>
#include <vector>

#include "twnm/graph.hpp"

namespace twnm {

// Deterministic text embedder used for node feature construction. Learned
// embedders plug in behind the same interface.
struct TextEmbedder {
    virtual ~TextEmbedder() = default;
    virtual std::size_t dim() const = 0;
    virtual std::vector<double> embed(const std::string& text) const = 0;
};

// Feature hashing of lowercase word tokens into a fixed-width vector with
// unit L2 norm; reproducible without model weights.
class HashingEmbedder final : public TextEmbedder {
public:
    explicit HashingEmbedder(std::size_t dim = 64);
    std::size_t dim() const override { return dim_; }
    std::vector<double> embed(const std::string& text) const override;

private:
    std::size_t dim_;
};

struct NodeFeatures {
    std::vector<double> embedding;
    double succ_sig = 0.5;    // sigmoid(n_succ)
    double ratio_sig = 0.5;   // sigmoid(success ratio); ratio is 0 for untouched nodes
    double indeg_sig = 0.5;   // sigmoid(in-degree)
    double outdeg_sig = 0.5;  // sigmoid(out-degree)

    // Concatenation in fusion order: embedding, then the four scalars.
    std::vector<double> concat() const;
};

// Text the embedder sees for a node: name plus description for APIs,
// canonical name plus member names/descriptions for parameters.
std::string node_text(const ToolGraph& g, const std::string& id);

NodeFeatures fuse_features(const ToolGraph& g, const std::string& id, const TextEmbedder& embedder);

// Soft-label cross entropy over (predicted probability, statistical weight)
// pairs. Probabilities must lie strictly inside (0,1); callers clamp.
double ce_loss(const std::vector<std::pair<double, double>>& pairs);

// Margin that widens with the statistical weight of the positive edge.
double adaptive_margin(double m0, double w_stat);

struct MarginSample {
    double s_pos = 0.0;
    double margin = 0.0;
    std::vector<double> s_negs;  // k >= 1 sampled negatives
};

// Mean hinge over each positive's negatives, then mean over positives.
double margin_loss(const std::vector<MarginSample>& positives);

// Exponentially decaying cross-entropy share: mu0 * gamma^t.
double curriculum_weight(double mu0, double gamma, int t);

struct LossBreakdown {
    double ce = 0.0;
    double margin = 0.0;
    double mu_t = 0.0;
    double total = 0.0;

    static LossBreakdown combine(double ce, double margin, double mu_t);
};

// Assigns one score in [0,1] per edge; deterministic for fixed inputs.
struct EdgeScorer {
    virtual ~EdgeScorer() = default;
    virtual std::vector<double> score(const ToolGraph& g,
                                      const std::vector<const Edge*>& edges) const = 0;
};

// Baseline scorer: the search weight is the statistical weight.
struct StatisticalScorer final : EdgeScorer {
    std::vector<double> score(const ToolGraph& g,
                              const std::vector<const Edge*>& edges) const override;
};

// Writes scorer output into every edge's w_search and bumps the version.
// Any score outside [0,1] rejects the whole batch.
void score_edges(ToolGraph& g, const EdgeScorer& scorer);

}  // namespace twnm
