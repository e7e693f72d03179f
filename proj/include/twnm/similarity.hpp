#pragma once

#include <set>
#include <string>

#include "twnm/api_spec.hpp"
#include "twnm/util.hpp"

namespace twnm {

// Scores how likely two raw parameters denote the same concept, in [0,1].
// Implementations must be deterministic for fixed inputs.
struct SimilarityProvider {
    virtual ~SimilarityProvider() = default;
    virtual double similarity(const ParamSpec& a, const ParamSpec& b) const = 0;
};

// Normalized token overlap (Jaccard) over name + description tokens.
// Embedding-backed providers plug in behind the same interface.
class LexicalSimilarity final : public SimilarityProvider {
public:
    double similarity(const ParamSpec& a, const ParamSpec& b) const override {
        const auto ta = token_set(a);
        const auto tb = token_set(b);
        if (ta.empty() && tb.empty()) return 1.0;
        if (ta.empty() || tb.empty()) return 0.0;
        std::size_t inter = 0;
        for (const auto& t : ta) {
            if (tb.count(t)) ++inter;
        }
        const std::size_t uni = ta.size() + tb.size() - inter;
        return static_cast<double>(inter) / static_cast<double>(uni);
    }

private:
    static std::set<std::string> token_set(const ParamSpec& p) {
        std::set<std::string> out;
        for (auto& t : tokenize(p.name)) out.insert(t);
        for (auto& t : tokenize(p.description)) out.insert(t);
        return out;
    }
};

// Ranks free text against node documentation; used by toolchain retrieval.
struct TextRanker {
    virtual ~TextRanker() = default;
    virtual double score(const std::string& query, const std::string& doc) const = 0;
};

class LexicalRanker final : public TextRanker {
public:
    double score(const std::string& query, const std::string& doc) const override {
        std::set<std::string> q, d;
        for (auto& t : tokenize(query)) q.insert(t);
        for (auto& t : tokenize(doc)) d.insert(t);
        if (q.empty() || d.empty()) return 0.0;
        std::size_t inter = 0;
        for (const auto& t : q) {
            if (d.count(t)) ++inter;
        }
        const std::size_t uni = q.size() + d.size() - inter;
        return static_cast<double>(inter) / static_cast<double>(uni);
    }
};

}  // namespace twnm
