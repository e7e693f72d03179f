#include "twnm/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace twnm {

namespace {
constexpr double kZeroMassTolerance = 1e-12;
constexpr double kSumTolerance = 1e-9;
}  // namespace

PolicyDistribution::PolicyDistribution(std::vector<double> p) : probs(std::move(p)) {
    validate();
}

void PolicyDistribution::validate() const {
    if (probs.empty()) throw InfeasibleError("empty distribution");
    double sum = 0.0;
    for (double p : probs) {
        if (p < 0.0) throw InfeasibleError("negative probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
        throw InfeasibleError("probabilities sum to " + std::to_string(sum));
    }
}

FeasibleSet::FeasibleSet(std::vector<int> idx) : allowed(std::move(idx)) {
    if (allowed.empty()) throw InfeasibleError("feasible set must be non-empty");
    std::sort(allowed.begin(), allowed.end());
    allowed.erase(std::unique(allowed.begin(), allowed.end()), allowed.end());
    if (allowed.front() < 0) throw InfeasibleError("negative action index");
}

bool FeasibleSet::contains(int a) const {
    return std::binary_search(allowed.begin(), allowed.end(), a);
}

PolicyDistribution project(const PolicyDistribution& pi0, const FeasibleSet& feas) {
    pi0.validate();
    if (!feas.allowed.empty() &&
        feas.allowed.back() >= static_cast<int>(pi0.size())) {
        throw InfeasibleError("feasible action index out of range");
    }
    double z = 0.0;
    for (int a : feas.allowed) z += pi0.probs[static_cast<std::size_t>(a)];
    if (z < kZeroMassTolerance) {
        throw InfeasibleError("base policy has no mass on the feasible set");
    }
    PolicyDistribution out;
    out.probs.assign(pi0.size(), 0.0);
    for (int a : feas.allowed) {
        out.probs[static_cast<std::size_t>(a)] = pi0.probs[static_cast<std::size_t>(a)] / z;
    }
    return out;
}

double kl_divergence(const PolicyDistribution& p, const PolicyDistribution& q) {
    if (p.size() != q.size()) throw InfeasibleError("distribution sizes differ");
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p.probs[i] == 0.0) continue;
        if (q.probs[i] == 0.0) return std::numeric_limits<double>::infinity();
        sum += p.probs[i] * std::log(p.probs[i] / q.probs[i]);
    }
    return std::max(0.0, sum);
}

std::map<std::string, PolicyDistribution> hard_rule_policy(
    const std::map<std::string, PolicyDistribution>& pi0_by_context,
    const std::set<std::string>& trigger_contexts, int q) {
    std::map<std::string, PolicyDistribution> out;
    for (const auto& [ctx, pi0] : pi0_by_context) {
        pi0.validate();
        if (q < 0 || q >= static_cast<int>(pi0.size())) {
            throw InfeasibleError("rule action index out of range in context " + ctx);
        }
        if (trigger_contexts.count(ctx)) {
            if (pi0.probs[static_cast<std::size_t>(q)] < kZeroMassTolerance) {
                throw InfeasibleError("base policy puts no mass on the rule action in context " +
                                      ctx);
            }
            PolicyDistribution dirac;
            dirac.probs.assign(pi0.size(), 0.0);
            dirac.probs[static_cast<std::size_t>(q)] = 1.0;
            out.emplace(ctx, std::move(dirac));
        } else {
            out.emplace(ctx, pi0);
        }
    }
    return out;
}

PolicyDistribution gibbs_reweight(const PolicyDistribution& pi0,
                                  const std::vector<double>& scores, double tau) {
    pi0.validate();
    if (scores.size() != pi0.size()) throw InfeasibleError("score vector size mismatch");
    if (tau < 0.0) throw InfeasibleError("temperature must be non-negative");

    // Shift by the max finite score before exponentiating.
    double max_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (pi0.probs[i] > 0.0 && std::isfinite(scores[i])) {
            max_score = std::max(max_score, scores[i]);
        }
    }
    if (!std::isfinite(max_score)) {
        throw InfeasibleError("no action has both finite score and positive mass");
    }

    PolicyDistribution out;
    out.probs.assign(pi0.size(), 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] == -std::numeric_limits<double>::infinity()) continue;
        const double w = pi0.probs[i] * std::exp(tau * (scores[i] - max_score));
        out.probs[i] = w;
        z += w;
    }
    if (z < kZeroMassTolerance) throw InfeasibleError("all probability mass annihilated");
    for (double& p : out.probs) p /= z;
    return out;
}

}  // namespace twnm
