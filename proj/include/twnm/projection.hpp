#pragma once

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace twnm {

class InfeasibleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Probability vector over a finite action index set.
struct PolicyDistribution {
    std::vector<double> probs;

    PolicyDistribution() = default;
    explicit PolicyDistribution(std::vector<double> p);

    std::size_t size() const { return probs.size(); }
    void validate() const;  // entries >= 0, sum within 1e-9 of 1
};

// Non-empty subset of the action index set.
struct FeasibleSet {
    std::vector<int> allowed;  // sorted, unique

    explicit FeasibleSet(std::vector<int> idx);
    bool contains(int a) const;
};

// Restriction-and-renormalize: pi[a] = pi0[a] * 1{a in feas} / Z. This is the
// KL-minimal correction of pi0 supported on the feasible set. Throws
// InfeasibleError when the feasible mass Z is (numerically) zero.
PolicyDistribution project(const PolicyDistribution& pi0, const FeasibleSet& feas);

// Sum p log(p/q) with 0 log 0 = 0; +infinity when support(p) leaves support(q).
double kl_divergence(const PolicyDistribution& p, const PolicyDistribution& q);

// Contextual policy equal to the Dirac at `q` on trigger contexts and the
// base policy elsewhere; the "if p then q" rule as a one-action projection.
std::map<std::string, PolicyDistribution> hard_rule_policy(
    const std::map<std::string, PolicyDistribution>& pi0_by_context,
    const std::set<std::string>& trigger_contexts, int q);

// Soft extension: reweight by exp(tau * score); a score of -infinity removes
// the action outright, so {0, -inf} scores reproduce the hard projection.
PolicyDistribution gibbs_reweight(const PolicyDistribution& pi0,
                                  const std::vector<double>& scores, double tau);

}  // namespace twnm
