#include "twnm/evolution.hpp"

#include <algorithm>
#include <cmath>

#include "twnm/util.hpp"

namespace twnm {

void EvolutionConfig::validate() const {
    if (lambda < 0.0 || lambda > 1.0) throw GraphError("lambda must lie in [0,1]");
    if (reactivate_frac < 0.0 || reactivate_frac > 1.0) {
        throw GraphError("reactivate_frac must lie in [0,1]");
    }
    if (eta_prop < 0.0 || eta_prop > 1.0) throw GraphError("eta_prop must lie in [0,1]");
    if (tau_days <= 0) throw GraphError("tau_days must be positive");
}

double prune_score(double f_fail, double f_freq, double lambda) {
    if (f_fail < 0.0 || f_fail > 1.0) throw GraphError("failure rate must lie in [0,1]");
    if (f_freq < 0.0) throw GraphError("invocation frequency must be non-negative");
    if (lambda < 0.0 || lambda > 1.0) throw GraphError("lambda must lie in [0,1]");
    const double inv_freq = f_freq == 0.0 ? 20.0 : 1.0 / f_freq;
    return lambda * sigmoid(f_fail) + (1.0 - lambda) * sigmoid(inv_freq);
}

std::vector<std::string> apply_pruning(ToolGraph& g, const EvolutionConfig& cfg, double now) {
    cfg.validate();
    std::vector<std::string> pruned;
    for (const auto& a : g.apis()) {
        if (!a.active) continue;
        const auto counts = g.window_counts(a.id, now, static_cast<double>(cfg.tau_days));
        const std::int64_t total = counts.succ + counts.fail;
        const double f_fail =
            total == 0 ? 0.0 : static_cast<double>(counts.fail) / static_cast<double>(total);
        const double f_freq = static_cast<double>(total) / static_cast<double>(cfg.tau_days);
        if (prune_score(f_fail, f_freq, cfg.lambda) > cfg.prune_threshold) {
            pruned.push_back(a.id);
        }
    }
    for (const auto& id : pruned) g.api_mut(id).active = false;
    if (!pruned.empty()) g.bump_version();
    return pruned;
}

std::vector<std::string> reactivate(ToolGraph& g, const EvolutionConfig& cfg,
                                    const AvailabilityProber& prober, Rng& rng) {
    cfg.validate();
    std::vector<std::string> inactive;
    for (const auto& a : g.apis()) {
        if (!a.active) inactive.push_back(a.id);
    }
    std::sort(inactive.begin(), inactive.end());
    if (inactive.empty()) return {};

    const std::size_t want = static_cast<std::size_t>(
        std::ceil(cfg.reactivate_frac * static_cast<double>(inactive.size())));
    std::vector<std::string> probes;
    for (std::size_t i = 0; i < want && !inactive.empty(); ++i) {
        const std::size_t pick = rng.next_index(inactive.size());
        probes.push_back(inactive[pick]);
        inactive.erase(inactive.begin() + static_cast<std::ptrdiff_t>(pick));
    }

    std::vector<std::string> restored;
    for (const auto& id : probes) {
        if (!prober.probe(id)) continue;
        ApiNode& node = g.api_mut(id);
        node.active = true;
        // Drop the failure window so the node does not get re-pruned on the
        // next pass; lifetime counters are provenance and stay untouched.
        auto& recent = node.stats.recent;
        recent.erase(std::remove_if(recent.begin(), recent.end(),
                                    [](const InvocationEvent& ev) { return !ev.success; }),
                     recent.end());
        restored.push_back(id);
    }
    if (!restored.empty()) g.bump_version();
    return restored;
}

double propagate_edge_weight(double w_prev, std::int64_t succ_uv_window,
                             std::int64_t succ_v_window, double eta_prop) {
    if (w_prev < 0.0 || w_prev > 1.0) throw GraphError("w_prev must lie in [0,1]");
    if (eta_prop < 0.0 || eta_prop > 1.0) throw GraphError("eta must lie in [0,1]");
    if (succ_uv_window < 0 || succ_v_window < 0 || succ_uv_window > succ_v_window) {
        throw GraphError("window counts require 0 <= succ_uv <= succ_v");
    }
    const double recent =
        succ_v_window == 0
            ? 0.0
            : static_cast<double>(succ_uv_window) / static_cast<double>(succ_v_window);
    return eta_prop * w_prev + (1.0 - eta_prop) * recent;
}

void propagate_weights(ToolGraph& g, const EvolutionConfig& cfg, double now) {
    cfg.validate();
    const double tau = static_cast<double>(cfg.tau_days);
    for (const auto& e : g.edges()) {
        const std::int64_t succ_uv = g.window_pair_successes(e.src, e.dst, now, tau);
        const auto counts = g.window_counts(e.dst, now, tau);
        const double w =
            propagate_edge_weight(e.w_stat, std::min(succ_uv, counts.succ), counts.succ,
                                  cfg.eta_prop);
        g.edge_mut(e.src, e.dst).w_stat = w;
    }
    g.bump_version();
}

}  // namespace twnm
