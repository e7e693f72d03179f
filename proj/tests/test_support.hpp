#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "twnm/graph.hpp"
#include "twnm/rng.hpp"
#include "twnm/scoring.hpp"

namespace twnm::testing {

inline std::string temp_path(const std::string& tag) {
    static int counter = 0;
    return "/tmp/twnm_test_" + tag + "_" + std::to_string(++counter) + "_" +
           std::to_string(::getpid()) + ".txt";
}

// Always-merge / never-merge providers for clustering fixtures.
struct ConstantSimilarity final : SimilarityProvider {
    double value;
    explicit ConstantSimilarity(double v) : value(v) {}
    double similarity(const ParamSpec&, const ParamSpec&) const override { return value; }
};

struct ExactNameSimilarity final : SimilarityProvider {
    double similarity(const ParamSpec& a, const ParamSpec& b) const override {
        return (a.name == b.name && a.description == b.description) ? 1.0 : 0.0;
    }
};

inline ApiSpec make_api(const std::string& id, const std::string& desc,
                        std::vector<ParamSpec> inputs, std::vector<ParamSpec> outputs) {
    ApiSpec spec;
    spec.id = id;
    spec.name = id;
    spec.description = desc;
    spec.inputs = std::move(inputs);
    spec.outputs = std::move(outputs);
    return spec;
}

// Random graph with API and parameter nodes, structural and behavioral
// edges, 6-decimal weights, and a little invocation history. Node counts and
// densities are kept small enough for the exhaustive oracle.
inline ToolGraph random_graph(Rng& rng, std::size_t napis, std::size_t nparams,
                              double edge_prob) {
    std::vector<ApiSpec> specs;
    for (std::size_t i = 0; i < napis; ++i) {
        char id[16];
        std::snprintf(id, sizeof(id), "a%02zu", i);
        specs.push_back(make_api(id, std::string("service ") + id, {}, {}));
    }
    ExactNameSimilarity sim;
    ToolGraph g = build_graph(specs, sim, 1.0);

    for (std::size_t i = 0; i < nparams; ++i) {
        char id[16];
        std::snprintf(id, sizeof(id), "p%02zu", i);
        ParamNode p;
        p.id = id;
        p.canonical_name = id;
        const std::string api = "a" + std::string(rng.next_index(napis) < 10 ? "0" : "") +
                                std::to_string(rng.next_index(napis));
        p.members.push_back(MemberParam{api, std::string(id) + "_raw", "value of " + std::string(id)});
        g.add_param(std::move(p));
    }

    auto maybe_weight = [&rng]() {
        return static_cast<double>(rng.next_index(1000001)) / 1e6;
    };
    // Structural edges in both directions, behavioral api->api edges.
    for (std::size_t pi = 0; pi < nparams; ++pi) {
        char pid[16];
        std::snprintf(pid, sizeof(pid), "p%02zu", pi);
        for (std::size_t ai = 0; ai < napis; ++ai) {
            char aid[16];
            std::snprintf(aid, sizeof(aid), "a%02zu", ai);
            if (rng.next_double() < edge_prob && !g.has_edge(pid, aid)) {
                g.add_edge(pid, aid, EdgeKind::Structural);
            }
            if (rng.next_double() < edge_prob && !g.has_edge(aid, pid)) {
                g.add_edge(aid, pid, EdgeKind::Structural);
            }
        }
    }
    for (std::size_t i = 0; i < napis; ++i) {
        for (std::size_t j = 0; j < napis; ++j) {
            if (i == j) continue;
            char a[16], b[16];
            std::snprintf(a, sizeof(a), "a%02zu", i);
            std::snprintf(b, sizeof(b), "a%02zu", j);
            if (rng.next_double() < edge_prob / 2 && !g.has_edge(a, b)) {
                g.add_edge(a, b, EdgeKind::Behavioral);
            }
        }
    }
    for (const auto& e : g.edges()) {
        g.edge_mut(e.src, e.dst).w_stat = maybe_weight();
        g.edge_mut(e.src, e.dst).w_search = maybe_weight();
    }
    // Sprinkle invocation history.
    for (std::size_t i = 0; i < napis; ++i) {
        char aid[16];
        std::snprintf(aid, sizeof(aid), "a%02zu", i);
        const std::size_t calls = rng.next_index(4);
        for (std::size_t c = 0; c < calls; ++c) {
            g.record_invocation(std::nullopt, aid, rng.next_bool(),
                                static_cast<double>(rng.next_index(30)));
        }
    }
    g.set_version(1);
    return g;
}

}  // namespace twnm::testing
