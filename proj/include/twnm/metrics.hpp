#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "twnm/agent.hpp"

namespace twnm {

struct MetricsSlice {
    std::size_t total = 0;
    std::size_t completed = 0;
    std::size_t succeeded = 0;
    double tcr = 0.0;
    double tsr = 0.0;
    std::optional<double> mean_steps;  // absent when nothing succeeded
};

struct MetricsReport {
    MetricsSlice overall;
    std::map<Difficulty, MetricsSlice> by_difficulty;
};

// TCR = completed/total, TSR = judged-success/total (percent); Steps is the
// mean policy-invocation count over judged-successful episodes only.
// `judgments` aligns with `records`; incomplete episodes are never judged
// successful.
MetricsReport compute_metrics(const std::vector<EpisodeRecord>& records,
                              const std::vector<bool>& judgments);

std::string render_table(const MetricsReport& report);
std::string render_kv(const MetricsReport& report);

// Per-episode line format for the records file the CLI exchanges.
void save_records(const std::vector<EpisodeRecord>& records, const std::vector<bool>& judgments,
                  const std::string& path);
std::pair<std::vector<EpisodeRecord>, std::vector<bool>> load_records(const std::string& path);

}  // namespace twnm
