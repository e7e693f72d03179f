#include "twnm/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "twnm/util.hpp"

namespace twnm {

namespace {

void fold(MetricsSlice& slice, const EpisodeRecord& rec, bool judged) {
    ++slice.total;
    if (rec.completed) ++slice.completed;
    if (judged) {
        ++slice.succeeded;
        const double steps = static_cast<double>(rec.llm_calls);
        slice.mean_steps = slice.mean_steps ? *slice.mean_steps + steps : steps;
    }
}

void finish(MetricsSlice& slice) {
    if (slice.total > 0) {
        slice.tcr = 100.0 * static_cast<double>(slice.completed) /
                    static_cast<double>(slice.total);
        slice.tsr = 100.0 * static_cast<double>(slice.succeeded) /
                    static_cast<double>(slice.total);
    }
    if (slice.mean_steps) {
        *slice.mean_steps /= static_cast<double>(slice.succeeded);
    }
}

}  // namespace

MetricsReport compute_metrics(const std::vector<EpisodeRecord>& records,
                              const std::vector<bool>& judgments) {
    if (records.empty()) throw GraphError("no episode records to score");
    if (records.size() != judgments.size()) {
        throw GraphError("one judgment per record required");
    }
    MetricsReport report;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const bool judged = judgments[i] && records[i].completed;
        fold(report.overall, records[i], judged);
        fold(report.by_difficulty[records[i].difficulty], records[i], judged);
    }
    finish(report.overall);
    for (auto& [_, slice] : report.by_difficulty) finish(slice);
    return report;
}

std::string render_table(const MetricsReport& report) {
    std::ostringstream out;
    char line[160];
    out << "bucket    total  TCR%    TSR%    Steps\n";
    auto row = [&](const std::string& name, const MetricsSlice& s) {
        std::snprintf(line, sizeof(line), "%-9s %5zu  %6.2f  %6.2f  %s\n", name.c_str(), s.total,
                      s.tcr, s.tsr,
                      s.mean_steps ? format_fixed6(*s.mean_steps).c_str() : "-");
        out << line;
    };
    row("all", report.overall);
    for (const auto& [diff, slice] : report.by_difficulty) {
        row(difficulty_name(diff), slice);
    }
    return out.str();
}

std::string render_kv(const MetricsReport& report) {
    std::ostringstream out;
    auto emit = [&out](const std::string& prefix, const MetricsSlice& s) {
        out << prefix << ".total=" << s.total << "\n";
        out << prefix << ".tcr=" << format_fixed6(s.tcr) << "\n";
        out << prefix << ".tsr=" << format_fixed6(s.tsr) << "\n";
        out << prefix << ".steps=" << (s.mean_steps ? format_fixed6(*s.mean_steps) : "absent")
            << "\n";
    };
    emit("all", report.overall);
    for (const auto& [diff, slice] : report.by_difficulty) {
        emit(difficulty_name(diff), slice);
    }
    return out.str();
}

void save_records(const std::vector<EpisodeRecord>& records, const std::vector<bool>& judgments,
                  const std::string& path) {
    if (records.size() != judgments.size()) {
        throw GraphError("one judgment per record required");
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw GraphError("cannot write " + path);
    f << "RECORDS v1\n";
    for (std::size_t i = 0; i < records.size(); ++i) {
        const EpisodeRecord& r = records[i];
        f << "EP " << (r.task_id.empty() ? "-" : r.task_id)
          << " difficulty=" << difficulty_name(r.difficulty)
          << " completed=" << (r.completed ? 1 : 0) << " judged=" << (judgments[i] ? 1 : 0)
          << " steps=" << r.llm_calls << "\n";
    }
}

std::pair<std::vector<EpisodeRecord>, std::vector<bool>> load_records(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw GraphError("cannot read " + path);
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(f, line) || trim(line) != "RECORDS v1") {
        throw ParseError(1, "expected 'RECORDS v1' header");
    }
    ++lineno;
    std::vector<EpisodeRecord> records;
    std::vector<bool> judgments;
    while (std::getline(f, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::istringstream ls(line);
        std::string tag, id, diff_tok, completed_tok, judged_tok, steps_tok;
        ls >> tag >> id >> diff_tok >> completed_tok >> judged_tok >> steps_tok;
        if (tag != "EP") throw ParseError(lineno, "expected EP record");
        EpisodeRecord rec;
        rec.task_id = id == "-" ? "" : id;
        auto field = [&lineno](const std::string& tok, const std::string& key) {
            if (tok.rfind(key + "=", 0) != 0) {
                throw ParseError(lineno, "expected " + key + "=");
            }
            return tok.substr(key.size() + 1);
        };
        rec.difficulty = difficulty_from(field(diff_tok, "difficulty"));
        rec.completed = field(completed_tok, "completed") == "1";
        rec.llm_calls = std::stoi(field(steps_tok, "steps"));
        records.push_back(std::move(rec));
        judgments.push_back(field(judged_tok, "judged") == "1");
    }
    return {std::move(records), std::move(judgments)};
}

}  // namespace twnm
