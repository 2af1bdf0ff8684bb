#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fedvisor/common.hpp"

namespace fedvisor {

// Explorer output for one client: loads normalized to [0,1], bandwidth in
// MB/s, plus the quality signal derived from the last local training loss.
struct ClientResourceReport {
    std::string client_id;
    double cpu_load = 0.0;
    double mem_load = 0.0;
    double bandwidth_mbps = 0.0;
    double last_round_quality = 0.0;
};

struct ScheduleDecision {
    std::uint32_t round = 0;
    std::vector<std::string> selected;
    std::map<std::string, double> scores;
    std::vector<std::pair<std::string, std::string>> skipped;  // id, reason
};

// Linear quality-minus-load score: alpha * quality - beta * max(cpu, mem).
inline std::map<std::string, double> score_clients(std::span<const ClientResourceReport> reports,
                                                   double alpha, double beta) {
    if (alpha < 0.0 || beta < 0.0) throw ConfigError("score_clients: weights must be >= 0");
    std::map<std::string, double> scores;
    for (const auto& r : reports)
        scores[r.client_id] =
            alpha * r.last_round_quality - beta * std::max(r.cpu_load, r.mem_load);
    return scores;
}

// Top-cap clients by score, ties to the lower client id.
inline ScheduleDecision schedule_round(const std::map<std::string, double>& scores,
                                       std::size_t cap, std::size_t min_quorum) {
    if (cap == 0) throw ConfigError("schedule_round: cap must be >= 1");
    if (scores.size() < min_quorum)
        throw QuorumNotMet("schedule_round: " + std::to_string(scores.size()) +
                           " clients available, quorum is " + std::to_string(min_quorum));

    std::vector<std::pair<std::string, double>> ranked(scores.begin(), scores.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    ScheduleDecision decision;
    decision.scores = scores;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (i < cap)
            decision.selected.push_back(ranked[i].first);
        else
            decision.skipped.push_back({ranked[i].first, "over participation cap"});
    }
    std::sort(decision.selected.begin(), decision.selected.end());
    return decision;
}

// Linear bandwidth model anchored on the reported upload times:
// t = bytes / (bandwidth * 2^20) + fixed_overhead.
inline double simulate_upload_time(std::uint64_t bytes, double bandwidth_mbps,
                                   double fixed_overhead_s) {
    if (bandwidth_mbps <= 0.0)
        throw ConfigError("simulate_upload_time: bandwidth must be positive");
    return static_cast<double>(bytes) / (bandwidth_mbps * 1048576.0) + fixed_overhead_s;
}

// Min-max normalization of negated local losses into [0,1]; used by the
// server to turn reported final losses into per-round quality signals.
// All-equal losses map to 0.5.
inline std::map<std::string, double> normalize_quality(
    const std::map<std::string, double>& final_losses) {
    std::map<std::string, double> quality;
    if (final_losses.empty()) return quality;
    double lo = final_losses.begin()->second, hi = lo;
    for (const auto& [_, v] : final_losses) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (const auto& [id, v] : final_losses)
        quality[id] = (hi == lo) ? 0.5 : (hi - v) / (hi - lo);
    return quality;
}

}  // namespace fedvisor
