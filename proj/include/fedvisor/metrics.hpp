#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "fedvisor/server.hpp"

namespace fedvisor {

namespace detail {

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

inline std::string join(const std::vector<std::string>& items, char sep = ';') {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out.push_back(sep);
        out += items[i];
    }
    return out;
}

}  // namespace detail

// Column order is fixed; client_losses holds `id:loss` pairs aligned with
// the same order as `selected`.
inline std::string metrics_to_csv(const TaskReport& report) {
    std::string out =
        "round,global_loss,client_losses,selected,uplink_bytes,simulated_upload_s,stragglers,"
        "failed,version\n";
    for (const RoundMetrics& m : report.rounds) {
        std::vector<std::string> losses;
        for (const auto& [id, loss] : m.client_losses)
            losses.push_back(id + ":" + detail::fmt_double(loss));
        out += std::to_string(m.round);
        out += ",";
        out += detail::fmt_double(m.global_loss);
        out += ",";
        out += detail::join(losses);
        out += ",";
        out += detail::join(m.selected);
        out += ",";
        out += std::to_string(m.uplink_bytes);
        out += ",";
        out += detail::fmt_double(m.sim_upload_s);
        out += ",";
        out += detail::join(m.stragglers);
        out += ",";
        out += m.failed ? "1" : "0";
        out += ",";
        out += std::to_string(m.version);
        out += "\n";
    }
    return out;
}

inline nlohmann::json metrics_to_json(const TaskReport& report) {
    nlohmann::json rounds = nlohmann::json::array();
    for (const RoundMetrics& m : report.rounds) {
        rounds.push_back({{"round", m.round},
                          {"global_loss", m.global_loss},
                          {"client_losses", m.client_losses},
                          {"selected", m.selected},
                          {"uplink_bytes", m.uplink_bytes},
                          {"simulated_upload_s", m.sim_upload_s},
                          {"stragglers", m.stragglers},
                          {"failed", m.failed},
                          {"version", m.version}});
    }
    return {{"success", report.success},
            {"error", report.error},
            {"final_version", report.final_version},
            {"final_digest_hex", report.final_digest_hex},
            {"rounds", rounds}};
}

inline nlohmann::json schedule_to_json(const ScheduleDecision& d) {
    nlohmann::json skipped = nlohmann::json::array();
    for (const auto& [id, reason] : d.skipped) skipped.push_back({{"id", id}, {"reason", reason}});
    return {{"round", d.round}, {"selected", d.selected}, {"scores", d.scores},
            {"skipped", skipped}};
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw StoreError("cannot write " + path.string());
    out << text;
}

// metrics.csv, metrics.json, schedule.jsonl and the config snapshot that
// makes the run reproducible from artifacts alone.
inline void write_run_artifacts(const std::filesystem::path& out_dir, const TaskConfig& config,
                                const TaskReport& report) {
    std::filesystem::create_directories(out_dir);
    write_text_file(out_dir / "metrics.csv", metrics_to_csv(report));
    write_text_file(out_dir / "metrics.json", metrics_to_json(report).dump(2) + "\n");
    std::string schedule;
    for (const auto& d : report.schedule_log) schedule += schedule_to_json(d).dump() + "\n";
    write_text_file(out_dir / "schedule.jsonl", schedule);
    write_text_file(out_dir / "config.snapshot.json",
                    task_config_to_json(config).dump(2) + "\n");
}

}  // namespace fedvisor
