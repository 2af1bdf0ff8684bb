#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedvisor/arch.hpp"
#include "fedvisor/client.hpp"

namespace fedvisor {

// Training task description; the task config file is this structure as JSON,
// field for field.
struct TaskConfig {
    std::string task_id;
    ArchConfig arch;
    std::uint32_t rounds = 1;        // number of iterations
    std::uint32_t local_epochs = 1;
    double lr = 0.1;
    std::size_t batch_size = 0;      // 0 = full batch
    std::size_t clients_per_round = 0;  // 0 = no cap (all joined)
    std::optional<std::size_t> compression_n;  // nullopt = ALL layers
    double deadline_s = 600.0;
    std::size_t quorum = 1;
    std::string server_url = "127.0.0.1:7710";
    std::uint32_t reconnect_limit = 3;
    std::uint64_t seed = 1;
    std::size_t num_clients = 1;     // federation size the server waits for
    double sched_alpha = 1.0;
    double sched_beta = 1.0;
    double upload_overhead_s = 0.0;

    std::size_t layer_count() const { return arch.hidden_sizes.size() + 1; }

    // compression resolved against the actual layer count; ALL == L
    std::size_t resolved_compression_n() const {
        return compression_n ? std::min(*compression_n, layer_count()) : layer_count();
    }

    void validate() const {
        arch.validate();
        if (task_id.empty()) throw ConfigError("task config: task_id required");
        if (rounds < 1) throw ConfigError("task config: rounds must be >= 1");
        if (local_epochs < 1) throw ConfigError("task config: local_epochs must be >= 1");
        if (quorum < 1) throw ConfigError("task config: quorum must be >= 1");
        if (num_clients < quorum)
            throw ConfigError("task config: num_clients below quorum");
        if (compression_n && (*compression_n < 1 || *compression_n > layer_count()))
            throw ConfigError("task config: compression_n must be in 1.." +
                              std::to_string(layer_count()) + " or \"all\"");
        if (deadline_s <= 0.0) throw ConfigError("task config: deadline_s must be positive");
        if (lr < 0.0) throw ConfigError("task config: lr must be >= 0");
    }
};

inline nlohmann::json arch_to_json(const ArchConfig& a) {
    return {{"input_side", a.input_side},     {"hidden_sizes", a.hidden_sizes},
            {"grid_side", a.grid_side},       {"boxes_per_cell", a.boxes_per_cell},
            {"num_classes", a.num_classes},   {"lambda_coord", a.lambda_coord},
            {"lambda_noobj", a.lambda_noobj}};
}

inline ArchConfig arch_from_json(const nlohmann::json& j) {
    ArchConfig a;
    a.input_side = j.at("input_side").get<std::size_t>();
    a.hidden_sizes = j.at("hidden_sizes").get<std::vector<std::size_t>>();
    a.grid_side = j.at("grid_side").get<std::size_t>();
    a.boxes_per_cell = j.at("boxes_per_cell").get<std::size_t>();
    a.num_classes = j.at("num_classes").get<std::size_t>();
    a.lambda_coord = j.value("lambda_coord", 5.0);
    a.lambda_noobj = j.value("lambda_noobj", 0.5);
    return a;
}

inline nlohmann::json task_config_to_json(const TaskConfig& c) {
    nlohmann::json j = {{"task_id", c.task_id},
                        {"arch", arch_to_json(c.arch)},
                        {"rounds", c.rounds},
                        {"local_epochs", c.local_epochs},
                        {"lr", c.lr},
                        {"batch_size", c.batch_size},
                        {"clients_per_round", c.clients_per_round},
                        {"deadline_s", c.deadline_s},
                        {"quorum", c.quorum},
                        {"server_url", c.server_url},
                        {"reconnect_limit", c.reconnect_limit},
                        {"seed", c.seed},
                        {"num_clients", c.num_clients},
                        {"sched_alpha", c.sched_alpha},
                        {"sched_beta", c.sched_beta},
                        {"upload_overhead_s", c.upload_overhead_s}};
    if (c.compression_n)
        j["compression_n"] = *c.compression_n;
    else
        j["compression_n"] = "all";
    return j;
}

inline TaskConfig task_config_from_json(const nlohmann::json& j) {
    TaskConfig c;
    try {
        c.task_id = j.at("task_id").get<std::string>();
        c.arch = arch_from_json(j.at("arch"));
        c.rounds = j.at("rounds").get<std::uint32_t>();
        c.local_epochs = j.value("local_epochs", 1u);
        c.lr = j.at("lr").get<double>();
        c.batch_size = j.value("batch_size", std::size_t{0});
        c.clients_per_round = j.value("clients_per_round", std::size_t{0});
        if (j.contains("compression_n") && !j.at("compression_n").is_string())
            c.compression_n = j.at("compression_n").get<std::size_t>();
        c.deadline_s = j.value("deadline_s", 600.0);
        c.quorum = j.value("quorum", std::size_t{1});
        c.server_url = j.value("server_url", std::string("127.0.0.1:7710"));
        c.reconnect_limit = j.value("reconnect_limit", 3u);
        c.seed = j.value("seed", std::uint64_t{1});
        c.num_clients = j.value("num_clients", std::size_t{1});
        c.sched_alpha = j.value("sched_alpha", 1.0);
        c.sched_beta = j.value("sched_beta", 1.0);
        c.upload_overhead_s = j.value("upload_overhead_s", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("task config: ") + e.what());
    }
    c.validate();
    return c;
}

inline TaskConfig parse_task_config(const std::string& text) {
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("task config: invalid JSON");
    return task_config_from_json(j);
}

// Per-client process configuration (networked mode).
struct ClientConfig {
    std::string client_id;
    std::string server_addr;
    std::string shard_dir;
    std::uint32_t reconnect_limit = 3;
    std::vector<ScriptedProbe::Entry> trace;  // empty = live probe
};

inline ClientConfig parse_client_config(const std::string& text) {
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("client config: invalid JSON");
    ClientConfig c;
    try {
        c.client_id = j.at("client_id").get<std::string>();
        c.server_addr = j.at("server_addr").get<std::string>();
        c.shard_dir = j.at("shard_dir").get<std::string>();
        c.reconnect_limit = j.value("reconnect_limit", 3u);
        if (j.contains("trace")) {
            for (const auto& row : j.at("trace")) {
                ScriptedProbe::Entry e;
                e.cpu = row.at(0).get<double>();
                e.mem = row.at(1).get<double>();
                e.bandwidth_mbps = row.at(2).get<double>();
                c.trace.push_back(e);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("client config: ") + e.what());
    }
    if (c.client_id.empty()) throw ConfigError("client config: client_id required");
    return c;
}

}  // namespace fedvisor
