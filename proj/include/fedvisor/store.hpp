#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedvisor/digest.hpp"
#include "fedvisor/serialize.hpp"

namespace fedvisor {

struct ModelVersionRecord {
    std::string task_id;
    std::uint32_t version = 0;
    std::uint32_t round = 0;
    std::string digest_hex;
    std::uint64_t bytes = 0;
    std::int64_t created_at_unix_ms = 0;

    bool operator==(const ModelVersionRecord&) const = default;
};

// Versioned parameter persistence on the filesystem, content-addressed:
//   <root>/<task_id>/manifest.jsonl   one JSON object per version
//   <root>/<task_id>/objects/<digest> raw parameter payload
// Every load re-hashes the payload and verifies it against the manifest.
class ModelStore {
public:
    explicit ModelStore(std::filesystem::path root) : root_(std::move(root)) {
        std::filesystem::create_directories(root_);
    }

    const std::filesystem::path& root() const { return root_; }

    ModelVersionRecord put(const std::string& task_id, std::uint32_t round,
                           const ModelParams& params) {
        auto payload = serialize_params(params);
        return put_payload(task_id, round, payload);
    }

    ModelVersionRecord put_payload(const std::string& task_id, std::uint32_t round,
                                   const std::vector<std::uint8_t>& payload) {
        ModelVersionRecord rec;
        rec.task_id = task_id;
        rec.round = round;
        rec.digest_hex = digest_hex(sha256(payload));
        rec.bytes = payload.size();
        rec.created_at_unix_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                     std::chrono::system_clock::now().time_since_epoch())
                                     .count();

        auto records = manifest(task_id);
        rec.version = records.empty() ? 1 : records.back().version + 1;

        auto dir = root_ / task_id;
        std::filesystem::create_directories(dir / "objects");
        auto object_path = dir / "objects" / rec.digest_hex;
        if (!std::filesystem::exists(object_path)) {
            auto tmp = object_path;
            tmp += ".tmp";
            {
                std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
                if (!out) throw StoreError("store: cannot write " + tmp.string());
                out.write(reinterpret_cast<const char*>(payload.data()),
                          static_cast<std::streamsize>(payload.size()));
                if (!out) throw StoreError("store: write failed " + tmp.string());
            }
            std::filesystem::rename(tmp, object_path);
        }

        nlohmann::json line = {{"task_id", rec.task_id},
                               {"version", rec.version},
                               {"round", rec.round},
                               {"digest_hex", rec.digest_hex},
                               {"bytes", rec.bytes},
                               {"created_at_unix_ms", rec.created_at_unix_ms}};
        std::ofstream out(dir / "manifest.jsonl", std::ios::app);
        if (!out) throw StoreError("store: cannot append manifest for " + task_id);
        out << line.dump() << "\n";
        out.flush();
        if (!out) throw StoreError("store: manifest append failed for " + task_id);
        return rec;
    }

    std::vector<ModelVersionRecord> manifest(const std::string& task_id) const {
        std::vector<ModelVersionRecord> records;
        std::ifstream in(root_ / task_id / "manifest.jsonl");
        if (!in) return records;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded())
                throw StoreError("store: corrupt manifest line " + std::to_string(lineno) +
                                 " for task " + task_id);
            ModelVersionRecord rec;
            rec.task_id = j.at("task_id").get<std::string>();
            rec.version = j.at("version").get<std::uint32_t>();
            rec.round = j.at("round").get<std::uint32_t>();
            rec.digest_hex = j.at("digest_hex").get<std::string>();
            rec.bytes = j.at("bytes").get<std::uint64_t>();
            rec.created_at_unix_ms = j.at("created_at_unix_ms").get<std::int64_t>();
            records.push_back(std::move(rec));
        }
        return records;
    }

    ModelVersionRecord record(const std::string& task_id, std::uint32_t version) const {
        for (const auto& rec : manifest(task_id))
            if (rec.version == version) return rec;
        throw StoreError("store: task " + task_id + " has no version " +
                         std::to_string(version));
    }

    std::vector<std::uint8_t> get_payload(const std::string& task_id,
                                          std::uint32_t version) const {
        ModelVersionRecord rec = record(task_id, version);
        auto path = root_ / task_id / "objects" / rec.digest_hex;
        std::ifstream in(path, std::ios::binary);
        if (!in) throw StoreError("store: missing object " + path.string());
        std::vector<std::uint8_t> payload((std::istreambuf_iterator<char>(in)),
                                          std::istreambuf_iterator<char>());
        if (digest_hex(sha256(payload)) != rec.digest_hex)
            throw StoreError("store: digest mismatch for task " + task_id + " version " +
                             std::to_string(version));
        return payload;
    }

    ModelParams get(const std::string& task_id, std::uint32_t version) const {
        auto payload = get_payload(task_id, version);
        auto params = deserialize_params(payload);
        if (!params)
            throw StoreError("store: undecodable payload for task " + task_id + " version " +
                             std::to_string(version));
        return std::move(*params);
    }

    ModelVersionRecord latest(const std::string& task_id) const {
        auto records = manifest(task_id);
        if (records.empty()) throw StoreError("store: task " + task_id + " has no versions");
        return records.back();
    }

private:
    std::filesystem::path root_;
};

}  // namespace fedvisor
