#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fedvisor/codec.hpp"
#include "fedvisor/serialize.hpp"

namespace fedvisor {

// Wire vocabulary for one federated task. See PROTOCOL.md for the byte-level
// layout with worked examples.

struct JoinTask {
    bool operator==(const JoinTask&) const = default;
};

struct TaskConfigMsg {
    std::string config_json;
    bool operator==(const TaskConfigMsg&) const = default;
};

struct DispatchModel {
    std::uint32_t round = 0;
    ModelParams params;
    bool operator==(const DispatchModel&) const = default;
};

struct ResourceReportMsg {
    double cpu_load = 0.0;
    double mem_load = 0.0;
    double bandwidth_mbps = 0.0;
    double last_round_quality = 0.0;
    bool operator==(const ResourceReportMsg&) const = default;
};

struct StartLocalTraining {
    std::uint32_t round = 0;
    bool operator==(const StartLocalTraining&) const = default;
};

struct LocalMetrics {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    bool operator==(const LocalMetrics&) const = default;
};

struct UploadUpdate {
    std::uint32_t round = 0;
    CompressedUpdate update;
    LocalMetrics metrics;
    bool operator==(const UploadUpdate&) const = default;
};

struct AggregationDone {
    std::uint32_t round = 0;
    std::uint32_t model_version = 0;
    bool operator==(const AggregationDone&) const = default;
};

struct ErrorMsg {
    std::uint32_t code = 0;
    std::string text;
    bool operator==(const ErrorMsg&) const = default;
};

using MessageBody = std::variant<JoinTask, TaskConfigMsg, DispatchModel, ResourceReportMsg,
                                 StartLocalTraining, UploadUpdate, AggregationDone, ErrorMsg>;

struct Message {
    std::string task_id;
    std::string sender_id;
    MessageBody body;

    bool operator==(const Message&) const = default;
};

enum class DecodeStatus {
    Ok,
    BadMagic,
    TruncatedFrame,
    UnknownVariantTag,
    LengthOverflow,
    Malformed,
};

inline const char* decode_status_name(DecodeStatus s) {
    switch (s) {
        case DecodeStatus::Ok: return "Ok";
        case DecodeStatus::BadMagic: return "BadMagic";
        case DecodeStatus::TruncatedFrame: return "TruncatedFrame";
        case DecodeStatus::UnknownVariantTag: return "UnknownVariantTag";
        case DecodeStatus::LengthOverflow: return "LengthOverflow";
        case DecodeStatus::Malformed: return "Malformed";
    }
    return "?";
}

struct DecodeResult {
    DecodeStatus status = DecodeStatus::Malformed;
    std::optional<Message> message;

    bool ok() const { return status == DecodeStatus::Ok; }
};

inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kFrameHeaderSize = 8;  // magic + u32 length
inline constexpr std::size_t kDefaultMaxFrame = 64ull << 20;
inline constexpr char kFrameMagic[4] = {'F', 'D', 'V', '1'};

namespace wire {

// field tags
inline constexpr std::uint8_t kTaskId = 1;
inline constexpr std::uint8_t kSenderId = 2;
inline constexpr std::uint8_t kRound = 10;
inline constexpr std::uint8_t kParams = 11;
inline constexpr std::uint8_t kConfigJson = 12;
inline constexpr std::uint8_t kReport = 13;
inline constexpr std::uint8_t kUpdate = 14;
inline constexpr std::uint8_t kMetrics = 15;
inline constexpr std::uint8_t kVersion = 16;
inline constexpr std::uint8_t kCode = 17;
inline constexpr std::uint8_t kText = 18;

inline void field_bytes(ByteWriter& w, std::uint8_t tag, std::span<const std::uint8_t> value) {
    w.u8(tag);
    w.u32(static_cast<std::uint32_t>(value.size()));
    w.bytes(value);
}

inline void field_str(ByteWriter& w, std::uint8_t tag, const std::string& s) {
    w.u8(tag);
    w.u32(static_cast<std::uint32_t>(s.size()));
    w.bytes({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

inline void field_u32(ByteWriter& w, std::uint8_t tag, std::uint32_t v) {
    ByteWriter tmp;
    tmp.u32(v);
    field_bytes(w, tag, tmp.buffer());
}

}  // namespace wire

// Deterministic encoding: version byte, variant tag, then fields in
// ascending tag order, each field length-prefixed. Model parameter payloads
// (DispatchModel params, UploadUpdate update) pass through the codec.
inline std::vector<std::uint8_t> encode_message(const Message& msg,
                                                const ParamCodec& codec = identity_codec()) {
    ByteWriter payload;
    payload.u8(kProtocolVersion);
    payload.u8(static_cast<std::uint8_t>(msg.body.index() + 1));
    wire::field_str(payload, wire::kTaskId, msg.task_id);
    wire::field_str(payload, wire::kSenderId, msg.sender_id);

    std::visit(
        [&](const auto& body) {
            using T = std::decay_t<decltype(body)>;
            if constexpr (std::is_same_v<T, JoinTask>) {
                // no extra fields
            } else if constexpr (std::is_same_v<T, TaskConfigMsg>) {
                wire::field_str(payload, wire::kConfigJson, body.config_json);
            } else if constexpr (std::is_same_v<T, DispatchModel>) {
                wire::field_u32(payload, wire::kRound, body.round);
                wire::field_bytes(payload, wire::kParams,
                                  codec.encode(serialize_params(body.params)));
            } else if constexpr (std::is_same_v<T, ResourceReportMsg>) {
                ByteWriter rep;
                rep.f64(body.cpu_load);
                rep.f64(body.mem_load);
                rep.f64(body.bandwidth_mbps);
                rep.f64(body.last_round_quality);
                wire::field_bytes(payload, wire::kReport, rep.buffer());
            } else if constexpr (std::is_same_v<T, StartLocalTraining>) {
                wire::field_u32(payload, wire::kRound, body.round);
            } else if constexpr (std::is_same_v<T, UploadUpdate>) {
                wire::field_u32(payload, wire::kRound, body.round);
                wire::field_bytes(payload, wire::kUpdate,
                                  codec.encode(serialize_update(body.update)));
                ByteWriter met;
                met.f64(body.metrics.initial_loss);
                met.f64(body.metrics.final_loss);
                wire::field_bytes(payload, wire::kMetrics, met.buffer());
            } else if constexpr (std::is_same_v<T, AggregationDone>) {
                wire::field_u32(payload, wire::kRound, body.round);
                wire::field_u32(payload, wire::kVersion, body.model_version);
            } else if constexpr (std::is_same_v<T, ErrorMsg>) {
                wire::field_u32(payload, wire::kCode, body.code);
                wire::field_str(payload, wire::kText, body.text);
            }
        },
        msg.body);

    ByteWriter frame;
    frame.bytes({reinterpret_cast<const std::uint8_t*>(kFrameMagic), 4});
    frame.u32(static_cast<std::uint32_t>(payload.buffer().size()));
    frame.bytes(payload.buffer());
    return std::move(frame.buffer());
}

namespace wire {

struct FieldMap {
    // tag -> raw value bytes; duplicate tags keep the last occurrence
    std::optional<std::span<const std::uint8_t>> fields[32];

    std::optional<std::span<const std::uint8_t>> get(std::uint8_t tag) const {
        return tag < 32 ? fields[tag] : std::nullopt;
    }
};

inline std::optional<std::string> get_str(const FieldMap& m, std::uint8_t tag) {
    auto f = m.get(tag);
    if (!f) return std::nullopt;
    return std::string(reinterpret_cast<const char*>(f->data()), f->size());
}

inline std::optional<std::uint32_t> get_u32(const FieldMap& m, std::uint8_t tag) {
    auto f = m.get(tag);
    if (!f || f->size() != 4) return std::nullopt;
    ByteReader r(*f);
    return r.u32();
}

}  // namespace wire

// Total decoder: never throws, never reads out of bounds. `data` must hold
// exactly one frame. The codec must match the encoder's.
inline DecodeResult decode_message(std::span<const std::uint8_t> data,
                                   std::size_t max_frame = kDefaultMaxFrame,
                                   const ParamCodec& codec = identity_codec()) {
    if (data.size() < kFrameHeaderSize) return {DecodeStatus::TruncatedFrame, std::nullopt};
    if (std::memcmp(data.data(), kFrameMagic, 4) != 0)
        return {DecodeStatus::BadMagic, std::nullopt};
    ByteReader hdr(data.subspan(4, 4));
    const std::uint32_t declared = hdr.u32();
    if (declared > max_frame) return {DecodeStatus::LengthOverflow, std::nullopt};
    if (data.size() < kFrameHeaderSize + declared)
        return {DecodeStatus::TruncatedFrame, std::nullopt};
    if (data.size() > kFrameHeaderSize + declared) return {DecodeStatus::Malformed, std::nullopt};

    std::span<const std::uint8_t> payload = data.subspan(kFrameHeaderSize, declared);
    ByteReader r(payload);
    const std::uint8_t version = r.u8();
    const std::uint8_t variant = r.u8();
    if (!r.ok()) return {DecodeStatus::TruncatedFrame, std::nullopt};
    if (version != kProtocolVersion) return {DecodeStatus::Malformed, std::nullopt};
    if (variant < 1 || variant > 8) return {DecodeStatus::UnknownVariantTag, std::nullopt};

    wire::FieldMap fields;
    while (r.remaining() > 0) {
        std::uint8_t tag = r.u8();
        std::uint32_t len = r.u32();
        if (!r.ok()) return {DecodeStatus::TruncatedFrame, std::nullopt};
        if (len > r.remaining()) return {DecodeStatus::TruncatedFrame, std::nullopt};
        auto value = r.raw(len);
        if (tag < 32) fields.fields[tag] = value;  // unknown tags are skipped
    }

    Message msg;
    auto task_id = wire::get_str(fields, wire::kTaskId);
    auto sender_id = wire::get_str(fields, wire::kSenderId);
    if (!task_id || !sender_id) return {DecodeStatus::Malformed, std::nullopt};
    msg.task_id = *task_id;
    msg.sender_id = *sender_id;

    switch (variant) {
        case 1: {
            msg.body = JoinTask{};
            break;
        }
        case 2: {
            auto cfg = wire::get_str(fields, wire::kConfigJson);
            if (!cfg) return {DecodeStatus::Malformed, std::nullopt};
            msg.body = TaskConfigMsg{std::move(*cfg)};
            break;
        }
        case 3: {
            auto round = wire::get_u32(fields, wire::kRound);
            auto blob = fields.get(wire::kParams);
            if (!round || !blob) return {DecodeStatus::Malformed, std::nullopt};
            std::vector<std::uint8_t> plain;
            try {
                plain = codec.decode(std::vector<std::uint8_t>(blob->begin(), blob->end()));
            } catch (...) {
                return {DecodeStatus::Malformed, std::nullopt};
            }
            auto params = deserialize_params(plain);
            if (!params) return {DecodeStatus::Malformed, std::nullopt};
            msg.body = DispatchModel{*round, std::move(*params)};
            break;
        }
        case 4: {
            auto blob = fields.get(wire::kReport);
            if (!blob || blob->size() != 32) return {DecodeStatus::Malformed, std::nullopt};
            ByteReader rep(*blob);
            ResourceReportMsg body;
            body.cpu_load = rep.f64();
            body.mem_load = rep.f64();
            body.bandwidth_mbps = rep.f64();
            body.last_round_quality = rep.f64();
            msg.body = body;
            break;
        }
        case 5: {
            auto round = wire::get_u32(fields, wire::kRound);
            if (!round) return {DecodeStatus::Malformed, std::nullopt};
            msg.body = StartLocalTraining{*round};
            break;
        }
        case 6: {
            auto round = wire::get_u32(fields, wire::kRound);
            auto blob = fields.get(wire::kUpdate);
            auto met = fields.get(wire::kMetrics);
            if (!round || !blob || !met || met->size() != 16)
                return {DecodeStatus::Malformed, std::nullopt};
            std::vector<std::uint8_t> plain;
            try {
                plain = codec.decode(std::vector<std::uint8_t>(blob->begin(), blob->end()));
            } catch (...) {
                return {DecodeStatus::Malformed, std::nullopt};
            }
            auto update = deserialize_update(plain);
            if (!update) return {DecodeStatus::Malformed, std::nullopt};
            ByteReader mr(*met);
            UploadUpdate body;
            body.round = *round;
            body.update = std::move(*update);
            body.metrics.initial_loss = mr.f64();
            body.metrics.final_loss = mr.f64();
            msg.body = std::move(body);
            break;
        }
        case 7: {
            auto round = wire::get_u32(fields, wire::kRound);
            auto ver = wire::get_u32(fields, wire::kVersion);
            if (!round || !ver) return {DecodeStatus::Malformed, std::nullopt};
            msg.body = AggregationDone{*round, *ver};
            break;
        }
        case 8: {
            auto code = wire::get_u32(fields, wire::kCode);
            auto text = wire::get_str(fields, wire::kText);
            if (!code || !text) return {DecodeStatus::Malformed, std::nullopt};
            msg.body = ErrorMsg{*code, std::move(*text)};
            break;
        }
    }
    return {DecodeStatus::Ok, std::move(msg)};
}

}  // namespace fedvisor
