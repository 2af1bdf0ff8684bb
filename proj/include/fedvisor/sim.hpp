#pragma once

#include <deque>
#include <map>
#include <memory>
#include <set>

#include "fedvisor/session.hpp"
#include "fedvisor/transport.hpp"

namespace fedvisor {

// In-process transport: client sessions answer synchronously and their
// replies queue up for the server. Every message still goes through the full
// wire encode/decode path, so simulation exercises the same bytes the
// network would carry. Single-threaded and fully deterministic.
class SimTransport : public ServerTransport {
public:
    explicit SimTransport(const ParamCodec& codec = identity_codec()) : codec_(codec) {}

    void add_client(std::unique_ptr<ClientSession> session) {
        const std::string id = session->client_id();
        sessions_.emplace(id, std::move(session));
    }

    // Queue every client's JoinTask, in client-id order.
    void join_all() {
        for (auto& [id, session] : sessions_) enqueue(id, session->join_message());
    }

    void kill_client(const std::string& id) { dead_.insert(id); }

    ClientSession* session(const std::string& id) {
        auto it = sessions_.find(id);
        return it == sessions_.end() ? nullptr : it->second.get();
    }

    void send_to(const std::string& client_id, const Message& msg) override {
        auto it = sessions_.find(client_id);
        if (it == sessions_.end() || dead_.contains(client_id)) return;
        // server -> client hop over the wire format
        auto frame = encode_message(msg, codec_);
        auto decoded = decode_message(frame, kDefaultMaxFrame, codec_);
        if (!decoded.ok())
            throw TransportError(std::string("sim: undecodable server frame: ") +
                                 decode_status_name(decoded.status));
        for (Message& reply : it->second->handle(*decoded.message)) enqueue(client_id, reply);
    }

    std::optional<Envelope> poll(double) override {
        if (inbox_.empty()) return std::nullopt;
        Envelope env = std::move(inbox_.front());
        inbox_.pop_front();
        return env;
    }

private:
    void enqueue(const std::string& client_id, const Message& msg) {
        if (dead_.contains(client_id)) return;
        auto frame = encode_message(msg, codec_);
        auto decoded = decode_message(frame, kDefaultMaxFrame, codec_);
        if (!decoded.ok())
            throw TransportError(std::string("sim: undecodable client frame: ") +
                                 decode_status_name(decoded.status));
        Envelope env;
        env.client_id = client_id;
        env.msg = std::move(*decoded.message);
        env.frame_bytes = frame.size();
        inbox_.push_back(std::move(env));
    }

    const ParamCodec& codec_;
    std::map<std::string, std::unique_ptr<ClientSession>> sessions_;
    std::set<std::string> dead_;
    std::deque<Envelope> inbox_;
};

}  // namespace fedvisor
