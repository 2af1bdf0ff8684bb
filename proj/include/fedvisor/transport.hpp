#pragma once

#include <optional>
#include <string>

#include "fedvisor/message.hpp"

namespace fedvisor {

// Inbound message as seen by the server loop. `disconnected` marks a client
// whose channel went away (networked mode); msg is meaningless then.
// frame_bytes is the encoded size of the frame that carried the message,
// for uplink accounting.
struct Envelope {
    std::string client_id;
    Message msg;
    std::size_t frame_bytes = 0;
    bool disconnected = false;
};

// Server side of a transport: addressed sends plus a polled inbox.
// poll() returning nullopt means nothing arrived within the timeout — for
// the in-process transport that simply means the queue ran dry.
class ServerTransport {
public:
    virtual ~ServerTransport() = default;
    virtual void send_to(const std::string& client_id, const Message& msg) = 0;
    virtual std::optional<Envelope> poll(double timeout_s) = 0;
};

// Client side: a single channel to the server.
class ClientTransport {
public:
    virtual ~ClientTransport() = default;
    virtual bool send(const Message& msg) = 0;
    virtual std::optional<Message> recv(double timeout_s) = 0;
    // Re-establish the channel after a send failure; default: cannot.
    virtual bool reconnect() { return false; }
};

// Waiting strategy for retry backoff: real sleeping in networked mode, pure
// accumulation under the simulated clock.
class Sleeper {
public:
    virtual ~Sleeper() = default;
    virtual void sleep_s(double seconds) = 0;
};

class SimSleeper : public Sleeper {
public:
    void sleep_s(double seconds) override { total_s_ += seconds; }
    double total_s() const { return total_s_; }

private:
    double total_s_ = 0.0;
};

}  // namespace fedvisor
