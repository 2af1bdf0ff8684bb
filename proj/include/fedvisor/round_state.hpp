#pragma once

#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "fedvisor/serialize.hpp"

namespace fedvisor {

// Per-round server state machine:
//   Dispatching -> Training -> Collecting -> Aggregating -> Done
// Uploads may only come from expected clients; whatever arrived by the
// deadline is aggregated and the rest are recorded as stragglers.

enum class RoundPhase { Dispatching, Training, Collecting, Aggregating, Done };

inline const char* phase_name(RoundPhase p) {
    switch (p) {
        case RoundPhase::Dispatching: return "Dispatching";
        case RoundPhase::Training: return "Training";
        case RoundPhase::Collecting: return "Collecting";
        case RoundPhase::Aggregating: return "Aggregating";
        case RoundPhase::Done: return "Done";
    }
    return "?";
}

struct RoundState {
    std::uint32_t round = 0;
    RoundPhase phase = RoundPhase::Dispatching;
    std::set<std::string> expected_clients;
    std::map<std::string, CompressedUpdate> received_updates;
    double deadline_s = 0.0;
    std::vector<std::string> stragglers;
    bool failed = false;  // round ended with zero usable updates

    bool complete() const { return received_updates.size() == expected_clients.size(); }
};

struct EvDispatchComplete {};
struct EvUploadReceived {
    std::string client_id;
    CompressedUpdate update;
};
struct EvDeadlineExpired {};
struct EvAggregationComplete {};

using RoundEvent =
    std::variant<EvDispatchComplete, EvUploadReceived, EvDeadlineExpired, EvAggregationComplete>;

inline RoundState make_round_state(std::uint32_t round, std::set<std::string> expected,
                                   double deadline_s) {
    RoundState st;
    st.round = round;
    st.expected_clients = std::move(expected);
    st.deadline_s = deadline_s;
    return st;
}

// Pure transition function. Throws IllegalTransition on events that are not
// valid in the current phase; the caller's state is untouched in that case.
inline RoundState advance_round(RoundState state, const RoundEvent& event) {
    auto illegal = [&](const char* what) -> IllegalTransition {
        return IllegalTransition(std::string(what) + " in phase " + phase_name(state.phase) +
                                 " (round " + std::to_string(state.round) + ")");
    };

    if (std::holds_alternative<EvDispatchComplete>(event)) {
        if (state.phase != RoundPhase::Dispatching) throw illegal("dispatch-complete");
        state.phase = RoundPhase::Training;
        return state;
    }

    if (const auto* upload = std::get_if<EvUploadReceived>(&event)) {
        if (state.phase != RoundPhase::Training && state.phase != RoundPhase::Collecting)
            throw illegal("upload");
        if (!state.expected_clients.contains(upload->client_id))
            throw illegal(("upload from non-expected client " + upload->client_id).c_str());
        // duplicate delivery (e.g. a retried send) is idempotent
        state.received_updates.emplace(upload->client_id, upload->update);
        state.phase = state.complete() ? RoundPhase::Aggregating : RoundPhase::Collecting;
        return state;
    }

    if (std::holds_alternative<EvDeadlineExpired>(event)) {
        if (state.phase == RoundPhase::Training) {
            state.phase = RoundPhase::Collecting;
            return state;
        }
        if (state.phase == RoundPhase::Collecting) {
            for (const auto& id : state.expected_clients)
                if (!state.received_updates.contains(id)) state.stragglers.push_back(id);
            state.phase = RoundPhase::Aggregating;
            return state;
        }
        throw illegal("deadline-expired");
    }

    if (std::holds_alternative<EvAggregationComplete>(event)) {
        if (state.phase != RoundPhase::Aggregating) throw illegal("aggregation-complete");
        state.failed = state.received_updates.empty();
        state.phase = RoundPhase::Done;
        return state;
    }

    throw illegal("unknown event");
}

}  // namespace fedvisor
