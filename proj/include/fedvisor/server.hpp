#pragma once

#include <atomic>
#include <chrono>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fedvisor/aggregate.hpp"
#include "fedvisor/config.hpp"
#include "fedvisor/eval.hpp"
#include "fedvisor/round_state.hpp"
#include "fedvisor/scheduler.hpp"
#include "fedvisor/store.hpp"
#include "fedvisor/transport.hpp"

namespace fedvisor {

struct RoundMetrics {
    std::uint32_t round = 0;      // 1-based in reports
    std::uint32_t version = 0;    // stored model version, 0 if round failed
    double global_loss = 0.0;     // on the server-held validation shard
    std::vector<std::string> selected;
    std::map<std::string, double> client_losses;  // final local loss per counted client
    std::uint64_t uplink_bytes = 0;
    double sim_upload_s = 0.0;    // slowest counted upload in the round
    std::vector<std::string> stragglers;
    bool failed = false;
};

struct TaskReport {
    bool success = false;
    std::string error;
    std::vector<RoundMetrics> rounds;
    std::uint32_t final_version = 0;
    std::string final_digest_hex;
    std::vector<ScheduleDecision> schedule_log;
};

// FL_SERVER task loop: waits for the federation to join, then per round
// schedules clients, dispatches the global model, collects uploads through
// the round state machine, merges, stores a version and reports metrics.
// Works against any ServerTransport; with `simulated_time` the upload
// deadline is enforced on modeled upload seconds instead of the wall clock.
class TaskRunner {
public:
    TaskRunner(TaskConfig config, ServerTransport& transport, ModelStore& store,
               ClientShard validation, bool simulated_time)
        : config_(std::move(config)),
          transport_(transport),
          store_(store),
          validation_(std::move(validation)),
          simulated_time_(simulated_time) {
        config_.validate();
    }

    // Cooperative shutdown: when the flag flips, waits end early and the
    // task winds down at the next checkpoint (every stored version is
    // already durable).
    void set_stop_flag(const std::atomic<bool>* flag) { stop_ = flag; }

    TaskReport run() {
        TaskReport report;
        if (!join_phase()) {
            report.error = "quorum never met: " + std::to_string(joined_.size()) + " of " +
                           std::to_string(config_.quorum) + " required clients joined";
            return report;
        }
        ModelParams global = init_model(config_.seed, config_.arch);
        std::size_t successful_rounds = 0;
        for (std::uint32_t round = 0; round < config_.rounds; ++round) {
            if (stopped()) {
                report.error = "interrupted";
                return report;
            }
            RoundMetrics metrics = run_round(round, global, report);
            if (!metrics.failed) ++successful_rounds;
            report.rounds.push_back(std::move(metrics));
        }
        if (successful_rounds == 0) {
            report.error = "every round failed quorum";
            return report;
        }
        auto latest = store_.latest(config_.task_id);
        report.final_version = latest.version;
        report.final_digest_hex = latest.digest_hex;
        report.success = true;
        return report;
    }

private:
    using WallClock = std::chrono::steady_clock;

    double elapsed_s(WallClock::time_point since) const {
        return std::chrono::duration<double>(WallClock::now() - since).count();
    }

    // Accepts JoinTask / ResourceReport envelopes that can arrive at any
    // time; returns false if the envelope was something else.
    bool absorb_background(const Envelope& env) {
        if (env.disconnected) {
            joined_.erase(env.client_id);
            reports_.erase(env.client_id);
            return true;
        }
        if (std::holds_alternative<JoinTask>(env.msg.body)) {
            // one task per connection: an empty task id joins the task this
            // server is running
            if (!env.msg.task_id.empty() && env.msg.task_id != config_.task_id) {
                transport_.send_to(env.client_id,
                                   {config_.task_id, "server", ErrorMsg{1, "unknown task"}});
                return true;
            }
            joined_.insert(env.msg.sender_id);
            transport_.send_to(env.msg.sender_id,
                               {config_.task_id, "server",
                                TaskConfigMsg{task_config_to_json(config_).dump()}});
            return true;
        }
        if (const auto* rep = std::get_if<ResourceReportMsg>(&env.msg.body)) {
            ClientResourceReport r;
            r.client_id = env.msg.sender_id;
            r.cpu_load = rep->cpu_load;
            r.mem_load = rep->mem_load;
            r.bandwidth_mbps = rep->bandwidth_mbps;
            r.last_round_quality = rep->last_round_quality;
            reports_[r.client_id] = r;
            if (r.bandwidth_mbps > 0.0) last_bandwidth_[r.client_id] = r.bandwidth_mbps;
            return true;
        }
        return false;
    }

    bool stopped() const { return stop_ && stop_->load(); }

    bool join_phase() {
        auto start = WallClock::now();
        while (joined_.size() < config_.num_clients) {
            if (stopped()) break;
            double remaining = config_.deadline_s - elapsed_s(start);
            if (!simulated_time_ && remaining <= 0.0) break;
            auto env = transport_.poll(simulated_time_ ? 0.0 : remaining);
            if (!env) break;  // queue drained (sim) or timed out (net)
            absorb_background(*env);
        }
        return joined_.size() >= config_.quorum;
    }

    // Wait until every joined client has a fresh report queued; between
    // rounds the in-flight messages are exactly those reports.
    void collect_reports() {
        auto start = WallClock::now();
        while (true) {
            bool all = !joined_.empty();
            for (const auto& id : joined_)
                if (!reports_.contains(id)) all = false;
            if (all || stopped()) return;
            double remaining = config_.deadline_s - elapsed_s(start);
            if (!simulated_time_ && remaining <= 0.0) return;
            auto env = transport_.poll(simulated_time_ ? 0.0 : remaining);
            if (!env) return;
            absorb_background(*env);
        }
    }

    RoundMetrics run_round(std::uint32_t round, ModelParams& global, TaskReport& report) {
        RoundMetrics metrics;
        metrics.round = round + 1;

        collect_reports();

        // quality = min-max normalized negated local loss across this
        // round's reporters
        std::map<std::string, double> losses;
        for (const auto& id : joined_) {
            auto it = reports_.find(id);
            if (it != reports_.end()) losses[id] = -it->second.last_round_quality;
        }
        auto quality = normalize_quality(losses);
        std::vector<ClientResourceReport> adjusted;
        for (const auto& [id, q] : quality) {
            ClientResourceReport r = reports_.at(id);
            r.last_round_quality = q;
            adjusted.push_back(r);
        }

        const std::size_t cap =
            config_.clients_per_round == 0 ? std::max<std::size_t>(joined_.size(), 1)
                                           : config_.clients_per_round;
        ScheduleDecision decision;
        decision.round = metrics.round;
        try {
            auto scores = score_clients(adjusted, config_.sched_alpha, config_.sched_beta);
            ScheduleDecision scheduled = schedule_round(scores, cap, config_.quorum);
            decision.selected = scheduled.selected;
            decision.scores = scheduled.scores;
            decision.skipped = scheduled.skipped;
        } catch (const QuorumNotMet&) {
            metrics.failed = true;
            report.schedule_log.push_back(decision);
            broadcast_done(round, 0);
            metrics.global_loss = validation_loss(global);
            return metrics;
        }
        report.schedule_log.push_back(decision);
        metrics.selected = decision.selected;

        // reports are consumed by scheduling; next round needs fresh ones
        for (const auto& id : decision.selected) reports_.erase(id);

        std::set<std::string> expected(decision.selected.begin(), decision.selected.end());
        RoundState state = make_round_state(round, expected, config_.deadline_s);

        for (const auto& id : decision.selected) {
            transport_.send_to(id, {config_.task_id, "server", DispatchModel{round, global}});
            transport_.send_to(id, {config_.task_id, "server", StartLocalTraining{round}});
        }
        state = advance_round(state, EvDispatchComplete{});

        std::map<std::string, UploadUpdate> uploads;
        auto round_start = WallClock::now();
        while (state.phase != RoundPhase::Aggregating) {
            double remaining = config_.deadline_s - elapsed_s(round_start);
            std::optional<Envelope> env;
            if (!stopped() && (simulated_time_ || remaining > 0.0))
                env = transport_.poll(simulated_time_ ? 0.0 : remaining);
            if (!env) {
                // deadline: Training -> Collecting -> Aggregating
                if (state.phase == RoundPhase::Training)
                    state = advance_round(state, EvDeadlineExpired{});
                state = advance_round(state, EvDeadlineExpired{});
                break;
            }
            if (absorb_background(*env)) continue;
            const auto* upload = std::get_if<UploadUpdate>(&env->msg.body);
            if (!upload || upload->round != round) continue;  // stale or stray
            const std::string& id = env->msg.sender_id;
            if (uploads.contains(id)) continue;  // retried duplicate

            double upload_s = modeled_upload_s(id, env->frame_bytes);
            if (simulated_time_ && upload_s > config_.deadline_s)
                continue;  // modeled upload misses the deadline; becomes a straggler
            try {
                state = advance_round(state, EvUploadReceived{id, upload->update});
            } catch (const IllegalTransition&) {
                continue;  // non-expected sender
            }
            uploads[id] = *upload;
            metrics.uplink_bytes += env->frame_bytes;
            metrics.sim_upload_s = std::max(metrics.sim_upload_s, upload_s);
        }
        metrics.stragglers = state.stragglers;

        if (state.received_updates.size() < config_.quorum) {
            metrics.failed = true;
            state = advance_round(state, EvAggregationComplete{});
            broadcast_done(round, 0);
            metrics.global_loss = validation_loss(global);
            return metrics;
        }

        // merge in client-id order (map iteration is sorted)
        std::vector<CompressedUpdate> updates;
        for (const auto& [id, u] : state.received_updates) {
            updates.push_back(u);
            metrics.client_losses[id] = u.final_loss;
        }
        global = merge_partial_updates(global, updates);
        auto record = store_.put(config_.task_id, metrics.round, global);
        metrics.version = record.version;
        state = advance_round(state, EvAggregationComplete{});

        broadcast_done(round, record.version);
        metrics.global_loss = validation_loss(global);
        return metrics;
    }

    void broadcast_done(std::uint32_t round, std::uint32_t version) {
        for (const auto& id : joined_)
            transport_.send_to(id, {config_.task_id, "server", AggregationDone{round, version}});
    }

    double modeled_upload_s(const std::string& client_id, std::size_t bytes) const {
        double bandwidth = 10.0;
        auto it = last_bandwidth_.find(client_id);
        if (it != last_bandwidth_.end()) bandwidth = it->second;
        return simulate_upload_time(bytes, bandwidth, config_.upload_overhead_s);
    }

    double validation_loss(const ModelParams& params) const {
        if (validation_.samples.empty()) return 0.0;
        return mean_shard_loss(params, validation_);
    }

    TaskConfig config_;
    ServerTransport& transport_;
    ModelStore& store_;
    ClientShard validation_;
    bool simulated_time_;
    const std::atomic<bool>* stop_ = nullptr;

    std::set<std::string> joined_;
    std::map<std::string, ClientResourceReport> reports_;
    std::map<std::string, double> last_bandwidth_;
};

}  // namespace fedvisor
