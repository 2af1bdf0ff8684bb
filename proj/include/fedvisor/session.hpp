#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "fedvisor/client.hpp"
#include "fedvisor/config.hpp"
#include "fedvisor/message.hpp"

namespace fedvisor {

// FL_CLIENT protocol driver, shared by the in-process simulation and the
// networked client. Feed it inbound messages; it answers with the replies to
// send. The shard source is re-invoked on every StartLocalTraining so data
// added between rounds participates from the next round.
class ClientSession {
public:
    using ShardSource = std::function<ClientShard()>;

    ClientSession(std::string client_id, std::string task_id, ShardSource shard_source,
                  std::unique_ptr<ResourceProbe> probe)
        : client_id_(std::move(client_id)),
          task_id_(std::move(task_id)),
          shard_source_(std::move(shard_source)),
          probe_(std::move(probe)) {}

    const std::string& client_id() const { return client_id_; }
    bool finished() const { return finished_; }
    const std::optional<TaskConfig>& task_config() const { return config_; }

    Message join_message() const { return Message{task_id_, client_id_, JoinTask{}}; }

    std::vector<Message> handle(const Message& in) {
        std::vector<Message> replies;
        if (finished_) return replies;

        if (const auto* cfg = std::get_if<TaskConfigMsg>(&in.body)) {
            config_ = parse_task_config(cfg->config_json);
            if (task_id_.empty()) task_id_ = in.task_id;
            replies.push_back(resource_report());
            return replies;
        }
        if (const auto* dispatch = std::get_if<DispatchModel>(&in.body)) {
            dispatched_ = dispatch->params;
            return replies;
        }
        if (const auto* start = std::get_if<StartLocalTraining>(&in.body)) {
            if (!config_ || !dispatched_)
                throw TransportError("client " + client_id_ +
                                     ": training requested before config/model arrived");
            replies.push_back(train_and_package(start->round));
            return replies;
        }
        if (const auto* done = std::get_if<AggregationDone>(&in.body)) {
            if (config_ && done->round + 1 >= config_->rounds) {
                finished_ = true;
            } else {
                replies.push_back(resource_report());
            }
            return replies;
        }
        if (std::holds_alternative<ErrorMsg>(in.body)) {
            finished_ = true;
            return replies;
        }
        return replies;
    }

private:
    Message resource_report() {
        ClientResourceReport r = report_resources(*probe_);
        ResourceReportMsg msg;
        msg.cpu_load = r.cpu_load;
        msg.mem_load = r.mem_load;
        msg.bandwidth_mbps = r.bandwidth_mbps;
        // raw negated loss; the server min-max normalizes across clients
        msg.last_round_quality = last_final_loss_ ? -*last_final_loss_ : 0.0;
        return Message{task_id_, client_id_, msg};
    }

    Message train_and_package(std::uint32_t round) {
        ClientShard shard = shard_source_();
        auto [trained, metrics] =
            local_train(*dispatched_, shard, config_->local_epochs, config_->lr,
                        config_->batch_size);
        auto contributions = layer_contribution(*dispatched_, trained);
        CompressedUpdate update =
            select_top_n(trained, contributions, config_->resolved_compression_n());
        update.client_id = client_id_;
        update.round = round;
        update.sample_count = static_cast<std::uint32_t>(metrics.samples);
        update.final_loss = metrics.final_loss;
        last_final_loss_ = metrics.final_loss;

        UploadUpdate upload;
        upload.round = round;
        upload.update = std::move(update);
        upload.metrics = {metrics.initial_loss, metrics.final_loss};
        return Message{task_id_, client_id_, std::move(upload)};
    }

    std::string client_id_;
    std::string task_id_;
    ShardSource shard_source_;
    std::unique_ptr<ResourceProbe> probe_;
    std::optional<TaskConfig> config_;
    std::optional<ModelParams> dispatched_;
    std::optional<double> last_final_loss_;
    bool finished_ = false;
};

}  // namespace fedvisor
