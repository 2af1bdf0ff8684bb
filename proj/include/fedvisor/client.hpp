#pragma once

#include <algorithm>
#include <fstream>
#include <functional>
#include <numeric>
#include <thread>
#include <vector>

#include "fedvisor/dataset.hpp"
#include "fedvisor/detect.hpp"
#include "fedvisor/scheduler.hpp"
#include "fedvisor/serialize.hpp"
#include "fedvisor/transport.hpp"

namespace fedvisor {

struct LocalTrainMetrics {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::size_t samples = 0;
    std::size_t steps = 0;
};

// Deterministic-order mini-batch gradient descent over the shard.
// batch_size 0 means full batch. Samples are visited in sample_id order, so
// a fixed (start, shard, config) always produces bit-identical parameters.
inline std::pair<ModelParams, LocalTrainMetrics> local_train(const ModelParams& start,
                                                             const ClientShard& shard,
                                                             std::size_t epochs, double lr,
                                                             std::size_t batch_size = 0) {
    if (shard.samples.empty()) throw ConfigError("local_train: empty shard");

    std::vector<TrainSample> data;
    data.reserve(shard.samples.size());
    for (const auto& s : shard.samples)
        data.push_back({s.image, encode_grid_target(s.boxes, start.arch)});

    LocalTrainMetrics metrics;
    metrics.samples = data.size();

    auto mean_loss = [&](const ModelParams& p) {
        double sum = 0.0;
        for (const auto& s : data) sum += yolo_loss(forward(p, s.image), s.target, p.arch).total;
        return sum / static_cast<double>(data.size());
    };
    metrics.initial_loss = mean_loss(start);

    const std::size_t bs = (batch_size == 0) ? data.size() : std::min(batch_size, data.size());
    ModelParams params = start;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        for (std::size_t off = 0; off < data.size(); off += bs) {
            const std::size_t n = std::min(bs, data.size() - off);
            std::span<const TrainSample> batch(data.data() + off, n);
            auto grads = loss_gradient(params, batch, params.arch);
            params = sgd_step(params, grads, lr);
            ++metrics.steps;
        }
    }
    metrics.final_loss = mean_loss(params);
    return {std::move(params), metrics};
}

// Layer contribution v(j): absolute change of the layer's sum of absolute
// parameter values (bias included) between the dispatched and the locally
// trained model.
inline std::vector<double> layer_contribution(const ModelParams& prev, const ModelParams& curr) {
    if (!prev.same_shape(curr)) throw ShapeError("layer_contribution: shape mismatch");
    auto abs_sum = [](const Layer& l) {
        double s = 0.0;
        for (double v : l.w.data) s += std::fabs(v);
        for (double v : l.b) s += std::fabs(v);
        return s;
    };
    std::vector<double> v(prev.layers.size());
    for (std::size_t j = 0; j < v.size(); ++j)
        v[j] = std::fabs(abs_sum(curr.layers[j]) - abs_sum(prev.layers[j]));
    return v;
}

// Keep the n layers with the largest contributions; ties go to the lower
// layer index. n >= L keeps everything.
inline CompressedUpdate select_top_n(const ModelParams& curr, const std::vector<double>& v,
                                     std::size_t n) {
    if (n == 0) throw ConfigError("select_top_n: n must be >= 1");
    if (v.size() != curr.layers.size())
        throw ShapeError("select_top_n: contribution vector length mismatch");

    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (v[a] != v[b]) return v[a] > v[b];
        return a < b;
    });

    CompressedUpdate update;
    update.contributions = v;
    const std::size_t keep = std::min(n, curr.layers.size());
    for (std::size_t i = 0; i < keep; ++i)
        update.included[static_cast<std::uint32_t>(order[i])] = curr.layers[order[i]];
    return update;
}

// ---- Explorer ----

class ResourceProbe {
public:
    virtual ~ResourceProbe() = default;
    virtual ClientResourceReport next() = 0;
};

// Scripted trace for simulations: entries are replayed in order and the
// last one repeats once the trace is exhausted.
class ScriptedProbe : public ResourceProbe {
public:
    struct Entry {
        double cpu = 0.0;
        double mem = 0.0;
        double bandwidth_mbps = 10.0;
    };

    ScriptedProbe(std::string client_id, std::vector<Entry> trace)
        : client_id_(std::move(client_id)), trace_(std::move(trace)) {
        if (trace_.empty()) trace_.push_back({0.1, 0.1, 10.0});
    }

    ClientResourceReport next() override {
        const Entry& e = trace_[std::min(cursor_, trace_.size() - 1)];
        ++cursor_;
        ClientResourceReport r;
        r.client_id = client_id_;
        r.cpu_load = e.cpu;
        r.mem_load = e.mem;
        r.bandwidth_mbps = e.bandwidth_mbps;
        return r;
    }

private:
    std::string client_id_;
    std::vector<Entry> trace_;
    std::size_t cursor_ = 0;
};

// Live proxies from /proc; good enough as a load signal on Linux.
class LiveProbe : public ResourceProbe {
public:
    LiveProbe(std::string client_id, double bandwidth_mbps = 10.0)
        : client_id_(std::move(client_id)), bandwidth_mbps_(bandwidth_mbps) {}

    ClientResourceReport next() override {
        ClientResourceReport r;
        r.client_id = client_id_;
        r.bandwidth_mbps = bandwidth_mbps_;
        std::ifstream loadavg("/proc/loadavg");
        double load1 = 0.0;
        if (loadavg >> load1) {
            unsigned cores = std::max(1u, std::thread::hardware_concurrency());
            r.cpu_load = load1 / cores;
        }
        std::ifstream meminfo("/proc/meminfo");
        std::string key;
        std::uint64_t total = 0, avail = 0, value;
        std::string unit;
        while (meminfo >> key >> value >> unit) {
            if (key == "MemTotal:") total = value;
            if (key == "MemAvailable:") avail = value;
        }
        if (total > 0) r.mem_load = 1.0 - static_cast<double>(avail) / total;
        return r;
    }

private:
    std::string client_id_;
    double bandwidth_mbps_;
};

// Clamped probe readout; loads always land in [0,1].
inline ClientResourceReport report_resources(ResourceProbe& probe) {
    ClientResourceReport r = probe.next();
    r.cpu_load = clamp01(r.cpu_load);
    r.mem_load = clamp01(r.mem_load);
    if (r.bandwidth_mbps <= 0.0) r.bandwidth_mbps = 1.0;
    return r;
}

// ---- upload retry ----

struct UploadAck {
    bool received = false;
    std::uint32_t round = 0;
    std::uint32_t attempts = 0;
    std::string error;
};

// Up to 1 + reconnect_limit framed-send attempts with doubling backoff
// (0.5s, 1s, 2s, ...). The ack is the accepted frame: the message vocabulary
// has no dedicated ack variant, so delivery is confirmed at the transport
// level and AggregationDone later closes the loop for the round.
inline UploadAck upload_with_retry(ClientTransport& transport, const Message& upload,
                                   std::uint32_t reconnect_limit, Sleeper& sleeper) {
    UploadAck ack;
    const auto* body = std::get_if<UploadUpdate>(&upload.body);
    ack.round = body ? body->round : 0;
    double backoff_s = 0.5;
    for (std::uint32_t attempt = 0; attempt <= reconnect_limit; ++attempt) {
        ++ack.attempts;
        if (transport.send(upload)) {
            ack.received = true;
            return ack;
        }
        if (attempt == reconnect_limit) break;
        sleeper.sleep_s(backoff_s);
        backoff_s *= 2.0;
        transport.reconnect();
    }
    ack.error = "upload failed after " + std::to_string(ack.attempts) + " attempts";
    return ack;
}

}  // namespace fedvisor
