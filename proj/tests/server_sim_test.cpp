#include <gtest/gtest.h>

#include <algorithm>

#include "fedvisor/metrics.hpp"
#include "fedvisor/server.hpp"
#include "fedvisor/sim.hpp"
#include "test_util.hpp"

using namespace fedvisor;

namespace {

ArchConfig sim_arch() {
    ArchConfig arch;
    arch.input_side = 12;
    arch.hidden_sizes = {10};
    arch.grid_side = 2;
    arch.boxes_per_cell = 1;
    arch.num_classes = 2;
    return arch;
}

TaskConfig base_config(const std::string& task_id, std::size_t num_clients,
                       std::uint32_t rounds) {
    TaskConfig c;
    c.task_id = task_id;
    c.arch = sim_arch();
    c.rounds = rounds;
    c.local_epochs = 1;
    c.lr = 0.05;
    c.deadline_s = 1e9;
    c.quorum = 1;
    c.seed = 42;
    c.num_clients = num_clients;
    return c;
}

ClientShard make_shard(const std::string& id, std::size_t n, std::uint64_t seed) {
    SceneSpec spec{12, 2, 1};
    ClientShard shard;
    shard.client_id = id;
    shard.class_set = shape_class_names(2);
    for (std::size_t i = 0; i < n; ++i) shard.samples.push_back(generate_scene(seed + i, spec));
    std::sort(shard.samples.begin(), shard.samples.end(),
              [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });
    return shard;
}

std::unique_ptr<ClientSession> make_session(const std::string& id, const std::string& task_id,
                                            ClientShard shard,
                                            std::vector<ScriptedProbe::Entry> trace = {}) {
    auto probe = std::make_unique<ScriptedProbe>(id, std::move(trace));
    return std::make_unique<ClientSession>(
        id, task_id, [shard = std::move(shard)]() { return shard; }, std::move(probe));
}

}  // namespace

TEST(TaskRunnerSim, SingleClientSingleRoundEqualsLocalTrain) {
    auto config = base_config("t_single", 1, 1);
    auto shard = make_shard("client_00", 6, 900);
    auto validation = make_shard("validation", 4, 5000);

    testutil::TempDir tmp("runner");
    ModelStore store(tmp.path());
    SimTransport transport;
    transport.add_client(make_session("client_00", config.task_id, shard));
    transport.join_all();

    TaskRunner runner(config, transport, store, validation, /*simulated_time=*/true);
    auto report = runner.run();
    ASSERT_TRUE(report.success) << report.error;
    ASSERT_EQ(report.rounds.size(), 1u);

    // oracle: the stored model must equal the client's own local training
    auto start = init_model(config.seed, config.arch);
    auto [expected, metrics] =
        local_train(start, shard, config.local_epochs, config.lr, config.batch_size);
    auto stored = store.get(config.task_id, report.final_version);
    EXPECT_EQ(stored, expected);
    EXPECT_EQ(report.final_digest_hex, digest_hex(sha256(serialize_params(expected))));
    EXPECT_NEAR(report.rounds[0].client_losses.at("client_00"), metrics.final_loss, 1e-12);
}

TEST(TaskRunnerSim, IdenticalClientsYieldIdenticalGlobal) {
    auto config = base_config("t_twins", 2, 1);
    auto shard = make_shard("shared", 6, 901);
    auto validation = make_shard("validation", 4, 5100);

    testutil::TempDir tmp("runner");
    ModelStore store(tmp.path());
    SimTransport transport;
    transport.add_client(make_session("client_00", config.task_id, shard));
    transport.add_client(make_session("client_01", config.task_id, shard));
    transport.join_all();

    TaskRunner runner(config, transport, store, validation, true);
    auto report = runner.run();
    ASSERT_TRUE(report.success) << report.error;

    auto start = init_model(config.seed, config.arch);
    auto [expected, _] =
        local_train(start, shard, config.local_epochs, config.lr, config.batch_size);
    auto stored = store.get(config.task_id, report.final_version);
    EXPECT_EQ(stored, expected);  // mean of two identical uploads
}

TEST(TaskRunnerSim, SlowClientBecomesStraggler) {
    auto config = base_config("t_straggler", 3, 1);
    config.quorum = 2;
    config.deadline_s = 5.0;  // seconds of modeled upload time

    testutil::TempDir tmp("runner");
    ModelStore store(tmp.path());
    SimTransport transport;
    // ~23 KB upload; 1 MB/s is fast enough, 0.000001 MB/s is not
    transport.add_client(make_session("client_00", config.task_id, make_shard("a", 4, 100),
                                      {{0.1, 0.1, 1.0}}));
    transport.add_client(make_session("client_01", config.task_id, make_shard("b", 4, 200),
                                      {{0.1, 0.1, 1.0}}));
    transport.add_client(make_session("client_02", config.task_id, make_shard("c", 4, 300),
                                      {{0.1, 0.1, 0.000001}}));
    transport.join_all();

    TaskRunner runner(config, transport, store, make_shard("validation", 4, 5200), true);
    auto report = runner.run();
    ASSERT_TRUE(report.success) << report.error;
    ASSERT_EQ(report.rounds.size(), 1u);
    const auto& round = report.rounds[0];
    EXPECT_FALSE(round.failed);
    EXPECT_EQ(round.client_losses.size(), 2u);
    ASSERT_EQ(round.stragglers.size(), 1u);
    EXPECT_EQ(round.stragglers[0], "client_02");
    EXPECT_FALSE(round.client_losses.contains("client_02"));
}

TEST(TaskRunnerSim, QuorumNeverMetFailsTask) {
    auto config = base_config("t_quorum", 3, 2);
    config.quorum = 2;

    testutil::TempDir tmp("runner");
    ModelStore store(tmp.path());
    SimTransport transport;
    transport.add_client(make_session("client_00", config.task_id, make_shard("a", 4, 100)));
    transport.join_all();  // only one of three clients ever joins

    TaskRunner runner(config, transport, store, make_shard("validation", 4, 5300), true);
    auto report = runner.run();
    EXPECT_FALSE(report.success);
    EXPECT_NE(report.error.find("quorum"), std::string::npos);
    EXPECT_TRUE(report.rounds.empty());
}

TEST(TaskRunnerSim, DeadClientMidTaskStillCompletesWithQuorum) {
    auto config = base_config("t_dead", 3, 3);
    config.quorum = 2;

    testutil::TempDir tmp("runner");
    ModelStore store(tmp.path());
    SimTransport transport;
    transport.add_client(make_session("client_00", config.task_id, make_shard("a", 4, 100)));
    transport.add_client(make_session("client_01", config.task_id, make_shard("b", 4, 200)));
    transport.add_client(make_session("client_02", config.task_id, make_shard("c", 4, 300)));
    transport.join_all();

    TaskRunner runner(config, transport, store, make_shard("validation", 4, 5400), true);
    // kill one client after join: it will never answer dispatches
    transport.kill_client("client_02");
    auto report = runner.run();
    ASSERT_TRUE(report.success) << report.error;
    for (const auto& round : report.rounds) {
        EXPECT_FALSE(round.failed);
        EXPECT_EQ(round.client_losses.size(), 2u);
    }
}

TEST(TaskRunnerSim, VersionsTrackSuccessfulRounds) {
    auto config = base_config("t_versions", 2, 3);
    testutil::TempDir tmp("runner");
    ModelStore store(tmp.path());
    SimTransport transport;
    transport.add_client(make_session("client_00", config.task_id, make_shard("a", 5, 110)));
    transport.add_client(make_session("client_01", config.task_id, make_shard("b", 5, 220)));
    transport.join_all();

    TaskRunner runner(config, transport, store, make_shard("validation", 4, 5500), true);
    auto report = runner.run();
    ASSERT_TRUE(report.success) << report.error;
    auto manifest = store.manifest(config.task_id);
    ASSERT_EQ(manifest.size(), 3u);
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        EXPECT_EQ(manifest[i].version, i + 1);
        EXPECT_EQ(manifest[i].round, i + 1);
    }
    EXPECT_EQ(report.final_version, 3u);
}

TEST(TaskRunnerSim, RepeatRunsProduceIdenticalMetrics) {
    auto run_once = [](const std::filesystem::path& store_dir) {
        auto config = base_config("t_repeat", 2, 3);
        ModelStore store(store_dir);
        SimTransport transport;
        transport.add_client(make_session("client_00", config.task_id, make_shard("a", 5, 111),
                                          {{0.3, 0.2, 8.0}, {0.5, 0.1, 8.0}}));
        transport.add_client(make_session("client_01", config.task_id, make_shard("b", 5, 222),
                                          {{0.2, 0.4, 6.0}}));
        transport.join_all();
        TaskRunner runner(config, transport, store, make_shard("validation", 4, 5600), true);
        auto report = runner.run();
        return std::pair{metrics_to_csv(report), report.final_digest_hex};
    };
    testutil::TempDir tmp_a("runner");
    testutil::TempDir tmp_b("runner");
    auto [csv_a, digest_a] = run_once(tmp_a.path());
    auto [csv_b, digest_b] = run_once(tmp_b.path());
    EXPECT_EQ(csv_a, csv_b);
    EXPECT_EQ(digest_a, digest_b);
    EXPECT_FALSE(digest_a.empty());
}

namespace {

// Hand-scripted transport: drives the runner's disconnect handling the way
// a dropped TCP connection would in networked mode.
class ScriptedServerTransport : public ServerTransport {
public:
    explicit ScriptedServerTransport(SimTransport& inner) : inner_(inner) {}

    void send_to(const std::string& id, const Message& msg) override {
        inner_.send_to(id, msg);
    }
    std::optional<Envelope> poll(double timeout_s) override {
        auto env = inner_.poll(timeout_s);
        if (env && !disconnect_after_.empty() &&
            std::holds_alternative<UploadUpdate>(env->msg.body) &&
            env->client_id == disconnect_after_) {
            // swallow the upload and report the client gone instead
            disconnect_after_.clear();
            Envelope gone;
            gone.client_id = env->client_id;
            gone.disconnected = true;
            return gone;
        }
        return env;
    }

    void disconnect_on_upload(const std::string& id) { disconnect_after_ = id; }

private:
    SimTransport& inner_;
    std::string disconnect_after_;
};

}  // namespace

TEST(TaskRunnerSim, DisconnectMidRoundDropsClientButCompletes) {
    auto config = base_config("t_disconnect", 3, 2);
    config.quorum = 2;

    testutil::TempDir tmp("runner");
    ModelStore store(tmp.path());
    SimTransport inner;
    inner.add_client(make_session("client_00", config.task_id, make_shard("a", 4, 100)));
    inner.add_client(make_session("client_01", config.task_id, make_shard("b", 4, 200)));
    inner.add_client(make_session("client_02", config.task_id, make_shard("c", 4, 300)));
    inner.join_all();
    ScriptedServerTransport transport(inner);
    transport.disconnect_on_upload("client_01");

    TaskRunner runner(config, transport, store, make_shard("validation", 4, 5900), true);
    auto report = runner.run();
    ASSERT_TRUE(report.success) << report.error;
    // round 1 lost client_01 mid-round; the other two carried the round
    EXPECT_FALSE(report.rounds[0].failed);
    EXPECT_EQ(report.rounds[0].client_losses.size(), 2u);
    EXPECT_FALSE(report.rounds[0].client_losses.contains("client_01"));
}

namespace {

// byte-reversing codec: structurally exercises the pluggable transform
class ReversingCodec : public ParamCodec {
public:
    std::vector<std::uint8_t> encode(std::vector<std::uint8_t> plain) const override {
        std::reverse(plain.begin(), plain.end());
        return plain;
    }
    std::vector<std::uint8_t> decode(std::vector<std::uint8_t> coded) const override {
        std::reverse(coded.begin(), coded.end());
        return coded;
    }
};

}  // namespace

TEST(TaskRunnerSim, NonIdentityCodecIsTransparent) {
    auto run_with = [](const ParamCodec& codec, const std::filesystem::path& store_dir) {
        auto config = base_config("t_codec", 2, 2);
        ModelStore store(store_dir);
        SimTransport transport(codec);
        transport.add_client(make_session("client_00", config.task_id, make_shard("a", 5, 121)));
        transport.add_client(make_session("client_01", config.task_id, make_shard("b", 5, 232)));
        transport.join_all();
        TaskRunner runner(config, transport, store, make_shard("validation", 4, 5700), true);
        return runner.run();
    };
    testutil::TempDir tmp_a("runner");
    testutil::TempDir tmp_b("runner");
    ReversingCodec reversing;
    auto with_identity = run_with(identity_codec(), tmp_a.path());
    auto with_reversing = run_with(reversing, tmp_b.path());
    ASSERT_TRUE(with_identity.success);
    ASSERT_TRUE(with_reversing.success);
    EXPECT_EQ(with_identity.final_digest_hex, with_reversing.final_digest_hex);
}

TEST(MetricsFiles, ArtifactsWrittenAndWellFormed) {
    auto config = base_config("t_artifacts", 1, 2);
    testutil::TempDir tmp("runner");
    ModelStore store(tmp.path() / "store");
    SimTransport transport;
    transport.add_client(make_session("client_00", config.task_id, make_shard("a", 5, 131)));
    transport.join_all();
    TaskRunner runner(config, transport, store, make_shard("validation", 4, 5800), true);
    auto report = runner.run();
    ASSERT_TRUE(report.success);

    auto out = tmp.path() / "out";
    write_run_artifacts(out, config, report);
    EXPECT_TRUE(std::filesystem::exists(out / "metrics.csv"));
    EXPECT_TRUE(std::filesystem::exists(out / "metrics.json"));
    EXPECT_TRUE(std::filesystem::exists(out / "schedule.jsonl"));
    EXPECT_TRUE(std::filesystem::exists(out / "config.snapshot.json"));

    std::ifstream csv(out / "metrics.csv");
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header.rfind("round,global_loss,client_losses,selected,uplink_bytes", 0), 0u);
    std::size_t rows = 0;
    std::string line;
    while (std::getline(csv, line))
        if (!line.empty()) ++rows;
    EXPECT_EQ(rows, 2u);

    std::ifstream js(out / "config.snapshot.json");
    nlohmann::json snapshot = nlohmann::json::parse(js);
    auto restored = task_config_from_json(snapshot);
    EXPECT_EQ(restored.task_id, config.task_id);
    EXPECT_EQ(restored.rounds, config.rounds);
}
