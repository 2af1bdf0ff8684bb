// fedvisor command line: dataset generation, federated training runs
// (in-process simulation or networked server/client processes), and model
// evaluation.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "fedvisor/eval.hpp"
#include "fedvisor/metrics.hpp"
#include "fedvisor/net.hpp"
#include "fedvisor/server.hpp"
#include "fedvisor/sim.hpp"

namespace fs = std::filesystem;
using namespace fedvisor;

namespace {

std::atomic<bool> g_stop{false};

void handle_signal(int) { g_stop = true; }

void install_signal_handlers() {
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// FEDVISOR_STORE overrides whatever the command line says.
fs::path resolve_store_root(const std::string& flag_value) {
    if (const char* env = std::getenv("FEDVISOR_STORE"); env && *env) return fs::path(env);
    return fs::path(flag_value);
}

std::vector<fs::path> client_shard_dirs(const fs::path& data_dir) {
    std::vector<fs::path> dirs;
    if (!fs::is_directory(data_dir)) throw ConfigError("data dir not found: " + data_dir.string());
    for (const auto& e : fs::directory_iterator(data_dir)) {
        if (e.is_directory() && e.path().filename().string().rfind("client_", 0) == 0)
            dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw ConfigError("no client_* shard directories under " + data_dir.string());
    return dirs;
}

void print_shard_summary(const ClientShard& shard) {
    std::map<int, std::size_t> histogram;
    for (const auto& s : shard.samples)
        for (const auto& b : s.boxes) ++histogram[b.label];
    std::cout << "  " << shard.client_id << ": " << shard.samples.size() << " samples, classes {";
    bool first = true;
    for (const auto& [cls, count] : histogram) {
        if (!first) std::cout << ", ";
        first = false;
        std::string name = cls >= 0 && static_cast<std::size_t>(cls) < shard.class_set.size()
                               ? shard.class_set[cls]
                               : std::to_string(cls);
        std::cout << name << ": " << count;
    }
    std::cout << "}\n";
}

int cmd_gen_data(const std::string& out, std::size_t clients, std::size_t samples,
                 std::uint64_t seed, std::size_t classes, std::size_t side,
                 std::size_t max_objects, std::size_t val_samples, const std::string& partition,
                 double alpha) {
    SceneSpec spec{side, classes, max_objects};
    std::mt19937_64 seeder(seed);

    std::vector<LabeledSample> pool;
    for (std::size_t i = 0; i < samples; ++i) pool.push_back(generate_scene(seeder(), spec));

    PartitionMode mode;
    mode.kind = partition == "skew" ? PartitionKind::ByClassSkew : PartitionKind::Iid;
    mode.alpha = alpha;
    mode.seed = seed;
    auto shards = partition_dataset(pool, clients, mode, shape_class_names(classes));

    fs::path root(out);
    fs::create_directories(root);
    std::cout << "dataset under " << root.string() << "\n";
    for (const auto& shard : shards) {
        write_shard_dir(root / shard.client_id, shard);
        print_shard_summary(shard);
    }

    ClientShard validation;
    validation.client_id = "validation";
    validation.class_set = shape_class_names(classes);
    for (std::size_t i = 0; i < val_samples; ++i)
        validation.samples.push_back(generate_scene(seeder(), spec));
    std::sort(validation.samples.begin(), validation.samples.end(),
              [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });
    write_shard_dir(root / "validation", validation);
    print_shard_summary(validation);
    return 0;
}

int finish_task(const TaskConfig& config, const TaskReport& report, const fs::path& out_dir) {
    write_run_artifacts(out_dir, config, report);
    if (!report.success) {
        std::cerr << "task failed: " << report.error << "\n";
        return 1;
    }
    const auto& last = report.rounds.back();
    std::cout << "task " << config.task_id << " finished: " << report.rounds.size()
              << " rounds, final version " << report.final_version << ", final global loss "
              << last.global_loss << "\n";
    std::cout << "final digest " << report.final_digest_hex << "\n";
    std::cout << "artifacts in " << out_dir.string() << "\n";
    return 0;
}

int cmd_train_sim(const std::string& config_path, const std::string& data,
                  const std::string& store_flag, const std::string& out) {
    TaskConfig config = parse_task_config(read_file(config_path));
    auto shard_dirs = client_shard_dirs(data);
    config.num_clients = shard_dirs.size();

    ModelStore store(resolve_store_root(store_flag));
    SimTransport transport;
    for (const auto& dir : shard_dirs) {
        auto shard = read_shard_dir(dir);
        if (shard.samples.empty()) throw ConfigError("empty shard: " + dir.string());
        auto probe = std::make_unique<ScriptedProbe>(shard.client_id,
                                                     std::vector<ScriptedProbe::Entry>{});
        transport.add_client(std::make_unique<ClientSession>(
            shard.client_id, config.task_id, [shard]() { return shard; }, std::move(probe)));
    }
    transport.join_all();

    ClientShard validation = read_shard_dir(fs::path(data) / "validation");
    TaskRunner runner(config, transport, store, validation, /*simulated_time=*/true);
    runner.set_stop_flag(&g_stop);
    auto report = runner.run();
    return finish_task(config, report, out);
}

int cmd_serve(const std::string& config_path, const std::string& validation_dir,
              const std::string& store_flag, const std::string& out) {
    TaskConfig config = parse_task_config(read_file(config_path));
    ModelStore store(resolve_store_root(store_flag));
    ClientShard validation = read_shard_dir(validation_dir);

    NetServerTransport transport(config.server_url);
    std::cout << "serving task " << config.task_id << " on " << config.server_url
              << ", waiting for " << config.num_clients << " clients\n";
    TaskRunner runner(config, transport, store, validation, /*simulated_time=*/false);
    runner.set_stop_flag(&g_stop);
    auto report = runner.run();
    transport.stop();
    return finish_task(config, report, out);
}

int cmd_client(const std::string& config_path) {
    ClientConfig cfg = parse_client_config(read_file(config_path));

    std::unique_ptr<ResourceProbe> probe;
    if (!cfg.trace.empty())
        probe = std::make_unique<ScriptedProbe>(cfg.client_id, cfg.trace);
    else
        probe = std::make_unique<LiveProbe>(cfg.client_id);

    // shard re-read per round so new samples join the next round
    fs::path shard_dir(cfg.shard_dir);
    ClientSession session(
        cfg.client_id, "", [shard_dir, id = cfg.client_id]() { return read_shard_dir(shard_dir, id); },
        std::move(probe));

    // task id is learned from the server's TaskConfigMsg; join with the
    // client id and an empty task id placeholder resolved below
    auto first_shard = read_shard_dir(shard_dir, cfg.client_id);
    if (first_shard.samples.empty()) throw ConfigError("empty shard: " + cfg.shard_dir);

    Message join = session.join_message();
    NetClientTransport transport(cfg.server_addr, join, cfg.reconnect_limit);
    if (!transport.send(join)) throw TransportError("cannot send join to " + cfg.server_addr);
    std::cout << cfg.client_id << " joined " << cfg.server_addr << "\n";

    RealSleeper sleeper;
    while (!session.finished() && !g_stop) {
        auto msg = transport.recv(1.0);
        if (!msg) {
            if (!transport.connected()) break;
            continue;
        }
        for (const Message& reply : session.handle(*msg)) {
            if (std::holds_alternative<UploadUpdate>(reply.body)) {
                auto ack = upload_with_retry(transport, reply, cfg.reconnect_limit, sleeper);
                if (!ack.received) {
                    std::cerr << cfg.client_id << ": " << ack.error << "\n";
                    return 1;
                }
            } else if (!transport.send(reply)) {
                std::cerr << cfg.client_id << ": send failed\n";
                return 1;
            }
        }
    }
    std::cout << cfg.client_id << " done\n";
    return session.finished() ? 0 : 1;
}

int cmd_eval(const std::string& store_flag, const std::string& task_id, std::uint32_t version,
             const std::string& shard_dir, double threshold, const std::string& out_csv) {
    ModelStore store(resolve_store_root(store_flag));
    if (version == 0) version = store.latest(task_id).version;
    ModelParams params = store.get(task_id, version);
    ClientShard shard = read_shard_dir(shard_dir);
    auto report = evaluate_detection(params, shard, threshold);

    std::string csv = "sample_id,gt_boxes,pred_boxes,mean_iou,class_acc\n";
    for (const auto& row : report.rows) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%.9g,%.9g\n", row.sample_id.c_str(),
                      row.gt_boxes, row.pred_boxes, row.mean_iou, row.class_acc);
        csv += buf;
    }
    if (!out_csv.empty()) write_text_file(out_csv, csv);

    std::cout << "task " << task_id << " version " << version << " on " << shard_dir << "\n";
    std::cout << "samples " << report.rows.size() << ", mean IOU " << report.mean_iou
              << ", class accuracy " << report.class_accuracy << "\n";
    if (!out_csv.empty()) std::cout << "per-sample report: " << out_csv << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    install_signal_handlers();
    CLI::App app{"fedvisor: desk-scale federated training of a grid-cell object detector"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate synthetic client shards + validation");
    std::string gen_out;
    std::size_t gen_clients = 4, gen_samples = 200, gen_classes = 2, gen_side = 24,
                gen_max_objects = 1, gen_val = 50;
    std::uint64_t gen_seed = 7;
    std::string gen_partition = "iid";
    double gen_alpha = 0.5;
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    gen->add_option("--clients", gen_clients, "number of client shards")->check(CLI::PositiveNumber);
    gen->add_option("--samples", gen_samples, "total training samples across clients")
        ->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--classes", gen_classes, "shape classes (2..5)");
    gen->add_option("--side", gen_side, "image side in pixels (>= 8)");
    gen->add_option("--max-objects", gen_max_objects, "max objects per scene");
    gen->add_option("--val-samples", gen_val, "validation shard size");
    gen->add_option("--partition", gen_partition, "iid or skew")
        ->check(CLI::IsMember({"iid", "skew"}));
    gen->add_option("--alpha", gen_alpha, "class-skew concentration (skew mode)");

    // train-sim
    auto* sim = app.add_subcommand("train-sim", "run a federated task in-process (simulated clock)");
    std::string sim_config, sim_data, sim_store, sim_out;
    sim->add_option("--config", sim_config, "task config JSON")->required();
    sim->add_option("--data", sim_data, "dataset directory (client_* + validation)")->required();
    sim->add_option("--out", sim_out, "output directory for metrics")->required();
    sim->add_option("--store", sim_store, "model store root (FEDVISOR_STORE overrides)");

    // serve
    auto* serve = app.add_subcommand("serve", "run FL_SERVER on the configured TCP address");
    std::string serve_config, serve_validation, serve_store, serve_out;
    serve->add_option("--config", serve_config, "task config JSON")->required();
    serve->add_option("--validation", serve_validation, "validation shard directory")->required();
    serve->add_option("--out", serve_out, "output directory for metrics")->required();
    serve->add_option("--store", serve_store, "model store root (FEDVISOR_STORE overrides)");

    // client
    auto* client = app.add_subcommand("client", "run FL_CLIENT against a server");
    std::string client_config;
    client->add_option("--config", client_config, "client config JSON")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a stored model version on a shard");
    std::string eval_store, eval_task, eval_shard, eval_csv;
    std::uint32_t eval_version = 0;
    double eval_threshold = 0.5;
    eval->add_option("--store", eval_store, "model store root (FEDVISOR_STORE overrides)");
    eval->add_option("--task", eval_task, "task id")->required();
    eval->add_option("--version", eval_version, "model version (default: latest)");
    eval->add_option("--shard", eval_shard, "shard directory to evaluate on")->required();
    eval->add_option("--threshold", eval_threshold, "confidence threshold for detections");
    eval->add_option("--out", eval_csv, "write per-sample CSV here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_gen_data(gen_out, gen_clients, gen_samples, gen_seed, gen_classes,
                                gen_side, gen_max_objects, gen_val, gen_partition, gen_alpha);
        if (sim->parsed())
            return cmd_train_sim(sim_config, sim_data,
                                 sim_store.empty() ? sim_out + "/store" : sim_store, sim_out);
        if (serve->parsed())
            return cmd_serve(serve_config, serve_validation,
                             serve_store.empty() ? serve_out + "/store" : serve_store, serve_out);
        if (client->parsed()) return cmd_client(client_config);
        if (eval->parsed())
            return cmd_eval(eval_store.empty() ? "store" : eval_store, eval_task, eval_version,
                            eval_shard, eval_threshold, eval_csv);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
