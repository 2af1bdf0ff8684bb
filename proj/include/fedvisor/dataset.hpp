#pragma once

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "fedvisor/annotation.hpp"
#include "fedvisor/grid.hpp"
#include "fedvisor/scene.hpp"

namespace fedvisor {

// Samples held by one party. All shards of a task share the class set;
// sample ids are disjoint across shards.
struct ClientShard {
    std::string client_id;
    std::vector<LabeledSample> samples;
    std::vector<std::string> class_set;
};

// Ground-truth grid encoding. The containing cell is floor(x*S)/floor(y*S)
// with an upper clamp so x == 1.0 maps to the last cell; slot 0 of the cell
// is the responsible box. When two boxes land in the same cell the later one
// wins and `collisions` (if given) is bumped.
inline GridTarget encode_grid_target(const std::vector<BoxAnnotation>& boxes,
                                     const ArchConfig& arch,
                                     std::size_t* collisions = nullptr) {
    GridTarget target = make_empty_target(arch);
    const std::size_t S = arch.grid_side;
    for (const auto& box : boxes) {
        if (box.label < 0 || static_cast<std::size_t>(box.label) >= arch.num_classes)
            throw ConfigError("grid target: label " + std::to_string(box.label) +
                              " outside class count " + std::to_string(arch.num_classes));
        std::size_t col = std::min(static_cast<std::size_t>(box.x * S), S - 1);
        std::size_t row = std::min(static_cast<std::size_t>(box.y * S), S - 1);
        std::size_t cell = row * S + col;
        if (target.cells[cell].has_object && collisions) ++(*collisions);
        CellTarget& ct = target.cells[cell];
        ct.has_object = true;
        ct.truth = Box{box.x, box.y, box.w, box.h};
        ct.label = box.label;
        ct.confidence = encode_confidence(1, iou(ct.truth, ct.truth));
        target.responsible[cell * arch.boxes_per_cell] = 1;
    }
    return target;
}

enum class PartitionKind { Iid, ByClassSkew };

struct PartitionMode {
    PartitionKind kind = PartitionKind::Iid;
    double alpha = 1.0;       // concentration for ByClassSkew
    std::uint64_t seed = 0;
};

namespace detail {

inline int sample_primary_class(const LabeledSample& s) {
    return s.boxes.empty() ? 0 : s.boxes.front().label;
}

}  // namespace detail

// Split samples into n disjoint shards covering the input. iid deals
// round-robin after a seeded shuffle; skew draws per-client class
// proportions from a Dirichlet(alpha) and allocates each class accordingly
// (alpha -> infinity approaches uniform, i.e. iid proportions).
inline std::vector<ClientShard> partition_dataset(const std::vector<LabeledSample>& samples,
                                                  std::size_t n_clients,
                                                  const PartitionMode& mode,
                                                  const std::vector<std::string>& class_set = {}) {
    if (n_clients == 0) throw ConfigError("partition: n_clients must be >= 1");
    if (samples.empty()) throw ConfigError("partition: no samples");
    if (n_clients > samples.size())
        throw ConfigError("partition: more clients (" + std::to_string(n_clients) +
                          ") than samples (" + std::to_string(samples.size()) + ")");

    std::vector<ClientShard> shards(n_clients);
    for (std::size_t k = 0; k < n_clients; ++k) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "client_%02zu", k);
        shards[k].client_id = buf;
        shards[k].class_set = class_set;
    }

    std::mt19937_64 rng(mode.seed);
    if (mode.kind == PartitionKind::Iid) {
        std::vector<std::size_t> order(samples.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i = 0; i < order.size(); ++i)
            shards[i % n_clients].samples.push_back(samples[order[i]]);
    } else {
        if (mode.alpha <= 0.0) throw ConfigError("partition: alpha must be positive");
        // group by primary class
        std::map<int, std::vector<std::size_t>> by_class;
        for (std::size_t i = 0; i < samples.size(); ++i)
            by_class[detail::sample_primary_class(samples[i])].push_back(i);

        // per-client Dirichlet(alpha) preference vector over classes; a
        // class's samples then split across clients in proportion to their
        // preference for it. Small alpha gives near-single-class shards,
        // huge alpha approaches the iid mix.
        std::gamma_distribution<double> gamma(mode.alpha, 1.0);
        std::map<int, std::vector<double>> weights;  // class -> per-client weight
        for (const auto& [cls, idx] : by_class) weights[cls].assign(n_clients, 0.0);
        for (std::size_t k = 0; k < n_clients; ++k) {
            double norm = 0.0;
            std::map<int, double> pref;
            for (const auto& [cls, idx] : by_class) {
                double g = gamma(rng);
                if (g <= 0.0 || !std::isfinite(g)) g = 1e-300;
                pref[cls] = g;
                norm += g;
            }
            for (const auto& [cls, g] : pref) weights[cls][k] = g / norm;
        }

        for (auto& [cls, idx] : by_class) {
            std::shuffle(idx.begin(), idx.end(), rng);
            const auto& w = weights[cls];
            const double total = std::accumulate(w.begin(), w.end(), 0.0);
            // largest-remainder allocation of idx.size() samples
            std::vector<std::size_t> counts(n_clients, 0);
            std::vector<std::pair<double, std::size_t>> rema;
            std::size_t assigned = 0;
            for (std::size_t k = 0; k < n_clients; ++k) {
                double exact = idx.size() * (w[k] / total);
                counts[k] = static_cast<std::size_t>(exact);
                assigned += counts[k];
                rema.push_back({exact - counts[k], k});
            }
            std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
            });
            for (std::size_t r = 0; assigned < idx.size(); ++r, ++assigned)
                ++counts[rema[r % rema.size()].second];

            std::size_t cursor = 0;
            for (std::size_t k = 0; k < n_clients; ++k)
                for (std::size_t c = 0; c < counts[k]; ++c)
                    shards[k].samples.push_back(samples[idx[cursor++]]);
        }

        // no shard may end up empty: steal one sample from the largest
        for (auto& shard : shards) {
            if (!shard.samples.empty()) continue;
            auto donor = std::max_element(shards.begin(), shards.end(),
                                          [](const ClientShard& a, const ClientShard& b) {
                                              return a.samples.size() < b.samples.size();
                                          });
            shard.samples.push_back(donor->samples.back());
            donor->samples.pop_back();
        }
    }

    for (auto& shard : shards) {
        std::sort(shard.samples.begin(), shard.samples.end(),
                  [](const LabeledSample& a, const LabeledSample& b) {
                      return a.sample_id < b.sample_id;
                  });
    }
    return shards;
}

// ---- on-disk layout ----
// One directory per shard: per sample `<id>.lbl` (annotation text) and
// `<id>.img` (little-endian u32 side, then side^2 float32 pixels row-major),
// plus `classes.names` with one class name per line.

inline void write_image_file(const std::filesystem::path& path, const Matrix& img) {
    if (img.rows != img.cols) throw ConfigError("image file: image must be square");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreError("cannot open for write: " + path.string());
    std::uint32_t side = static_cast<std::uint32_t>(img.rows);
    std::uint8_t hdr[4] = {static_cast<std::uint8_t>(side & 0xff),
                           static_cast<std::uint8_t>((side >> 8) & 0xff),
                           static_cast<std::uint8_t>((side >> 16) & 0xff),
                           static_cast<std::uint8_t>((side >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(hdr), 4);
    for (double v : img.data) {
        float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        std::uint8_t le[4] = {static_cast<std::uint8_t>(bits & 0xff),
                              static_cast<std::uint8_t>((bits >> 8) & 0xff),
                              static_cast<std::uint8_t>((bits >> 16) & 0xff),
                              static_cast<std::uint8_t>((bits >> 24) & 0xff)};
        out.write(reinterpret_cast<const char*>(le), 4);
    }
    if (!out) throw StoreError("write failed: " + path.string());
}

inline Matrix read_image_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StoreError("cannot open: " + path.string());
    std::uint8_t hdr[4];
    in.read(reinterpret_cast<char*>(hdr), 4);
    if (!in) throw StoreError("truncated image file: " + path.string());
    std::uint32_t side = hdr[0] | (hdr[1] << 8) | (hdr[2] << 16) |
                         (static_cast<std::uint32_t>(hdr[3]) << 24);
    if (side == 0 || side > 1 << 14) throw StoreError("bad image side in " + path.string());
    Matrix img(side, side);
    for (double& v : img.data) {
        std::uint8_t le[4];
        in.read(reinterpret_cast<char*>(le), 4);
        if (!in) throw StoreError("truncated image file: " + path.string());
        std::uint32_t bits = le[0] | (le[1] << 8) | (le[2] << 16) |
                             (static_cast<std::uint32_t>(le[3]) << 24);
        float f;
        std::memcpy(&f, &bits, 4);
        v = f;
    }
    return img;
}

inline void write_shard_dir(const std::filesystem::path& dir, const ClientShard& shard) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream names(dir / "classes.names", std::ios::trunc);
        for (const auto& n : shard.class_set) names << n << "\n";
    }
    for (const auto& s : shard.samples) {
        std::ofstream lbl(dir / (s.sample_id + ".lbl"), std::ios::trunc);
        lbl << serialize_annotations(s.boxes);
        write_image_file(dir / (s.sample_id + ".img"), s.image);
    }
}

inline ClientShard read_shard_dir(const std::filesystem::path& dir,
                                  const std::string& client_id = "") {
    if (!std::filesystem::is_directory(dir))
        throw StoreError("shard directory not found: " + dir.string());
    ClientShard shard;
    shard.client_id = client_id.empty() ? dir.filename().string() : client_id;
    std::ifstream names(dir / "classes.names");
    std::string line;
    while (std::getline(names, line))
        if (!line.empty()) shard.class_set.push_back(line);

    std::vector<std::filesystem::path> imgs;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".img") imgs.push_back(e.path());
    std::sort(imgs.begin(), imgs.end());
    for (const auto& img_path : imgs) {
        LabeledSample s;
        s.sample_id = img_path.stem().string();
        s.image = read_image_file(img_path);
        auto lbl_path = img_path;
        lbl_path.replace_extension(".lbl");
        std::ifstream lbl(lbl_path);
        if (!lbl) throw StoreError("missing annotation file: " + lbl_path.string());
        std::string text((std::istreambuf_iterator<char>(lbl)), std::istreambuf_iterator<char>());
        s.boxes = parse_annotation_file(text);
        shard.samples.push_back(std::move(s));
    }
    return shard;
}

}  // namespace fedvisor
