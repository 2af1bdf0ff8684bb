#pragma once

#include <cstring>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedvisor/model.hpp"

namespace fedvisor {

// Little-endian byte packing shared by the wire format and the model store.

class ByteWriter {
public:
    std::vector<std::uint8_t>& buffer() { return buf_; }
    const std::vector<std::uint8_t>& buffer() const { return buf_; }

    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void bytes(std::span<const std::uint8_t> data) {
        buf_.insert(buf_.end(), data.begin(), data.end());
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.insert(buf_.end(), s.begin(), s.end());
    }

private:
    std::vector<std::uint8_t> buf_;
};

// Cursor over a byte span. Every read is bounds-checked; failures flip a
// sticky flag instead of throwing so decoders stay total.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    bool ok() const { return ok_; }
    std::size_t remaining() const { return data_.size() - pos_; }

    std::uint8_t u8() {
        if (!ensure(1)) return 0;
        return data_[pos_++];
    }
    std::uint32_t u32() {
        if (!ensure(4)) return 0;
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        if (!ensure(8)) return 0;
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
        return v;
    }
    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str() {
        std::uint32_t n = u32();
        if (!ensure(n)) return {};
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::span<const std::uint8_t> raw(std::size_t n) {
        if (!ensure(n)) return {};
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }
    void skip(std::size_t n) {
        if (ensure(n)) pos_ += n;
    }

private:
    bool ensure(std::size_t n) {
        if (!ok_ || data_.size() - pos_ < n) {
            ok_ = false;
            return false;
        }
        return true;
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
    bool ok_ = true;
};

// ---- model parameter blob ----
// arch block + layer list; self-contained so a stored payload can be
// evaluated without extra context.

inline void write_params(ByteWriter& w, const ModelParams& params) {
    const ArchConfig& a = params.arch;
    w.u32(static_cast<std::uint32_t>(a.input_side));
    w.u32(static_cast<std::uint32_t>(a.hidden_sizes.size()));
    for (std::size_t h : a.hidden_sizes) w.u32(static_cast<std::uint32_t>(h));
    w.u32(static_cast<std::uint32_t>(a.grid_side));
    w.u32(static_cast<std::uint32_t>(a.boxes_per_cell));
    w.u32(static_cast<std::uint32_t>(a.num_classes));
    w.f64(a.lambda_coord);
    w.f64(a.lambda_noobj);
    w.u32(static_cast<std::uint32_t>(params.layers.size()));
    for (const Layer& l : params.layers) {
        w.u32(static_cast<std::uint32_t>(l.w.rows));
        w.u32(static_cast<std::uint32_t>(l.w.cols));
        for (double v : l.w.data) w.f64(v);
        for (double v : l.b) w.f64(v);
    }
}

inline std::vector<std::uint8_t> serialize_params(const ModelParams& params) {
    ByteWriter w;
    write_params(w, params);
    return std::move(w.buffer());
}

// Sanity cap against absurd declared sizes in hostile input.
inline constexpr std::uint32_t kMaxLayerEntries = 1u << 26;

inline std::optional<ModelParams> read_params(ByteReader& r) {
    ModelParams p;
    p.arch.input_side = r.u32();
    std::uint32_t n_hidden = r.u32();
    if (!r.ok() || n_hidden > 1024) return std::nullopt;
    p.arch.hidden_sizes.resize(n_hidden);
    for (auto& h : p.arch.hidden_sizes) h = r.u32();
    p.arch.grid_side = r.u32();
    p.arch.boxes_per_cell = r.u32();
    p.arch.num_classes = r.u32();
    p.arch.lambda_coord = r.f64();
    p.arch.lambda_noobj = r.f64();
    std::uint32_t n_layers = r.u32();
    if (!r.ok() || n_layers > 1024) return std::nullopt;
    p.layers.resize(n_layers);
    for (Layer& l : p.layers) {
        std::uint32_t rows = r.u32();
        std::uint32_t cols = r.u32();
        if (!r.ok() || rows == 0 || cols == 0) return std::nullopt;
        if (static_cast<std::uint64_t>(rows) * cols > kMaxLayerEntries) return std::nullopt;
        l.w = Matrix(rows, cols);
        for (double& v : l.w.data) v = r.f64();
        l.b.resize(rows);
        for (double& v : l.b) v = r.f64();
        if (!r.ok()) return std::nullopt;
    }
    if (!r.ok()) return std::nullopt;
    return p;
}

inline std::optional<ModelParams> deserialize_params(std::span<const std::uint8_t> data) {
    ByteReader r(data);
    auto p = read_params(r);
    if (!p || r.remaining() != 0) return std::nullopt;
    return p;
}

// ---- compressed update blob ----

struct CompressedUpdate {
    std::string client_id;
    std::uint32_t round = 0;
    std::map<std::uint32_t, Layer> included;  // layer index -> parameters
    std::vector<double> contributions;        // v(j) for every layer
    std::uint32_t sample_count = 0;
    double final_loss = 0.0;

    bool operator==(const CompressedUpdate& o) const = default;
};

inline void write_update(ByteWriter& w, const CompressedUpdate& u) {
    w.str(u.client_id);
    w.u32(u.round);
    w.u32(u.sample_count);
    w.f64(u.final_loss);
    w.u32(static_cast<std::uint32_t>(u.contributions.size()));
    for (double v : u.contributions) w.f64(v);
    w.u32(static_cast<std::uint32_t>(u.included.size()));
    for (const auto& [idx, layer] : u.included) {
        w.u32(idx);
        w.u32(static_cast<std::uint32_t>(layer.w.rows));
        w.u32(static_cast<std::uint32_t>(layer.w.cols));
        for (double v : layer.w.data) w.f64(v);
        for (double v : layer.b) w.f64(v);
    }
}

inline std::vector<std::uint8_t> serialize_update(const CompressedUpdate& u) {
    ByteWriter w;
    write_update(w, u);
    return std::move(w.buffer());
}

inline std::optional<CompressedUpdate> read_update(ByteReader& r) {
    CompressedUpdate u;
    u.client_id = r.str();
    u.round = r.u32();
    u.sample_count = r.u32();
    u.final_loss = r.f64();
    std::uint32_t n_contrib = r.u32();
    if (!r.ok() || n_contrib > 4096) return std::nullopt;
    u.contributions.resize(n_contrib);
    for (double& v : u.contributions) v = r.f64();
    std::uint32_t n_layers = r.u32();
    if (!r.ok() || n_layers > 4096) return std::nullopt;
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        std::uint32_t idx = r.u32();
        std::uint32_t rows = r.u32();
        std::uint32_t cols = r.u32();
        if (!r.ok() || rows == 0 || cols == 0) return std::nullopt;
        if (static_cast<std::uint64_t>(rows) * cols > kMaxLayerEntries) return std::nullopt;
        Layer l;
        l.w = Matrix(rows, cols);
        for (double& v : l.w.data) v = r.f64();
        l.b.resize(rows);
        for (double& v : l.b) v = r.f64();
        if (!r.ok()) return std::nullopt;
        u.included[idx] = std::move(l);
    }
    if (!r.ok()) return std::nullopt;
    return u;
}

inline std::optional<CompressedUpdate> deserialize_update(std::span<const std::uint8_t> data) {
    ByteReader r(data);
    auto u = read_update(r);
    if (!u || r.remaining() != 0) return std::nullopt;
    return u;
}

}  // namespace fedvisor
