#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "hardtsp/errors.hpp"
#include "hardtsp/policy.hpp"
#include "hardtsp/tensor.hpp"

namespace hardtsp {

/// Binary checkpoint, format tag "HTCK" version 1. Layout:
/// magic, u32 version, JSON hyperparameter header, named parameter records,
/// named buffer records, then optimizer state (step count plus named first
/// and second moment records). All integers and IEEE doubles are stored
/// little-endian byte by byte, so a save/load cycle is bit-exact.
namespace ckpt {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

class Reader {
public:
    explicit Reader(std::string data) : data_(std::move(data)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string bytes(std::size_t len) {
        need(len);
        std::string s = data_.substr(pos_, len);
        pos_ += len;
        return s;
    }
    bool done() const { return pos_ == data_.size(); }

private:
    std::string data_;
    std::size_t pos_ = 0;
    void need(std::size_t len) {
        if (pos_ + len > data_.size()) throw IoError("checkpoint truncated");
    }
};

inline void put_tensor_record(std::string& out, const std::string& name, const Tensor& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.v) put_f64(out, v);
}

inline std::pair<std::string, Tensor> get_tensor_record(Reader& r) {
    std::string name = r.bytes(r.u32());
    std::uint32_t rank = r.u32();
    if (rank > 8) throw IoError("implausible tensor rank in checkpoint");
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(r.u32());
    Tensor t = Tensor::zeros(shape);
    for (double& v : t.v) v = r.f64();
    return {std::move(name), std::move(t)};
}

inline void put_tensor_map(std::string& out, const std::map<std::string, Tensor>& m) {
    put_u32(out, static_cast<std::uint32_t>(m.size()));
    for (const auto& [name, t] : m) put_tensor_record(out, name, t);
}

inline std::map<std::string, Tensor> get_tensor_map(Reader& r) {
    std::map<std::string, Tensor> m;
    std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        auto [name, t] = get_tensor_record(r);
        m.emplace(std::move(name), std::move(t));
    }
    return m;
}

} // namespace ckpt

inline void save_checkpoint(const std::string& path, const PolicyModel& model) {
    nlohmann::json header = {
        {"embedding_dim", model.cfg.embedding_dim},
        {"heads", model.cfg.heads},
        {"encoder_layers", model.cfg.encoder_layers},
        {"ff_dim", model.cfg.ff_dim},
        {"logit_clip", model.cfg.logit_clip},
        {"bn_eps", model.cfg.bn_eps},
        {"bn_momentum", model.cfg.bn_momentum},
    };
    std::string h = header.dump();

    std::string out;
    out.reserve(h.size() + 64);
    out.append("HTCK");
    ckpt::put_u32(out, 1);
    ckpt::put_u32(out, static_cast<std::uint32_t>(h.size()));
    out.append(h);
    ckpt::put_tensor_map(out, model.store.params);
    ckpt::put_tensor_map(out, model.store.buffers);
    ckpt::put_u64(out, static_cast<std::uint64_t>(model.store.adam_step));
    ckpt::put_tensor_map(out, model.store.adam_m);
    ckpt::put_tensor_map(out, model.store.adam_v);

    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open " + tmp + " for writing");
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) throw IoError("short write to " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place: " + ec.message());
}

inline PolicyModel load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + path);
    std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    ckpt::Reader r(std::move(data));
    if (r.bytes(4) != "HTCK") throw IoError("not a checkpoint file: " + path);
    std::uint32_t version = r.u32();
    if (version != 1) throw IoError("unsupported checkpoint version " + std::to_string(version));

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(r.bytes(r.u32()));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad checkpoint header: ") + e.what());
    }
    PolicyModel m;
    try {
        m.cfg.embedding_dim = header.at("embedding_dim").get<int>();
        m.cfg.heads = header.at("heads").get<int>();
        m.cfg.encoder_layers = header.at("encoder_layers").get<int>();
        m.cfg.ff_dim = header.at("ff_dim").get<int>();
        m.cfg.logit_clip = header.at("logit_clip").get<double>();
        m.cfg.bn_eps = header.at("bn_eps").get<double>();
        m.cfg.bn_momentum = header.at("bn_momentum").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad checkpoint header: ") + e.what());
    }
    m.cfg.validate();
    m.store.params = ckpt::get_tensor_map(r);
    m.store.buffers = ckpt::get_tensor_map(r);
    m.store.adam_step = static_cast<std::int64_t>(r.u64());
    m.store.adam_m = ckpt::get_tensor_map(r);
    m.store.adam_v = ckpt::get_tensor_map(r);
    if (!r.done()) throw IoError("trailing bytes in checkpoint " + path);
    return m;
}

} // namespace hardtsp
