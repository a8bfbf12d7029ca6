#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "augvit/nn/model.hpp"

namespace augvit {

// Checkpoint layout (all integers little-endian uint32, floats little-endian
// IEEE-754 binary32):
//
//   "AUGS1"
//   u32 config_len, config text (ModelConfig::to_text)
//   u32 block_count
//   per block: u32 name_len, name, u32 ndim, u32 dim[ndim], f32 data[]
//
// Blocks are the parameters in registration order followed by the running
// statistics buffers. Save/load round-trips byte-identically.

namespace detail {

inline void put_u32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_f32(std::string& out, float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    put_u32(out, bits);
}

class Reader {
public:
    explicit Reader(std::string data) : data_(std::move(data)) {}

    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 3; i >= 0; --i)
            v = (v << 8) | static_cast<uint8_t>(data_[pos_ + static_cast<size_t>(i)]);
        pos_ += 4;
        return v;
    }

    float f32() {
        const uint32_t bits = u32();
        float f;
        std::memcpy(&f, &bits, sizeof(f));
        return f;
    }

    std::string bytes(size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool exhausted() const { return pos_ == data_.size(); }

private:
    void need(size_t n) {
        if (pos_ + n > data_.size()) throw std::runtime_error("checkpoint: truncated file");
    }
    std::string data_;
    size_t pos_ = 0;
};

template <typename T>
void append_block(std::string& out, const std::string& name, const Tensor<T>& t) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(out, static_cast<uint32_t>(d));
    for (T v : t.data) put_f32(out, static_cast<float>(v));
}

}  // namespace detail

template <typename T>
std::string serialize_checkpoint(const Model<T>& model) {
    std::string out = "AUGS1";
    const std::string cfg = model.config().to_text();
    detail::put_u32(out, static_cast<uint32_t>(cfg.size()));
    out += cfg;
    detail::put_u32(out, static_cast<uint32_t>(model.parameters().size() +
                                               model.buffers().size()));
    for (const auto* p : model.parameters()) detail::append_block(out, p->name, p->value);
    for (const auto& b : model.buffers()) detail::append_block(out, b.name, *b.value);
    return out;
}

template <typename T>
void save_checkpoint(const Model<T>& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    const std::string blob = serialize_checkpoint(model);
    os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

template <typename T>
Model<T> deserialize_checkpoint(std::string blob) {
    if (blob.size() < 5 || blob.substr(0, 5) != "AUGS1")
        throw std::runtime_error("checkpoint: bad magic");
    detail::Reader rd(blob.substr(5));
    const uint32_t cfg_len = rd.u32();
    ModelConfig cfg;
    try {
        cfg = ModelConfig::from_text(rd.bytes(cfg_len));
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("checkpoint: config mismatch: ") + e.what());
    }
    Model<T> model(cfg, 0);

    const uint32_t blocks = rd.u32();
    const size_t expected = model.parameters().size() + model.buffers().size();
    if (blocks != expected) throw std::runtime_error("checkpoint: config mismatch: block count");

    auto read_into = [&](const std::string& name, Tensor<T>& t) {
        const uint32_t name_len = rd.u32();
        const std::string got = rd.bytes(name_len);
        if (got != name)
            throw std::runtime_error("checkpoint: config mismatch: expected block " + name +
                                     ", found " + got);
        const uint32_t ndim = rd.u32();
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = static_cast<int>(rd.u32());
        if (shape != t.shape)
            throw std::runtime_error("checkpoint: config mismatch: shape of " + name);
        for (auto& v : t.data) v = static_cast<T>(rd.f32());
    };
    for (auto* p : model.parameters()) read_into(p->name, p->value);
    for (auto& b : model.buffers()) read_into(b.name, *b.value);
    if (!rd.exhausted()) throw std::runtime_error("checkpoint: trailing bytes");
    return model;
}

template <typename T>
Model<T> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    std::string blob((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint<T>(std::move(blob));
}

}  // namespace augvit
