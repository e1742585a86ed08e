#pragma once

// "GEVD1" checkpoint container, little-endian throughout:
//
//   magic            5 bytes  "GEVD1"
//   meta_len         u32      length of the metadata blob
//   meta             bytes    UTF-8 JSON (preset, feature spec, training meta)
//   net_count        u32
//   per net:
//     input_dropout  f64
//     hidden_dropout f64
//     layer_count    u32
//     per layer:     u32 in, u32 out, u8 activation, f64 slope
//   array_count      u32
//   per array:       u32 name_len, name bytes, u64 length
//   payload          f64 arrays: per net, per layer: weights (out*in,
//                    row-major) then biases (out); then each named array
//
// Everything before the payload is the architecture descriptor.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <utility>
#include <vector>

#include "gevd/error.hpp"
#include "gevd/nncore/mlp.hpp"

namespace gevd {

namespace binio {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) { bytes(&v, sizeof v); }
    void u64(std::uint64_t v) { bytes(&v, sizeof v); }
    void f64(double v) { bytes(&v, sizeof v); }
    void f64s(const std::vector<double>& v) { bytes(v.data(), v.size() * sizeof(double)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

    void bytes(void* p, std::size_t n) {
        if (n > in_.size() - pos_) {
            throw FormatError("truncated input at offset " + std::to_string(pos_) + " (need " +
                              std::to_string(n) + " bytes)");
        }
        std::memcpy(p, in_.data() + pos_, n);
        pos_ += n;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, sizeof v);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        bytes(&v, sizeof v);
        return v;
    }
    double f64() {
        double v;
        bytes(&v, sizeof v);
        return v;
    }
    std::vector<double> f64s(std::size_t n) {
        if (n > (in_.size() - pos_) / sizeof(double)) {
            throw FormatError("truncated f64 array at offset " + std::to_string(pos_));
        }
        std::vector<double> v(n);
        bytes(v.data(), n * sizeof(double));
        return v;
    }
    std::string str() {
        std::uint32_t n = u32();
        if (n > in_.size() - pos_) throw FormatError("truncated string at offset " + std::to_string(pos_));
        std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    [[nodiscard]] std::size_t position() const { return pos_; }
    [[nodiscard]] bool at_end() const { return pos_ == in_.size(); }

private:
    const std::vector<std::uint8_t>& in_;
    std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path);
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot write " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

} // namespace binio

inline constexpr char kCheckpointMagic[5] = {'G', 'E', 'V', 'D', '1'};

struct NamedArray {
    std::string name;
    std::vector<double> values;
    bool operator==(const NamedArray&) const = default;
};

struct Checkpoint {
    std::string meta; // JSON text
    std::vector<Mlp> nets;
    std::vector<NamedArray> arrays;

    [[nodiscard]] const NamedArray* find_array(const std::string& name) const {
        for (const auto& a : arrays) {
            if (a.name == name) return &a;
        }
        return nullptr;
    }

    bool operator==(const Checkpoint&) const = default;
};

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    binio::Writer w;
    w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
    w.str(ckpt.meta);
    w.u32(static_cast<std::uint32_t>(ckpt.nets.size()));
    for (const Mlp& net : ckpt.nets) {
        w.f64(net.input_dropout_rate);
        w.f64(net.hidden_dropout_rate);
        w.u32(static_cast<std::uint32_t>(net.layers.size()));
        for (const auto& l : net.layers) {
            w.u32(static_cast<std::uint32_t>(l.in_dim()));
            w.u32(static_cast<std::uint32_t>(l.out_dim()));
            w.u8(static_cast<std::uint8_t>(l.activation));
            w.f64(l.slope);
        }
    }
    w.u32(static_cast<std::uint32_t>(ckpt.arrays.size()));
    for (const auto& a : ckpt.arrays) {
        w.str(a.name);
        w.u64(a.values.size());
    }
    for (const Mlp& net : ckpt.nets) {
        for (const auto& l : net.layers) {
            w.f64s(l.weights.storage());
            w.f64s(l.biases.storage());
        }
    }
    for (const auto& a : ckpt.arrays) w.f64s(a.values);
    return w.take();
}

inline Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    binio::Reader r(bytes);
    char magic[5];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw FormatError("bad checkpoint magic");
    Checkpoint ckpt;
    ckpt.meta = r.str();
    std::uint32_t net_count = r.u32();
    struct LayerShape {
        std::uint32_t in, out;
    };
    std::vector<std::vector<LayerShape>> shapes(net_count);
    for (std::uint32_t n = 0; n < net_count; ++n) {
        Mlp net;
        net.input_dropout_rate = r.f64();
        net.hidden_dropout_rate = r.f64();
        std::uint32_t layer_count = r.u32();
        for (std::uint32_t i = 0; i < layer_count; ++i) {
            LayerShape s{r.u32(), r.u32()};
            DenseLayer l;
            std::uint8_t act = r.u8();
            if (act > static_cast<std::uint8_t>(Activation::softmax)) {
                throw FormatError("unknown activation code " + std::to_string(act));
            }
            l.activation = static_cast<Activation>(act);
            l.slope = r.f64();
            shapes[n].push_back(s);
            net.layers.push_back(std::move(l));
        }
        ckpt.nets.push_back(std::move(net));
    }
    std::uint32_t array_count = r.u32();
    std::vector<std::uint64_t> lengths;
    for (std::uint32_t i = 0; i < array_count; ++i) {
        NamedArray a;
        a.name = r.str();
        lengths.push_back(r.u64());
        ckpt.arrays.push_back(std::move(a));
    }
    for (std::uint32_t n = 0; n < net_count; ++n) {
        for (std::size_t i = 0; i < shapes[n].size(); ++i) {
            auto [in, out] = shapes[n][i];
            auto& l = ckpt.nets[n].layers[i];
            l.weights = Tensor({out, in}, r.f64s(static_cast<std::size_t>(out) * in));
            l.biases = Tensor({out}, r.f64s(out));
        }
        ckpt.nets[n].validate();
    }
    for (std::uint32_t i = 0; i < array_count; ++i) ckpt.arrays[i].values = r.f64s(lengths[i]);
    if (!r.at_end()) throw FormatError("trailing bytes after checkpoint payload");
    return ckpt;
}

} // namespace gevd
