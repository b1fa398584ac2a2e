#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "potkv/error.hpp"
#include "potkv/model.hpp"

namespace potkv {

// Weight file format MPKV1:
//   magic "MPKV1\0"
//   u32 LE   tensor count
//   per tensor:
//     u16 LE   name length
//     bytes    UTF-8 name
//     u8       rank
//     u32 LE   dims[rank]
//     f32 LE   data, row-major
//
// The first tensor is "__meta__" (rank 1, 9 entries) carrying the model
// hyper-parameters so a file is self-describing:
//   { n_layers, n_heads, d_model, d_head, d_ff, vocab_size, rope_base,
//     seed_hi_bits, seed_lo_bits }
// where the two seed words are the bit patterns of the u64 init seed halves.

static_assert(std::endian::native == std::endian::little,
              "MPKV1 reader/writer assumes a little-endian host");

namespace detail {

inline void put_u16(std::ostream& os, std::uint16_t v) {
    os.write(reinterpret_cast<const char*>(&v), 2);
}
inline void put_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}
inline void put_u8(std::ostream& os, std::uint8_t v) {
    os.write(reinterpret_cast<const char*>(&v), 1);
}

inline std::uint16_t get_u16(std::istream& is) {
    std::uint16_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 2)) throw FormatError("MPKV1: truncated file (u16)");
    return v;
}
inline std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 4)) throw FormatError("MPKV1: truncated file (u32)");
    return v;
}
inline std::uint8_t get_u8(std::istream& is) {
    std::uint8_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 1)) throw FormatError("MPKV1: truncated file (u8)");
    return v;
}

inline void write_tensor(std::ostream& os, const std::string& name,
                         const std::vector<std::uint32_t>& dims, const float* data,
                         std::size_t count) {
    put_u16(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u8(os, static_cast<std::uint8_t>(dims.size()));
    for (auto d : dims) put_u32(os, d);
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
}

inline NamedTensor read_tensor(std::istream& is) {
    NamedTensor t;
    const std::uint16_t name_len = get_u16(is);
    t.name.resize(name_len);
    if (!is.read(t.name.data(), name_len)) throw FormatError("MPKV1: truncated file (name)");
    const std::uint8_t rank = get_u8(is);
    t.dims.resize(rank);
    for (auto& d : t.dims) d = get_u32(is);
    const std::size_t count = t.elem_count();
    t.data.resize(count);
    if (count > 0 &&
        !is.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(count * 4)))
        throw FormatError("MPKV1: truncated file (tensor '" + t.name + "' data)");
    return t;
}

inline float u32_bits_to_float(std::uint32_t v) { return std::bit_cast<float>(v); }
inline std::uint32_t float_to_u32_bits(float v) { return std::bit_cast<std::uint32_t>(v); }

}  // namespace detail

inline constexpr char kWeightsMagic[6] = {'M', 'P', 'K', 'V', '1', '\0'};

inline void save_weights(const Model& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("MPKV1: cannot open '" + path + "' for writing");
    os.write(kWeightsMagic, 6);

    std::uint32_t count = 1;  // __meta__
    model.for_each_tensor([&](const NamedTensor&) { ++count; });
    detail::put_u32(os, count);

    const ModelConfig& c = model.config;
    const float meta[9] = {
        static_cast<float>(c.n_layers),   static_cast<float>(c.n_heads),
        static_cast<float>(c.d_model),    static_cast<float>(c.d_head),
        static_cast<float>(c.d_ff),       static_cast<float>(c.vocab_size),
        c.rope_base,
        detail::u32_bits_to_float(static_cast<std::uint32_t>(c.init_seed >> 32)),
        detail::u32_bits_to_float(static_cast<std::uint32_t>(c.init_seed & 0xFFFFFFFFu)),
    };
    detail::write_tensor(os, "__meta__", {9}, meta, 9);

    model.for_each_tensor([&](const NamedTensor& t) {
        detail::write_tensor(os, t.name, t.dims, t.data.data(), t.data.size());
    });
    if (!os) throw FormatError("MPKV1: write to '" + path + "' failed");
}

inline Model load_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("MPKV1: cannot open '" + path + "'");
    char magic[6];
    if (!is.read(magic, 6) || std::memcmp(magic, kWeightsMagic, 6) != 0)
        throw FormatError("MPKV1: bad magic in '" + path + "'");
    const std::uint32_t count = detail::get_u32(is);
    if (count < 1) throw FormatError("MPKV1: empty tensor list");

    std::map<std::string, NamedTensor> tensors;
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t = detail::read_tensor(is);
        tensors[t.name] = std::move(t);
    }

    auto meta_it = tensors.find("__meta__");
    if (meta_it == tensors.end() || meta_it->second.data.size() != 9)
        throw FormatError("MPKV1: missing or malformed __meta__ tensor");
    const auto& meta = meta_it->second.data;
    ModelConfig cfg;
    cfg.n_layers = static_cast<int>(meta[0]);
    cfg.n_heads = static_cast<int>(meta[1]);
    cfg.d_model = static_cast<int>(meta[2]);
    cfg.d_head = static_cast<int>(meta[3]);
    cfg.d_ff = static_cast<int>(meta[4]);
    cfg.vocab_size = static_cast<int>(meta[5]);
    cfg.rope_base = meta[6];
    cfg.init_seed = (static_cast<std::uint64_t>(detail::float_to_u32_bits(meta[7])) << 32) |
                    static_cast<std::uint64_t>(detail::float_to_u32_bits(meta[8]));

    Model m = make_model_skeleton(cfg);
    m.for_each_tensor([&](NamedTensor& t) {
        auto it = tensors.find(t.name);
        if (it == tensors.end()) throw FormatError("MPKV1: tensor '" + t.name + "' missing");
        if (it->second.dims != t.dims)
            throw FormatError("MPKV1: tensor '" + t.name + "' has unexpected shape");
        t.data = std::move(it->second.data);
    });
    m.check_finite();
    return m;
}

}  // namespace potkv
