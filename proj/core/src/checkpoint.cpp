#include "vit4lpa/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "vit4lpa/error.hpp"
#include "vit4lpa/text_io.hpp"

namespace vit4lpa::model {

namespace {

void put_u16(std::ostream& out, std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint16_t get_u16(std::istream& in, const std::string& path) {
    unsigned char b[2];
    if (!in.read(reinterpret_cast<char*>(b), 2)) throw IoError("truncated checkpoint: " + path);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated checkpoint: " + path);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& in, const std::string& path) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw IoError("truncated checkpoint: " + path);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

KeyValueFile meta_to_kv(const CheckpointMeta& meta) {
    KeyValueFile kv;
    const ModelConfig& c = meta.config;
    kv.set("encoder_layers", std::to_string(c.encoder_layers));
    kv.set("encoder_heads", std::to_string(c.encoder_heads));
    kv.set("encoder_dim", std::to_string(c.encoder_dim));
    kv.set("decoder_layers", std::to_string(c.decoder_layers));
    kv.set("decoder_heads", std::to_string(c.decoder_heads));
    kv.set("decoder_dim", std::to_string(c.decoder_dim));
    kv.set("mlp_ratio", std::to_string(c.mlp_ratio));
    kv.set("dropout", format_full(c.dropout));
    kv.set("patch_dim", std::to_string(c.patch_dim));
    kv.set("num_positions", std::to_string(c.num_positions));
    kv.set("creation_seed", std::to_string(meta.creation_seed));
    kv.set("dataset_manifest_digest", meta.dataset_digest);
    for (const auto& [k, v] : meta.extra) kv.set("extra." + k, v);
    return kv;
}

CheckpointMeta meta_from_kv(const KeyValueFile& kv) {
    CheckpointMeta meta;
    ModelConfig& c = meta.config;
    c.encoder_layers = static_cast<int>(parse_long(kv.require("encoder_layers")));
    c.encoder_heads = static_cast<int>(parse_long(kv.require("encoder_heads")));
    c.encoder_dim = static_cast<int>(parse_long(kv.require("encoder_dim")));
    c.decoder_layers = static_cast<int>(parse_long(kv.require("decoder_layers")));
    c.decoder_heads = static_cast<int>(parse_long(kv.require("decoder_heads")));
    c.decoder_dim = static_cast<int>(parse_long(kv.require("decoder_dim")));
    c.mlp_ratio = static_cast<int>(parse_long(kv.require("mlp_ratio")));
    c.dropout = parse_double(kv.require("dropout"));
    c.patch_dim = static_cast<int>(parse_long(kv.require("patch_dim")));
    c.num_positions = static_cast<int>(parse_long(kv.require("num_positions")));
    meta.creation_seed = std::stoull(kv.require("creation_seed"));
    meta.dataset_digest = kv.require("dataset_manifest_digest");
    for (const auto& [k, v] : kv.entries()) {
        if (k.rfind("extra.", 0) == 0) meta.extra.emplace_back(k.substr(6), v);
    }
    return meta;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelState& state, const CheckpointMeta& meta) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, 4);
    put_u16(out, kCheckpointVersion);
    const std::string meta_text = meta_to_kv(meta).to_string();
    put_u32(out, static_cast<std::uint32_t>(meta_text.size()));
    out.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
    const auto& params = state.parameters();
    put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        put_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        const auto& shape = p.tensor.shape();
        put_u32(out, static_cast<std::uint32_t>(shape.size()));
        for (int d : shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : p.tensor.values()) put_f64(out, v);
    }
    if (!out) throw IoError("write failed: " + path);
}

ModelState load_checkpoint(const std::string& path, CheckpointMeta* meta_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw IoError("not a checkpoint (bad magic): " + path);
    }
    const std::uint16_t version = get_u16(in, path);
    if (version != kCheckpointVersion) {
        throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    }
    const std::uint32_t meta_len = get_u32(in, path);
    std::string meta_text(meta_len, '\0');
    if (!in.read(meta_text.data(), meta_len)) throw IoError("truncated checkpoint: " + path);
    const CheckpointMeta meta = meta_from_kv(KeyValueFile::parse(meta_text));

    ModelState state(meta.config, meta.creation_seed);
    const std::uint32_t n_records = get_u32(in, path);
    if (n_records != state.parameters().size()) {
        throw IoError("checkpoint has " + std::to_string(n_records) + " parameters, model needs " +
                      std::to_string(state.parameters().size()) + ": " + path);
    }
    for (std::uint32_t r = 0; r < n_records; ++r) {
        const std::uint32_t name_len = get_u32(in, path);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw IoError("truncated checkpoint: " + path);
        const std::uint32_t rank = get_u32(in, path);
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(get_u32(in, path));
        num::NamedTensor param = state.parameter(name);  // throws on unknown name
        if (param.tensor.shape() != shape) {
            throw IoError("checkpoint parameter '" + name + "' has shape " + num::shape_str(shape) +
                          ", model wants " + num::shape_str(param.tensor.shape()) + ": " + path);
        }
        auto values = param.tensor.values_mut();
        for (auto& v : values) v = get_f64(in, path);
    }
    if (meta_out) *meta_out = meta;
    return state;
}

}  // namespace vit4lpa::model
