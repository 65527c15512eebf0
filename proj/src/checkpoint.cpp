#include "babelkit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "babelkit/errors.hpp"
#include "babelkit/rng.hpp"

namespace babel {

namespace {

void put_u32(std::string& buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const std::string& buf, size_t off) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
    return v;
}

uint64_t get_u64(const std::string& buf, size_t off) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
    return v;
}

std::string render_metadata(const std::map<std::string, std::string>& meta) {
    std::string out;
    for (const auto& [k, v] : meta) {
        if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos)
            throw ValidationError("metadata key contains '=' or newline: " + k);
        if (v.find('\n') != std::string::npos)
            throw ValidationError("metadata value for " + k + " contains a newline");
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

std::map<std::string, std::string> parse_metadata(const std::string& blob) {
    std::map<std::string, std::string> meta;
    size_t pos = 0;
    while (pos < blob.size()) {
        size_t nl = blob.find('\n', pos);
        if (nl == std::string::npos) throw ValidationError("metadata block not newline-terminated");
        std::string line = blob.substr(pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("metadata line without '=': " + line);
        meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return meta;
}

int meta_int(const std::map<std::string, std::string>& meta, const std::string& key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw ValidationError("checkpoint metadata missing " + key);
    try {
        size_t used = 0;
        int v = std::stoi(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ValidationError("checkpoint metadata " + key + " is not an integer: " + it->second);
    }
}

std::string meta_str(const std::map<std::string, std::string>& meta, const std::string& key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw ValidationError("checkpoint metadata missing " + key);
    return it->second;
}

}  // namespace

void config_to_metadata(const ModelConfig& cfg, std::map<std::string, std::string>& meta) {
    meta["d_model"] = std::to_string(cfg.d_model);
    meta["n_layers"] = std::to_string(cfg.n_layers);
    meta["n_heads"] = std::to_string(cfg.n_heads);
    meta["d_ff"] = std::to_string(cfg.d_ff);
    meta["context_len"] = std::to_string(cfg.context_len);
    meta["vocab_size"] = std::to_string(cfg.vocab_size);
    meta["pos_encoding"] = to_string(cfg.pos_encoding);
    meta["nonlinearity"] = to_string(cfg.nonlinearity);
    meta["precision"] = to_string(cfg.precision);
}

ModelConfig config_from_metadata(const std::map<std::string, std::string>& meta) {
    ModelConfig cfg;
    cfg.d_model = meta_int(meta, "d_model");
    cfg.n_layers = meta_int(meta, "n_layers");
    cfg.n_heads = meta_int(meta, "n_heads");
    cfg.d_ff = meta_int(meta, "d_ff");
    cfg.context_len = meta_int(meta, "context_len");
    cfg.vocab_size = meta_int(meta, "vocab_size");
    cfg.pos_encoding = pos_encoding_from_string(meta_str(meta, "pos_encoding"));
    cfg.nonlinearity = nonlinearity_from_string(meta_str(meta, "nonlinearity"));
    cfg.precision = precision_from_string(meta_str(meta, "precision"));
    cfg.validate();
    return cfg;
}

void save_checkpoint(const std::string& path, ModelCheckpoint& ck) {
    ck.config.validate();
    size_t need = total_weight_count(ck.config);
    if (ck.weights.size() != need)
        throw ValidationError("checkpoint weight count " + std::to_string(ck.weights.size()) +
                              " does not match layout count " + std::to_string(need));
    config_to_metadata(ck.config, ck.metadata);
    ck.metadata["tokenizer_mode"] =
        ck.tokenizer.mode() == Tokenizer::Mode::byte_level ? "byte_level" : "learned_merge";
    ck.metadata["tokenizer_merges"] = ck.tokenizer.serialize_merges();
    ck.metadata["tool_version"] = kToolVersion;

    std::string buf;
    buf.reserve(ck.weights.size() * 4 + 4096);
    buf += "BBLF";
    put_u32(buf, kCheckpointVersion);
    std::string meta = render_metadata(ck.metadata);
    put_u32(buf, static_cast<uint32_t>(meta.size()));
    buf += meta;
    for (float f : ck.weights) put_u32(buf, std::bit_cast<uint32_t>(f));
    Fnv1a h;
    h.update(buf.data(), buf.size());
    ck.content_hash = h.digest();
    put_u64(buf, ck.content_hash);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot open for writing: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw RuntimeFailure("short write: " + path);
}

ModelCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 12 + 8) throw ValidationError("checkpoint truncated: " + path);
    if (buf.compare(0, 4, "BBLF") != 0)
        throw ValidationError("bad checkpoint magic in " + path);
    uint32_t ver = get_u32(buf, 4);
    if (ver != kCheckpointVersion)
        throw ValidationError("unsupported checkpoint version " + std::to_string(ver) + " in " +
                              path);
    uint32_t meta_len = get_u32(buf, 8);
    size_t pos = 12;
    if (pos + meta_len + 8 > buf.size()) throw ValidationError("checkpoint truncated: " + path);
    ModelCheckpoint ck;
    ck.metadata = parse_metadata(buf.substr(pos, meta_len));
    pos += meta_len;
    ck.config = config_from_metadata(ck.metadata);
    {
        std::string mode = meta_str(ck.metadata, "tokenizer_mode");
        auto mit = ck.metadata.find("tokenizer_merges");
        std::string merges = mit == ck.metadata.end() ? std::string() : mit->second;
        ck.tokenizer = Tokenizer::from_metadata(mode, merges);
        if (ck.tokenizer.vocab_size() != ck.config.vocab_size)
            throw ValidationError("tokenizer vocab " + std::to_string(ck.tokenizer.vocab_size()) +
                                  " does not match model vocab " +
                                  std::to_string(ck.config.vocab_size));
    }
    size_t need = total_weight_count(ck.config);
    if (pos + need * 4 + 8 != buf.size())
        throw ValidationError("checkpoint size does not match declared config: " + path);
    uint64_t stored = get_u64(buf, buf.size() - 8);
    Fnv1a h;
    h.update(buf.data(), buf.size() - 8);
    if (h.digest() != stored)
        throw ValidationError("checkpoint content hash mismatch: " + path);
    ck.content_hash = stored;
    ck.weights.resize(need);
    for (size_t i = 0; i < need; ++i)
        ck.weights[i] = std::bit_cast<float>(get_u32(buf, pos + i * 4));
    return ck;
}

}  // namespace babel
