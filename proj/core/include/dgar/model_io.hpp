#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "dgar/dataset.hpp"
#include "dgar/model.hpp"

namespace dgar::nn {

// Checkpoint file: magic, manifest JSON (config + shapes + checksum), then
// a little-endian parameter blob (f32 by default; f64 models keep native
// width so a round trip is bit-exact). BN running stats are part of the
// blob.

namespace ckpt_detail {

inline constexpr char kMagic[8] = {'D', 'G', 'A', 'R', 'C', 'K', 'P', '1'};

template <class S>
void append_tensor(std::string& out, const Tensor<S>& t) {
    for (int64_t i = 0; i < t.numel(); ++i) {
        if constexpr (std::is_same_v<S, float>) {
            uint32_t u = std::bit_cast<uint32_t>(t[i]);
            for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((u >> (8 * b)) & 0xff));
        } else {
            uint64_t u = std::bit_cast<uint64_t>(t[i]);
            for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((u >> (8 * b)) & 0xff));
        }
    }
}

template <class S>
void read_tensor(const std::string& in, size_t& at, Tensor<S>& t) {
    constexpr size_t w = sizeof(S);
    if (at + static_cast<size_t>(t.numel()) * w > in.size())
        throw DataError("checkpoint blob truncated");
    for (int64_t i = 0; i < t.numel(); ++i) {
        if constexpr (std::is_same_v<S, float>) {
            uint32_t u = 0;
            for (int b = 0; b < 4; ++b)
                u |= static_cast<uint32_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
            t[i] = std::bit_cast<float>(u);
        } else {
            uint64_t u = 0;
            for (int b = 0; b < 8; ++b)
                u |= static_cast<uint64_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
            t[i] = std::bit_cast<double>(u);
        }
        at += w;
    }
}

inline nlohmann::json config_to_json(const ModelConfig& c) {
    nlohmann::json j;
    j["in_channels"] = c.in_channels;
    j["seq_len"] = c.seq_len;
    j["hidden_dim"] = c.hidden_dim;
    j["adapters"] = c.adapters;
    j["n_classes"] = c.n_classes;
    j["se_reduction"] = c.se_reduction;
    j["activation"] = to_string(c.activation);
    j["adapter_hidden"] = c.adapter_hidden;
    j["scorer_hidden"] = c.scorer_hidden;
    j["backbone"] = to_string(c.backbone);
    return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.in_channels = j.at("in_channels").get<int64_t>();
    c.seq_len = j.at("seq_len").get<int64_t>();
    c.hidden_dim = j.at("hidden_dim").get<int64_t>();
    c.adapters = j.at("adapters").get<int64_t>();
    c.n_classes = j.at("n_classes").get<int64_t>();
    c.se_reduction = j.at("se_reduction").get<int64_t>();
    c.activation = activation_from_string(j.at("activation").get<std::string>());
    c.adapter_hidden = j.at("adapter_hidden").get<int64_t>();
    c.scorer_hidden = j.at("scorer_hidden").get<int64_t>();
    c.backbone = backbone_from_string(j.at("backbone").get<std::string>());
    return c;
}

}  // namespace ckpt_detail

template <class S>
void save_checkpoint(DgarModel<S>& model, const std::string& path) {
    std::string blob;
    nlohmann::json shapes = nlohmann::json::array();
    for (auto* p : model.parameters()) {
        ckpt_detail::append_tensor(blob, p->value);
        shapes.push_back({{"name", p->name}, {"shape", p->value.shape()}});
    }
    for (auto* b : model.bn_buffers()) {
        ckpt_detail::append_tensor(blob, b->running_mean);
        ckpt_detail::append_tensor(blob, b->running_var);
    }
    nlohmann::json j;
    j["config"] = ckpt_detail::config_to_json(model.config());
    j["dtype"] = dtype_name(dtype_of<S>());
    j["params"] = shapes;
    j["blob_checksum"] = data::fnv1a(blob.data(), blob.size());
    std::string manifest = j.dump();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write checkpoint " + path);
    f.write(ckpt_detail::kMagic, 8);
    uint64_t len = manifest.size();
    char lenb[8];
    for (int i = 0; i < 8; ++i) lenb[i] = static_cast<char>((len >> (8 * i)) & 0xff);
    f.write(lenb, 8);
    f.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!f) throw DataError("short write to checkpoint " + path);
}

template <class S>
DgarModel<S> load_checkpoint(const std::string& path, uint64_t seed = 0) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    std::string bytes = ss.str();
    if (bytes.size() < 16 || std::memcmp(bytes.data(), ckpt_detail::kMagic, 8) != 0)
        throw DataError("not a checkpoint file: " + path);
    uint64_t len = 0;
    for (int i = 0; i < 8; ++i)
        len |= static_cast<uint64_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
    if (16 + len > bytes.size()) throw DataError("checkpoint manifest truncated");
    nlohmann::json j = nlohmann::json::parse(bytes.substr(16, len));
    if (j.at("dtype").get<std::string>() != dtype_name(dtype_of<S>()))
        throw DataError("checkpoint dtype is " + j.at("dtype").get<std::string>() +
                        ", loader instantiated for " + dtype_name(dtype_of<S>()));
    ModelConfig cfg = ckpt_detail::config_from_json(j.at("config"));
    DgarModel<S> model(cfg, seed);

    std::string blob = bytes.substr(16 + len);
    if (j.at("blob_checksum").get<uint64_t>() != data::fnv1a(blob.data(), blob.size()))
        throw DataError("checkpoint blob checksum failure");
    size_t at = 0;
    auto params = model.parameters();
    auto shapes = j.at("params");
    if (shapes.size() != params.size())
        throw DataError("checkpoint has " + std::to_string(shapes.size()) + " parameters, model " +
                        std::to_string(params.size()));
    for (size_t i = 0; i < params.size(); ++i) {
        auto shape = shapes[i].at("shape").get<std::vector<int64_t>>();
        if (shape != params[i]->value.shape())
            throw DataError("checkpoint parameter " + params[i]->name + " shape mismatch");
        ckpt_detail::read_tensor(blob, at, params[i]->value);
    }
    for (auto* b : model.bn_buffers()) {
        ckpt_detail::read_tensor(blob, at, b->running_mean);
        ckpt_detail::read_tensor(blob, at, b->running_var);
    }
    if (at != blob.size()) throw DataError("checkpoint blob has trailing bytes");
    return model;
}

}  // namespace dgar::nn
