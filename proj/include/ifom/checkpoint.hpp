#pragma once

// Checkpoint archive: one file holding named parameter arrays plus a JSON
// metadata block.
//
// Layout (little-endian):
//   8 bytes   magic "IFOMCKPT"
//   uint32    format version
//   uint64    header length L
//   L bytes   JSON header: {"meta": {...}, "tensors": [{"name", "shape"}...]}
//   doubles   tensor payloads, concatenated in header order

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "ifom/models.hpp"
#include "ifom/optim.hpp"

namespace ifom {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'I', 'F', 'O', 'M', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

struct Archive {
    nlohmann::json meta = nlohmann::json::object();
    std::map<std::string, Tensor> tensors;

    const Tensor& tensor(const std::string& name) const {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw Incompatible("checkpoint lacks tensor '" + name + "'");
        return it->second;
    }
};

inline void save_archive(const std::string& path, const Archive& a,
                         std::uint32_t version = kCheckpointFormatVersion) {
    nlohmann::json header;
    header["meta"] = a.meta;
    header["tensors"] = nlohmann::json::array();
    for (const auto& [name, t] : a.tensors) header["tensors"].push_back({{"name", name}, {"shape", t.shape()}});
    const std::string h = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path);
    const std::uint64_t len = h.size();
    out.write(kCheckpointMagic, 8);
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& [_, t] : a.tensors)
        out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!out) throw IoError("write failed for checkpoint " + path);
}

inline Archive load_archive(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint " + path);
    char magic[8];
    std::uint32_t version = 0;
    std::uint64_t len = 0;
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw IoError(path + " is not a checkpoint");
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    if (version != kCheckpointFormatVersion)
        throw Incompatible("checkpoint format version " + std::to_string(version) + " (expected " +
                           std::to_string(kCheckpointFormatVersion) + ")");
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || len > (1ull << 32)) throw IoError(path + ": corrupt header length");
    std::string h(len, '\0');
    in.read(h.data(), static_cast<std::streamsize>(len));
    Archive a;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(h);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": corrupt header: " + e.what());
    }
    a.meta = header.at("meta");
    for (const auto& t : header.at("tensors")) {
        Tensor v(t.at("shape").get<Shape>());
        in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.numel() * sizeof(double)));
        if (!in) throw IoError(path + ": truncated tensor data");
        a.tensors.emplace(t.at("name").get<std::string>(), std::move(v));
    }
    return a;
}

// ---------------------------------------------------------------------------
// Model (de)serialization helpers

inline nlohmann::json to_json(const BackboneConfig& c) {
    return {{"arch_id", to_string(c.arch_id)},
            {"input_shape", c.input_shape},
            {"embedding_dim", c.embedding_dim},
            {"width_multiplier", c.width_multiplier},
            {"pooling", to_string(c.pooling)},
            {"generator_skips", c.generator_skips}};
}

inline BackboneConfig backbone_from_json(const nlohmann::json& j) {
    BackboneConfig c;
    c.arch_id = parse_arch(j.at("arch_id").get<std::string>());
    c.input_shape = j.at("input_shape").get<std::array<std::size_t, 3>>();
    c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    c.width_multiplier = j.at("width_multiplier").get<double>();
    c.pooling = parse_pooling(j.at("pooling").get<std::string>());
    c.generator_skips = j.at("generator_skips").get<bool>();
    c.validate();
    return c;
}

inline void put_params(Archive& a, const std::string& prefix, const ParamMap& pm) {
    for (const auto& [k, p] : pm) a.tensors[prefix + k] = p.value;
}

/// Copies archive tensors into an already-built network of matching shape.
inline void get_params(const Archive& a, const std::string& prefix, ParamMap& pm) {
    for (auto& [k, p] : pm) {
        const Tensor& t = a.tensor(prefix + k);
        if (t.shape() != p.value.shape())
            throw Incompatible("tensor '" + prefix + k + "' has shape " + shape_str(t.shape()) + ", network expects " +
                               shape_str(p.value.shape()));
        p.value = t;
        p.grad = Tensor::zeros_like(t);
    }
}

inline void put_optimizer(Archive& a, const std::string& prefix, const Optimizer& opt) {
    a.meta["optimizers"][prefix] = {{"steps", opt.steps()}};
    for (const auto& [k, t] : opt.first_moments()) a.tensors[prefix + "m/" + k] = t;
    for (const auto& [k, t] : opt.second_moments()) a.tensors[prefix + "v/" + k] = t;
}

inline void get_optimizer(const Archive& a, const std::string& prefix, Optimizer& opt) {
    opt.set_steps(a.meta.at("optimizers").at(prefix).at("steps").get<std::size_t>());
    opt.first_moments().clear();
    opt.second_moments().clear();
    const std::string pm = prefix + "m/", pv = prefix + "v/";
    for (const auto& [k, t] : a.tensors) {
        if (k.rfind(pm, 0) == 0) opt.first_moments()[k.substr(pm.size())] = t;
        if (k.rfind(pv, 0) == 0) opt.second_moments()[k.substr(pv.size())] = t;
    }
}

inline void put_scalar_head(Archive& a, const std::string& prefix, const ScalarHead& h) {
    put_params(a, prefix + "trunk/", h.trunk().params());
    put_params(a, prefix + "head/", h.head());
}

inline void get_scalar_head(const Archive& a, const std::string& prefix, ScalarHead& h) {
    get_params(a, prefix + "trunk/", h.trunk().params());
    get_params(a, prefix + "head/", h.head());
}

inline void check_backbone(const Archive& a, const BackboneConfig& expected) {
    const BackboneConfig stored = backbone_from_json(a.meta.at("backbone"));
    if (!(stored == expected))
        throw Incompatible("checkpoint backbone " + to_json(stored).dump() + " does not match configured " +
                           to_json(expected).dump());
}

/// Detector checkpoint: H's trunk and head plus its backbone config.
inline void save_detector(const std::string& path, const Detector& h, const nlohmann::json& extra = {}) {
    Archive a;
    a.meta["kind"] = "detector";
    a.meta["backbone"] = to_json(h.trunk().config());
    if (!extra.is_null()) a.meta["extra"] = extra;
    put_scalar_head(a, "H/", h);
    save_archive(path, a);
}

inline Detector load_detector(const std::string& path) {
    Archive a = load_archive(path);
    if (a.meta.value("kind", "") != "detector") throw Incompatible(path + " is not a detector checkpoint");
    const BackboneConfig cfg = backbone_from_json(a.meta.at("backbone"));
    std::mt19937_64 rng(0);
    Detector h(Extractor(cfg, rng), kHeadInitStd, rng);
    get_scalar_head(a, "H/", h);
    return h;
}

}  // namespace ifom
