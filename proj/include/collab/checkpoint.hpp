#pragma once

#include <fstream>
#include <string>

#include "collab/binio.hpp"
#include "collab/model.hpp"

namespace collab {

// Versioned binary checkpoint: magic, format version, config block, then
// named tensors. Round-trips are bit-exact.
namespace ckpt {
inline constexpr char magic[8] = {'C', 'P', 'H', 'S', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t version = 1;
}  // namespace ckpt

struct Checkpoint {
    ModelConfig config;
    BaselineKind kind = BaselineKind::OursWithMsg;
    ParamStore params;
};

inline void write_model_config(std::ostream& os, const ModelConfig& c, BaselineKind kind) {
    binio::write_u32(os, static_cast<std::uint32_t>(c.message_size));
    binio::write_u32(os, static_cast<std::uint32_t>(c.key_size));
    binio::write_u32(os, static_cast<std::uint32_t>(c.channels));
    binio::write_u32(os, static_cast<std::uint32_t>(c.classes));
    binio::write_u32(os, static_cast<std::uint32_t>(c.variant));
    binio::write_u32(os, static_cast<std::uint32_t>(c.top_n));
    binio::write_u32(os, static_cast<std::uint32_t>(c.agents));
    binio::write_u32(os, static_cast<std::uint32_t>(c.obs_channels));
    binio::write_u32(os, static_cast<std::uint32_t>(c.obs_size));
    binio::write_u32(os, static_cast<std::uint32_t>(c.additive_hidden));
    binio::write_u32(os, static_cast<std::uint32_t>(kind));
}

inline std::pair<ModelConfig, BaselineKind> read_model_config(std::istream& is) {
    ModelConfig c;
    c.message_size = binio::read_u32(is);
    c.key_size = binio::read_u32(is);
    c.channels = binio::read_u32(is);
    c.classes = binio::read_u32(is);
    const std::uint32_t variant = binio::read_u32(is);
    if (variant > 2) throw FormatError("invalid attention variant in file");
    c.variant = static_cast<AttentionVariant>(variant);
    c.top_n = binio::read_u32(is);
    c.agents = binio::read_u32(is);
    c.obs_channels = binio::read_u32(is);
    c.obs_size = binio::read_u32(is);
    c.additive_hidden = binio::read_u32(is);
    const std::uint32_t kind = binio::read_u32(is);
    if (kind > static_cast<std::uint32_t>(BaselineKind::OursWithoutMsg))
        throw FormatError("invalid method id in file");
    return {c, static_cast<BaselineKind>(kind)};
}

inline void save_checkpoint(const ParamStore& params, const ModelConfig& config, BaselineKind kind,
                            const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open checkpoint for writing: " + path);
    os.write(ckpt::magic, sizeof(ckpt::magic));
    binio::write_u32(os, ckpt::version);
    write_model_config(os, config, kind);
    binio::write_u32(os, static_cast<std::uint32_t>(params.tensor_count()));
    for (const auto& [name, t] : params.values()) {
        binio::write_string(os, name);
        binio::write_tensor(os, t);
    }
    if (!os) throw FormatError("checkpoint write failed: " + path);
}

inline void save_checkpoint(const AgentModel& model, const std::string& path) {
    save_checkpoint(model.params(), model.config(), model.kind(), path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint: " + path);
    char magic[sizeof(ckpt::magic)];
    is.read(magic, sizeof(magic));
    if (!is || std::string(magic, sizeof(magic)) != std::string(ckpt::magic, sizeof(ckpt::magic)))
        throw FormatError("not a checkpoint file (bad magic): " + path);
    const std::uint32_t version = binio::read_u32(is);
    if (version != ckpt::version)
        throw VersionError("unsupported checkpoint version " + std::to_string(version) +
                           " (reader supports " + std::to_string(ckpt::version) + ")");
    Checkpoint out;
    auto [cfg, kind] = read_model_config(is);
    out.config = cfg;
    out.kind = kind;
    const std::uint32_t count = binio::read_u32(is);
    const auto spec = AgentModel::param_spec(out.config, out.kind);
    if (count != spec.size())
        throw ShapeError("checkpoint holds " + std::to_string(count) + " tensors, config implies " +
                         std::to_string(spec.size()));
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = binio::read_string(is);
        Tensor t = binio::read_tensor(is);
        auto it = spec.find(name);
        if (it == spec.end()) throw ShapeError("unexpected parameter tensor: " + name);
        if (t.shape() != it->second)
            throw ShapeError(name + ": checkpoint shape " + shape_str(t.shape()) +
                             " does not match config " + shape_str(it->second));
        out.params.create(name, t.shape()) = std::move(t);
    }
    return out;
}

// Field-by-field comparison used when a caller pins expectations (e.g. CLI
// overrides); throws ShapeError naming the first mismatching field.
inline void require_matches(const ModelConfig& ckpt_cfg, const ModelConfig& expected) {
    auto field = [](const char* name, std::size_t a, std::size_t b) {
        if (a != b)
            throw ShapeError(std::string(name) + ": checkpoint has " + std::to_string(a) +
                             ", expected " + std::to_string(b));
    };
    field("model.message-size", ckpt_cfg.message_size, expected.message_size);
    field("model.key-size", ckpt_cfg.key_size, expected.key_size);
    field("model.channels", ckpt_cfg.channels, expected.channels);
    field("scenario.classes", ckpt_cfg.classes, expected.classes);
    field("model.top-n", ckpt_cfg.top_n, expected.top_n);
    field("scenario.agents", ckpt_cfg.agents, expected.agents);
    field("scenario.obs-channels", ckpt_cfg.obs_channels, expected.obs_channels);
    field("scenario.obs-size", ckpt_cfg.obs_size, expected.obs_size);
    field("model.additive-hidden", ckpt_cfg.additive_hidden, expected.additive_hidden);
    if (ckpt_cfg.variant != expected.variant)
        throw ShapeError(std::string("model.variant: checkpoint has ") + to_string(ckpt_cfg.variant) +
                         ", expected " + to_string(expected.variant));
}

}  // namespace collab
