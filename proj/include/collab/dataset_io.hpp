#pragma once

#include <fstream>
#include <string>

#include "collab/binio.hpp"
#include "collab/scenario.hpp"

namespace collab {

// Versioned episode container (same tensor encoding as checkpoints) so
// benchmark datasets can be frozen and shipped. Round-trips bit-exactly.
namespace epc {
inline constexpr char magic[8] = {'C', 'P', 'E', 'P', 'I', 'S', 'E', 'T'};
inline constexpr std::uint32_t version = 1;
}  // namespace epc

namespace detail {

inline void write_label_grid(std::ostream& os, const LabelGrid& g) {
    binio::write_u32(os, static_cast<std::uint32_t>(g.h));
    binio::write_u32(os, static_cast<std::uint32_t>(g.w));
    binio::write_bytes(os, g.v.data(), g.v.size());
}

inline LabelGrid read_label_grid(std::istream& is) {
    const std::uint32_t h = binio::read_u32(is);
    const std::uint32_t w = binio::read_u32(is);
    if (h == 0 || w == 0 || h > (1u << 16) || w > (1u << 16))
        throw FormatError("label grid extent out of range");
    LabelGrid g(h, w);
    binio::read_bytes(is, g.v.data(), g.v.size());
    return g;
}

inline void write_observation(std::ostream& os, const Observation& o) {
    binio::write_u32(os, o.degraded ? 1 : 0);
    binio::write_tensor(os, o.data);
}

inline Observation read_observation(std::istream& is) {
    Observation o;
    o.degraded = binio::read_u32(is) != 0;
    o.data = binio::read_tensor(is);
    return o;
}

inline void write_episode(std::ostream& os, const Episode& ep) {
    write_observation(os, ep.target);
    write_observation(os, ep.target_clean);
    write_label_grid(os, ep.labels);
    binio::write_u32(os, static_cast<std::uint32_t>(ep.normals.size()));
    for (const Observation& o : ep.normals) write_observation(os, o);
    binio::write_u32(os, static_cast<std::uint32_t>(ep.best_agent));
    for (double f : ep.overlaps) binio::write_f64(os, f);
    binio::write_u32(os, static_cast<std::uint32_t>(ep.degrade_spec.kernel_size));
    binio::write_f64(os, ep.degrade_spec.noise_sigma);
}

inline Episode read_episode(std::istream& is, Setting setting, std::size_t expect_normals) {
    Episode ep;
    ep.setting = setting;
    ep.target = read_observation(is);
    ep.target_clean = read_observation(is);
    ep.labels = read_label_grid(is);
    const std::uint32_t n = binio::read_u32(is);
    if (n != expect_normals)
        throw FormatError("episode has " + std::to_string(n) + " normal agents, header says " +
                          std::to_string(expect_normals));
    ep.normals.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) ep.normals[i] = read_observation(is);
    ep.best_agent = binio::read_u32(is);
    if (ep.best_agent >= n) throw FormatError("best agent id out of range");
    ep.overlaps.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) ep.overlaps[i] = binio::read_f64(is);
    ep.degrade_spec.kernel_size = static_cast<int>(binio::read_u32(is));
    ep.degrade_spec.noise_sigma = binio::read_f64(is);
    return ep;
}

}  // namespace detail

inline void export_dataset(const Dataset& d, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open dataset file for writing: " + path);
    os.write(epc::magic, sizeof(epc::magic));
    binio::write_u32(os, epc::version);
    binio::write_u32(os, static_cast<std::uint32_t>(d.setting));
    binio::write_u32(os, static_cast<std::uint32_t>(d.config.agents));
    binio::write_u32(os, static_cast<std::uint32_t>(d.config.classes));
    binio::write_u32(os, static_cast<std::uint32_t>(d.config.obs_channels));
    binio::write_u32(os, static_cast<std::uint32_t>(d.config.obs_size));
    binio::write_u32(os, static_cast<std::uint32_t>(d.config.world_size));
    binio::write_u32(os, static_cast<std::uint32_t>(d.train.size()));
    binio::write_u32(os, static_cast<std::uint32_t>(d.val.size()));
    binio::write_u32(os, static_cast<std::uint32_t>(d.test.size()));
    for (const Episode& ep : d.train) detail::write_episode(os, ep);
    for (const Episode& ep : d.val) detail::write_episode(os, ep);
    for (const Episode& ep : d.test) detail::write_episode(os, ep);
    if (!os) throw FormatError("dataset write failed: " + path);
}

inline Dataset import_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open dataset file: " + path);
    char magic[sizeof(epc::magic)];
    is.read(magic, sizeof(magic));
    if (!is || std::string(magic, sizeof(magic)) != std::string(epc::magic, sizeof(epc::magic)))
        throw FormatError("not an episode container (bad magic): " + path);
    const std::uint32_t version = binio::read_u32(is);
    if (version != epc::version)
        throw VersionError("unsupported episode container version " + std::to_string(version) +
                           " (reader supports " + std::to_string(epc::version) + ")");
    Dataset d;
    const std::uint32_t setting = binio::read_u32(is);
    if (setting > static_cast<std::uint32_t>(Setting::RandomExploration))
        throw FormatError("invalid setting id in file");
    d.setting = static_cast<Setting>(setting);
    d.config.agents = binio::read_u32(is);
    d.config.classes = binio::read_u32(is);
    d.config.obs_channels = binio::read_u32(is);
    d.config.obs_size = binio::read_u32(is);
    d.config.world_size = binio::read_u32(is);
    const std::uint32_t n_train = binio::read_u32(is);
    const std::uint32_t n_val = binio::read_u32(is);
    const std::uint32_t n_test = binio::read_u32(is);
    d.config.train_episodes = n_train;
    d.config.val_episodes = n_val;
    d.config.test_episodes = n_test;
    const std::size_t normals = d.config.agents - 1;
    auto read_block = [&](std::uint32_t n) {
        std::vector<Episode> eps;
        eps.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i)
            eps.push_back(detail::read_episode(is, d.setting, normals));
        return eps;
    };
    d.train = read_block(n_train);
    d.val = read_block(n_val);
    d.test = read_block(n_test);
    return d;
}

}  // namespace collab
