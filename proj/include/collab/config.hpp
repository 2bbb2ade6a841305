#pragma once

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "collab/baselines.hpp"
#include "collab/scenario.hpp"
#include "collab/train.hpp"

namespace collab {

// Fully resolved run configuration.
struct RunConfig {
    std::uint64_t seed = 1;
    Setting setting = Setting::HiddenTarget;
    BaselineKind baseline = BaselineKind::OursWithMsg;
    ScenarioConfig scenario;
    ModelConfig model;
    TrainConfig train;

    void validate() const {
        scenario.validate();
        model.validate();
        train.validate();
    }
};

namespace cfgkeys {

// Flat registry of dotted keys with defaults. Unknown keys are rejected
// everywhere (file and command line).
inline const std::vector<std::pair<std::string, std::string>>& defaults() {
    static const std::vector<std::pair<std::string, std::string>> table = {
        {"seed", "1"},
        {"scenario.setting", "hidden-target"},
        {"scenario.world-size", "64"},
        {"scenario.classes", "6"},
        {"scenario.agents", "5"},
        {"scenario.obs-size", "16"},
        {"scenario.obs-channels", "3"},
        {"scenario.blur-kernel-max", "7"},
        {"scenario.noise-sigma-min", "0.1"},
        {"scenario.noise-sigma-max", "0.4"},
        {"scenario.pose-noise-max", "2"},
        {"scenario.overlap-ranges", ""},
        {"scenario.train-episodes", "600"},
        {"scenario.val-episodes", "200"},
        {"scenario.test-episodes", "200"},
        {"model.message-size", "8"},
        {"model.key-size", "1024"},
        {"model.channels", "16"},
        {"model.variant", "general"},
        {"model.top-n", "1"},
        {"model.additive-hidden", "0"},
        {"train.baseline", "ours-with-msg"},
        {"train.iterations", "3000"},
        {"train.batch", "8"},
        {"train.lr", "0.001"},
        {"train.eval-every", "0"},
    };
    return table;
}

}  // namespace cfgkeys

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const double out = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size() || v.empty())
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    return out;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t end = s.find(sep, start);
        if (end == std::string::npos) end = s.size();
        out.push_back(s.substr(start, end - start));
        start = end + 1;
    }
    return out;
}

inline std::vector<std::pair<double, double>> parse_overlap_ranges(const std::string& v) {
    std::vector<std::pair<double, double>> out;
    if (trim(v).empty()) return out;
    for (const std::string& part : split(v, ',')) {
        const auto bounds = split(trim(part), ':');
        if (bounds.size() != 2)
            throw ConfigError("scenario.overlap-ranges: expected lo:hi pairs, got '" + part + "'");
        out.emplace_back(parse_double("scenario.overlap-ranges", trim(bounds[0])),
                         parse_double("scenario.overlap-ranges", trim(bounds[1])));
    }
    return out;
}

}  // namespace detail

// Key/value configuration with file loading and command-line overrides.
class ConfigMap {
public:
    ConfigMap() {
        for (const auto& [k, v] : cfgkeys::defaults()) values_[k] = v;
    }

    // Lines of `key = value`; '#' starts a comment. Duplicate or unknown keys
    // are configuration errors.
    void load_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw ConfigError("cannot open config file: " + path);
        std::set<std::string> seen;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            const std::string t = detail::trim(line);
            if (t.empty()) continue;
            const std::size_t eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
            const std::string key = detail::trim(t.substr(0, eq));
            if (!seen.insert(key).second)
                throw ConfigError(path + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
            set(key, detail::trim(t.substr(eq + 1)));
        }
    }

    void set(const std::string& key, const std::string& value) {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown config key: '" + key + "'");
        it->second = value;
        explicit_.insert(key);
    }

    const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown config key: '" + key + "'");
        return it->second;
    }

    bool was_set(const std::string& key) const { return explicit_.count(key) != 0; }

    // Frozen resolved copy; reparsing it reproduces this configuration.
    void write(std::ostream& os) const {
        for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
    }

    RunConfig resolve() const {
        RunConfig rc;
        rc.seed = detail::parse_u64("seed", get("seed"));
        rc.setting = parse_setting(get("scenario.setting"));
        rc.baseline = parse_baseline(get("train.baseline"));

        ScenarioConfig& sc = rc.scenario;
        sc.world_size = detail::parse_u64("scenario.world-size", get("scenario.world-size"));
        sc.classes = detail::parse_u64("scenario.classes", get("scenario.classes"));
        sc.agents = detail::parse_u64("scenario.agents", get("scenario.agents"));
        sc.obs_size = detail::parse_u64("scenario.obs-size", get("scenario.obs-size"));
        sc.obs_channels = detail::parse_u64("scenario.obs-channels", get("scenario.obs-channels"));
        sc.blur_kernel_max = static_cast<int>(
            detail::parse_u64("scenario.blur-kernel-max", get("scenario.blur-kernel-max")));
        sc.noise_sigma_min =
            detail::parse_double("scenario.noise-sigma-min", get("scenario.noise-sigma-min"));
        sc.noise_sigma_max =
            detail::parse_double("scenario.noise-sigma-max", get("scenario.noise-sigma-max"));
        sc.pose_noise_max = static_cast<int>(
            detail::parse_u64("scenario.pose-noise-max", get("scenario.pose-noise-max")));
        sc.overlap_ranges = detail::parse_overlap_ranges(get("scenario.overlap-ranges"));
        sc.train_episodes = detail::parse_u64("scenario.train-episodes", get("scenario.train-episodes"));
        sc.val_episodes = detail::parse_u64("scenario.val-episodes", get("scenario.val-episodes"));
        sc.test_episodes = detail::parse_u64("scenario.test-episodes", get("scenario.test-episodes"));

        ModelConfig& mc = rc.model;
        mc.message_size = detail::parse_u64("model.message-size", get("model.message-size"));
        mc.key_size = detail::parse_u64("model.key-size", get("model.key-size"));
        mc.channels = detail::parse_u64("model.channels", get("model.channels"));
        mc.variant = parse_attention_variant(get("model.variant"));
        mc.top_n = detail::parse_u64("model.top-n", get("model.top-n"));
        mc.additive_hidden = detail::parse_u64("model.additive-hidden", get("model.additive-hidden"));
        mc.classes = sc.classes;
        mc.agents = sc.agents;
        mc.obs_channels = sc.obs_channels;
        mc.obs_size = sc.obs_size;

        TrainConfig& tc = rc.train;
        tc.seed = rc.seed;
        tc.iterations = detail::parse_u64("train.iterations", get("train.iterations"));
        tc.batch = detail::parse_u64("train.batch", get("train.batch"));
        tc.lr = detail::parse_double("train.lr", get("train.lr"));
        tc.eval_every = detail::parse_u64("train.eval-every", get("train.eval-every"));

        rc.validate();
        return rc;
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
    std::set<std::string> explicit_;
};

inline Dataset build_dataset(const RunConfig& rc) {
    return build_split(rc.setting, rc.scenario, rc.seed);
}

}  // namespace collab
