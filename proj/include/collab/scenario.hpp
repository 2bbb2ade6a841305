#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "collab/model.hpp"
#include "collab/rng.hpp"
#include "collab/tensor.hpp"

namespace collab {

// The four evaluation settings. Hidden target hides an un-degraded copy of
// the target view among the normal agents; the pose settings give the normal
// agents partially overlapping views aligned (exactly or noisily) to the
// target frame; random exploration draws overlaps fully at random.
enum class Setting { HiddenTarget, AccuratePose, InaccuratePose, RandomExploration };

inline const char* to_string(Setting s) {
    switch (s) {
        case Setting::HiddenTarget: return "hidden-target";
        case Setting::AccuratePose: return "accurate-pose";
        case Setting::InaccuratePose: return "inaccurate-pose";
        case Setting::RandomExploration: return "random-exploration";
    }
    return "?";
}

inline Setting parse_setting(const std::string& s) {
    for (Setting x : {Setting::HiddenTarget, Setting::AccuratePose, Setting::InaccuratePose,
                      Setting::RandomExploration})
        if (s == to_string(x)) return x;
    throw ConfigError("unknown setting: '" + s + "'");
}

// Cross-frame alignment info travels in these settings (6 scalars per link).
inline bool uses_pose(Setting s) { return s != Setting::HiddenTarget; }

struct World {
    std::uint64_t seed = 0;
    std::size_t size = 0;     // L
    std::size_t classes = 0;  // C
    LabelGrid labels;         // L x L class ids
    Tensor appearance;        // 3 x L x L in [0,1]
};

struct DegradeSpec {
    int kernel_size = 1;      // odd, >= 1
    double noise_sigma = 0.0;

    void validate() const {
        if (kernel_size < 1 || kernel_size % 2 == 0)
            throw ConfigError("blur kernel size must be odd and >= 1, got " +
                              std::to_string(kernel_size));
        if (noise_sigma < 0.0) throw ConfigError("noise sigma must be >= 0");
    }
};

// One scene: degraded target view, its clean counterpart and labels, the
// normal agents' views (aligned to the target frame in pose settings), and
// the ground-truth best agent.
struct Episode {
    Observation target;        // degraded
    Observation target_clean;  // un-degraded target view
    LabelGrid labels;          // H x W ground truth at the target window
    std::vector<Observation> normals;
    std::size_t best_agent = 0;
    Setting setting = Setting::HiddenTarget;
    std::vector<double> overlaps;  // true overlap fraction per normal agent
    DegradeSpec degrade_spec;
};

struct ScenarioConfig {
    std::size_t world_size = 64;  // L
    std::size_t classes = 6;      // C
    std::size_t obs_channels = 3;
    std::size_t obs_size = 16;    // H = W
    std::size_t agents = 5;       // N
    int blur_kernel_max = 7;
    double noise_sigma_min = 0.1;
    double noise_sigma_max = 0.4;
    int pose_noise_max = 2;
    std::vector<std::pair<double, double>> overlap_ranges;  // empty -> defaults
    std::size_t train_episodes = 600;
    std::size_t val_episodes = 200;
    std::size_t test_episodes = 200;

    void validate() const {
        if (classes < 2 || classes > 255) throw ConfigError("class count must be in [2, 255]");
        if (obs_channels != 3) throw ConfigError("appearance model is RGB; obs channels must be 3");
        if (obs_size < 8 || (obs_size & (obs_size - 1)) != 0)
            throw ConfigError("observation size must be a power of two >= 8");
        if (world_size < 4 * obs_size)
            throw ConfigError("world size must be >= 4x observation size");
        if (agents < 2) throw ConfigError("agent count must be >= 2");
        if (blur_kernel_max < 1 || blur_kernel_max % 2 == 0)
            throw ConfigError("blur kernel max must be odd and >= 1");
        if (noise_sigma_min < 0 || noise_sigma_max < noise_sigma_min)
            throw ConfigError("noise sigma range invalid");
        if (pose_noise_max < 0) throw ConfigError("pose noise must be >= 0");
        if (!overlap_ranges.empty()) {
            if (overlap_ranges.size() != agents - 1)
                throw ConfigError("need one overlap range per normal agent (" +
                                  std::to_string(agents - 1) + ")");
            for (auto [lo, hi] : overlap_ranges)
                if (lo < 0 || hi > 1 || hi < lo) throw ConfigError("overlap range must satisfy 0 <= lo <= hi <= 1");
        }
        if (train_episodes < 1 || val_episodes < 1 || test_episodes < 1)
            throw ConfigError("each split needs at least one episode");
    }

    std::vector<std::pair<double, double>> resolved_overlap_ranges() const {
        if (!overlap_ranges.empty()) return overlap_ranges;
        const std::size_t n = agents - 1;
        std::vector<std::pair<double, double>> r(n);
        for (std::size_t i = 0; i < n; ++i) {
            r[i] = {0.9 * static_cast<double>(n - i - 1) / static_cast<double>(n),
                    0.9 * static_cast<double>(n - i) / static_cast<double>(n)};
        }
        return r;
    }
};

// Distinct per-class base colors on the hue wheel.
inline void class_color(std::size_t c, std::size_t classes, double rgb[3]) {
    const double h = 6.0 * static_cast<double>(c) / static_cast<double>(classes);
    const double s = 0.65, v = 0.85;
    const int i = static_cast<int>(h) % 6;
    const double f = h - std::floor(h);
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (i) {
        case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
        case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
        case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
        case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
        case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
        default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
    }
}

// Deterministic world: a Voronoi partition of random sites (4 per class, so
// regions are contiguous blobs and every class keeps a reasonable share),
// rendered to RGB with per-pixel texture noise.
inline World generate_world(std::uint64_t seed, std::size_t classes, std::size_t size) {
    if (classes < 2) throw ConfigError("generate_world: classes must be >= 2");
    if (size < 8) throw ConfigError("generate_world: world too small");
    Rng rng = Rng::substream(seed, "world");
    World w;
    w.seed = seed;
    w.size = size;
    w.classes = classes;
    w.labels = LabelGrid(size, size);

    const std::size_t sites = 4 * classes;
    std::vector<double> sx(sites), sy(sites);
    for (int attempt = 0; attempt < 64; ++attempt) {
        for (std::size_t i = 0; i < sites; ++i) {
            sx[i] = rng.uniform(0.0, static_cast<double>(size));
            sy[i] = rng.uniform(0.0, static_cast<double>(size));
        }
        std::vector<std::size_t> counts(classes, 0);
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) {
                std::size_t best = 0;
                double bd = 1e300;
                for (std::size_t i = 0; i < sites; ++i) {
                    const double dx = static_cast<double>(x) + 0.5 - sx[i];
                    const double dy = static_cast<double>(y) + 0.5 - sy[i];
                    const double d = dx * dx + dy * dy;
                    if (d < bd) {
                        bd = d;
                        best = i;
                    }
                }
                w.labels.at(y, x) = static_cast<std::uint8_t>(best % classes);
                counts[best % classes]++;
            }
        const std::size_t min_count = *std::min_element(counts.begin(), counts.end());
        if (static_cast<double>(min_count) >= 0.05 * static_cast<double>(size * size)) break;
    }

    w.appearance = Tensor({3, size, size});
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            double rgb[3];
            class_color(w.labels.at(y, x), classes, rgb);
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = rgb[c] + rng.uniform(-0.08, 0.08);
                w.appearance.at(c, y, x) = std::clamp(v, 0.0, 1.0);
            }
        }
    return w;
}

// Crop of the appearance and label grids at window top-left (x, y).
inline std::pair<Observation, LabelGrid> render_view(const World& w, std::size_t x, std::size_t y,
                                                     std::size_t extent) {
    if (x + extent > w.size || y + extent > w.size)
        throw ConfigError("render_view: window does not fit in world");
    Observation obs;
    obs.data = Tensor({3, extent, extent});
    LabelGrid labels(extent, extent);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < extent; ++i)
            for (std::size_t j = 0; j < extent; ++j)
                obs.data.at(c, i, j) = w.appearance.at(c, y + i, x + j);
    for (std::size_t i = 0; i < extent; ++i)
        for (std::size_t j = 0; j < extent; ++j) labels.at(i, j) = w.labels.at(y + i, x + j);
    return {std::move(obs), std::move(labels)};
}

namespace detail {

// Mirror index including the edge sample; this reflection conserves the
// total mass under any symmetric normalized kernel.
inline std::size_t reflect_edge(long i, long n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
    return static_cast<std::size_t>(i);
}

inline std::vector<double> gaussian_kernel(int ksize) {
    if (ksize == 1) return {1.0};
    const int r = ksize / 2;
    const double sigma = 0.3 * ((ksize - 1) * 0.5 - 1.0) + 0.8;
    std::vector<double> w(ksize);
    double sum = 0.0;
    for (int i = 0; i < ksize; ++i) {
        const double d = static_cast<double>(i - r);
        sum += (w[i] = std::exp(-d * d / (2.0 * sigma * sigma)));
    }
    for (double& x : w) x /= sum;
    return w;
}

}  // namespace detail

// Separable Gaussian blur (reflective padding) followed by additive Gaussian
// noise, clamped to [0,1]. Kernel 1 with sigma 0 is the identity, bit-exact.
inline Observation degrade(const Observation& obs, const DegradeSpec& spec, Rng& rng) {
    spec.validate();
    const std::size_t C = obs.data.extent(0), H = obs.data.extent(1), W = obs.data.extent(2);
    Observation out;
    out.data = obs.data;
    out.degraded = true;
    if (spec.kernel_size > 1) {
        const auto kernel = detail::gaussian_kernel(spec.kernel_size);
        const int r = spec.kernel_size / 2;
        if (static_cast<std::size_t>(r) >= H || static_cast<std::size_t>(r) >= W)
            throw ConfigError("blur kernel larger than the view");
        Tensor tmp({C, H, W});
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t i = 0; i < H; ++i)
                for (std::size_t j = 0; j < W; ++j) {
                    double s = 0.0;
                    for (int t = -r; t <= r; ++t)
                        s += kernel[t + r] *
                             out.data.at(c, i, detail::reflect_edge(static_cast<long>(j) + t, static_cast<long>(W)));
                    tmp.at(c, i, j) = s;
                }
            for (std::size_t i = 0; i < H; ++i)
                for (std::size_t j = 0; j < W; ++j) {
                    double s = 0.0;
                    for (int t = -r; t <= r; ++t)
                        s += kernel[t + r] *
                             tmp.at(c, detail::reflect_edge(static_cast<long>(i) + t, static_cast<long>(H)), j);
                    out.data.at(c, i, j) = s;
                }
        }
    }
    if (spec.noise_sigma > 0.0) {
        for (std::size_t i = 0; i < out.data.size(); ++i)
            out.data[i] = std::clamp(out.data[i] + spec.noise_sigma * rng.normal(), 0.0, 1.0);
    }
    return out;
}

// Overlap fraction of two equally sized windows offset by (dx, dy).
inline double overlap_fraction(long dx, long dy, std::size_t extent) {
    const double e = static_cast<double>(extent);
    const double ox = std::max(0.0, e - static_cast<double>(std::labs(dx)));
    const double oy = std::max(0.0, e - static_cast<double>(std::labs(dy)));
    return ox * oy / (e * e);
}

namespace detail {

// Pick an absolute offset pair realizing an overlap fraction in [lo, hi];
// falls back to the pair nearest the band midpoint when none exists.
inline std::pair<long, long> offsets_for_range(double lo, double hi, std::size_t extent, Rng& rng) {
    std::vector<std::pair<long, long>> candidates;
    for (long dx = 0; dx <= static_cast<long>(extent); ++dx)
        for (long dy = 0; dy <= static_cast<long>(extent); ++dy) {
            const double f = overlap_fraction(dx, dy, extent);
            if (f >= lo && f <= hi) candidates.emplace_back(dx, dy);
        }
    if (candidates.empty()) {
        const double mid = 0.5 * (lo + hi);
        std::pair<long, long> best{0, 0};
        double bd = 1e300;
        for (long dx = 0; dx <= static_cast<long>(extent); ++dx)
            for (long dy = 0; dy <= static_cast<long>(extent); ++dy) {
                const double d = std::abs(overlap_fraction(dx, dy, extent) - mid);
                if (d < bd) {
                    bd = d;
                    best = {dx, dy};
                }
            }
        return best;
    }
    return candidates[rng.index(candidates.size())];
}

inline std::pair<long, long> offsets_for_fraction(double f, std::size_t extent) {
    std::pair<long, long> best{0, 0};
    double bd = 1e300;
    for (long dx = 0; dx <= static_cast<long>(extent); ++dx)
        for (long dy = 0; dy <= static_cast<long>(extent); ++dy) {
            const double d = std::abs(overlap_fraction(dx, dy, extent) - f);
            if (d < bd) {
                bd = d;
                best = {dx, dy};
            }
        }
    return best;
}

// Normal agent's view warped into the target frame: world pixels where the
// agent's (believed) window covers the target window, zero elsewhere.
inline Observation aligned_view(const World& w, long tx, long ty, long dx, long dy, long ex, long ey,
                                std::size_t extent) {
    Observation obs;
    obs.data = Tensor({3, extent, extent});
    const long L = static_cast<long>(w.size);
    for (std::size_t y = 0; y < extent; ++y)
        for (std::size_t x = 0; x < extent; ++x) {
            const long ax = static_cast<long>(x) - dx - ex;  // agent-image coords
            const long ay = static_cast<long>(y) - dy - ey;
            if (ax < 0 || ay < 0 || ax >= static_cast<long>(extent) || ay >= static_cast<long>(extent))
                continue;
            const long wx = tx + static_cast<long>(x) - ex;  // world coords under the warp
            const long wy = ty + static_cast<long>(y) - ey;
            if (wx < 0 || wy < 0 || wx >= L || wy >= L) continue;
            for (std::size_t c = 0; c < 3; ++c)
                obs.data.at(c, y, x) = w.appearance.at(c, static_cast<std::size_t>(wy),
                                                       static_cast<std::size_t>(wx));
        }
    return obs;
}

}  // namespace detail

// Deterministic in (world, setting, rng state, config).
inline Episode make_episode(const World& world, Setting setting, Rng& rng, const ScenarioConfig& cfg) {
    cfg.validate();
    const std::size_t H = cfg.obs_size;
    const std::size_t L = world.size;
    const std::size_t n_normals = cfg.agents - 1;

    Episode ep;
    ep.setting = setting;
    ep.normals.resize(n_normals);
    ep.overlaps.assign(n_normals, 0.0);

    const int pose_noise = setting == Setting::InaccuratePose ? cfg.pose_noise_max : 0;
    const std::size_t margin = setting == Setting::HiddenTarget
                                   ? 0
                                   : H + static_cast<std::size_t>(pose_noise);
    if (L < H + 2 * margin + 1)
        throw ConfigError("world too small for setting '" + std::string(to_string(setting)) + "'");
    const std::size_t span = L - H - 2 * margin + 1;
    const std::size_t tx = margin + rng.index(span);
    const std::size_t ty = margin + rng.index(span);

    auto [clean, labels] = render_view(world, tx, ty, H);
    ep.target_clean = clean;
    ep.labels = std::move(labels);

    const int kernel_choices = (cfg.blur_kernel_max + 1) / 2;
    ep.degrade_spec.kernel_size = 1 + 2 * static_cast<int>(rng.index(kernel_choices));
    ep.degrade_spec.noise_sigma = rng.uniform(cfg.noise_sigma_min, cfg.noise_sigma_max);
    ep.target = degrade(ep.target_clean, ep.degrade_spec, rng);

    if (setting == Setting::HiddenTarget) {
        const std::size_t hidden = rng.index(n_normals);
        for (std::size_t s = 0; s < n_normals; ++s) {
            if (s == hidden) {
                ep.normals[s] = ep.target_clean;
                ep.overlaps[s] = 1.0;
                continue;
            }
            bool placed = false;
            for (int tries = 0; tries < 10000 && !placed; ++tries) {
                const std::size_t x = rng.index(L - H + 1);
                const std::size_t y = rng.index(L - H + 1);
                const long dx = static_cast<long>(x) - static_cast<long>(tx);
                const long dy = static_cast<long>(y) - static_cast<long>(ty);
                if (overlap_fraction(dx, dy, H) > 0.0) continue;
                ep.normals[s] = render_view(world, x, y, H).first;
                placed = true;
            }
            if (!placed) throw ConfigError("world too small to place disjoint distractor views");
        }
        ep.best_agent = hidden;
        return ep;
    }

    // Pose settings: one overlap band per agent, shuffled across slots.
    std::vector<std::pair<double, double>> bands;
    if (setting == Setting::RandomExploration) {
        bands.assign(n_normals, {0.0, 1.0});  // placeholders; fractions drawn below
    } else {
        bands = cfg.resolved_overlap_ranges();
        bool any = false;
        for (auto [lo, hi] : bands) any = any || hi > 0.0;
        if (!any) throw ConfigError("all-zero overlap ranges leave no learnable signal");
    }
    std::vector<std::size_t> slot(n_normals);
    for (std::size_t i = 0; i < n_normals; ++i) slot[i] = i;
    for (std::size_t i = n_normals; i > 1; --i)
        std::swap(slot[i - 1], slot[rng.index(i)]);

    for (std::size_t b = 0; b < n_normals; ++b) {
        const std::size_t s = slot[b];
        std::pair<long, long> off;
        if (setting == Setting::RandomExploration) {
            off = detail::offsets_for_fraction(rng.uniform(), H);
        } else {
            off = detail::offsets_for_range(bands[b].first, bands[b].second, H, rng);
        }
        const long sx = rng.index(2) == 0 ? 1 : -1;
        const long sy = rng.index(2) == 0 ? 1 : -1;
        const long dx = sx * off.first;
        const long dy = sy * off.second;
        long ex = 0, ey = 0;
        if (pose_noise > 0) {
            ex = rng.uniform_int(-pose_noise, pose_noise);
            ey = rng.uniform_int(-pose_noise, pose_noise);
        }
        ep.normals[s] = detail::aligned_view(world, static_cast<long>(tx), static_cast<long>(ty),
                                             dx, dy, ex, ey, H);
        ep.overlaps[s] = overlap_fraction(dx, dy, H);
    }
    std::size_t best = 0;
    for (std::size_t s = 1; s < n_normals; ++s)
        if (ep.overlaps[s] > ep.overlaps[best]) best = s;
    ep.best_agent = best;
    return ep;
}

struct SeedRange {
    std::uint64_t base = 0;
    std::size_t count = 0;
};

struct Dataset {
    Setting setting = Setting::HiddenTarget;
    ScenarioConfig config;
    std::vector<Episode> train, val, test;
};

inline std::vector<Episode> generate_episodes(Setting setting, const ScenarioConfig& cfg,
                                              SeedRange range) {
    std::vector<Episode> out;
    out.reserve(range.count);
    for (std::size_t i = 0; i < range.count; ++i) {
        const std::uint64_t seed = range.base + i;
        World w = generate_world(seed, cfg.classes, cfg.world_size);
        Rng rng = Rng::substream(seed, "episode");
        out.push_back(make_episode(w, setting, rng, cfg));
    }
    return out;
}

// Episode splits from disjoint world-seed ranges; sharing a seed across
// splits is a configuration error.
inline Dataset build_split(Setting setting, const ScenarioConfig& cfg, SeedRange train,
                           SeedRange val, SeedRange test) {
    cfg.validate();
    auto overlap = [](SeedRange a, SeedRange b) {
        return a.base < b.base + b.count && b.base < a.base + a.count;
    };
    if (overlap(train, val) || overlap(train, test) || overlap(val, test))
        throw ConfigError("split seed ranges overlap");
    Dataset d;
    d.setting = setting;
    d.config = cfg;
    d.train = generate_episodes(setting, cfg, train);
    d.val = generate_episodes(setting, cfg, val);
    d.test = generate_episodes(setting, cfg, test);
    return d;
}

inline Dataset build_split(Setting setting, const ScenarioConfig& cfg, std::uint64_t master_seed) {
    const std::uint64_t base = Rng::substream(master_seed, "scenario").next_u64() >> 1;
    const SeedRange train{base, cfg.train_episodes};
    const SeedRange val{base + cfg.train_episodes, cfg.val_episodes};
    const SeedRange test{base + cfg.train_episodes + cfg.val_episodes, cfg.test_episodes};
    return build_split(setting, cfg, train, val, test);
}

}  // namespace collab
