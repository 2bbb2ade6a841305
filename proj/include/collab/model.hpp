#pragma once

#include <map>
#include <string>
#include <vector>

#include "collab/attention.hpp"
#include "collab/autodiff.hpp"
#include "collab/baselines.hpp"
#include "collab/param_store.hpp"

namespace collab {

// One agent's camera view: channels x H x W grid of values in [0, 1].
struct Observation {
    Tensor data;
    bool degraded = false;
};

struct ModelConfig {
    std::size_t message_size = 8;   // m
    std::size_t key_size = 1024;    // k
    std::size_t channels = 16;      // d_c
    std::size_t classes = 6;        // C
    AttentionVariant variant = AttentionVariant::General;
    std::size_t top_n = 1;          // n
    std::size_t agents = 5;         // N
    std::size_t obs_channels = 3;
    std::size_t obs_size = 16;      // H = W
    std::size_t additive_hidden = 0;

    std::size_t feature_size() const { return obs_size / 4; }  // d_f: two stride-2 stages
    std::size_t feature_scalars() const { return channels * feature_size() * feature_size(); }
    std::size_t normals() const { return agents - 1; }

    AttentionConfig attention() const {
        return AttentionConfig{variant, message_size, key_size, additive_hidden};
    }

    void validate() const {
        attention().validate();
        if (agents < 2) throw ConfigError("agent count must be >= 2");
        if (top_n < 1 || top_n > agents - 1)
            throw ConfigError("top-n must be in [1, N-1], got " + std::to_string(top_n));
        if (classes < 2) throw ConfigError("class count must be >= 2");
        if (channels < 1) throw ConfigError("feature channels must be >= 1");
        if (obs_size < 8 || (obs_size & (obs_size - 1)) != 0)
            throw ConfigError("observation size must be a power of two >= 8, got " +
                              std::to_string(obs_size));
        if (obs_channels < 1) throw ConfigError("observation channels must be >= 1");
    }

    bool operator==(const ModelConfig&) const = default;
};

// Class logits over the target view plus the derived label grid.
struct Prediction {
    Tensor logits;  // C x H x W

    LabelGrid labels() const {
        const std::size_t C = logits.extent(0), H = logits.extent(1), W = logits.extent(2);
        LabelGrid g(H, W);
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j) {
                std::size_t best = 0;
                for (std::size_t c = 1; c < C; ++c)
                    if (logits.at(c, i, j) > logits.at(best, i, j)) best = c;
                g.at(i, j) = static_cast<std::uint8_t>(best);
            }
        return g;
    }
};

// The learnable modules of one collaborative-perception system: image encoder,
// message/key generators (linear heads over pooled encoder features), matcher
// and task decoder. All agents share the encoder and key generator; only the
// degraded agent evaluates the message generator and decoder.
class AgentModel {
public:
    AgentModel(ModelConfig cfg, BaselineKind kind, Rng& init_rng)
        : cfg_(std::move(cfg)), kind_(kind) {
        cfg_.validate();
        for (const auto& [name, shape] : param_spec(cfg_, kind_)) {
            Tensor& t = params_.create(name, shape);
            if (name.ends_with(".b")) continue;  // biases start at zero
            const auto [fi, fo] = fans(name, shape);
            glorot_init(t, fi, fo, init_rng);
        }
    }

    AgentModel(ModelConfig cfg, BaselineKind kind, ParamStore params)
        : cfg_(std::move(cfg)), kind_(kind), params_(std::move(params)) {
        cfg_.validate();
        for (const auto& [name, shape] : param_spec(cfg_, kind_)) {
            if (!params_.has(name)) throw ShapeError("missing parameter tensor: " + name);
            if (params_.value(name).shape() != shape)
                throw ShapeError(name + ": shape " + shape_str(params_.value(name).shape()) +
                                 " does not match config " + shape_str(shape));
        }
        if (params_.tensor_count() != param_spec(cfg_, kind_).size())
            throw ShapeError("parameter count does not match config");
    }

    const ModelConfig& config() const { return cfg_; }
    BaselineKind kind() const { return kind_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // conv3x3 stride 2, relu, conv3x3 stride 2, relu -> [d_c x d_f x d_f]
    Value encode(Tape& t, const Observation& obs) {
        const Shape want{cfg_.obs_channels, cfg_.obs_size, cfg_.obs_size};
        if (obs.data.shape() != want)
            throw DimensionError("encode: observation " + shape_str(obs.data.shape()) +
                                 ", expected " + shape_str(want));
        Value x = t.input(obs.data);
        x = t.relu(t.conv3x3(x, t.param(params_, "enc.conv1.w"), t.param(params_, "enc.conv1.b"), 2));
        x = t.relu(t.conv3x3(x, t.param(params_, "enc.conv2.w"), t.param(params_, "enc.conv2.b"), 2));
        return x;
    }

    Value message_head(Tape& t, Value feature) {
        return head(t, feature, "msg.w", "msg.b", cfg_.message_size);
    }

    Value key_head(Tape& t, Value feature) { return head(t, feature, "key.w", "key.b", cfg_.key_size); }

    Value gen_message(Tape& t, const Observation& obs) { return message_head(t, encode(t, obs)); }

    Value gen_key(Tape& t, const Observation& obs) { return key_head(t, encode(t, obs)); }

    Value match(Tape& t, Value mu, Value kappa) {
        return match_score(t, cfg_.attention(), params_, mu, kappa);
    }

    double match(const Tensor& mu, const Tensor& kappa) const {
        return match_score(cfg_.attention(), params_, mu, kappa);
    }

    // Uniform 25% compression applied sender-side before transmit.
    Value compress(Tape& t, Value feature) {
        Value x = t.relu(
            t.conv3x3(feature, t.param(params_, "comp.conv1.w"), t.param(params_, "comp.conv1.b"), 1));
        return t.relu(
            t.conv3x3(x, t.param(params_, "comp.conv2.w"), t.param(params_, "comp.conv2.b"), 1));
    }

    std::size_t compressed_scalars() const {
        return (cfg_.channels / 4) * cfg_.feature_size() * cfg_.feature_size();
    }

    // Channel-concat of target feature and received map(s), then three convs
    // with two nearest-neighbour upsamples back to H x W logits.
    Value decode(Tape& t, Value f_target, const std::vector<Value>& received) {
        std::vector<Value> cat{f_target};
        cat.insert(cat.end(), received.begin(), received.end());
        Value x = t.concat_channels(cat);
        if (t.value(x).extent(0) != decoder_input_channels())
            throw DimensionError("decode: got " + std::to_string(t.value(x).extent(0)) +
                                 " input channels, decoder expects " +
                                 std::to_string(decoder_input_channels()));
        x = t.relu(t.conv3x3(x, t.param(params_, "dec.conv1.w"), t.param(params_, "dec.conv1.b"), 1));
        x = t.upsample2x(x);
        x = t.relu(t.conv3x3(x, t.param(params_, "dec.conv2.w"), t.param(params_, "dec.conv2.b"), 1));
        x = t.upsample2x(x);
        return t.conv3x3(x, t.param(params_, "dec.conv3.w"), t.param(params_, "dec.conv3.b"), 1);
    }

    std::size_t decoder_input_channels() const { return decoder_input_channels(cfg_, kind_); }

    static std::size_t decoder_input_channels(const ModelConfig& cfg, BaselineKind kind) {
        switch (kind) {
            case BaselineKind::CatAll: return cfg.agents * cfg.channels;
            case BaselineKind::Compression:
                return cfg.channels + cfg.normals() * (cfg.channels / 4);
            default: return 2 * cfg.channels;
        }
    }

    // Full parameter layout for a config/method. One shared set: agent count
    // only enters through the CatAll/Compression decoder width.
    static std::map<std::string, Shape> param_spec(const ModelConfig& cfg, BaselineKind kind) {
        cfg.validate();
        std::map<std::string, Shape> spec;
        const std::size_t dc = cfg.channels;
        spec["enc.conv1.w"] = {dc, cfg.obs_channels, 3, 3};
        spec["enc.conv1.b"] = {dc};
        spec["enc.conv2.w"] = {dc, dc, 3, 3};
        spec["enc.conv2.b"] = {dc};
        spec["dec.conv1.w"] = {dc, decoder_input_channels(cfg, kind), 3, 3};
        spec["dec.conv1.b"] = {dc};
        spec["dec.conv2.w"] = {dc, dc, 3, 3};
        spec["dec.conv2.b"] = {dc};
        spec["dec.conv3.w"] = {cfg.classes, dc, 3, 3};
        spec["dec.conv3.b"] = {cfg.classes};
        if (uses_scores(kind)) {
            spec["msg.w"] = {dc, cfg.message_size};
            spec["msg.b"] = {cfg.message_size};
            spec["key.w"] = {dc, cfg.key_size};
            spec["key.b"] = {cfg.key_size};
            switch (cfg.variant) {
                case AttentionVariant::General:
                    spec[attn_names::general_w] = {cfg.message_size, cfg.key_size};
                    break;
                case AttentionVariant::ScaledDot: break;
                case AttentionVariant::Additive: {
                    const std::size_t h = cfg.attention().hidden_dim();
                    spec[attn_names::additive_wa] = {h};
                    spec[attn_names::additive_wk] = {h, cfg.key_size};
                    spec[attn_names::additive_wm] = {h, cfg.message_size};
                    break;
                }
            }
        }
        if (kind == BaselineKind::Compression) {
            if (dc % 4 != 0)
                throw ConfigError("compression method needs feature channels divisible by 4");
            spec["comp.conv1.w"] = {dc / 4, dc, 3, 3};
            spec["comp.conv1.b"] = {dc / 4};
            spec["comp.conv2.w"] = {dc / 4, dc / 4, 3, 3};
            spec["comp.conv2.b"] = {dc / 4};
        }
        return spec;
    }

private:
    Value head(Tape& t, Value feature, const char* wname, const char* bname, std::size_t out) {
        Value pooled = t.global_avg_pool(feature);
        Value row = t.reshape(pooled, {1, cfg_.channels});
        Value y = t.linear(row, t.param(params_, wname), t.param(params_, bname));
        return t.reshape(y, {out});
    }

    static std::pair<std::size_t, std::size_t> fans(const std::string& name, const Shape& shape) {
        if (shape.size() == 4) return {shape[1] * 9, shape[0] * 9};       // conv kernels
        if (shape.size() == 2) return {shape[0], shape[1]};               // linear / bilinear
        return {shape[0], 1};                                             // vectors
    }

    ModelConfig cfg_;
    BaselineKind kind_;
    ParamStore params_;
};

}  // namespace collab
