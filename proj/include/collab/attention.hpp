#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "collab/autodiff.hpp"
#include "collab/param_store.hpp"
#include "collab/tensor.hpp"

namespace collab {

// Matching function between a request message and a key. General and Additive
// support asymmetric message/key sizes; scaled dot-product does not.
enum class AttentionVariant { General, ScaledDot, Additive };

inline const char* to_string(AttentionVariant v) {
    switch (v) {
        case AttentionVariant::General: return "general";
        case AttentionVariant::ScaledDot: return "scaled-dot";
        case AttentionVariant::Additive: return "additive";
    }
    return "?";
}

inline AttentionVariant parse_attention_variant(const std::string& s) {
    if (s == "general") return AttentionVariant::General;
    if (s == "scaled-dot") return AttentionVariant::ScaledDot;
    if (s == "additive") return AttentionVariant::Additive;
    throw ConfigError("unknown attention variant: '" + s + "'");
}

struct AttentionConfig {
    AttentionVariant variant = AttentionVariant::General;
    std::size_t m = 8;
    std::size_t k = 8;
    std::size_t hidden = 0;  // additive only; 0 means max(m, k)

    std::size_t hidden_dim() const { return hidden > 0 ? hidden : std::max(m, k); }

    void validate() const {
        if (m < 1 || k < 1) throw ConfigError("message and key sizes must be >= 1");
        if (variant == AttentionVariant::ScaledDot && m != k)
            throw ConfigError("scaled-dot matching requires identical message and key size (m=" +
                              std::to_string(m) + ", k=" + std::to_string(k) + ")");
    }
};

namespace attn_names {
inline constexpr const char* general_w = "att.general.w";
inline constexpr const char* additive_wa = "att.additive.wa";
inline constexpr const char* additive_wk = "att.additive.wk";
inline constexpr const char* additive_wm = "att.additive.wm";
}  // namespace attn_names

inline void create_attention_params(ParamStore& ps, const AttentionConfig& cfg, Rng& rng) {
    cfg.validate();
    switch (cfg.variant) {
        case AttentionVariant::General: {
            Tensor& w = ps.create(attn_names::general_w, {cfg.m, cfg.k});
            glorot_init(w, cfg.m, cfg.k, rng);
            break;
        }
        case AttentionVariant::ScaledDot:
            break;  // parameter-free
        case AttentionVariant::Additive: {
            const std::size_t h = cfg.hidden_dim();
            Tensor& wa = ps.create(attn_names::additive_wa, {h});
            Tensor& wk = ps.create(attn_names::additive_wk, {h, cfg.k});
            Tensor& wm = ps.create(attn_names::additive_wm, {h, cfg.m});
            glorot_init(wa, h, 1, rng);
            glorot_init(wk, h, cfg.k, rng);
            glorot_init(wm, h, cfg.m, rng);
            break;
        }
    }
}

// ---- pure (protocol-side) match functions ----

// General: mu^T W_a kappa, W_a is m x k.
inline double match_general(const Tensor& mu, const Tensor& kappa, const Tensor& wa) {
    if (mu.rank() != 1 || kappa.rank() != 1 || wa.rank() != 2 || wa.extent(0) != mu.size() ||
        wa.extent(1) != kappa.size())
        throw DimensionError("match_general: mu " + shape_str(mu.shape()) + ", W_a " +
                             shape_str(wa.shape()) + ", kappa " + shape_str(kappa.shape()));
    std::vector<double> t(mu.size());
    kernels::matvec(wa.data(), kappa.data(), t.data(), mu.size(), kappa.size());
    return kernels::dot(mu.data(), t.data(), mu.size());
}

// Scaled dot-product: mu^T kappa / sqrt(d_n); requires m == k == d_n.
inline double match_scaled_dot(const Tensor& mu, const Tensor& kappa) {
    if (mu.rank() != 1 || kappa.rank() != 1)
        throw DimensionError("match_scaled_dot: vectors required");
    if (mu.size() != kappa.size())
        throw ConfigError("scaled-dot matching requires identical message and key size (m=" +
                          std::to_string(mu.size()) + ", k=" + std::to_string(kappa.size()) + ")");
    const double inv = 1.0 / std::sqrt(static_cast<double>(mu.size()));
    std::vector<double> scaled(kappa.size());
    for (std::size_t i = 0; i < kappa.size(); ++i) scaled[i] = kappa[i] * inv;
    return kernels::dot(mu.data(), scaled.data(), scaled.size());
}

// Additive: W_a^T tanh(W_k kappa + W_m mu).
inline double match_additive(const Tensor& mu, const Tensor& kappa, const Tensor& wa,
                             const Tensor& wk, const Tensor& wm) {
    if (wa.rank() != 1 || wk.rank() != 2 || wm.rank() != 2 || wk.extent(0) != wa.size() ||
        wm.extent(0) != wa.size() || wk.extent(1) != kappa.size() || wm.extent(1) != mu.size())
        throw DimensionError("match_additive: inconsistent hidden dimension");
    const std::size_t h = wa.size();
    std::vector<double> u(h), t(h);
    kernels::matvec(wk.data(), kappa.data(), u.data(), h, kappa.size());
    kernels::matvec(wm.data(), mu.data(), t.data(), h, mu.size());
    for (std::size_t i = 0; i < h; ++i) u[i] = std::tanh(u[i] + t[i]);
    return kernels::dot(wa.data(), u.data(), h);
}

inline double match_score(const AttentionConfig& cfg, const ParamStore& ps, const Tensor& mu,
                          const Tensor& kappa) {
    switch (cfg.variant) {
        case AttentionVariant::General:
            return match_general(mu, kappa, ps.value(attn_names::general_w));
        case AttentionVariant::ScaledDot:
            return match_scaled_dot(mu, kappa);
        case AttentionVariant::Additive:
            return match_additive(mu, kappa, ps.value(attn_names::additive_wa),
                                  ps.value(attn_names::additive_wk), ps.value(attn_names::additive_wm));
    }
    throw ConfigError("unknown attention variant");
}

// Same computation recorded on a tape. Forward results agree bit-for-bit with
// the pure functions above (shared kernels, same evaluation order).
inline Value match_score(Tape& tape, const AttentionConfig& cfg, ParamStore& ps, Value mu, Value kappa) {
    switch (cfg.variant) {
        case AttentionVariant::General: {
            Value wa = tape.param(ps, attn_names::general_w);
            return tape.dot(mu, tape.matvec(wa, kappa));
        }
        case AttentionVariant::ScaledDot: {
            const Tensor& muv = tape.value(mu);
            const Tensor& kv = tape.value(kappa);
            if (muv.size() != kv.size())
                throw ConfigError("scaled-dot matching requires identical message and key size");
            const double inv = 1.0 / std::sqrt(static_cast<double>(muv.size()));
            return tape.dot(mu, tape.scale(kappa, inv));
        }
        case AttentionVariant::Additive: {
            Value wa = tape.param(ps, attn_names::additive_wa);
            Value wk = tape.param(ps, attn_names::additive_wk);
            Value wm = tape.param(ps, attn_names::additive_wm);
            Value u = tape.tanh_op(tape.add(tape.matvec(wk, kappa), tape.matvec(wm, mu)));
            return tape.dot(wa, u);
        }
    }
    throw ConfigError("unknown attention variant");
}

// ---- selection & fusion ----

// Matching scores indexed by normal-agent slot, with provenance.
struct MatchScores {
    std::vector<double> values;
    std::vector<int> agents;  // slot id that produced each score

    std::size_t size() const { return values.size(); }
};

// Numerically stable softmax.
inline std::vector<double> softmax(const std::vector<double>& s) {
    if (s.empty()) throw DimensionError("softmax: empty input");
    std::vector<double> w(s.size());
    double m = *std::max_element(s.begin(), s.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) sum += (w[i] = std::exp(s[i] - m));
    for (double& x : w) x /= sum;
    return w;
}

// f_sum = sum_i softmax(scores)_i * maps_i
inline Tensor fuse_softmax(const std::vector<double>& scores, const std::vector<Tensor>& maps) {
    if (scores.size() != maps.size() || maps.empty())
        throw DimensionError("fuse_softmax: need one feature map per score");
    const std::vector<double> w = softmax(scores);
    Tensor out(maps[0].shape());
    for (std::size_t i = 0; i < maps.size(); ++i) {
        maps[i].require_same_shape(out, "fuse_softmax");
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += w[i] * maps[i][j];
    }
    return out;
}

// Ids of the n highest scores, descending; ties broken by lowest agent id.
inline std::vector<std::size_t> select_argmax(const std::vector<double>& scores, std::size_t n) {
    if (n < 1 || n > scores.size())
        throw ConfigError("select_argmax: n=" + std::to_string(n) + " out of range [1, " +
                          std::to_string(scores.size()) + "]");
    std::vector<std::size_t> ids(scores.size());
    std::iota(ids.begin(), ids.end(), 0);
    std::sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    ids.resize(n);
    return ids;
}

}  // namespace collab
