#pragma once

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "collab/adam.hpp"
#include "collab/handshake.hpp"

namespace collab {

struct TrainConfig {
    std::size_t iterations = 3000;
    std::size_t batch = 8;
    double lr = 1e-3;
    std::uint64_t seed = 1;
    std::size_t eval_every = 0;  // 0 -> iterations / 10

    std::size_t cadence() const {
        if (eval_every > 0) return eval_every;
        return iterations >= 10 ? iterations / 10 : 1;
    }

    void validate() const {
        if (iterations < 1) throw ConfigError("iterations must be >= 1");
        if (batch < 1) throw ConfigError("batch size must be >= 1");
        if (lr < 0) throw ConfigError("learning rate must be >= 0");
        if (iterations % cadence() != 0)
            throw ConfigError("eval cadence " + std::to_string(cadence()) +
                              " must divide iterations " + std::to_string(iterations));
    }
};

// Mean cross-entropy over cells. Convenience wrapper over the tape op.
inline double cross_entropy_loss(const Tensor& logits, const LabelGrid& labels) {
    Tape t;
    return t.value(t.softmax_cross_entropy(t.input(logits), labels))[0];
}

struct TrainForward {
    Value logits;
    MatchScores scores;  // empty for methods without a match stage
};

// Scalar tape values stacked into one vector.
inline Value stack_scalars(Tape& tape, const std::vector<Value>& scalars) {
    if (scalars.empty()) throw DimensionError("stack_scalars: no inputs");
    std::vector<Value> rows;
    rows.reserve(scalars.size());
    for (Value s : scalars) rows.push_back(tape.reshape(s, {1, 1, 1}));
    Value cat = tape.concat_channels(rows);
    return tape.reshape(cat, {scalars.size()});
}

// Training-mode forward pass. Methods with scores fuse all normal maps by
// softmax weights (argmax selection is non-differentiable, so it is reserved
// for inference); the rest follow their inference pipelines. The ground-truth
// best agent is never read here.
inline TrainForward forward_train(Tape& tape, const Episode& ep, AgentModel& model,
                                  Rng* train_rng = nullptr) {
    const BaselineKind kind = model.kind();
    TrainForward out;
    if (kind == BaselineKind::SingleNormal || kind == BaselineKind::SingleDegraded) {
        const Observation& obs =
            kind == BaselineKind::SingleNormal ? ep.target_clean : ep.target;
        Value f = model.encode(tape, obs);
        out.logits = model.decode(tape, f, {f});
        return out;
    }
    HandshakeOutcome hs =
        run_handshake(tape, ep, model, HandshakeMode::Train, train_rng);
    out.scores = hs.scores;
    if (uses_scores(kind)) {
        Value weights = tape.softmax_rows(stack_scalars(tape, hs.score_values));
        Value fused = tape.weighted_sum(weights, hs.received);
        out.logits = model.decode(tape, hs.target_feature, {fused});
    } else {
        // CatAll / Compression concat everything; RandomSelection got one map.
        out.logits = model.decode(tape, hs.target_feature, hs.received);
    }
    return out;
}

struct InferForward {
    Prediction prediction;
    HandshakeOutcome outcome;  // empty ledger for methods that never communicate
};

// Inference-mode forward pass: run the handshake (argmax selection for ours,
// top-n fused by renormalized softmax weights over the selected subset).
inline InferForward forward_infer(const Episode& ep, AgentModel& model,
                                  Rng* selection_rng = nullptr,
                                  const std::vector<DropRule>& drops = {}) {
    Tape tape;
    const BaselineKind kind = model.kind();
    InferForward out;
    if (!communicates(kind)) {
        const Observation& obs =
            kind == BaselineKind::SingleNormal ? ep.target_clean : ep.target;
        Value f = model.encode(tape, obs);
        out.prediction.logits = tape.value(model.decode(tape, f, {f}));
        return out;
    }
    HandshakeOutcome hs = run_handshake(tape, ep, model, HandshakeMode::Infer, selection_rng, drops);
    Value logits;
    if (kind == BaselineKind::AttentionCentralized) {
        Value weights = tape.softmax_rows(stack_scalars(tape, hs.score_values));
        Value fused = tape.weighted_sum(weights, hs.received);
        logits = model.decode(tape, hs.target_feature, {fused});
    } else if (centralized_connect(kind)) {
        logits = model.decode(tape, hs.target_feature, hs.received);
    } else if (hs.received.size() == 1) {
        logits = model.decode(tape, hs.target_feature, {hs.received[0]});
    } else {
        // top-n > 1: softmax weights renormalized over the selected subset so
        // the decoder input shape stays fixed for any n.
        std::vector<double> sel_scores;
        for (std::size_t s : hs.selected) sel_scores.push_back(hs.scores.values[s]);
        const std::vector<double> w = softmax(sel_scores);
        Value weights = tape.input(Tensor({w.size()}, w));
        Value fused = tape.weighted_sum(weights, hs.received);
        logits = model.decode(tape, hs.target_feature, {fused});
    }
    out.prediction.logits = tape.value(logits);
    out.outcome = std::move(hs);
    out.outcome.ledger.training_only = false;
    return out;
}

struct HistoryRow {
    std::size_t iteration = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
    double val_selection_accuracy = 0.0;
    bool has_selection = false;
};

inline void write_history_csv(std::ostream& os, const std::vector<HistoryRow>& rows) {
    os << "iteration,loss,val_accuracy,val_selection_accuracy\n";
    char buf[64];
    auto fmt = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (const HistoryRow& r : rows) {
        os << r.iteration << ',' << fmt(r.train_loss) << ',' << fmt(r.val_accuracy) << ',';
        if (r.has_selection) os << fmt(r.val_selection_accuracy);
        os << '\n';
    }
}

struct TrainResult {
    ModelConfig config;
    BaselineKind kind = BaselineKind::OursWithMsg;
    ParamStore params;
    std::vector<HistoryRow> history;
};

namespace detail {

inline double episode_accuracy(const Prediction& pred, const LabelGrid& gt) {
    const LabelGrid got = pred.labels();
    if (got.h != gt.h || got.w != gt.w) throw DimensionError("episode_accuracy: grid shapes differ");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < gt.size(); ++i)
        if (got.v[i] == gt.v[i]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(gt.size());
}

struct ValScore {
    double accuracy = 0.0;
    double selection = 0.0;
    bool has_selection = false;
};

inline ValScore validate(AgentModel& model, const std::vector<Episode>& episodes, Rng& sel_rng) {
    ValScore v;
    if (episodes.empty()) return v;
    v.has_selection = selects(model.kind());
    std::size_t sel_hits = 0;
    for (const Episode& ep : episodes) {
        InferForward f = forward_infer(ep, model, &sel_rng);
        v.accuracy += episode_accuracy(f.prediction, ep.labels);
        if (v.has_selection) {
            for (std::size_t s : f.outcome.selected)
                if (s == ep.best_agent) {
                    ++sel_hits;
                    break;
                }
        }
    }
    v.accuracy /= static_cast<double>(episodes.size());
    v.selection = static_cast<double>(sel_hits) / static_cast<double>(episodes.size());
    return v;
}

}  // namespace detail

// Centralized training with decentralized execution. Deterministic given
// (seed, config, dataset); aborts with a diagnostic if the loss goes
// non-finite. Supervision is the target view's labels only.
inline TrainResult train(const TrainConfig& tc, const ModelConfig& mc, BaselineKind kind,
                         const Dataset& data) {
    tc.validate();
    mc.validate();
    if (data.train.empty()) throw ConfigError("training split is empty");

    Rng init_rng = Rng::substream(tc.seed, "init");
    Rng train_rng = Rng::substream(tc.seed, "training");
    Rng sel_rng = Rng::substream(tc.seed, "selection");
    AgentModel model(mc, kind, init_rng);
    AdamState adam;
    adam.lr = tc.lr;

    TrainResult result;
    result.config = mc;
    result.kind = kind;

    const std::size_t cadence = tc.cadence();
    for (std::size_t iter = 1; iter <= tc.iterations; ++iter) {
        Tape tape;
        std::vector<Value> losses;
        losses.reserve(tc.batch);
        for (std::size_t b = 0; b < tc.batch; ++b) {
            const Episode& ep = data.train[train_rng.index(data.train.size())];
            TrainForward f = forward_train(tape, ep, model, &train_rng);
            losses.push_back(tape.softmax_cross_entropy(f.logits, ep.labels));
        }
        Value loss = tape.scale(tape.sum_scalars(losses), 1.0 / static_cast<double>(tc.batch));
        const double loss_v = tape.value(loss)[0];
        if (!std::isfinite(loss_v))
            throw NumericError("training diverged (non-finite loss) at iteration " +
                               std::to_string(iter));
        model.params().zero_grads();
        tape.backward(loss);
        adam_step(model.params(), adam);

        if (iter % cadence == 0) {
            detail::ValScore v = detail::validate(model, data.val, sel_rng);
            result.history.push_back({iter, loss_v, v.accuracy, v.selection, v.has_selection});
        }
    }
    result.params = model.params();
    return result;
}

}  // namespace collab
