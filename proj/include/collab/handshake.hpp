#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "collab/model.hpp"
#include "collab/scenario.hpp"

namespace collab {

// ---- bandwidth accounting ----

enum class Stage { Request, Match, Connect };

inline const char* to_string(Stage s) {
    switch (s) {
        case Stage::Request: return "request";
        case Stage::Match: return "match";
        case Stage::Connect: return "connect";
    }
    return "?";
}

enum class PayloadKind { Message, Pose, Score, Feature };

inline const char* to_string(PayloadKind k) {
    switch (k) {
        case PayloadKind::Message: return "message";
        case PayloadKind::Pose: return "pose";
        case PayloadKind::Score: return "score";
        case PayloadKind::Feature: return "feature";
    }
    return "?";
}

// Exact per-stage, per-link byte accounting. Wire scalars are 32-bit; the
// conversion from 64-bit compute happens at the transmit boundary.
// Agent ids: 0 is the degraded target, 1..N-1 are the normal slots + 1.
struct LedgerEntry {
    Stage stage;
    int from = 0;
    int to = 0;
    PayloadKind kind = PayloadKind::Message;
    std::size_t elements = 0;
    std::size_t bytes = 0;
};

struct BandwidthLedger {
    static constexpr std::size_t bytes_per_scalar = 4;

    std::vector<LedgerEntry> entries;
    bool training_only = false;

    void add(Stage stage, int from, int to, PayloadKind kind, std::size_t elements) {
        entries.push_back({stage, from, to, kind, elements, elements * bytes_per_scalar});
    }

    std::size_t total_bytes() const {
        std::size_t n = 0;
        for (const LedgerEntry& e : entries) n += e.bytes;
        return n;
    }

    double total_kbpf() const { return static_cast<double>(total_bytes()) / 1024.0; }

    void write_csv(std::ostream& os) const {
        os << "stage,from,to,kind,bytes\n";
        for (const LedgerEntry& e : entries)
            os << to_string(e.stage) << ',' << e.from << ',' << e.to << ',' << to_string(e.kind)
               << ',' << e.bytes << '\n';
    }
};

inline double ledger_total_kbpf(const BandwidthLedger& ledger) { return ledger.total_kbpf(); }

// ---- simulated network ----

// Lossless, zero-latency in-memory links with a fault-injection hook.
struct DropRule {
    Stage stage;
    int from = 0;
    int to = 0;
};

class SimNetwork {
public:
    explicit SimNetwork(BandwidthLedger& ledger, std::vector<DropRule> drops = {})
        : ledger_(&ledger), drops_(std::move(drops)) {}

    // Returns false when the payload was dropped. Delivered payloads are the
    // only ones recorded, so bytes recorded always equal bytes delivered.
    bool send(Stage stage, int from, int to, PayloadKind kind, std::size_t elements) {
        for (const DropRule& d : drops_)
            if (d.stage == stage && d.from == from && d.to == to) return false;
        ledger_->add(stage, from, to, kind, elements);
        return true;
    }

private:
    BandwidthLedger* ledger_;
    std::vector<DropRule> drops_;
};

// ---- protocol state machine ----

enum class HandshakePhase { Idle, RequestBroadcast, ScoresCollected, Connected, Done };

inline const char* to_string(HandshakePhase p) {
    switch (p) {
        case HandshakePhase::Idle: return "idle";
        case HandshakePhase::RequestBroadcast: return "request-broadcast";
        case HandshakePhase::ScoresCollected: return "scores-collected";
        case HandshakePhase::Connected: return "connected";
        case HandshakePhase::Done: return "done";
    }
    return "?";
}

// Drives the fixed stage order; any out-of-order transition is a state error.
class HandshakeSession {
public:
    HandshakePhase phase() const { return phase_; }

    void broadcast_request() { advance(HandshakePhase::Idle, HandshakePhase::RequestBroadcast); }
    void collect_scores() {
        advance(HandshakePhase::RequestBroadcast, HandshakePhase::ScoresCollected);
    }
    void connect() { advance(HandshakePhase::ScoresCollected, HandshakePhase::Connected); }
    void finish() { advance(HandshakePhase::Connected, HandshakePhase::Done); }

private:
    void advance(HandshakePhase expect, HandshakePhase next) {
        if (phase_ != expect)
            throw StateError(std::string("handshake transition to '") + to_string(next) +
                             "' requires phase '" + to_string(expect) + "', currently '" +
                             to_string(phase_) + "'");
        phase_ = next;
    }

    HandshakePhase phase_ = HandshakePhase::Idle;
};

enum class HandshakeMode { Train, Infer };

// Result of one protocol run. Differentiable quantities are tape handles so
// training can fuse them; raw score doubles mirror score_values for the
// protocol-side bookkeeping.
struct HandshakeOutcome {
    Value target_feature;            // encoder output of the degraded view (local)
    MatchScores scores;              // empty when the pattern has no match stage
    std::vector<Value> score_values;
    std::vector<std::size_t> selected;  // normal slots whose maps were received
    std::vector<Value> received;        // transmitted maps (post-compression when applicable)
    BandwidthLedger ledger;
};

// One full three-stage run over the simulated network. In Train mode all
// normal maps are collected (centralized training) and the ledger is marked
// training-only; in Infer mode exactly the selected maps are transmitted.
inline HandshakeOutcome run_handshake(Tape& tape, const Episode& ep, AgentModel& model,
                                      HandshakeMode mode, Rng* selection_rng = nullptr,
                                      const std::vector<DropRule>& drops = {}) {
    const ModelConfig& cfg = model.config();
    const BaselineKind kind = model.kind();
    if (!communicates(kind))
        throw ConfigError(std::string("method '") + to_string(kind) + "' does not communicate");
    if (ep.normals.size() != cfg.normals())
        throw DimensionError("episode has " + std::to_string(ep.normals.size()) +
                             " normal agents, model expects " + std::to_string(cfg.normals()));
    const std::size_t n_normals = ep.normals.size();

    HandshakeOutcome out;
    out.ledger.training_only = mode == HandshakeMode::Train;
    SimNetwork net(out.ledger, drops);
    HandshakeSession session;

    out.target_feature = model.encode(tape, ep.target);

    // Request: broadcast the learned message (when one is transmitted) and, in
    // overlap settings, the target pose each normal agent needs for warping.
    session.broadcast_request();
    std::vector<bool> has_request(n_normals, true);
    Value message;
    if (uses_scores(kind)) {
        if (kind == BaselineKind::OursWithoutMsg) {
            message = tape.input(Tensor::full({cfg.message_size}, 1.0));
        } else {
            message = model.message_head(tape, out.target_feature);
        }
    }
    if (transmits_message(kind)) {
        for (std::size_t s = 0; s < n_normals; ++s)
            has_request[s] =
                net.send(Stage::Request, 0, static_cast<int>(s) + 1, PayloadKind::Message,
                         cfg.message_size);
    }
    if (uses_pose(ep.setting)) {
        for (std::size_t s = 0; s < n_normals; ++s)
            if (!net.send(Stage::Request, 0, static_cast<int>(s) + 1, PayloadKind::Pose, 6))
                has_request[s] = false;
    }

    // Match: each normal agent scores the request against its local key and
    // returns the scalar. Keys never leave the agent.
    std::vector<Value> features(n_normals);
    for (std::size_t s = 0; s < n_normals; ++s) features[s] = model.encode(tape, ep.normals[s]);
    if (uses_scores(kind)) {
        for (std::size_t s = 0; s < n_normals; ++s) {
            if (!has_request[s])
                throw TimeoutError("match stage: no response from agent " + std::to_string(s + 1) +
                                   " (request was lost)");
            Value kappa = model.key_head(tape, features[s]);
            Value score = model.match(tape, message, kappa);
            if (!net.send(Stage::Match, static_cast<int>(s) + 1, 0, PayloadKind::Score, 1))
                throw TimeoutError("match stage: no response from agent " + std::to_string(s + 1));
            out.score_values.push_back(score);
            out.scores.values.push_back(tape.value(score)[0]);
            out.scores.agents.push_back(static_cast<int>(s));
        }
    }
    session.collect_scores();

    // Connect: transmit feature maps from the chosen agents (all of them for
    // centralized patterns and during training).
    session.connect();
    if (centralized_connect(kind) || (mode == HandshakeMode::Train && uses_scores(kind))) {
        out.selected.resize(n_normals);
        for (std::size_t s = 0; s < n_normals; ++s) out.selected[s] = s;
    } else if (kind == BaselineKind::RandomSelection) {
        if (selection_rng == nullptr)
            throw ConfigError("random selection requires a selection rng");
        out.selected = {selection_rng->index(n_normals)};
    } else {
        out.selected = select_argmax(out.scores.values, cfg.top_n);
    }
    for (std::size_t s : out.selected) {
        if (!has_request[s])
            throw TimeoutError("connect stage: no feature map from agent " + std::to_string(s + 1) +
                               " (request was lost)");
        Value payload = features[s];
        std::size_t elements = cfg.feature_scalars();
        if (kind == BaselineKind::Compression) {
            payload = model.compress(tape, payload);
            elements = model.compressed_scalars();
        }
        if (!net.send(Stage::Connect, static_cast<int>(s) + 1, 0, PayloadKind::Feature, elements))
            throw TimeoutError("connect stage: no feature map from agent " + std::to_string(s + 1));
        out.received.push_back(payload);
    }
    session.finish();
    return out;
}

}  // namespace collab
