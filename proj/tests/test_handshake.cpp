#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "collab/handshake.hpp"

using namespace collab;

namespace {

ModelConfig paper_scale_config(std::size_t agents = 5) {
    ModelConfig cfg;
    cfg.message_size = 8;
    cfg.key_size = 1024;
    cfg.channels = 16;
    cfg.classes = 6;
    cfg.agents = agents;
    cfg.obs_size = 16;  // d_f = 4 -> 16*4*4 = 256 scalars per map
    return cfg;
}

Episode episode_for(std::size_t agents, Setting setting, std::uint64_t seed = 11) {
    ScenarioConfig sc;
    sc.agents = agents;
    World w = generate_world(seed, sc.classes, sc.world_size);
    Rng rng = Rng::substream(seed, "episode");
    return make_episode(w, setting, rng, sc);
}

std::size_t stage_bytes(const BandwidthLedger& ledger, Stage stage) {
    std::size_t n = 0;
    for (const LedgerEntry& e : ledger.entries)
        if (e.stage == stage) n += e.bytes;
    return n;
}

}  // namespace

TEST_CASE("ledger totals are exact for the distributed handshake", "[handshake]") {
    // N=5, m=8, k=1024, d_f=4, d_c=16, n=1:
    //   request 4 links x 8 scalars, scores 4 x 1, connect 1 x 256 scalars
    Rng init(1);
    AgentModel model(paper_scale_config(), BaselineKind::OursWithMsg, init);
    Episode ep = episode_for(5, Setting::HiddenTarget);
    Tape tape;
    HandshakeOutcome out = run_handshake(tape, ep, model, HandshakeMode::Infer);

    REQUIRE(stage_bytes(out.ledger, Stage::Request) == 128);
    REQUIRE(stage_bytes(out.ledger, Stage::Match) == 16);
    REQUIRE(stage_bytes(out.ledger, Stage::Connect) == 1024);
    REQUIRE(out.ledger.total_bytes() == 1168);
    REQUIRE(out.ledger.total_kbpf() == 1.140625);
    REQUIRE_FALSE(out.ledger.training_only);

    // Exactly one connect entry in distributed mode with n=1.
    std::size_t connects = 0;
    for (const LedgerEntry& e : out.ledger.entries)
        if (e.stage == Stage::Connect) ++connects;
    REQUIRE(connects == 1);
}

TEST_CASE("centralized patterns transmit every map", "[handshake]") {
    Episode ep = episode_for(5, Setting::HiddenTarget);
    SECTION("cat-all carries N-1 maps and nothing else") {
        Rng init(2);
        AgentModel model(paper_scale_config(), BaselineKind::CatAll, init);
        Tape tape;
        HandshakeOutcome out = run_handshake(tape, ep, model, HandshakeMode::Infer);
        REQUIRE(out.ledger.total_bytes() == 4096);
        REQUIRE(stage_bytes(out.ledger, Stage::Connect) == 4096);
        REQUIRE(out.received.size() == 4);
    }
    SECTION("attention adds request and score traffic on top") {
        Rng init(3);
        AgentModel model(paper_scale_config(), BaselineKind::AttentionCentralized, init);
        Tape tape;
        HandshakeOutcome out = run_handshake(tape, ep, model, HandshakeMode::Infer);
        REQUIRE(out.ledger.total_bytes() == 128 + 16 + 4096);
    }
    SECTION("compression transmits a quarter of the map bytes") {
        Rng init(4);
        AgentModel model(paper_scale_config(), BaselineKind::Compression, init);
        Tape tape;
        HandshakeOutcome out = run_handshake(tape, ep, model, HandshakeMode::Infer);
        REQUIRE(stage_bytes(out.ledger, Stage::Connect) == 1024);  // 25% of 4096
        REQUIRE(out.received.size() == 4);
    }
    SECTION("random selection transmits one map and no scores") {
        Rng init(5);
        AgentModel model(paper_scale_config(), BaselineKind::RandomSelection, init);
        Tape tape;
        Rng sel(6);
        HandshakeOutcome out = run_handshake(tape, ep, model, HandshakeMode::Infer, &sel);
        REQUIRE(out.ledger.total_bytes() == 1024);
        REQUIRE(out.scores.values.empty());
    }
    SECTION("constant-message variant transmits scores but no request") {
        Rng init(7);
        AgentModel model(paper_scale_config(), BaselineKind::OursWithoutMsg, init);
        Tape tape;
        HandshakeOutcome out = run_handshake(tape, ep, model, HandshakeMode::Infer);
        REQUIRE(stage_bytes(out.ledger, Stage::Request) == 0);
        REQUIRE(out.ledger.total_bytes() == 16 + 1024);
    }
}

TEST_CASE("pose transmission is charged in overlap settings", "[handshake]") {
    Episode ep = episode_for(5, Setting::AccuratePose, 17);
    Rng init(8);
    AgentModel model(paper_scale_config(), BaselineKind::OursWithMsg, init);
    Tape tape;
    HandshakeOutcome out = run_handshake(tape, ep, model, HandshakeMode::Infer);
    // 4 links x 6 pose scalars x 4 bytes on top of the hidden-target budget.
    REQUIRE(stage_bytes(out.ledger, Stage::Request) == 128 + 96);
    REQUIRE(out.ledger.total_bytes() == 1168 + 96);
}

TEST_CASE("kbpf helpers", "[handshake]") {
    BandwidthLedger empty;
    REQUIRE(ledger_total_kbpf(empty) == 0.0);

    BandwidthLedger request_only;
    for (int link = 1; link <= 4; ++link)
        request_only.add(Stage::Request, 0, link, PayloadKind::Message, 8);
    REQUIRE(request_only.total_kbpf() == 0.125);

    BandwidthLedger big;
    big.add(Stage::Connect, 1, 0, PayloadKind::Feature, 262144);  // 1 MiB map
    REQUIRE(big.total_bytes() == 1048576);
    REQUIRE(big.total_kbpf() == 1024.0);
}

TEST_CASE("stage ordering and byte conservation hold on the ledger", "[handshake]") {
    Episode ep = episode_for(5, Setting::HiddenTarget, 23);
    Rng init(9);
    AgentModel model(paper_scale_config(), BaselineKind::OursWithMsg, init);
    Tape tape;
    HandshakeOutcome out = run_handshake(tape, ep, model, HandshakeMode::Infer);

    int max_stage_seen = -1;
    for (const LedgerEntry& e : out.ledger.entries) {
        REQUIRE(static_cast<int>(e.stage) >= max_stage_seen);
        max_stage_seen = std::max(max_stage_seen, static_cast<int>(e.stage));
        REQUIRE(e.bytes == e.elements * BandwidthLedger::bytes_per_scalar);
    }
    std::size_t sum = 0;
    for (const LedgerEntry& e : out.ledger.entries) sum += e.bytes;
    REQUIRE(sum == out.ledger.total_bytes());
}

TEST_CASE("distributed connect bandwidth is independent of agent count", "[handshake]") {
    std::vector<std::size_t> request_bytes, connect_bytes;
    for (std::size_t agents : {3, 5, 7}) {
        Rng init(10);
        AgentModel model(paper_scale_config(agents), BaselineKind::OursWithMsg, init);
        Episode ep = episode_for(agents, Setting::HiddenTarget, 29);
        Tape tape;
        HandshakeOutcome out = run_handshake(tape, ep, model, HandshakeMode::Infer);
        request_bytes.push_back(stage_bytes(out.ledger, Stage::Request));
        connect_bytes.push_back(stage_bytes(out.ledger, Stage::Connect));
    }
    REQUIRE(connect_bytes[0] == connect_bytes[1]);
    REQUIRE(connect_bytes[1] == connect_bytes[2]);
    // request broadcast scales linearly with the number of links
    REQUIRE(request_bytes[0] == 2 * 32);
    REQUIRE(request_bytes[1] == 4 * 32);
    REQUIRE(request_bytes[2] == 6 * 32);
}

TEST_CASE("inference selects the argmax agent and receives its map bit-exactly", "[handshake]") {
    Episode ep = episode_for(5, Setting::HiddenTarget, 31);
    Rng init(11);
    AgentModel model(paper_scale_config(), BaselineKind::OursWithMsg, init);
    Tape tape;
    HandshakeOutcome out = run_handshake(tape, ep, model, HandshakeMode::Infer);
    const auto expect = select_argmax(out.scores.values, 1);
    REQUIRE(out.selected == expect);

    Tape check;
    Value direct = model.encode(check, ep.normals[out.selected[0]]);
    REQUIRE(tape.value(out.received[0]) == check.value(direct));
}

TEST_CASE("training mode collects all maps and marks the ledger", "[handshake]") {
    Episode ep = episode_for(5, Setting::HiddenTarget, 37);
    Rng init(12);
    AgentModel model(paper_scale_config(), BaselineKind::OursWithMsg, init);
    Tape tape;
    HandshakeOutcome out = run_handshake(tape, ep, model, HandshakeMode::Train);
    REQUIRE(out.ledger.training_only);
    REQUIRE(out.received.size() == 4);
    REQUIRE(out.scores.values.size() == 4);
    REQUIRE(stage_bytes(out.ledger, Stage::Connect) == 4096);
}

TEST_CASE("handshake runs are deterministic", "[handshake]") {
    Episode ep = episode_for(5, Setting::HiddenTarget, 41);
    Rng init(13);
    AgentModel model(paper_scale_config(), BaselineKind::OursWithMsg, init);
    auto run = [&] {
        Tape tape;
        return run_handshake(tape, ep, model, HandshakeMode::Infer);
    };
    HandshakeOutcome a = run();
    HandshakeOutcome b = run();
    REQUIRE(a.scores.values == b.scores.values);
    REQUIRE(a.selected == b.selected);
    REQUIRE(a.ledger.total_bytes() == b.ledger.total_bytes());
    REQUIRE(a.ledger.entries.size() == b.ledger.entries.size());
}

TEST_CASE("injected drops surface as timeouts naming stage and agent", "[handshake]") {
    Episode ep = episode_for(5, Setting::HiddenTarget, 43);
    Rng init(14);
    AgentModel model(paper_scale_config(), BaselineKind::OursWithMsg, init);

    SECTION("request drop") {
        Tape tape;
        REQUIRE_THROWS_WITH(
            run_handshake(tape, ep, model, HandshakeMode::Infer, nullptr,
                          {{Stage::Request, 0, 3}}),
            Catch::Matchers::ContainsSubstring("match stage") &&
                Catch::Matchers::ContainsSubstring("agent 3"));
    }
    SECTION("score drop") {
        Tape tape;
        REQUIRE_THROWS_AS(run_handshake(tape, ep, model, HandshakeMode::Infer, nullptr,
                                        {{Stage::Match, 2, 0}}),
                          TimeoutError);
    }
    SECTION("feature drop") {
        Tape del;
        HandshakeOutcome clean = run_handshake(del, ep, model, HandshakeMode::Infer);
        const int chosen = static_cast<int>(clean.selected[0]) + 1;
        Tape tape;
        REQUIRE_THROWS_WITH(
            run_handshake(tape, ep, model, HandshakeMode::Infer, nullptr,
                          {{Stage::Connect, chosen, 0}}),
            Catch::Matchers::ContainsSubstring("connect stage") &&
                Catch::Matchers::ContainsSubstring("agent " + std::to_string(chosen)));
    }
}

TEST_CASE("ledger CSV export lists one row per delivered payload", "[handshake]") {
    Episode ep = episode_for(5, Setting::HiddenTarget, 47);
    Rng init(15);
    AgentModel model(paper_scale_config(), BaselineKind::OursWithMsg, init);
    Tape tape;
    HandshakeOutcome out = run_handshake(tape, ep, model, HandshakeMode::Infer);
    std::ostringstream os;
    out.ledger.write_csv(os);
    const std::string csv = os.str();
    REQUIRE(csv.rfind("stage,from,to,kind,bytes\n", 0) == 0);
    std::size_t rows = 0;
    for (char c : csv) rows += c == '\n' ? 1 : 0;
    REQUIRE(rows == out.ledger.entries.size() + 1);
    REQUIRE(csv.find("request,0,1,message,32") != std::string::npos);
    REQUIRE(csv.find("connect") != std::string::npos);
}

TEST_CASE("session transitions must follow the protocol order", "[handshake]") {
    HandshakeSession s;
    REQUIRE(s.phase() == HandshakePhase::Idle);
    REQUIRE_THROWS_AS(s.connect(), StateError);
    s.broadcast_request();
    REQUIRE_THROWS_AS(s.broadcast_request(), StateError);
    REQUIRE_THROWS_AS(s.finish(), StateError);
    s.collect_scores();
    s.connect();
    s.finish();
    REQUIRE(s.phase() == HandshakePhase::Done);
    REQUIRE_THROWS_AS(s.finish(), StateError);
}

TEST_CASE("singles refuse to run the handshake", "[handshake]") {
    Episode ep = episode_for(5, Setting::HiddenTarget, 53);
    Rng init(16);
    AgentModel model(paper_scale_config(), BaselineKind::SingleNormal, init);
    Tape tape;
    REQUIRE_THROWS_AS(run_handshake(tape, ep, model, HandshakeMode::Infer), ConfigError);
}
