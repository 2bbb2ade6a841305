#pragma once

#include <string>

#include "collab/error.hpp"

namespace collab {

// Method under evaluation. Singles never communicate; centralized methods
// transmit every normal agent's features; distributed ones transmit n maps.
enum class BaselineKind {
    SingleNormal,
    SingleDegraded,
    CatAll,
    AttentionCentralized,
    Compression,
    RandomSelection,
    OursWithMsg,
    OursWithoutMsg,
};

inline const char* to_string(BaselineKind k) {
    switch (k) {
        case BaselineKind::SingleNormal: return "single-normal";
        case BaselineKind::SingleDegraded: return "single-degraded";
        case BaselineKind::CatAll: return "cat-all";
        case BaselineKind::AttentionCentralized: return "attention";
        case BaselineKind::Compression: return "compression";
        case BaselineKind::RandomSelection: return "random-selection";
        case BaselineKind::OursWithMsg: return "ours-with-msg";
        case BaselineKind::OursWithoutMsg: return "ours-without-msg";
    }
    return "?";
}

inline BaselineKind parse_baseline(const std::string& s) {
    for (BaselineKind k :
         {BaselineKind::SingleNormal, BaselineKind::SingleDegraded, BaselineKind::CatAll,
          BaselineKind::AttentionCentralized, BaselineKind::Compression,
          BaselineKind::RandomSelection, BaselineKind::OursWithMsg, BaselineKind::OursWithoutMsg})
        if (s == to_string(k)) return k;
    throw ConfigError("unknown method: '" + s + "'");
}

inline bool communicates(BaselineKind k) {
    return k != BaselineKind::SingleNormal && k != BaselineKind::SingleDegraded;
}

// Request/match stages run and scores exist.
inline bool uses_scores(BaselineKind k) {
    return k == BaselineKind::OursWithMsg || k == BaselineKind::OursWithoutMsg ||
           k == BaselineKind::AttentionCentralized;
}

// A learned request message is actually transmitted.
inline bool transmits_message(BaselineKind k) {
    return k == BaselineKind::OursWithMsg || k == BaselineKind::AttentionCentralized;
}

// Connect stage carries all N-1 maps regardless of scores.
inline bool centralized_connect(BaselineKind k) {
    return k == BaselineKind::CatAll || k == BaselineKind::AttentionCentralized ||
           k == BaselineKind::Compression;
}

// Selection step exists at inference (selection accuracy is defined).
inline bool selects(BaselineKind k) {
    return k == BaselineKind::OursWithMsg || k == BaselineKind::OursWithoutMsg ||
           k == BaselineKind::RandomSelection;
}

}  // namespace collab
