#pragma once

#include <vector>

#include "collab/metrics.hpp"
#include "collab/train.hpp"

namespace collab {

// Evaluate one trained model over an episode set: mean overall accuracy,
// mean inference bandwidth per frame, and selection accuracy where the
// method performs a selection. BIS is filled by the caller once the single
// normal/degraded bounds are known.
inline MetricsRecord evaluate(AgentModel& model, const std::vector<Episode>& episodes,
                              Rng& selection_rng) {
    if (episodes.empty()) throw ConfigError("evaluate: no episodes");
    MetricsRecord rec;
    rec.method = to_string(model.kind());
    rec.episodes = episodes.size();
    std::vector<std::vector<std::size_t>> selected;
    std::vector<std::size_t> best;
    double acc = 0.0, kbpf = 0.0;
    for (const Episode& ep : episodes) {
        InferForward f = forward_infer(ep, model, &selection_rng);
        acc += overall_accuracy(f.prediction.labels(), ep.labels);
        kbpf += f.outcome.ledger.total_kbpf();
        if (selects(model.kind())) {
            selected.push_back(f.outcome.selected);
            best.push_back(ep.best_agent);
        }
    }
    rec.overall_accuracy = acc / static_cast<double>(episodes.size());
    rec.kbpf = kbpf / static_cast<double>(episodes.size());
    if (!selected.empty()) rec.selection_accuracy = selection_accuracy(selected, best);
    return rec;
}

// Attach BIS to every record with positive bandwidth, using the single
// normal/degraded rows as bounds when both are present.
inline void attach_bis(std::vector<MetricsRecord>& records) {
    const MetricsRecord* upper = nullptr;
    const MetricsRecord* lower = nullptr;
    for (const MetricsRecord& r : records) {
        if (r.method == to_string(BaselineKind::SingleNormal)) upper = &r;
        if (r.method == to_string(BaselineKind::SingleDegraded)) lower = &r;
    }
    if (!upper || !lower) return;
    for (MetricsRecord& r : records) {
        if (r.kbpf <= 0.0) continue;
        r.bis = compute_bis({r.overall_accuracy, lower->overall_accuracy, upper->overall_accuracy,
                             kbpf_to_mbpf(r.kbpf)});
    }
}

}  // namespace collab
