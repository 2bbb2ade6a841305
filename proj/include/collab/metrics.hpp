#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "collab/error.hpp"
#include "collab/tensor.hpp"

namespace collab {

// Accuracies are stored in [0,1] and printed x100 (percent convention).
struct MetricsRecord {
    std::string method;
    double overall_accuracy = 0.0;
    double kbpf = 0.0;
    std::optional<double> bis;
    std::optional<double> selection_accuracy;
    std::size_t episodes = 0;
};

// Inputs to the bandwidth-improvement score. delta values share one unit
// (fractions or percent, the ratio cancels it); omega is Mbytes per frame.
struct BisInputs {
    double delta = 0.0;        // examined method's overall accuracy
    double delta_lower = 0.0;  // single-degraded accuracy (lower bound)
    double delta_upper = 0.0;  // single-normal accuracy (upper bound)
    double omega = 0.0;        // bandwidth, Mbytes per frame
};

inline double kbpf_to_mbpf(double kbpf) { return kbpf / 1024.0; }

// BIS = (delta - lower) / ((upper - lower) * omega)
inline double compute_bis(const BisInputs& in) {
    if (in.omega <= 0.0)
        throw MetricError("BIS undefined: bandwidth must be positive, got " +
                          std::to_string(in.omega));
    if (in.delta_upper <= in.delta_lower)
        throw MetricError("BIS undefined: upper bound accuracy must exceed lower bound");
    return (in.delta - in.delta_lower) / ((in.delta_upper - in.delta_lower) * in.omega);
}

// Fraction of cells with matching class.
inline double overall_accuracy(const LabelGrid& pred, const LabelGrid& gt) {
    if (pred.h != gt.h || pred.w != gt.w)
        throw DimensionError("overall_accuracy: grid shapes differ");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < gt.size(); ++i)
        if (pred.v[i] == gt.v[i]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(gt.size());
}

// Fraction of episodes whose selected set contains the ground-truth best
// agent (top-n counts as correct on membership).
inline double selection_accuracy(const std::vector<std::vector<std::size_t>>& selected,
                                 const std::vector<std::size_t>& best) {
    if (selected.size() != best.size() || best.empty())
        throw DimensionError("selection_accuracy: need one selection per episode");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < best.size(); ++i)
        for (std::size_t s : selected[i])
            if (s == best[i]) {
                ++hit;
                break;
            }
    return static_cast<double>(hit) / static_cast<double>(best.size());
}

enum class ReportFormat { Csv, Json };

inline ReportFormat parse_report_format(const std::string& s) {
    if (s == "csv") return ReportFormat::Csv;
    if (s == "json") return ReportFormat::Json;
    throw ConfigError("unknown report format: '" + s + "' (expected csv or json)");
}

namespace detail {
inline std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}
}  // namespace detail

inline void emit_report(const std::vector<MetricsRecord>& records, std::ostream& os,
                        ReportFormat format) {
    if (records.empty()) throw ConfigError("emit_report: no records");
    if (format == ReportFormat::Csv) {
        os << "method,overall_acc,kbpf,BIS,selection_acc,episodes\n";
        for (const MetricsRecord& r : records) {
            os << r.method << ',' << detail::num(100.0 * r.overall_accuracy) << ','
               << detail::num(r.kbpf) << ',';
            if (r.bis) os << detail::num(*r.bis);
            os << ',';
            if (r.selection_accuracy) os << detail::num(100.0 * *r.selection_accuracy);
            os << ',' << r.episodes << '\n';
        }
        return;
    }
    nlohmann::json arr = nlohmann::json::array();
    for (const MetricsRecord& r : records) {
        nlohmann::json j;
        j["method"] = r.method;
        j["overall_acc"] = 100.0 * r.overall_accuracy;
        j["kbpf"] = r.kbpf;
        j["BIS"] = r.bis ? nlohmann::json(*r.bis) : nlohmann::json(nullptr);
        j["selection_acc"] =
            r.selection_accuracy ? nlohmann::json(100.0 * *r.selection_accuracy) : nlohmann::json(nullptr);
        j["episodes"] = r.episodes;
        arr.push_back(j);
    }
    os << arr.dump(2) << '\n';
}

inline void emit_report(const std::vector<MetricsRecord>& records, const std::string& path,
                        ReportFormat format) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open report file for writing: " + path);
    emit_report(records, os, format);
}

}  // namespace collab
