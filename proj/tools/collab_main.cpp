// Experiment runner: train models, evaluate methods, sweep message/key
// sizes, rebuild the BIS table from result CSVs, and export/import episode
// containers. Every command is deterministic given its config and seed.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "collab/checkpoint.hpp"
#include "collab/config.hpp"
#include "collab/dataset_io.hpp"
#include "collab/eval.hpp"

namespace fs = std::filesystem;
using namespace collab;

namespace {

constexpr const char* kUsage = R"(usage: collab <command> [--config FILE] [--KEY VALUE ...] [options]

commands:
  train      train a model; writes checkpoint.bin, history.csv and the frozen
             resolved config into --out DIR
  eval       evaluate methods from a checkpoint; emits a metrics report
  sweep      train/evaluate over a message-size x key-size grid
  bis-table  recompute bandwidth-improvement scores from a results CSV
  export     generate a dataset and write it to an episode container
  import     read an episode container (optionally re-export with --out)

options:
  train:     --out DIR [--dataset FILE]
  eval:      --checkpoint FILE [--dataset FILE] [--methods a,b,..]
             [--out FILE] [--format csv|json]
  sweep:     [--m-values 1,2,..] [--k-values 4,16,..] [--out FILE]
  bis-table: --in FILE [--out FILE]
  export:    --out FILE
  import:    --in FILE [--out FILE]

Any configuration key (e.g. --train.iterations 500, --scenario.setting
accurate-pose, --seed 7) overrides the config file. Short aliases: --setting,
--seed, --baseline, --iterations, --batch, --lr.
)";

const std::map<std::string, std::string> kAliases = {
    {"setting", "scenario.setting"},   {"baseline", "train.baseline"},
    {"iterations", "train.iterations"}, {"batch", "train.batch"},
    {"lr", "train.lr"},
};

struct Args {
    std::string command;
    std::map<std::string, std::string> flags;  // command options
    ConfigMap config;
};

bool is_command_flag(const std::string& key) {
    static const std::set<std::string> names = {"config", "out",      "dataset",  "checkpoint",
                                                "methods", "format",  "in",       "m-values",
                                                "k-values"};
    return names.count(key) != 0;
}

Args parse_args(int argc, char** argv) {
    if (argc < 2) throw ConfigError("missing command");
    Args args;
    args.command = argv[1];
    std::vector<std::pair<std::string, std::string>> overrides;
    for (int i = 2; i < argc; ++i) {
        std::string token = argv[i];
        if (token.rfind("--", 0) != 0) throw ConfigError("expected --KEY, got '" + token + "'");
        if (i + 1 >= argc) throw ConfigError("missing value for '" + token + "'");
        std::string key = token.substr(2);
        std::string value = argv[++i];
        if (is_command_flag(key)) {
            args.flags[key] = value;
        } else {
            auto alias = kAliases.find(key);
            overrides.emplace_back(alias != kAliases.end() ? alias->second : key, value);
        }
    }
    if (args.flags.count("config")) args.config.load_file(args.flags.at("config"));
    for (const auto& [k, v] : overrides) args.config.set(k, v);
    return args;
}

const std::string& require_flag(const Args& args, const std::string& name) {
    auto it = args.flags.find(name);
    if (it == args.flags.end())
        throw ConfigError("command '" + args.command + "' requires --" + name);
    return it->second;
}

void check_dataset_matches(const Dataset& data, const RunConfig& rc) {
    auto field = [](const char* name, std::size_t got, std::size_t want) {
        if (got != want)
            throw ShapeError(std::string(name) + ": dataset has " + std::to_string(got) +
                             ", config expects " + std::to_string(want));
    };
    field("scenario.agents", data.config.agents, rc.scenario.agents);
    field("scenario.classes", data.config.classes, rc.scenario.classes);
    field("scenario.obs-channels", data.config.obs_channels, rc.scenario.obs_channels);
    field("scenario.obs-size", data.config.obs_size, rc.scenario.obs_size);
}

Dataset load_or_build_dataset(const Args& args, const RunConfig& rc) {
    auto it = args.flags.find("dataset");
    if (it == args.flags.end()) return build_dataset(rc);
    Dataset data = import_dataset(it->second);
    check_dataset_matches(data, rc);
    if (args.config.was_set("scenario.setting") && data.setting != rc.setting)
        throw ConfigError(std::string("scenario.setting: dataset holds '") +
                          to_string(data.setting) + "', config expects '" + to_string(rc.setting) +
                          "'");
    return data;
}

int cmd_train(const Args& args) {
    const RunConfig rc = args.config.resolve();
    const fs::path out_dir = require_flag(args, "out");
    fs::create_directories(out_dir);

    Dataset data = load_or_build_dataset(args, rc);
    TrainResult result = train(rc.train, rc.model, rc.baseline, data);

    save_checkpoint(result.params, result.config, result.kind, (out_dir / "checkpoint.bin").string());
    {
        std::ofstream os(out_dir / "history.csv");
        if (!os) throw FormatError("cannot write history CSV");
        write_history_csv(os, result.history);
    }
    {
        std::ofstream os(out_dir / "config.resolved.cfg");
        if (!os) throw FormatError("cannot write resolved config");
        args.config.write(os);
    }
    if (!result.history.empty()) {
        const HistoryRow& last = result.history.back();
        std::cout << "trained " << to_string(rc.baseline) << " on " << to_string(data.setting)
                  << ": iterations=" << rc.train.iterations << " final_loss=" << last.train_loss
                  << " val_acc=" << 100.0 * last.val_accuracy << "%\n";
    }
    std::cout << "wrote " << (out_dir / "checkpoint.bin").string() << '\n';
    return 0;
}

int cmd_eval(const Args& args) {
    const RunConfig rc = args.config.resolve();
    const Checkpoint ckpt = load_checkpoint(require_flag(args, "checkpoint"));

    // Explicit model keys pin expectations against the checkpoint.
    ModelConfig expected = ckpt.config;
    auto pin = [&](const char* key, std::size_t& field, const std::string& raw) {
        if (args.config.was_set(key)) field = detail::parse_u64(key, raw);
    };
    pin("model.message-size", expected.message_size, args.config.get("model.message-size"));
    pin("model.key-size", expected.key_size, args.config.get("model.key-size"));
    pin("model.channels", expected.channels, args.config.get("model.channels"));
    pin("model.top-n", expected.top_n, args.config.get("model.top-n"));
    pin("scenario.classes", expected.classes, args.config.get("scenario.classes"));
    pin("scenario.agents", expected.agents, args.config.get("scenario.agents"));
    pin("scenario.obs-size", expected.obs_size, args.config.get("scenario.obs-size"));
    if (args.config.was_set("model.variant"))
        expected.variant = parse_attention_variant(args.config.get("model.variant"));
    require_matches(ckpt.config, expected);

    RunConfig data_rc = rc;
    data_rc.scenario.agents = ckpt.config.agents;
    data_rc.scenario.classes = ckpt.config.classes;
    data_rc.scenario.obs_channels = ckpt.config.obs_channels;
    data_rc.scenario.obs_size = ckpt.config.obs_size;
    data_rc.model = ckpt.config;
    Dataset data = load_or_build_dataset(args, data_rc);

    std::vector<std::string> methods;
    if (args.flags.count("methods")) {
        for (const std::string& m : detail::split(args.flags.at("methods"), ','))
            methods.push_back(detail::trim(m));
    } else {
        methods.push_back(to_string(ckpt.kind));
    }

    std::vector<MetricsRecord> records;
    Rng sel_rng = Rng::substream(rc.seed, "selection");
    for (const std::string& name : methods) {
        const BaselineKind kind = parse_baseline(name);
        const auto spec = AgentModel::param_spec(ckpt.config, kind);
        for (const auto& [pname, shape] : spec) {
            if (!ckpt.params.has(pname))
                throw ShapeError("method '" + name + "': checkpoint lacks parameter " + pname);
            if (ckpt.params.value(pname).shape() != shape)
                throw ShapeError("method '" + name + "': " + pname + " has shape " +
                                 shape_str(ckpt.params.value(pname).shape()) + ", needs " +
                                 shape_str(shape));
        }
        ParamStore params;
        for (const auto& [pname, shape] : spec) params.create(pname, shape) = ckpt.params.value(pname);
        AgentModel model(ckpt.config, kind, std::move(params));
        records.push_back(evaluate(model, data.test, sel_rng));
    }
    attach_bis(records);

    const ReportFormat format =
        parse_report_format(args.flags.count("format") ? args.flags.at("format") : "csv");
    if (args.flags.count("out")) {
        emit_report(records, args.flags.at("out"), format);
        std::cout << "wrote " << args.flags.at("out") << '\n';
    } else {
        emit_report(records, std::cout, format);
    }
    return 0;
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    for (const std::string& part : detail::split(v, ','))
        out.push_back(detail::parse_u64(key, detail::trim(part)));
    std::sort(out.begin(), out.end());
    return out;
}

int cmd_sweep(const Args& args) {
    const RunConfig base = args.config.resolve();
    const std::vector<std::size_t> m_values = parse_size_list(
        "m-values", args.flags.count("m-values") ? args.flags.at("m-values") : "1,2,4,8,16,64");
    const std::vector<std::size_t> k_values = parse_size_list(
        "k-values", args.flags.count("k-values") ? args.flags.at("k-values") : "4,16,64,256,1024");

    Dataset data = load_or_build_dataset(args, base);

    std::ostringstream csv;
    csv << "m,k,selection_acc,overall_acc\n";
    for (std::size_t m : m_values)
        for (std::size_t k : k_values) {
            RunConfig rc = base;
            rc.model.message_size = m;
            rc.model.key_size = k;
            try {
                rc.model.validate();
            } catch (const ConfigError& e) {
                std::cerr << "rejected m=" << m << " k=" << k << ": " << e.what() << '\n';
                continue;
            }
            TrainResult result = train(rc.train, rc.model, rc.baseline, data);
            AgentModel model(result.config, result.kind, result.params);
            Rng sel_rng = Rng::substream(rc.seed, "selection");
            MetricsRecord rec = evaluate(model, data.test, sel_rng);
            csv << m << ',' << k << ',' << detail::num(100.0 * rec.selection_accuracy.value_or(0.0))
                << ',' << detail::num(100.0 * rec.overall_accuracy) << '\n';
            std::cerr << "sweep m=" << m << " k=" << k
                      << ": selection=" << 100.0 * rec.selection_accuracy.value_or(0.0)
                      << "% overall=" << 100.0 * rec.overall_accuracy << "%\n";
        }
    if (args.flags.count("out")) {
        std::ofstream os(args.flags.at("out"));
        if (!os) throw FormatError("cannot open sweep output file");
        os << csv.str();
        std::cout << "wrote " << args.flags.at("out") << '\n';
    } else {
        std::cout << csv.str();
    }
    return 0;
}

struct BisRow {
    std::string method;
    std::string setting;
    double accuracy = 0.0;
    double kbpf = -1.0;  // <0 means absent
};

int cmd_bis_table(const Args& args) {
    std::ifstream is(require_flag(args, "in"));
    if (!is) throw FormatError("cannot open input CSV");
    std::string line;
    if (!std::getline(is, line)) throw FormatError("empty input CSV");
    std::vector<std::string> header = detail::split(detail::trim(line), ',');
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[detail::trim(header[i])] = i;
    for (const char* want : {"method", "setting", "accuracy", "kbpf"})
        if (!col.count(want)) throw FormatError(std::string("input CSV lacks column '") + want + "'");

    std::vector<BisRow> rows;
    while (std::getline(is, line)) {
        if (detail::trim(line).empty()) continue;
        std::vector<std::string> cells = detail::split(line, ',');
        if (cells.size() < header.size()) throw FormatError("short row in input CSV: " + line);
        BisRow r;
        r.method = detail::trim(cells[col["method"]]);
        r.setting = detail::trim(cells[col["setting"]]);
        r.accuracy = detail::parse_double("accuracy", detail::trim(cells[col["accuracy"]]));
        const std::string bw = detail::trim(cells[col["kbpf"]]);
        if (!bw.empty() && bw != "-") r.kbpf = detail::parse_double("kbpf", bw);
        rows.push_back(r);
    }

    // Bounds per setting.
    std::map<std::string, std::pair<double, double>> bounds;  // setting -> (lower, upper)
    for (const BisRow& r : rows) {
        if (r.method == to_string(BaselineKind::SingleDegraded)) bounds[r.setting].first = r.accuracy;
        if (r.method == to_string(BaselineKind::SingleNormal)) bounds[r.setting].second = r.accuracy;
    }
    std::vector<std::string> settings;
    for (const BisRow& r : rows)
        if (std::find(settings.begin(), settings.end(), r.setting) == settings.end())
            settings.push_back(r.setting);
    for (const std::string& s : settings) {
        bool has_lower = false, has_upper = false;
        for (const BisRow& r : rows) {
            if (r.setting != s) continue;
            if (r.method == to_string(BaselineKind::SingleDegraded)) has_lower = true;
            if (r.method == to_string(BaselineKind::SingleNormal)) has_upper = true;
        }
        if (!has_lower)
            throw FormatError("missing lower-bound row (single-degraded) for setting '" + s + "'");
        if (!has_upper)
            throw FormatError("missing upper-bound row (single-normal) for setting '" + s + "'");
    }

    std::ostringstream out_csv;
    out_csv << "method,setting,accuracy,kbpf,bis\n";
    std::cout << "method                setting                 acc      kbpf      BIS\n";
    for (const BisRow& r : rows) {
        const bool is_bound = r.method == to_string(BaselineKind::SingleDegraded) ||
                              r.method == to_string(BaselineKind::SingleNormal);
        std::string bis_text = "-";
        if (!is_bound) {
            const auto [lower, upper] = bounds[r.setting];
            try {
                const double bis = compute_bis({r.accuracy, lower, upper,
                                                kbpf_to_mbpf(r.kbpf < 0 ? 0.0 : r.kbpf)});
                bis_text = detail::num(bis);
            } catch (const MetricError& e) {
                std::cerr << r.method << " / " << r.setting << ": " << e.what() << '\n';
            }
        }
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%-21s %-22s %-8.6g %-9.6g %s", r.method.c_str(),
                      r.setting.c_str(), r.accuracy, r.kbpf < 0 ? 0.0 : r.kbpf, bis_text.c_str());
        std::cout << buf << '\n';
        out_csv << r.method << ',' << r.setting << ',' << detail::num(r.accuracy) << ','
                << (r.kbpf < 0 ? "-" : detail::num(r.kbpf)) << ',' << bis_text << '\n';
    }
    if (args.flags.count("out")) {
        std::ofstream os(args.flags.at("out"));
        if (!os) throw FormatError("cannot open output file");
        os << out_csv.str();
    }
    return 0;
}

int cmd_export(const Args& args) {
    const RunConfig rc = args.config.resolve();
    Dataset data = build_dataset(rc);
    export_dataset(data, require_flag(args, "out"));
    std::cout << "wrote " << require_flag(args, "out") << " (" << to_string(data.setting) << ", "
              << data.train.size() << "/" << data.val.size() << "/" << data.test.size()
              << " episodes)\n";
    return 0;
}

int cmd_import(const Args& args) {
    Dataset data = import_dataset(require_flag(args, "in"));
    std::cout << "setting=" << to_string(data.setting) << " agents=" << data.config.agents
              << " classes=" << data.config.classes << " obs=" << data.config.obs_channels << "x"
              << data.config.obs_size << "x" << data.config.obs_size << " episodes="
              << data.train.size() << "/" << data.val.size() << "/" << data.test.size() << '\n';
    if (args.flags.count("out")) {
        export_dataset(data, args.flags.at("out"));
        std::cout << "wrote " << args.flags.at("out") << '\n';
    }
    return 0;
}

int run(int argc, char** argv) {
    Args args = parse_args(argc, argv);
    if (args.command == "train") return cmd_train(args);
    if (args.command == "eval") return cmd_eval(args);
    if (args.command == "sweep") return cmd_sweep(args);
    if (args.command == "bis-table") return cmd_bis_table(args);
    if (args.command == "export") return cmd_export(args);
    if (args.command == "import") return cmd_import(args);
    throw ConfigError("unknown command: '" + args.command + "'");
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n\n" << kUsage;
        return 2;
    } catch (const DimensionError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const MetricError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
