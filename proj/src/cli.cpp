#include "aissm/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "aissm/checkpoint.hpp"
#include "aissm/errors.hpp"
#include "aissm/gradsuite.hpp"
#include "aissm/metrics.hpp"
#include "aissm/synth.hpp"
#include "aissm/training.hpp"

namespace aissm {

namespace fs = std::filesystem;

namespace {

class MissingArtifact : public Error {
public:
    using Error::Error;
};

std::string format(const char* fmt, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

// Options shared by every subcommand plus flags that stand in for config keys.
struct Invocation {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out;
    std::vector<std::pair<CLI::Option*, std::string>> key_flags;
    std::map<std::string, std::string> flag_values;

    void add_common(CLI::App* sub) {
        sub->add_option("--config", config_path, "Flat key = value config file");
        sub->add_option("--set", sets, "Config override key=value (repeatable)");
        sub->add_option("--out", out, "Output directory");
    }

    void add_key_flag(CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
        auto* opt = sub->add_option(flag, flag_values[key], help + " (" + key + ")");
        key_flags.emplace_back(opt, key);
    }
};

const std::map<std::string, std::set<std::string>>& known_keys() {
    static const auto table = [] {
        std::map<std::string, std::set<std::string>> t;
        auto keys = [](const KeyValues& kv) {
            std::set<std::string> s;
            for (const auto& [k, v] : kv.values()) s.insert(k);
            return s;
        };
        t["synth"] = keys(SynthConfig{}.to_key_values());
        t["model"] = keys(ModelConfig{}.to_key_values());
        t["train"] = keys(TrainConfig{}.to_key_values());
        t["gen"] = {"sequences"};
        t["data"] = {"window_us", "width", "height", "csv_width", "csv_height"};
        t["eval"] = {"width", "height", "seed"};
        return t;
    }();
    return table;
}

void check_known(const KeyValues& kv) {
    for (const auto& [key, value] : kv.values()) {
        const auto dot = key.find('.');
        const auto& table = known_keys();
        auto it = dot == std::string::npos ? table.end() : table.find(key.substr(0, dot));
        if (it == table.end() || !it->second.count(key.substr(dot + 1))) {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
}

// File values, then --set pairs, then dedicated flags.
KeyValues effective_config(const Invocation& inv) {
    KeyValues kv;
    if (!inv.config_path.empty()) {
        if (!fs::exists(inv.config_path)) throw ConfigError("config file '" + inv.config_path + "' does not exist");
        kv = KeyValues::parse_file(inv.config_path);
    }
    for (const auto& s : inv.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
        kv.set(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [opt, key] : inv.key_flags) {
        if (opt->count() > 0) kv.set(key, inv.flag_values.at(key));
    }
    check_known(kv);
    return kv;
}

fs::path require_out(const Invocation& inv) {
    if (inv.out.empty()) throw ConfigError("--out is required");
    std::error_code ec;
    fs::create_directories(inv.out, ec);
    if (ec) throw IoError("cannot create output directory '" + inv.out + "': " + ec.message());
    return inv.out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << text;
    if (!f) throw IoError("cannot write '" + path.string() + "'");
}

void echo_config(const fs::path& out, const KeyValues& resolved) { write_text(out / "config.txt", resolved.to_text()); }

DatasetOptions dataset_options(const KeyValues& kv, const TrainConfig& tc) {
    DatasetOptions o;
    o.window_us = kv.get_uint("data.window_us", o.window_us);
    o.width = static_cast<std::uint32_t>(kv.get_uint("data.width", o.width));
    o.height = static_cast<std::uint32_t>(kv.get_uint("data.height", o.height));
    o.csv_width = static_cast<std::uint32_t>(kv.get_uint("data.csv_width", 0));
    o.csv_height = static_cast<std::uint32_t>(kv.get_uint("data.csv_height", 0));
    o.confidence = tc.confidence();
    if (o.window_us == 0 || o.width == 0 || o.height == 0) throw ConfigError("data: window_us, width and height must be >= 1");
    return o;
}

KeyValues dataset_key_values(const DatasetOptions& o) {
    KeyValues kv;
    kv.set("window_us", std::to_string(o.window_us));
    kv.set("width", std::to_string(o.width));
    kv.set("height", std::to_string(o.height));
    kv.set("csv_width", std::to_string(o.csv_width));
    kv.set("csv_height", std::to_string(o.csv_height));
    return kv;
}

Checkpoint open_checkpoint(const std::string& path) {
    if (path.empty()) throw ConfigError("--ckpt is required");
    if (!fs::exists(path)) throw MissingArtifact("checkpoint '" + path + "' does not exist");
    try {
        return read_checkpoint(path);
    } catch (const CheckpointError&) {
        throw;
    } catch (const Error& e) {
        throw CheckpointError(e.what());
    }
}

Dataset open_dataset(const std::string& root, const DatasetOptions& opts) {
    if (root.empty()) throw ConfigError("--data is required");
    return load_dataset(root, opts);
}

std::string sequence_name(std::size_t i, std::size_t n) {
    std::size_t digits = 3;
    for (std::size_t v = n - 1; v >= 1000; v /= 10) ++digits;
    std::string s = std::to_string(i);
    return "seq_" + std::string(digits - std::min(digits, s.size()), '0') + s;
}

int cmd_gen(const Invocation& inv, std::ostream& out) {
    const KeyValues kv = effective_config(inv);
    const SynthConfig base = SynthConfig::from_key_values(kv.under("synth."));
    base.validate();
    const std::uint64_t n = kv.get_uint("gen.sequences", 10);
    if (n == 0) throw ConfigError("gen: sequences must be >= 1");
    const fs::path root = require_out(inv);
    KeyValues resolved = base.to_key_values().prefixed("synth.");
    resolved.set("gen.sequences", std::to_string(n));
    echo_config(root, resolved);

    std::size_t events = 0;
    std::size_t labels = 0;
    for (std::size_t i = 0; i < n; ++i) {
        SynthConfig cfg = base;
        cfg.seed = base.seed + i;
        const SynthSequence seq = generate(cfg);
        const std::string name = sequence_name(i, n);
        export_sequence(seq, root / name);
        out << name << ": " << seq.sequence.events.size() << " events, " << seq.sequence.labels.size()
            << " labels, " << seq.segments.size() << " segments\n";
        events += seq.sequence.events.size();
        labels += seq.sequence.labels.size();
    }
    out << "total: " << n << " sequences, " << events << " events, " << labels << " labels\n";
    return kExitOk;
}

std::string summary_line(const EvalSummary& s) {
    std::string line = "p5 " + format("%.2f", s.p5) + " p10 " + format("%.2f", s.p10) + " p15 " +
                       format("%.2f", s.p15) + " distance " + format("%.5f", s.distance);
    if (!std::isnan(s.mean_alpha)) line += " mean_alpha " + format("%.4f", s.mean_alpha);
    return line;
}

int cmd_train(const Invocation& inv, const std::string& data, const std::string& val_dir, const std::string& resume,
              std::ostream& out) {
    const KeyValues kv = effective_config(inv);
    const TrainConfig tc = TrainConfig::from_key_values(kv.under("train."));
    tc.validate();
    const ModelConfig mc = ModelConfig::from_key_values(kv.under("model."));
    mc.validate();
    const DatasetOptions dopt = dataset_options(kv, tc);
    if (mc.input_width != dopt.width || mc.input_height != dopt.height) {
        throw ConfigError("model input " + std::to_string(mc.input_width) + "x" + std::to_string(mc.input_height) +
                          " differs from data frames " + std::to_string(dopt.width) + "x" +
                          std::to_string(dopt.height));
    }
    Model model(mc, tc.seed);
    model.check_budget();
    out << "model " << to_string(mc.arch) << ": " << model.param_count() << " parameters\n";

    const fs::path root = require_out(inv);
    KeyValues resolved = mc.to_key_values().prefixed("model.");
    resolved.merge(tc.to_key_values().prefixed("train."));
    resolved.merge(dataset_key_values(dopt).prefixed("data."));
    echo_config(root, resolved);

    const Dataset all = open_dataset(data, dopt);
    Dataset train_set;
    Dataset val_set;
    if (!val_dir.empty()) {
        train_set = all;
        val_set = load_dataset(val_dir, dopt);
    } else if (all.sequences.size() >= 2) {
        const std::size_t n_val = std::max<std::size_t>(1, all.sequences.size() / 5);
        train_set = all.slice(0, all.sequences.size() - n_val);
        val_set = all.slice(all.sequences.size() - n_val, n_val);
    } else {
        train_set = all;
        val_set = all;
    }
    out << "data: " << train_set.sequences.size() << " train sequences (" << train_set.frame_count() << " frames), "
        << val_set.sequences.size() << " validation sequences (" << val_set.frame_count() << " frames)\n";

    Trainer trainer(model, tc);
    if (!resume.empty()) {
        trainer.restore(open_checkpoint(resume));
        out << "resumed at epoch " << trainer.epoch() << " step " << trainer.step() << "\n";
    }
    RunOptions ro;
    ro.out_dir = root;
    ro.on_eval = [&](const MetricsRow& r) { out << "step " << r.step << " " << r.split << " " << summary_line(r.summary) << "\n"; };
    ro.on_epoch = [&](const EpochLoss& e) {
        out << "epoch " << e.epoch << " step " << e.step << " task_loss " << format("%.6f", e.task) << " conf_loss "
            << format("%.6f", e.confidence) << "\n";
    };
    TrainReport report;
    try {
        report = trainer.train(train_set, val_set, ro);
        write_checkpoint(root / "final.aism", trainer.checkpoint());
    } catch (const IoError& e) {
        throw CheckpointError(e.what());
    }
    if (report.skipped_items > 0) out << "skipped " << report.skipped_items << " items without labels\n";
    out << "wrote " << (root / "final.aism").string() << "\n";
    return kExitOk;
}

int cmd_eval(const Invocation& inv, const std::string& data, const std::string& ckpt_path, const std::string& stub,
             std::ostream& out) {
    const KeyValues kv = effective_config(inv);
    const TrainConfig tc = TrainConfig::from_key_values(kv.under("train."));
    EvalOptions eo;
    eo.eval_width = kv.get_double("eval.width", 320.0);
    eo.eval_height = kv.get_double("eval.height", 320.0);
    if (!(eo.eval_width > 0) || !(eo.eval_height > 0)) throw ConfigError("eval: width and height must be positive");
    const std::uint64_t seed = kv.get_uint("eval.seed", 0);

    std::unique_ptr<Predictor> predictor;
    std::unique_ptr<Model> model;
    KeyValues data_kv = kv;
    if (!stub.empty()) {
        if (stub == "echo") {
            predictor = std::make_unique<EchoPredictor>();
        } else if (stub == "constant") {
            predictor = std::make_unique<ConstantPredictor>(NormalizedCentroid{0.5, 0.5});
        } else {
            throw ConfigError("unknown stub '" + stub + "' (echo|constant)");
        }
    } else {
        const Checkpoint ckpt = open_checkpoint(ckpt_path);
        model = std::make_unique<Model>(load_model(ckpt));
        if (!data_kv.has("data.width")) data_kv.set("data.width", std::to_string(model->config().input_width));
        if (!data_kv.has("data.height")) data_kv.set("data.height", std::to_string(model->config().input_height));
        predictor = std::make_unique<ModelPredictor>(*model, seed);
    }
    const DatasetOptions dopt = dataset_options(data_kv, tc);
    const fs::path root = require_out(inv);
    KeyValues resolved = dataset_key_values(dopt).prefixed("data.");
    resolved.set("eval.width", format("%.17g", eo.eval_width));
    resolved.set("eval.height", format("%.17g", eo.eval_height));
    resolved.set("eval.seed", std::to_string(seed));
    echo_config(root, resolved);

    const Dataset ds = open_dataset(data, dopt);
    const auto records = evaluate(*predictor, ds, eo);
    const EvalSummary summary = summarize(records);
    write_text(root / "summary.json", summary.to_json() + "\n");
    write_records_csv(root / "records.csv", records);
    out << "frames " << summary.frames << " " << summary_line(summary) << "\n";
    std::vector<EvalRecord> by_kind[2];
    for (const auto& r : records) by_kind[r.kind == SegmentKind::saccade ? 1 : 0].push_back(r);
    for (int k = 0; k < 2; ++k) {
        if (by_kind[k].empty()) continue;
        out << to_string(k == 1 ? SegmentKind::saccade : SegmentKind::fixation) << " frames " << by_kind[k].size()
            << " " << summary_line(summarize(by_kind[k])) << "\n";
    }
    return kExitOk;
}

int cmd_confidence(const Invocation& inv, const std::string& data, std::ostream& out) {
    const KeyValues kv = effective_config(inv);
    const TrainConfig tc = TrainConfig::from_key_values(kv.under("train."));
    tc.validate();
    const DatasetOptions dopt = dataset_options(kv, tc);
    const fs::path root = require_out(inv);
    KeyValues resolved = dataset_key_values(dopt).prefixed("data.");
    resolved.set("train.beta", format("%.17g", tc.beta));
    resolved.set("train.tau", format("%.17g", tc.tau));
    resolved.set("train.roi_h", std::to_string(tc.roi_h));
    resolved.set("train.roi_w", std::to_string(tc.roi_w));
    echo_config(root, resolved);

    const Dataset ds = open_dataset(data, dopt);
    if (ds.labeled_count() == 0) throw DataError("dataset '" + data + "' has no labeled frames");
    for (const auto& seq : ds.sequences) {
        std::string csv = "frame_idx,t_end,snr,ed,alpha\n";
        double alpha_sum = 0.0;
        std::size_t n = 0;
        for (std::size_t f = 0; f < seq.frames.size(); ++f) {
            const auto& c = seq.confidence[f];
            if (!c) continue;
            csv += std::to_string(f) + "," + std::to_string(seq.frames[f].t_end) + "," + format("%.17g", c->snr) +
                   "," + format("%.17g", c->ed) + "," + format("%.17g", c->alpha) + "\n";
            alpha_sum += c->alpha;
            ++n;
        }
        write_text(root / (seq.name + ".confidence.csv"), csv);
        out << seq.name << ": " << n << " labeled frames";
        if (n > 0) out << ", mean alpha " << format("%.4f", alpha_sum / static_cast<double>(n));
        out << "\n";
    }
    return kExitOk;
}

struct FaultGuard {
    ~FaultGuard() { ad::set_backward_fault(ad::BackwardFault::none); }
};

int cmd_gradcheck(const Invocation& inv, std::size_t seeds, const std::string& fault, std::ostream& out,
                  std::ostream& err) {
    if (seeds == 0) throw ConfigError("gradcheck: --seeds must be >= 1");
    FaultGuard guard;
    if (!fault.empty()) {
        try {
            ad::set_backward_fault(ad::parse_backward_fault(fault));
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
    }
    SuiteOptions opts;
    opts.seeds = seeds;
    const auto results = run_gradient_suite(opts);
    std::ostringstream report;
    print_suite(report, results);
    out << report.str();
    if (!inv.out.empty()) write_text(require_out(inv) / "gradcheck.txt", report.str());
    if (!suite_passed(results)) {
        err << "gradcheck: FAILED\n";
        return kExitVerification;
    }
    out << "gradcheck: passed\n";
    return kExitOk;
}

int cmd_inspect(const std::string& path, std::ostream& out) {
    const Checkpoint ckpt = open_checkpoint(path);
    out << ckpt.header.to_text();
    std::size_t params = 0;
    for (const auto& a : ckpt.arrays) {
        out << a.name << " [";
        for (std::size_t i = 0; i < a.shape.size(); ++i) out << (i ? "," : "") << a.shape[i];
        out << "] " << a.values.size() << "\n";
        if (a.name.starts_with("param/")) params += a.values.size();
    }
    out << "arrays " << ckpt.arrays.size() << ", parameters " << params << "\n";
    return kExitOk;
}

int exit_code(const std::exception& e) {
    if (dynamic_cast<const MissingArtifact*>(&e)) return kExitMissing;
    if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
    if (dynamic_cast<const CheckpointError*>(&e)) return kExitCheckpoint;
    if (dynamic_cast<const IoError*>(&e)) return kExitCheckpoint;
    if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
        dynamic_cast<const FormatError*>(&e)) {
        return kExitData;
    }
    if (dynamic_cast<const ShapeError*>(&e)) return kExitConfig;
    return kExitVerification;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Event-camera eye tracking with adaptive state-space fusion", "aissm"};
    app.require_subcommand(1);
    Invocation inv;

    auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
    inv.add_common(gen);
    inv.add_key_flag(gen, "--segments", "synth.segments", "Segments per sequence");
    inv.add_key_flag(gen, "--sequences", "gen.sequences", "Number of sequences");
    inv.add_key_flag(gen, "--seed", "synth.seed", "Seed of the first sequence");

    std::string data;
    std::string val;
    std::string resume;
    auto* train = app.add_subcommand("train", "Train a model");
    inv.add_common(train);
    train->add_option("--data", data, "Dataset root")->required();
    train->add_option("--val", val, "Validation dataset root (default: hold out the last fifth of --data)");
    train->add_option("--resume", resume, "Checkpoint to continue from");
    inv.add_key_flag(train, "--arch", "model.arch", "aissm|cnn|cnn_gru");
    inv.add_key_flag(train, "--long-horizon", "train.long_horizon", "on|off");
    inv.add_key_flag(train, "--epochs", "train.epochs", "Epochs");
    inv.add_key_flag(train, "--max-steps", "train.max_steps", "Step limit, 0 = none");
    inv.add_key_flag(train, "--lr", "train.lr", "Learning rate");
    inv.add_key_flag(train, "--batch-size", "train.batch_size", "Items per step");
    inv.add_key_flag(train, "--window-len", "train.window_len", "Frames per item");
    inv.add_key_flag(train, "--eval-every", "train.eval_every", "Validation cadence in steps, 0 = per epoch");
    inv.add_key_flag(train, "--seed", "train.seed", "Seed");

    std::string ckpt;
    std::string stub;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    inv.add_common(eval);
    eval->add_option("--data", data, "Dataset root")->required();
    eval->add_option("--ckpt", ckpt, "Checkpoint");
    eval->add_option("--stub", stub, "Built-in predictor instead of a checkpoint: echo|constant");
    inv.add_key_flag(eval, "--eval-width", "eval.width", "Evaluation width in pixels");
    inv.add_key_flag(eval, "--eval-height", "eval.height", "Evaluation height in pixels");
    inv.add_key_flag(eval, "--seed", "eval.seed", "Seed for stochastic sampling");

    auto* conf = app.add_subcommand("confidence", "Write per-frame confidence labels");
    inv.add_common(conf);
    conf->add_option("--data", data, "Dataset root")->required();
    inv.add_key_flag(conf, "--beta", "train.beta", "SNR weight");
    inv.add_key_flag(conf, "--tau", "train.tau", "Density scale");
    inv.add_key_flag(conf, "--roi-h", "train.roi_h", "ROI height");
    inv.add_key_flag(conf, "--roi-w", "train.roi_w", "ROI width");

    std::size_t seeds = 20;
    std::string fault;
    auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    grad->add_option("--out", inv.out, "Output directory for the report");
    grad->add_option("--seeds", seeds, "Random seeds per check");
    grad->add_option("--inject-fault", fault, "Flip one backward rule: conv2d|affine|softmax|sigmoid|tanh|silu|mul");

    auto* inspect = app.add_subcommand("inspect-ckpt", "Print a checkpoint's header and arrays");
    inspect->add_option("ckpt", ckpt, "Checkpoint")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_gen(inv, out);
        if (train->parsed()) return cmd_train(inv, data, val, resume, out);
        if (eval->parsed()) return cmd_eval(inv, data, ckpt, stub, out);
        if (conf->parsed()) return cmd_confidence(inv, data, out);
        if (grad->parsed()) return cmd_gradcheck(inv, seeds, fault, out, err);
        if (inspect->parsed()) return cmd_inspect(ckpt, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code(e);
    }
    return kExitConfig;
}

}  // namespace aissm
