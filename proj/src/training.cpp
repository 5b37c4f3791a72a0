#include "aissm/training.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>

#include "aissm/errors.hpp"

namespace aissm {

namespace fs = std::filesystem;

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
    TrainConfig c;
    c.window_len = kv.get_uint("window_len", c.window_len);
    c.batch_size = kv.get_uint("batch_size", c.batch_size);
    c.lr = kv.get_double("lr", c.lr);
    c.epochs = kv.get_uint("epochs", c.epochs);
    c.seed = kv.get_uint("seed", c.seed);
    c.long_horizon = kv.get_bool("long_horizon", c.long_horizon);
    c.eval_every = kv.get_uint("eval_every", c.eval_every);
    c.beta = kv.get_double("beta", c.beta);
    c.tau = kv.get_double("tau", c.tau);
    c.roi_h = static_cast<int>(kv.get_uint("roi_h", static_cast<std::uint64_t>(c.roi_h)));
    c.roi_w = static_cast<int>(kv.get_uint("roi_w", static_cast<std::uint64_t>(c.roi_w)));
    c.delta = kv.get_double("delta", c.delta);
    c.max_steps = kv.get_uint("max_steps", c.max_steps);
    c.train_sampling = parse_sampling(kv.get_string("train_sampling", to_string(c.train_sampling)));
    c.eval_width = kv.get_double("eval_width", c.eval_width);
    c.eval_height = kv.get_double("eval_height", c.eval_height);
    c.validate();
    return c;
}

KeyValues TrainConfig::to_key_values() const {
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    KeyValues kv;
    kv.set("window_len", std::to_string(window_len));
    kv.set("batch_size", std::to_string(batch_size));
    kv.set("lr", num(lr));
    kv.set("epochs", std::to_string(epochs));
    kv.set("seed", std::to_string(seed));
    kv.set("long_horizon", long_horizon ? "on" : "off");
    kv.set("eval_every", std::to_string(eval_every));
    kv.set("beta", num(beta));
    kv.set("tau", num(tau));
    kv.set("roi_h", std::to_string(roi_h));
    kv.set("roi_w", std::to_string(roi_w));
    kv.set("delta", num(delta));
    kv.set("max_steps", std::to_string(max_steps));
    kv.set("train_sampling", to_string(train_sampling));
    kv.set("eval_width", num(eval_width));
    kv.set("eval_height", num(eval_height));
    return kv;
}

ConfidenceConfig TrainConfig::confidence() const {
    return {roi_h, roi_w, tau, beta};
}

void TrainConfig::validate() const {
    if (window_len == 0) throw ConfigError("train: window_len must be >= 1");
    if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
    if (!(delta > 0.0)) throw ConfigError("train: delta must be positive");
    if (!(tau > 0.0)) throw ConfigError("train: tau must be positive");
    if (beta < 0.0 || beta > 1.0) throw ConfigError("train: beta must lie in [0, 1]");
    if (roi_h <= 0 || roi_w <= 0) throw ConfigError("train: roi_h and roi_w must be positive");
    if (!(eval_width > 0.0) || !(eval_height > 0.0)) throw ConfigError("train: eval resolution must be positive");
    if (train_sampling == SamplingMode::relaxed) throw ConfigError("train: train_sampling must be stochastic or argmax");
}

ModelState StateStore::get(const StateKey& key) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(key);
    if (audit_) audit_->push_back({Access::Kind::read, key, it == entries_.end() ? 0 : it->second.version});
    return it == entries_.end() ? initial_ : it->second.state;
}

void StateStore::put(const StateKey& key, ModelState state) {
    std::unique_lock lock(mutex_);
    Entry& e = entries_[key];
    e.state = std::move(state);
    e.version += 1;
    if (audit_) audit_->push_back({Access::Kind::write, key, e.version});
}

void StateStore::restore(const StateKey& key, ModelState state, std::uint64_t version) {
    std::unique_lock lock(mutex_);
    entries_[key] = {std::move(state), version};
}

std::uint64_t StateStore::version(const StateKey& key) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.version;
}

bool StateStore::contains(const StateKey& key) const {
    std::shared_lock lock(mutex_);
    return entries_.count(key) != 0;
}

std::size_t StateStore::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

void StateStore::clear() {
    std::unique_lock lock(mutex_);
    entries_.clear();
}

std::map<StateKey, StateStore::Entry> StateStore::snapshot() const {
    std::shared_lock lock(mutex_);
    return entries_;
}

std::vector<TrainItem> make_items(const Dataset& dataset, std::size_t window_len, std::size_t* skipped) {
    if (window_len == 0) throw ConfigError("make_items: window_len must be >= 1");
    std::vector<TrainItem> items;
    std::size_t dropped = 0;
    for (std::size_t s = 0; s < dataset.sequences.size(); ++s) {
        const auto& frames = dataset.sequences[s].frames;
        for (std::size_t i = 0; i + window_len <= frames.size(); i += window_len) {
            const bool labeled = std::all_of(frames.begin() + static_cast<std::ptrdiff_t>(i),
                                             frames.begin() + static_cast<std::ptrdiff_t>(i + window_len),
                                             [](const EventFrame& f) { return f.label.has_value(); });
            if (labeled) {
                items.push_back({s, i});
            } else {
                ++dropped;
            }
        }
    }
    if (skipped) *skipped = dropped;
    return items;
}

std::string format_metrics_row(const MetricsRow& row) {
    char buf[256];
    const EvalSummary& s = row.summary;
    std::snprintf(buf, sizeof buf, "%llu,%s,%.10g,%.10g,%.10g,%.10g,%.10g", static_cast<unsigned long long>(row.step),
                  row.split.c_str(), s.p5, s.p10, s.p15, s.distance, s.mean_alpha);
    return buf;
}

Trainer::Trainer(Model& model, TrainConfig config)
    : model_(model),
      config_(std::move(config)),
      task_params_(model.parameters().subset_if([](const std::string& n) { return !n.starts_with("confidence."); })),
      conf_params_(model.parameters().subset("confidence.")),
      store_(model.initial_state()),
      rng_(config_.seed) {
    config_.validate();
    AdamConfig adam;
    adam.learning_rate = config_.lr;
    task_adam_ = AdamState::for_parameters(task_params_, adam);
    conf_adam_ = AdamState::for_parameters(conf_params_, adam);
}

StepLosses Trainer::train_step(const Dataset& data, const std::vector<TrainItem>& batch) {
    const std::size_t L = config_.window_len;
    const bool with_confidence = model_.config().arch == Arch::aissm;
    model_.parameters().zero_grad();

    StepLosses losses;
    ad::Tensor total;
    std::vector<std::pair<StateKey, ModelState>> outgoing;
    for (const TrainItem& item : batch) {
        if (item.sequence >= data.sequences.size() ||
            item.frame_index + L > data.sequences[item.sequence].frames.size()) {
            throw DataError("train item (" + std::to_string(item.sequence) + ", " + std::to_string(item.frame_index) +
                            ") lies outside the dataset");
        }
        const SequenceData& seq = data.sequences[item.sequence];
        bool labeled = true;
        for (std::size_t k = 0; k < L; ++k) {
            const std::size_t f = item.frame_index + k;
            labeled = labeled && seq.frames[f].label && (!with_confidence || seq.confidence[f]);
        }
        if (!labeled) {
            ++losses.skipped;
            continue;
        }

        const ModelState incoming =
            config_.long_horizon ? store_.get({item.sequence, item.frame_index}) : store_.initial();
        ad::Tensor h = incoming.h.empty() ? ad::Tensor() : ad::Tensor::from({incoming.h.size()}, incoming.h);
        ad::Tensor s = incoming.s_prev.empty() ? ad::Tensor() : ad::Tensor::from({incoming.s_prev.size()}, incoming.s_prev);

        ad::Tensor task;
        ad::Tensor conf;
        StepResult r;
        for (std::size_t k = 0; k < L; ++k) {
            const std::size_t f = item.frame_index + k;
            const EventFrame& frame = seq.frames[f];
            StepContext ctx;
            ctx.mode = config_.train_sampling;
            ctx.rng = &rng_;
            r = model_.step(model_.observation(frame), h, s, ctx);
            const ad::Tensor y = ad::Tensor::from({2}, {frame.label->x, frame.label->y});
            const ad::Tensor l = ad::huber(y, r.y_hat, config_.delta);
            task = task.defined() ? ad::add(task, l) : l;
            if (with_confidence) {
                const ad::Tensor a = ad::Tensor::from({1}, {seq.confidence[f]->alpha});
                const ad::Tensor c = ad::huber(a, r.alpha_hat, config_.delta);
                conf = conf.defined() ? ad::add(conf, c) : c;
            }
            h = r.h;
            s = r.s_next;
        }
        losses.task += task.item();
        if (conf.defined()) losses.confidence += conf.item();
        const ad::Tensor item_loss = conf.defined() ? ad::add(task, conf) : task;
        total = total.defined() ? ad::add(total, item_loss) : item_loss;
        outgoing.emplace_back(StateKey{item.sequence, item.frame_index + L}, Model::to_state(r));
        ++losses.items;
    }
    if (losses.items == 0) return losses;

    ad::scale(total, 1.0 / static_cast<double>(losses.items)).backward();
    adam_step(task_params_, task_adam_);
    if (conf_params_.size() > 0) adam_step(conf_params_, conf_adam_);
    ++step_;

    if (config_.long_horizon) {
        for (auto& [key, state] : outgoing) store_.put(key, std::move(state));
    }
    losses.task /= static_cast<double>(losses.items);
    losses.confidence /= static_cast<double>(losses.items);
    return losses;
}

EvalSummary Trainer::validate(const Dataset& val) const {
    ModelPredictor predictor(model_, config_.seed);
    EvalOptions opts;
    opts.eval_width = config_.eval_width;
    opts.eval_height = config_.eval_height;
    return summarize(evaluate(predictor, val, opts));
}

namespace {

std::ofstream open_log(const fs::path& path, const char* header, bool append) {
    const bool existing = append && fs::exists(path);
    std::ofstream out(path, existing ? std::ios::app : std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    if (!existing) out << header << '\n';
    return out;
}

}  // namespace

TrainReport Trainer::train(const Dataset& train, const Dataset& val, const RunOptions& opts) {
    TrainReport report;
    const std::vector<TrainItem> items = make_items(train, config_.window_len, &report.skipped_items);
    if (items.empty()) throw DataError("training set yields no fully labeled windows");
    const bool evaluate_val = val.labeled_count() > 0;

    std::ofstream metrics_log;
    std::ofstream loss_log;
    if (!opts.out_dir.empty()) {
        fs::create_directories(opts.out_dir);
        const bool resumed = step_ > 0;
        metrics_log = open_log(opts.out_dir / "metrics.csv", kMetricsHeader, resumed);
        loss_log = open_log(opts.out_dir / "losses.csv", "epoch,step,task_loss,confidence_loss", resumed);
    }

    auto run_eval = [&] {
        if (!evaluate_val) return;
        MetricsRow row{step_, "val", validate(val)};
        if (metrics_log.is_open()) metrics_log << format_metrics_row(row) << '\n' << std::flush;
        if (opts.on_eval) opts.on_eval(row);
        report.rows.push_back(std::move(row));
    };
    auto reached_cap = [&] { return config_.max_steps > 0 && step_ >= config_.max_steps; };

    while (epoch_ < config_.epochs && !reached_cap()) {
        std::vector<TrainItem> order = items;
        std::shuffle(order.begin(), order.end(), rng_);
        double task = 0.0;
        double conf = 0.0;
        std::size_t counted = 0;
        for (std::size_t b = 0; b < order.size() && !reached_cap(); b += config_.batch_size) {
            const std::size_t end = std::min(order.size(), b + config_.batch_size);
            const std::vector<TrainItem> batch(order.begin() + static_cast<std::ptrdiff_t>(b),
                                               order.begin() + static_cast<std::ptrdiff_t>(end));
            const StepLosses l = train_step(train, batch);
            report.skipped_items += l.skipped;
            task += l.task * static_cast<double>(l.items);
            conf += l.confidence * static_cast<double>(l.items);
            counted += l.items;
            if (config_.eval_every > 0 && l.items > 0 && step_ % config_.eval_every == 0) run_eval();
        }
        ++epoch_;
        EpochLoss el{epoch_, step_, counted ? task / static_cast<double>(counted) : 0.0,
                     counted ? conf / static_cast<double>(counted) : 0.0};
        if (loss_log.is_open()) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "%llu,%llu,%.10g,%.10g", static_cast<unsigned long long>(el.epoch),
                          static_cast<unsigned long long>(el.step), el.task, el.confidence);
            loss_log << buf << '\n' << std::flush;
        }
        if (opts.on_epoch) opts.on_epoch(el);
        report.losses.push_back(el);
        if (config_.eval_every == 0) run_eval();
        if (!opts.out_dir.empty()) {
            char name[64];
            std::snprintf(name, sizeof name, "ckpt_epoch%03llu.aism", static_cast<unsigned long long>(epoch_));
            write_checkpoint(opts.out_dir / name, checkpoint());
        }
    }
    return report;
}

void Trainer::quantize_live_state() {
    quantize_to_f32(model_.parameters());
    for (AdamState* a : {&task_adam_, &conf_adam_}) {
        for (auto& [_, m] : a->first_moment) quantize_to_f32(m);
        for (auto& [_, v] : a->second_moment) quantize_to_f32(v);
    }
    for (auto [key, entry] : store_.snapshot()) {
        quantize_to_f32(entry.state.h);
        quantize_to_f32(entry.state.s_prev);
        store_.restore(key, std::move(entry.state), entry.version);
    }
}

namespace {

std::vector<float> floats(const std::vector<double>& v) {
    return std::vector<float>(v.begin(), v.end());
}

std::vector<double> doubles(const std::vector<float>& v) {
    return std::vector<double>(v.begin(), v.end());
}

void add_adam(Checkpoint& ckpt, const std::string& group, const AdamState& a) {
    ckpt.header.set("state.adam." + group + ".step", std::to_string(a.step));
    for (const auto& [name, m] : a.first_moment) {
        ckpt.arrays.push_back({"adam/" + group + "/m/" + name, {m.size()}, floats(m)});
    }
    for (const auto& [name, v] : a.second_moment) {
        ckpt.arrays.push_back({"adam/" + group + "/v/" + name, {v.size()}, floats(v)});
    }
}

void load_adam(const Checkpoint& ckpt, const std::string& group, AdamState& a) {
    a.step = ckpt.header.get_uint("state.adam." + group + ".step", 0);
    for (auto& [name, m] : a.first_moment) {
        const NamedArray& arr = ckpt.at("adam/" + group + "/m/" + name);
        if (arr.values.size() != m.size()) throw CheckpointError("optimizer moment size mismatch for '" + name + "'");
        m = doubles(arr.values);
    }
    for (auto& [name, v] : a.second_moment) {
        const NamedArray& arr = ckpt.at("adam/" + group + "/v/" + name);
        if (arr.values.size() != v.size()) throw CheckpointError("optimizer moment size mismatch for '" + name + "'");
        v = doubles(arr.values);
    }
}

std::string store_prefix(const StateKey& key) {
    return "store/" + std::to_string(key.sequence) + "/" + std::to_string(key.frame_index) + "/";
}

}  // namespace

Checkpoint Trainer::checkpoint() {
    quantize_live_state();
    Checkpoint ckpt;
    add_model(ckpt, model_);
    ckpt.header.merge(config_.to_key_values().prefixed("train."));
    ckpt.header.set("state.step", std::to_string(step_));
    ckpt.header.set("state.epoch", std::to_string(epoch_));
    std::ostringstream rng_text;
    rng_text << rng_;
    ckpt.header.set("state.rng", rng_text.str());
    add_adam(ckpt, "task", task_adam_);
    add_adam(ckpt, "confidence", conf_adam_);
    for (const auto& [key, entry] : store_.snapshot()) {
        const std::string prefix = store_prefix(key);
        ckpt.arrays.push_back({prefix + "h", {entry.state.h.size()}, floats(entry.state.h)});
        ckpt.arrays.push_back({prefix + "s", {entry.state.s_prev.size()}, floats(entry.state.s_prev)});
        ckpt.arrays.push_back({prefix + "version", {1}, {static_cast<float>(entry.version)}});
    }
    return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
    require_same_config(checkpoint_model_config(ckpt), model_.config());
    const std::uint64_t stored_window = ckpt.header.get_uint("train.window_len", config_.window_len);
    if (stored_window != config_.window_len) {
        throw ConfigError("checkpoint window_len " + std::to_string(stored_window) + " differs from configured " +
                          std::to_string(config_.window_len));
    }
    load_parameters(ckpt, model_.parameters());
    load_adam(ckpt, "task", task_adam_);
    load_adam(ckpt, "confidence", conf_adam_);
    step_ = ckpt.header.get_uint("state.step", 0);
    epoch_ = ckpt.header.get_uint("state.epoch", 0);
    std::istringstream rng_text(ckpt.header.get_string("state.rng", ""));
    rng_text >> rng_;
    if (!rng_text) throw CheckpointError("checkpoint RNG state is missing or corrupt");

    store_.clear();
    std::map<StateKey, StateStore::Entry> entries;
    for (const auto& a : ckpt.arrays) {
        if (!a.name.starts_with("store/")) continue;
        unsigned long long seq = 0;
        unsigned long long frame = 0;
        char field[16] = {};
        if (std::sscanf(a.name.c_str(), "store/%llu/%llu/%15s", &seq, &frame, field) != 3) {
            throw CheckpointError("malformed store array name '" + a.name + "'");
        }
        StateStore::Entry& e = entries[{static_cast<std::size_t>(seq), static_cast<std::size_t>(frame)}];
        const std::string f = field;
        if (f == "h") {
            e.state.h = doubles(a.values);
        } else if (f == "s") {
            e.state.s_prev = doubles(a.values);
        } else if (f == "version" && a.values.size() == 1) {
            e.version = static_cast<std::uint64_t>(a.values[0]);
        } else {
            throw CheckpointError("malformed store array name '" + a.name + "'");
        }
    }
    for (auto& [key, e] : entries) store_.restore(key, std::move(e.state), e.version);
}

}  // namespace aissm
