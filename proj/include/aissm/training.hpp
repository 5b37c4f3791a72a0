#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <shared_mutex>
#include <string>
#include <vector>

#include "aissm/adam.hpp"
#include "aissm/checkpoint.hpp"
#include "aissm/config.hpp"
#include "aissm/confidence.hpp"
#include "aissm/dataset.hpp"
#include "aissm/metrics.hpp"
#include "aissm/model.hpp"

namespace aissm {

struct TrainConfig {
    std::size_t window_len = 8;
    std::size_t batch_size = 8;
    double lr = 1e-3;
    std::size_t epochs = 10;
    std::uint64_t seed = 1;
    bool long_horizon = true;
    // Validation cadence in optimizer steps; 0 evaluates once per epoch.
    std::size_t eval_every = 0;
    double beta = 0.1;
    double tau = 0.1;
    int roi_h = 40;
    int roi_w = 70;
    double delta = 1.0;
    // Stop after this many optimizer steps; 0 = run all epochs.
    std::size_t max_steps = 0;
    SamplingMode train_sampling = SamplingMode::stochastic;
    double eval_width = 320.0;
    double eval_height = 320.0;

    static TrainConfig from_key_values(const KeyValues& kv);
    KeyValues to_key_values() const;
    ConfidenceConfig confidence() const;
    void validate() const;
};

struct StateKey {
    std::size_t sequence = 0;
    std::size_t frame_index = 0;

    friend auto operator<=>(const StateKey&, const StateKey&) = default;
};

// Replay store of recurrent states keyed by (sequence, frame index). Single
// writer, many readers; each put replaces its entry atomically.
class StateStore {
public:
    struct Access {
        enum class Kind { read, write } kind;
        StateKey key;
        std::uint64_t version;  // version seen by a read (0 = initial), or written
    };

    explicit StateStore(ModelState initial = {}) : initial_(std::move(initial)) {}

    ModelState get(const StateKey& key) const;
    void put(const StateKey& key, ModelState state);
    void restore(const StateKey& key, ModelState state, std::uint64_t version);
    std::uint64_t version(const StateKey& key) const;  // 0 when absent
    bool contains(const StateKey& key) const;
    std::size_t size() const;
    void clear();

    const ModelState& initial() const { return initial_; }
    void set_initial(ModelState initial) { initial_ = std::move(initial); }

    struct Entry {
        ModelState state;
        std::uint64_t version = 0;
    };
    std::map<StateKey, Entry> snapshot() const;

    // Every get/put is appended to log while set; pass nullptr to stop.
    void set_audit(std::vector<Access>* log) { audit_ = log; }

private:
    ModelState initial_;
    std::map<StateKey, Entry> entries_;
    mutable std::shared_mutex mutex_;
    std::vector<Access>* audit_ = nullptr;
};

struct TrainItem {
    std::size_t sequence = 0;
    std::size_t frame_index = 0;  // first of window_len consecutive frames

    friend bool operator==(const TrainItem&, const TrainItem&) = default;
};

// Non-overlapping windows tiling each sequence. Windows touching an unlabeled
// frame are dropped and counted in *skipped.
std::vector<TrainItem> make_items(const Dataset& dataset, std::size_t window_len, std::size_t* skipped = nullptr);

struct StepLosses {
    double task = 0.0;        // per item, summed over the window
    double confidence = 0.0;  // per item, summed over the window
    std::size_t items = 0;
    std::size_t skipped = 0;  // items dropped for missing labels
};

struct MetricsRow {
    std::uint64_t step = 0;
    std::string split;
    EvalSummary summary;
};

inline constexpr const char* kMetricsHeader = "step,split,p5,p10,p15,distance,mean_alpha";
std::string format_metrics_row(const MetricsRow& row);

struct EpochLoss {
    std::uint64_t epoch = 0;
    std::uint64_t step = 0;
    double task = 0.0;
    double confidence = 0.0;
};

struct TrainReport {
    std::vector<MetricsRow> rows;
    std::vector<EpochLoss> losses;
    std::size_t skipped_items = 0;
};

struct RunOptions {
    // metrics.csv, losses.csv and ckpt_epochNNN.aism go here when set.
    std::filesystem::path out_dir;
    std::function<void(const MetricsRow&)> on_eval;
    std::function<void(const EpochLoss&)> on_epoch;
};

class Trainer {
public:
    Trainer(Model& model, TrainConfig config);

    Model& model() { return model_; }
    const TrainConfig& config() const { return config_; }
    StateStore& store() { return store_; }
    std::uint64_t step() const { return step_; }
    std::uint64_t epoch() const { return epoch_; }
    AdamState& task_optimizer() { return task_adam_; }
    AdamState& confidence_optimizer() { return conf_adam_; }

    // Unrolls each item over its window from its stored state, applies one
    // optimizer step per parameter group, then writes every outgoing state to
    // (sequence, frame_index + window_len).
    StepLosses train_step(const Dataset& data, const std::vector<TrainItem>& batch);

    EvalSummary validate(const Dataset& val) const;

    // Runs epochs [epoch(), config.epochs) or until max_steps.
    TrainReport train(const Dataset& train, const Dataset& val, const RunOptions& opts = {});

    // Rounds live parameters, moments and stored states to float32, then
    // captures everything needed to continue the run.
    Checkpoint checkpoint();
    void restore(const Checkpoint& ckpt);

private:
    void quantize_live_state();

    Model& model_;
    TrainConfig config_;
    ParameterSet task_params_;
    ParameterSet conf_params_;
    AdamState task_adam_;
    AdamState conf_adam_;
    StateStore store_;
    std::mt19937_64 rng_;
    std::uint64_t step_ = 0;
    std::uint64_t epoch_ = 0;
};

}  // namespace aissm
