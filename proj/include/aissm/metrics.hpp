#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "aissm/dataset.hpp"
#include "aissm/frames.hpp"
#include "aissm/model.hpp"

namespace aissm {

inline constexpr double kHitThresholds[3] = {5.0, 10.0, 15.0};

struct EvalRecord {
    std::size_t frame_index = 0;  // running index over the evaluated frames
    std::size_t sequence = 0;
    std::size_t sequence_frame = 0;
    NormalizedCentroid pred;
    NormalizedCentroid label;
    double px_dist = 0.0;
    bool hit5 = false;
    bool hit10 = false;
    bool hit15 = false;
    double event_density = 0.0;
    double alpha_hat = 0.0;  // NaN when the predictor has no confidence output
    SegmentKind kind = SegmentKind::fixation;
};

struct EvalSummary {
    double p5 = 0.0;
    double p10 = 0.0;
    double p15 = 0.0;
    double distance = 0.0;  // mean normalized distance
    std::size_t frames = 0;
    double mean_alpha = 0.0;  // NaN without a confidence output

    std::string to_json() const;
};

double pixel_distance(const NormalizedCentroid& pred, const NormalizedCentroid& label, double eval_width,
                      double eval_height);
double norm_distance(const NormalizedCentroid& pred, const NormalizedCentroid& label);

// 100·|{r : px_dist ≤ k}| / N. Throws DataError on an empty set.
double p_metric(const std::vector<EvalRecord>& records, double k);

EvalSummary summarize(const std::vector<EvalRecord>& records);
// Record-weighted combination.
EvalSummary merge(const EvalSummary& a, const EvalSummary& b);

struct Prediction {
    NormalizedCentroid centroid;
    double alpha_hat = 0.0;
};

// Sequential per-frame predictor; reset() is called at each sequence start.
class Predictor {
public:
    virtual ~Predictor() = default;
    virtual void reset() = 0;
    virtual Prediction predict(const EventFrame& frame) = 0;
};

class ModelPredictor : public Predictor {
public:
    // seed feeds stochastic eval sampling only.
    ModelPredictor(const Model& model, std::uint64_t seed = 0);
    void reset() override;
    Prediction predict(const EventFrame& frame) override;

private:
    const Model& model_;
    ModelState state_;
    std::mt19937_64 rng_;
    std::uint64_t seed_;
};

// Returns the frame's own label (centre when unlabeled); for harness checks.
class EchoPredictor : public Predictor {
public:
    void reset() override {}
    Prediction predict(const EventFrame& frame) override;
};

class ConstantPredictor : public Predictor {
public:
    explicit ConstantPredictor(NormalizedCentroid c) : c_(c) {}
    void reset() override {}
    Prediction predict(const EventFrame&) override;

private:
    NormalizedCentroid c_;
};

struct EvalOptions {
    double eval_width = 320.0;
    double eval_height = 320.0;
};

// Runs every frame (state carried through unlabeled ones), records labeled ones
// with the dataset's precomputed event density. Throws DataError when no frame
// carries a label.
std::vector<EvalRecord> evaluate(Predictor& predictor, const Dataset& dataset, const EvalOptions& opts);

void write_records_csv(std::ostream& out, const std::vector<EvalRecord>& records);
void write_records_csv(const std::filesystem::path& path, const std::vector<EvalRecord>& records);

}  // namespace aissm
