#include "aissm/metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "aissm/errors.hpp"

namespace aissm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

std::string EvalSummary::to_json() const {
    nlohmann::ordered_json j;
    j["p5"] = p5;
    j["p10"] = p10;
    j["p15"] = p15;
    j["distance"] = distance;
    j["frames"] = frames;
    return j.dump(2);
}

double pixel_distance(const NormalizedCentroid& pred, const NormalizedCentroid& label, double eval_width,
                      double eval_height) {
    const PixelPoint a = scale_centroid(pred, eval_width, eval_height);
    const PixelPoint b = scale_centroid(label, eval_width, eval_height);
    return std::hypot(a.x - b.x, a.y - b.y);
}

double norm_distance(const NormalizedCentroid& pred, const NormalizedCentroid& label) {
    return std::hypot(pred.x - label.x, pred.y - label.y);
}

double p_metric(const std::vector<EvalRecord>& records, double k) {
    if (records.empty()) throw DataError("p_metric: empty record set");
    if (!(k > 0.0)) throw DataError("p_metric: threshold must be positive");
    std::size_t hits = 0;
    for (const auto& r : records) hits += r.px_dist <= k ? 1 : 0;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(records.size());
}

EvalSummary summarize(const std::vector<EvalRecord>& records) {
    EvalSummary s;
    s.p5 = p_metric(records, kHitThresholds[0]);
    s.p10 = p_metric(records, kHitThresholds[1]);
    s.p15 = p_metric(records, kHitThresholds[2]);
    s.frames = records.size();
    double dist = 0.0;
    double alpha = 0.0;
    for (const auto& r : records) {
        dist += norm_distance(r.pred, r.label);
        alpha += r.alpha_hat;
    }
    s.distance = dist / static_cast<double>(records.size());
    s.mean_alpha = alpha / static_cast<double>(records.size());
    return s;
}

EvalSummary merge(const EvalSummary& a, const EvalSummary& b) {
    if (a.frames == 0) return b;
    if (b.frames == 0) return a;
    const double na = static_cast<double>(a.frames);
    const double nb = static_cast<double>(b.frames);
    const double n = na + nb;
    EvalSummary s;
    s.p5 = (a.p5 * na + b.p5 * nb) / n;
    s.p10 = (a.p10 * na + b.p10 * nb) / n;
    s.p15 = (a.p15 * na + b.p15 * nb) / n;
    s.distance = (a.distance * na + b.distance * nb) / n;
    s.mean_alpha = (a.mean_alpha * na + b.mean_alpha * nb) / n;
    s.frames = a.frames + b.frames;
    return s;
}

ModelPredictor::ModelPredictor(const Model& model, std::uint64_t seed)
    : model_(model), state_(model.initial_state()), rng_(seed), seed_(seed) {}

void ModelPredictor::reset() {
    state_ = model_.initial_state();
    rng_.seed(seed_);
}

Prediction ModelPredictor::predict(const EventFrame& frame) {
    ad::NoGradGuard no_grad;
    StepContext ctx;
    ctx.mode = model_.config().eval_sampling;
    ctx.rng = &rng_;
    const StepResult r = model_.step(model_.observation(frame), state_, ctx);
    state_ = Model::to_state(r);
    Prediction p;
    p.centroid = {r.y_hat.data()[0], r.y_hat.data()[1]};
    p.alpha_hat = r.alpha_hat.defined() ? r.alpha_hat.item() : kNaN;
    return p;
}

Prediction EchoPredictor::predict(const EventFrame& frame) {
    return {frame.label.value_or(NormalizedCentroid{0.5, 0.5}), kNaN};
}

Prediction ConstantPredictor::predict(const EventFrame&) {
    return {c_, kNaN};
}

std::vector<EvalRecord> evaluate(Predictor& predictor, const Dataset& dataset, const EvalOptions& opts) {
    if (dataset.labeled_count() == 0) throw DataError("evaluate: dataset has no labeled frames");
    std::vector<EvalRecord> records;
    records.reserve(dataset.labeled_count());
    for (std::size_t si = 0; si < dataset.sequences.size(); ++si) {
        const SequenceData& seq = dataset.sequences[si];
        predictor.reset();
        for (std::size_t fi = 0; fi < seq.frames.size(); ++fi) {
            const EventFrame& frame = seq.frames[fi];
            if (!frame.label) {
                predictor.predict(frame);
                continue;
            }
            const Prediction p = predictor.predict(frame);
            EvalRecord r;
            r.frame_index = records.size();
            r.sequence = si;
            r.sequence_frame = fi;
            r.pred = p.centroid;
            r.label = *frame.label;
            r.px_dist = pixel_distance(r.pred, r.label, opts.eval_width, opts.eval_height);
            r.hit5 = r.px_dist <= kHitThresholds[0];
            r.hit10 = r.px_dist <= kHitThresholds[1];
            r.hit15 = r.px_dist <= kHitThresholds[2];
            r.event_density = seq.confidence[fi] ? seq.confidence[fi]->ed : 0.0;
            r.alpha_hat = p.alpha_hat;
            r.kind = seq.kinds.empty() ? SegmentKind::fixation : seq.kinds[fi];
            records.push_back(r);
        }
    }
    return records;
}

void write_records_csv(std::ostream& out, const std::vector<EvalRecord>& records) {
    out.precision(10);
    out << "frame_idx,pred_x,pred_y,label_x,label_y,px_dist,hit5,hit10,hit15,event_density\n";
    for (const auto& r : records) {
        out << r.frame_index << ',' << r.pred.x << ',' << r.pred.y << ',' << r.label.x << ',' << r.label.y << ','
            << r.px_dist << ',' << int(r.hit5) << ',' << int(r.hit10) << ',' << int(r.hit15) << ','
            << r.event_density << '\n';
    }
}

void write_records_csv(const std::filesystem::path& path, const std::vector<EvalRecord>& records) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    write_records_csv(out, records);
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace aissm
