#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "aissm/errors.hpp"
#include "aissm/metrics.hpp"
#include "aissm/synth.hpp"
#include "test_util.hpp"

namespace aissm {
namespace {

EvalRecord record_at(double px) {
    EvalRecord r;
    r.px_dist = px;
    r.hit5 = px <= 5;
    r.hit10 = px <= 10;
    r.hit15 = px <= 15;
    return r;
}

Dataset labeled_dataset(const std::vector<NormalizedCentroid>& labels, std::size_t unlabeled_at = SIZE_MAX) {
    SequenceData seq;
    seq.name = "manual";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        EventFrame f;
        f.width = 160;
        f.height = 120;
        if (i != unlabeled_at) f.label = labels[i];
        seq.frames.push_back(f);
        seq.confidence.push_back(f.label ? std::optional<ConfidenceLabel>(confidence_label(f, {})) : std::nullopt);
        seq.kinds.push_back(SegmentKind::fixation);
    }
    Dataset ds;
    ds.sequences.push_back(seq);
    return ds;
}

// Label plus an offset of up to 20 px at 320, fixed per window.
class OffsetPredictor : public Predictor {
public:
    void reset() override {}
    Prediction predict(const EventFrame& frame) override {
        const auto l = frame.label.value_or(NormalizedCentroid{0.5, 0.5});
        const double off = static_cast<double>(frame.t_start / 10000 % 41) - 20.0;
        return {{l.x + off / 320.0, l.y}, 0.0};
    }
};

Dataset synth_dataset(std::size_t n, std::uint64_t seed) {
    Dataset ds;
    DatasetOptions opts;
    for (std::size_t i = 0; i < n; ++i) {
        SynthConfig sc;
        sc.seed = seed + i;
        sc.segments = 4;
        const auto s = generate(sc);
        ds.sequences.push_back(make_sequence_data("s" + std::to_string(i), s.sequence, s.segments, opts));
    }
    return ds;
}

TEST(PixelDistance, Examples) {
    EXPECT_EQ(pixel_distance({0.3, 0.7}, {0.3, 0.7}, 320, 320), 0.0);
    EXPECT_EQ(pixel_distance({0.5, 0.5}, {0.53125, 0.5}, 320, 320), 10.0);
    EXPECT_NEAR(pixel_distance({0.0, 0.0}, {1.0, 1.0}, 320, 320), 320.0 * std::sqrt(2.0), 1e-9);
    EXPECT_NEAR(pixel_distance({0.0, 0.0}, {1.0, 1.0}, 320, 320), 452.55, 0.01);
}

TEST(NormDistance, Examples) {
    EXPECT_EQ(norm_distance({0.2, 0.9}, {0.2, 0.9}), 0.0);
    EXPECT_DOUBLE_EQ(norm_distance({0.0, 0.0}, {1.0, 1.0}), std::sqrt(2.0));
    EXPECT_NEAR(norm_distance({0.5, 0.5}, {0.5, 0.6}), 0.1, 1e-15);
}

TEST(PMetric, Examples) {
    const std::vector<EvalRecord> perfect(5, record_at(0.0));
    for (double k : kHitThresholds) EXPECT_EQ(p_metric(perfect, k), 100.0);
    const std::vector<EvalRecord> boundary{record_at(10.0)};
    EXPECT_EQ(p_metric(boundary, 10), 100.0);
    EXPECT_EQ(p_metric(boundary, 5), 0.0);
    const std::vector<EvalRecord> pair{record_at(3.0), record_at(12.0)};
    EXPECT_EQ(p_metric(pair, 5), 50.0);
    EXPECT_EQ(p_metric(pair, 10), 50.0);
    EXPECT_EQ(p_metric(pair, 15), 100.0);
}

TEST(PMetric, Errors) {
    EXPECT_THROW(p_metric({}, 10), DataError);
    EXPECT_THROW(p_metric({record_at(1)}, 0), DataError);
    EXPECT_THROW(summarize({}), DataError);
}

TEST(PMetric, MonotoneInThreshold) {
    std::mt19937_64 rng(1);
    std::exponential_distribution<double> d(0.1);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<EvalRecord> recs;
        for (int i = 0; i < 50; ++i) recs.push_back(record_at(d(rng)));
        double prev = 0.0;
        for (double k = 0.5; k < 60; k += 0.5) {
            const double p = p_metric(recs, k);
            EXPECT_GE(p, prev);
            prev = p;
        }
        const auto s = summarize(recs);
        EXPECT_LE(s.p5, s.p10);
        EXPECT_LE(s.p10, s.p15);
    }
}

TEST(Scale, PixelEqualsResolutionTimesNormalized) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const NormalizedCentroid a{u(rng), u(rng)}, b{u(rng), u(rng)};
        const double n = norm_distance(a, b);
        EXPECT_GE(n, 0.0);
        EXPECT_LE(n, std::sqrt(2.0));
        for (double r : {160.0, 320.0}) EXPECT_NEAR(pixel_distance(a, b, r, r), r * n, 1e-12 * r);
    }
}

TEST(Evaluate, EchoIsPerfect) {
    const Dataset ds = synth_dataset(2, 5);
    EchoPredictor echo;
    const auto recs = evaluate(echo, ds, {});
    EXPECT_EQ(recs.size(), ds.labeled_count());
    const auto s = summarize(recs);
    EXPECT_EQ(s.p5, 100.0);
    EXPECT_EQ(s.p10, 100.0);
    EXPECT_EQ(s.p15, 100.0);
    EXPECT_EQ(s.distance, 0.0);
    EXPECT_TRUE(std::isnan(s.mean_alpha));
}

TEST(Evaluate, ConstantPredictorElevenPixelsOff) {
    const NormalizedCentroid label{0.5, 0.5 + 11.0 / 320.0};
    const Dataset ds = labeled_dataset(std::vector<NormalizedCentroid>(6, label));
    ConstantPredictor c({0.5, 0.5});
    const auto s = summarize(evaluate(c, ds, {}));
    EXPECT_EQ(s.p10, 0.0);
    EXPECT_EQ(s.p15, 100.0);
    EXPECT_EQ(s.frames, 6u);
}

TEST(Evaluate, RecordsCarryIndicesDensityAndHits) {
    const Dataset ds = labeled_dataset({{0.5, 0.5}, {0.1, 0.1}, {0.2, 0.2}, {0.9, 0.4}}, 1);
    ConstantPredictor c({0.5, 0.5});
    const auto recs = evaluate(c, ds, {});
    ASSERT_EQ(recs.size(), 3u);
    EXPECT_EQ(recs[0].sequence_frame, 0u);
    EXPECT_EQ(recs[1].sequence_frame, 2u);
    EXPECT_EQ(recs[2].sequence_frame, 3u);
    for (std::size_t i = 0; i < recs.size(); ++i) {
        EXPECT_EQ(recs[i].frame_index, i);
        EXPECT_EQ(recs[i].event_density, 0.0);
        EXPECT_EQ(recs[i].hit5, recs[i].px_dist <= 5);
        EXPECT_EQ(recs[i].hit10, recs[i].px_dist <= 10);
        EXPECT_EQ(recs[i].hit15, recs[i].px_dist <= 15);
        EXPECT_TRUE(!recs[i].hit5 || recs[i].hit10);
        EXPECT_TRUE(!recs[i].hit10 || recs[i].hit15);
    }
}

TEST(Evaluate, UnlabeledDatasetRejected) {
    Dataset ds = labeled_dataset({{0.5, 0.5}}, 0);
    EchoPredictor echo;
    EXPECT_THROW(evaluate(echo, ds, {}), DataError);
}

TEST(Evaluate, ConcatenationEqualsMergedSummaries) {
    const Dataset a = synth_dataset(2, 20);
    const Dataset b = synth_dataset(1, 40);
    Dataset both = a;
    both.sequences.insert(both.sequences.end(), b.sequences.begin(), b.sequences.end());
    OffsetPredictor c;
    const auto sa = summarize(evaluate(c, a, {}));
    const auto sb = summarize(evaluate(c, b, {}));
    const auto sab = summarize(evaluate(c, both, {}));
    const auto m = merge(sa, sb);
    EXPECT_EQ(m.frames, sab.frames);
    EXPECT_NEAR(m.p5, sab.p5, 1e-9);
    EXPECT_NEAR(m.p10, sab.p10, 1e-9);
    EXPECT_NEAR(m.p15, sab.p15, 1e-9);
    EXPECT_NEAR(m.distance, sab.distance, 1e-12);
    EXPECT_GT(sab.p5, 0.0);
    EXPECT_LT(sab.p15, 100.0);
}

TEST(RecordsCsv, HeaderAndRowCount) {
    const Dataset ds = labeled_dataset({{0.5, 0.5}, {0.25, 0.75}});
    EchoPredictor echo;
    std::ostringstream out;
    write_records_csv(out, evaluate(echo, ds, {}));
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "frame_idx,pred_x,pred_y,label_x,label_y,px_dist,hit5,hit10,hit15,event_density");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 2);
}

TEST(SummaryJson, HasFiveFields) {
    EvalSummary s;
    s.p5 = 10;
    s.p10 = 20;
    s.p15 = 30;
    s.distance = 0.125;
    s.frames = 8;
    const auto j = nlohmann::json::parse(s.to_json());
    EXPECT_EQ(j.at("p10").get<double>(), 20.0);
    EXPECT_EQ(j.at("distance").get<double>(), 0.125);
    EXPECT_EQ(j.at("frames").get<int>(), 8);
    EXPECT_TRUE(j.contains("p5"));
    EXPECT_TRUE(j.contains("p15"));
}

}  // namespace
}  // namespace aissm
