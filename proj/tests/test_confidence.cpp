#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "aissm/confidence.hpp"
#include "aissm/errors.hpp"

namespace aissm {
namespace {

EventFrame random_frame(std::mt19937_64& rng, std::uint32_t w, std::uint32_t h, double fill) {
    std::vector<std::uint32_t> counts(static_cast<std::size_t>(w) * h, 0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& c : counts) {
        if (u(rng) < fill) c = 1 + static_cast<std::uint32_t>(rng() % 4);
    }
    auto f = EventFrame::from_counts(w, h, counts);
    f.label = NormalizedCentroid{u(rng), u(rng)};
    return f;
}

struct OracleLabel {
    double snr, ed, alpha;
};

// Brute-force per-pixel double loop over the dense grid.
OracleLabel oracle(const EventFrame& f, const ConfidenceConfig& cfg) {
    const auto counts = f.counts_grid();
    const double cr = f.label->y * f.height;
    const double cc = f.label->x * f.width;
    const int top = static_cast<int>(std::floor(cr - cfg.roi_h / 2.0 + 0.5));
    const int left = static_cast<int>(std::floor(cc - cfg.roi_w / 2.0 + 0.5));
    std::uint64_t in = 0, out = 0;
    for (int r = 0; r < static_cast<int>(f.height); ++r) {
        for (int c = 0; c < static_cast<int>(f.width); ++c) {
            const bool inside = r >= top && r < top + cfg.roi_h && c >= left && c < left + cfg.roi_w;
            (inside ? in : out) += counts[static_cast<std::size_t>(r) * f.width + c];
        }
    }
    double snr = 0.5;
    if (in > 0) snr = out == 0 ? 1.0 : 1.0 / (1.0 + std::exp(-static_cast<double>(in) / static_cast<double>(out)));
    const double ed = std::min(1.0, static_cast<double>(in) / (cfg.roi_h * cfg.roi_w * cfg.tau));
    return {snr, ed, cfg.beta * snr + (1.0 - cfg.beta) * ed};
}

TEST(ComputeRoi, Centered) {
    const auto roi = compute_roi({0.5, 0.5}, 160, 120, 40, 70);
    EXPECT_EQ(roi.top, 40);
    EXPECT_EQ(roi.bottom, 80);
    EXPECT_EQ(roi.left, 45);
    EXPECT_EQ(roi.right, 115);
}

TEST(ComputeRoi, CornerClips) {
    const auto roi = compute_roi({0.0, 0.0}, 160, 120, 40, 70);
    EXPECT_EQ(roi.top, 0);
    EXPECT_EQ(roi.bottom, 20);
    EXPECT_EQ(roi.left, 0);
    EXPECT_EQ(roi.right, 35);
    EXPECT_EQ(roi.nominal_height, 40);
    EXPECT_EQ(roi.nominal_width, 70);
}

TEST(ComputeRoi, FullFrame) {
    const auto roi = compute_roi({0.5, 0.5}, 160, 120, 120, 160);
    EXPECT_EQ(roi, (Roi{0, 0, 120, 160, 120, 160}));
}

TEST(ComputeRoi, NonEmptyForAnyInFrameLabel) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 500; ++i) {
        const auto roi = compute_roi({u(rng), u(rng)}, 160, 120, 1 + static_cast<int>(rng() % 50),
                                     1 + static_cast<int>(rng() % 80));
        EXPECT_GE(roi.top, 0);
        EXPECT_LE(roi.bottom, 120);
        EXPECT_GE(roi.left, 0);
        EXPECT_LE(roi.right, 160);
        EXPECT_GT(roi.clipped_area(), 0);
    }
    EXPECT_THROW(compute_roi({0.5, 0.5}, 160, 120, 0, 70), ConfigError);
}

TEST(Snr, Examples) {
    EXPECT_NEAR(snr_from_sums(10, 10), 0.7310585786, 1e-9);
    EXPECT_EQ(snr_from_sums(0, 10), 0.5);
    EXPECT_EQ(snr_from_sums(0, 0), 0.5);
    EXPECT_EQ(snr_from_sums(50, 0), 1.0);
}

TEST(EventDensity, Examples) {
    EXPECT_EQ(density_from_sum(280, 40, 70, 0.1), 1.0);
    EXPECT_EQ(density_from_sum(0, 40, 70, 0.1), 0.0);
    EXPECT_DOUBLE_EQ(density_from_sum(140, 40, 70, 0.1), 0.5);
    EXPECT_EQ(density_from_sum(10000, 40, 70, 0.1), 1.0);
    EXPECT_THROW(density_from_sum(1, 40, 70, 0.0), ConfigError);
}

TEST(EventDensity, UsesNominalAreaWhenClipped) {
    std::vector<std::uint32_t> counts(160 * 120, 0);
    for (int r = 0; r < 20; ++r) counts[static_cast<std::size_t>(r) * 160] = 7;
    const auto f = EventFrame::from_counts(160, 120, counts);
    const auto roi = compute_roi({0.0, 0.0}, 160, 120, 40, 70);
    EXPECT_DOUBLE_EQ(event_density(f, roi, 0.1), 140.0 / 280.0);
}

TEST(AlphaLabel, Examples) {
    EXPECT_DOUBLE_EQ(alpha_label(0.5, 1.0, 0.1), 0.95);
    EXPECT_EQ(alpha_label(0.3, 0.9, 1.0), 0.3);
    for (double c : {0.0, 0.25, 0.5, 1.0}) {
        for (double b : {0.0, 0.1, 0.7, 1.0}) EXPECT_DOUBLE_EQ(alpha_label(c, c, b), c);
    }
}

TEST(AlphaLabel, MonotoneInBothInputs) {
    for (double b : {0.0, 0.1, 0.5, 1.0}) {
        for (int i = 0; i < 10; ++i) {
            for (int j = 0; j < 10; ++j) {
                const double s = i / 10.0, e = j / 10.0;
                EXPECT_LE(alpha_label(s, e, b), alpha_label(s + 0.1, e, b));
                EXPECT_LE(alpha_label(s, e, b), alpha_label(s, e + 0.1, b));
            }
        }
    }
}

TEST(LabelSequence, EmptyFrameAndMissingLabel) {
    EventFrame empty;
    empty.width = 160;
    empty.height = 120;
    empty.label = NormalizedCentroid{0.4, 0.6};
    EventFrame unlabeled = empty;
    unlabeled.label.reset();
    const auto labels = label_sequence({empty, unlabeled}, ConfidenceConfig{});
    ASSERT_EQ(labels.size(), 2u);
    ASSERT_TRUE(labels[0].has_value());
    EXPECT_EQ(labels[0]->snr, 0.5);
    EXPECT_EQ(labels[0]->ed, 0.0);
    EXPECT_DOUBLE_EQ(labels[0]->alpha, 0.05);
    EXPECT_FALSE(labels[1].has_value());
    EXPECT_THROW(confidence_label(unlabeled, ConfidenceConfig{}), DataError);
}

TEST(LabelSequence, MatchesBruteForceOracleExactly) {
    std::mt19937_64 rng(11);
    const ConfidenceConfig cfg;
    for (int i = 0; i < 100; ++i) {
        const double fill = (i % 4 == 0) ? 0.0 : 0.002 * (1 + i % 40);
        const auto f = random_frame(rng, 160, 120, fill);
        const auto got = confidence_label(f, cfg);
        const auto want = oracle(f, cfg);
        EXPECT_EQ(got.snr, want.snr) << "frame " << i;
        EXPECT_EQ(got.ed, want.ed) << "frame " << i;
        EXPECT_EQ(got.alpha, want.alpha) << "frame " << i;
        EXPECT_GE(got.snr, 0.5);
        EXPECT_LE(got.alpha, 1.0);
        EXPECT_GE(got.alpha, 0.0);
    }
}

TEST(LabelSequence, AddingEventsInsideOrOutside) {
    std::mt19937_64 rng(3);
    const ConfidenceConfig cfg;
    for (int i = 0; i < 50; ++i) {
        auto f = random_frame(rng, 160, 120, 0.01);
        const auto roi = compute_roi(*f.label, 160, 120, cfg.roi_h, cfg.roi_w);
        const auto base = confidence_label(f, cfg);
        auto counts = f.counts_grid();

        auto inside = counts;
        const int r_in = roi.top + static_cast<int>(rng() % (roi.bottom - roi.top));
        const int c_in = roi.left + static_cast<int>(rng() % (roi.right - roi.left));
        inside[static_cast<std::size_t>(r_in) * 160 + c_in] += 3;
        auto fi = EventFrame::from_counts(160, 120, inside);
        fi.label = f.label;
        const auto li = confidence_label(fi, cfg);
        EXPECT_GE(li.snr, base.snr);
        EXPECT_GE(li.ed, base.ed);

        int r_out = 0, c_out = 0;
        do {
            r_out = static_cast<int>(rng() % 120);
            c_out = static_cast<int>(rng() % 160);
        } while (roi.contains(r_out, c_out));
        auto outside = counts;
        outside[static_cast<std::size_t>(r_out) * 160 + c_out] += 3;
        auto fo = EventFrame::from_counts(160, 120, outside);
        fo.label = f.label;
        const auto lo = confidence_label(fo, cfg);
        EXPECT_LE(lo.snr, base.snr);
        EXPECT_EQ(lo.ed, base.ed);
    }
}

TEST(ConfidenceConfig, ScalesRoiWithResolution) {
    const auto ref = ConfidenceConfig::for_resolution(160, 120);
    EXPECT_EQ(ref.roi_h, 40);
    EXPECT_EQ(ref.roi_w, 70);
    const auto dbl = ConfidenceConfig::for_resolution(320, 240);
    EXPECT_EQ(dbl.roi_h, 80);
    EXPECT_EQ(dbl.roi_w, 140);
    const auto small = ConfidenceConfig::for_resolution(80, 60);
    EXPECT_EQ(small.roi_h, 20);
    EXPECT_EQ(small.roi_w, 35);
}

}  // namespace
}  // namespace aissm
