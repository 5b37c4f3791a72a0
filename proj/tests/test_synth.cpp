#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "aissm/errors.hpp"
#include "aissm/frames.hpp"
#include "aissm/synth.hpp"
#include "test_util.hpp"

namespace aissm {
namespace {

using testing::TempDir;

SynthConfig small_config(std::uint64_t seed, std::uint32_t segments = 12) {
    SynthConfig cfg;
    cfg.segments = segments;
    cfg.seed = seed;
    return cfg;
}

// Centroid at time t by linear interpolation of the millisecond track.
std::pair<double, double> centroid_at(const std::vector<CentroidLabel>& track, std::uint64_t t) {
    const auto k = std::min<std::size_t>(t / 1000, track.size() - 2);
    const double u = std::clamp((static_cast<double>(t) - track[k].t) / 1000.0, 0.0, 1.0);
    return {track[k].cx + u * (track[k + 1].cx - track[k].cx), track[k].cy + u * (track[k + 1].cy - track[k].cy)};
}

std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
        i = j + 1;
    }
    return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    const auto ra = ranks(a), rb = ranks(b);
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / ra.size();
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / rb.size();
    double num = 0, da = 0, db = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        da += (ra[i] - ma) * (ra[i] - ma);
        db += (rb[i] - mb) * (rb[i] - mb);
    }
    return num / std::sqrt(da * db);
}

TEST(Generate, StillFixationWithoutNoiseEmitsNothing) {
    SynthConfig cfg;
    cfg.segments = 1;
    cfg.noise_rate = 0.0;
    cfg.jitter_sigma = 0.0;
    const auto seq = generate(cfg);
    EXPECT_TRUE(seq.sequence.events.empty());
    ASSERT_EQ(seq.segments.size(), 1u);
    EXPECT_EQ(seq.segments[0].kind, SegmentKind::fixation);
    EXPECT_EQ(seq.sequence.labels.size(), seq.segments[0].t_end / 1000 + 1);
}

TEST(Generate, SameSeedIsBitIdentical) {
    const auto a = generate(small_config(4));
    const auto b = generate(small_config(4));
    EXPECT_EQ(a.sequence.events, b.sequence.events);
    EXPECT_EQ(a.sequence.labels, b.sequence.labels);
    EXPECT_EQ(a.segments, b.segments);
    EXPECT_NE(a.sequence.events, generate(small_config(5)).sequence.events);
}

TEST(Generate, InfeasibleGeometryRejected) {
    SynthConfig cfg;
    cfg.sensor_width = 40;
    cfg.sensor_height = 40;
    cfg.pupil_radius = 24;
    EXPECT_THROW(generate(cfg), ConfigError);
    cfg = SynthConfig{};
    cfg.noise_rate = -1;
    EXPECT_THROW(generate(cfg), ConfigError);
    cfg = SynthConfig{};
    cfg.saccade_ms_min = 100;
    cfg.saccade_ms_max = 50;
    EXPECT_THROW(generate(cfg), ConfigError);
}

TEST(Generate, EventsInBoundsAndStrictlySorted) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto s = generate(small_config(seed));
        EXPECT_NO_THROW(s.sequence.validate());
        for (std::size_t i = 1; i < s.sequence.events.size(); ++i) {
            ASSERT_LT(s.sequence.events[i - 1].t, s.sequence.events[i].t);
        }
        for (const auto& e : s.sequence.events) {
            ASSERT_LT(e.x, s.sequence.sensor_width);
            ASSERT_LT(e.y, s.sequence.sensor_height);
        }
    }
}

TEST(Generate, SegmentsAlternateAndTile) {
    const auto s = generate(small_config(2, 9));
    ASSERT_EQ(s.segments.size(), 9u);
    for (std::size_t i = 0; i < s.segments.size(); ++i) {
        EXPECT_EQ(s.segments[i].kind, i % 2 == 0 ? SegmentKind::fixation : SegmentKind::saccade);
        if (i > 0) EXPECT_EQ(s.segments[i].t_start, s.segments[i - 1].t_end);
        EXPECT_LT(s.segments[i].t_start, s.segments[i].t_end);
    }
    EXPECT_EQ(s.sequence.labels.size(), s.segments.back().t_end / 1000 + 1);
}

TEST(Generate, PupilStaysInsideBorders) {
    const auto cfg = small_config(8, 40);
    const auto s = generate(cfg);
    for (const auto& l : s.sequence.labels) {
        EXPECT_GE(l.cx, cfg.pupil_radius);
        EXPECT_GE(l.cy, cfg.pupil_radius);
        EXPECT_LE(l.cx, cfg.sensor_width - cfg.pupil_radius);
        EXPECT_LE(l.cy, cfg.sensor_height - cfg.pupil_radius);
    }
}

TEST(Generate, TrackHasNoJumps) {
    const auto cfg = small_config(6, 40);
    const auto s = generate(cfg);
    // Peak minimum-jerk speed is 1.875 · amplitude / duration.
    const double limit = 1.875 * cfg.saccade_amplitude_max / cfg.saccade_ms_min + 1e-9;
    const auto& tr = s.sequence.labels;
    for (std::size_t i = 1; i < tr.size(); ++i) {
        EXPECT_LE(std::hypot(tr[i].cx - tr[i - 1].cx, tr[i].cy - tr[i - 1].cy), limit);
    }
}

TEST(Generate, NoiselessEventsLieOnTheBoundary) {
    auto cfg = small_config(3, 20);
    cfg.noise_rate = 0.0;
    const auto s = generate(cfg);
    ASSERT_FALSE(s.sequence.events.empty());
    for (const auto& e : s.sequence.events) {
        const auto [cx, cy] = centroid_at(s.sequence.labels, e.t);
        const double r = std::hypot(e.x - cx, e.y - cy);
        ASSERT_LE(std::abs(r - cfg.pupil_radius), 1.5) << "event at t=" << e.t;
    }
}

TEST(Generate, SaccadeWindowsAreDenser) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto s = generate(small_config(seed));
        const auto frames = build_frames(s.sequence, 10000, 160, 120, 0);
        double sum[2] = {0, 0};
        double n[2] = {0, 0};
        for (const auto& f : frames) {
            const auto mid = (f.t_start + f.t_end) / 2;
            const int k = segment_kind_at(s.segments, mid) == SegmentKind::saccade ? 1 : 0;
            sum[k] += static_cast<double>(f.total_events());
            n[k] += 1;
        }
        ASSERT_GT(n[0], 0);
        ASSERT_GT(n[1], 0);
        EXPECT_GT(sum[1] / n[1], sum[0] / n[0]) << "seed " << seed;
    }
}

TEST(Generate, WindowCountTracksSpeed) {
    const auto s = generate(small_config(1, 60));
    const auto frames = build_frames(s.sequence, 10000, 160, 120, 0);
    const auto& tr = s.sequence.labels;
    std::vector<double> counts, speeds;
    for (const auto& f : frames) {
        const std::size_t a = f.t_start / 1000, b = std::min<std::size_t>(f.t_end / 1000, tr.size() - 1);
        if (b <= a) continue;
        double path = 0;
        for (std::size_t k = a + 1; k <= b; ++k) path += std::hypot(tr[k].cx - tr[k - 1].cx, tr[k].cy - tr[k - 1].cy);
        counts.push_back(static_cast<double>(f.total_events()));
        speeds.push_back(path / static_cast<double>(b - a));
    }
    EXPECT_GT(spearman(speeds, counts), 0.8);
}

TEST(Export, RoundTrip) {
    TempDir dir;
    const auto s = generate(small_config(7));
    export_sequence(s, dir.path());
    const auto back = load_sequence_dir(dir.path());
    EXPECT_EQ(back.events, s.sequence.events);
    EXPECT_EQ(back.labels.size(), s.sequence.labels.size());
    for (std::size_t i = 0; i < back.labels.size(); ++i) {
        EXPECT_EQ(back.labels[i].t, s.sequence.labels[i].t);
        EXPECT_NEAR(back.labels[i].cx, s.sequence.labels[i].cx, 1e-9);
        EXPECT_NEAR(back.labels[i].cy, s.sequence.labels[i].cy, 1e-9);
    }
    EXPECT_EQ(parse_segments_csv(dir / "segments.csv"), s.segments);
}

TEST(Export, EmptySequenceWritesHeaders) {
    TempDir dir;
    SynthSequence empty;
    empty.sequence.sensor_width = 320;
    empty.sequence.sensor_height = 240;
    export_sequence(empty, dir.path());
    EXPECT_EQ(testing::read_bytes(dir / "events.evt1").size(), 8u);
    EXPECT_EQ(testing::read_bytes(dir / "labels.csv"), "t,cx,cy\n");
    EXPECT_EQ(testing::read_bytes(dir / "segments.csv"), "t_start,t_end,kind\n");
}

TEST(Segments, KindLookup) {
    const std::vector<Segment> segs = {{0, 100, SegmentKind::fixation}, {100, 150, SegmentKind::saccade}};
    EXPECT_EQ(segment_kind_at(segs, 0), SegmentKind::fixation);
    EXPECT_EQ(segment_kind_at(segs, 100), SegmentKind::saccade);
    EXPECT_EQ(segment_kind_at(segs, 149), SegmentKind::saccade);
    EXPECT_EQ(segment_kind_at(segs, 150), SegmentKind::fixation);
}

}  // namespace
}  // namespace aissm
