#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "aissm/events.hpp"

namespace aissm {

// Centroid in [0,1]²: x = column / width, y = row / height.
struct NormalizedCentroid {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const NormalizedCentroid&, const NormalizedCentroid&) = default;
};

struct PixelPoint {
    double x = 0.0;
    double y = 0.0;
};

struct PixelCount {
    std::uint32_t index = 0;  // row * width + col
    std::uint32_t count = 0;

    friend bool operator==(const PixelCount&, const PixelCount&) = default;
};

// One fixed window of events at a target resolution. Stored sparsely: only
// pixels with a nonzero count, sorted by index. The binary (binarep) grid is
// 1 exactly where the count is positive; polarity is discarded.
struct EventFrame {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint64_t t_start = 0;
    std::uint64_t t_end = 0;  // exclusive
    std::vector<PixelCount> active;
    std::optional<NormalizedCentroid> label;

    static EventFrame from_counts(std::uint32_t width, std::uint32_t height, const std::vector<std::uint32_t>& counts);

    std::uint32_t count(std::uint32_t row, std::uint32_t col) const;
    std::uint8_t binary(std::uint32_t row, std::uint32_t col) const { return count(row, col) > 0 ? 1 : 0; }
    std::vector<std::uint32_t> counts_grid() const;
    std::vector<std::uint8_t> binary_grid() const;
    // Row-major binary grid as float64, ready for the [1,H,W] model input.
    std::vector<double> binary_values() const;
    std::uint64_t total_events() const;

    friend bool operator==(const EventFrame&, const EventFrame&) = default;
};

// Non-overlapping windows of window_us tiling [origin, t_last]; coordinates map
// by floor(x·out_w/in_w). Each frame carries the latest label with t ≤ t_end,
// normalized by the native sensor size.
std::vector<EventFrame> build_frames(const EventSequence& seq, std::uint64_t window_us, std::uint32_t out_width,
                                     std::uint32_t out_height);
std::vector<EventFrame> build_frames(const EventSequence& seq, std::uint64_t window_us, std::uint32_t out_width,
                                     std::uint32_t out_height, std::uint64_t origin);

PixelPoint scale_centroid(const NormalizedCentroid& c, double target_width, double target_height);

}  // namespace aissm
