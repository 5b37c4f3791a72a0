#include "aissm/frames.hpp"

#include <algorithm>

#include "aissm/errors.hpp"

namespace aissm {

EventFrame EventFrame::from_counts(std::uint32_t width, std::uint32_t height, const std::vector<std::uint32_t>& counts) {
    if (counts.size() != static_cast<std::size_t>(width) * height) {
        throw ShapeError("from_counts: grid size does not match " + std::to_string(width) + "x" + std::to_string(height));
    }
    EventFrame f;
    f.width = width;
    f.height = height;
    for (std::uint32_t i = 0; i < counts.size(); ++i) {
        if (counts[i] > 0) f.active.push_back({i, counts[i]});
    }
    return f;
}

std::uint32_t EventFrame::count(std::uint32_t row, std::uint32_t col) const {
    const std::uint32_t idx = row * width + col;
    auto it = std::lower_bound(active.begin(), active.end(), idx,
                               [](const PixelCount& pc, std::uint32_t i) { return pc.index < i; });
    return (it != active.end() && it->index == idx) ? it->count : 0;
}

std::vector<std::uint32_t> EventFrame::counts_grid() const {
    std::vector<std::uint32_t> grid(static_cast<std::size_t>(width) * height, 0);
    for (const auto& pc : active) grid[pc.index] = pc.count;
    return grid;
}

std::vector<std::uint8_t> EventFrame::binary_grid() const {
    std::vector<std::uint8_t> grid(static_cast<std::size_t>(width) * height, 0);
    for (const auto& pc : active) grid[pc.index] = 1;
    return grid;
}

std::vector<double> EventFrame::binary_values() const {
    std::vector<double> grid(static_cast<std::size_t>(width) * height, 0.0);
    for (const auto& pc : active) grid[pc.index] = 1.0;
    return grid;
}

std::uint64_t EventFrame::total_events() const {
    std::uint64_t n = 0;
    for (const auto& pc : active) n += pc.count;
    return n;
}

std::vector<EventFrame> build_frames(const EventSequence& seq, std::uint64_t window_us, std::uint32_t out_width,
                                     std::uint32_t out_height) {
    if (window_us == 0) throw ConfigError("build_frames: window must be positive");
    if (seq.events.empty()) return {};
    return build_frames(seq, window_us, out_width, out_height, seq.events.front().t);
}

std::vector<EventFrame> build_frames(const EventSequence& seq, std::uint64_t window_us, std::uint32_t out_width,
                                     std::uint32_t out_height, std::uint64_t origin) {
    if (window_us == 0) throw ConfigError("build_frames: window must be positive");
    if (out_width == 0 || out_height == 0) throw ConfigError("build_frames: output dimensions must be >= 1");
    if (seq.sensor_width == 0 || seq.sensor_height == 0) throw DataError("build_frames: sensor size is zero");
    if (seq.events.empty() || seq.events.back().t < origin) return {};

    const std::uint64_t n_windows = (seq.events.back().t - origin) / window_us + 1;
    std::vector<EventFrame> frames;
    frames.reserve(n_windows);
    std::vector<std::uint32_t> counts(static_cast<std::size_t>(out_width) * out_height, 0);
    std::vector<std::uint32_t> touched;

    auto ev = std::lower_bound(seq.events.begin(), seq.events.end(), origin,
                               [](const Event& e, std::uint64_t t) { return e.t < t; });
    auto label = seq.labels.begin();
    std::optional<CentroidLabel> current;

    for (std::uint64_t w = 0; w < n_windows; ++w) {
        EventFrame frame;
        frame.width = out_width;
        frame.height = out_height;
        frame.t_start = origin + w * window_us;
        frame.t_end = frame.t_start + window_us;
        for (; ev != seq.events.end() && ev->t < frame.t_end; ++ev) {
            const auto col = static_cast<std::uint32_t>(static_cast<std::uint64_t>(ev->x) * out_width / seq.sensor_width);
            const auto row = static_cast<std::uint32_t>(static_cast<std::uint64_t>(ev->y) * out_height / seq.sensor_height);
            const std::uint32_t idx = row * out_width + col;
            if (counts[idx]++ == 0) touched.push_back(idx);
        }
        std::sort(touched.begin(), touched.end());
        frame.active.reserve(touched.size());
        for (auto idx : touched) {
            frame.active.push_back({idx, counts[idx]});
            counts[idx] = 0;
        }
        touched.clear();

        for (; label != seq.labels.end() && label->t <= frame.t_end; ++label) current = *label;
        if (current) {
            frame.label = NormalizedCentroid{current->cx / seq.sensor_width, current->cy / seq.sensor_height};
        }
        frames.push_back(std::move(frame));
    }
    return frames;
}

PixelPoint scale_centroid(const NormalizedCentroid& c, double target_width, double target_height) {
    if (!(c.x >= 0.0 && c.x <= 1.0 && c.y >= 0.0 && c.y <= 1.0)) {
        throw DataError("scale_centroid: centroid (" + std::to_string(c.x) + ", " + std::to_string(c.y) +
                        ") is outside [0,1]^2");
    }
    return {c.x * target_width, c.y * target_height};
}

}  // namespace aissm
