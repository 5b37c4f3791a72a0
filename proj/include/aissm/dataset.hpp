#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aissm/confidence.hpp"
#include "aissm/frames.hpp"
#include "aissm/synth.hpp"

namespace aissm {

struct SequenceData {
    std::string name;
    std::vector<EventFrame> frames;
    // Computed once from the data; absent where the frame has no centroid label.
    std::vector<std::optional<ConfidenceLabel>> confidence;
    // Per frame, from segments.csv at the window midpoint; fixation when untagged.
    std::vector<SegmentKind> kinds;
    bool has_segments = false;

    std::size_t labeled_count() const;
};

struct Dataset {
    std::vector<SequenceData> sequences;

    std::size_t frame_count() const;
    std::size_t labeled_count() const;
    // Sequences [first, first + count).
    Dataset slice(std::size_t first, std::size_t count) const;
};

struct DatasetOptions {
    std::uint64_t window_us = 10000;
    std::uint32_t width = 160;
    std::uint32_t height = 120;
    ConfidenceConfig confidence;
    // Sensor size for events.csv sequences (EVT1 carries its own).
    std::uint32_t csv_width = 0;
    std::uint32_t csv_height = 0;
};

SequenceData make_sequence_data(const std::string& name, const EventSequence& seq,
                                const std::vector<Segment>& segments, const DatasetOptions& opts);

// Every subdirectory of root holding events.{evt1|csv}, in name order.
Dataset load_dataset(const std::filesystem::path& root, const DatasetOptions& opts);

}  // namespace aissm
