#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aissm/config.hpp"
#include "aissm/events.hpp"

namespace aissm {

enum class SegmentKind { fixation, saccade };

const char* to_string(SegmentKind kind);

struct Segment {
    std::uint64_t t_start = 0;  // microseconds, inclusive
    std::uint64_t t_end = 0;    // exclusive
    SegmentKind kind = SegmentKind::fixation;

    friend bool operator==(const Segment&, const Segment&) = default;
};

struct SynthConfig {
    std::uint32_t sensor_width = 320;
    std::uint32_t sensor_height = 240;
    double pupil_radius = 24.0;
    std::uint32_t segments = 130;  // alternating, starting with a fixation
    double saccade_ms_min = 20.0;
    double saccade_ms_max = 60.0;
    double saccade_amplitude_min = 30.0;  // pixels
    double saccade_amplitude_max = 140.0;
    double fixation_ms_min = 250.0;
    double fixation_ms_max = 1200.0;
    // Expected events per boundary pixel per pixel of centroid displacement.
    double contrast_rate = 0.25;
    // Stationary std-dev of each drift velocity component during fixation, pixels/ms.
    double jitter_sigma = 0.05;
    double drift_tau_ms = 50.0;  // drift velocity correlation time
    double noise_rate = 2000.0;  // events/s over the whole sensor
    std::uint64_t seed = 1;

    static SynthConfig from_key_values(const KeyValues& kv);
    KeyValues to_key_values() const;
    void validate() const;
};

struct SynthSequence {
    EventSequence sequence;  // labels hold the per-millisecond centroid track
    std::vector<Segment> segments;
};

// Deterministic for a given config: minimum-jerk saccades between fixations,
// boundary events proportional to centroid displacement, uniform noise.
SynthSequence generate(const SynthConfig& config);

// Writes events.evt1, labels.csv and segments.csv into root (created if needed).
void export_sequence(const SynthSequence& seq, const std::filesystem::path& root);

void write_segments_csv(const std::filesystem::path& path, const std::vector<Segment>& segments);
std::vector<Segment> parse_segments_csv(const std::filesystem::path& path);

// Kind of the segment containing t; fixation when t lies outside every segment.
SegmentKind segment_kind_at(const std::vector<Segment>& segments, std::uint64_t t);

}  // namespace aissm
