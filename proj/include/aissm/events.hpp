#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace aissm {

struct Event {
    std::uint64_t t = 0;  // microseconds
    std::uint16_t x = 0;  // column
    std::uint16_t y = 0;  // row
    std::int8_t p = 1;    // -1 or +1

    friend bool operator==(const Event&, const Event&) = default;
};

// Pupil centroid in native sensor pixels.
struct CentroidLabel {
    std::uint64_t t = 0;
    double cx = 0.0;
    double cy = 0.0;

    friend bool operator==(const CentroidLabel&, const CentroidLabel&) = default;
};

struct EventSequence {
    std::uint32_t sensor_width = 0;
    std::uint32_t sensor_height = 0;
    std::vector<Event> events;
    std::vector<CentroidLabel> labels;

    // Throws DataError on unordered timestamps, out-of-range coordinates or polarities.
    void validate() const;
};

// Header "t,x,y,p", p in {0,1} with 0 meaning negative polarity. CSV carries no
// sensor size, so bounds come from the caller.
EventSequence parse_events_csv(const std::filesystem::path& path, std::uint32_t sensor_width,
                               std::uint32_t sensor_height);

// "EVT1", u16 width, u16 height, then 16-byte records
// (u64 t, u16 x, u16 y, i8 p, 3 pad bytes), all little-endian.
EventSequence parse_events_evt1(const std::filesystem::path& path);

// Header "t,cx,cy".
std::vector<CentroidLabel> parse_labels_csv(const std::filesystem::path& path);

void write_events_csv(const std::filesystem::path& path, const EventSequence& seq);
void write_events_evt1(const std::filesystem::path& path, const EventSequence& seq);
void write_labels_csv(const std::filesystem::path& path, const std::vector<CentroidLabel>& labels);

// Loads <dir>/events.evt1 (or events.csv with the given fallback size) plus
// <dir>/labels.csv when present; labels are bounds-checked against the sensor.
EventSequence load_sequence_dir(const std::filesystem::path& dir, std::uint32_t csv_width = 0,
                                std::uint32_t csv_height = 0);

}  // namespace aissm
