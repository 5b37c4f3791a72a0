#include "aissm/dataset.hpp"

#include <algorithm>

#include "aissm/errors.hpp"

namespace aissm {

namespace fs = std::filesystem;

std::size_t SequenceData::labeled_count() const {
    return static_cast<std::size_t>(
        std::count_if(frames.begin(), frames.end(), [](const EventFrame& f) { return f.label.has_value(); }));
}

std::size_t Dataset::frame_count() const {
    std::size_t n = 0;
    for (const auto& s : sequences) n += s.frames.size();
    return n;
}

std::size_t Dataset::labeled_count() const {
    std::size_t n = 0;
    for (const auto& s : sequences) n += s.labeled_count();
    return n;
}

Dataset Dataset::slice(std::size_t first, std::size_t count) const {
    if (first + count > sequences.size()) throw DataError("dataset slice exceeds sequence count");
    Dataset out;
    out.sequences.assign(sequences.begin() + static_cast<std::ptrdiff_t>(first),
                         sequences.begin() + static_cast<std::ptrdiff_t>(first + count));
    return out;
}

SequenceData make_sequence_data(const std::string& name, const EventSequence& seq,
                                const std::vector<Segment>& segments, const DatasetOptions& opts) {
    SequenceData data;
    data.name = name;
    data.frames = build_frames(seq, opts.window_us, opts.width, opts.height);
    data.confidence = label_sequence(data.frames, opts.confidence);
    data.has_segments = !segments.empty();
    data.kinds.reserve(data.frames.size());
    for (const auto& f : data.frames) {
        data.kinds.push_back(segment_kind_at(segments, f.t_start + (f.t_end - f.t_start) / 2));
    }
    return data;
}

Dataset load_dataset(const fs::path& root, const DatasetOptions& opts) {
    if (!fs::is_directory(root)) throw DataError("dataset root '" + root.string() + "' is not a directory");
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        const auto& p = entry.path();
        if (fs::exists(p / "events.evt1") || fs::exists(p / "events.csv")) dirs.push_back(p);
    }
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw DataError("dataset root '" + root.string() + "' holds no sequences");

    Dataset ds;
    for (const auto& dir : dirs) {
        const EventSequence seq = load_sequence_dir(dir, opts.csv_width, opts.csv_height);
        std::vector<Segment> segments;
        if (fs::exists(dir / "segments.csv")) segments = parse_segments_csv(dir / "segments.csv");
        ds.sequences.push_back(make_sequence_data(dir.filename().string(), seq, segments, opts));
    }
    return ds;
}

}  // namespace aissm
