#include "aissm/events.hpp"

#include <array>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "aissm/errors.hpp"

namespace aissm {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    if (s.empty()) return false;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

bool parse_double(std::string_view s, double& out) {
    // libstdc++ 11 has floating from_chars, but strtod keeps exponent handling uniform.
    if (s.empty()) return false;
    std::string tmp(s);
    char* end = nullptr;
    out = std::strtod(tmp.c_str(), &end);
    return end == tmp.c_str() + tmp.size();
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(path, mode | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    return out;
}

void expect_header(std::istream& in, const fs::path& path, std::string_view header) {
    std::string line;
    if (!std::getline(in, line) || trim(line) != header) {
        throw ParseError(path.string() + ": line 1: expected header '" + std::string(header) + "'");
    }
}

[[noreturn]] void row_error(const fs::path& path, std::size_t line_no, const std::string& what) {
    throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": " + what);
}

template <typename T>
void put_le(std::string& buf, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        buf.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
    }
}

template <typename T>
T get_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return static_cast<T>(v);
}

}  // namespace

void EventSequence::validate() const {
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        if (e.x >= sensor_width || e.y >= sensor_height) {
            throw DataError("event " + std::to_string(i) + " at (" + std::to_string(e.x) + ", " +
                            std::to_string(e.y) + ") is outside the " + std::to_string(sensor_width) +
                            "x" + std::to_string(sensor_height) + " sensor");
        }
        if (e.p != 1 && e.p != -1) throw DataError("event " + std::to_string(i) + " has polarity not in {-1,+1}");
        if (i > 0 && e.t < events[i - 1].t) {
            throw DataError("event timestamps decrease at index " + std::to_string(i) + " (" +
                            std::to_string(events[i - 1].t) + " -> " + std::to_string(e.t) + ")");
        }
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto& l = labels[i];
        if (!(l.cx >= 0.0 && l.cx <= sensor_width && l.cy >= 0.0 && l.cy <= sensor_height)) {
            throw DataError("label " + std::to_string(i) + " centroid is outside the sensor");
        }
        if (i > 0 && l.t < labels[i - 1].t) {
            throw DataError("label timestamps decrease at index " + std::to_string(i));
        }
    }
}

EventSequence parse_events_csv(const fs::path& path, std::uint32_t sensor_width, std::uint32_t sensor_height) {
    auto in = open_in(path);
    expect_header(in, path, "t,x,y,p");
    EventSequence seq;
    seq.sensor_width = sensor_width;
    seq.sensor_height = sensor_height;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split(line, ',');
        if (fields.size() != 4) row_error(path, line_no, "expected 4 fields, got " + std::to_string(fields.size()));
        Event e;
        unsigned p = 0;
        if (!parse_number(fields[0], e.t)) row_error(path, line_no, "bad timestamp '" + std::string(fields[0]) + "'");
        if (!parse_number(fields[1], e.x)) row_error(path, line_no, "bad x '" + std::string(fields[1]) + "'");
        if (!parse_number(fields[2], e.y)) row_error(path, line_no, "bad y '" + std::string(fields[2]) + "'");
        if (!parse_number(fields[3], p) || p > 1) row_error(path, line_no, "polarity must be 0 or 1");
        e.p = p == 1 ? 1 : -1;
        if (e.x >= sensor_width || e.y >= sensor_height) row_error(path, line_no, "coordinates outside the sensor");
        if (!seq.events.empty() && e.t < seq.events.back().t) {
            row_error(path, line_no, "timestamp " + std::to_string(e.t) + " precedes " +
                                         std::to_string(seq.events.back().t));
        }
        seq.events.push_back(e);
    }
    return seq;
}

EventSequence parse_events_evt1(const fs::path& path) {
    auto in = open_in(path, std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() >= 4 && std::memcmp(raw, "EVT1", 4) != 0) {
        throw FormatError(path.string() + ": bad magic, expected EVT1");
    }
    if (bytes.size() < 8) {
        throw FormatError(path.string() + ": truncated header at byte offset " + std::to_string(bytes.size()));
    }
    EventSequence seq;
    seq.sensor_width = get_le<std::uint16_t>(raw + 4);
    seq.sensor_height = get_le<std::uint16_t>(raw + 6);
    const std::size_t body = bytes.size() - 8;
    if (body % 16 != 0) {
        throw FormatError(path.string() + ": truncated record at byte offset " +
                          std::to_string(8 + (body / 16) * 16));
    }
    seq.events.reserve(body / 16);
    for (std::size_t off = 8; off < bytes.size(); off += 16) {
        Event e;
        e.t = get_le<std::uint64_t>(raw + off);
        e.x = get_le<std::uint16_t>(raw + off + 8);
        e.y = get_le<std::uint16_t>(raw + off + 10);
        e.p = static_cast<std::int8_t>(raw[off + 12]);
        if (e.p != 1 && e.p != -1) {
            throw FormatError(path.string() + ": polarity not in {-1,+1} at byte offset " + std::to_string(off));
        }
        if (e.x >= seq.sensor_width || e.y >= seq.sensor_height) {
            throw FormatError(path.string() + ": coordinates outside the sensor at byte offset " + std::to_string(off));
        }
        if (!seq.events.empty() && e.t < seq.events.back().t) {
            throw FormatError(path.string() + ": timestamp decreases at byte offset " + std::to_string(off));
        }
        seq.events.push_back(e);
    }
    return seq;
}

std::vector<CentroidLabel> parse_labels_csv(const fs::path& path) {
    auto in = open_in(path);
    expect_header(in, path, "t,cx,cy");
    std::vector<CentroidLabel> labels;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split(line, ',');
        if (fields.size() != 3) row_error(path, line_no, "expected 3 fields, got " + std::to_string(fields.size()));
        CentroidLabel l;
        if (!parse_number(fields[0], l.t)) row_error(path, line_no, "bad timestamp");
        if (!parse_double(fields[1], l.cx) || !parse_double(fields[2], l.cy)) row_error(path, line_no, "bad centroid");
        if (!labels.empty() && l.t < labels.back().t) row_error(path, line_no, "label timestamps decrease");
        labels.push_back(l);
    }
    return labels;
}

void write_events_csv(const fs::path& path, const EventSequence& seq) {
    auto out = open_out(path);
    out << "t,x,y,p\n";
    for (const auto& e : seq.events) out << e.t << ',' << e.x << ',' << e.y << ',' << (e.p > 0 ? 1 : 0) << '\n';
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_events_evt1(const fs::path& path, const EventSequence& seq) {
    if (seq.sensor_width > 0xFFFF || seq.sensor_height > 0xFFFF) {
        throw FormatError("EVT1 cannot store sensor dimensions above 65535");
    }
    std::string buf = "EVT1";
    buf.reserve(8 + 16 * seq.events.size());
    put_le<std::uint16_t>(buf, static_cast<std::uint16_t>(seq.sensor_width));
    put_le<std::uint16_t>(buf, static_cast<std::uint16_t>(seq.sensor_height));
    for (const auto& e : seq.events) {
        put_le<std::uint64_t>(buf, e.t);
        put_le<std::uint16_t>(buf, e.x);
        put_le<std::uint16_t>(buf, e.y);
        buf.push_back(static_cast<char>(e.p));
        buf.append(3, '\0');
    }
    auto out = open_out(path, std::ios::binary);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_labels_csv(const fs::path& path, const std::vector<CentroidLabel>& labels) {
    auto out = open_out(path);
    out.precision(17);
    out << "t,cx,cy\n";
    for (const auto& l : labels) out << l.t << ',' << l.cx << ',' << l.cy << '\n';
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

EventSequence load_sequence_dir(const fs::path& dir, std::uint32_t csv_width, std::uint32_t csv_height) {
    EventSequence seq;
    if (fs::exists(dir / "events.evt1")) {
        seq = parse_events_evt1(dir / "events.evt1");
    } else if (fs::exists(dir / "events.csv")) {
        if (csv_width == 0 || csv_height == 0) {
            throw ConfigError(dir.string() + ": events.csv needs sensor_width/sensor_height");
        }
        seq = parse_events_csv(dir / "events.csv", csv_width, csv_height);
    } else {
        throw DataError(dir.string() + ": no events.evt1 or events.csv");
    }
    if (fs::exists(dir / "labels.csv")) seq.labels = parse_labels_csv(dir / "labels.csv");
    seq.validate();
    return seq;
}

}  // namespace aissm
