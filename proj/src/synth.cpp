#include "aissm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "aissm/errors.hpp"

namespace aissm {

namespace fs = std::filesystem;

namespace {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

double min_jerk(double s) { return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s); }

class Generator {
public:
    explicit Generator(const SynthConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
        lo_ = {cfg.pupil_radius + 1.0, cfg.pupil_radius + 1.0};
        hi_ = {cfg.sensor_width - cfg.pupil_radius - 2.0, cfg.sensor_height - cfg.pupil_radius - 2.0};
    }

    SynthSequence run() {
        out_.sequence.sensor_width = cfg_.sensor_width;
        out_.sequence.sensor_height = cfg_.sensor_height;
        std::uniform_real_distribution<double> ux(lo_.x, hi_.x);
        std::uniform_real_distribution<double> uy(lo_.y, hi_.y);
        pos_ = {ux(rng_), uy(rng_)};
        push_label();

        for (std::uint32_t s = 0; s < cfg_.segments; ++s) {
            const auto start = now_ms_;
            const auto kind = (s % 2 == 0) ? SegmentKind::fixation : SegmentKind::saccade;
            if (kind == SegmentKind::fixation) {
                fixation();
            } else {
                saccade();
            }
            out_.segments.push_back({start * 1000, now_ms_ * 1000, kind});
        }
        restamp();
        return std::move(out_);
    }

private:
    std::uint64_t draw_ms(double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(d(rng_))));
    }

    void fixation() {
        const auto duration = draw_ms(cfg_.fixation_ms_min, cfg_.fixation_ms_max);
        const Vec2 anchor = pos_;
        std::normal_distribution<double> normal(0.0, 1.0);
        // Drift velocity is an Ornstein-Uhlenbeck process, stationary from the first step.
        const double keep = cfg_.drift_tau_ms > 0.0 ? std::exp(-1.0 / cfg_.drift_tau_ms) : 0.0;
        const double kick = cfg_.jitter_sigma * std::sqrt(1.0 - keep * keep);
        Vec2 vel{cfg_.jitter_sigma * normal(rng_), cfg_.jitter_sigma * normal(rng_)};
        for (std::uint64_t k = 0; k < duration; ++k) {
            Vec2 next = pos_;
            if (cfg_.jitter_sigma > 0.0) {
                vel = {keep * vel.x + kick * normal(rng_), keep * vel.y + kick * normal(rng_)};
                next.x += vel.x - 0.02 * (pos_.x - anchor.x);
                next.y += vel.y - 0.02 * (pos_.y - anchor.y);
                next.x = std::clamp(next.x, lo_.x, hi_.x);
                next.y = std::clamp(next.y, lo_.y, hi_.y);
            }
            advance(next);
        }
    }

    void saccade() {
        const auto duration = draw_ms(cfg_.saccade_ms_min, cfg_.saccade_ms_max);
        std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
        std::uniform_real_distribution<double> amp(cfg_.saccade_amplitude_min, cfg_.saccade_amplitude_max);
        Vec2 target = pos_;
        bool found = false;
        for (int attempt = 0; attempt < 100 && !found; ++attempt) {
            const double a = angle(rng_);
            const double r = amp(rng_);
            target = {pos_.x + r * std::cos(a), pos_.y + r * std::sin(a)};
            found = target.x >= lo_.x && target.x <= hi_.x && target.y >= lo_.y && target.y <= hi_.y;
        }
        if (!found) {
            std::uniform_real_distribution<double> ux(lo_.x, hi_.x);
            std::uniform_real_distribution<double> uy(lo_.y, hi_.y);
            target = {ux(rng_), uy(rng_)};
        }
        const Vec2 origin = pos_;
        for (std::uint64_t k = 1; k <= duration; ++k) {
            const double s = min_jerk(static_cast<double>(k) / static_cast<double>(duration));
            advance({origin.x + (target.x - origin.x) * s, origin.y + (target.y - origin.y) * s});
        }
    }

    // Moves the centroid one millisecond and emits that step's events.
    void advance(const Vec2& next) {
        const Vec2 prev = pos_;
        const double dx = next.x - prev.x;
        const double dy = next.y - prev.y;
        const double disp = std::hypot(dx, dy);
        const std::uint64_t t0 = now_ms_ * 1000;
        step_events_.clear();

        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::uniform_int_distribution<int> coin(0, 1);
        if (disp > 0.0 && cfg_.contrast_rate > 0.0) {
            const double perimeter = 2.0 * std::numbers::pi * cfg_.pupil_radius;
            std::poisson_distribution<int> count(cfg_.contrast_rate * perimeter * disp);
            const int n = count(rng_);
            const double heading = std::atan2(dy, dx);
            for (int i = 0; i < n; ++i) {
                // Edges facing the motion direction change contrast most.
                double phi = 0.0;
                do {
                    phi = 2.0 * std::numbers::pi * unit(rng_);
                } while (unit(rng_) > std::abs(std::cos(phi - heading)));
                const double u = unit(rng_);
                const double cx = prev.x + dx * u;
                const double cy = prev.y + dy * u;
                emit(t0 + static_cast<std::uint64_t>(u * 999.0), cx + cfg_.pupil_radius * std::cos(phi),
                     cy + cfg_.pupil_radius * std::sin(phi), coin(rng_));
            }
        }
        if (cfg_.noise_rate > 0.0) {
            std::poisson_distribution<int> count(cfg_.noise_rate / 1000.0);
            const int n = count(rng_);
            std::uniform_int_distribution<int> col(0, static_cast<int>(cfg_.sensor_width) - 1);
            std::uniform_int_distribution<int> row(0, static_cast<int>(cfg_.sensor_height) - 1);
            for (int i = 0; i < n; ++i) {
                const auto t = t0 + static_cast<std::uint64_t>(unit(rng_) * 999.0);
                const int x = col(rng_);
                const int y = row(rng_);
                emit(t, x, y, coin(rng_));
            }
        }
        std::stable_sort(step_events_.begin(), step_events_.end(),
                         [](const Event& a, const Event& b) { return a.t < b.t; });
        auto& events = out_.sequence.events;
        events.insert(events.end(), step_events_.begin(), step_events_.end());

        pos_ = next;
        ++now_ms_;
        push_label();
    }

    void emit(std::uint64_t t, double x, double y, int positive) {
        const auto px = std::clamp<long>(std::lround(x), 0, static_cast<long>(cfg_.sensor_width) - 1);
        const auto py = std::clamp<long>(std::lround(y), 0, static_cast<long>(cfg_.sensor_height) - 1);
        step_events_.push_back({t, static_cast<std::uint16_t>(px), static_cast<std::uint16_t>(py),
                                static_cast<std::int8_t>(positive ? 1 : -1)});
    }

    void push_label() { out_.sequence.labels.push_back({now_ms_ * 1000, pos_.x, pos_.y}); }

    // Strictly increasing timestamps: ties keep insertion order, later ones +1 µs.
    void restamp() {
        auto& events = out_.sequence.events;
        for (std::size_t i = 1; i < events.size(); ++i) {
            if (events[i].t <= events[i - 1].t) events[i].t = events[i - 1].t + 1;
        }
    }

    const SynthConfig& cfg_;
    std::mt19937_64 rng_;
    Vec2 lo_, hi_;
    Vec2 pos_;
    std::uint64_t now_ms_ = 0;
    std::vector<Event> step_events_;
    SynthSequence out_;
};

}  // namespace

const char* to_string(SegmentKind kind) { return kind == SegmentKind::saccade ? "saccade" : "fixation"; }

SynthConfig SynthConfig::from_key_values(const KeyValues& kv) {
    SynthConfig c;
    c.sensor_width = static_cast<std::uint32_t>(kv.get_uint("sensor_width", c.sensor_width));
    c.sensor_height = static_cast<std::uint32_t>(kv.get_uint("sensor_height", c.sensor_height));
    c.pupil_radius = kv.get_double("pupil_radius", c.pupil_radius);
    c.segments = static_cast<std::uint32_t>(kv.get_uint("segments", c.segments));
    c.saccade_ms_min = kv.get_double("saccade_ms_min", c.saccade_ms_min);
    c.saccade_ms_max = kv.get_double("saccade_ms_max", c.saccade_ms_max);
    c.saccade_amplitude_min = kv.get_double("saccade_amplitude_min", c.saccade_amplitude_min);
    c.saccade_amplitude_max = kv.get_double("saccade_amplitude_max", c.saccade_amplitude_max);
    c.fixation_ms_min = kv.get_double("fixation_ms_min", c.fixation_ms_min);
    c.fixation_ms_max = kv.get_double("fixation_ms_max", c.fixation_ms_max);
    c.contrast_rate = kv.get_double("contrast_rate", c.contrast_rate);
    c.jitter_sigma = kv.get_double("jitter_sigma", c.jitter_sigma);
    c.drift_tau_ms = kv.get_double("drift_tau_ms", c.drift_tau_ms);
    c.noise_rate = kv.get_double("noise_rate", c.noise_rate);
    c.seed = kv.get_uint("seed", c.seed);
    return c;
}

KeyValues SynthConfig::to_key_values() const {
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    KeyValues kv;
    kv.set("sensor_width", std::to_string(sensor_width));
    kv.set("sensor_height", std::to_string(sensor_height));
    kv.set("pupil_radius", num(pupil_radius));
    kv.set("segments", std::to_string(segments));
    kv.set("saccade_ms_min", num(saccade_ms_min));
    kv.set("saccade_ms_max", num(saccade_ms_max));
    kv.set("saccade_amplitude_min", num(saccade_amplitude_min));
    kv.set("saccade_amplitude_max", num(saccade_amplitude_max));
    kv.set("fixation_ms_min", num(fixation_ms_min));
    kv.set("fixation_ms_max", num(fixation_ms_max));
    kv.set("contrast_rate", num(contrast_rate));
    kv.set("jitter_sigma", num(jitter_sigma));
    kv.set("drift_tau_ms", num(drift_tau_ms));
    kv.set("noise_rate", num(noise_rate));
    kv.set("seed", std::to_string(seed));
    return kv;
}

void SynthConfig::validate() const {
    if (segments == 0) throw ConfigError("synth: segments must be >= 1");
    if (pupil_radius <= 0.0) throw ConfigError("synth: pupil_radius must be positive");
    if (sensor_width > 0xFFFF || sensor_height > 0xFFFF) throw ConfigError("synth: sensor larger than 65535");
    if (2.0 * pupil_radius + 4.0 > sensor_width || 2.0 * pupil_radius + 4.0 > sensor_height) {
        throw ConfigError("synth: pupil of radius " + std::to_string(pupil_radius) + " does not fit a " +
                          std::to_string(sensor_width) + "x" + std::to_string(sensor_height) + " sensor");
    }
    const double values[] = {saccade_ms_min, saccade_ms_max, saccade_amplitude_min, saccade_amplitude_max,
                             fixation_ms_min, fixation_ms_max, contrast_rate, jitter_sigma, drift_tau_ms, noise_rate};
    for (double v : values) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("synth: rates and durations must be non-negative");
    }
    if (saccade_ms_min > saccade_ms_max || fixation_ms_min > fixation_ms_max ||
        saccade_amplitude_min > saccade_amplitude_max) {
        throw ConfigError("synth: range minimum exceeds maximum");
    }
}

SynthSequence generate(const SynthConfig& config) {
    config.validate();
    return Generator(config).run();
}

void write_segments_csv(const fs::path& path, const std::vector<Segment>& segments) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << "t_start,t_end,kind\n";
    for (const auto& s : segments) out << s.t_start << ',' << s.t_end << ',' << to_string(s.kind) << '\n';
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<Segment> parse_segments_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::string line;
    if (!std::getline(in, line) || line.rfind("t_start,t_end,kind", 0) != 0) {
        throw ParseError(path.string() + ": line 1: expected header 't_start,t_end,kind'");
    }
    std::vector<Segment> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string a, b, kind;
        if (!std::getline(row, a, ',') || !std::getline(row, b, ',') || !std::getline(row, kind)) {
            throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": expected 3 fields");
        }
        Segment s;
        try {
            s.t_start = std::stoull(a);
            s.t_end = std::stoull(b);
        } catch (const std::exception&) {
            throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": bad timestamp");
        }
        if (kind == "saccade") {
            s.kind = SegmentKind::saccade;
        } else if (kind == "fixation") {
            s.kind = SegmentKind::fixation;
        } else {
            throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": unknown kind '" + kind + "'");
        }
        out.push_back(s);
    }
    return out;
}

SegmentKind segment_kind_at(const std::vector<Segment>& segments, std::uint64_t t) {
    auto it = std::upper_bound(segments.begin(), segments.end(), t,
                               [](std::uint64_t v, const Segment& s) { return v < s.t_start; });
    if (it == segments.begin()) return SegmentKind::fixation;
    --it;
    return t < it->t_end ? it->kind : SegmentKind::fixation;
}

void export_sequence(const SynthSequence& seq, const fs::path& root) {
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw IoError("cannot create '" + root.string() + "': " + ec.message());
    write_events_evt1(root / "events.evt1", seq.sequence);
    write_labels_csv(root / "labels.csv", seq.sequence.labels);
    write_segments_csv(root / "segments.csv", seq.segments);
}

}  // namespace aissm
