#include "aissm/confidence.hpp"

#include <algorithm>
#include <cmath>

#include "aissm/errors.hpp"

namespace aissm {

namespace {

struct RoiSums {
    std::uint64_t inside = 0;
    std::uint64_t outside = 0;
};

RoiSums roi_sums(const EventFrame& frame, const Roi& roi) {
    RoiSums s;
    for (const auto& pc : frame.active) {
        const int row = static_cast<int>(pc.index / frame.width);
        const int col = static_cast<int>(pc.index % frame.width);
        (roi.contains(row, col) ? s.inside : s.outside) += pc.count;
    }
    return s;
}

int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

}  // namespace

ConfidenceConfig ConfidenceConfig::for_resolution(std::uint32_t width, std::uint32_t height) {
    ConfidenceConfig cfg;
    cfg.roi_h = std::max(1, round_half_up(40.0 * height / 120.0));
    cfg.roi_w = std::max(1, round_half_up(70.0 * width / 160.0));
    return cfg;
}

Roi compute_roi(const NormalizedCentroid& label, std::uint32_t frame_width, std::uint32_t frame_height, int roi_h,
                int roi_w) {
    if (roi_h <= 0 || roi_w <= 0) throw ConfigError("compute_roi: ROI dimensions must be positive");
    const double row = label.y * frame_height;
    const double col = label.x * frame_width;
    Roi roi;
    roi.nominal_height = roi_h;
    roi.nominal_width = roi_w;
    roi.top = round_half_up(row - roi_h / 2.0);
    roi.left = round_half_up(col - roi_w / 2.0);
    roi.bottom = roi.top + roi_h;
    roi.right = roi.left + roi_w;

    const int h = static_cast<int>(frame_height);
    const int w = static_cast<int>(frame_width);
    roi.top = std::clamp(roi.top, 0, h);
    roi.bottom = std::clamp(roi.bottom, 0, h);
    roi.left = std::clamp(roi.left, 0, w);
    roi.right = std::clamp(roi.right, 0, w);
    // An in-frame centroid always keeps at least its own pixel.
    if (roi.bottom <= roi.top) {
        roi.top = std::clamp(static_cast<int>(row), 0, h - 1);
        roi.bottom = roi.top + 1;
    }
    if (roi.right <= roi.left) {
        roi.left = std::clamp(static_cast<int>(col), 0, w - 1);
        roi.right = roi.left + 1;
    }
    return roi;
}

double snr_from_sums(std::uint64_t inside, std::uint64_t outside) {
    if (inside == 0) return 0.5;
    if (outside == 0) return 1.0;
    const double ratio = static_cast<double>(inside) / static_cast<double>(outside);
    return 1.0 / (1.0 + std::exp(-ratio));
}

double density_from_sum(std::uint64_t inside, int roi_h, int roi_w, double tau) {
    if (!(tau > 0.0)) throw ConfigError("event_density: tau must be positive");
    const double d = static_cast<double>(inside) / (static_cast<double>(roi_h) * roi_w * tau);
    return std::clamp(d, 0.0, 1.0);
}

double snr(const EventFrame& frame, const Roi& roi) {
    const auto s = roi_sums(frame, roi);
    return snr_from_sums(s.inside, s.outside);
}

double event_density(const EventFrame& frame, const Roi& roi, double tau) {
    return density_from_sum(roi_sums(frame, roi).inside, roi.nominal_height, roi.nominal_width, tau);
}

double alpha_label(double snr, double ed, double beta) { return beta * snr + (1.0 - beta) * ed; }

ConfidenceLabel confidence_label(const EventFrame& frame, const ConfidenceConfig& cfg) {
    if (!frame.label) throw DataError("confidence_label: frame has no centroid label");
    const Roi roi = compute_roi(*frame.label, frame.width, frame.height, cfg.roi_h, cfg.roi_w);
    const auto sums = roi_sums(frame, roi);
    ConfidenceLabel out;
    out.snr = snr_from_sums(sums.inside, sums.outside);
    out.ed = density_from_sum(sums.inside, cfg.roi_h, cfg.roi_w, cfg.tau);
    out.alpha = alpha_label(out.snr, out.ed, cfg.beta);
    return out;
}

std::vector<std::optional<ConfidenceLabel>> label_sequence(const std::vector<EventFrame>& frames,
                                                           const ConfidenceConfig& cfg) {
    std::vector<std::optional<ConfidenceLabel>> out;
    out.reserve(frames.size());
    for (const auto& f : frames) {
        if (f.label) {
            out.emplace_back(confidence_label(f, cfg));
        } else {
            out.emplace_back(std::nullopt);
        }
    }
    return out;
}

}  // namespace aissm
