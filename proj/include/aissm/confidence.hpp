#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "aissm/frames.hpp"

namespace aissm {

// Half-open pixel rectangle [top, bottom) x [left, right), already clipped to
// the frame. nominal_* keep the configured (unclipped) extent.
struct Roi {
    int top = 0;
    int left = 0;
    int bottom = 0;
    int right = 0;
    int nominal_height = 0;
    int nominal_width = 0;

    bool contains(int row, int col) const { return row >= top && row < bottom && col >= left && col < right; }
    int clipped_area() const { return (bottom - top) * (right - left); }

    friend bool operator==(const Roi&, const Roi&) = default;
};

struct ConfidenceLabel {
    double snr = 0.0;
    double ed = 0.0;
    double alpha = 0.0;
};

struct ConfidenceConfig {
    int roi_h = 40;
    int roi_w = 70;
    double tau = 0.1;
    double beta = 0.1;

    // ROI scaled from the 40x70 reference at 160x120.
    static ConfidenceConfig for_resolution(std::uint32_t width, std::uint32_t height);
};

Roi compute_roi(const NormalizedCentroid& label, std::uint32_t frame_width, std::uint32_t frame_height, int roi_h,
                int roi_w);

// σ(inside / outside), with outside = 0 & inside > 0 mapped to 1 and inside = 0 to 0.5.
double snr_from_sums(std::uint64_t inside, std::uint64_t outside);
// clip(inside / (h·w·τ), 0, 1) with the nominal ROI area.
double density_from_sum(std::uint64_t inside, int roi_h, int roi_w, double tau);

double snr(const EventFrame& frame, const Roi& roi);
double event_density(const EventFrame& frame, const Roi& roi, double tau);
double alpha_label(double snr, double ed, double beta);

ConfidenceLabel confidence_label(const EventFrame& frame, const ConfidenceConfig& cfg);
std::vector<std::optional<ConfidenceLabel>> label_sequence(const std::vector<EventFrame>& frames,
                                                           const ConfidenceConfig& cfg);

}  // namespace aissm
