// scale.hpp - fiduciary-marker scale estimation and length feature extraction.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "fishboard/common.hpp"
#include "fishboard/mask.hpp"
#include "fishboard/raster.hpp"

namespace fishboard {

struct ScaleEstimate {
    double cm_per_pixel = 0.0;
    int n_markers_used = 0;
    double dispersion = 0.0;  // (max - min) / median of the per-marker estimates
};

// The eight regression features, in fixed column order. Marker columns are
// shared by every fish in the image; the last three are per fish.
struct LengthFeatures {
    double box_count = 0.0;
    double median_box_len_px = 0.0;
    double mean_box_len_px = 0.0;
    double median_box_segment_len_px = 0.0;
    double max_box_segment_len_px = 0.0;
    double fish_confidence = 0.0;
    double fish_bbox_len_px = 0.0;
    double fish_mask_len_px = 0.0;

    std::array<double, 8> to_array() const {
        return {box_count,       median_box_len_px, mean_box_len_px,
                median_box_segment_len_px, max_box_segment_len_px,
                fish_confidence, fish_bbox_len_px,  fish_mask_len_px};
    }

    static const std::vector<std::string>& column_names() {
        static const std::vector<std::string> names = {
            "box_count",       "median_box_len_px",         "mean_box_len_px",
            "median_box_segment_len_px", "max_box_segment_len_px",
            "fish_confidence", "fish_bbox_len_px",          "fish_mask_len_px"};
        return names;
    }
};

namespace detail {
inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace detail

// Median over per-marker estimates of 10 cm / principal length; the median
// shrugs off one occluded or badly segmented marker.
inline ScaleEstimate estimate_scale(const std::vector<Detection>& detections) {
    std::vector<double> per_marker;
    for (const Detection& d : detections) {
        if (!is_marker_class(d.object_class) || d.mask.empty()) continue;
        per_marker.push_back(10.0 / mask_principal_length(d.mask));
    }
    if (per_marker.empty())
        throw NoFiducialError("no marker detections; image has no usable scale");
    ScaleEstimate est;
    est.n_markers_used = static_cast<int>(per_marker.size());
    est.cm_per_pixel = detail::median_of(per_marker);
    const auto [mn, mx] = std::minmax_element(per_marker.begin(), per_marker.end());
    est.dispersion = per_marker.size() > 1 ? (*mx - *mn) / est.cm_per_pixel : 0.0;
    return est;
}

// One feature row per fish detection. Marker features are computed once from
// all marker detections in the image: box length is the bbox diagonal extent,
// segment length the mask principal length; the regressor exploits their
// redundancy when masks are degraded.
inline std::vector<std::pair<std::size_t, LengthFeatures>> length_features(
    const std::vector<Detection>& detections) {
    std::vector<double> box_lens, segment_lens;
    for (const Detection& d : detections) {
        if (!is_marker_class(d.object_class) || d.mask.empty()) continue;
        box_lens.push_back(bbox_length(d.bbox));
        segment_lens.push_back(mask_principal_length(d.mask));
    }
    if (box_lens.empty())
        throw NoFiducialError("no marker detections; cannot build length features");

    LengthFeatures shared;
    shared.box_count = static_cast<double>(box_lens.size());
    shared.median_box_len_px = detail::median_of(box_lens);
    shared.mean_box_len_px = 0.0;
    for (double v : box_lens) shared.mean_box_len_px += v;
    shared.mean_box_len_px /= static_cast<double>(box_lens.size());
    shared.median_box_segment_len_px = detail::median_of(segment_lens);
    shared.max_box_segment_len_px = *std::max_element(segment_lens.begin(), segment_lens.end());

    std::vector<std::pair<std::size_t, LengthFeatures>> rows;
    for (std::size_t i = 0; i < detections.size(); ++i) {
        const Detection& d = detections[i];
        if (d.object_class != ObjectClass::Fish || d.mask.empty()) continue;
        LengthFeatures row = shared;
        row.fish_confidence = d.confidence;
        row.fish_bbox_len_px = bbox_length(d.bbox);
        row.fish_mask_len_px = mask_principal_length(d.mask);
        rows.emplace_back(i, row);
    }
    return rows;
}

// Crops the detection's bbox region; with zero_outside_mask the pixels not
// covered by the segmentation mask are blacked out.
inline Raster crop_fish(const Raster& image, const Detection& d,
                        bool zero_outside_mask = false) {
    if (d.object_class != ObjectClass::Fish)
        throw DataError("crop_fish: detection is not a fish");
    const BBox& b = d.bbox;
    if (b.x0 < 0 || b.y0 < 0 || b.x1 > image.width() || b.y1 > image.height() ||
        b.width() <= 0 || b.height() <= 0)
        throw DimensionMismatchError("crop_fish: bbox out of image bounds");
    Raster out(b.width(), b.height());
    for (int y = b.y0; y < b.y1; ++y)
        for (int x = b.x0; x < b.x1; ++x) {
            if (zero_outside_mask && !d.mask.contains(x, y)) continue;
            out.set(x - b.x0, y - b.y0, image.get(x, y));
        }
    return out;
}

// Mask restricted to the crop window, for descriptor extraction.
inline Mask crop_mask(const Detection& d) {
    const BBox& b = d.bbox;
    std::vector<Run> runs;
    mask_for_each_row_span(d.mask, [&](int y, int xb, int xe) {
        const int cx0 = std::max(xb, b.x0), cx1 = std::min(xe, b.x1);
        if (y < b.y0 || y >= b.y1 || cx1 <= cx0) return;
        runs.push_back({static_cast<std::uint32_t>(y - b.y0) * static_cast<std::uint32_t>(b.width()) +
                            static_cast<std::uint32_t>(cx0 - b.x0),
                        static_cast<std::uint32_t>(cx1 - cx0)});
    });
    return Mask::from_runs(b.width(), b.height(), std::move(runs));
}

}  // namespace fishboard
