// mask.hpp - run-length encoded binary instance masks and pixel geometry.
//
// Masks are stored as maximally merged runs over row-major pixel indices, so
// a run may cross row boundaries. All geometry below treats a pixel (x, y) as
// the unit square whose center is (x + 0.5, y + 0.5). Lengths follow the
// "+1 pixel extent" convention: a single pixel measures 1 px, not 0.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fishboard/common.hpp"

namespace fishboard {

struct Run {
    std::uint32_t start = 0;
    std::uint32_t length = 0;
    friend bool operator==(const Run&, const Run&) = default;
};

struct PointD {
    double x = 0.0;
    double y = 0.0;
};

// Half-open pixel box: contains pixels with x0 <= x < x1, y0 <= y < y1.
struct BBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    std::int64_t area() const { return static_cast<std::int64_t>(width()) * height(); }
    friend bool operator==(const BBox&, const BBox&) = default;
};

enum class ObjectClass { Fish, YellowBox, BlueBox };

inline const char* to_string(ObjectClass c) {
    switch (c) {
        case ObjectClass::Fish: return "fish";
        case ObjectClass::YellowBox: return "yellow_box";
        case ObjectClass::BlueBox: return "blue_box";
    }
    return "fish";
}

inline ObjectClass object_class_from_string(const std::string& s) {
    if (s == "fish") return ObjectClass::Fish;
    if (s == "yellow_box") return ObjectClass::YellowBox;
    if (s == "blue_box") return ObjectClass::BlueBox;
    throw DataError("unknown object class: " + s);
}

inline bool is_marker_class(ObjectClass c) { return c != ObjectClass::Fish; }

class Mask {
public:
    Mask() = default;
    Mask(int width, int height) : width_(width), height_(height) {}

    // Normalizes: sorts runs, merges overlapping/adjacent ones, validates bounds.
    static Mask from_runs(int width, int height, std::vector<Run> runs) {
        Mask m(width, height);
        std::sort(runs.begin(), runs.end(),
                  [](const Run& a, const Run& b) { return a.start < b.start; });
        const std::uint64_t total = static_cast<std::uint64_t>(width) * height;
        for (const Run& r : runs) {
            if (r.length == 0) continue;
            if (static_cast<std::uint64_t>(r.start) + r.length > total)
                throw DimensionMismatchError("run exceeds mask extent");
            if (!m.runs_.empty() && r.start <= m.runs_.back().start + m.runs_.back().length) {
                Run& last = m.runs_.back();
                std::uint32_t end = std::max(last.start + last.length, r.start + r.length);
                last.length = end - last.start;
            } else {
                m.runs_.push_back(r);
            }
        }
        return m;
    }

    static Mask from_dense(int width, int height, std::span<const std::uint8_t> bits) {
        if (static_cast<std::int64_t>(bits.size()) != static_cast<std::int64_t>(width) * height)
            throw DimensionMismatchError("dense bitmap size does not match dimensions");
        Mask m(width, height);
        std::uint32_t i = 0;
        const std::uint32_t n = static_cast<std::uint32_t>(bits.size());
        while (i < n) {
            if (bits[i]) {
                std::uint32_t start = i;
                while (i < n && bits[i]) ++i;
                m.runs_.push_back({start, i - start});
            } else {
                ++i;
            }
        }
        return m;
    }

    int width() const { return width_; }
    int height() const { return height_; }
    const std::vector<Run>& runs() const { return runs_; }
    bool empty() const { return runs_.empty(); }

    std::int64_t area() const {
        std::int64_t a = 0;
        for (const Run& r : runs_) a += r.length;
        return a;
    }

    std::vector<std::uint8_t> to_dense() const {
        std::vector<std::uint8_t> bits(static_cast<std::size_t>(width_) * height_, 0);
        for (const Run& r : runs_)
            std::fill(bits.begin() + r.start, bits.begin() + r.start + r.length, 1);
        return bits;
    }

    bool contains(int x, int y) const {
        if (x < 0 || y < 0 || x >= width_ || y >= height_) return false;
        const std::uint32_t idx = static_cast<std::uint32_t>(y) * width_ + x;
        auto it = std::upper_bound(runs_.begin(), runs_.end(), idx,
                                   [](std::uint32_t v, const Run& r) { return v < r.start; });
        if (it == runs_.begin()) return false;
        --it;
        return idx < it->start + it->length;
    }

    friend bool operator==(const Mask&, const Mask&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<Run> runs_;
};

// --------------------------------------------------------------------------
// Per-row span decoding. Calls fn(y, x_begin, x_end) with x_end exclusive.

template <typename Fn>
void mask_for_each_row_span(const Mask& m, Fn&& fn) {
    const int w = m.width();
    for (const Run& r : m.runs()) {
        std::uint32_t idx = r.start;
        std::uint32_t remaining = r.length;
        while (remaining > 0) {
            const int y = static_cast<int>(idx / w);
            const int x = static_cast<int>(idx % w);
            const std::uint32_t row_room = static_cast<std::uint32_t>(w - x);
            const std::uint32_t take = std::min(remaining, row_room);
            fn(y, x, x + static_cast<int>(take));
            idx += take;
            remaining -= take;
        }
    }
}

inline BBox mask_bbox(const Mask& m) {
    if (m.empty()) throw EmptyMaskError("mask_bbox: empty mask");
    int min_x = m.width(), max_x = -1, min_y = m.height(), max_y = -1;
    mask_for_each_row_span(m, [&](int y, int xb, int xe) {
        min_x = std::min(min_x, xb);
        max_x = std::max(max_x, xe - 1);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
    });
    return BBox{min_x, min_y, max_x + 1, max_y + 1};
}

inline double mask_iou(const Mask& a, const Mask& b) {
    if (a.width() != b.width() || a.height() != b.height())
        throw DimensionMismatchError("mask_iou: dimension mismatch");
    if (a.empty() && b.empty()) throw EmptyMaskError("mask_iou: both masks empty");
    std::int64_t inter = 0;
    std::size_t i = 0, j = 0;
    const auto& ra = a.runs();
    const auto& rb = b.runs();
    while (i < ra.size() && j < rb.size()) {
        const std::uint64_t a0 = ra[i].start, a1 = a0 + ra[i].length;
        const std::uint64_t b0 = rb[j].start, b1 = b0 + rb[j].length;
        const std::uint64_t lo = std::max(a0, b0), hi = std::min(a1, b1);
        if (lo < hi) inter += static_cast<std::int64_t>(hi - lo);
        if (a1 < b1) ++i; else ++j;
    }
    const std::int64_t uni = a.area() + b.area() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

// Convex hull (monotone chain) of the pixel centers. Only per-row extremes
// can be hull vertices, so rows are reduced to their end points first.
inline std::vector<PointD> mask_hull_points(const Mask& m) {
    if (m.empty()) throw EmptyMaskError("mask_hull_points: empty mask");
    const int h = m.height();
    std::vector<int> row_min(static_cast<std::size_t>(h), -1);
    std::vector<int> row_max(static_cast<std::size_t>(h), -1);
    mask_for_each_row_span(m, [&](int y, int xb, int xe) {
        if (row_min[y] < 0 || xb < row_min[y]) row_min[y] = xb;
        if (xe - 1 > row_max[y]) row_max[y] = xe - 1;
    });
    std::vector<PointD> pts;
    for (int y = 0; y < h; ++y) {
        if (row_min[y] < 0) continue;
        pts.push_back({row_min[y] + 0.5, y + 0.5});
        if (row_max[y] != row_min[y]) pts.push_back({row_max[y] + 0.5, y + 0.5});
    }
    if (pts.size() <= 2) return pts;
    std::sort(pts.begin(), pts.end(), [](const PointD& p, const PointD& q) {
        return p.x < q.x || (p.x == q.x && p.y < q.y);
    });
    auto cross = [](const PointD& o, const PointD& p, const PointD& q) {
        return (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x);
    };
    std::vector<PointD> hull(2 * pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
        while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

// Maximum caliper extent of the mask: largest pairwise distance between hull
// pixel centers plus one pixel, so a lone pixel measures 1 px and a 50 px
// horizontal run measures 50 px.
inline double mask_principal_length(const Mask& m) {
    const std::vector<PointD> hull = mask_hull_points(m);
    double best = 0.0;
    for (std::size_t i = 0; i < hull.size(); ++i)
        for (std::size_t j = i + 1; j < hull.size(); ++j) {
            const double dx = hull[i].x - hull[j].x;
            const double dy = hull[i].y - hull[j].y;
            best = std::max(best, dx * dx + dy * dy);
        }
    return std::sqrt(best) + 1.0;
}

// Extent of the mask perpendicular to its principal axis, same +1 convention.
inline double mask_orthogonal_extent(const Mask& m) {
    const std::vector<PointD> hull = mask_hull_points(m);
    if (hull.size() == 1) return 1.0;
    std::size_t bi = 0, bj = 1;
    double best = -1.0;
    for (std::size_t i = 0; i < hull.size(); ++i)
        for (std::size_t j = i + 1; j < hull.size(); ++j) {
            const double dx = hull[i].x - hull[j].x;
            const double dy = hull[i].y - hull[j].y;
            const double d = dx * dx + dy * dy;
            if (d > best) { best = d; bi = i; bj = j; }
        }
    const double ax = hull[bj].x - hull[bi].x;
    const double ay = hull[bj].y - hull[bi].y;
    const double norm = std::sqrt(ax * ax + ay * ay);
    if (norm == 0.0) return 1.0;
    const double nx = -ay / norm, ny = ax / norm;
    double lo = 0.0, hi = 0.0;
    for (const PointD& p : hull) {
        const double t = (p.x - hull[bi].x) * nx + (p.y - hull[bi].y) * ny;
        lo = std::min(lo, t);
        hi = std::max(hi, t);
    }
    return hi - lo + 1.0;
}

// Diagonal extent of a bbox under the +1 convention. Matches the principal
// length of a filled box, and bounds the principal length of any mask with
// that tight bbox from above.
inline double bbox_length(const BBox& b) {
    const double dx = b.width() - 1;
    const double dy = b.height() - 1;
    return std::sqrt(dx * dx + dy * dy) + 1.0;
}

// --------------------------------------------------------------------------
// Polygon rasterization: even-odd rule over pixel centers.

namespace detail {
// Crossing parity of a horizontal scanline at height cy against the polygon.
// Shared edge convention (half-open in y, strict in x) keeps the scanline
// filler and the brute-force point test in exact agreement.
inline void scanline_crossings(std::span<const PointD> poly, double cy,
                               std::vector<double>& xs) {
    xs.clear();
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const PointD& p = poly[i];
        const PointD& q = poly[(i + 1) % n];
        if ((p.y <= cy) != (q.y <= cy)) {
            xs.push_back(p.x + (cy - p.y) * (q.x - p.x) / (q.y - p.y));
        }
    }
    std::sort(xs.begin(), xs.end());
}
}  // namespace detail

inline Mask mask_from_polygon(std::span<const PointD> poly, int width, int height) {
    if (poly.size() < 3) throw EmptyMaskError("mask_from_polygon: need at least 3 vertices");
    double min_y = poly[0].y, max_y = poly[0].y;
    for (const PointD& p : poly) {
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    const int y_begin = std::max(0, static_cast<int>(std::floor(min_y - 0.5)));
    const int y_end = std::min(height, static_cast<int>(std::ceil(max_y + 0.5)) + 1);
    std::vector<Run> runs;
    std::vector<double> xs;
    for (int y = y_begin; y < y_end; ++y) {
        const double cy = y + 0.5;
        detail::scanline_crossings(poly, cy, xs);
        for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
            // Pixel centers x+0.5 strictly greater than xs[k] and strictly
            // less-or-equal is excluded: center in (xs[k], xs[k+1]).
            int x_first = static_cast<int>(std::floor(xs[k] + 0.5));
            if (x_first + 0.5 <= xs[k]) ++x_first;
            int x_last = static_cast<int>(std::ceil(xs[k + 1] - 0.5)) - 1;
            if (x_last + 0.5 >= xs[k + 1]) --x_last;
            x_first = std::max(x_first, 0);
            x_last = std::min(x_last, width - 1);
            if (x_last < x_first) continue;
            runs.push_back({static_cast<std::uint32_t>(y) * static_cast<std::uint32_t>(width) +
                                static_cast<std::uint32_t>(x_first),
                            static_cast<std::uint32_t>(x_last - x_first + 1)});
        }
    }
    if (runs.empty())
        throw EmptyMaskError("mask_from_polygon: polygon covers no pixel centers");
    return Mask::from_runs(width, height, std::move(runs));
}

// --------------------------------------------------------------------------
// RLE text form: "<width>x<height>:<start>+<len>,<start>+<len>,..."

inline std::string mask_to_rle_string(const Mask& m) {
    std::string s = std::to_string(m.width()) + "x" + std::to_string(m.height()) + ":";
    bool first = true;
    for (const Run& r : m.runs()) {
        if (!first) s += ",";
        s += std::to_string(r.start) + "+" + std::to_string(r.length);
        first = false;
    }
    return s;
}

inline Mask mask_from_rle_string(const std::string& s) {
    const std::size_t xpos = s.find('x');
    const std::size_t colon = s.find(':');
    if (xpos == std::string::npos || colon == std::string::npos || xpos > colon)
        throw DataError("bad RLE string: " + s);
    int width = 0, height = 0;
    try {
        width = std::stoi(s.substr(0, xpos));
        height = std::stoi(s.substr(xpos + 1, colon - xpos - 1));
    } catch (const std::exception&) {
        throw DataError("bad RLE dimensions: " + s);
    }
    std::vector<Run> runs;
    std::size_t pos = colon + 1;
    while (pos < s.size()) {
        std::size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        const std::string tok = s.substr(pos, comma - pos);
        const std::size_t plus = tok.find('+');
        if (plus == std::string::npos) throw DataError("bad RLE run: " + tok);
        try {
            runs.push_back({static_cast<std::uint32_t>(std::stoul(tok.substr(0, plus))),
                            static_cast<std::uint32_t>(std::stoul(tok.substr(plus + 1)))});
        } catch (const std::exception&) {
            throw DataError("bad RLE run: " + tok);
        }
        pos = comma + 1;
    }
    return Mask::from_runs(width, height, std::move(runs));
}

// --------------------------------------------------------------------------
// Domain records shared across the pipeline.

struct Detection {
    ObjectClass object_class = ObjectClass::Fish;
    Mask mask;
    BBox bbox;
    double confidence = 0.0;

    static Detection make(ObjectClass c, Mask mask, double confidence) {
        Detection d;
        d.object_class = c;
        d.bbox = mask_bbox(mask);
        d.mask = std::move(mask);
        d.confidence = std::clamp(confidence, 0.0, 1.0);
        return d;
    }
};

struct FishRecord {
    int species_id = 0;
    double length_cm = 0.0;
};

}  // namespace fishboard
