// detect.hpp - the detection/segmentation stage contract.
//
// Two interchangeable implementations: an oracle that perturbs ground-truth
// masks to a calibrated IoU operating point (stand-in for a trained neural
// segmenter), and a classic HSV-threshold detector for the colored markers.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <vector>

#include <json.hpp>

#include "fishboard/camera.hpp"
#include "fishboard/common.hpp"
#include "fishboard/mask.hpp"
#include "fishboard/raster.hpp"
#include "fishboard/scene.hpp"

namespace fishboard {

struct DetectorNoise {
    double target_fish_iou = 1.0;    // mean mask IoU for fish, in (0, 1]
    double target_marker_iou = 1.0;  // mean mask IoU for markers, in (0, 1]
    double miss_prob = 0.0;
    double spurious_prob = 0.0;
    double confidence_noise = 0.0;  // stddev of additive confidence noise

    static DetectorNoise none() { return {}; }

    void validate() const {
        auto frac = [](double v) { return v >= 0.0 && v <= 1.0; };
        if (!frac(miss_prob) || !frac(spurious_prob) || confidence_noise < 0.0)
            throw ConfigError("detector noise fractions must lie in [0,1]");
        if (target_fish_iou <= 0.0 || target_fish_iou > 1.0 ||
            target_marker_iou <= 0.0 || target_marker_iou > 1.0)
            throw ConfigError("target IoUs must lie in (0,1]");
    }
};

struct DegradeResult {
    Mask mask;
    bool warning = false;  // set when the target band could not be reached
};

// Perturbs a mask to a requested IoU against the original by randomized
// boundary erosion/dilation plus a small translation. Flips are ordered by
// boundary depth with a hashed shuffle inside each depth layer, and every
// flip strictly lowers the IoU, so the walk lands within the target band
// whenever the mask is large enough to offer fine steps.
inline DegradeResult degrade_mask_to_iou(const Mask& mask, double target_iou,
                                         std::uint64_t seed) {
    if (mask.empty()) throw EmptyMaskError("degrade_mask_to_iou: empty mask");
    if (target_iou <= 0.0 || target_iou > 1.0)
        throw ConfigError("degrade_mask_to_iou: target must lie in (0,1]");
    if (target_iou == 1.0) return {mask, false};
    if (mask.area() < 10) return {mask, true};

    constexpr int kBandDepth = 8;
    const int img_w = mask.width(), img_h = mask.height();
    const BBox box = mask_bbox(mask);
    const int pad = kBandDepth + 3;
    const int wx0 = std::max(0, box.x0 - pad), wy0 = std::max(0, box.y0 - pad);
    const int wx1 = std::min(img_w, box.x1 + pad), wy1 = std::min(img_h, box.y1 + pad);
    const int ww = wx1 - wx0, wh = wy1 - wy0;

    std::vector<std::uint8_t> orig(static_cast<std::size_t>(ww) * wh, 0);
    mask_for_each_row_span(mask, [&](int y, int xb, int xe) {
        const std::size_t row = static_cast<std::size_t>(y - wy0) * ww;
        std::fill(orig.begin() + row + (xb - wx0), orig.begin() + row + (xe - wx0),
                  std::uint8_t{1});
    });

    Rng rng(stable_hash(seed, 0xDE62ADEull));

    // Small seeded shift first; kept only when it leaves room to degrade
    // further rather than overshooting the target on its own.
    std::vector<std::uint8_t> cur = orig;
    int shift_x = 0, shift_y = 0;
    if (target_iou <= 0.97) {
        const double angle = rng.uniform(0.0, 6.283185307179586);
        shift_x = static_cast<int>(std::lround(std::cos(angle)));
        shift_y = static_cast<int>(std::lround(std::sin(angle)));
        std::vector<std::uint8_t> shifted(cur.size(), 0);
        for (int y = 0; y < wh; ++y) {
            const int sy = y - shift_y;
            if (sy < 0 || sy >= wh) continue;
            for (int x = 0; x < ww; ++x) {
                const int sx = x - shift_x;
                if (sx < 0 || sx >= ww) continue;
                // keep inside the image even when the window touches its edge
                if (wx0 + x < 0 || wx0 + x >= img_w || wy0 + y < 0 || wy0 + y >= img_h)
                    continue;
                shifted[static_cast<std::size_t>(y) * ww + x] =
                    cur[static_cast<std::size_t>(sy) * ww + sx];
            }
        }
        std::int64_t inter = 0, uni = 0;
        for (std::size_t i = 0; i < cur.size(); ++i) {
            inter += orig[i] & shifted[i];
            uni += orig[i] | shifted[i];
        }
        if (uni > 0 && static_cast<double>(inter) / uni >= target_iou + 0.01)
            cur = std::move(shifted);
    }

    // Depth of each pixel relative to the current mask boundary (4-neighbor
    // BFS, capped at kBandDepth): negative depth = erodible interior pixel,
    // positive = dilatable exterior pixel.
    std::vector<int> depth(cur.size(), 0);
    std::deque<int> queue;
    auto at = [&](int x, int y) { return static_cast<std::size_t>(y) * ww + x; };
    for (int y = 0; y < wh; ++y)
        for (int x = 0; x < ww; ++x) {
            if (!cur[at(x, y)]) continue;
            const bool edge = (x == 0 || !cur[at(x - 1, y)]) || (x == ww - 1 || !cur[at(x + 1, y)]) ||
                              (y == 0 || !cur[at(x, y - 1)]) || (y == wh - 1 || !cur[at(x, y + 1)]);
            if (edge) {
                depth[at(x, y)] = -1;
                queue.push_back(static_cast<int>(at(x, y)));
            }
        }
    // grow inward
    while (!queue.empty()) {
        const int i = queue.front();
        queue.pop_front();
        const int x = i % ww, y = i / ww;
        const int d = depth[static_cast<std::size_t>(i)];
        if (-d >= kBandDepth) continue;
        const std::array<std::array<int, 2>, 4> nbr = {{{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}}};
        for (const auto& n : nbr) {
            if (n[0] < 0 || n[0] >= ww || n[1] < 0 || n[1] >= wh) continue;
            const std::size_t j = at(n[0], n[1]);
            if (cur[j] && depth[j] == 0) {
                depth[j] = d - 1;
                queue.push_back(static_cast<int>(j));
            }
        }
    }
    // grow outward from the mask
    for (int y = 0; y < wh; ++y)
        for (int x = 0; x < ww; ++x) {
            if (cur[at(x, y)]) continue;
            const bool touch = (x > 0 && cur[at(x - 1, y)]) || (x < ww - 1 && cur[at(x + 1, y)]) ||
                               (y > 0 && cur[at(x, y - 1)]) || (y < wh - 1 && cur[at(x, y + 1)]);
            if (touch) {
                depth[at(x, y)] = 1;
                queue.push_back(static_cast<int>(at(x, y)));
            }
        }
    while (!queue.empty()) {
        const int i = queue.front();
        queue.pop_front();
        const int x = i % ww, y = i / ww;
        const int d = depth[static_cast<std::size_t>(i)];
        if (d >= kBandDepth) continue;
        const std::array<std::array<int, 2>, 4> nbr = {{{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}}};
        for (const auto& n : nbr) {
            if (n[0] < 0 || n[0] >= ww || n[1] < 0 || n[1] >= wh) continue;
            const std::size_t j = at(n[0], n[1]);
            if (!cur[j] && depth[j] == 0) {
                depth[j] = d + 1;
                queue.push_back(static_cast<int>(j));
            }
        }
    }

    struct Flip {
        std::uint64_t key;
        std::uint32_t index;
        bool erode;
    };
    std::vector<Flip> flips;
    for (int y = 0; y < wh; ++y)
        for (int x = 0; x < ww; ++x) {
            const std::size_t i = at(x, y);
            const int d = depth[i];
            if (d == 0) continue;
            if (wx0 + x < 0 || wx0 + x >= img_w || wy0 + y < 0 || wy0 + y >= img_h) continue;
            const bool erode = d < 0;
            // only flips that strictly lower IoU against the original
            if (erode && !orig[i]) continue;
            if (!erode && orig[i]) continue;
            const std::uint64_t layer = static_cast<std::uint64_t>(erode ? -d : d);
            const std::uint64_t u = stable_hash(seed, static_cast<std::uint64_t>(i), layer);
            flips.push_back({(layer << 58) | (u >> 6), static_cast<std::uint32_t>(i), erode});
        }
    std::sort(flips.begin(), flips.end(), [](const Flip& a, const Flip& b) {
        return a.key < b.key || (a.key == b.key && a.index < b.index);
    });

    std::int64_t inter = 0, uni = 0, cur_area = 0;
    for (std::size_t i = 0; i < cur.size(); ++i) {
        inter += orig[i] & cur[i];
        uni += orig[i] | cur[i];
        cur_area += cur[i];
    }
    double best_err = std::abs(static_cast<double>(inter) / uni - target_iou);
    std::size_t best_m = 0;
    std::int64_t it = inter, un = uni, area_t = cur_area;
    for (std::size_t m = 0; m < flips.size(); ++m) {
        const Flip& f = flips[m];
        if (f.erode) {
            if (area_t <= 1) continue;
            it -= 1;
            area_t -= 1;
        } else {
            un += 1;
            area_t += 1;
        }
        const double iou = static_cast<double>(it) / un;
        const double err = std::abs(iou - target_iou);
        if (err < best_err) {
            best_err = err;
            best_m = m + 1;
        }
        if (iou < target_iou) break;
    }
    std::int64_t applied_area = cur_area;
    for (std::size_t m = 0; m < best_m; ++m) {
        const Flip& f = flips[m];
        if (f.erode) {
            if (applied_area <= 1) continue;
            cur[f.index] = 0;
            applied_area -= 1;
        } else {
            cur[f.index] = 1;
            applied_area += 1;
        }
    }

    // Lift the window back into full image coordinates.
    std::vector<Run> runs;
    for (int y = 0; y < wh; ++y) {
        int x = 0;
        while (x < ww) {
            if (cur[at(x, y)]) {
                const int xb = x;
                while (x < ww && cur[at(x, y)]) ++x;
                runs.push_back({static_cast<std::uint32_t>((wy0 + y)) * static_cast<std::uint32_t>(img_w) +
                                    static_cast<std::uint32_t>(wx0 + xb),
                                static_cast<std::uint32_t>(x - xb)});
            } else {
                ++x;
            }
        }
    }
    Mask out = Mask::from_runs(img_w, img_h, std::move(runs));
    if (out.empty()) return {mask, true};
    return {out, best_err > 0.02};
}

// Oracle detector: one detection per truth object with class-calibrated mask
// degradation, independent misses, noisy confidences, and optional spurious
// background fish placed outside the projected board quadrilateral.
inline std::vector<Detection> oracle_detect(const SceneTruth& truth,
                                            const DetectorNoise& noise,
                                            std::uint64_t seed) {
    noise.validate();
    std::vector<Detection> out;
    std::uint64_t ordinal = 0;
    auto emit = [&](const Mask& mask, ObjectClass cls) {
        Rng rng(stable_hash(seed, ordinal, 0xD37Ec7ull));
        ++ordinal;
        if (noise.miss_prob > 0.0 && rng.bernoulli(noise.miss_prob)) return;
        const double target =
            cls == ObjectClass::Fish ? noise.target_fish_iou : noise.target_marker_iou;
        Mask degraded = target >= 1.0
                            ? mask
                            : degrade_mask_to_iou(mask, target, stable_hash(seed, ordinal, 0xBA4Dull)).mask;
        double conf = target;
        if (noise.confidence_noise > 0.0) conf += rng.normal(0.0, noise.confidence_noise);
        out.push_back(Detection::make(cls, std::move(degraded), conf));
    };
    for (const MarkerTruth& m : truth.markers) emit(m.mask, m.object_class);
    for (const FishTruth& f : truth.fish) emit(f.mask, ObjectClass::Fish);

    if (noise.spurious_prob > 0.0) {
        Rng rng(stable_hash(seed, 0x5B02105ull));
        if (rng.bernoulli(noise.spurious_prob)) {
            const int W = truth.camera.image_width, H = truth.camera.image_height;
            std::array<PointD, 4> quad;
            const std::array<PointD, 4> corners = {PointD{0, 0},
                                                   PointD{kBoardWidthCm, 0},
                                                   PointD{kBoardWidthCm, kBoardHeightCm},
                                                   PointD{0, kBoardHeightCm}};
            for (int i = 0; i < 4; ++i) quad[i] = project_board(truth.camera, corners[i]);
            auto inside_quad = [&](double px, double py) {
                int sign = 0;
                for (int i = 0; i < 4; ++i) {
                    const PointD& a = quad[static_cast<std::size_t>(i)];
                    const PointD& b = quad[static_cast<std::size_t>((i + 1) % 4)];
                    const double c = (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
                    if (c > 0) { if (sign < 0) return false; sign = 1; }
                    if (c < 0) { if (sign > 0) return false; sign = -1; }
                }
                return true;
            };
            for (int attempt = 0; attempt < 30; ++attempt) {
                const double len = rng.uniform(0.06, 0.14) * std::min(W, H);
                const double cx = rng.uniform(len, W - len);
                const double cy = rng.uniform(len, H - len);
                if (inside_quad(cx, cy)) continue;
                const double angle = rng.uniform(0.0, 3.14159265358979323846);
                SpeciesStyle blob{0.0, 0.35, 2.2, 0.0};
                std::vector<PointD> poly = detail::place_outline(
                    detail::fish_outline(len, blob), cx, cy, angle);
                bool fits = true;
                for (const PointD& p : poly)
                    if (p.x < 1 || p.y < 1 || p.x > W - 2 || p.y > H - 2) { fits = false; break; }
                if (!fits) continue;
                try {
                    Mask m = mask_from_polygon(poly, W, H);
                    out.push_back(Detection::make(ObjectClass::Fish, std::move(m),
                                                  0.5 + rng.uniform(-0.1, 0.1)));
                } catch (const EmptyMaskError&) {
                }
                break;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Detection JSON lines, the on-disk form of the detector output.

inline nlohmann::json detection_to_json(std::uint32_t scene_id, const Detection& d) {
    return {{"scene_id", scene_id},
            {"class", to_string(d.object_class)},
            {"confidence", d.confidence},
            {"bbox", {d.bbox.x0, d.bbox.y0, d.bbox.x1, d.bbox.y1}},
            {"mask", mask_to_rle_string(d.mask)}};
}

inline std::pair<std::uint32_t, Detection> detection_from_json(const nlohmann::json& j) {
    const std::uint32_t scene_id = j.at("scene_id").get<std::uint32_t>();
    Mask mask = mask_from_rle_string(j.at("mask").get<std::string>());
    Detection d = Detection::make(object_class_from_string(j.at("class").get<std::string>()),
                                  std::move(mask), j.at("confidence").get<double>());
    const nlohmann::json& b = j.at("bbox");
    const BBox stated{b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(),
                      b.at(3).get<int>()};
    if (stated != d.bbox)
        throw DataError("detection bbox does not match the tight bbox of its mask");
    return {scene_id, std::move(d)};
}

// ---------------------------------------------------------------------------
// Classic color-threshold marker detector.

struct ColorBand {
    double hue_center = 0.0;
    double hue_tol = 18.0;
    double strict_hue_tol = 8.0;
    double s_min = 0.45;
    double v_min = 0.30;
};

struct ColorDetectConfig {
    ColorBand yellow{48.0, 18.0, 9.0, 0.45, 0.35};
    ColorBand blue{226.0, 20.0, 10.0, 0.45, 0.25};
    std::int64_t min_area_px = 25;
    double max_area_frac = 0.05;  // of the image
    double merge_dist_px = 8.0;   // bbox gap below which components fuse
};

namespace detail {

inline double hue_distance(double a, double b) {
    const double d = std::fmod(std::abs(a - b), 360.0);
    return std::min(d, 360.0 - d);
}

struct Component {
    std::vector<std::uint32_t> pixels;
    BBox box{1 << 30, 1 << 30, -(1 << 30), -(1 << 30)};
    std::int64_t strict = 0;
};

}  // namespace detail

inline std::vector<Detection> color_detect_markers(const Raster& image,
                                                   const ColorDetectConfig& config) {
    const int W = image.width(), H = image.height();
    std::vector<Detection> out;
    const std::array<std::pair<ObjectClass, const ColorBand*>, 2> families = {
        {{ObjectClass::YellowBox, &config.yellow}, {ObjectClass::BlueBox, &config.blue}}};

    std::vector<std::uint8_t> pass(static_cast<std::size_t>(W) * H);
    std::vector<std::uint8_t> strict(static_cast<std::size_t>(W) * H);
    std::vector<std::int32_t> label(static_cast<std::size_t>(W) * H);

    for (const auto& [cls, band] : families) {
        std::fill(pass.begin(), pass.end(), std::uint8_t{0});
        std::fill(strict.begin(), strict.end(), std::uint8_t{0});
        std::fill(label.begin(), label.end(), -1);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const Hsv hsv = rgb_to_hsv(image.get(x, y));
                if (hsv.s < band->s_min || hsv.v < band->v_min) continue;
                const double d = detail::hue_distance(hsv.h, band->hue_center);
                const std::size_t i = static_cast<std::size_t>(y) * W + x;
                if (d <= band->hue_tol) pass[i] = 1;
                if (d <= band->strict_hue_tol) strict[i] = 1;
            }

        // 4-connected components in scan order
        std::vector<detail::Component> comps;
        std::vector<std::uint32_t> stack;
        for (std::uint32_t start = 0; start < pass.size(); ++start) {
            if (!pass[start] || label[start] >= 0) continue;
            const std::int32_t id = static_cast<std::int32_t>(comps.size());
            comps.emplace_back();
            stack.assign(1, start);
            label[start] = id;
            while (!stack.empty()) {
                const std::uint32_t i = stack.back();
                stack.pop_back();
                detail::Component& c = comps[static_cast<std::size_t>(id)];
                c.pixels.push_back(i);
                c.strict += strict[i];
                const int x = static_cast<int>(i % W), y = static_cast<int>(i / W);
                c.box.x0 = std::min(c.box.x0, x);
                c.box.y0 = std::min(c.box.y0, y);
                c.box.x1 = std::max(c.box.x1, x + 1);
                c.box.y1 = std::max(c.box.y1, y + 1);
                const std::array<std::array<int, 2>, 4> nbr = {
                    {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}}};
                for (const auto& n : nbr) {
                    if (n[0] < 0 || n[0] >= W || n[1] < 0 || n[1] >= H) continue;
                    const std::uint32_t j = static_cast<std::uint32_t>(n[1]) * W + n[0];
                    if (pass[j] && label[j] < 0) {
                        label[j] = id;
                        stack.push_back(j);
                    }
                }
            }
        }

        // Fuse components separated by less than the merge distance, so a
        // marker split by a thin occluder is reported once.
        std::vector<std::size_t> parent(comps.size());
        for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
        auto find = [&](std::size_t i) {
            while (parent[i] != i) i = parent[i] = parent[parent[i]];
            return i;
        };
        auto gap = [](const BBox& a, const BBox& b) {
            const int dx = std::max({0, b.x0 - a.x1, a.x0 - b.x1});
            const int dy = std::max({0, b.y0 - a.y1, a.y0 - b.y1});
            return std::max(dx, dy);
        };
        for (std::size_t i = 0; i < comps.size(); ++i)
            for (std::size_t j = i + 1; j < comps.size(); ++j)
                if (gap(comps[i].box, comps[j].box) <= config.merge_dist_px) {
                    const std::size_t ri = find(i), rj = find(j);
                    if (ri != rj) parent[std::max(ri, rj)] = std::min(ri, rj);
                }
        std::vector<detail::Component> merged(comps.size());
        for (std::size_t i = 0; i < comps.size(); ++i) {
            detail::Component& dst = merged[find(i)];
            dst.pixels.insert(dst.pixels.end(), comps[i].pixels.begin(), comps[i].pixels.end());
            dst.strict += comps[i].strict;
        }

        const std::int64_t max_area =
            static_cast<std::int64_t>(config.max_area_frac * W * H);
        for (detail::Component& c : merged) {
            const std::int64_t area = static_cast<std::int64_t>(c.pixels.size());
            if (area < config.min_area_px || area > max_area) continue;
            std::sort(c.pixels.begin(), c.pixels.end());
            std::vector<Run> runs;
            std::size_t i = 0;
            while (i < c.pixels.size()) {
                std::size_t j = i;
                while (j + 1 < c.pixels.size() && c.pixels[j + 1] == c.pixels[j] + 1) ++j;
                runs.push_back({c.pixels[i], static_cast<std::uint32_t>(j - i + 1)});
                i = j + 1;
            }
            out.push_back(Detection::make(cls, Mask::from_runs(W, H, std::move(runs)),
                                          static_cast<double>(c.strict) / area));
        }
    }
    return out;
}

}  // namespace fishboard
