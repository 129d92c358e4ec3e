// scene.hpp - synthetic measuring-board scenes with exact ground truth.
//
// A scene is a 100x80 cm board carrying four 3x10 cm colored markers (two
// yellow, two blue) and one or more fish silhouettes. Fish are superellipse
// shapes whose true length equals their tip-to-tip extent in board
// coordinates, so pixel-level measurements can be checked against exact
// centimeter truth. Everything is a pure function of (config, seed).
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "fishboard/camera.hpp"
#include "fishboard/common.hpp"
#include "fishboard/mask.hpp"
#include "fishboard/raster.hpp"

namespace fishboard {

inline constexpr double kBoardWidthCm = 100.0;
inline constexpr double kBoardHeightCm = 80.0;
inline constexpr double kMarkerLengthCm = 10.0;
inline constexpr double kMarkerHeightCm = 3.0;

struct SpeciesStyle {
    double hue_deg = 0.0;   // body hue; keep clear of the marker bands
    double aspect = 0.25;   // width / length
    double exponent = 2.5;  // superellipse exponent; higher is boxier
    double bend = 0.04;     // spine bend as a fraction of length
};

struct LightingConfig {
    double noise_amp = 0.0;          // per-channel uniform noise, 8-bit units
    double brightness_jitter = 0.0;  // global multiplicative jitter, fraction
};

struct GeneratorConfig {
    int image_width = 800;
    int image_height = 640;
    int min_fish = 1;
    int max_fish = 4;
    double min_length_cm = 20.0;
    double max_length_cm = 90.0;
    double perspective_jitter = 0.05;  // corner offset, fraction of min image dim
    double occlusion_prob = 0.0;
    bool distinct_species = false;
    double margin_px = 10.0;
    std::vector<SpeciesStyle> species = default_palette();
    LightingConfig lighting;
    Rgb marker_yellow{245, 205, 30};
    Rgb marker_blue{35, 80, 230};
    Rgb board_color{232, 232, 224};
    Rgb background_color{72, 78, 70};
    Rgb occluder_color{92, 92, 98};

    static std::vector<SpeciesStyle> default_palette() {
        return {
            {0.0, 0.24, 2.4, 0.035},
            {90.0, 0.30, 2.8, 0.050},
            {140.0, 0.18, 3.2, 0.020},
            {175.0, 0.27, 2.0, 0.055},
            {280.0, 0.33, 2.6, 0.040},
            {320.0, 0.21, 3.0, 0.030},
        };
    }
};

struct RectCm {
    double x = 0.0, y = 0.0, w = 0.0, h = 0.0;
};

struct MarkerTruth {
    ObjectClass object_class = ObjectClass::YellowBox;
    RectCm board_rect;  // exact 10x3 cm footprint on the board
    Mask mask;
};

struct FishTruth {
    FishRecord record;
    Mask mask;
    double occlusion_fraction = 0.0;
};

struct OccluderTruth {
    Mask mask;
};

struct SceneTruth {
    std::uint32_t scene_id = 0;
    std::uint64_t seed = 0;
    CameraModel camera;
    std::vector<MarkerTruth> markers;  // always 4
    std::vector<FishTruth> fish;
    std::vector<OccluderTruth> occluders;
};

namespace detail {

// Closed superellipse outline in local coordinates: tips at exactly
// (+-length/2, bend offset), so the maximum chord equals length.
inline std::vector<PointD> fish_outline(double length_cm, const SpeciesStyle& style,
                                        int segments = 96) {
    std::vector<PointD> pts;
    pts.reserve(static_cast<std::size_t>(segments));
    const double a = length_cm / 2.0;
    const double b = length_cm * style.aspect / 2.0;
    const double inv_p = 2.0 / style.exponent;
    for (int i = 0; i < segments; ++i) {
        const double t = 2.0 * 3.14159265358979323846 * i / segments;
        const double c = std::cos(t), s = std::sin(t);
        const double x = a * std::copysign(std::pow(std::abs(c), inv_p), c);
        const double y = b * std::copysign(std::pow(std::abs(s), inv_p), s);
        const double u = x / a;  // spine bend vanishes nowhere but keeps tips level
        pts.push_back({x, y + style.bend * length_cm * (u * u - 0.5)});
    }
    return pts;
}

inline std::vector<PointD> place_outline(const std::vector<PointD>& local, double cx,
                                         double cy, double angle_rad) {
    const double c = std::cos(angle_rad), s = std::sin(angle_rad);
    std::vector<PointD> out;
    out.reserve(local.size());
    for (const PointD& p : local)
        out.push_back({cx + c * p.x - s * p.y, cy + s * p.x + c * p.y});
    return out;
}

inline std::vector<PointD> project_outline(const CameraModel& cam,
                                           const std::vector<PointD>& board_pts) {
    std::vector<PointD> out;
    out.reserve(board_pts.size());
    for (const PointD& p : board_pts) out.push_back(project_board(cam, p));
    return out;
}

inline std::vector<PointD> rect_outline(const RectCm& r) {
    return {{r.x, r.y}, {r.x + r.w, r.y}, {r.x + r.w, r.y + r.h}, {r.x, r.y + r.h}};
}

}  // namespace detail

// Fixed marker layout: one yellow and one blue box on each horizontal edge.
inline std::array<std::pair<ObjectClass, RectCm>, 4> marker_layout() {
    return {{{ObjectClass::YellowBox, {14.0, 1.5, kMarkerLengthCm, kMarkerHeightCm}},
             {ObjectClass::BlueBox, {76.0, 1.5, kMarkerLengthCm, kMarkerHeightCm}},
             {ObjectClass::BlueBox, {14.0, 75.5, kMarkerLengthCm, kMarkerHeightCm}},
             {ObjectClass::YellowBox, {76.0, 75.5, kMarkerLengthCm, kMarkerHeightCm}}}};
}

inline SceneTruth sample_scene(const GeneratorConfig& config, std::uint64_t seed) {
    if (config.species.empty()) throw ConfigError("empty species palette");
    if (config.min_fish < 1 || config.max_fish < config.min_fish)
        throw ConfigError("bad fish count range");
    if (config.min_length_cm < 10.0 || config.max_length_cm > 250.0 ||
        config.min_length_cm > config.max_length_cm)
        throw ConfigError("length range must lie within [10, 250] cm");
    if (config.distinct_species &&
        static_cast<int>(config.species.size()) < config.max_fish)
        throw ConfigError("distinct species requested but palette smaller than max fish count");

    Rng rng(stable_hash(seed, 0x5CE2Eull));
    SceneTruth scene;
    scene.seed = seed;

    const int n_fish = config.min_fish +
                       static_cast<int>(rng.uniform_int(
                           static_cast<std::uint64_t>(config.max_fish - config.min_fish + 1)));

    std::vector<double> lengths;
    double max_length = 0.0;
    for (int i = 0; i < n_fish; ++i) {
        lengths.push_back(rng.uniform(config.min_length_cm, config.max_length_cm));
        max_length = std::max(max_length, lengths.back());
    }

    std::vector<int> species_ids;
    if (config.distinct_species) {
        std::vector<int> pool(config.species.size());
        for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
        rng.shuffle(pool);
        species_ids.assign(pool.begin(), pool.begin() + n_fish);
    } else {
        for (int i = 0; i < n_fish; ++i)
            species_ids.push_back(static_cast<int>(rng.uniform_int(config.species.size())));
    }

    // Content box in board coordinates: the board plus room for fish that
    // overhang it. The camera frames this box, so bigger catches are shot
    // from further away, exactly like a hand-held photo.
    const double content_w = std::max(kBoardWidthCm, max_length) + 16.0;
    const double content_h = std::max(kBoardHeightCm, 0.62 * max_length + 70.0);
    const double ccx = kBoardWidthCm / 2.0, ccy = kBoardHeightCm / 2.0;

    const double jit = config.perspective_jitter *
                       std::min(config.image_width, config.image_height);
    const double avail_w = config.image_width - 2.0 * (config.margin_px + jit);
    const double avail_h = config.image_height - 2.0 * (config.margin_px + jit);
    if (avail_w <= 8.0 || avail_h <= 8.0)
        throw ConfigError("image too small for margin and jitter");
    const double s = std::min(avail_w / content_w, avail_h / content_h);

    const std::array<PointD, 4> content_corners = {
        PointD{ccx - content_w / 2.0, ccy - content_h / 2.0},
        PointD{ccx + content_w / 2.0, ccy - content_h / 2.0},
        PointD{ccx + content_w / 2.0, ccy + content_h / 2.0},
        PointD{ccx - content_w / 2.0, ccy + content_h / 2.0}};
    std::array<PointD, 4> targets;
    for (int i = 0; i < 4; ++i) {
        targets[i] = {config.image_width / 2.0 + s * (content_corners[i].x - ccx) +
                          rng.uniform(-jit, jit),
                      config.image_height / 2.0 + s * (content_corners[i].y - ccy) +
                          rng.uniform(-jit, jit)};
    }
    scene.camera.homography = homography_from_points(content_corners, targets);
    scene.camera.image_width = config.image_width;
    scene.camera.image_height = config.image_height;

    const int W = config.image_width, H = config.image_height;

    for (const auto& [cls, rect] : marker_layout()) {
        MarkerTruth m;
        m.object_class = cls;
        m.board_rect = rect;
        m.mask = mask_from_polygon(
            detail::project_outline(scene.camera, detail::rect_outline(rect)), W, H);
        scene.markers.push_back(std::move(m));
    }

    // Fish rows run top to bottom; placement is validated against the content
    // box in board coordinates, which keeps every projected mask in frame.
    const double row_spread = std::min(22.0, 64.0 / std::max(1, n_fish - 1));
    const double inset = 2.0;
    for (int k = 0; k < n_fish; ++k) {
        const SpeciesStyle& style = config.species[static_cast<std::size_t>(species_ids[k])];
        const std::vector<PointD> local = detail::fish_outline(lengths[k], style);
        bool placed = false;
        for (int attempt = 0; attempt < 40 && !placed; ++attempt) {
            const double shrink = 1.0 / (1.0 + 0.25 * attempt);
            const double cx = ccx + rng.uniform(-8.0, 8.0) * shrink;
            const double cy = ccy + row_spread * (k - (n_fish - 1) / 2.0) +
                              rng.uniform(-5.0, 5.0) * shrink;
            const double angle = rng.uniform(-0.26, 0.26) * shrink;
            std::vector<PointD> board_pts = detail::place_outline(local, cx, cy, angle);
            bool inside = true;
            for (const PointD& p : board_pts) {
                if (p.x < ccx - content_w / 2.0 + inset || p.x > ccx + content_w / 2.0 - inset ||
                    p.y < ccy - content_h / 2.0 + inset || p.y > ccy + content_h / 2.0 - inset) {
                    inside = false;
                    break;
                }
            }
            if (!inside) continue;
            FishTruth fish;
            fish.record = {species_ids[k], lengths[k]};
            fish.mask = mask_from_polygon(
                detail::project_outline(scene.camera, board_pts), W, H);
            scene.fish.push_back(std::move(fish));
            placed = true;
        }
        if (!placed)
            throw ConfigError("could not place a " + std::to_string(lengths[k]) +
                              " cm fish inside the frame");
    }

    if (config.occlusion_prob > 0.0 && rng.bernoulli(config.occlusion_prob)) {
        const int n_strips = 1 + (rng.bernoulli(0.4) ? 1 : 0);
        for (int i = 0; i < n_strips; ++i) {
            const double angle = rng.uniform(0.0, 3.14159265358979323846);
            const double width = rng.uniform(2.0, 6.0);
            const double px = rng.uniform(10.0, kBoardWidthCm - 10.0);
            const double py = rng.uniform(10.0, kBoardHeightCm - 10.0);
            const double half = content_w + content_h;  // long enough to cross everything
            const double c = std::cos(angle), sn = std::sin(angle);
            const std::vector<PointD> quad = {
                {px - c * half - sn * width / 2, py - sn * half + c * width / 2},
                {px + c * half - sn * width / 2, py + sn * half + c * width / 2},
                {px + c * half + sn * width / 2, py + sn * half - c * width / 2},
                {px - c * half + sn * width / 2, py - sn * half - c * width / 2}};
            try {
                OccluderTruth occ;
                occ.mask = mask_from_polygon(detail::project_outline(scene.camera, quad), W, H);
                scene.occluders.push_back(std::move(occ));
            } catch (const EmptyMaskError&) {
                // strip missed the frame entirely; harmless
            }
        }
        if (!scene.occluders.empty()) {
            std::vector<std::uint8_t> occ_bits(static_cast<std::size_t>(W) * H, 0);
            for (const OccluderTruth& occ : scene.occluders) {
                mask_for_each_row_span(occ.mask, [&](int y, int xb, int xe) {
                    const std::size_t row = static_cast<std::size_t>(y) * W;
                    std::fill(occ_bits.begin() + row + xb, occ_bits.begin() + row + xe,
                              std::uint8_t{1});
                });
            }
            for (FishTruth& fish : scene.fish) {
                std::int64_t covered = 0;
                mask_for_each_row_span(fish.mask, [&](int y, int xb, int xe) {
                    const std::size_t row = static_cast<std::size_t>(y) * W;
                    for (int x = xb; x < xe; ++x) covered += occ_bits[row + x];
                });
                fish.occlusion_fraction = static_cast<double>(covered) /
                                          static_cast<double>(fish.mask.area());
            }
        }
    }

    return scene;
}

// Paints the scene onto a raster. Each truth mask's pixels carry its object's
// configured color before lighting noise, so detectors can be tested against
// exact color families.
inline Raster render(const SceneTruth& scene, const GeneratorConfig& config) {
    const int W = scene.camera.image_width, H = scene.camera.image_height;
    Raster img(W, H, config.background_color);
    Rng rng(stable_hash(scene.seed, 0x4E4De2ull));

    const std::vector<PointD> board = detail::project_outline(
        scene.camera, detail::rect_outline({0.0, 0.0, kBoardWidthCm, kBoardHeightCm}));
    try {
        const Mask board_mask = mask_from_polygon(board, W, H);
        mask_for_each_row_span(board_mask, [&](int y, int xb, int xe) {
            for (int x = xb; x < xe; ++x) img.set(x, y, config.board_color);
        });
    } catch (const EmptyMaskError&) {
    }

    for (const MarkerTruth& m : scene.markers) {
        const Rgb color = m.object_class == ObjectClass::YellowBox ? config.marker_yellow
                                                                   : config.marker_blue;
        mask_for_each_row_span(m.mask, [&](int y, int xb, int xe) {
            for (int x = xb; x < xe; ++x) img.set(x, y, color);
        });
    }

    for (const FishTruth& fish : scene.fish) {
        const SpeciesStyle& style =
            config.species[static_cast<std::size_t>(fish.record.species_id) %
                           config.species.size()];
        const Hsv body = {style.hue_deg + rng.uniform(-4.0, 4.0),
                          0.62 + rng.uniform(-0.05, 0.05),
                          0.55 + rng.uniform(-0.05, 0.05)};
        const Rgb color = hsv_to_rgb(body);
        mask_for_each_row_span(fish.mask, [&](int y, int xb, int xe) {
            for (int x = xb; x < xe; ++x) img.set(x, y, color);
        });
    }

    for (const OccluderTruth& occ : scene.occluders) {
        mask_for_each_row_span(occ.mask, [&](int y, int xb, int xe) {
            for (int x = xb; x < xe; ++x) img.set(x, y, config.occluder_color);
        });
    }

    if (config.lighting.noise_amp > 0.0) {
        const double amp = config.lighting.noise_amp;
        auto& data = img.data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double v = data[i] + rng.uniform(-amp, amp);
            data[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
        }
    }
    if (config.lighting.brightness_jitter > 0.0) {
        const double f = rng.uniform(1.0 - config.lighting.brightness_jitter,
                                     1.0 + config.lighting.brightness_jitter);
        auto& data = img.data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            data[i] = static_cast<std::uint8_t>(std::lround(std::clamp(data[i] * f, 0.0, 255.0)));
        }
    }
    return img;
}

// Pixels-per-cm of the camera along the board's x axis at the board center.
// For fronto-parallel cameras this is the uniform image scale.
inline double pixels_per_cm(const CameraModel& camera) {
    const PointD a = project_board(camera, {kBoardWidthCm / 2.0, kBoardHeightCm / 2.0});
    const PointD b = project_board(camera, {kBoardWidthCm / 2.0 + 1.0, kBoardHeightCm / 2.0});
    return std::hypot(b.x - a.x, b.y - a.y);
}

}  // namespace fishboard
