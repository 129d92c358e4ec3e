#include <gtest/gtest.h>

#include <cmath>

#include "fishboard/detect.hpp"
#include "fishboard/scene.hpp"

using namespace fishboard;

namespace {

GeneratorConfig small_config() {
    GeneratorConfig c;
    c.image_width = 640;
    c.image_height = 512;
    c.perspective_jitter = 0.03;
    return c;
}

Mask ellipse_mask(int w, int h, double cx, double cy, double rx, double ry) {
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(w) * h, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
            if (dx * dx + dy * dy <= 1.0) bits[static_cast<std::size_t>(y) * w + x] = 1;
        }
    return Mask::from_dense(w, h, bits);
}

}  // namespace

TEST(DegradeMask, TargetOneIsIdentity) {
    const Mask m = ellipse_mask(64, 64, 32, 32, 20, 10);
    const DegradeResult r = degrade_mask_to_iou(m, 1.0, 42);
    EXPECT_EQ(r.mask, m);
    EXPECT_FALSE(r.warning);
}

TEST(DegradeMask, TinyMaskPassthroughWithWarning) {
    const Mask m = Mask::from_runs(32, 32, {{0, 2}, {32, 2}});  // 4 pixels
    const DegradeResult r = degrade_mask_to_iou(m, 0.5, 7);
    EXPECT_EQ(r.mask, m);
    EXPECT_TRUE(r.warning);
}

TEST(DegradeMask, HitsTargetBandOnRandomMasks) {
    Rng rng(2024);
    int checked = 0;
    double sum_iou = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int w = 48 + static_cast<int>(rng.uniform_int(80));
        const int h = 48 + static_cast<int>(rng.uniform_int(80));
        const Mask m = ellipse_mask(w, h, w / 2.0, h / 2.0, rng.uniform(8.0, w / 2.2),
                                    rng.uniform(5.0, h / 2.2));
        const DegradeResult r = degrade_mask_to_iou(m, 0.92, rng.next_u64());
        const double iou = mask_iou(r.mask, m);
        EXPECT_FALSE(r.warning);
        EXPECT_NEAR(iou, 0.92, 0.021);
        sum_iou += iou;
        ++checked;
    }
    ASSERT_GT(checked, 0);
    EXPECT_NEAR(sum_iou / checked, 0.92, 0.02);  // empirical mean within [0.90, 0.94]
}

TEST(DegradeMask, DeterministicPerSeed) {
    const Mask m = ellipse_mask(80, 60, 40, 30, 30, 18);
    const DegradeResult a = degrade_mask_to_iou(m, 0.85, 99);
    const DegradeResult b = degrade_mask_to_iou(m, 0.85, 99);
    EXPECT_EQ(a.mask, b.mask);
    const DegradeResult c = degrade_mask_to_iou(m, 0.85, 100);
    EXPECT_NE(c.mask, a.mask);
}

TEST(DegradeMask, StaysInImageBounds) {
    // mask flush against the image corner; dilation must not escape
    const Mask m = ellipse_mask(40, 40, 4, 4, 8, 6);
    const DegradeResult r = degrade_mask_to_iou(m, 0.7, 5);
    const BBox b = mask_bbox(r.mask);
    EXPECT_GE(b.x0, 0);
    EXPECT_GE(b.y0, 0);
    EXPECT_LE(b.x1, 40);
    EXPECT_LE(b.y1, 40);
}

TEST(OracleDetect, ZeroNoiseReproducesTruthExactly) {
    const GeneratorConfig cfg = small_config();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const SceneTruth scene = sample_scene(cfg, seed);
        const std::vector<Detection> dets = oracle_detect(scene, DetectorNoise::none(), seed);
        ASSERT_EQ(dets.size(), scene.markers.size() + scene.fish.size());
        for (std::size_t i = 0; i < scene.markers.size(); ++i) {
            EXPECT_EQ(dets[i].mask, scene.markers[i].mask);
            EXPECT_EQ(dets[i].object_class, scene.markers[i].object_class);
            EXPECT_DOUBLE_EQ(dets[i].confidence, 1.0);
        }
        for (std::size_t i = 0; i < scene.fish.size(); ++i) {
            const Detection& d = dets[scene.markers.size() + i];
            EXPECT_EQ(d.mask, scene.fish[i].mask);
            EXPECT_EQ(d.object_class, ObjectClass::Fish);
            EXPECT_DOUBLE_EQ(d.confidence, 1.0);
        }
    }
}

TEST(OracleDetect, MissProbOneGivesEmptyList) {
    const SceneTruth scene = sample_scene(small_config(), 3);
    DetectorNoise noise;
    noise.miss_prob = 1.0;
    EXPECT_TRUE(oracle_detect(scene, noise, 3).empty());
}

TEST(OracleDetect, DeterministicPerSeed) {
    const SceneTruth scene = sample_scene(small_config(), 8);
    DetectorNoise noise;
    noise.target_fish_iou = 0.9;
    noise.target_marker_iou = 0.85;
    noise.miss_prob = 0.1;
    noise.spurious_prob = 0.5;
    noise.confidence_noise = 0.05;
    const auto a = oracle_detect(scene, noise, 17);
    const auto b = oracle_detect(scene, noise, 17);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].mask, b[i].mask);
        EXPECT_DOUBLE_EQ(a[i].confidence, b[i].confidence);
    }
}

TEST(OracleDetect, CalibratedIouOperatingPoint) {
    GeneratorConfig cfg = small_config();
    cfg.min_fish = 1;
    cfg.max_fish = 4;
    DetectorNoise noise;
    noise.target_fish_iou = 0.92;
    noise.target_marker_iou = 0.86;
    double fish_sum = 0.0, marker_sum = 0.0;
    int fish_n = 0, marker_n = 0;
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        const SceneTruth scene = sample_scene(cfg, seed);
        const auto dets = oracle_detect(scene, noise, stable_hash(seed, 0xDD));
        ASSERT_EQ(dets.size(), scene.markers.size() + scene.fish.size());
        for (std::size_t i = 0; i < scene.markers.size(); ++i) {
            marker_sum += mask_iou(dets[i].mask, scene.markers[i].mask);
            ++marker_n;
        }
        for (std::size_t i = 0; i < scene.fish.size(); ++i) {
            fish_sum += mask_iou(dets[scene.markers.size() + i].mask, scene.fish[i].mask);
            ++fish_n;
        }
    }
    EXPECT_NEAR(fish_sum / fish_n, 0.92, 0.02);
    EXPECT_NEAR(marker_sum / marker_n, 0.86, 0.02);
}

TEST(OracleDetect, SpuriousFishLandOffBoard) {
    const GeneratorConfig cfg = small_config();
    DetectorNoise noise;
    noise.spurious_prob = 1.0;
    int spurious_seen = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const SceneTruth scene = sample_scene(cfg, seed);
        const auto dets = oracle_detect(scene, noise, seed);
        const std::size_t regular = scene.markers.size() + scene.fish.size();
        for (std::size_t i = regular; i < dets.size(); ++i) {
            ++spurious_seen;
            EXPECT_EQ(dets[i].object_class, ObjectClass::Fish);
            // center of the spurious blob lies outside every truth fish mask
            const BBox b = dets[i].bbox;
            const int cx = (b.x0 + b.x1) / 2, cy = (b.y0 + b.y1) / 2;
            for (const FishTruth& f : scene.fish) EXPECT_FALSE(f.mask.contains(cx, cy));
        }
    }
    EXPECT_GT(spurious_seen, 10);
}

TEST(ColorDetect, FindsAllFourMarkersOnCleanRender) {
    const GeneratorConfig cfg = small_config();
    const SceneTruth scene = sample_scene(cfg, 31);
    const Raster img = render(scene, cfg);
    const auto dets = color_detect_markers(img, ColorDetectConfig{});
    ASSERT_EQ(dets.size(), 4u);
    int yellow = 0, blue = 0;
    for (const Detection& d : dets)
        (d.object_class == ObjectClass::YellowBox ? yellow : blue) += 1;
    EXPECT_EQ(yellow, 2);
    EXPECT_EQ(blue, 2);
    // detections align with truth markers
    for (const MarkerTruth& m : scene.markers) {
        double best = 0.0;
        for (const Detection& d : dets)
            if (d.object_class == m.object_class) best = std::max(best, mask_iou(d.mask, m.mask));
        EXPECT_GT(best, 0.9);
    }
}

TEST(ColorDetect, AllBlackImageGivesEmptyList) {
    const Raster img(64, 64, {0, 0, 0});
    EXPECT_TRUE(color_detect_markers(img, ColorDetectConfig{}).empty());
}

TEST(ColorDetect, OccluderSplitMergesWithinDistance) {
    // one marker bar split by a vertical dark strip
    auto make_split_image = [](int gap) {
        Raster img(200, 80, {230, 230, 225});
        for (int y = 30; y < 50; ++y)
            for (int x = 40; x < 160; ++x) img.set(x, y, {245, 205, 30});
        for (int y = 0; y < 80; ++y)
            for (int x = 100 - gap / 2; x < 100 + (gap + 1) / 2; ++x)
                img.set(x, y, {60, 60, 60});
        return img;
    };
    ColorDetectConfig cfg;
    cfg.merge_dist_px = 8.0;
    cfg.max_area_frac = 0.5;
    const auto merged = color_detect_markers(make_split_image(6), cfg);
    ASSERT_EQ(merged.size(), 1u);
    EXPECT_EQ(merged[0].object_class, ObjectClass::YellowBox);
    const auto split = color_detect_markers(make_split_image(14), cfg);
    ASSERT_EQ(split.size(), 2u);
}

TEST(ColorDetect, ConfidenceIsStrictFraction) {
    Raster img(100, 100, {0, 0, 0});
    // half the blob at the band center hue, half offset but inside the loose band
    for (int y = 40; y < 60; ++y) {
        for (int x = 20; x < 50; ++x) img.set(x, y, hsv_to_rgb({48.0, 0.9, 0.9}));
        for (int x = 50; x < 80; ++x) img.set(x, y, hsv_to_rgb({62.0, 0.9, 0.9}));
    }
    ColorDetectConfig cfg;
    cfg.max_area_frac = 0.5;
    const auto dets = color_detect_markers(img, cfg);
    ASSERT_EQ(dets.size(), 1u);
    EXPECT_NEAR(dets[0].confidence, 0.5, 0.02);
}

TEST(DetectorNoise, Validation) {
    DetectorNoise bad;
    bad.target_fish_iou = 0.0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = DetectorNoise::none();
    bad.miss_prob = 1.5;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(DetectionJson, RoundTripAndBboxValidation) {
    const Mask m = ellipse_mask(64, 48, 30, 20, 12, 7);
    const Detection d = Detection::make(ObjectClass::BlueBox, m, 0.87);
    const nlohmann::json j = detection_to_json(17, d);
    EXPECT_EQ(j.at("class").get<std::string>(), "blue_box");
    EXPECT_EQ(j.at("bbox").size(), 4u);
    const auto [scene_id, back] = detection_from_json(j);
    EXPECT_EQ(scene_id, 17u);
    EXPECT_EQ(back.mask, d.mask);
    EXPECT_EQ(back.bbox, d.bbox);
    EXPECT_DOUBLE_EQ(back.confidence, d.confidence);

    nlohmann::json tampered = j;
    tampered["bbox"][0] = tampered["bbox"][0].get<int>() + 1;
    EXPECT_THROW(detection_from_json(tampered), DataError);
}
