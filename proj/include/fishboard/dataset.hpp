// dataset.hpp - on-disk datasets: P6 images plus a JSON-lines truth manifest.
//
// The manifest starts with a header object followed by one object per scene.
// Per-scene seeds are derived as stable_hash(master_seed, scene_index), so a
// dataset is a pure function of (config, seed) no matter how many workers
// generate it.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fishboard/common.hpp"
#include "fishboard/raster.hpp"
#include "fishboard/scene.hpp"

namespace fishboard {

inline constexpr const char* kManifestFormat = "scene-manifest/1";

// ---------------------------------------------------------------------------
// Config serialization

inline nlohmann::json rgb_to_json(Rgb c) { return {c.r, c.g, c.b}; }

inline Rgb rgb_from_json(const nlohmann::json& j) {
    return {j.at(0).get<std::uint8_t>(), j.at(1).get<std::uint8_t>(),
            j.at(2).get<std::uint8_t>()};
}

inline nlohmann::json generator_config_to_json(const GeneratorConfig& c) {
    nlohmann::json species = nlohmann::json::array();
    for (const SpeciesStyle& s : c.species)
        species.push_back({{"hue_deg", s.hue_deg},
                           {"aspect", s.aspect},
                           {"exponent", s.exponent},
                           {"bend", s.bend}});
    return {{"image_width", c.image_width},
            {"image_height", c.image_height},
            {"min_fish", c.min_fish},
            {"max_fish", c.max_fish},
            {"min_length_cm", c.min_length_cm},
            {"max_length_cm", c.max_length_cm},
            {"perspective_jitter", c.perspective_jitter},
            {"occlusion_prob", c.occlusion_prob},
            {"distinct_species", c.distinct_species},
            {"margin_px", c.margin_px},
            {"species", species},
            {"lighting",
             {{"noise_amp", c.lighting.noise_amp},
              {"brightness_jitter", c.lighting.brightness_jitter}}},
            {"marker_yellow", rgb_to_json(c.marker_yellow)},
            {"marker_blue", rgb_to_json(c.marker_blue)},
            {"board_color", rgb_to_json(c.board_color)},
            {"background_color", rgb_to_json(c.background_color)},
            {"occluder_color", rgb_to_json(c.occluder_color)}};
}

inline GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
    GeneratorConfig c;
    c.image_width = j.value("image_width", c.image_width);
    c.image_height = j.value("image_height", c.image_height);
    c.min_fish = j.value("min_fish", c.min_fish);
    c.max_fish = j.value("max_fish", c.max_fish);
    c.min_length_cm = j.value("min_length_cm", c.min_length_cm);
    c.max_length_cm = j.value("max_length_cm", c.max_length_cm);
    c.perspective_jitter = j.value("perspective_jitter", c.perspective_jitter);
    c.occlusion_prob = j.value("occlusion_prob", c.occlusion_prob);
    c.distinct_species = j.value("distinct_species", c.distinct_species);
    c.margin_px = j.value("margin_px", c.margin_px);
    if (j.contains("species")) {
        c.species.clear();
        for (const nlohmann::json& s : j.at("species"))
            c.species.push_back({s.value("hue_deg", 0.0), s.value("aspect", 0.25),
                                 s.value("exponent", 2.5), s.value("bend", 0.04)});
    }
    if (j.contains("lighting")) {
        c.lighting.noise_amp = j.at("lighting").value("noise_amp", 0.0);
        c.lighting.brightness_jitter = j.at("lighting").value("brightness_jitter", 0.0);
    }
    if (j.contains("marker_yellow")) c.marker_yellow = rgb_from_json(j.at("marker_yellow"));
    if (j.contains("marker_blue")) c.marker_blue = rgb_from_json(j.at("marker_blue"));
    if (j.contains("board_color")) c.board_color = rgb_from_json(j.at("board_color"));
    if (j.contains("background_color"))
        c.background_color = rgb_from_json(j.at("background_color"));
    if (j.contains("occluder_color")) c.occluder_color = rgb_from_json(j.at("occluder_color"));
    return c;
}

// ---------------------------------------------------------------------------
// Scene (de)serialization

inline nlohmann::json scene_to_json(const SceneTruth& scene, const std::string& image_path) {
    nlohmann::json markers = nlohmann::json::array();
    for (const MarkerTruth& m : scene.markers)
        markers.push_back({{"class", to_string(m.object_class)},
                           {"board_rect", {m.board_rect.x, m.board_rect.y, m.board_rect.w,
                                           m.board_rect.h}},
                           {"mask", mask_to_rle_string(m.mask)}});
    nlohmann::json fish = nlohmann::json::array();
    for (const FishTruth& f : scene.fish)
        fish.push_back({{"species_id", f.record.species_id},
                        {"length_cm", f.record.length_cm},
                        {"mask", mask_to_rle_string(f.mask)},
                        {"occlusion", f.occlusion_fraction}});
    nlohmann::json occluders = nlohmann::json::array();
    for (const OccluderTruth& o : scene.occluders)
        occluders.push_back(mask_to_rle_string(o.mask));
    nlohmann::json camera = nlohmann::json::array();
    for (double v : scene.camera.homography) camera.push_back(v);
    return {{"scene_id", scene.scene_id},
            {"image_path", image_path},
            {"camera", camera},
            {"image_size", {scene.camera.image_width, scene.camera.image_height}},
            {"markers", markers},
            {"fish", fish},
            {"occluders", occluders},
            {"seed", scene.seed}};
}

struct ManifestScene {
    SceneTruth scene;
    std::string image_path;
};

inline ManifestScene scene_from_json(const nlohmann::json& j) {
    ManifestScene out;
    out.scene.scene_id = j.at("scene_id").get<std::uint32_t>();
    out.scene.seed = j.at("seed").get<std::uint64_t>();
    out.image_path = j.value("image_path", "");
    const nlohmann::json& cam = j.at("camera");
    if (cam.size() != 9) throw DataError("camera must have 9 entries");
    for (std::size_t i = 0; i < 9; ++i) out.scene.camera.homography[i] = cam.at(i).get<double>();
    out.scene.camera.image_width = j.at("image_size").at(0).get<int>();
    out.scene.camera.image_height = j.at("image_size").at(1).get<int>();
    for (const nlohmann::json& mj : j.at("markers")) {
        MarkerTruth m;
        m.object_class = object_class_from_string(mj.at("class").get<std::string>());
        const nlohmann::json& r = mj.at("board_rect");
        m.board_rect = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>(),
                        r.at(3).get<double>()};
        m.mask = mask_from_rle_string(mj.at("mask").get<std::string>());
        out.scene.markers.push_back(std::move(m));
    }
    for (const nlohmann::json& fj : j.at("fish")) {
        FishTruth f;
        f.record.species_id = fj.at("species_id").get<int>();
        f.record.length_cm = fj.at("length_cm").get<double>();
        f.mask = mask_from_rle_string(fj.at("mask").get<std::string>());
        f.occlusion_fraction = fj.value("occlusion", 0.0);
        out.scene.fish.push_back(std::move(f));
    }
    if (j.contains("occluders"))
        for (const nlohmann::json& oj : j.at("occluders"))
            out.scene.occluders.push_back({mask_from_rle_string(oj.get<std::string>())});
    return out;
}

// ---------------------------------------------------------------------------
// Generation

struct DatasetInfo {
    std::filesystem::path manifest_path;
    int n_scenes = 0;
    std::int64_t total_fish = 0;
};

inline std::string scene_image_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "images/scene_%06d.ppm", index);
    return buf;
}

inline std::uint64_t config_hash(const nlohmann::json& j) {
    return stable_hash_str(0x0C0FF1Eull, j.dump());
}

inline DatasetInfo generate_dataset(const GeneratorConfig& config, int n_scenes,
                                    std::uint64_t seed, const std::filesystem::path& out_dir,
                                    int threads = 1, bool write_images = true) {
    if (n_scenes < 0) throw ConfigError("n_scenes must be >= 0");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (write_images) std::filesystem::create_directories(out_dir / "images", ec);
    if (!std::filesystem::exists(out_dir))
        throw IoError("cannot create output directory: " + out_dir.string());

    const nlohmann::json config_json = generator_config_to_json(config);
    std::vector<std::string> lines(static_cast<std::size_t>(n_scenes));
    std::vector<std::int64_t> fish_counts(static_cast<std::size_t>(n_scenes), 0);

    parallel_for(static_cast<std::size_t>(n_scenes), threads, [&](std::size_t i) {
        const std::uint64_t scene_seed = stable_hash(seed, static_cast<std::uint64_t>(i));
        SceneTruth scene = sample_scene(config, scene_seed);
        scene.scene_id = static_cast<std::uint32_t>(i);
        const std::string image_path = scene_image_name(static_cast<int>(i));
        if (write_images) {
            const Raster img = render(scene, config);
            write_ppm(img, (out_dir / image_path).string());
        }
        fish_counts[i] = static_cast<std::int64_t>(scene.fish.size());
        lines[i] = scene_to_json(scene, write_images ? image_path : "").dump();
    });

    DatasetInfo info;
    info.manifest_path = out_dir / "manifest.jsonl";
    info.n_scenes = n_scenes;
    for (std::int64_t c : fish_counts) info.total_fish += c;

    std::ofstream out(info.manifest_path);
    if (!out) throw IoError("cannot write manifest: " + info.manifest_path.string());
    const nlohmann::json header = {{"format", kManifestFormat},
                                   {"n_scenes", n_scenes},
                                   {"seed", seed},
                                   {"config_hash", hash_hex(config_hash(config_json))},
                                   {"generator", config_json}};
    out << header.dump() << "\n";
    for (const std::string& line : lines) out << line << "\n";
    if (!out) throw IoError("write failed: " + info.manifest_path.string());
    return info;
}

// ---------------------------------------------------------------------------
// Reading

struct ManifestHeader {
    int n_scenes = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
    GeneratorConfig generator;
};

inline ManifestHeader manifest_header_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != kManifestFormat)
        throw DataError("unsupported manifest format");
    ManifestHeader h;
    h.n_scenes = j.value("n_scenes", 0);
    h.seed = j.value("seed", std::uint64_t{0});
    h.config_hash = j.value("config_hash", "");
    if (j.contains("generator")) h.generator = generator_config_from_json(j.at("generator"));
    return h;
}

// Loads an entire manifest; tests and small runs only. Streaming consumers
// read line by line instead.
struct LoadedDataset {
    ManifestHeader header;
    std::vector<ManifestScene> scenes;
};

inline LoadedDataset load_dataset(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open manifest: " + manifest_path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty manifest: " + manifest_path.string());
    LoadedDataset ds;
    ds.header = manifest_header_from_json(nlohmann::json::parse(line));
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ds.scenes.push_back(scene_from_json(nlohmann::json::parse(line)));
    }
    return ds;
}

}  // namespace fishboard
