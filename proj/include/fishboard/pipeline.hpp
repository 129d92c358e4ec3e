// pipeline.hpp - end-to-end orchestration: detect, scale, regress, classify,
// disambiguate, aggregate.
//
// Scenes are processed in chunks by a worker pool; per-scene seeds derive
// from (master seed, scene id) and results are accumulated in scene order,
// so every report byte is independent of the thread count.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fishboard/classify.hpp"
#include "fishboard/common.hpp"
#include "fishboard/curate.hpp"
#include "fishboard/dataset.hpp"
#include "fishboard/detect.hpp"
#include "fishboard/evalkit.hpp"
#include "fishboard/forest.hpp"
#include "fishboard/report.hpp"
#include "fishboard/scale.hpp"
#include "fishboard/scene.hpp"

namespace fishboard {

enum class DetectorKind { Oracle, OracleWithColorMarkers };

inline const char* to_string(DetectorKind k) {
    return k == DetectorKind::Oracle ? "oracle" : "oracle+color-markers";
}

inline DetectorKind detector_kind_from_string(const std::string& s) {
    if (s == "oracle") return DetectorKind::Oracle;
    if (s == "oracle+color-markers" || s == "hybrid") return DetectorKind::OracleWithColorMarkers;
    throw ConfigError("unknown detector kind: " + s);
}

struct PipelineConfig {
    std::uint64_t seed = 1;
    int threads = 1;
    GeneratorConfig generator;
    DetectorKind detector = DetectorKind::Oracle;
    DetectorNoise noise;
    ColorDetectConfig color;
    ForestParams forest;
    SoftmaxParams classifier;
    bool classifier_mask_zero = true;
    double curation_epsilon = kDefaultPosteriorFloor;
    double iou_threshold = 0.5;
    bool emit_detections = false;
    std::string dataset_dir;
    std::string length_model_path;
    std::string species_model_path;
    std::string report_dir = "reports";
};

inline nlohmann::json pipeline_config_to_json(const PipelineConfig& c) {
    return {{"seed", c.seed},
            {"threads", c.threads},
            {"generator", generator_config_to_json(c.generator)},
            {"detector", to_string(c.detector)},
            {"noise",
             {{"target_fish_iou", c.noise.target_fish_iou},
              {"target_marker_iou", c.noise.target_marker_iou},
              {"miss_prob", c.noise.miss_prob},
              {"spurious_prob", c.noise.spurious_prob},
              {"confidence_noise", c.noise.confidence_noise}}},
            {"color",
             {{"yellow_hue", c.color.yellow.hue_center},
              {"yellow_tol", c.color.yellow.hue_tol},
              {"blue_hue", c.color.blue.hue_center},
              {"blue_tol", c.color.blue.hue_tol},
              {"min_area_px", c.color.min_area_px},
              {"max_area_frac", c.color.max_area_frac},
              {"merge_dist_px", c.color.merge_dist_px}}},
            {"forest", forest_params_to_json(c.forest)},
            {"classifier",
             {{"learning_rate", c.classifier.learning_rate},
              {"l2", c.classifier.l2},
              {"epochs", c.classifier.epochs},
              {"seed", c.classifier.seed},
              {"n_classes", c.classifier.n_classes}}},
            {"classifier_mask_zero", c.classifier_mask_zero},
            {"curation_epsilon", c.curation_epsilon},
            {"iou_threshold", c.iou_threshold},
            {"emit_detections", c.emit_detections},
            {"dataset_dir", c.dataset_dir},
            {"length_model_path", c.length_model_path},
            {"species_model_path", c.species_model_path},
            {"report_dir", c.report_dir}};
}

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    PipelineConfig c;
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    if (j.contains("generator")) c.generator = generator_config_from_json(j.at("generator"));
    if (j.contains("detector"))
        c.detector = detector_kind_from_string(j.at("detector").get<std::string>());
    if (j.contains("noise")) {
        const nlohmann::json& n = j.at("noise");
        c.noise.target_fish_iou = n.value("target_fish_iou", c.noise.target_fish_iou);
        c.noise.target_marker_iou = n.value("target_marker_iou", c.noise.target_marker_iou);
        c.noise.miss_prob = n.value("miss_prob", c.noise.miss_prob);
        c.noise.spurious_prob = n.value("spurious_prob", c.noise.spurious_prob);
        c.noise.confidence_noise = n.value("confidence_noise", c.noise.confidence_noise);
    }
    if (j.contains("color")) {
        const nlohmann::json& cc = j.at("color");
        c.color.yellow.hue_center = cc.value("yellow_hue", c.color.yellow.hue_center);
        c.color.yellow.hue_tol = cc.value("yellow_tol", c.color.yellow.hue_tol);
        c.color.blue.hue_center = cc.value("blue_hue", c.color.blue.hue_center);
        c.color.blue.hue_tol = cc.value("blue_tol", c.color.blue.hue_tol);
        c.color.min_area_px = cc.value("min_area_px", c.color.min_area_px);
        c.color.max_area_frac = cc.value("max_area_frac", c.color.max_area_frac);
        c.color.merge_dist_px = cc.value("merge_dist_px", c.color.merge_dist_px);
    }
    if (j.contains("forest")) c.forest = forest_params_from_json(j.at("forest"));
    if (j.contains("classifier")) {
        const nlohmann::json& cl = j.at("classifier");
        c.classifier.learning_rate = cl.value("learning_rate", c.classifier.learning_rate);
        c.classifier.l2 = cl.value("l2", c.classifier.l2);
        c.classifier.epochs = cl.value("epochs", c.classifier.epochs);
        c.classifier.seed = cl.value("seed", c.classifier.seed);
        c.classifier.n_classes = cl.value("n_classes", c.classifier.n_classes);
    }
    c.classifier_mask_zero = j.value("classifier_mask_zero", c.classifier_mask_zero);
    c.curation_epsilon = j.value("curation_epsilon", c.curation_epsilon);
    c.iou_threshold = j.value("iou_threshold", c.iou_threshold);
    c.emit_detections = j.value("emit_detections", c.emit_detections);
    c.dataset_dir = j.value("dataset_dir", c.dataset_dir);
    c.length_model_path = j.value("length_model_path", c.length_model_path);
    c.species_model_path = j.value("species_model_path", c.species_model_path);
    c.report_dir = j.value("report_dir", c.report_dir);
    return c;
}

// Thread count and report location are execution knobs, not part of what was
// computed; they stay out of the hash so reruns at different parallelism or
// output paths report the same provenance.
inline std::string pipeline_config_hash(const PipelineConfig& c) {
    nlohmann::json j = pipeline_config_to_json(c);
    j.erase("threads");
    j.erase("report_dir");
    return hash_hex(stable_hash_str(0x0C0FF1Eull, j.dump()));
}

// ---------------------------------------------------------------------------
// Detection stage dispatch

inline std::vector<Detection> run_detector(const PipelineConfig& config, const SceneTruth& scene,
                                           const Raster* image) {
    const std::uint64_t det_seed = stable_hash(config.seed, scene.scene_id, 0xDE7Ec7ull);
    std::vector<Detection> dets = oracle_detect(scene, config.noise, det_seed);
    if (config.detector == DetectorKind::OracleWithColorMarkers) {
        if (image == nullptr)
            throw DataError("color marker detector needs the rendered image");
        std::vector<Detection> merged;
        for (Detection& d : dets)
            if (d.object_class == ObjectClass::Fish) merged.push_back(std::move(d));
        for (Detection& d : color_detect_markers(*image, config.color))
            merged.push_back(std::move(d));
        return merged;
    }
    return dets;
}

// ---------------------------------------------------------------------------
// Single-scene processing

struct SceneModels {
    const ForestModel* length = nullptr;
    const SoftmaxModel* species = nullptr;
};

inline SceneResult process_scene(const PipelineConfig& config, const SceneTruth& scene,
                                 const Raster* image, const SceneModels& models) {
    SceneResult result;
    result.scene_id = scene.scene_id;
    result.true_count = static_cast<int>(scene.fish.size());

    const std::vector<Detection> detections = run_detector(config, scene, image);
    if (config.emit_detections) {
        for (const Detection& d : detections)
            result.detections_jsonl += detection_to_json(scene.scene_id, d).dump() + "\n";
    }
    std::vector<std::size_t> fish_index;
    std::vector<Mask> fish_masks;
    for (std::size_t i = 0; i < detections.size(); ++i) {
        if (detections[i].object_class == ObjectClass::Fish) {
            fish_index.push_back(i);
            fish_masks.push_back(detections[i].mask);
        }
    }
    result.detected_count = static_cast<int>(fish_index.size());

    // no usable fiducial marker: the scene is tallied and dropped
    try {
        const ScaleEstimate scale = estimate_scale(detections);
        result.scale_cm_per_px = scale.cm_per_pixel;
    } catch (const NoFiducialError&) {
        result.discarded_no_fiducial = true;
        return result;
    }

    // marker IoU bookkeeping against truth, per class
    for (const ObjectClass cls : {ObjectClass::YellowBox, ObjectClass::BlueBox}) {
        std::vector<Mask> pred, truth;
        for (const Detection& d : detections)
            if (d.object_class == cls) pred.push_back(d.mask);
        for (const MarkerTruth& m : scene.markers)
            if (m.object_class == cls) truth.push_back(m.mask);
        if (pred.empty() || truth.empty()) continue;
        for (const MatchedPair& p : match_instances(pred, truth, config.iou_threshold).pairs)
            result.marker_ious.emplace_back(cls, p.iou);
    }

    // fish detections matched to truth fish
    std::vector<Mask> truth_masks;
    for (const FishTruth& f : scene.fish) truth_masks.push_back(f.mask);
    const Matching fish_match = match_instances(fish_masks, truth_masks, config.iou_threshold);
    std::vector<int> matched_truth(fish_masks.size(), -1);
    std::vector<double> matched_iou(fish_masks.size(), 0.0);
    for (const MatchedPair& p : fish_match.pairs) {
        matched_truth[p.pred_index] = static_cast<int>(p.truth_index);
        matched_iou[p.pred_index] = p.iou;
    }

    // length regression features and predictions
    std::vector<double> pred_lengths(fish_masks.size(), 0.0);
    if (models.length != nullptr && !fish_masks.empty()) {
        const auto rows = length_features(detections);
        for (const auto& [det_idx, features] : rows) {
            const auto arr = features.to_array();
            const std::vector<double> x(arr.begin(), arr.end());
            for (std::size_t k = 0; k < fish_index.size(); ++k)
                if (fish_index[k] == det_idx)
                    pred_lengths[k] = predict_forest(*models.length, x);
        }
    }

    // species posteriors per fish detection
    std::vector<SpeciesPosterior> posteriors;
    if (models.species != nullptr && image != nullptr && !fish_masks.empty()) {
        for (std::size_t k = 0; k < fish_index.size(); ++k) {
            const Detection& d = detections[fish_index[k]];
            posteriors.push_back(predict_posterior(
                *models.species,
                descriptor_for_detection(*image, d, config.classifier_mask_zero).to_vector()));
        }
    }

    for (std::size_t k = 0; k < fish_index.size(); ++k) {
        FishResult f;
        f.pred_cm = pred_lengths[k];
        if (matched_truth[k] >= 0) {
            const FishTruth& t = scene.fish[static_cast<std::size_t>(matched_truth[k])];
            f.truth_cm = t.record.length_cm;
            f.iou = matched_iou[k];
            f.species_truth = t.record.species_id;
            if (!posteriors.empty()) {
                const int S = static_cast<int>(posteriors[k].probs.size());
                if (t.record.species_id < S) {
                    f.top1 = topk_hit(posteriors[k], t.record.species_id, 1);
                    f.top5 = topk_hit(posteriors[k], t.record.species_id, std::min(5, S));
                }
            }
        }
        result.fish.push_back(f);
    }

    // annotation disambiguation: the ordered label list is the truth species
    // in reading order of the truth fish
    if (!posteriors.empty() && !scene.fish.empty()) {
        std::vector<Detection> truth_dets;
        for (const FishTruth& f : scene.fish)
            truth_dets.push_back(Detection::make(ObjectClass::Fish, f.mask, 1.0));
        const std::vector<std::size_t> truth_order = canonical_order(truth_dets);
        std::vector<int> labels;
        for (std::size_t i : truth_order)
            labels.push_back(scene.fish[i].record.species_id);

        if (labels.size() != posteriors.size()) {
            result.count_mismatch = true;  // routed to manual review
        } else {
            std::vector<Detection> fish_dets;
            for (std::size_t i : fish_index) fish_dets.push_back(detections[i]);
            std::vector<std::vector<double>> probs;
            for (const SpeciesPosterior& p : posteriors) probs.push_back(p.probs);
            const Assignment a = assign_labels(probs, labels, canonical_order(fish_dets),
                                               config.curation_epsilon);
            result.assignment_method = a.method;
            result.assignment_loglik = a.log_likelihood;
            bool correct = true;
            for (std::size_t i = 0; i < a.perm.size(); ++i) {
                const int truth_of_det = matched_truth[a.perm[i]];
                if (truth_of_det < 0 ||
                    static_cast<std::size_t>(truth_of_det) != truth_order[i]) {
                    correct = false;
                    break;
                }
                result.fish[a.perm[i]].label_index = static_cast<int>(i);
            }
            result.assignment_correct = correct;
        }
    }

    return result;
}

// ---------------------------------------------------------------------------
// Training helpers

struct FeatureTable {
    FeatureMatrix X;
    std::vector<double> y;  // matched truth lengths (cm)
    std::vector<std::pair<std::uint32_t, std::size_t>> origin;  // (scene_id, detection idx)
};

// Feature rows for every fish detection matched to a truth fish, under the
// configured detector. Scenes without markers are skipped, mirroring the
// pipeline's discard rule.
inline FeatureTable collect_length_features(const PipelineConfig& config,
                                            const std::vector<SceneTruth>& scenes,
                                            const std::vector<const Raster*>& images = {}) {
    FeatureTable table;
    std::vector<FeatureTable> partial(scenes.size());
    parallel_for(scenes.size(), config.threads, [&](std::size_t s) {
        const SceneTruth& scene = scenes[s];
        const Raster* image = images.empty() ? nullptr : images[s];
        const std::vector<Detection> detections = run_detector(config, scene, image);
        std::vector<Mask> fish_masks;
        std::vector<std::size_t> fish_index;
        for (std::size_t i = 0; i < detections.size(); ++i)
            if (detections[i].object_class == ObjectClass::Fish) {
                fish_index.push_back(i);
                fish_masks.push_back(detections[i].mask);
            }
        std::vector<Mask> truth_masks;
        for (const FishTruth& f : scene.fish) truth_masks.push_back(f.mask);
        std::vector<std::pair<std::size_t, LengthFeatures>> rows;
        try {
            rows = length_features(detections);
        } catch (const NoFiducialError&) {
            return;
        }
        if (truth_masks.empty()) return;
        const Matching match = match_instances(fish_masks, truth_masks, config.iou_threshold);
        std::vector<int> matched(fish_masks.size(), -1);
        for (const MatchedPair& p : match.pairs)
            matched[p.pred_index] = static_cast<int>(p.truth_index);
        for (const auto& [det_idx, features] : rows) {
            for (std::size_t k = 0; k < fish_index.size(); ++k) {
                if (fish_index[k] != det_idx || matched[k] < 0) continue;
                const auto arr = features.to_array();
                partial[s].X.emplace_back(arr.begin(), arr.end());
                partial[s].y.push_back(
                    scene.fish[static_cast<std::size_t>(matched[k])].record.length_cm);
                partial[s].origin.emplace_back(scene.scene_id, det_idx);
            }
        }
    });
    for (FeatureTable& p : partial) {
        table.X.insert(table.X.end(), p.X.begin(), p.X.end());
        table.y.insert(table.y.end(), p.y.begin(), p.y.end());
        table.origin.insert(table.origin.end(), p.origin.begin(), p.origin.end());
    }
    return table;
}

inline std::string features_to_csv(const FeatureTable& table) {
    std::string csv = "scene_id,fish_id";
    for (const std::string& name : LengthFeatures::column_names()) csv += "," + name;
    csv += "\n";
    for (std::size_t r = 0; r < table.X.size(); ++r) {
        csv += std::to_string(table.origin[r].first) + "," + std::to_string(table.origin[r].second);
        for (double v : table.X[r]) csv += "," + detail::fmt_double(v);
        csv += "\n";
    }
    return csv;
}

struct SpeciesTrainingSet {
    std::vector<std::vector<double>> descriptors;
    std::vector<int> labels;
};

// Descriptors from truth masks and rendered images; labels are exact.
inline SpeciesTrainingSet collect_species_examples(const PipelineConfig& config,
                                                   const std::vector<SceneTruth>& scenes,
                                                   const std::vector<const Raster*>& images) {
    SpeciesTrainingSet set;
    std::vector<SpeciesTrainingSet> partial(scenes.size());
    parallel_for(scenes.size(), config.threads, [&](std::size_t s) {
        const Raster* image = images[s];
        if (image == nullptr) return;
        for (const FishTruth& f : scenes[s].fish) {
            const Detection d = Detection::make(ObjectClass::Fish, f.mask, 1.0);
            partial[s].descriptors.push_back(
                descriptor_for_detection(*image, d, config.classifier_mask_zero).to_vector());
            partial[s].labels.push_back(f.record.species_id);
        }
    });
    for (SpeciesTrainingSet& p : partial) {
        set.descriptors.insert(set.descriptors.end(), p.descriptors.begin(), p.descriptors.end());
        set.labels.insert(set.labels.end(), p.labels.begin(), p.labels.end());
    }
    return set;
}

// ---------------------------------------------------------------------------
// Dataset-backed runs (streaming, bounded memory)

struct RunOutput {
    ReportData report;
    nlohmann::json report_json;
    std::filesystem::path results_path;
    std::filesystem::path report_path;
    std::int64_t n_corrupt = 0;
};

namespace detail {

inline bool scene_needs_image(const PipelineConfig& config, bool have_species_model) {
    return have_species_model || config.detector == DetectorKind::OracleWithColorMarkers;
}

}  // namespace detail

inline RunOutput run_pipeline(const PipelineConfig& config) {
    const std::filesystem::path dataset_dir(config.dataset_dir);
    const std::filesystem::path manifest = dataset_dir / "manifest.jsonl";
    std::ifstream in(manifest);
    if (!in) throw DataError("cannot open manifest: " + manifest.string());

    std::string line;
    if (!std::getline(in, line)) throw DataError("empty manifest: " + manifest.string());
    manifest_header_from_json(nlohmann::json::parse(line));

    std::optional<ForestModel> length_model;
    if (!config.length_model_path.empty()) {
        std::ifstream f(config.length_model_path);
        if (!f) throw DataError("cannot open length model: " + config.length_model_path);
        length_model = forest_from_json(nlohmann::json::parse(f));
    }
    std::optional<SoftmaxModel> species_model;
    if (!config.species_model_path.empty()) {
        std::ifstream f(config.species_model_path);
        if (!f) throw DataError("cannot open species model: " + config.species_model_path);
        species_model = softmax_from_json(nlohmann::json::parse(f));
    }
    SceneModels models;
    if (length_model) models.length = &*length_model;
    if (species_model) models.species = &*species_model;
    const bool need_image = detail::scene_needs_image(config, species_model.has_value());

    std::filesystem::create_directories(config.report_dir);
    const std::filesystem::path results_path =
        std::filesystem::path(config.report_dir) / "results.jsonl";
    std::ofstream results(results_path, std::ios::binary);
    if (!results) throw IoError("cannot write results: " + results_path.string());
    const std::string config_hash = pipeline_config_hash(config);
    const nlohmann::json results_header = {
        {"format", "scene-results/1"}, {"config_hash", config_hash}, {"seed", config.seed}};
    results << results_header.dump() << "\n";
    std::ofstream detections_out;
    if (config.emit_detections) {
        detections_out.open(std::filesystem::path(config.report_dir) / "detections.jsonl",
                            std::ios::binary);
        if (!detections_out) throw IoError("cannot write detections.jsonl");
    }

    std::vector<SceneResult> all_results;
    std::int64_t n_lines = 0, n_corrupt = 0;
    const std::size_t chunk_size = static_cast<std::size_t>(std::max(16, 8 * config.threads));
    std::vector<std::string> chunk;
    bool done = false;
    while (!done) {
        chunk.clear();
        while (chunk.size() < chunk_size) {
            if (!std::getline(in, line)) {
                done = true;
                break;
            }
            if (line.empty()) continue;
            chunk.push_back(line);
            ++n_lines;
        }
        std::vector<std::optional<SceneResult>> outcomes(chunk.size());
        parallel_for(chunk.size(), config.threads, [&](std::size_t i) {
            try {
                const ManifestScene ms = scene_from_json(nlohmann::json::parse(chunk[i]));
                Raster image;
                const Raster* image_ptr = nullptr;
                if (need_image && !ms.image_path.empty()) {
                    image = read_ppm((dataset_dir / ms.image_path).string());
                    image_ptr = &image;
                }
                outcomes[i] = process_scene(config, ms.scene, image_ptr, models);
            } catch (const Error&) {
                outcomes[i] = std::nullopt;  // corrupt line, tallied below
            } catch (const nlohmann::json::exception&) {
                outcomes[i] = std::nullopt;
            }
        });
        for (std::optional<SceneResult>& o : outcomes) {
            if (!o) {
                ++n_corrupt;
                continue;
            }
            results << scene_result_to_json(*o).dump() << "\n";
            if (detections_out.is_open()) detections_out << o->detections_jsonl;
            all_results.push_back(std::move(*o));
        }
    }
    results.close();
    if (detections_out.is_open()) detections_out.close();
    if (n_lines > 0 && n_corrupt * 10 > n_lines)
        throw DataError("more than 10% of manifest lines are corrupt (" +
                        std::to_string(n_corrupt) + "/" + std::to_string(n_lines) + ")");

    RunOutput out;
    out.n_corrupt = n_corrupt;
    out.results_path = results_path;
    out.report = build_report(all_results, n_corrupt);
    out.report_json = report_to_json(out.report, config_hash, config.seed);
    out.report_path = std::filesystem::path(config.report_dir) / "report.json";
    write_text_file(out.report_path, out.report_json.dump(2) + "\n");
    return out;
}

// Reads a results file back and emits reports plus SVG plots.
struct EvaluateOutput {
    ReportData report;
    nlohmann::json report_json;
};

inline EvaluateOutput evaluate_results(const std::filesystem::path& results_path,
                                       const std::filesystem::path& report_dir,
                                       const std::string& format = "both") {
    std::ifstream in(results_path);
    if (!in) throw DataError("cannot open results: " + results_path.string());
    std::vector<SceneResult> rows;
    std::string line;
    std::uint64_t seed = 0;
    std::string config_hash;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const nlohmann::json j = nlohmann::json::parse(line);
        if (j.contains("format")) {
            if (j.value("format", "") != "scene-results/1")
                throw DataError("unsupported results format");
            seed = j.value("seed", std::uint64_t{0});
            config_hash = j.value("config_hash", "");
            continue;
        }
        rows.push_back(scene_result_from_json(j));
    }
    if (rows.empty()) throw DataError("results file has no rows: " + results_path.string());

    EvaluateOutput out;
    out.report = build_report(rows);
    out.report_json = report_to_json(out.report, config_hash, seed);

    std::filesystem::create_directories(report_dir);
    if (format == "json" || format == "both")
        write_text_file(report_dir / "report.json", out.report_json.dump(2) + "\n");
    if (format == "csv" || format == "both") {
        write_text_file(report_dir / "report.csv", report_to_csv(out.report, config_hash, seed));
        if (out.report.counts)
            write_text_file(report_dir / "confusion.csv", confusion_to_csv(*out.report.counts));
    }
    if (!out.report.pred_lengths.empty()) {
        write_text_file(report_dir / "scatter.svg",
                        scatter_svg(out.report.true_lengths, out.report.pred_lengths));
        write_text_file(report_dir / "length_hist.svg",
                        histogram_svg(out.report.true_lengths, out.report.pred_lengths));
    }
    if (out.report.counts)
        write_text_file(report_dir / "count_heatmap.svg", heatmap_svg(*out.report.counts));
    return out;
}

}  // namespace fishboard
