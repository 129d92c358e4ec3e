// fishboard - batch pipeline for fish measurement on fiducial-marker boards.
//
// Subcommands: generate, train-length, train-species, run, evaluate,
// disambiguate. A JSON config file supplies defaults; command-line flags
// override it; FISHBOARD_REPORT_DIR overrides the report directory only.
// Exit codes: 0 success, 2 configuration error, 3 data error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fishboard/dataset.hpp"
#include "fishboard/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fishboard::PipelineConfig load_base_config(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            std::ifstream in(argv[i + 1]);
            if (!in) throw fishboard::ConfigError(std::string("cannot open config: ") + argv[i + 1]);
            return fishboard::pipeline_config_from_json(json::parse(in));
        }
    }
    return {};
}

void apply_env_overrides(fishboard::PipelineConfig& config) {
    if (const char* dir = std::getenv("FISHBOARD_REPORT_DIR")) config.report_dir = dir;
}

fishboard::SoftmaxModel read_softmax(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw fishboard::DataError("cannot open species model: " + path);
    return fishboard::softmax_from_json(json::parse(in));
}

std::vector<const fishboard::Raster*> load_images(const fs::path& dataset_dir,
                                                  const fishboard::LoadedDataset& ds,
                                                  std::vector<fishboard::Raster>& storage,
                                                  int threads) {
    storage.resize(ds.scenes.size());
    fishboard::parallel_for(ds.scenes.size(), threads, [&](std::size_t i) {
        if (!ds.scenes[i].image_path.empty())
            storage[i] = fishboard::read_ppm((dataset_dir / ds.scenes[i].image_path).string());
    });
    std::vector<const fishboard::Raster*> ptrs;
    for (const auto& img : storage) ptrs.push_back(img.width() > 0 ? &img : nullptr);
    return ptrs;
}

int cmd_train_length(fishboard::PipelineConfig config, const std::string& out_path) {
    const fishboard::LoadedDataset ds =
        fishboard::load_dataset(fs::path(config.dataset_dir) / "manifest.jsonl");
    std::vector<fishboard::SceneTruth> scenes;
    for (const auto& ms : ds.scenes) scenes.push_back(ms.scene);
    std::vector<fishboard::Raster> storage;
    std::vector<const fishboard::Raster*> images;
    if (config.detector == fishboard::DetectorKind::OracleWithColorMarkers)
        images = load_images(config.dataset_dir, ds, storage, config.threads);

    const fishboard::FeatureTable table =
        fishboard::collect_length_features(config, scenes, images);
    if (table.X.empty()) throw fishboard::DataError("no usable fish features in dataset");
    const fishboard::ForestModel model =
        fishboard::fit_forest(table.X, table.y, config.forest, config.threads);
    fishboard::write_text_file(out_path, fishboard::forest_to_json(model).dump() + "\n");
    fishboard::write_text_file(out_path + ".features.csv", fishboard::features_to_csv(table));

    const fishboard::CvReport cv =
        fishboard::kfold_cv(table.X, table.y, 5, config.forest, config.seed);
    const json cv_json = {{"pooled_mae_cm", cv.pooled_mae},
                          {"pooled_r2", cv.pooled_r2},
                          {"fold_mae_cm", cv.fold_mae},
                          {"fold_r2", cv.fold_r2},
                          {"n_rows", table.X.size()}};
    fishboard::write_text_file(out_path + ".cv.json", cv_json.dump(2) + "\n");
    std::cout << "trained length model on " << table.X.size() << " fish -> " << out_path << "\n";
    std::cout << "5-fold CV: MAE " << cv.pooled_mae << " cm, R2 " << cv.pooled_r2 << "\n";
    return 0;
}

int cmd_train_species(fishboard::PipelineConfig config, const std::string& out_path) {
    const fishboard::LoadedDataset ds =
        fishboard::load_dataset(fs::path(config.dataset_dir) / "manifest.jsonl");
    std::vector<fishboard::SceneTruth> scenes;
    for (const auto& ms : ds.scenes) scenes.push_back(ms.scene);
    std::vector<fishboard::Raster> storage;
    const std::vector<const fishboard::Raster*> images =
        load_images(config.dataset_dir, ds, storage, config.threads);

    fishboard::SpeciesTrainingSet set =
        fishboard::collect_species_examples(config, scenes, images);
    if (set.descriptors.empty()) throw fishboard::DataError("no fish crops in dataset");
    if (config.classifier.n_classes == 0)
        config.classifier.n_classes = static_cast<int>(ds.header.generator.species.size());
    const fishboard::SoftmaxModel model =
        fishboard::fit_softmax(set.descriptors, set.labels, config.classifier);
    fishboard::write_text_file(out_path, fishboard::softmax_to_json(model).dump() + "\n");

    int hits = 0;
    for (std::size_t i = 0; i < set.descriptors.size(); ++i)
        hits += fishboard::topk_hit(fishboard::predict_posterior(model, set.descriptors[i]),
                                    set.labels[i], 1)
                    ? 1
                    : 0;
    std::cout << "trained species model on " << set.descriptors.size() << " crops -> "
              << out_path << "\n";
    std::cout << "training top-1 "
              << static_cast<double>(hits) / static_cast<double>(set.descriptors.size())
              << ", final loss " << model.final_loss << "\n";
    return 0;
}

int cmd_disambiguate(const fishboard::PipelineConfig& config, const std::string& out_path) {
    const fishboard::LoadedDataset ds =
        fishboard::load_dataset(fs::path(config.dataset_dir) / "manifest.jsonl");
    const fishboard::SoftmaxModel species = read_softmax(config.species_model_path);
    std::vector<fishboard::Raster> storage;
    const std::vector<const fishboard::Raster*> images =
        load_images(config.dataset_dir, ds, storage, config.threads);

    std::vector<std::string> lines(ds.scenes.size());
    fishboard::parallel_for(ds.scenes.size(), config.threads, [&](std::size_t s) {
        const fishboard::SceneTruth& scene = ds.scenes[s].scene;
        if (scene.fish.empty()) return;
        const fishboard::Raster* image = images[s];
        if (image == nullptr) return;
        const auto detections = fishboard::run_detector(config, scene, image);
        std::vector<fishboard::Detection> fish_dets;
        for (const auto& d : detections)
            if (d.object_class == fishboard::ObjectClass::Fish) fish_dets.push_back(d);

        std::vector<fishboard::Detection> truth_dets;
        for (const auto& f : scene.fish)
            truth_dets.push_back(
                fishboard::Detection::make(fishboard::ObjectClass::Fish, f.mask, 1.0));
        const auto truth_order = fishboard::canonical_order(truth_dets);
        std::vector<int> labels;
        for (std::size_t i : truth_order) labels.push_back(scene.fish[i].record.species_id);

        json j = {{"scene_id", scene.scene_id}};
        if (labels.size() != fish_dets.size()) {
            j["error"] = "count_mismatch";
            j["n_labels"] = labels.size();
            j["n_fish"] = fish_dets.size();
            lines[s] = j.dump();
            return;
        }
        std::vector<std::vector<double>> posteriors;
        for (const auto& d : fish_dets)
            posteriors.push_back(
                fishboard::predict_posterior(
                    species, fishboard::descriptor_for_detection(*image, d,
                                                                 config.classifier_mask_zero)
                                 .to_vector())
                    .probs);
        const fishboard::Assignment a =
            fishboard::assign_labels(posteriors, labels, fishboard::canonical_order(fish_dets),
                                     config.curation_epsilon);
        json pairs = json::array();
        for (std::size_t i = 0; i < a.perm.size(); ++i)
            pairs.push_back({{"label_index", i}, {"fish_id", a.perm[i]}});
        j["method"] = to_string(a.method);
        j["log_likelihood"] = a.log_likelihood;
        j["pairs"] = pairs;
        lines[s] = j.dump();
    });

    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw fishboard::IoError("cannot write: " + out_path);
    for (const std::string& l : lines)
        if (!l.empty()) out << l << "\n";
    std::cout << "wrote assignments -> " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        fishboard::PipelineConfig config = load_base_config(argc, argv);

        CLI::App app{"fish measurement pipeline on fiducial-marker boards"};
        app.require_subcommand(1);
        app.fallthrough();  // global flags are accepted after the subcommand too
        std::string config_path;
        app.add_option("--config", config_path, "JSON config file");
        app.add_option("--threads", config.threads, "worker threads");
        app.add_option("--seed", config.seed, "master seed");

        auto* gen = app.add_subcommand("generate", "generate a synthetic dataset");
        std::string gen_out = "dataset";
        int gen_scenes = 100;
        bool gen_no_images = false;
        gen->add_option("--out", gen_out, "output directory");
        gen->add_option("--scenes", gen_scenes, "number of scenes");
        gen->add_flag("--no-images", gen_no_images, "skip image rendering");
        gen->add_option("--min-fish", config.generator.min_fish);
        gen->add_option("--max-fish", config.generator.max_fish);
        gen->add_option("--min-length", config.generator.min_length_cm);
        gen->add_option("--max-length", config.generator.max_length_cm);
        gen->add_option("--jitter", config.generator.perspective_jitter);
        gen->add_option("--occlusion", config.generator.occlusion_prob);
        gen->add_option("--image-width", config.generator.image_width);
        gen->add_option("--image-height", config.generator.image_height);
        gen->add_option("--noise-amp", config.generator.lighting.noise_amp);
        gen->add_option("--brightness-jitter", config.generator.lighting.brightness_jitter);
        gen->add_flag("--distinct-species", config.generator.distinct_species);

        std::string detector_name;
        auto add_noise_flags = [&](CLI::App* cmd) {
            cmd->add_option("--fish-iou", config.noise.target_fish_iou);
            cmd->add_option("--marker-iou", config.noise.target_marker_iou);
            cmd->add_option("--miss-prob", config.noise.miss_prob);
            cmd->add_option("--spurious-prob", config.noise.spurious_prob);
            cmd->add_option("--confidence-noise", config.noise.confidence_noise);
            cmd->add_option("--detector", detector_name,
                            "detector kind: oracle | oracle+color-markers");
        };

        auto* tl = app.add_subcommand("train-length", "train the length regressor");
        std::string tl_out = "length_model.json";
        tl->add_option("--dataset", config.dataset_dir)->required();
        tl->add_option("--out", tl_out);
        tl->add_option("--trees", config.forest.n_trees);
        tl->add_option("--max-depth", config.forest.max_depth);
        tl->add_option("--min-leaf", config.forest.min_leaf);
        tl->add_option("--features-per-split", config.forest.features_per_split);
        add_noise_flags(tl);

        auto* ts = app.add_subcommand("train-species", "train the species classifier");
        std::string ts_out = "species_model.json";
        ts->add_option("--dataset", config.dataset_dir)->required();
        ts->add_option("--out", ts_out);
        ts->add_option("--learning-rate", config.classifier.learning_rate);
        ts->add_option("--epochs", config.classifier.epochs);
        ts->add_option("--l2", config.classifier.l2);
        ts->add_option("--classes", config.classifier.n_classes);

        auto* run = app.add_subcommand("run", "run the pipeline over a dataset");
        bool run_train = false;
        run->add_option("--dataset", config.dataset_dir)->required();
        run->add_option("--length-model", config.length_model_path);
        run->add_option("--species-model", config.species_model_path);
        run->add_option("--report-dir", config.report_dir);
        run->add_flag("--train", run_train, "train models on this dataset before running");
        run->add_flag("--emit-detections", config.emit_detections,
                      "write raw detections.jsonl alongside the results");
        add_noise_flags(run);

        auto* ev = app.add_subcommand("evaluate", "re-aggregate a results file");
        std::string ev_results, ev_format = "both";
        ev->add_option("--results", ev_results)->required();
        ev->add_option("--report-dir", config.report_dir);
        ev->add_option("--format", ev_format)->check(CLI::IsMember({"json", "csv", "both"}));

        auto* dis = app.add_subcommand("disambiguate", "match annotation lists to detections");
        std::string dis_out = "assignments.jsonl";
        dis->add_option("--dataset", config.dataset_dir)->required();
        dis->add_option("--species-model", config.species_model_path)->required();
        dis->add_option("--out", dis_out);
        add_noise_flags(dis);

        try {
            app.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e);
            return code == 0 ? 0 : 2;
        }
        if (!detector_name.empty())
            config.detector = fishboard::detector_kind_from_string(detector_name);
        apply_env_overrides(config);
        config.noise.validate();

        if (gen->parsed()) {
            const fishboard::DatasetInfo info = fishboard::generate_dataset(
                config.generator, gen_scenes, config.seed, gen_out, config.threads,
                !gen_no_images);
            std::cout << "manifest: " << info.manifest_path.string() << "\n";
            std::cout << "scenes: " << info.n_scenes << ", fish: " << info.total_fish << "\n";
            return 0;
        }
        if (tl->parsed()) return cmd_train_length(config, tl_out);
        if (ts->parsed()) return cmd_train_species(config, ts_out);
        if (run->parsed()) {
            if (run_train) {
                std::filesystem::create_directories(config.report_dir);
                const std::string lm =
                    (fs::path(config.report_dir) / "length_model.json").string();
                const std::string sm =
                    (fs::path(config.report_dir) / "species_model.json").string();
                cmd_train_length(config, lm);
                cmd_train_species(config, sm);
                config.length_model_path = lm;
                config.species_model_path = sm;
            }
            const fishboard::RunOutput out = fishboard::run_pipeline(config);
            fishboard::evaluate_results(out.results_path, config.report_dir, "both");
            std::cout << "results: " << out.results_path.string() << "\n";
            std::cout << "report:  " << out.report_path.string() << "\n";
            if (out.report.counts)
                std::cout << "count agreement: " << out.report.counts->agreement_rate << "\n";
            if (out.report.regression)
                std::cout << "length MAE: " << out.report.regression->mae_cm << " cm, R2 "
                          << out.report.regression->r2 << "\n";
            std::cout << "discarded (no fiducial): " << out.report.n_discarded << "\n";
            return 0;
        }
        if (ev->parsed()) {
            fishboard::evaluate_results(ev_results, config.report_dir, ev_format);
            std::cout << "report dir: " << config.report_dir << "\n";
            return 0;
        }
        if (dis->parsed()) return cmd_disambiguate(config, dis_out);
        return 2;
    } catch (const fishboard::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const fishboard::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const fishboard::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const fishboard::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
}
