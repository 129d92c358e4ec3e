// report.hpp - aggregation of per-scene results into reports and plots.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fishboard/common.hpp"
#include "fishboard/curate.hpp"
#include "fishboard/evalkit.hpp"

namespace fishboard {

// One fish detection's outcome within a scene.
struct FishResult {
    double pred_cm = 0.0;
    std::optional<double> truth_cm;  // set when matched to a truth fish
    std::optional<double> iou;
    std::optional<int> species_truth;
    std::optional<bool> top1;
    std::optional<bool> top5;
    std::optional<int> label_index;  // from disambiguation
};

struct SceneResult {
    std::uint32_t scene_id = 0;
    bool discarded_no_fiducial = false;
    int true_count = 0;
    int detected_count = 0;
    std::optional<double> scale_cm_per_px;
    std::vector<FishResult> fish;
    std::vector<std::pair<ObjectClass, double>> marker_ious;
    std::optional<AssignMethod> assignment_method;
    std::optional<double> assignment_loglik;
    std::optional<bool> assignment_correct;
    bool count_mismatch = false;
    std::string detections_jsonl;  // filled only when detection emission is on
};

inline nlohmann::json scene_result_to_json(const SceneResult& r) {
    nlohmann::json fish = nlohmann::json::array();
    for (const FishResult& f : r.fish) {
        nlohmann::json fj = {{"pred_cm", f.pred_cm}};
        fj["truth_cm"] = f.truth_cm ? nlohmann::json(*f.truth_cm) : nlohmann::json();
        fj["iou"] = f.iou ? nlohmann::json(*f.iou) : nlohmann::json();
        fj["species_truth"] = f.species_truth ? nlohmann::json(*f.species_truth) : nlohmann::json();
        fj["top1"] = f.top1 ? nlohmann::json(*f.top1) : nlohmann::json();
        fj["top5"] = f.top5 ? nlohmann::json(*f.top5) : nlohmann::json();
        fj["label_index"] = f.label_index ? nlohmann::json(*f.label_index) : nlohmann::json();
        fish.push_back(std::move(fj));
    }
    nlohmann::json markers = nlohmann::json::array();
    for (const auto& [cls, iou] : r.marker_ious)
        markers.push_back({{"class", to_string(cls)}, {"iou", iou}});
    nlohmann::json j = {{"scene_id", r.scene_id},
                        {"discarded", r.discarded_no_fiducial},
                        {"true_count", r.true_count},
                        {"detected_count", r.detected_count},
                        {"fish", std::move(fish)},
                        {"markers", std::move(markers)},
                        {"count_mismatch", r.count_mismatch}};
    j["scale_cm_per_px"] = r.scale_cm_per_px ? nlohmann::json(*r.scale_cm_per_px) : nlohmann::json();
    if (r.assignment_method) {
        j["assignment"] = {{"method", to_string(*r.assignment_method)},
                           {"log_likelihood", *r.assignment_loglik}};
        if (r.assignment_correct) j["assignment"]["correct"] = *r.assignment_correct;
    }
    return j;
}

inline SceneResult scene_result_from_json(const nlohmann::json& j) {
    SceneResult r;
    r.scene_id = j.at("scene_id").get<std::uint32_t>();
    r.discarded_no_fiducial = j.value("discarded", false);
    r.true_count = j.at("true_count").get<int>();
    r.detected_count = j.at("detected_count").get<int>();
    r.count_mismatch = j.value("count_mismatch", false);
    if (j.contains("scale_cm_per_px") && !j.at("scale_cm_per_px").is_null())
        r.scale_cm_per_px = j.at("scale_cm_per_px").get<double>();
    for (const nlohmann::json& fj : j.at("fish")) {
        FishResult f;
        f.pred_cm = fj.at("pred_cm").get<double>();
        if (!fj.at("truth_cm").is_null()) f.truth_cm = fj.at("truth_cm").get<double>();
        if (!fj.at("iou").is_null()) f.iou = fj.at("iou").get<double>();
        if (!fj.at("species_truth").is_null()) f.species_truth = fj.at("species_truth").get<int>();
        if (!fj.at("top1").is_null()) f.top1 = fj.at("top1").get<bool>();
        if (!fj.at("top5").is_null()) f.top5 = fj.at("top5").get<bool>();
        if (!fj.at("label_index").is_null()) f.label_index = fj.at("label_index").get<int>();
        r.fish.push_back(f);
    }
    for (const nlohmann::json& mj : j.at("markers"))
        r.marker_ious.emplace_back(object_class_from_string(mj.at("class").get<std::string>()),
                                   mj.at("iou").get<double>());
    if (j.contains("assignment")) {
        const nlohmann::json& aj = j.at("assignment");
        const std::string m = aj.at("method").get<std::string>();
        r.assignment_method = m == "trivial_small" ? AssignMethod::TrivialSmall
                              : m == "exhaustive"  ? AssignMethod::Exhaustive
                                                   : AssignMethod::OptimalAssignment;
        r.assignment_loglik = aj.at("log_likelihood").get<double>();
        if (aj.contains("correct")) r.assignment_correct = aj.at("correct").get<bool>();
    }
    return r;
}

// ---------------------------------------------------------------------------
// Aggregated report

struct ReportData {
    std::int64_t n_scenes = 0;
    std::int64_t n_discarded = 0;
    std::int64_t n_corrupt = 0;
    std::int64_t n_count_mismatch = 0;
    std::optional<CountConfusion> counts;
    std::map<std::string, IouSummary> iou;
    std::optional<RegressionReport> regression;
    std::optional<double> ks;
    std::optional<double> top1_rate;
    std::optional<double> top5_rate;
    std::int64_t n_assigned_scenes = 0;
    std::optional<double> assignment_recovery_rate;
    std::vector<double> pred_lengths;
    std::vector<double> true_lengths;
};

inline ReportData build_report(const std::vector<SceneResult>& rows, std::int64_t n_corrupt = 0) {
    ReportData out;
    out.n_corrupt = n_corrupt;
    std::vector<int> true_counts, det_counts;
    std::vector<std::pair<ObjectClass, double>> matched;
    std::int64_t top1_hits = 0, top5_hits = 0, class_total = 0;
    std::int64_t assigned_correct = 0, assigned_total = 0;
    for (const SceneResult& r : rows) {
        ++out.n_scenes;
        if (r.discarded_no_fiducial) {
            ++out.n_discarded;
            continue;
        }
        if (r.count_mismatch) ++out.n_count_mismatch;
        true_counts.push_back(r.true_count);
        det_counts.push_back(r.detected_count);
        for (const auto& [cls, iou] : r.marker_ious) matched.emplace_back(cls, iou);
        for (const FishResult& f : r.fish) {
            if (f.iou) matched.emplace_back(ObjectClass::Fish, *f.iou);
            if (f.truth_cm) {
                out.pred_lengths.push_back(f.pred_cm);
                out.true_lengths.push_back(*f.truth_cm);
            }
            if (f.top1) {
                ++class_total;
                top1_hits += *f.top1 ? 1 : 0;
                top5_hits += (f.top5 && *f.top5) ? 1 : 0;
            }
        }
        if (r.assignment_correct) {
            ++assigned_total;
            assigned_correct += *r.assignment_correct ? 1 : 0;
        }
    }
    if (!true_counts.empty()) out.counts = count_confusion(true_counts, det_counts);
    if (!matched.empty()) out.iou = iou_summary_per_class(matched);
    if (out.pred_lengths.size() >= 2) {
        try {
            out.regression = regression_metrics(out.pred_lengths, out.true_lengths);
        } catch (const DataError&) {
            // zero truth variance; leave regression unset
        }
        out.ks = ks_distance(out.pred_lengths, out.true_lengths);
    }
    if (class_total > 0) {
        out.top1_rate = static_cast<double>(top1_hits) / static_cast<double>(class_total);
        out.top5_rate = static_cast<double>(top5_hits) / static_cast<double>(class_total);
    }
    out.n_assigned_scenes = assigned_total;
    if (assigned_total > 0)
        out.assignment_recovery_rate =
            static_cast<double>(assigned_correct) / static_cast<double>(assigned_total);
    return out;
}

inline nlohmann::json report_to_json(const ReportData& r, const std::string& config_hash,
                                     std::uint64_t seed) {
    nlohmann::json j = {{"config_hash", config_hash},
                        {"seed", seed},
                        {"n_scenes", r.n_scenes},
                        {"n_discarded_no_fiducial", r.n_discarded},
                        {"n_corrupt_lines", r.n_corrupt},
                        {"n_count_mismatch", r.n_count_mismatch}};
    if (r.counts) {
        j["counts"] = {{"agreement_rate", r.counts->agreement_rate},
                       {"over_rate", r.counts->over_rate},
                       {"under_rate", r.counts->under_rate},
                       {"matrix", r.counts->matrix}};
    }
    for (const auto& [cls, s] : r.iou) {
        j["iou"][cls] = {{"count", s.count}, {"mean", s.mean}, {"min", s.min},
                         {"q1", s.q1},       {"median", s.median}, {"q3", s.q3},
                         {"max", s.max}};
    }
    if (r.regression) {
        j["regression"] = {{"mae_cm", r.regression->mae_cm},
                           {"r2", r.regression->r2},
                           {"mean_relative_error", r.regression->mean_relative_error},
                           {"n_fish", r.pred_lengths.size()},
                           {"decile_edges_cm", r.regression->decile_edges_cm},
                           {"decile_mae_cm", r.regression->decile_mae_cm},
                           {"decile_counts", r.regression->decile_counts}};
        j["regression"]["ks_distance"] = *r.ks;
    }
    if (r.top1_rate) {
        j["classification"] = {{"top1_rate", *r.top1_rate}, {"top5_rate", *r.top5_rate}};
    }
    if (r.assignment_recovery_rate) {
        j["assignment"] = {{"n_scenes", r.n_assigned_scenes},
                           {"recovery_rate", *r.assignment_recovery_rate}};
    }
    return j;
}

// ---------------------------------------------------------------------------
// CSV emission. One flat metric file plus the confusion matrix and deciles.

namespace detail {
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
}  // namespace detail

inline std::string report_to_csv(const ReportData& r, const std::string& config_hash,
                                 std::uint64_t seed) {
    std::string csv = "metric,value\n";
    csv += "config_hash," + config_hash + "\n";
    csv += "seed," + std::to_string(seed) + "\n";
    csv += "n_scenes," + std::to_string(r.n_scenes) + "\n";
    csv += "n_discarded_no_fiducial," + std::to_string(r.n_discarded) + "\n";
    csv += "n_corrupt_lines," + std::to_string(r.n_corrupt) + "\n";
    csv += "n_count_mismatch," + std::to_string(r.n_count_mismatch) + "\n";
    if (r.counts) {
        csv += "count_agreement_rate," + detail::fmt_double(r.counts->agreement_rate) + "\n";
        csv += "count_over_rate," + detail::fmt_double(r.counts->over_rate) + "\n";
        csv += "count_under_rate," + detail::fmt_double(r.counts->under_rate) + "\n";
    }
    for (const auto& [cls, s] : r.iou) {
        csv += "iou_mean_" + cls + "," + detail::fmt_double(s.mean) + "\n";
        csv += "iou_median_" + cls + "," + detail::fmt_double(s.median) + "\n";
    }
    if (r.regression) {
        csv += "regression_mae_cm," + detail::fmt_double(r.regression->mae_cm) + "\n";
        csv += "regression_r2," + detail::fmt_double(r.regression->r2) + "\n";
        csv += "regression_mean_relative_error," +
               detail::fmt_double(r.regression->mean_relative_error) + "\n";
        csv += "regression_ks_distance," + detail::fmt_double(*r.ks) + "\n";
    }
    if (r.top1_rate) {
        csv += "classification_top1_rate," + detail::fmt_double(*r.top1_rate) + "\n";
        csv += "classification_top5_rate," + detail::fmt_double(*r.top5_rate) + "\n";
    }
    if (r.assignment_recovery_rate) {
        csv += "assignment_recovery_rate," + detail::fmt_double(*r.assignment_recovery_rate) + "\n";
    }
    return csv;
}

inline std::string confusion_to_csv(const CountConfusion& c) {
    std::string csv = "true_count";
    for (std::size_t d = 0; d < c.matrix.size(); ++d)
        csv += ",detected_" + std::to_string(d);
    csv += "\n";
    for (std::size_t t = 0; t < c.matrix.size(); ++t) {
        csv += std::to_string(t);
        for (std::size_t d = 0; d < c.matrix.size(); ++d)
            csv += "," + std::to_string(c.matrix[t][d]);
        csv += "\n";
    }
    return csv;
}

// ---------------------------------------------------------------------------
// SVG plots. Fixed-precision formatting keeps output byte-stable.

namespace detail {

inline std::string svg_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

inline void svg_header(std::string& s, int w, int h) {
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) +
         "\" height=\"" + std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " +
         std::to_string(h) + "\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

}  // namespace detail

// Scatter of predicted vs true lengths with the y = x diagonal.
inline std::string scatter_svg(const std::vector<double>& truth, const std::vector<double>& pred) {
    const int W = 480, H = 480, M = 40;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (double v : truth) { lo = std::min(lo, v); hi = std::max(hi, v); }
    for (double v : pred) { lo = std::min(lo, v); hi = std::max(hi, v); }
    if (!(hi > lo)) { lo -= 1.0; hi += 1.0; }
    auto sx = [&](double v) { return M + (v - lo) / (hi - lo) * (W - 2 * M); };
    auto sy = [&](double v) { return H - M - (v - lo) / (hi - lo) * (H - 2 * M); };
    std::string s;
    detail::svg_header(s, W, H);
    s += "<line x1=\"" + detail::svg_num(sx(lo)) + "\" y1=\"" + detail::svg_num(sy(lo)) +
         "\" x2=\"" + detail::svg_num(sx(hi)) + "\" y2=\"" + detail::svg_num(sy(hi)) +
         "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";
    for (std::size_t i = 0; i < truth.size(); ++i) {
        s += "<circle cx=\"" + detail::svg_num(sx(truth[i])) + "\" cy=\"" +
             detail::svg_num(sy(pred[i])) + "\" r=\"1.8\" fill=\"#2266bb\" fill-opacity=\"0.5\"/>\n";
    }
    s += "<text x=\"" + std::to_string(W / 2) + "\" y=\"" + std::to_string(H - 8) +
         "\" font-size=\"12\" text-anchor=\"middle\">true length (cm)</text>\n";
    s += "<text x=\"12\" y=\"" + std::to_string(H / 2) +
         "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 12 " +
         std::to_string(H / 2) + ")\">predicted length (cm)</text>\n";
    s += "</svg>\n";
    return s;
}

// Overlaid histograms of true and predicted length distributions.
inline std::string histogram_svg(const std::vector<double>& truth,
                                 const std::vector<double>& pred, int bins = 30) {
    const int W = 520, H = 360, M = 40;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (double v : truth) { lo = std::min(lo, v); hi = std::max(hi, v); }
    for (double v : pred) { lo = std::min(lo, v); hi = std::max(hi, v); }
    if (!(hi > lo)) { lo -= 1.0; hi += 1.0; }
    std::vector<int> ht(static_cast<std::size_t>(bins), 0), hp(static_cast<std::size_t>(bins), 0);
    auto bin_of = [&](double v) {
        return std::min(bins - 1, static_cast<int>((v - lo) / (hi - lo) * bins));
    };
    for (double v : truth) ht[static_cast<std::size_t>(bin_of(v))]++;
    for (double v : pred) hp[static_cast<std::size_t>(bin_of(v))]++;
    int peak = 1;
    for (int b = 0; b < bins; ++b)
        peak = std::max({peak, ht[static_cast<std::size_t>(b)], hp[static_cast<std::size_t>(b)]});
    const double bw = static_cast<double>(W - 2 * M) / bins;
    std::string s;
    detail::svg_header(s, W, H);
    for (int b = 0; b < bins; ++b) {
        const double x = M + b * bw;
        const double th = static_cast<double>(ht[static_cast<std::size_t>(b)]) / peak * (H - 2 * M);
        const double ph = static_cast<double>(hp[static_cast<std::size_t>(b)]) / peak * (H - 2 * M);
        s += "<rect x=\"" + detail::svg_num(x) + "\" y=\"" + detail::svg_num(H - M - th) +
             "\" width=\"" + detail::svg_num(bw) + "\" height=\"" + detail::svg_num(th) +
             "\" fill=\"#3366cc\" fill-opacity=\"0.45\"/>\n";
        s += "<rect x=\"" + detail::svg_num(x) + "\" y=\"" + detail::svg_num(H - M - ph) +
             "\" width=\"" + detail::svg_num(bw) + "\" height=\"" + detail::svg_num(ph) +
             "\" fill=\"#cc3333\" fill-opacity=\"0.45\"/>\n";
    }
    s += "<text x=\"" + std::to_string(M) + "\" y=\"16\" font-size=\"12\" fill=\"#3366cc\">true</text>\n";
    s += "<text x=\"" + std::to_string(M + 50) + "\" y=\"16\" font-size=\"12\" fill=\"#cc3333\">predicted</text>\n";
    s += "</svg>\n";
    return s;
}

// Count confusion heat map, annotated with cell counts.
inline std::string heatmap_svg(const CountConfusion& c) {
    const int n = static_cast<int>(c.matrix.size());
    const int cell = 34, M = 50;
    const int W = M + n * cell + 20, H = M + n * cell + 20;
    std::int64_t peak = 1;
    for (const auto& row : c.matrix)
        for (std::int64_t v : row) peak = std::max(peak, v);
    std::string s;
    detail::svg_header(s, W, H);
    for (int t = 0; t < n; ++t)
        for (int d = 0; d < n; ++d) {
            const std::int64_t v = c.matrix[static_cast<std::size_t>(t)][static_cast<std::size_t>(d)];
            const int shade = 255 - static_cast<int>(215.0 * v / static_cast<double>(peak));
            s += "<rect x=\"" + std::to_string(M + d * cell) + "\" y=\"" +
                 std::to_string(M + t * cell) + "\" width=\"" + std::to_string(cell) +
                 "\" height=\"" + std::to_string(cell) + "\" fill=\"rgb(" + std::to_string(shade) +
                 "," + std::to_string(shade) + ",255)\" stroke=\"#ccc\"/>\n";
            if (v > 0) {
                s += "<text x=\"" + std::to_string(M + d * cell + cell / 2) + "\" y=\"" +
                     std::to_string(M + t * cell + cell / 2 + 4) +
                     "\" font-size=\"10\" text-anchor=\"middle\">" + std::to_string(v) + "</text>\n";
            }
        }
    for (int i = 0; i < n; ++i) {
        s += "<text x=\"" + std::to_string(M + i * cell + cell / 2) + "\" y=\"" +
             std::to_string(M - 8) + "\" font-size=\"10\" text-anchor=\"middle\">" +
             std::to_string(i) + "</text>\n";
        s += "<text x=\"" + std::to_string(M - 12) + "\" y=\"" +
             std::to_string(M + i * cell + cell / 2 + 4) +
             "\" font-size=\"10\" text-anchor=\"middle\">" + std::to_string(i) + "</text>\n";
    }
    s += "<text x=\"" + std::to_string(M + n * cell / 2) + "\" y=\"14\" font-size=\"12\" "
         "text-anchor=\"middle\">detected count</text>\n";
    s += "</svg>\n";
    return s;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write: " + path.string());
    out << content;
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace fishboard
