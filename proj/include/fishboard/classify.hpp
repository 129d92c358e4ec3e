// classify.hpp - species classification on hand-crafted appearance features.
//
// A multinomial logistic model over color/shape descriptors supplies the
// calibrated per-class posteriors that label disambiguation needs. Crops are
// rescaled to 152x152 before descriptor extraction.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "fishboard/common.hpp"
#include "fishboard/mask.hpp"
#include "fishboard/raster.hpp"
#include "fishboard/scale.hpp"

namespace fishboard {

inline constexpr int kHueBins = 16;
inline constexpr int kDescriptorDim = kHueBins + 5;
inline constexpr int kCropSize = 152;

struct SpeciesPosterior {
    std::vector<double> probs;
};

// 16-bin hue histogram over mask-interior pixels plus saturation/value means
// and three shape ratios.
struct AppearanceDescriptor {
    std::array<double, kHueBins> hue_histogram{};
    double saturation_mean = 0.0;
    double value_mean = 0.0;
    double bbox_aspect = 0.0;  // width / height of the mask bbox
    double fill_ratio = 0.0;   // mask area / bbox area
    double elongation = 0.0;   // principal length / orthogonal extent

    std::vector<double> to_vector() const {
        std::vector<double> v(hue_histogram.begin(), hue_histogram.end());
        v.push_back(saturation_mean);
        v.push_back(value_mean);
        v.push_back(bbox_aspect);
        v.push_back(fill_ratio);
        v.push_back(elongation);
        return v;
    }
};

inline AppearanceDescriptor appearance_descriptor(const Raster& crop, const Mask& mask) {
    if (mask.empty()) throw EmptyMaskError("appearance_descriptor: empty mask");
    if (mask.width() != crop.width() || mask.height() != crop.height())
        throw DimensionMismatchError("appearance_descriptor: crop/mask dimensions differ");
    AppearanceDescriptor d;
    std::int64_t count = 0;
    mask_for_each_row_span(mask, [&](int y, int xb, int xe) {
        for (int x = xb; x < xe; ++x) {
            const Hsv hsv = rgb_to_hsv(crop.get(x, y));
            int bin = static_cast<int>(hsv.h / (360.0 / kHueBins));
            bin = std::clamp(bin, 0, kHueBins - 1);
            d.hue_histogram[static_cast<std::size_t>(bin)] += 1.0;
            d.saturation_mean += hsv.s;
            d.value_mean += hsv.v;
            ++count;
        }
    });
    for (double& h : d.hue_histogram) h /= static_cast<double>(count);
    d.saturation_mean /= static_cast<double>(count);
    d.value_mean /= static_cast<double>(count);
    const BBox box = mask_bbox(mask);
    d.bbox_aspect = static_cast<double>(box.width()) / static_cast<double>(box.height());
    d.fill_ratio = static_cast<double>(mask.area()) / static_cast<double>(box.area());
    d.elongation = mask_principal_length(mask) / mask_orthogonal_extent(mask);
    return d;
}

// Descriptor for one detected fish in a full image: bbox crop (optionally
// zeroed outside the mask), rescaled to the fixed inference size.
inline AppearanceDescriptor descriptor_for_detection(const Raster& image, const Detection& d,
                                                     bool zero_outside_mask = true) {
    const Raster crop = crop_fish(image, d, zero_outside_mask);
    const Mask local = crop_mask(d);
    return appearance_descriptor(rescale_nearest(crop, kCropSize, kCropSize),
                                 rescale_mask_nearest(local, kCropSize, kCropSize));
}

// ---------------------------------------------------------------------------
// Multinomial logistic regression

struct SoftmaxParams {
    double learning_rate = 0.15;
    double l2 = 1e-4;
    int epochs = 400;
    std::uint64_t seed = 1;
    int n_classes = 0;  // 0 = infer from labels
};

struct SoftmaxModel {
    int n_classes = 0;
    int dim = 0;
    std::vector<double> weights;  // n_classes x (dim + 1), bias last
    std::vector<double> feature_mean;
    std::vector<double> feature_std;
    int constant_class = -1;  // set when training data held a single class
    double final_loss = 0.0;
    std::vector<double> epoch_losses;

    double weight(int c, int j) const {
        return weights[static_cast<std::size_t>(c) * (dim + 1) + j];
    }
};

inline std::vector<double> softmax(const std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

namespace detail {

inline std::vector<double> standardize(const SoftmaxModel& model, const std::vector<double>& x) {
    std::vector<double> z(x.size());
    for (std::size_t j = 0; j < x.size(); ++j)
        z[j] = (x[j] - model.feature_mean[j]) / model.feature_std[j];
    return z;
}

// Cross-entropy with L2 on non-bias weights; also fills the gradient when a
// non-null pointer is given. Kept separate from the training loop so tests
// can difference it numerically.
inline double softmax_loss(const std::vector<double>& W, int n_classes, int dim,
                           const std::vector<std::vector<double>>& Z,
                           const std::vector<int>& labels, double l2,
                           std::vector<double>* grad) {
    const int stride = dim + 1;
    const double n = static_cast<double>(Z.size());
    if (grad) grad->assign(W.size(), 0.0);
    double loss = 0.0;
    std::vector<double> logits(static_cast<std::size_t>(n_classes));
    for (std::size_t i = 0; i < Z.size(); ++i) {
        for (int c = 0; c < n_classes; ++c) {
            double v = W[static_cast<std::size_t>(c) * stride + dim];
            for (int j = 0; j < dim; ++j)
                v += W[static_cast<std::size_t>(c) * stride + j] * Z[i][static_cast<std::size_t>(j)];
            logits[static_cast<std::size_t>(c)] = v;
        }
        const std::vector<double> p = softmax(logits);
        loss -= std::log(std::max(p[static_cast<std::size_t>(labels[i])], 1e-300)) / n;
        if (grad) {
            for (int c = 0; c < n_classes; ++c) {
                const double delta = (p[static_cast<std::size_t>(c)] -
                                      (labels[i] == c ? 1.0 : 0.0)) / n;
                double* g = grad->data() + static_cast<std::size_t>(c) * stride;
                for (int j = 0; j < dim; ++j) g[j] += delta * Z[i][static_cast<std::size_t>(j)];
                g[dim] += delta;
            }
        }
    }
    for (int c = 0; c < n_classes; ++c)
        for (int j = 0; j < dim; ++j) {
            const double w = W[static_cast<std::size_t>(c) * stride + j];
            loss += 0.5 * l2 * w * w;
            if (grad) (*grad)[static_cast<std::size_t>(c) * stride + j] += l2 * w;
        }
    return loss;
}

}  // namespace detail

inline SoftmaxModel fit_softmax(const std::vector<std::vector<double>>& descriptors,
                                const std::vector<int>& labels, const SoftmaxParams& params) {
    if (descriptors.empty()) throw DataError("fit_softmax: empty data");
    if (descriptors.size() != labels.size())
        throw DataError("fit_softmax: descriptor/label count mismatch");

    SoftmaxModel model;
    model.dim = static_cast<int>(descriptors[0].size());
    int max_label = 0;
    for (int l : labels) {
        if (l < 0) throw DataError("fit_softmax: negative label");
        max_label = std::max(max_label, l);
    }
    model.n_classes = params.n_classes > 0 ? params.n_classes : max_label + 1;
    if (max_label >= model.n_classes) throw DataError("fit_softmax: label out of range");

    model.feature_mean.assign(static_cast<std::size_t>(model.dim), 0.0);
    model.feature_std.assign(static_cast<std::size_t>(model.dim), 0.0);
    for (const auto& x : descriptors)
        for (int j = 0; j < model.dim; ++j) model.feature_mean[static_cast<std::size_t>(j)] += x[static_cast<std::size_t>(j)];
    for (double& m : model.feature_mean) m /= static_cast<double>(descriptors.size());
    for (const auto& x : descriptors)
        for (int j = 0; j < model.dim; ++j) {
            const double d = x[static_cast<std::size_t>(j)] - model.feature_mean[static_cast<std::size_t>(j)];
            model.feature_std[static_cast<std::size_t>(j)] += d * d;
        }
    for (double& s : model.feature_std)
        s = std::max(std::sqrt(s / static_cast<double>(descriptors.size())), 1e-9);

    model.weights.assign(static_cast<std::size_t>(model.n_classes) * (model.dim + 1), 0.0);

    const bool single_class =
        std::all_of(labels.begin(), labels.end(), [&](int l) { return l == labels[0]; });
    if (single_class) {
        model.constant_class = labels[0];
        model.final_loss = 0.0;
        return model;
    }

    std::vector<std::vector<double>> Z;
    Z.reserve(descriptors.size());
    for (const auto& x : descriptors) Z.push_back(detail::standardize(model, x));

    std::vector<double> grad;
    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        const double loss = detail::softmax_loss(model.weights, model.n_classes, model.dim, Z,
                                                 labels, params.l2, &grad);
        model.epoch_losses.push_back(loss);
        for (std::size_t i = 0; i < model.weights.size(); ++i)
            model.weights[i] -= params.learning_rate * grad[i];
    }
    model.final_loss = detail::softmax_loss(model.weights, model.n_classes, model.dim, Z,
                                            labels, params.l2, nullptr);
    return model;
}

inline SpeciesPosterior predict_posterior(const SoftmaxModel& model,
                                          const std::vector<double>& descriptor) {
    if (static_cast<int>(descriptor.size()) != model.dim)
        throw DimensionMismatchError("predict_posterior: descriptor dimension mismatch");
    SpeciesPosterior out;
    if (model.constant_class >= 0) {
        out.probs.assign(static_cast<std::size_t>(model.n_classes), 0.0);
        out.probs[static_cast<std::size_t>(model.constant_class)] = 1.0;
        return out;
    }
    const std::vector<double> z = detail::standardize(model, descriptor);
    std::vector<double> logits(static_cast<std::size_t>(model.n_classes));
    for (int c = 0; c < model.n_classes; ++c) {
        double v = model.weight(c, model.dim);
        for (int j = 0; j < model.dim; ++j) v += model.weight(c, j) * z[static_cast<std::size_t>(j)];
        logits[static_cast<std::size_t>(c)] = v;
    }
    out.probs = softmax(logits);
    return out;
}

// True when the truth class ranks in the top k, ties resolved toward the
// lower class index.
inline bool topk_hit(const SpeciesPosterior& posterior, int truth, int k) {
    const int S = static_cast<int>(posterior.probs.size());
    if (truth < 0 || truth >= S) throw DataError("topk_hit: truth class out of range");
    if (k < 1 || k > S) throw ConfigError("topk_hit: k out of range");
    int better = 0;
    const double pt = posterior.probs[static_cast<std::size_t>(truth)];
    for (int c = 0; c < S; ++c) {
        if (c == truth) continue;
        const double pc = posterior.probs[static_cast<std::size_t>(c)];
        if (pc > pt || (pc == pt && c < truth)) ++better;
    }
    return better < k;
}

// ---------------------------------------------------------------------------
// Versioned JSON model files

inline nlohmann::json softmax_to_json(const SoftmaxModel& m) {
    return {{"format", "species-softmax/1"},
            {"n_classes", m.n_classes},
            {"dim", m.dim},
            {"weights", m.weights},
            {"feature_mean", m.feature_mean},
            {"feature_std", m.feature_std},
            {"constant_class", m.constant_class},
            {"final_loss", m.final_loss}};
}

inline SoftmaxModel softmax_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "species-softmax/1")
        throw DataError("unsupported classifier model format");
    SoftmaxModel m;
    m.n_classes = j.at("n_classes").get<int>();
    m.dim = j.at("dim").get<int>();
    m.weights = j.at("weights").get<std::vector<double>>();
    m.feature_mean = j.at("feature_mean").get<std::vector<double>>();
    m.feature_std = j.at("feature_std").get<std::vector<double>>();
    m.constant_class = j.value("constant_class", -1);
    m.final_loss = j.value("final_loss", 0.0);
    if (m.weights.size() != static_cast<std::size_t>(m.n_classes) * (m.dim + 1))
        throw DataError("classifier model weight shape mismatch");
    return m;
}

}  // namespace fishboard
