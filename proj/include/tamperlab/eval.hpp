#pragma once

// Evaluation protocol: per-image inference, per-image metrics, aggregation per
// distortion setting. AUC-degenerate images (single-class ground truth) are
// excluded from localization averages and counted in the report; FAKE recall
// comes from the decoded text alone.

#include <functional>

#include "tamperlab/distort.hpp"
#include "tamperlab/metrics.hpp"
#include "tamperlab/tamper_forge.hpp"

namespace tlab {

struct Prediction {
    ImageF prob;           // per-pixel tamper probability, image resolution
    bool says_fake = false;
};

// The ground truth is passed alongside the image so reference predictors
// (oracle, anti-oracle) are expressible; model predictors must ignore it.
using PredictFn = std::function<Prediction(const ImageRGB&, const ImageF&)>;

Prediction oracle_predict(const ImageRGB& img, const ImageF& gt);
Prediction anti_oracle_predict(const ImageRGB& img, const ImageF& gt);
Prediction constant_predict(const ImageRGB& img, const ImageF& gt);

struct DistortionMetrics {
    std::string label;
    std::string spec;
    double f1_fixed = 0.0;
    double f1_optimal = 0.0;
    double auc = 0.0;
    double recall_fake = 0.0;
    std::size_t n_images = 0;
    std::size_t n_fake = 0;
    std::size_t n_auc_excluded = 0;
};

struct MetricsReport {
    std::string dataset;
    std::vector<DistortionMetrics> rows;

    const DistortionMetrics& row(const std::string& spec) const;
};

MetricsReport evaluate(const PredictFn& model, const DatasetManifest& manifest,
                       const Vocabulary& vocab, const std::vector<DistortionSpec>& specs,
                       double fixed_threshold = 0.5);

void write_report(const std::string& path, const MetricsReport& report);
MetricsReport read_report(const std::string& path);
std::string format_report(const MetricsReport& report);

} // namespace tlab
