#pragma once

// Pixel-level localization metrics. F1 at a fixed threshold, optimal F1 over
// a 256-step threshold grid, and rank-based (Mann-Whitney) AUC with midrank
// tie handling. All metrics are computed per image; dataset scores are means
// over images.

#include <optional>
#include <stdexcept>

#include "tamperlab/image.hpp"

namespace tlab {

struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Binarizes pred >= threshold. Conventions: empty gt and empty prediction
// scores 1.0; empty gt with a nonempty prediction scores 0.0.
double f1_at(const ImageF& pred, const ImageF& gt, double threshold);

// Max of f1_at over 256 evenly spaced thresholds k/256, k = 0..255.
double f1_optimal(const ImageF& pred, const ImageF& gt);

// Probability a random positive pixel outranks a random negative one.
// Undefined (nullopt) when gt has no positive or no negative pixel.
std::optional<double> pixel_auc(const ImageF& pred, const ImageF& gt);

} // namespace tlab
