#include "tamperlab/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace tlab {

namespace {

void check_shapes(const ImageF& pred, const ImageF& gt, const char* op) {
    if (pred.h != gt.h || pred.w != gt.w)
        throw MetricError(std::string(op) + ": shape mismatch (" + std::to_string(pred.h) +
                          "," + std::to_string(pred.w) + ") vs (" + std::to_string(gt.h) +
                          "," + std::to_string(gt.w) + ")");
    for (float g : gt.data)
        if (g != 0.0f && g != 1.0f)
            throw MetricError(std::string(op) + ": ground truth must be binary");
}

} // namespace

double f1_at(const ImageF& pred, const ImageF& gt, double threshold) {
    check_shapes(pred, gt, "f1_at");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool p = double(pred.data[i]) >= threshold;
        const bool g = gt.data[i] != 0.0f;
        if (p && g) ++tp;
        else if (p && !g) ++fp;
        else if (!p && g) ++fn;
    }
    if (tp + fn == 0) // empty ground truth
        return fp == 0 ? 1.0 : 0.0;
    if (tp == 0) return 0.0;
    return 2.0 * double(tp) / double(2 * tp + fp + fn);
}

double f1_optimal(const ImageF& pred, const ImageF& gt) {
    check_shapes(pred, gt, "f1_optimal");
    // one pass over sorted predictions instead of 256 full scans
    const std::size_t n = pred.data.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return pred.data[a] > pred.data[b]; });
    std::size_t total_pos = 0;
    for (float g : gt.data)
        if (g != 0.0f) ++total_pos;

    double best = 0.0;
    std::size_t k = 0; // predictions strictly above the current threshold
    std::size_t tp = 0;
    // thresholds descend so predicted-positive sets grow monotonically
    for (int t = 255; t >= 0; --t) {
        const double thr = double(t) / 256.0;
        while (k < n && double(pred.data[idx[k]]) >= thr) {
            if (gt.data[idx[k]] != 0.0f) ++tp;
            ++k;
        }
        double f1;
        if (total_pos == 0) f1 = k == 0 ? 1.0 : 0.0;
        else if (tp == 0) f1 = 0.0;
        else f1 = 2.0 * double(tp) / double(k + total_pos); // 2TP+FP+FN = k + P
        best = std::max(best, f1);
    }
    return best;
}

std::optional<double> pixel_auc(const ImageF& pred, const ImageF& gt) {
    check_shapes(pred, gt, "pixel_auc");
    const std::size_t n = pred.data.size();
    std::size_t pos = 0;
    for (float g : gt.data)
        if (g != 0.0f) ++pos;
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) return std::nullopt;

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return pred.data[a] < pred.data[b]; });

    // midranks over tie groups
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && pred.data[idx[j]] == pred.data[idx[i]]) ++j;
        const double midrank = 0.5 * double(i + 1 + j); // ranks are 1-based
        for (std::size_t k = i; k < j; ++k)
            if (gt.data[idx[k]] != 0.0f) rank_sum_pos += midrank;
        i = j;
    }
    const double p = double(pos);
    return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * double(neg));
}

} // namespace tlab
