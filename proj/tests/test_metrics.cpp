#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "tamperlab/metrics.hpp"
#include "tamperlab/rng.hpp"

using namespace tlab;

// ---------------------------------------------------------------------------
// independent brute-force oracles

static double f1_oracle(const ImageF& pred, const ImageF& gt, double thr) {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool p = double(pred.data[i]) >= thr;
        const bool g = gt.data[i] != 0.0f;
        tp += p && g;
        fp += p && !g;
        fn += !p && g;
        tn += !p && !g;
    }
    if (tp + fn == 0) return fp == 0 ? 1.0 : 0.0;
    if (tp == 0) return 0.0;
    return 2.0 * double(tp) / double(2 * tp + fp + fn);
}

static double f1_optimal_oracle_grid(const ImageF& pred, const ImageF& gt) {
    double best = 0;
    for (int k = 0; k < 256; ++k)
        best = std::max(best, f1_oracle(pred, gt, double(k) / 256.0));
    return best;
}

static double auc_pair_oracle(const ImageF& pred, const ImageF& gt) {
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        if (gt.data[i] == 0.0f) continue;
        for (std::size_t j = 0; j < pred.data.size(); ++j) {
            if (gt.data[j] != 0.0f) continue;
            pairs += 1;
            if (pred.data[i] > pred.data[j]) wins += 1;
            else if (pred.data[i] == pred.data[j]) wins += 0.5;
        }
    }
    return wins / pairs;
}

static ImageF random_mask(Rng& rng, std::size_t h, std::size_t w, double p) {
    ImageF m(h, w);
    for (auto& v : m.data) v = rng.chance(p) ? 1.0f : 0.0f;
    return m;
}

static ImageF random_pred(Rng& rng, std::size_t h, std::size_t w, bool quantized) {
    ImageF m(h, w);
    for (auto& v : m.data) {
        const double u = rng.uniform();
        v = quantized ? float(std::floor(u * 128.0) / 128.0) : float(u);
    }
    return m;
}

TEST_CASE("f1_at: exact prediction, complement, hand case, conventions") {
    Rng rng(1);
    auto gt = random_mask(rng, 8, 8, 0.4);
    ImageF exact = gt;
    for (double t : {0.25, 0.5, 0.75, 1.0}) CHECK(f1_at(exact, gt, t) == 1.0);

    ImageF comp(8, 8);
    for (std::size_t i = 0; i < 64; ++i) comp.data[i] = 1.0f - gt.data[i];
    CHECK(f1_at(comp, gt, 0.5) == 0.0);

    ImageF pred(2, 2);
    pred.data = {0.9f, 0.2f, 0.6f, 0.1f};
    ImageF g22(2, 2);
    g22.data = {1, 0, 0, 0};
    CHECK(f1_at(pred, g22, 0.5) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

    // empty-gt conventions
    ImageF empty(2, 2);
    ImageF none(2, 2);
    CHECK(f1_at(none, empty, 0.5) == 1.0);
    ImageF some(2, 2);
    some.data = {0.9f, 0, 0, 0};
    CHECK(f1_at(some, empty, 0.5) == 0.0);

    CHECK_THROWS_AS(f1_at(ImageF(2, 2), ImageF(2, 3), 0.5), MetricError);
    ImageF notbin(2, 2);
    notbin.data = {0.5f, 0, 0, 0};
    CHECK_THROWS_AS(f1_at(ImageF(2, 2), notbin, 0.5), MetricError);
}

TEST_CASE("f1_optimal: separable case, dominance, grid-oracle equivalence") {
    Rng rng(2);
    // monotone-separable: all gt pixels scored above all others
    ImageF gt = random_mask(rng, 8, 8, 0.3);
    ImageF pred(8, 8);
    for (std::size_t i = 0; i < 64; ++i)
        pred.data[i] = gt.data[i] != 0.0f ? float(0.7 + 0.2 * rng.uniform())
                                          : float(0.1 + 0.2 * rng.uniform());
    CHECK(f1_optimal(pred, gt) == 1.0);

    for (int trial = 0; trial < 50; ++trial) {
        auto g = random_mask(rng, 8, 8, rng.uniform(0.1, 0.6));
        auto p = random_pred(rng, 8, 8, trial % 2 == 0);
        CHECK(f1_optimal(p, g) >= f1_at(p, g, 0.5) - 1e-12);
        CHECK(f1_optimal(p, g) ==
              doctest::Approx(f1_optimal_oracle_grid(p, g)).epsilon(1e-12));
    }

    // exhaustive-threshold oracle on quantized predictions: exact agreement
    for (int trial = 0; trial < 30; ++trial) {
        auto g = random_mask(rng, 8, 8, 0.35);
        auto p = random_pred(rng, 8, 8, true); // multiples of 1/128
        std::set<float> values(p.data.begin(), p.data.end());
        double best = f1_oracle(p, g, 2.0); // empty prediction
        for (float v : values) best = std::max(best, f1_oracle(p, g, double(v)));
        CHECK(f1_optimal(p, g) == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("pixel_auc: closed cases and the pair-count oracle") {
    // perfect separation
    ImageF gt(2, 2);
    gt.data = {1, 1, 0, 0};
    ImageF hi(2, 2);
    hi.data = {0.9f, 0.8f, 0.2f, 0.1f};
    CHECK(*pixel_auc(hi, gt) == 1.0);

    // constant prediction: all ties, midrank -> 0.5
    ImageF flat(2, 2);
    flat.data = {0.4f, 0.4f, 0.4f, 0.4f};
    CHECK(*pixel_auc(flat, gt) == 0.5);

    // 4-pixel hand case: AUC = 3/4
    ImageF p4(1, 4);
    p4.data = {0.1f, 0.4f, 0.35f, 0.8f};
    ImageF g4(1, 4);
    g4.data = {0, 0, 1, 1};
    CHECK(*pixel_auc(p4, g4) == doctest::Approx(0.75).epsilon(1e-15));

    // degenerate ground truths are excluded, not errored
    ImageF ones(2, 2);
    ones.data = {1, 1, 1, 1};
    CHECK_FALSE(pixel_auc(flat, ImageF(2, 2)).has_value());
    CHECK_FALSE(pixel_auc(flat, ones).has_value());

    Rng rng(3);
    for (int trial = 0; trial < 60; ++trial) {
        auto g = random_mask(rng, 8, 8, rng.uniform(0.1, 0.7));
        bool pos = false, neg = false;
        for (float v : g.data) (v != 0.0f ? pos : neg) = true;
        if (!pos || !neg) continue;
        auto p = random_pred(rng, 8, 8, trial % 3 == 0);
        CHECK(*pixel_auc(p, g) == doctest::Approx(auc_pair_oracle(p, g)).epsilon(1e-12));
    }
}

TEST_CASE("pixel_auc is invariant under strictly monotone transforms") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        auto g = random_mask(rng, 8, 8, 0.4);
        bool pos = false, neg = false;
        for (float v : g.data) (v != 0.0f ? pos : neg) = true;
        if (!pos || !neg) continue;
        auto p = random_pred(rng, 8, 8, false);
        ImageF cubed(8, 8);
        for (std::size_t i = 0; i < 64; ++i)
            cubed.data[i] = p.data[i] * p.data[i] * p.data[i];
        CHECK(*pixel_auc(p, g) == doctest::Approx(*pixel_auc(cubed, g)).epsilon(1e-12));
    }
}
