#pragma once

// Central finite-difference gradient checker. Runs at 64-bit precision (the
// engine's gradient-check mode); the forward callable must rebuild the graph
// from the given parameter tensors on every call.

#include <algorithm>
#include <cmath>
#include <vector>

#include "tamperlab/ops.hpp"
#include "tamperlab/rng.hpp"
#include "tamperlab/tensor.hpp"

namespace testsup {

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

// Returns the max element-wise relative error between analytic gradients and
// central differences over every entry of every parameter.
template <typename F>
double grad_check(F&& forward, std::vector<tlab::Tensor<double>> params,
                  double step = 1e-5) {
    for (auto& p : params) {
        p.set_requires_grad(true);
        p.zero_grad();
    }
    {
        tlab::Tape<double> tape;
        tlab::Tape<double>::Scope scope(tape);
        tlab::Tensor<double> loss = forward();
        tape.backward(loss);
    }
    std::vector<std::vector<double>> analytic;
    for (auto& p : params) {
        p.ensure_grad();
        analytic.emplace_back(p.grad().begin(), p.grad().end());
    }
    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double orig = p.data()[i];
            const double h = step * std::max(1.0, std::abs(orig));
            p.data()[i] = orig + h;
            const double fp = forward().item();
            p.data()[i] = orig - h;
            const double fm = forward().item();
            p.data()[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            worst = std::max(worst, rel_err(analytic[pi][i], numeric));
        }
    }
    return worst;
}

// Random tensor helper for oracle tests.
inline tlab::Tensor<double> random_tensor(tlab::Rng& rng, tlab::Shape shape,
                                          double lo = -1.0, double hi = 1.0) {
    auto t = tlab::Tensor<double>::zeros(std::move(shape));
    for (auto& v : t.value()) v = rng.uniform(lo, hi);
    return t;
}

// Weighted sum against fixed random coefficients: reduces any tensor to a
// scalar while keeping every output element in play for the gradient check.
inline tlab::Tensor<double> weighted_sum(const tlab::Tensor<double>& x, std::uint64_t seed) {
    tlab::Rng rng(seed);
    auto w = tlab::Tensor<double>::zeros(x.shape());
    for (auto& v : w.value()) v = rng.uniform(-1.0, 1.0);
    return tlab::sum(x * w);
}

} // namespace testsup
