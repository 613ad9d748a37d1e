#pragma once

// Trace encoder: a noise-enhancement front end of constrained 5x5
// convolutions with a residual 1x1 projection, followed by a small ViT over
// patch tokens. The kernel constraint (center tap 1, all taps summing to 0)
// makes each filter a high-pass residual predictor that suppresses image
// content; it is re-projected after every optimizer step.

#include <vector>

#include "tamperlab/nn.hpp"

namespace tlab {

template <typename T>
struct TraceFeatureMap {
    Tensor<T> features; // [n_patches, d]
    PatchGrid grid;
};

inline constexpr std::size_t kConstrainedKernel = 5;

// Center tap := 1; the other 24 taps are rescaled so they sum to -1. A
// near-zero off-center sum falls back to the uniform -1/24 fill. Operates on
// raw values (outside any tape); idempotent.
template <typename T>
void project_constraints(Tensor<T>& kernel) {
    if (kernel.rank() != 4 || kernel.shape()[2] != kConstrainedKernel ||
        kernel.shape()[3] != kConstrainedKernel)
        throw TensorError("project_constraints: expected (co,ci,5,5), got " +
                          shape_str(kernel.shape()));
    const std::size_t co = kernel.shape()[0], ci = kernel.shape()[1];
    const std::size_t k2 = kConstrainedKernel * kConstrainedKernel;
    const std::size_t center = k2 / 2;
    T* p = kernel.data();
    for (std::size_t s = 0; s < co * ci; ++s) {
        T* tap = p + s * k2;
        tap[center] = T(1);
        T sum = T(0);
        for (std::size_t i = 0; i < k2; ++i)
            if (i != center) sum += tap[i];
        if (std::abs(double(sum)) < 1e-8) {
            for (std::size_t i = 0; i < k2; ++i)
                if (i != center) tap[i] = T(-1.0 / 24.0);
        } else {
            const T scale = T(-1) / sum;
            for (std::size_t i = 0; i < k2; ++i)
                if (i != center) tap[i] *= scale;
        }
    }
}

// Constraint residuals for monitoring: worst |center-1| and |sum| over slices.
template <typename T>
std::pair<double, double> constraint_residuals(const Tensor<T>& kernel) {
    const std::size_t co = kernel.shape()[0], ci = kernel.shape()[1];
    const std::size_t k2 = kConstrainedKernel * kConstrainedKernel;
    const std::size_t center = k2 / 2;
    const T* p = kernel.data();
    double worst_center = 0, worst_sum = 0;
    for (std::size_t s = 0; s < co * ci; ++s) {
        const T* tap = p + s * k2;
        double sum = 0;
        for (std::size_t i = 0; i < k2; ++i) sum += double(tap[i]);
        worst_center = std::max(worst_center, std::abs(double(tap[center]) - 1.0));
        worst_sum = std::max(worst_sum, std::abs(sum));
    }
    return {worst_center, worst_sum};
}

// Bias-free 5x5 convolution with replicate padding, so a constant image maps
// to exactly zero at the borders too. Off-center taps start near -1/24, which
// keeps the -1/s rescale in project_constraints well conditioned.
template <typename T>
struct ConstrainedConv {
    Tensor<T> kernel; // [co, ci, 5, 5]

    ConstrainedConv() = default;
    ConstrainedConv(Rng& rng, std::size_t ci, std::size_t co) {
        kernel = Tensor<T>::zeros({co, ci, kConstrainedKernel, kConstrainedKernel}, true);
        for (auto& v : kernel.value()) v = T(-1.0 / 24.0 + rng.normal(0.0, 0.02));
        project_constraints(kernel);
    }

    Tensor<T> operator()(const Tensor<T>& x) const {
        return conv2d(x, kernel, 1, (kConstrainedKernel - 1) / 2, PadMode::Replicate);
    }

    void collect(const std::string& prefix, ParamMap<T>& out) const {
        out.emplace(prefix + ".kernel", kernel);
    }
};

// 1x1 channel-lifting convolution with bias.
template <typename T>
struct Conv1x1 {
    Tensor<T> kernel; // [co, ci, 1, 1]
    Tensor<T> bias;   // [co]

    Conv1x1() = default;
    Conv1x1(Rng& rng, std::size_t ci, std::size_t co) {
        const double limit = std::sqrt(6.0 / double(ci + co));
        kernel = init_uniform<T>(rng, {co, ci, 1, 1}, limit);
        bias = Tensor<T>::zeros({co}, true);
    }

    Tensor<T> operator()(const Tensor<T>& x) const {
        return conv2d(x, kernel, 1, 0) + reshape(bias, {bias.size(), 1, 1});
    }

    void collect(const std::string& prefix, ParamMap<T>& out) const {
        out.emplace(prefix + ".kernel", kernel);
        out.emplace(prefix + ".bias", bias);
    }
};

// out = proj(x) + cc2(relu(cc1(x))). The constrained stack annihilates
// constant inputs, so flat regions pass through as the projection alone.
template <typename T>
struct NoiseEnhance {
    Conv1x1<T> proj;
    ConstrainedConv<T> cc1, cc2;

    NoiseEnhance() = default;
    NoiseEnhance(Rng& rng, std::size_t in_channels, std::size_t channels)
        : proj(rng, in_channels, channels),
          cc1(rng, in_channels, channels),
          cc2(rng, channels, channels) {}

    Tensor<T> operator()(const Tensor<T>& image) const {
        return proj(image) + cc2(relu(cc1(image)));
    }

    Tensor<T> constrained_response(const Tensor<T>& image) const {
        return cc2(relu(cc1(image)));
    }

    void collect(const std::string& prefix, ParamMap<T>& out) const {
        proj.collect(prefix + ".proj", out);
        cc1.collect(prefix + ".cc1", out);
        cc2.collect(prefix + ".cc2", out);
    }
};

template <typename T>
struct TraceEncoder {
    NoiseEnhance<T> enhance;
    PatchEmbed<T> embed;
    std::vector<TransformerBlock<T>> blocks;

    TraceEncoder() = default;
    TraceEncoder(Rng& rng, std::size_t image_size, std::size_t patch, std::size_t dim,
                 std::size_t heads, std::size_t mlp_hidden, std::size_t channels = 16,
                 std::size_t depth = 4, bool with_pos = true)
        : enhance(rng, 3, channels),
          embed(rng, channels, image_size, image_size, patch, dim, with_pos) {
        blocks.reserve(depth);
        for (std::size_t i = 0; i < depth; ++i)
            blocks.emplace_back(rng, AttentionConfig{dim, heads}, mlp_hidden);
    }

    TraceFeatureMap<T> operator()(const Tensor<T>& image) const {
        if (image.rank() != 3 || image.shape()[0] != 3)
            throw TensorError("trace encoder: expected (3,h,w) image, got " +
                              shape_str(image.shape()));
        Tensor<T> x = embed(enhance(image));
        for (const auto& b : blocks) x = b(x);
        return {x, embed.grid};
    }

    // All constrained kernels, for the post-step projection.
    std::vector<Tensor<T>> constrained_kernels() {
        return {enhance.cc1.kernel, enhance.cc2.kernel};
    }

    void collect(const std::string& prefix, ParamMap<T>& out) const {
        enhance.collect(prefix + ".enhance", out);
        embed.collect(prefix + ".embed", out);
        for (std::size_t i = 0; i < blocks.size(); ++i)
            blocks[i].collect(prefix + ".block" + std::to_string(i), out);
    }
};

} // namespace tlab
