#pragma once

// Frozen content backbone: patch embedding plus a small ViT whose parameters
// come from a fixed seed (42) and are never updated. Immutable after
// construction; the checksum pins frozen-ness across training runs.

#include <vector>

#include "tamperlab/nn.hpp"

namespace tlab {

template <typename T>
struct ContentFeatureMap {
    Tensor<T> features; // [n_patches, d]
    PatchGrid grid;
};

inline constexpr std::uint64_t kBackboneSeed = 42;

template <typename T>
struct ContentBackbone {
    PatchEmbed<T> embed;
    std::vector<TransformerBlock<T>> blocks;

    ContentBackbone() = default;
    ContentBackbone(std::size_t image_size, std::size_t patch, std::size_t dim,
                    std::size_t heads, std::size_t mlp_hidden, std::size_t depth = 4,
                    bool with_pos = true) {
        Rng rng(kBackboneSeed);
        embed = PatchEmbed<T>(rng, 3, image_size, image_size, patch, dim, with_pos);
        blocks.reserve(depth);
        for (std::size_t i = 0; i < depth; ++i)
            blocks.emplace_back(rng, AttentionConfig{dim, heads}, mlp_hidden);
        ParamMap<T> params;
        collect("backbone", params);
        for (auto& [name, t] : params) t.set_requires_grad(false);
    }

    ContentFeatureMap<T> operator()(const Tensor<T>& image) const {
        Tensor<T> x = embed(image);
        for (const auto& b : blocks) x = b(x);
        return {x, embed.grid};
    }

    void collect(const std::string& prefix, ParamMap<T>& out) const {
        embed.collect(prefix + ".embed", out);
        for (std::size_t i = 0; i < blocks.size(); ++i)
            blocks[i].collect(prefix + ".block" + std::to_string(i), out);
    }

    // Bit-exact fingerprint of every parameter buffer.
    std::uint64_t checksum() const {
        ParamMap<T> params;
        collect("backbone", params);
        std::uint64_t h = 0xCBF29CE484222325ull;
        for (const auto& [name, t] : params) {
            h ^= fnv1a(name.data(), name.size());
            h *= 0x100000001B3ull;
            h ^= fnv1a(t.data(), t.size() * sizeof(T));
            h *= 0x100000001B3ull;
        }
        return h;
    }
};

} // namespace tlab
