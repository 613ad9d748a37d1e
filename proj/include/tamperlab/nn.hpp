#pragma once

// Reusable composite layers: linear, 2-layer MLP, multi-head attention,
// pre-norm transformer block, patch embedding. Modules are plain structs with
// public parameter tensors; construction takes an Rng so initialization is
// part of the deterministic stream contract.

#include <map>
#include <string>

#include "tamperlab/ops.hpp"
#include "tamperlab/rng.hpp"

namespace tlab {

template <typename T>
using ParamMap = std::map<std::string, Tensor<T>>;

struct AttentionConfig {
    std::size_t model_dim = 64;
    std::size_t num_heads = 4;

    std::size_t head_dim() const {
        if (num_heads == 0 || model_dim % num_heads != 0)
            throw TensorError("attention: model_dim " + std::to_string(model_dim) +
                              " not divisible by num_heads " + std::to_string(num_heads));
        return model_dim / num_heads;
    }
};

struct PatchGrid {
    std::size_t patch_size = 8;
    std::size_t grid_h = 8;
    std::size_t grid_w = 8;
    std::size_t embed_dim = 64;

    std::size_t n_patches() const { return grid_h * grid_w; }
};

template <typename T>
Tensor<T> init_uniform(Rng& rng, Shape shape, double limit, bool requires_grad = true) {
    auto t = Tensor<T>::zeros(std::move(shape), requires_grad);
    for (auto& v : t.value()) v = T(rng.uniform(-limit, limit));
    return t;
}

template <typename T>
Tensor<T> init_normal(Rng& rng, Shape shape, double stddev, bool requires_grad = true) {
    auto t = Tensor<T>::zeros(std::move(shape), requires_grad);
    for (auto& v : t.value()) v = T(rng.normal(0.0, stddev));
    return t;
}

template <typename T>
struct Linear {
    Tensor<T> weight; // [in, out]
    Tensor<T> bias;   // [out], undefined when bias-free

    Linear() = default;
    Linear(Rng& rng, std::size_t in, std::size_t out, bool with_bias = true) {
        const double limit = std::sqrt(6.0 / double(in + out));
        weight = init_uniform<T>(rng, {in, out}, limit);
        if (with_bias) bias = Tensor<T>::zeros({out}, true);
    }

    Tensor<T> operator()(const Tensor<T>& x) const {
        const bool vec = x.rank() == 1;
        Tensor<T> h = vec ? reshape(x, {1, x.size()}) : x;
        Tensor<T> y = matmul(h, weight);
        if (bias.defined()) y = y + bias;
        if (vec) y = reshape(y, {weight.shape()[1]});
        return y;
    }

    void collect(const std::string& prefix, ParamMap<T>& out) const {
        out.emplace(prefix + ".weight", weight);
        if (bias.defined()) out.emplace(prefix + ".bias", bias);
    }
};

template <typename T>
struct LayerNorm {
    Tensor<T> gain;
    Tensor<T> bias;

    LayerNorm() = default;
    explicit LayerNorm(std::size_t dim) {
        gain = Tensor<T>::full({dim}, T(1), true);
        bias = Tensor<T>::zeros({dim}, true);
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gain, bias); }

    void collect(const std::string& prefix, ParamMap<T>& out) const {
        out.emplace(prefix + ".gain", gain);
        out.emplace(prefix + ".bias", bias);
    }
};

// Two-layer MLP with ReLU between.
template <typename T>
struct Mlp2 {
    Linear<T> fc1, fc2;

    Mlp2() = default;
    Mlp2(Rng& rng, std::size_t in, std::size_t hidden, std::size_t out)
        : fc1(rng, in, hidden), fc2(rng, hidden, out) {}

    Tensor<T> operator()(const Tensor<T>& x) const { return fc2(relu(fc1(x))); }

    void collect(const std::string& prefix, ParamMap<T>& out) const {
        fc1.collect(prefix + ".fc1", out);
        fc2.collect(prefix + ".fc2", out);
    }
};

// Scaled dot-product attention with per-head split and output projection.
// q_src [nq,d], kv_src [nk,d] -> [nq,d]. Pass attn_probs to obtain a detached
// copy of the softmax matrix [heads,nq,nk].
template <typename T>
struct MultiHeadAttention {
    AttentionConfig cfg;
    Linear<T> wq, wk, wv, wo;

    MultiHeadAttention() = default;
    MultiHeadAttention(Rng& rng, AttentionConfig c)
        : cfg(c),
          wq(rng, c.model_dim, c.model_dim),
          wk(rng, c.model_dim, c.model_dim),
          wv(rng, c.model_dim, c.model_dim),
          wo(rng, c.model_dim, c.model_dim) {
        (void)cfg.head_dim(); // validates divisibility
    }

    Tensor<T> operator()(const Tensor<T>& q_src, const Tensor<T>& kv_src,
                         Tensor<T>* attn_probs = nullptr) const {
        const std::size_t d = cfg.model_dim;
        if (q_src.rank() != 2 || q_src.shape()[1] != d || kv_src.rank() != 2 ||
            kv_src.shape()[1] != d)
            throw TensorError("attention: feature dim mismatch, expected " +
                              std::to_string(d) + ", got " + shape_str(q_src.shape()) +
                              " and " + shape_str(kv_src.shape()));
        const std::size_t nq = q_src.shape()[0], nk = kv_src.shape()[0];
        const std::size_t h = cfg.num_heads, hd = cfg.head_dim();

        auto split = [&](const Tensor<T>& x, std::size_t n) {
            return transpose(reshape(x, {n, h, hd}), {1, 0, 2}); // [h,n,hd]
        };
        Tensor<T> q = split(wq(q_src), nq);
        Tensor<T> k = split(wk(kv_src), nk);
        Tensor<T> v = split(wv(kv_src), nk);

        Tensor<T> scores = matmul(q, transpose(k, {0, 2, 1})) * (1.0 / std::sqrt(double(hd)));
        Tensor<T> probs = softmax(scores, 2);
        if (attn_probs) *attn_probs = detach(probs);
        Tensor<T> ctx = matmul(probs, v);                        // [h,nq,hd]
        Tensor<T> merged = reshape(transpose(ctx, {1, 0, 2}), {nq, d});
        return wo(merged);
    }

    void collect(const std::string& prefix, ParamMap<T>& out) const {
        wq.collect(prefix + ".wq", out);
        wk.collect(prefix + ".wk", out);
        wv.collect(prefix + ".wv", out);
        wo.collect(prefix + ".wo", out);
    }
};

// Pre-norm residual block: x + attn(LN(x)), then x + MLP(LN(x)).
template <typename T>
struct TransformerBlock {
    LayerNorm<T> ln1, ln2;
    MultiHeadAttention<T> attn;
    Mlp2<T> mlp;

    TransformerBlock() = default;
    TransformerBlock(Rng& rng, AttentionConfig cfg, std::size_t mlp_hidden)
        : ln1(cfg.model_dim),
          ln2(cfg.model_dim),
          attn(rng, cfg),
          mlp(rng, cfg.model_dim, mlp_hidden, cfg.model_dim) {}

    Tensor<T> operator()(const Tensor<T>& x) const {
        Tensor<T> n1 = ln1(x);
        Tensor<T> x1 = x + attn(n1, n1);
        return x1 + mlp(ln2(x1));
    }

    void collect(const std::string& prefix, ParamMap<T>& out) const {
        ln1.collect(prefix + ".ln1", out);
        ln2.collect(prefix + ".ln2", out);
        attn.collect(prefix + ".attn", out);
        mlp.collect(prefix + ".mlp", out);
    }
};

// Non-overlapping patches -> learned linear map -> + learned 2-D positional
// embedding. use_pos=false drops the positional term (permutation tests).
template <typename T>
struct PatchEmbed {
    PatchGrid grid;
    std::size_t channels = 3;
    Linear<T> proj;
    Tensor<T> pos; // [n_patches, dim]
    bool use_pos = true;

    PatchEmbed() = default;
    PatchEmbed(Rng& rng, std::size_t channels_, std::size_t image_h, std::size_t image_w,
               std::size_t patch, std::size_t dim, bool with_pos = true)
        : channels(channels_), use_pos(with_pos) {
        if (patch == 0 || image_h % patch != 0 || image_w % patch != 0)
            throw TensorError("patch_embed: image extents (" + std::to_string(image_h) +
                              "," + std::to_string(image_w) + ") not divisible by patch " +
                              std::to_string(patch));
        grid = PatchGrid{patch, image_h / patch, image_w / patch, dim};
        proj = Linear<T>(rng, channels * patch * patch, dim);
        pos = init_normal<T>(rng, {grid.n_patches(), dim}, 0.02);
    }

    Tensor<T> operator()(const Tensor<T>& image) const {
        if (image.rank() != 3 || image.shape()[0] != channels)
            throw TensorError("patch_embed: expected (" + std::to_string(channels) +
                              ",h,w) image, got " + shape_str(image.shape()));
        Tensor<T> tokens = proj(patchify(image, grid.patch_size));
        if (use_pos) tokens = tokens + pos;
        return tokens;
    }

    void collect(const std::string& prefix, ParamMap<T>& out) const {
        proj.collect(prefix + ".proj", out);
        out.emplace(prefix + ".pos", pos);
    }
};

} // namespace tlab
