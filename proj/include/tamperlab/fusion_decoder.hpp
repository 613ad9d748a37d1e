#pragma once

// Vision decoder. The segmentation prompt embedding plus a few learned
// auxiliary tokens pass through three fusion layers; layer 1 attends the
// trace embedding, layers 2-3 the (carried-through) content embedding. Each
// layer runs four steps in order: token self-attention, token->embedding
// cross-attention, a point-wise MLP on tokens, and embedding->token
// cross-attention that updates the embedding. Positional embeddings are
// re-added to the spatial embedding at steps 2 and 4. The mask head reshapes
// the final content embedding onto the grid, upsamples it to image resolution
// with two transposed convolutions, and dots each pixel feature with a
// projection of the final seg token.

#include <array>
#include <string>
#include <vector>

#include "tamperlab/content_backbone.hpp"
#include "tamperlab/nn.hpp"
#include "tamperlab/trace_encoder.hpp"

namespace tlab {

// Test instrumentation: decode() appends one event per attention/MLP step.
struct FusionTrace {
    std::vector<std::string> events;
};

enum class DecoderVariant { Full, SingleCross };

template <typename T>
struct FusionLayer {
    LayerNorm<T> ln_self, ln_q2, ln_e2, ln_q3, ln_e4, ln_t4;
    MultiHeadAttention<T> self_attn, cross_t2e, cross_e2t;
    Mlp2<T> token_mlp;

    FusionLayer() = default;
    FusionLayer(Rng& rng, AttentionConfig cfg, std::size_t mlp_hidden)
        : ln_self(cfg.model_dim),
          ln_q2(cfg.model_dim),
          ln_e2(cfg.model_dim),
          ln_q3(cfg.model_dim),
          ln_e4(cfg.model_dim),
          ln_t4(cfg.model_dim),
          self_attn(rng, cfg),
          cross_t2e(rng, cfg),
          cross_e2t(rng, cfg),
          token_mlp(rng, cfg.model_dim, mlp_hidden, cfg.model_dim) {}

    // (tokens [n_tok,d], emb [n_patch,d], pos [n_patch,d]) -> updated pair
    std::pair<Tensor<T>, Tensor<T>> operator()(const Tensor<T>& tokens_in,
                                               const Tensor<T>& emb_in,
                                               const Tensor<T>& pos,
                                               const std::string& tag = "",
                                               FusionTrace* probe = nullptr) const {
        auto note = [&](const char* step) {
            if (probe) probe->events.push_back(tag + step);
        };
        Tensor<T> t = tokens_in;
        Tensor<T> e = emb_in;

        note("self_attn");
        {
            Tensor<T> n = ln_self(t);
            t = t + self_attn(n, n);
        }
        note("cross_token_to_embedding");
        t = t + cross_t2e(ln_q2(t), ln_e2(e) + pos);
        note("mlp");
        t = t + token_mlp(ln_q3(t));
        note("cross_embedding_to_token");
        e = e + cross_e2t(ln_e4(e) + pos, ln_t4(t));
        return {t, e};
    }

    void collect(const std::string& prefix, ParamMap<T>& out) const {
        ln_self.collect(prefix + ".ln_self", out);
        ln_q2.collect(prefix + ".ln_q2", out);
        ln_e2.collect(prefix + ".ln_e2", out);
        ln_q3.collect(prefix + ".ln_q3", out);
        ln_e4.collect(prefix + ".ln_e4", out);
        ln_t4.collect(prefix + ".ln_t4", out);
        self_attn.collect(prefix + ".self_attn", out);
        cross_t2e.collect(prefix + ".cross_t2e", out);
        cross_e2t.collect(prefix + ".cross_e2t", out);
        token_mlp.collect(prefix + ".token_mlp", out);
    }
};

template <typename T>
struct MaskLogits {
    Tensor<T> logits; // [h, w] at image resolution
};

template <typename T>
struct FusionDecoder {
    AttentionConfig cfg;
    PatchGrid grid;
    std::size_t n_aux = 3;
    DecoderVariant variant = DecoderVariant::Full;
    bool use_pos = true;

    Tensor<T> aux_tokens; // [n_aux, d]
    Tensor<T> pos;        // [n_patches, d], shared by trace and content paths
    std::array<FusionLayer<T>, 3> layers;
    Tensor<T> up1_kernel; // [d, mid, s1, s1]
    Tensor<T> up2_kernel; // [mid, feat, s2, s2]
    std::size_t up1_stride = 4, up2_stride = 2;
    Mlp2<T> head_mlp;     // d -> d -> feat

    FusionDecoder() = default;
    FusionDecoder(Rng& rng, AttentionConfig c, PatchGrid g, std::size_t mlp_hidden,
                  std::size_t upsample_mid = 32, std::size_t mask_feat = 8,
                  std::size_t aux = 3, DecoderVariant var = DecoderVariant::Full,
                  bool with_pos = true)
        : cfg(c), grid(g), n_aux(aux), variant(var), use_pos(with_pos) {
        const std::size_t d = c.model_dim;
        aux_tokens = init_normal<T>(rng, {n_aux, d}, 0.02);
        // spatial addressing through the token bottleneck needs positions that
        // are visible next to LN-scale activations from step one
        pos = init_normal<T>(rng, {g.n_patches(), d}, 0.5);
        up1_stride = g.patch_size > 1 ? g.patch_size / 2 : 1;
        up2_stride = g.patch_size / up1_stride;
        if (up1_stride * up2_stride != g.patch_size)
            throw TensorError("decoder: patch size " + std::to_string(g.patch_size) +
                              " not factorable into two upsample stages");
        const double l1 = std::sqrt(6.0 / double(d + upsample_mid));
        const double l2 = std::sqrt(6.0 / double(upsample_mid + mask_feat));
        up1_kernel = init_uniform<T>(rng, {d, upsample_mid, up1_stride, up1_stride}, l1);
        up2_kernel = init_uniform<T>(rng, {upsample_mid, mask_feat, up2_stride, up2_stride}, l2);
        layers = {FusionLayer<T>(rng, c, mlp_hidden), FusionLayer<T>(rng, c, mlp_hidden),
                  FusionLayer<T>(rng, c, mlp_hidden)};
        head_mlp = Mlp2<T>(rng, d, d, mask_feat);
    }

    MaskLogits<T> decode(const ContentFeatureMap<T>& f_c, const TraceFeatureMap<T>& f_t,
                         const Tensor<T>& h_seg, FusionTrace* probe = nullptr,
                         Tensor<T>* seg_token_out = nullptr) const {
        if (f_c.grid.n_patches() != f_t.grid.n_patches() ||
            f_c.grid.patch_size != f_t.grid.patch_size)
            throw TensorError("decoder: content and trace grids are not congruent");
        if (h_seg.size() != cfg.model_dim)
            throw TensorError("decoder: seg embedding dim " + std::to_string(h_seg.size()) +
                              " != model_dim " + std::to_string(cfg.model_dim));
        const std::size_t d = cfg.model_dim;
        Tensor<T> p = use_pos ? pos : Tensor<T>::zeros({grid.n_patches(), d});
        Tensor<T> tokens = concat<T>({reshape(h_seg, {1, d}), aux_tokens}, 0);

        Tensor<T> final_tokens, final_emb;
        if (variant == DecoderVariant::Full) {
            auto [t1, e1] = layers[0](tokens, f_t.features, p, "layer1.", probe);
            (void)e1; // updated trace embedding is not re-consumed
            auto [t2, e2] = layers[1](t1, f_c.features, p, "layer2.", probe);
            auto [t3, e3] = layers[2](t2, e2, p, "layer3.", probe);
            final_tokens = t3;
            final_emb = e3;
        } else {
            // ablation: one cross-attention from tokens to the summed embeddings
            if (probe) probe->events.push_back("single.cross_token_to_embedding");
            Tensor<T> e = f_c.features + f_t.features;
            const auto& l = layers[0];
            final_tokens = tokens + l.cross_t2e(l.ln_q2(tokens), l.ln_e2(e) + p);
            final_emb = e;
        }

        // grid -> [d, gh, gw] -> two transposed-conv stages -> [feat, h, w]
        Tensor<T> spatial = transpose(reshape(final_emb, {grid.grid_h, grid.grid_w, d}),
                                      {2, 0, 1});
        Tensor<T> up = relu(conv_transpose2d(spatial, up1_kernel, up1_stride));
        up = conv_transpose2d(up, up2_kernel, up2_stride); // [feat, h, w]

        if (seg_token_out) *seg_token_out = detach(slice_rows(final_tokens, 0, 1));
        Tensor<T> seg_vec = head_mlp(reshape(slice_rows(final_tokens, 0, 1), {d}));
        const std::size_t feat = up.shape()[0], hw = up.shape()[1] * up.shape()[2];
        Tensor<T> flat = transpose(reshape(up, {feat, hw}), {1, 0});
        Tensor<T> logits = reshape(matmul(flat, reshape(seg_vec, {feat, 1})),
                                   {up.shape()[1], up.shape()[2]});
        return {logits};
    }

    void collect(const std::string& prefix, ParamMap<T>& out) const {
        out.emplace(prefix + ".aux_tokens", aux_tokens);
        out.emplace(prefix + ".pos", pos);
        for (std::size_t i = 0; i < layers.size(); ++i)
            layers[i].collect(prefix + ".layer" + std::to_string(i + 1), out);
        out.emplace(prefix + ".up1", up1_kernel);
        out.emplace(prefix + ".up2", up2_kernel);
        head_mlp.collect(prefix + ".head_mlp", out);
    }
};

} // namespace tlab
