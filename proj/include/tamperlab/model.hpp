#pragma once

// Full detection model: frozen content backbone, trainable trace encoder,
// language-model stub with seg-token projection, and the fusion decoder.
// One forward pass maps an image to mask logits plus per-slot token logits.

#include <sstream>

#include "tamperlab/checkpoint.hpp"
#include "tamperlab/config.hpp"
#include "tamperlab/content_backbone.hpp"
#include "tamperlab/eval.hpp"
#include "tamperlab/fusion_decoder.hpp"
#include "tamperlab/mllm_stub.hpp"
#include "tamperlab/trace_encoder.hpp"

namespace tlab {

struct ModelConfig {
    std::size_t image_size = 64;
    std::size_t patch = 8;
    std::size_t dim = 64; // decoder/backbone/trace model_dim
    std::size_t heads = 4;
    std::size_t mlp_hidden = 128;
    std::size_t trace_channels = 16;
    std::size_t trace_depth = 4;
    std::size_t content_depth = 4;
    std::size_t d_llm = 128;
    std::size_t stub_hidden = 256;
    std::size_t aux_tokens = 3;
    std::size_t upsample_mid = 32;
    std::size_t mask_feat = 8;
    bool use_trace = true;                            // "w/o Trace Enc." ablation
    DecoderVariant variant = DecoderVariant::Full;    // "w/o Fusion Mechanism" ablation
    std::uint64_t seed = 7;

    std::string to_kv() const {
        std::ostringstream os;
        os << "model.image_size=" << image_size << "\nmodel.patch=" << patch
           << "\nmodel.dim=" << dim << "\nmodel.heads=" << heads
           << "\nmodel.mlp_hidden=" << mlp_hidden
           << "\nmodel.trace_channels=" << trace_channels
           << "\nmodel.trace_depth=" << trace_depth
           << "\nmodel.content_depth=" << content_depth << "\nmodel.d_llm=" << d_llm
           << "\nmodel.stub_hidden=" << stub_hidden << "\nmodel.aux_tokens=" << aux_tokens
           << "\nmodel.upsample_mid=" << upsample_mid << "\nmodel.mask_feat=" << mask_feat
           << "\nmodel.use_trace=" << (use_trace ? "true" : "false")
           << "\nmodel.decoder_variant="
           << (variant == DecoderVariant::Full ? "full" : "single_cross")
           << "\nmodel.seed=" << seed << "\n";
        return os.str();
    }

    static ModelConfig from_kv(KeyValueConfig& kv) {
        ModelConfig c;
        c.image_size = kv.take_u64("model.image_size", c.image_size);
        c.patch = kv.take_u64("model.patch", c.patch);
        c.dim = kv.take_u64("model.dim", c.dim);
        c.heads = kv.take_u64("model.heads", c.heads);
        c.mlp_hidden = kv.take_u64("model.mlp_hidden", c.mlp_hidden);
        c.trace_channels = kv.take_u64("model.trace_channels", c.trace_channels);
        c.trace_depth = kv.take_u64("model.trace_depth", c.trace_depth);
        c.content_depth = kv.take_u64("model.content_depth", c.content_depth);
        c.d_llm = kv.take_u64("model.d_llm", c.d_llm);
        c.stub_hidden = kv.take_u64("model.stub_hidden", c.stub_hidden);
        c.aux_tokens = kv.take_u64("model.aux_tokens", c.aux_tokens);
        c.upsample_mid = kv.take_u64("model.upsample_mid", c.upsample_mid);
        c.mask_feat = kv.take_u64("model.mask_feat", c.mask_feat);
        c.use_trace = kv.take_bool("model.use_trace", c.use_trace);
        const std::string var = kv.take_string("model.decoder_variant", "full");
        if (var == "full") c.variant = DecoderVariant::Full;
        else if (var == "single_cross") c.variant = DecoderVariant::SingleCross;
        else throw ConfigError("model.decoder_variant must be full or single_cross");
        c.seed = kv.take_u64("model.seed", c.seed);
        return c;
    }
};

template <typename T>
Tensor<T> image_to_tensor(const ImageRGB& img) {
    std::vector<T> data(img.data.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = T(img.data[i]);
    return Tensor<T>::from({3, img.h, img.w}, std::move(data));
}

template <typename T>
Tensor<T> mask_to_tensor(const ImageF& m) {
    std::vector<T> data(m.data.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = T(m.data[i]);
    return Tensor<T>::from({m.h, m.w}, std::move(data));
}

template <typename T>
struct SleuthModel {
    ModelConfig cfg;
    Vocabulary vocab;
    ContentBackbone<T> backbone;
    TraceEncoder<T> trace;
    MllmStub<T> stub;
    FusionDecoder<T> decoder;
    PromptSpec prompt;

    explicit SleuthModel(const ModelConfig& c)
        : cfg(c),
          vocab(Vocabulary::standard()),
          backbone(c.image_size, c.patch, c.dim, c.heads, c.mlp_hidden, c.content_depth) {
        Rng trace_rng(derive_seed(c.seed, 11));
        trace = TraceEncoder<T>(trace_rng, c.image_size, c.patch, c.dim, c.heads,
                                c.mlp_hidden, c.trace_channels, c.trace_depth);
        Rng stub_rng(derive_seed(c.seed, 12));
        stub = MllmStub<T>(stub_rng, vocab.size(), c.dim, c.d_llm, c.stub_hidden);
        Rng dec_rng(derive_seed(c.seed, 13));
        decoder = FusionDecoder<T>(dec_rng, AttentionConfig{c.dim, c.heads},
                                   backbone.embed.grid, c.mlp_hidden, c.upsample_mid,
                                   c.mask_feat, c.aux_tokens, c.variant);
        prompt.ids = vocab.encode({"detect", "manipulation", "in", "this", "image"});
    }

    struct Forward {
        Tensor<T> mask_logits; // [h, w]
        Tensor<T> text_logits; // [5, vocab]
        HiddenStates<T> hidden;
    };

    Forward forward(const Tensor<T>& image, FusionTrace* probe = nullptr) const {
        ContentFeatureMap<T> f_c = backbone(image);
        TraceFeatureMap<T> f_t;
        if (cfg.use_trace) {
            f_t = trace(image);
        } else {
            f_t.features = Tensor<T>::zeros({f_c.grid.n_patches(), cfg.dim});
            f_t.grid = f_c.grid;
        }
        StubOutput<T> out = stub(f_c, prompt);
        Tensor<T> h_seg = stub.seg_embedding(out.hidden);
        MaskLogits<T> mask = decoder.decode(f_c, f_t, h_seg, probe);
        return {mask.logits, out.logits, out.hidden};
    }

    ParamMap<T> trainable_params() const {
        ParamMap<T> p;
        if (cfg.use_trace) trace.collect("trace", p);
        stub.collect("stub", p);
        decoder.collect("decoder", p);
        return p;
    }

    ParamMap<T> all_params() const {
        ParamMap<T> p;
        trace.collect("trace", p);
        stub.collect("stub", p);
        decoder.collect("decoder", p);
        backbone.collect("backbone", p);
        return p;
    }

    std::uint64_t backbone_checksum() const { return backbone.checksum(); }

    bool decodes_fake(const Tensor<T>& text_logits) const {
        const auto ids = decode_text(text_logits);
        return ids[MllmStub<T>::kClassSlot] == vocab.fake;
    }

    // Inference on arbitrary extents: resize in, predict, resize probabilities
    // back out. says_fake comes from the decoded class slot.
    Prediction predict(const ImageRGB& img) const {
        const ImageRGB sized = (img.h == cfg.image_size && img.w == cfg.image_size)
                                   ? img
                                   : resize_bilinear(img, cfg.image_size, cfg.image_size);
        Forward out = forward(image_to_tensor<T>(sized));
        ImageF prob(cfg.image_size, cfg.image_size);
        for (std::size_t i = 0; i < prob.data.size(); ++i)
            prob.data[i] = float(1.0 / (1.0 + std::exp(-double(out.mask_logits.data()[i]))));
        if (img.h != cfg.image_size || img.w != cfg.image_size)
            prob = resize_bilinear(prob, img.h, img.w);
        return {prob, decodes_fake(out.text_logits)};
    }

    void save_checkpoint(const std::string& path, std::uint64_t iteration = 0,
                         const std::array<std::uint64_t, 6>& rng_state = {}) const {
        CheckpointFile ck;
        ck.put_text("__meta/config", cfg.to_kv());
        ck.put_u64("__meta/iteration", {iteration});
        ck.put_u64("__meta/rng", {rng_state.begin(), rng_state.end()});
        put_params(ck, all_params());
        ck.save(path);
    }

    static SleuthModel load_checkpoint(const std::string& path, std::uint64_t* iteration = nullptr,
                                       std::array<std::uint64_t, 6>* rng_state = nullptr) {
        CheckpointFile ck = CheckpointFile::load(path);
        KeyValueConfig kv = KeyValueConfig::parse_string(ck.get_text("__meta/config"), path);
        SleuthModel model(ModelConfig::from_kv(kv));
        kv.finish();
        ParamMap<T> params = model.all_params();
        load_params(ck, params);
        if (iteration) *iteration = ck.get_u64("__meta/iteration").at(0);
        if (rng_state) {
            const auto v = ck.get_u64("__meta/rng");
            for (std::size_t i = 0; i < 6 && i < v.size(); ++i) (*rng_state)[i] = v[i];
        }
        return model;
    }
};

} // namespace tlab
