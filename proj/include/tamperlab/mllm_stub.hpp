#pragma once

// Small trainable stand-in for the multimodal language model: pooled content
// features and an embedded prompt feed a trunk MLP that emits a fixed
// 5-slot hidden sequence [BOS-like, class, type, SEG, EOS]. The language head
// produces per-slot token logits; the SEG slot's hidden state, projected
// through gamma, becomes the segmentation prompt embedding. Classification
// supervision arrives only through the token loss over the class slot.

#include <utility>

#include "tamperlab/content_backbone.hpp"
#include "tamperlab/nn.hpp"
#include "tamperlab/vocab.hpp"

namespace tlab {

struct PromptSpec {
    std::vector<std::size_t> ids;
};

template <typename T>
struct HiddenStates {
    Tensor<T> states; // [seq_len, d_llm]
    std::size_t seg_position = 0;
};

template <typename T>
struct StubOutput {
    HiddenStates<T> hidden;
    Tensor<T> logits; // [seq_len, vocab]
};

template <typename T>
struct MllmStub {
    static constexpr std::size_t kTemplateLen = 5;
    static constexpr std::size_t kBosSlot = 0;
    static constexpr std::size_t kClassSlot = 1;
    static constexpr std::size_t kTypeSlot = 2;
    static constexpr std::size_t kSegSlot = 3;
    static constexpr std::size_t kEosSlot = 4;

    std::size_t d_llm = 128;
    std::size_t d_dec = 64;
    std::size_t vocab_size = 0;
    Tensor<T> prompt_table; // [vocab, d_dec]
    Mlp2<T> trunk;          // 2*d_dec -> hidden -> kTemplateLen * d_llm
    Linear<T> lm_head;      // d_llm -> vocab
    Mlp2<T> gamma;          // d_llm -> d_llm hidden -> d_dec

    MllmStub() = default;
    MllmStub(Rng& rng, std::size_t vocab, std::size_t d_dec_, std::size_t d_llm_,
             std::size_t hidden)
        : d_llm(d_llm_),
          d_dec(d_dec_),
          vocab_size(vocab),
          prompt_table(init_normal<T>(rng, {vocab, d_dec_}, 0.02)),
          trunk(rng, 2 * d_dec_, hidden, kTemplateLen * d_llm_),
          lm_head(rng, d_llm_, vocab),
          gamma(rng, d_llm_, d_llm_, d_dec_) {}

    StubOutput<T> operator()(const ContentFeatureMap<T>& content,
                             const PromptSpec& prompt) const {
        if (prompt.ids.empty()) throw TensorError("mllm stub: empty prompt");
        for (std::size_t id : prompt.ids)
            if (id >= vocab_size)
                throw TensorError("mllm stub: prompt id " + std::to_string(id) +
                                  " >= vocab size " + std::to_string(vocab_size));
        Tensor<T> pooled = mean(content.features, 0);            // [d_dec]
        Tensor<T> pemb = mean(gather_rows(prompt_table, prompt.ids), 0);
        Tensor<T> joint = concat<T>({pooled, pemb}, 0);          // [2*d_dec]
        Tensor<T> h = reshape(trunk(joint), {kTemplateLen, d_llm});
        Tensor<T> logits = lm_head(h);
        return {HiddenStates<T>{h, kSegSlot}, logits};
    }

    // h_seg = gamma(h~_seg)
    Tensor<T> seg_embedding(const HiddenStates<T>& h) const {
        if (h.seg_position >= h.states.shape()[0])
            throw TensorError("seg_embedding: seg position out of range");
        Tensor<T> row = reshape(
            slice_rows(h.states, h.seg_position, h.seg_position + 1), {d_llm});
        return gamma(row); // [d_dec]
    }

    void collect(const std::string& prefix, ParamMap<T>& out) const {
        out.emplace(prefix + ".prompt_table", prompt_table);
        trunk.collect(prefix + ".trunk", out);
        lm_head.collect(prefix + ".lm_head", out);
        gamma.collect(prefix + ".gamma", out);
    }
};

// Greedy per-slot argmax; ties resolve to the lower token id.
template <typename T>
std::vector<std::size_t> decode_text(const Tensor<T>& logits) {
    if (logits.rank() != 2)
        throw TensorError("decode_text: logits must be (slots, vocab), got " +
                          shape_str(logits.shape()));
    const std::size_t rows = logits.shape()[0], v = logits.shape()[1];
    std::vector<std::size_t> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = logits.data() + r * v;
        std::size_t best = 0;
        for (std::size_t j = 1; j < v; ++j)
            if (row[j] > row[best]) best = j;
        out[r] = best;
    }
    return out;
}

} // namespace tlab
