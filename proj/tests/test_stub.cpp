#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "support/gradcheck.hpp"
#include "tamperlab/mllm_stub.hpp"

using namespace tlab;
using testsup::random_tensor;

using TD = Tensor<double>;

static ContentFeatureMap<double> fake_content(Rng& rng, std::size_t n, std::size_t d) {
    return {random_tensor(rng, {n, d}), PatchGrid{8, 8, 8, d}};
}

TEST_CASE("vocabulary: specials, roundtrip, serialization") {
    Vocabulary v = Vocabulary::standard();
    CHECK(v.id("<REAL>") == v.real);
    CHECK(v.id("<FAKE>") == v.fake);
    CHECK(v.real < v.fake); // tie-break prefers <REAL>
    CHECK(v.is_special(v.seg));
    CHECK_FALSE(v.is_special(v.id("detect")));
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(v.id(v.token(i)) == i);
    CHECK_THROWS_AS(v.id("unknown-token"), VocabError);
    CHECK_THROWS_AS(v.token(v.size()), VocabError);

    const std::string path = "vocab_roundtrip.txt";
    v.save(path);
    Vocabulary w = Vocabulary::load(path);
    REQUIRE(w.size() == v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        CHECK(w.token(i) == v.token(i));
        CHECK(w.is_special(i) == v.is_special(i));
    }
    CHECK(w.seg == v.seg);
    std::remove(path.c_str());

    auto ids = v.encode({"<BOS>", "<FAKE>", "<SPLICE>", "[SEG]", "<EOS>"});
    CHECK(v.decode_string(ids) == "<BOS> <FAKE> <SPLICE> [SEG] <EOS>");
    CHECK(v.encode_string(v.decode_string(ids)) == ids);
}

TEST_CASE("stub emits the 5-slot template with SEG at position 3") {
    Rng rng(70);
    Vocabulary v = Vocabulary::standard();
    MllmStub<double> stub(rng, v.size(), 16, 24, 48);
    auto content = fake_content(rng, 64, 16);
    PromptSpec prompt{v.encode({"detect", "manipulation"})};
    auto out = stub(content, prompt);
    CHECK(out.hidden.states.shape() == Shape{5, 24});
    CHECK(out.logits.shape() == Shape{5, v.size()});
    CHECK(out.hidden.seg_position == 3);

    CHECK_THROWS_AS(stub(content, PromptSpec{}), TensorError);
    CHECK_THROWS_AS(stub(content, PromptSpec{{v.size() + 3}}), TensorError);
}

TEST_CASE("untrained stub: class slot near-uniform over REAL/FAKE across seeds") {
    Vocabulary v = Vocabulary::standard();
    double acc = 0;
    const int seeds = 100;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(1000 + s);
        MllmStub<double> stub(rng, v.size(), 16, 24, 48);
        auto content = fake_content(rng, 64, 16);
        auto out = stub(content, PromptSpec{{v.id("detect")}});
        const std::size_t V = v.size();
        const double* row = out.logits.data() + MllmStub<double>::kClassSlot * V;
        const double er = std::exp(row[v.real]), ef = std::exp(row[v.fake]);
        acc += er / (er + ef);
    }
    CHECK(std::abs(acc / seeds - 0.5) < 0.1);
}

TEST_CASE("gamma: identity-initialized projection returns the SEG row") {
    Rng rng(71);
    const std::size_t d = 12;
    MllmStub<double> stub(rng, Vocabulary::standard().size(), d, d, 24);
    // configure gamma = identity (both layers identity, ReLU transparent on
    // non-negative input)
    auto ident = [](Linear<double>& l) {
        for (auto& w : l.weight.value()) w = 0.0;
        for (std::size_t i = 0; i < l.weight.shape()[0]; ++i) l.weight.at({i, i}) = 1.0;
        for (auto& b : l.bias.value()) b = 0.0;
    };
    ident(stub.gamma.fc1);
    ident(stub.gamma.fc2);
    auto h = random_tensor(rng, {5, d}, 0.0, 1.0); // non-negative rows
    auto emb = stub.seg_embedding({h, 3});
    REQUIRE(emb.shape() == Shape{d});
    for (std::size_t j = 0; j < d; ++j)
        CHECK(emb.value()[j] == doctest::Approx(h.at({3, j})).epsilon(1e-12));
}

TEST_CASE("seg embedding: dimension and SEG-row sensitivity") {
    Rng rng(72);
    MllmStub<double> stub(rng, Vocabulary::standard().size(), 16, 24, 48);
    auto h = random_tensor(rng, {5, 24});
    auto base = stub.seg_embedding({h, 3});
    CHECK(base.shape() == Shape{16}); // decoder model_dim

    auto h2 = TD::from(h.shape(), std::vector<double>(h.data(), h.data() + h.size()));
    h2.at({3, 5}) += 0.25; // perturb the SEG row
    auto moved = stub.seg_embedding({h2, 3});
    double diff = 0;
    for (std::size_t j = 0; j < 16; ++j) diff += std::abs(moved.value()[j] - base.value()[j]);
    CHECK(diff > 1e-6);

    auto h3 = TD::from(h.shape(), std::vector<double>(h.data(), h.data() + h.size()));
    h3.at({1, 5}) += 0.25; // perturb a non-SEG row
    auto same = stub.seg_embedding({h3, 3});
    for (std::size_t j = 0; j < 16; ++j)
        CHECK(same.value()[j] == doctest::Approx(base.value()[j]).epsilon(1e-15));
}

TEST_CASE("decode_text: greedy argmax, documented tie-break, roundtrip") {
    Vocabulary v = Vocabulary::standard();
    const std::size_t V = v.size();
    auto logits = TD::zeros({5, V});
    // one-hot FAKE at the class slot
    logits.at({MllmStub<double>::kClassSlot, v.fake}) = 10.0;
    logits.at({MllmStub<double>::kBosSlot, v.bos}) = 10.0;
    logits.at({MllmStub<double>::kTypeSlot, v.splice}) = 10.0;
    logits.at({MllmStub<double>::kSegSlot, v.seg}) = 10.0;
    logits.at({MllmStub<double>::kEosSlot, v.eos}) = 10.0;
    auto ids = decode_text(logits);
    CHECK(ids[MllmStub<double>::kClassSlot] == v.fake);
    CHECK(v.decode_string(ids) == "<BOS> <FAKE> <SPLICE> [SEG] <EOS>");

    // tie at the class slot: all-equal logits resolve to the lowest id
    auto flat = TD::zeros({1, V});
    CHECK(decode_text(flat)[0] == 0);
    auto tie = TD::zeros({1, V});
    tie.at({0, v.real}) = 5.0;
    tie.at({0, v.fake}) = 5.0;
    CHECK(decode_text(tie)[0] == v.real); // lower id wins

    // decode . encode is the identity on template sequences
    auto seq = v.encode({"<BOS>", "<REAL>", "<NONE>", "[NOSEG]", "<EOS>"});
    auto onehot = TD::zeros({seq.size(), V});
    for (std::size_t r = 0; r < seq.size(); ++r) onehot.at({r, seq[r]}) = 3.0;
    CHECK(decode_text(onehot) == seq);
}

TEST_CASE("h_seg varies with the image and carries gradients") {
    Rng rng(73);
    Vocabulary v = Vocabulary::standard();
    MllmStub<double> stub(rng, v.size(), 16, 24, 48);
    PromptSpec prompt{{v.id("detect")}};

    // variance of the embedding across a batch of random content maps
    std::vector<double> first_coord;
    for (int i = 0; i < 8; ++i) {
        auto content = fake_content(rng, 64, 16);
        auto out = stub(content, prompt);
        first_coord.push_back(stub.seg_embedding(out.hidden).value()[0]);
    }
    double m = 0, var = 0;
    for (double x : first_coord) m += x;
    m /= double(first_coord.size());
    for (double x : first_coord) var += (x - m) * (x - m);
    CHECK(var > 0.0);

    // gradient check through the full stub path
    auto content = fake_content(rng, 16, 16);
    ParamMap<double> params;
    stub.collect("stub", params);
    std::vector<TD> ps = {content.features};
    for (auto& [n, t] : params) ps.push_back(t);
    const double err = testsup::grad_check(
        [&] {
            auto out = stub(content, prompt);
            return testsup::weighted_sum(out.logits, 74) +
                   testsup::weighted_sum(stub.seg_embedding(out.hidden), 75);
        },
        ps);
    CHECK(err < 1e-4);
}
