#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support/gradcheck.hpp"
#include "tamperlab/nn.hpp"

using namespace tlab;
using testsup::grad_check;
using testsup::random_tensor;
using testsup::weighted_sum;

using TD = Tensor<double>;

static void set_identity(Linear<double>& l) {
    const std::size_t d = l.weight.shape()[0];
    for (auto& v : l.weight.value()) v = 0.0;
    for (std::size_t i = 0; i < d; ++i) l.weight.at({i, i}) = 1.0;
    if (l.bias.defined())
        for (auto& v : l.bias.value()) v = 0.0;
}

TEST_CASE("attention config validates divisibility") {
    AttentionConfig bad{10, 3};
    CHECK_THROWS_AS(bad.head_dim(), TensorError);
    AttentionConfig good{64, 4};
    CHECK(good.head_dim() == 16);
}

TEST_CASE("single key/value: output ignores the query") {
    Rng rng(31);
    AttentionConfig cfg{8, 2};
    MultiHeadAttention<double> attn(rng, cfg);
    auto kv = random_tensor(rng, {1, 8});
    auto q1 = random_tensor(rng, {3, 8});
    auto q2 = random_tensor(rng, {3, 8});
    auto o1 = attn(q1, kv);
    auto o2 = attn(q2, kv);
    for (std::size_t i = 0; i < o1.size(); ++i)
        CHECK(o1.value()[i] == doctest::Approx(o2.value()[i]).epsilon(1e-12));
    // and equals the projected value row
    auto want = attn.wo(attn.wv(kv));
    for (std::size_t j = 0; j < 8; ++j)
        CHECK(o1.at({0, j}) == doctest::Approx(want.at({0, j})).epsilon(1e-12));
}

TEST_CASE("identity projections reproduce softmax(QK^T/sqrt(d))V by hand") {
    Rng rng(32);
    AttentionConfig cfg{2, 1};
    MultiHeadAttention<double> attn(rng, cfg);
    set_identity(attn.wq);
    set_identity(attn.wk);
    set_identity(attn.wv);
    set_identity(attn.wo);
    auto x = TD::from({2, 2}, {0.3, -0.7, 1.1, 0.4});
    auto out = attn(x, x);

    const double scale = 1.0 / std::sqrt(2.0);
    double want[2][2];
    for (int i = 0; i < 2; ++i) {
        double s0 = (x.at({std::size_t(i), 0}) * x.at({0, 0}) +
                     x.at({std::size_t(i), 1}) * x.at({0, 1})) * scale;
        double s1 = (x.at({std::size_t(i), 0}) * x.at({1, 0}) +
                     x.at({std::size_t(i), 1}) * x.at({1, 1})) * scale;
        const double m = std::max(s0, s1);
        const double e0 = std::exp(s0 - m), e1 = std::exp(s1 - m);
        const double a0 = e0 / (e0 + e1), a1 = e1 / (e0 + e1);
        for (int j = 0; j < 2; ++j)
            want[i][j] = a0 * x.at({0, std::size_t(j)}) + a1 * x.at({1, std::size_t(j)});
    }
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(out.at({i, j}) == doctest::Approx(want[i][j]).epsilon(1e-12));
}

TEST_CASE("attention rows sum to one; kv permutation leaves output unchanged") {
    Rng rng(33);
    AttentionConfig cfg{16, 4};
    MultiHeadAttention<double> attn(rng, cfg);
    auto q = random_tensor(rng, {5, 16});
    auto kv = random_tensor(rng, {7, 16});
    Tensor<double> probs;
    auto out = attn(q, kv, &probs);
    REQUIRE(probs.shape() == Shape{4, 5, 7});
    for (std::size_t h = 0; h < 4; ++h)
        for (std::size_t i = 0; i < 5; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < 7; ++j) s += probs.at({h, i, j});
            CHECK(std::abs(s - 1.0) < 1e-6);
        }

    // reverse the kv rows
    auto kv_perm = TD::zeros({7, 16});
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 16; ++j) kv_perm.at({6 - i, j}) = kv.at({i, j});
    auto out_perm = attn(q, kv_perm);
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(out.value()[i] == doctest::Approx(out_perm.value()[i]).epsilon(1e-10));
}

TEST_CASE("attention rejects mismatched feature dims") {
    Rng rng(34);
    MultiHeadAttention<double> attn(rng, {8, 2});
    CHECK_THROWS_AS(attn(TD::zeros({3, 6}), TD::zeros({3, 8})), TensorError);
}

TEST_CASE("patch_embed: 64x64 image at patch 8 gives 64 tokens") {
    Rng rng(35);
    PatchEmbed<double> pe(rng, 3, 64, 64, 8, 32);
    auto img = random_tensor(rng, {3, 64, 64}, 0.0, 1.0);
    auto tokens = pe(img);
    REQUIRE(tokens.shape() == Shape{64, 32});
    CHECK(pe.grid.n_patches() == 64);
    CHECK_THROWS_AS(PatchEmbed<double>(rng, 3, 60, 64, 8, 32), TensorError);
}

TEST_CASE("transformer block preserves shape") {
    Rng rng(36);
    TransformerBlock<double> block(rng, {16, 4}, 32);
    auto x = random_tensor(rng, {10, 16});
    auto y = block(x);
    REQUIRE(y.shape() == x.shape());
}

TEST_CASE("zero output projections reduce the block to identity + MLP path") {
    Rng rng(37);
    TransformerBlock<double> block(rng, {8, 2}, 16);
    for (auto& v : block.attn.wo.weight.value()) v = 0.0;
    for (auto& v : block.attn.wo.bias.value()) v = 0.0;
    auto x = random_tensor(rng, {4, 8});
    auto got = block(x);
    // hand-traced path: attn contributes nothing, so out = x + mlp(ln2(x))
    auto want = x + block.mlp(block.ln2(x));
    for (std::size_t i = 0; i < got.size(); ++i)
        CHECK(got.value()[i] == doctest::Approx(want.value()[i]).epsilon(1e-12));
}

// Applies a fixed permutation to the 2-d patch layout of an image.
static TD permute_patches(const TD& img, std::size_t p, const std::vector<std::size_t>& perm) {
    const std::size_t c = img.shape()[0], h = img.shape()[1], w = img.shape()[2];
    const std::size_t gw = w / p;
    auto out = TD::zeros(img.shape());
    for (std::size_t src = 0; src < perm.size(); ++src) {
        const std::size_t dst = perm[src];
        const std::size_t sy = (src / gw) * p, sx = (src % gw) * p;
        const std::size_t dy = (dst / gw) * p, dx = (dst % gw) * p;
        for (std::size_t cc = 0; cc < c; ++cc)
            for (std::size_t r = 0; r < p; ++r)
                for (std::size_t s = 0; s < p; ++s)
                    out.at({cc, dy + r, dx + s}) = img.at({cc, sy + r, sx + s});
    }
    return out;
}

TEST_CASE("patch permutation equivariance without positions, broken with them") {
    Rng rng(38);
    const std::size_t p = 4, dim = 16;
    PatchEmbed<double> pe_nopos(rng, 3, 16, 16, p, dim, false);
    Rng rng2(39);
    TransformerBlock<double> block(rng2, {dim, 4}, 32);

    auto img = random_tensor(rng, {3, 16, 16}, 0.0, 1.0);
    const std::size_t n = pe_nopos.grid.n_patches();
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = (i * 7 + 3) % n; // bijection: gcd(7,16)=1
    auto img_perm = permute_patches(img, p, perm);

    auto base = block(pe_nopos(img));
    auto permuted = block(pe_nopos(img_perm));
    const std::size_t d = dim;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            CHECK(permuted.at({perm[i], j}) ==
                  doctest::Approx(base.at({i, j})).epsilon(1e-9));

    // with positional embeddings the same relation must fail
    Rng rng3(38);
    PatchEmbed<double> pe_pos(rng3, 3, 16, 16, p, dim, true);
    auto base_p = block(pe_pos(img));
    auto perm_p = block(pe_pos(img_perm));
    double max_diff = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            max_diff = std::max(max_diff,
                                std::abs(perm_p.at({perm[i], j}) - base_p.at({i, j})));
    CHECK(max_diff > 1e-3);
}

TEST_CASE("module-level gradient checks at 64-bit") {
    Rng rng(40);
    AttentionConfig cfg{8, 2};
    MultiHeadAttention<double> attn(rng, cfg);
    auto q = random_tensor(rng, {3, 8});
    auto kv = random_tensor(rng, {4, 8});
    std::vector<TD> aparams = {attn.wq.weight, attn.wk.weight, attn.wv.weight,
                               attn.wo.weight, attn.wq.bias,   attn.wk.bias,
                               attn.wv.bias,   attn.wo.bias,   q,
                               kv};
    CHECK(grad_check([&] { return weighted_sum(attn(q, kv), 41); }, aparams) < 1e-4);

    TransformerBlock<double> block(rng, cfg, 16);
    auto x = random_tensor(rng, {5, 8});
    ParamMap<double> bp;
    block.collect("block", bp);
    std::vector<TD> bparams = {x};
    for (auto& [name, t] : bp) bparams.push_back(t);
    CHECK(grad_check([&] { return weighted_sum(block(x), 42); }, bparams) < 1e-4);

    Mlp2<double> mlp(rng, 6, 12, 5);
    auto mx = random_tensor(rng, {4, 6});
    CHECK(grad_check([&] { return weighted_sum(mlp(mx), 43); },
                     {mlp.fc1.weight, mlp.fc1.bias, mlp.fc2.weight, mlp.fc2.bias, mx}) < 1e-4);

    PatchEmbed<double> pe(rng, 2, 8, 8, 4, 6);
    auto img = random_tensor(rng, {2, 8, 8});
    CHECK(grad_check([&] { return weighted_sum(pe(img), 44); },
                     {pe.proj.weight, pe.proj.bias, pe.pos, img}) < 1e-4);
}
