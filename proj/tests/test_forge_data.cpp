#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "tamperlab/rng.hpp"
#include "tamperlab/tamper_forge.hpp"

using namespace tlab;
namespace fs = std::filesystem;

static GenConfig default_cfg() { return GenConfig{}; }

static std::uint64_t file_hash(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(bool(is));
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return fnv1a(bytes.data(), bytes.size());
}

TEST_CASE("scenes are pure functions of the seed") {
    auto cfg = default_cfg();
    Scene a = render_scene(123, cfg);
    Scene b = render_scene(123, cfg);
    CHECK(std::memcmp(a.image.data.data(), b.image.data.data(),
                      a.image.data.size() * sizeof(float)) == 0);
    Scene c = render_scene(124, cfg);
    CHECK(std::memcmp(a.image.data.data(), c.image.data.data(),
                      a.image.data.size() * sizeof(float)) != 0);
}

TEST_CASE("per-shape empirical noise sigma tracks the configured draw within 20%") {
    auto cfg = default_cfg();
    int checked = 0;
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        Scene s = render_scene(seed, cfg);
        std::vector<std::size_t> visible(s.shapes.size(), 0);
        for (int own : s.owner)
            if (own >= 0) ++visible[std::size_t(own)];
        for (std::size_t i = 0; i < s.shapes.size(); ++i) {
            if (visible[i] < 150) continue; // need a stable estimate
            double acc = 0;
            std::size_t cnt = 0;
            for (std::size_t y = 0; y < cfg.height; ++y)
                for (std::size_t x = 0; x < cfg.width; ++x) {
                    if (s.owner[y * cfg.width + x] != int(i)) continue;
                    for (std::size_t c = 0; c < 3; ++c) {
                        const double r = double(s.image.at(c, y, x)) - double(s.clean.at(c, y, x));
                        acc += r * r;
                        ++cnt;
                    }
                }
            const double est = std::sqrt(acc / double(cnt));
            CHECK(std::abs(est - s.shapes[i].sigma) < 0.2 * s.shapes[i].sigma);
            ++checked;
        }
    }
    CHECK(checked > 10);
}

TEST_CASE("authentic: all-zero mask and REAL text") {
    auto cfg = default_cfg();
    Vocabulary v = Vocabulary::standard();
    auto s = gen_authentic(7, cfg, v);
    CHECK_FALSE(s.fake);
    CHECK(s.manip == ManipulationType::Authentic);
    for (float m : s.mask.data) CHECK(m == 0.0f);
    const auto txt = v.decode(s.text);
    CHECK(std::find(txt.begin(), txt.end(), "<REAL>") != txt.end());
    CHECK(std::find(txt.begin(), txt.end(), "[SEG]") == txt.end());
}

TEST_CASE("copy-move: disjoint rectangles, destination equals source") {
    auto cfg = default_cfg();
    Vocabulary v = Vocabulary::standard();
    for (std::uint64_t seed : {11u, 22u, 33u, 44u}) {
        auto s = gen_copy_move(seed, cfg, v);
        CHECK_FALSE(s.src_rect.intersects(s.dst_rect));
        const std::size_t rw = s.dst_rect.x1 - s.dst_rect.x0;
        const std::size_t rh = s.dst_rect.y1 - s.dst_rect.y0;
        // source is untouched by the paste, so post-paste source == pre-paste source
        for (std::size_t y = 0; y < rh; ++y)
            for (std::size_t x = 0; x < rw; ++x)
                for (std::size_t c = 0; c < 3; ++c)
                    CHECK(s.image.at(c, s.dst_rect.y0 + y, s.dst_rect.x0 + x) ==
                          s.image.at(c, s.src_rect.y0 + y, s.src_rect.x0 + x));
        // mask marks exactly the destination rectangle
        for (std::size_t y = 0; y < cfg.height; ++y)
            for (std::size_t x = 0; x < cfg.width; ++x) {
                const bool in = y >= s.dst_rect.y0 && y < s.dst_rect.y1 &&
                                x >= s.dst_rect.x0 && x < s.dst_rect.x1;
                CHECK(s.mask.at(y, x) == (in ? 1.0f : 0.0f));
            }
    }
}

TEST_CASE("splice: mask area fraction within the configured bounds") {
    auto cfg = default_cfg();
    Vocabulary v = Vocabulary::standard();
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
        auto s = gen_splice(seed, cfg, v);
        std::size_t area = 0;
        for (float m : s.mask.data)
            if (m != 0.0f) ++area;
        const double frac = double(area) / double(cfg.height * cfg.width);
        CHECK(frac >= cfg.min_mask_frac);
        CHECK(frac <= cfg.max_mask_frac);
    }
}

TEST_CASE("splice: pasted noise sigma separated from host background by the margin") {
    auto cfg = default_cfg();
    Vocabulary v = Vocabulary::standard();
    for (std::uint64_t seed : {5u, 15u, 25u, 35u, 45u}) {
        auto s = gen_splice(seed, cfg, v);
        // donor residual: spliced pixels minus the donor clean plate
        Scene donor = render_scene(derive_seed(seed, 2), cfg, true);
        double acc = 0;
        std::size_t cnt = 0;
        for (std::size_t y = 0; y < s.dst_rect.y1 - s.dst_rect.y0; ++y)
            for (std::size_t x = 0; x < s.dst_rect.x1 - s.dst_rect.x0; ++x)
                for (std::size_t c = 0; c < 3; ++c) {
                    const double r =
                        double(s.image.at(c, s.dst_rect.y0 + y, s.dst_rect.x0 + x)) -
                        double(donor.clean.at(c, s.src_rect.y0 + y, s.src_rect.x0 + x));
                    acc += r * r;
                    ++cnt;
                }
        const double sigma_paste = std::sqrt(acc / double(cnt));

        // host background residual outside the pasted region
        Scene host = render_scene(derive_seed(seed, 1), cfg, false);
        double hacc = 0;
        std::size_t hcnt = 0;
        for (std::size_t y = 0; y < cfg.height; ++y)
            for (std::size_t x = 0; x < cfg.width; ++x) {
                if (host.owner[y * cfg.width + x] >= 0) continue;
                if (y >= s.dst_rect.y0 && y < s.dst_rect.y1 && x >= s.dst_rect.x0 &&
                    x < s.dst_rect.x1)
                    continue;
                for (std::size_t c = 0; c < 3; ++c) {
                    const double r =
                        double(host.image.at(c, y, x)) - double(host.clean.at(c, y, x));
                    hacc += r * r;
                    ++hcnt;
                }
            }
        const double sigma_bg = std::sqrt(hacc / double(hcnt));
        CHECK(sigma_paste - sigma_bg >= cfg.splice_margin);
    }
}

TEST_CASE("remove: mask marks the filled shape and the fill is smoother") {
    auto cfg = default_cfg();
    Vocabulary v = Vocabulary::standard();
    auto s = gen_remove(42, cfg, v);
    CHECK(s.fake);
    std::size_t area = 0;
    for (float m : s.mask.data)
        if (m != 0.0f) ++area;
    CHECK(area > 0);
    const auto txt = v.decode(s.text);
    CHECK(std::find(txt.begin(), txt.end(), "<REMOVE>") != txt.end());
    CHECK(std::find(txt.begin(), txt.end(), "[SEG]") != txt.end());
}

TEST_CASE("coc text: template contents and lossless vocab roundtrip") {
    Vocabulary v = Vocabulary::standard();
    auto fake = render_coc_text(true, ManipulationType::Splice, v);
    auto fake_txt = v.decode(fake);
    CHECK(std::find(fake_txt.begin(), fake_txt.end(), "<FAKE>") != fake_txt.end());
    CHECK(std::find(fake_txt.begin(), fake_txt.end(), "<SPLICE>") != fake_txt.end());
    CHECK(fake.size() == 5);
    CHECK(fake[3] == v.seg); // SEG slot position matches the stub template

    auto real = render_coc_text(false, ManipulationType::Authentic, v);
    auto real_txt = v.decode(real);
    CHECK(std::find(real_txt.begin(), real_txt.end(), "<REAL>") != real_txt.end());
    CHECK(std::find(real_txt.begin(), real_txt.end(), "[SEG]") == real_txt.end());

    CHECK(v.encode_string(v.decode_string(fake)) == fake);
    CHECK(v.encode_string(v.decode_string(real)) == real);
}

TEST_CASE("placement failure after the attempt cap raises a named error") {
    Vocabulary v = Vocabulary::standard();
    GenConfig tight;
    tight.height = tight.width = 16;
    tight.min_mask_frac = 0.42;
    tight.max_mask_frac = 0.49;
    CHECK_THROWS_WITH_AS(gen_copy_move(1, tight, v), doctest::Contains("attempts"), GenError);

    GenConfig no_shape;
    no_shape.min_mask_frac = 0.40;
    no_shape.max_mask_frac = 0.45;
    CHECK_THROWS_WITH_AS(gen_remove(1, no_shape, v), doctest::Contains("remove"), GenError);
}

TEST_CASE("dataset: exact mix counts, byte reproducibility, validation") {
    Vocabulary v = Vocabulary::standard();
    auto cfg = default_cfg();
    const std::string dir_a = "forge_ds_a", dir_b = "forge_ds_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);

    DatasetMix mix;
    auto man_a = build_dataset(100, mix, 7, dir_a, cfg, v);
    CHECK(man_a.records.size() == 100);
    std::size_t counts[4] = {0, 0, 0, 0};
    for (const auto& r : man_a.records) counts[int(r.manip)]++;
    CHECK(counts[0] == 25);
    CHECK(counts[1] == 25);
    CHECK(counts[2] == 25);
    CHECK(counts[3] == 25);

    auto man_b = build_dataset(100, mix, 7, dir_b, cfg, v);
    CHECK(file_hash(dir_a + "/manifest.tsv") == file_hash(dir_b + "/manifest.tsv"));
    for (std::size_t i = 0; i < 100; ++i) {
        CHECK(file_hash(man_a.image_path(i)) == file_hash(man_b.image_path(i)));
        CHECK(file_hash(man_a.mask_path(i)) == file_hash(man_b.mask_path(i)));
    }

    // label FAKE <=> mask has at least one positive pixel, across every sample
    auto man = load_manifest(dir_a + "/manifest.tsv");
    CHECK(man.config_hash == cfg.hash());
    for (std::size_t i = 0; i < man.records.size(); ++i) {
        auto s = load_sample(man, i, v);
        std::size_t pos = 0;
        for (float mv : s.mask.data)
            if (mv != 0.0f) ++pos;
        CHECK((pos > 0) == s.fake);
        CHECK(s.text.size() == 5);
    }

    DatasetMix bad;
    bad.authentic = 0.15; // sums to 0.9
    CHECK_THROWS_WITH_AS(build_dataset(10, bad, 1, dir_a, cfg, v),
                         doctest::Contains("sum"), GenError);

    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("manifest load validates files and header") {
    Vocabulary v = Vocabulary::standard();
    auto cfg = default_cfg();
    const std::string dir = "forge_ds_c";
    fs::remove_all(dir);
    build_dataset(4, DatasetMix{}, 3, dir, cfg, v);
    auto man = load_manifest(dir + "/manifest.tsv");
    CHECK(man.records.size() == 4);
    fs::remove(man.image_path(2));
    CHECK_THROWS_WITH_AS(load_manifest(dir + "/manifest.tsv"), doctest::Contains("missing"),
                         GenError);
    fs::remove_all(dir);
    CHECK_THROWS_AS(load_manifest(dir + "/manifest.tsv"), GenError);
}
