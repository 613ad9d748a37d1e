#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "tamperlab/distort.hpp"
#include "tamperlab/eval.hpp"
#include "tamperlab/jpeg_codec.hpp"
#include "tamperlab/tamper_forge.hpp"

using namespace tlab;
namespace fs = std::filesystem;

TEST_CASE("spec parsing, labels, validation") {
    auto r = DistortionSpec::parse("resize:0.78");
    CHECK(r.kind == DistortionKind::Resize);
    CHECK(r.param == doctest::Approx(0.78));
    CHECK(r.label() == "Resize (0.78x)");
    CHECK(DistortionSpec::parse(r.spec_string()).param == doctest::Approx(0.78));
    CHECK(DistortionSpec::parse("none").kind == DistortionKind::None);
    CHECK(DistortionSpec::parse("blur:15").label() == "GSBr (k=15)");
    CHECK(DistortionSpec::parse("noise:3").label() == "GSN (sigma=3)");
    CHECK(DistortionSpec::parse("jpeg:50").label() == "JPEG (q=50)");

    CHECK_THROWS_AS(DistortionSpec::parse("resize:1.2"), DistortError);
    CHECK_THROWS_AS(DistortionSpec::parse("blur:4"), DistortError);
    CHECK_THROWS_AS(DistortionSpec::parse("blur:1"), DistortError);
    CHECK_THROWS_AS(DistortionSpec::parse("noise:-2"), DistortError);
    CHECK_THROWS_AS(DistortionSpec::parse("jpeg:0"), DistortError);
    CHECK_THROWS_AS(DistortionSpec::parse("jpeg:101"), DistortError);
    CHECK_THROWS_AS(DistortionSpec::parse("warp:2"), DistortError);
    CHECK(standard_battery().size() == 9);
}

TEST_CASE("none is bit-identical; distortions are seeded-deterministic") {
    Scene s = render_scene(5, GenConfig{});
    auto same = distort_image(s.image, {DistortionKind::None, 0}, 1);
    CHECK(std::memcmp(same.data.data(), s.image.data.data(),
                      same.data.size() * sizeof(float)) == 0);

    for (const auto& spec : standard_battery()) {
        auto a = distort_image(s.image, spec, 99);
        auto b = distort_image(s.image, spec, 99);
        CHECK(std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0);
    }
    // noise changes with the seed
    auto n1 = distort_image(s.image, {DistortionKind::GaussNoise, 5}, 1);
    auto n2 = distort_image(s.image, {DistortionKind::GaussNoise, 5}, 2);
    CHECK(std::memcmp(n1.data.data(), n2.data.data(), n1.data.size() * sizeof(float)) != 0);
}

TEST_CASE("resize: output extents, mask follows nearest-neighbor") {
    Scene s = render_scene(6, GenConfig{});
    ImageF mask(64, 64, 0.0f);
    for (std::size_t y = 10; y < 30; ++y)
        for (std::size_t x = 20; x < 44; ++x) mask.at(y, x) = 1.0f;

    auto pair = distort(s.image, mask, {DistortionKind::Resize, 0.78}, 0);
    CHECK(pair.image.h == 50); // round(64*0.78) = 50
    CHECK(pair.image.w == 50);
    CHECK(pair.mask.h == 50);
    CHECK(pair.mask.w == 50);
    for (float v : pair.mask.data) CHECK((v == 0.0f || v == 1.0f));
    std::size_t area = 0;
    for (float v : pair.mask.data)
        if (v != 0.0f) ++area;
    CHECK(area > 0);

    auto tiny = distort(s.image, mask, {DistortionKind::Resize, 0.25}, 0);
    CHECK(tiny.image.h == 16);
}

TEST_CASE("gaussian blur: normalization and smoothing") {
    ImageRGB flat(16, 16);
    for (auto& v : flat.data) v = 0.4f;
    auto blurred = distort_image(flat, {DistortionKind::GaussBlur, 5}, 0);
    for (float v : blurred.data) CHECK(v == doctest::Approx(0.4f).epsilon(1e-6));

    Scene s = render_scene(7, GenConfig{});
    auto b3 = distort_image(s.image, {DistortionKind::GaussBlur, 3}, 0);
    auto b15 = distort_image(s.image, {DistortionKind::GaussBlur, 15}, 0);
    auto energy = [](const ImageRGB& img) {
        double e = 0;
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y + 1 < img.h; ++y)
                for (std::size_t x = 0; x + 1 < img.w; ++x) {
                    const double dy = img.at(c, y + 1, x) - img.at(c, y, x);
                    const double dx = img.at(c, y, x + 1) - img.at(c, y, x);
                    e += dy * dy + dx * dx;
                }
        return e;
    };
    CHECK(energy(b3) < energy(s.image));
    CHECK(energy(b15) < energy(b3));
}

TEST_CASE("gaussian noise: empirical sigma within 10% pre-clipping") {
    ImageRGB mid(64, 64);
    for (auto& v : mid.data) v = 0.5f;
    auto noisy = distort_image(mid, {DistortionKind::GaussNoise, 15}, 42);
    double acc = 0;
    for (std::size_t i = 0; i < noisy.data.size(); ++i) {
        const double d = double(noisy.data[i]) - 0.5;
        acc += d * d;
    }
    const double est = std::sqrt(acc / double(noisy.data.size()));
    CHECK(std::abs(est - 15.0 / 255.0) < 0.1 * (15.0 / 255.0));
}

TEST_CASE("jpeg: quality scaling of the quant tables") {
    int luma[64], chroma[64];
    jpeg_quant_tables(50, luma, chroma); // scale 100: tables equal the base
    CHECK(luma[0] == 16);
    CHECK(chroma[0] == 17);
    jpeg_quant_tables(100, luma, chroma); // scale 0: all ones
    for (int i = 0; i < 64; ++i) {
        CHECK(luma[i] == 1);
        CHECK(chroma[i] == 1);
    }
    jpeg_quant_tables(10, luma, chroma); // scale 500
    CHECK(luma[0] == 80);
    CHECK_THROWS_AS(jpeg_quant_tables(0, luma, chroma), JpegError);
}

TEST_CASE("jpeg q=100 barely changes smooth scenes; q=50 changes more") {
    Scene s = render_scene(8, GenConfig{});
    auto q100 = jpeg_roundtrip(s.image, 100);
    double mean_abs = 0;
    for (std::size_t i = 0; i < q100.data.size(); ++i)
        mean_abs += std::abs(double(q100.data[i]) - double(s.image.data[i]));
    mean_abs /= double(q100.data.size());
    CHECK(mean_abs < 2.0 / 255.0);

    auto q50 = jpeg_roundtrip(s.image, 50);
    double mean_abs50 = 0;
    for (std::size_t i = 0; i < q50.data.size(); ++i)
        mean_abs50 += std::abs(double(q50.data[i]) - double(s.image.data[i]));
    mean_abs50 /= double(q50.data.size());
    CHECK(mean_abs50 > mean_abs);
}

TEST_CASE("evaluate: oracle, anti-oracle, constant predictors") {
    Vocabulary v = Vocabulary::standard();
    GenConfig cfg;
    const std::string dir = "distort_eval_ds";
    fs::remove_all(dir);
    build_dataset(16, DatasetMix{}, 11, dir, cfg, v);
    auto man = load_manifest(dir + "/manifest.tsv");

    std::vector<DistortionSpec> specs = {{DistortionKind::None, 0}};
    auto oracle_rep = evaluate(oracle_predict, man, v, specs);
    const auto& o = oracle_rep.rows[0];
    CHECK(o.f1_fixed == doctest::Approx(1.0));
    CHECK(o.f1_optimal == doctest::Approx(1.0));
    CHECK(o.auc == doctest::Approx(1.0));
    CHECK(o.recall_fake == doctest::Approx(1.0));
    CHECK(o.n_images == 16);
    CHECK(o.n_auc_excluded == 4); // the authentic quarter has degenerate gt

    auto anti_rep = evaluate(anti_oracle_predict, man, v, specs);
    CHECK(anti_rep.rows[0].f1_fixed == doctest::Approx(0.0));
    CHECK(anti_rep.rows[0].auc == doctest::Approx(0.0));
    CHECK(anti_rep.rows[0].recall_fake == doctest::Approx(0.0));

    auto const_rep = evaluate(constant_predict, man, v, specs);
    CHECK(const_rep.rows[0].auc == doctest::Approx(0.5));
    CHECK(const_rep.rows[0].recall_fake == doctest::Approx(1.0));

    // oracle under resize keeps shapes aligned and stays perfect
    std::vector<DistortionSpec> rs = {{DistortionKind::Resize, 0.78}};
    auto resized = evaluate(oracle_predict, man, v, rs);
    CHECK(resized.rows[0].f1_fixed == doctest::Approx(1.0));

    // report roundtrip
    auto battery = evaluate(oracle_predict, man, v, standard_battery());
    for (const auto& row : battery.rows) CHECK(row.f1_optimal >= row.f1_fixed - 1e-12);
    write_report(dir + "/report.txt", battery);
    auto back = read_report(dir + "/report.txt");
    REQUIRE(back.rows.size() == battery.rows.size());
    for (std::size_t i = 0; i < back.rows.size(); ++i) {
        CHECK(back.rows[i].spec == battery.rows[i].spec);
        CHECK(back.rows[i].auc == doctest::Approx(battery.rows[i].auc).epsilon(1e-9));
    }
    CHECK(back.row("jpeg:50").label == "JPEG (q=50)");
    CHECK_THROWS_AS(back.row("warp:9"), MetricError);

    fs::remove_all(dir);
}
