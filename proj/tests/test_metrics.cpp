#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bggan/metrics.hpp"
#include "bggan/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

namespace fs = std::filesystem;
using namespace bggan;

namespace {

RunConfig tiny_cfg() {
    RunConfig cfg;
    cfg.gen.stage1_base_channels = 4;
    cfg.gen.stage1_max_channels = 8;
    cfg.gen.stage2_base_channels = 4;
    cfg.gen.stage2_max_channels = 8;
    cfg.gen.n_resblocks = 1;
    cfg.gen.n_scales = 1;
    cfg.crop = {32, 32};
    return cfg;
}

}  // namespace

TEST_CASE("psnr closed forms and oracle") {
    Image8 zero(8, 8, 0), mid(8, 8, 128);
    CHECK(std::isinf(psnr(zero, zero)));
    CHECK(psnr(zero, mid) == doctest::Approx(10.0 * std::log10(255.0 * 255.0 / (128.0 * 128.0)))
                                 .epsilon(1e-12));

    Rng rng(8);
    Image8 a(9, 11), b(9, 11);
    for (auto& p : a.pixels) p = (unsigned char)rng.uniform_index(256);
    for (auto& p : b.pixels) p = (unsigned char)rng.uniform_index(256);
    // independent double-precision oracle
    double se = 0;
    for (size_t i = 0; i < a.pixels.size(); ++i) {
        double d = double(a.pixels[i]) - double(b.pixels[i]);
        se += d * d;
    }
    double expect = 10.0 * std::log10(255.0 * 255.0 * double(a.pixels.size()) / se);
    CHECK(std::abs(psnr(a, b) - expect) <= 1e-9);

    CHECK_THROWS_AS(psnr(zero, Image8(4, 4)), InvalidInputError);
}

TEST_CASE("ssim metric: identity and bounds") {
    Rng rng(9);
    Image8 a(16, 16);
    for (auto& p : a.pixels) p = (unsigned char)rng.uniform_index(256);
    CHECK(ssim_metric(a, a) == doctest::Approx(1.0));
    Image8 b = a;
    for (auto& p : b.pixels) p = (unsigned char)(255 - p);
    double s = ssim_metric(a, b);
    CHECK(s < 1.0);
    CHECK(s >= -1.0);
}

TEST_CASE("evaluate_pairs: identity runner on (target, target) pairs") {
    auto pairs = synth_pairs(3, 32, 32, 5);
    for (auto& p : pairs) p.source = p.target;  // evaluate against itself
    auto report = evaluate_pairs([](const Image8& img) { return img; }, pairs);
    REQUIRE(report.count == 3);
    for (const auto& r : report.records) {
        CHECK(std::isinf(r.psnr));
        CHECK(r.ssim == doctest::Approx(1.0));
    }
    CHECK(std::isinf(report.mean_psnr));
    CHECK(report.mean_ssim == doctest::Approx(1.0));

    // identity runner passes the source through: metrics equal direct source-vs-target
    auto raw = synth_pairs(3, 32, 32, 5);
    auto passthrough = evaluate_pairs([](const Image8& img) { return img; }, raw);
    for (size_t i = 0; i < raw.size(); ++i) {
        CHECK(passthrough.records[i].psnr ==
              doctest::Approx(psnr(raw[i].source, raw[i].target)));
    }

    // aggregate = mean of per-image values
    double mean = 0;
    for (const auto& r : passthrough.records) mean += r.ssim / 3.0;
    CHECK(passthrough.mean_ssim == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("report serialization uses the inf sentinel and sorts by id") {
    EvalReport report;
    report.records = {{"a", std::numeric_limits<double>::infinity(), 1.0}, {"b", 12.5, 0.5}};
    report.count = 2;
    report.mean_psnr = std::numeric_limits<double>::infinity();
    report.mean_ssim = 0.75;
    std::ostringstream os;
    write_report(os, report);
    std::string text = os.str();
    CHECK(text.find("image a psnr inf ssim 1.000000") != std::string::npos);
    CHECK(text.find("image b psnr 12.500000") != std::string::npos);
    CHECK(text.find("aggregate count 2 psnr inf") != std::string::npos);
}

TEST_CASE("infer: shape preservation and byte-determinism") {
    Trainer t(tiny_cfg());
    Rng rng(12);
    Image8 input(30, 47);
    for (auto& p : input.pixels) p = (unsigned char)rng.uniform_index(256);

    Image8 out1 = infer_image(t.gen, input);
    CHECK(out1.height == 30);
    CHECK(out1.width == 47);
    Image8 out2 = infer_image(t.gen, input);
    CHECK(out1.pixels == out2.pixels);

    fs::path dir = fs::temp_directory_path() / "bggan_test_infer";
    fs::create_directories(dir);
    write_png((dir / "in.png").string(), input);
    infer_file(t.gen, (dir / "in.png").string(), (dir / "out1.png").string());
    infer_file(t.gen, (dir / "in.png").string(), (dir / "out2.png").string());
    Image8 f1 = read_image((dir / "out1.png").string());
    Image8 f2 = read_image((dir / "out2.png").string());
    CHECK(f1.pixels == f2.pixels);
    CHECK(f1.height == 30);
    CHECK(f1.width == 47);

    CHECK_THROWS_AS(infer_file(t.gen, (dir / "absent.png").string(), (dir / "o.png").string()),
                    IoError);
}
