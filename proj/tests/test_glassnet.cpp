#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bggan/glassnet.hpp"
#include "bggan/random.hpp"

using namespace bggan;

namespace {
GeneratorConfig tiny_cfg() {
    GeneratorConfig cfg;
    cfg.stage1_base_channels = 4;
    cfg.stage1_max_channels = 16;
    cfg.stage2_base_channels = 4;
    cfg.stage2_max_channels = 16;
    cfg.n_resblocks = 2;
    cfg.n_scales = 2;
    return cfg;
}
}  // namespace

TEST_CASE("default config channel schedule") {
    GeneratorConfig cfg;  // full-scale defaults
    cfg.validate();
    CHECK(cfg.encoder_widths(cfg.stage1_base_channels) == std::vector<Index>{16, 32, 64, 128});
    CHECK(cfg.encoder_widths(cfg.stage2_base_channels) == std::vector<Index>{32, 64, 128, 256});

    auto g = build_generator<float>(cfg, 1);
    CHECK(g.stage1.enc.back().weight.shape()[0] == 128);
    CHECK(g.stage2.enc.back().weight.shape()[0] == 256);

    GeneratorConfig bad = cfg;
    bad.stage1_max_channels = 100;
    CHECK_THROWS_AS(build_generator<float>(bad, 1), ConfigError);
}

TEST_CASE("deterministic build: same seed gives identical weights, counts seed-independent") {
    auto cfg = tiny_cfg();
    auto g1 = build_generator<float>(cfg, 9);
    auto g2 = build_generator<float>(cfg, 9);
    auto g3 = build_generator<float>(cfg, 10);

    auto p1 = g1.parameters(), p2 = g2.parameters(), p3 = g3.parameters();
    REQUIRE(p1.size() == p2.size());
    REQUIRE(p1.size() == p3.size());
    Index count1 = 0, count3 = 0;
    for (size_t i = 0; i < p1.size(); ++i) {
        CHECK(p1[i].first == p2[i].first);
        CHECK((p1[i].second.value().data == p2[i].second.value().data).all());
        count1 += p1[i].second.value().numel();
        count3 += p3[i].second.value().numel();
    }
    CHECK(count1 == count3);
}

TEST_CASE("forward preserves shape, outputs bounded, rough is clamped") {
    auto g = build_generator<float>(tiny_cfg(), 4);
    Rng rng(40);
    for (Shape4 s : {Shape4{1, 3, 64, 96}, Shape4{2, 3, 32, 32}}) {
        Tensor4f x = rng.uniform_tensor<float>(s, -1, 1);
        auto out = g.forward(make_constant(x));
        CHECK(out.final.shape() == s);
        CHECK(out.residual.shape() == s);
        CHECK(out.rough.shape() == s);
        CHECK(out.final.value().data.abs().maxCoeff() <= 1.0f);
        CHECK(out.residual.value().data.abs().maxCoeff() <= 1.0f);
        CHECK(out.rough.value().data.abs().maxCoeff() <= 1.0f);
        CHECK(out.final.value().data.isFinite().all());
    }

    // non-divisible input must be padded by the caller
    Tensor4f odd = rng.uniform_tensor<float>({1, 3, 30, 32}, -1, 1);
    CHECK_THROWS_AS(g.forward(make_constant(odd)), ShapeError);

    // zeros input: finite, in range
    Tensor4f z({1, 3, 32, 32}, 0.0f);
    auto out = g.forward(make_constant(z));
    CHECK(out.final.value().data.isFinite().all());
    CHECK(out.final.value().data.abs().maxCoeff() <= 1.0f);
}

TEST_CASE("rough equals clamp(input - residual)") {
    auto g = build_generator<float>(tiny_cfg(), 4);
    Rng rng(41);
    Tensor4f x = rng.uniform_tensor<float>({1, 3, 32, 32}, -1, 1);
    auto out = g.forward(make_constant(x));
    Tensor4f expect(x.shape);
    expect.data = (x.data - out.residual.value().data).max(-1.0f).min(1.0f);
    CHECK((out.rough.value().data - expect.data).abs().maxCoeff() == 0.0f);
}

TEST_CASE("determinism of forward, seed sensitivity of stage 2") {
    auto cfg = tiny_cfg();
    Rng rng(42);
    Tensor4f x = rng.uniform_tensor<float>({1, 3, 32, 32}, -1, 1);

    auto ga = build_generator<float>(cfg, 5);
    auto gb = build_generator<float>(cfg, 5);
    auto ya = ga.forward(make_constant(x));
    auto yb = gb.forward(make_constant(x));
    CHECK((ya.final.value().data == yb.final.value().data).all());

    auto gc = build_generator<float>(cfg, 6);
    Tensor4f rough = rng.uniform_tensor<float>({1, 3, 32, 32}, -1, 1);
    auto s2a = ga.stage2_forward(make_constant(rough));
    auto s2c = gc.stage2_forward(make_constant(rough));
    CHECK((s2a.value().data - s2c.value().data).abs().maxCoeff() > 1e-4f);
}

TEST_CASE("gradient flows to every parameter group") {
    auto g = build_generator<float>(tiny_cfg(), 8);
    Rng rng(43);
    Tensor4f x = rng.uniform_tensor<float>({1, 3, 16, 16}, -1, 1);
    auto out = g.forward(make_constant(x));
    auto grads = backward(mean_all(out.final));
    int with_grad = 0, nonzero = 0;
    for (auto& [name, p] : g.parameters()) {
        auto it = grads.find(p.node());
        if (it == grads.end()) continue;
        ++with_grad;
        CHECK(it->second.value().data.isFinite().all());
        if (it->second.value().data.abs().maxCoeff() > 0) ++nonzero;
    }
    CHECK(with_grad == (int)g.parameters().size());
    // all but at most a handful of parameter tensors see nonzero gradient at init
    CHECK(nonzero >= with_grad - 2);
}

TEST_CASE("pad_reflect_to_multiple") {
    Rng rng(44);
    Tensor4f x = rng.uniform_tensor<float>({1, 3, 10, 15}, -1, 1);
    auto [padded, crop] = pad_reflect_to_multiple(x, 8);
    CHECK(padded.shape == Shape4{1, 3, 16, 16});
    CHECK(crop.height == 10);
    CHECK(crop.width == 15);
    Tensor4f back = crop_to(padded, crop);
    CHECK((back.data == x.data).all());
    // reflected row: padded row 10 mirrors row 8
    CHECK(padded(0, 1, 10, 3) == x(0, 1, 8, 3));

    auto [same, crop2] = pad_reflect_to_multiple(x, 5);
    CHECK(same.shape == Shape4{1, 3, 10, 15});
    CHECK((crop_to(same, crop2).data == x.data).all());

    CHECK_THROWS_AS(pad_reflect_to_multiple(Tensor4f({1, 3, 0, 4}), 8), InvalidInputError);
}

TEST_CASE("stage-2 identity stub: final equals rough") {
    // if stage 2 is the identity, forward's final is exactly the rough image;
    // emulate by comparing the composed contract directly
    auto g = build_generator<float>(tiny_cfg(), 4);
    Rng rng(45);
    Tensor4f x = rng.uniform_tensor<float>({1, 3, 32, 32}, -1, 1);
    auto out = g.forward(make_constant(x));
    auto manual_final = g.stage2_forward(out.rough);
    CHECK((out.final.value().data == manual_final.value().data).all());
}
