#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bggan/gradcheck.hpp"
#include "bggan/innorm.hpp"
#include "bggan/random.hpp"

#include <cmath>

using namespace bggan;

namespace {
Tensor4f four_pixel() {
    Tensor4f x({1, 1, 2, 2});
    x(0, 0, 0, 0) = 1;
    x(0, 0, 0, 1) = 3;
    x(0, 0, 1, 0) = 5;
    x(0, 0, 1, 1) = 7;
    return x;
}
}  // namespace

TEST_CASE("direct stats: hand-computed 2x2 case") {
    auto s = channel_stats_direct(four_pixel());
    CHECK(s.mean.data[0] == doctest::Approx(4.0));
    CHECK(s.variance.data[0] == doctest::Approx(5.0));
}

TEST_CASE("direct stats: constant channel, per-sample independence") {
    Tensor4f x({2, 2, 3, 3}, 0.0f);
    for (Index c = 0; c < 2; ++c)
        for (Index h = 0; h < 3; ++h)
            for (Index w = 0; w < 3; ++w) {
                x(0, c, h, w) = 2.5f;
                x(1, c, h, w) = 2.5f;
            }
    auto s = channel_stats_direct(x);
    for (Index i = 0; i < 4; ++i) {
        CHECK(s.mean.data[i] == doctest::Approx(2.5));
        CHECK(s.variance.data[i] == doctest::Approx(0.0));
    }

    // batch of two identical samples: identical per-sample stats
    Rng rng(5);
    Tensor4f r = rng.normal_tensor<float>({1, 3, 4, 4});
    Tensor4f b({2, 3, 4, 4});
    b.data.segment(0, r.numel()) = r.data;
    b.data.segment(r.numel(), r.numel()) = r.data;
    auto sb = channel_stats_direct(b);
    for (Index c = 0; c < 3; ++c) {
        CHECK(sb.mean(0, c, 0, 0) == sb.mean(1, c, 0, 0));
        CHECK(sb.variance(0, c, 0, 0) == sb.variance(1, c, 0, 0));
    }
}

TEST_CASE("avgpool stats match the direct oracle") {
    auto s = channel_stats_avgpool(four_pixel());
    CHECK(s.mean.data[0] == doctest::Approx(4.0));
    CHECK(s.variance.data[0] == doctest::Approx(5.0));

    Rng rng(7);
    Tensor4f x = rng.uniform_tensor<float>({3, 4, 8, 8}, -2, 2);
    auto d = channel_stats_direct(x);
    auto a = channel_stats_avgpool(x);
    CHECK((d.mean.data - a.mean.data).abs().maxCoeff() <= 1e-5f);
    CHECK((d.variance.data - a.variance.data).abs().maxCoeff() <= 1e-5f);

    Tensor4f c({1, 2, 5, 5}, 3.25f);
    auto sc = channel_stats_avgpool(c);
    CHECK(std::abs(sc.variance.data[0]) <= 1e-7f);
    CHECK(std::abs(sc.variance.data[1]) <= 1e-7f);
}

TEST_CASE("instance_norm values and trivial cases") {
    InConfig cfg;
    Tensor4f c({2, 3, 4, 4}, 0.75f);
    auto y = instance_norm(c, cfg);
    CHECK(y.data.abs().maxCoeff() <= 1e-3f);  // mu == x, output ~0

    auto z = instance_norm(four_pixel(), cfg);
    const float denom = std::sqrt(5.0f + 1e-5f);
    CHECK(z(0, 0, 0, 0) == doctest::Approx(-3 / denom));
    CHECK(z(0, 0, 0, 1) == doctest::Approx(-1 / denom));
    CHECK(z(0, 0, 1, 0) == doctest::Approx(1 / denom));
    CHECK(z(0, 0, 1, 1) == doctest::Approx(3 / denom));
}

TEST_CASE("equivalence: direct vs avgpool over 100 random tensors") {
    Rng rng(42);
    for (int i = 0; i < 100; ++i) {
        Shape4 s{1 + Index(rng.uniform_index(4)), 1 + Index(rng.uniform_index(8)),
                 1 + Index(rng.uniform_index(32)), 1 + Index(rng.uniform_index(32))};
        Tensor4f x = rng.uniform_tensor<float>(s, -3, 3);
        auto yd = instance_norm(x, InConfig{1e-5, InMode::direct});
        auto ya = instance_norm(x, InConfig{1e-5, InMode::avgpool});
        CHECK((yd.data - ya.data).abs().maxCoeff() <= 1e-5f);
    }
}

TEST_CASE("normalization properties: idempotence, shift, scale") {
    Rng rng(9);
    // sigma^2 >> epsilon so the stabilizer is negligible
    Tensor4f x = rng.uniform_tensor<float>({2, 3, 8, 8}, -3, 3);
    InConfig cfg;
    auto once = instance_norm(x, cfg);
    auto twice = instance_norm(once, cfg);
    CHECK((once.data - twice.data).abs().maxCoeff() <= 1e-4f);

    Tensor4f shifted = x;
    shifted.data += 0.37f;
    CHECK((instance_norm(shifted, cfg).data - once.data).abs().maxCoeff() <= 1e-5f);

    Tensor4f scaled = x;
    scaled.data *= 2.9f;
    CHECK((instance_norm(scaled, cfg).data - once.data).abs().maxCoeff() <= 1e-5f);
}

TEST_CASE("instance_norm gradient matches finite differences") {
    Rng rng(10);
    Tensor4d x = rng.normal_tensor<double>({2, 2, 4, 4});
    for (InMode mode : {InMode::direct, InMode::avgpool}) {
        double err = gradcheck_max_rel_error(
            [mode](const Var<double>& v) {
                return mean_all(instance_norm_v(v, InConfig{1e-5, mode}));
            },
            x, 1e-3);
        CHECK(err < 1e-3);
    }
}

TEST_CASE("op-category audit: avgpool path passes, direct path fails") {
    Rng rng(11);
    Tensor4f x = rng.normal_tensor<float>({1, 2, 6, 6});
    Var<float> xv = make_constant(x);

    Var<float> ya = instance_norm_v(xv, InConfig{1e-5, InMode::avgpool});
    CHECK(audit_graph(ya, innorm_allowed_categories(), {xv}).empty());

    Var<float> yd = instance_norm_v(xv, InConfig{1e-5, InMode::direct});
    CHECK(!audit_graph(yd, innorm_allowed_categories(), {xv}).empty());
}

TEST_CASE("error paths") {
    CHECK_THROWS_AS(instance_norm(Tensor4f({1, 1, 0, 4}), InConfig{}),
                    InvalidInputError);
    CHECK_THROWS_AS(instance_norm(four_pixel(), InConfig{0.0, InMode::direct}), ConfigError);
}
