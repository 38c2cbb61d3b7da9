#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bggan/gradcheck.hpp"
#include "bggan/nn.hpp"
#include "bggan/ops.hpp"
#include "bggan/random.hpp"

using namespace bggan;

TEST_CASE("elementwise gradients match finite differences") {
    Rng rng(11);
    Tensor4d x = rng.uniform_tensor<double>({2, 2, 3, 3}, 0.2, 1.5);
    Tensor4d y = rng.uniform_tensor<double>({2, 2, 3, 3}, 0.2, 1.5);
    Var<double> yc = make_constant(y);

    auto check = [&](std::function<Var<double>(const Var<double>&)> f, double tol = 1e-6) {
        CHECK(gradcheck_max_rel_error(f, x, 1e-5) < tol);
    };
    check([&](const Var<double>& v) { return mean_all(v * yc); });
    check([&](const Var<double>& v) { return mean_all(v / yc); });
    check([&](const Var<double>& v) { return mean_all(yc / v); });
    check([&](const Var<double>& v) { return mean_all(vsqrt(v)); });
    check([&](const Var<double>& v) { return mean_all(vtanh(v)); });
    check([&](const Var<double>& v) { return mean_all(vabs(scalar_add(v, -0.7))); }, 1e-4);
    check([&](const Var<double>& v) { return mean_all(leaky_relu(scalar_add(v, -0.7), 0.2)); }, 1e-4);
    check([&](const Var<double>& v) { return mean_all(clamp(v, 0.4, 1.2)); }, 1e-4);
}

TEST_CASE("reduction, broadcast and shape op gradients") {
    Rng rng(12);
    Tensor4d x = rng.normal_tensor<double>({2, 3, 4, 4});
    CHECK(gradcheck_max_rel_error(
              [](const Var<double>& v) {
                  Var<double> m = sum_to(v, {2, 3, 1, 1});
                  return mean_all(v * bcast_to(m, v.shape()));
              },
              x, 1e-5) < 1e-6);
    CHECK(gradcheck_max_rel_error(
              [](const Var<double>& v) {
                  Var<double> lo = slice_channels(v, 0, 1);
                  Var<double> hi = slice_channels(v, 1, 2);
                  return mean_all(concat_channels<double>({hi, lo}) * v);
              },
              x, 1e-5) < 1e-6);
}

TEST_CASE("matmul and im2col/col2im adjoint pair") {
    Rng rng(13);
    Tensor4d a = rng.normal_tensor<double>({1, 1, 3, 4});
    Tensor4d b = rng.normal_tensor<double>({1, 1, 4, 5});
    Var<double> bc = make_constant(b);
    CHECK(gradcheck_max_rel_error(
              [&](const Var<double>& v) { return mean_all(matmul(v, bc)); }, a, 1e-5) < 1e-6);

    // <im2col(x), c> gradient equals col2im(c): checked via FD
    Tensor4d x = rng.normal_tensor<double>({2, 2, 5, 6});
    ConvGeom geom{2, 2, 5, 6, 3, 3, 2, 2, 1, 1};
    Tensor4d c = rng.normal_tensor<double>({1, 1, 2 * 9, 2 * geom.oh() * geom.ow()});
    Var<double> cv = make_constant(c);
    CHECK(gradcheck_max_rel_error(
              [&](const Var<double>& v) { return mean_all(im2col(v, geom) * cv); }, x, 1e-5) <
          1e-6);
}

TEST_CASE("avgpool adjoint and dwconv gradients") {
    Rng rng(14);
    Tensor4d x = rng.normal_tensor<double>({2, 2, 6, 6});
    CHECK(gradcheck_max_rel_error(
              [](const Var<double>& v) {
                  return mean_all(avgpool(v, PoolGeom{3, 3, 3, 3}) *
                                  avgpool(v, PoolGeom{3, 3, 3, 3}));
              },
              x, 1e-5) < 1e-6);
    Tensor4d k = rng.normal_tensor<double>({1, 1, 3, 3});
    CHECK(gradcheck_max_rel_error(
              [&](const Var<double>& v) {
                  Var<double> y = dwconv_fixed(v, k, 0);
                  return mean_all(y * y);
              },
              x, 1e-5) < 1e-6);
}

TEST_CASE("conv layer gradients w.r.t. input, weight, bias") {
    Rng rng(15);
    auto conv = Conv2d<double>::init(2, 3, 3, 2, 1, rng);
    Tensor4d x = rng.normal_tensor<double>({2, 2, 6, 6});

    CHECK(gradcheck_max_rel_error(
              [&](const Var<double>& v) { return mean_all(conv.forward(v)); }, x, 1e-5) < 1e-6);
    // weight gradient: rebuild a conv sharing stride/pad but using v as weight
    Var<double> xin = make_constant(x);
    CHECK(gradcheck_max_rel_error(
              [&](const Var<double>& v) {
                  Conv2d<double> c2 = conv;
                  c2.weight = v;
                  Var<double> y = c2.forward(xin);
                  return mean_all(y * y);
              },
              conv.weight.value(), 1e-5) < 1e-6);

    auto tconv = ConvTranspose2d<double>::init(2, 3, 4, 2, 1, rng);
    CHECK(gradcheck_max_rel_error(
              [&](const Var<double>& v) {
                  Var<double> y = tconv.forward(v);
                  return mean_all(y * y);
              },
              x, 1e-5) < 1e-6);
    CHECK(gradcheck_max_rel_error(
              [&](const Var<double>& v) {
                  ConvTranspose2d<double> t2 = tconv;
                  t2.weight = v;
                  return mean_all(t2.forward(xin));
              },
              tconv.weight.value(), 1e-5) < 1e-6);
}

TEST_CASE("transposed conv output size") {
    Rng rng(16);
    auto tconv = ConvTranspose2d<double>::init(4, 2, 4, 2, 1, rng);
    Tensor4d x = rng.normal_tensor<double>({1, 4, 5, 7});
    auto y = tconv.forward(make_constant(x));
    CHECK(y.shape() == Shape4{1, 2, 10, 14});
}

TEST_CASE("double backprop: second derivative of cubic") {
    // y = sum(x^3); dy/dx = 3x^2; z = sum((dy/dx)^2) has dz/dx = 36 x^3
    Rng rng(17);
    Tensor4d x = rng.uniform_tensor<double>({1, 1, 2, 3}, 0.5, 1.5);
    Var<double> xv = make_leaf(x, true);
    Var<double> y = sum_all(xv * xv * xv);
    auto g1 = backward(y, /*create_graph=*/true);
    Var<double> dydx = g1.at(xv.node());
    Var<double> z = sum_all(dydx * dydx);
    auto g2 = backward(z);
    Tensor4d dz = g2.at(xv.node()).value();
    for (Index i = 0; i < x.numel(); ++i)
        CHECK(dz.data[i] == doctest::Approx(36 * std::pow(x.data[i], 3.0)).epsilon(1e-9));
}

TEST_CASE("double backprop through a conv+norm critic block is finite and FD-consistent") {
    Rng rng(18);
    auto conv = Conv2d<double>::init(2, 2, 3, 1, 1, rng);
    Tensor4d x0 = rng.normal_tensor<double>({1, 2, 5, 5});

    // penalty(x0) = (||d mean(D)/dx||_2 - 1)^2 with D = leaky(conv(x))
    auto penalty_of = [&](const Tensor4d& xt) {
        Var<double> xv = make_leaf(xt, true);
        Var<double> score = mean_all(leaky_relu(conv.forward(xv), 0.2));
        auto g = backward(score, true);
        Var<double> gx = g.at(xv.node());
        Var<double> norm = vsqrt(scalar_add(sum_all(gx * gx), 1e-12));
        Var<double> e = scalar_add(norm, -1.0);
        return e * e;
    };

    // differentiate the penalty w.r.t. conv weight, compare against FD
    Var<double> w = conv.weight;
    Var<double> pen = penalty_of(x0);
    auto gw = backward(pen);
    REQUIRE(gw.count(w.node()) == 1);
    Tensor4d analytic = gw.at(w.node()).value();

    double step = 1e-5;
    for (Index i = 0; i < std::min<Index>(8, analytic.numel()); ++i) {
        const double orig = w.value().data[i];
        w.value().data[i] = orig + step;
        double up = penalty_of(x0).value().data[0];
        w.value().data[i] = orig - step;
        double dn = penalty_of(x0).value().data[0];
        w.value().data[i] = orig;
        double numeric = (up - dn) / (2 * step);
        CHECK(analytic.data[i] == doctest::Approx(numeric).epsilon(1e-4));
    }
}

TEST_CASE("audit flags reductions and passes pooling-only graphs") {
    Rng rng(19);
    Tensor4f x = rng.normal_tensor<float>({1, 2, 4, 4});
    Var<float> xv = make_constant(x);
    Var<float> pooled = avgpool(xv, PoolGeom{4, 4, 1, 1});
    CHECK(audit_graph(pooled, innorm_allowed_categories()).empty());
    Var<float> reduced = sum_to(xv, {1, 2, 1, 1});
    auto v = audit_graph(reduced, innorm_allowed_categories());
    REQUIRE(v.size() == 1);
    CHECK(v[0] == OpKind::SumTo);
}
