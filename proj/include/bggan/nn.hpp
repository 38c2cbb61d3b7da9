#pragma once

#include "bggan/innorm.hpp"
#include "bggan/ops.hpp"
#include "bggan/random.hpp"

#include <string>
#include <utility>
#include <vector>

namespace bggan {

template <typename Scalar>
using NamedParams = std::vector<std::pair<std::string, Var<Scalar>>>;

/// Zero-mean Gaussian init, std 0.02, zero biases.
inline constexpr double kInitStd = 0.02;

template <typename Scalar>
struct Conv2d {
    Var<Scalar> weight;  // (out, in, kh, kw)
    Var<Scalar> bias;    // (1, out, 1, 1)
    Index stride = 1;
    Index pad = 0;

    static Conv2d init(Index in_ch, Index out_ch, Index k, Index stride, Index pad, Rng& rng,
                       bool trainable = true) {
        Conv2d c;
        c.weight = make_leaf(rng.normal_tensor<Scalar>({out_ch, in_ch, k, k}, kInitStd), trainable);
        c.bias = make_leaf(Tensor4<Scalar>::zeros({1, out_ch, 1, 1}), trainable);
        c.stride = stride;
        c.pad = pad;
        return c;
    }

    Var<Scalar> forward(const Var<Scalar>& x) const {
        const Shape4& s = x.shape();
        const Shape4& ws = weight.shape();
        if (s[1] != ws[1])
            throw ShapeError("Conv2d: input channels " + std::to_string(s[1]) + " != " +
                             std::to_string(ws[1]));
        ConvGeom geom{s[0], s[1], s[2], s[3], ws[2], ws[3], stride, stride, pad, pad};
        Var<Scalar> cols = im2col(x, geom);
        Var<Scalar> wmat = reshape(weight, {1, 1, ws[0], ws[1] * ws[2] * ws[3]});
        Var<Scalar> y = cols_to_nchw(matmul(wmat, cols), s[0], geom.oh(), geom.ow());
        return y + bcast_to(bias, y.shape());
    }

    void collect(const std::string& prefix, NamedParams<Scalar>& out) const {
        out.emplace_back(prefix + "/w", weight);
        out.emplace_back(prefix + "/b", bias);
    }
};

template <typename Scalar>
struct ConvTranspose2d {
    Var<Scalar> weight;  // (in, out, kh, kw)
    Var<Scalar> bias;    // (1, out, 1, 1)
    Index stride = 2;
    Index pad = 1;

    static ConvTranspose2d init(Index in_ch, Index out_ch, Index k, Index stride, Index pad,
                                Rng& rng) {
        ConvTranspose2d c;
        c.weight = make_leaf(rng.normal_tensor<Scalar>({in_ch, out_ch, k, k}, kInitStd), true);
        c.bias = make_leaf(Tensor4<Scalar>::zeros({1, out_ch, 1, 1}), true);
        c.stride = stride;
        c.pad = pad;
        return c;
    }

    Var<Scalar> forward(const Var<Scalar>& x) const {
        const Shape4& s = x.shape();
        const Shape4& ws = weight.shape();
        if (s[1] != ws[0])
            throw ShapeError("ConvTranspose2d: input channels " + std::to_string(s[1]) + " != " +
                             std::to_string(ws[0]));
        const Index k = ws[2];
        const Index oh = (s[2] - 1) * stride - 2 * pad + k;
        const Index ow = (s[3] - 1) * stride - 2 * pad + k;
        // Scatter through the adjoint of the matching forward convolution.
        ConvGeom geom{s[0], ws[1], oh, ow, k, k, stride, stride, pad, pad};
        Var<Scalar> xcols = nchw_to_cols(x);  // (1,1,in, n*h*w)
        Var<Scalar> wmat = reshape(weight, {1, 1, ws[0], ws[1] * k * k});
        Var<Scalar> cols = matmul(transpose2d(wmat), xcols);
        Var<Scalar> y = col2im(cols, geom);
        return y + bcast_to(bias, y.shape());
    }

    void collect(const std::string& prefix, NamedParams<Scalar>& out) const {
        out.emplace_back(prefix + "/w", weight);
        out.emplace_back(prefix + "/b", bias);
    }
};

enum class NormMode { direct, avgpool, none, batch };

inline const char* norm_mode_name(NormMode m) {
    switch (m) {
        case NormMode::direct: return "direct";
        case NormMode::avgpool: return "avgpool";
        case NormMode::none: return "none";
        case NormMode::batch: return "batch";
    }
    return "?";
}

inline NormMode parse_norm_mode(const std::string& s) {
    if (s == "direct") return NormMode::direct;
    if (s == "avgpool") return NormMode::avgpool;
    if (s == "none") return NormMode::none;
    if (s == "batch") return NormMode::batch;
    throw ConfigError("unknown norm mode: " + s);
}

/// Batch normalization without affine parameters, always in batch-statistics
/// mode (ablation variant only).
template <typename Scalar>
Var<Scalar> batch_norm_v(const Var<Scalar>& x, Scalar epsilon) {
    const Shape4& s = x.shape();
    const Scalar inv = Scalar(1) / Scalar(s[0] * s[2] * s[3]);
    Var<Scalar> mean = scalar_mul(sum_to(x, {1, s[1], 1, 1}), inv);
    Var<Scalar> centered = x - bcast_to(mean, s);
    Var<Scalar> var = scalar_mul(sum_to(centered * centered, {1, s[1], 1, 1}), inv);
    return centered / bcast_to(vsqrt(scalar_add(var, epsilon)), s);
}

template <typename Scalar>
Var<Scalar> apply_norm(const Var<Scalar>& x, NormMode mode, Scalar epsilon) {
    switch (mode) {
        case NormMode::direct:
            return instance_norm_v(x, InConfig{epsilon, InMode::direct});
        case NormMode::avgpool:
            return instance_norm_v(x, InConfig{epsilon, InMode::avgpool});
        case NormMode::batch:
            return batch_norm_v(x, epsilon);
        case NormMode::none:
            return x;
    }
    return x;
}

/// conv / ReLU / norm / conv / ReLU with an additive skip from the input.
template <typename Scalar>
struct ResBlock {
    Conv2d<Scalar> conv1;
    Conv2d<Scalar> conv2;
    NormMode norm = NormMode::direct;
    Scalar epsilon = Scalar(1e-5);

    static ResBlock init(Index ch, NormMode norm, Scalar epsilon, Rng& rng) {
        ResBlock b;
        b.conv1 = Conv2d<Scalar>::init(ch, ch, 3, 1, 1, rng);
        b.conv2 = Conv2d<Scalar>::init(ch, ch, 3, 1, 1, rng);
        b.norm = norm;
        b.epsilon = epsilon;
        return b;
    }

    Var<Scalar> forward(const Var<Scalar>& x) const {
        Var<Scalar> h = relu(conv1.forward(x));
        h = apply_norm(h, norm, epsilon);
        h = relu(conv2.forward(h));
        return x + h;
    }

    void collect(const std::string& prefix, NamedParams<Scalar>& out) const {
        conv1.collect(prefix + "/conv1", out);
        conv2.collect(prefix + "/conv2", out);
    }
};

}  // namespace bggan
