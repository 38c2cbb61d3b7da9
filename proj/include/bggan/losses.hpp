#pragma once

#include "bggan/critic.hpp"
#include "bggan/nn.hpp"

#include <cmath>
#include <map>
#include <string>

namespace bggan {

/// Hybrid loss coefficients; defaults are the training recipe's weights.
struct LossWeights {
    double w_l1 = 0.5;
    double w_ssim = 0.05;
    double w_vgg = 0.1;
    double w_adv = 1.0;
};

struct LossReport {
    double total = 0;
    std::map<std::string, double> per_term;
};

template <typename Scalar>
Var<Scalar> l1_loss_v(const Var<Scalar>& a, const Var<Scalar>& b) {
    require_same_shape(a.value(), b.value(), "l1_loss");
    return mean_all(vabs(a - b));
}

template <typename Scalar>
Scalar l1_loss(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b) {
    NoGradGuard ng;
    return l1_loss_v(make_constant(a), make_constant(b)).value().data[0];
}

struct SsimParams {
    Index window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 2.0;  // [-1,1] images
};

template <typename Scalar>
Tensor4<Scalar> gaussian_window(Index size, double sigma) {
    Tensor4<Scalar> k({1, 1, size, size});
    const double c = (size - 1) / 2.0;
    double sum = 0;
    for (Index y = 0; y < size; ++y)
        for (Index x = 0; x < size; ++x) {
            const double d2 = (y - c) * (y - c) + (x - c) * (x - c);
            const double v = std::exp(-d2 / (2 * sigma * sigma));
            k(0, 0, y, x) = Scalar(v);
            sum += v;
        }
    k.data = k.data / Scalar(sum);
    return k;
}

/// Mean SSIM over sliding Gaussian windows (valid positions), averaged over
/// channels and batch.
template <typename Scalar>
Var<Scalar> ssim_v(const Var<Scalar>& a, const Var<Scalar>& b, const SsimParams& p = {}) {
    require_same_shape(a.value(), b.value(), "ssim");
    const Shape4& s = a.shape();
    if (s[2] < p.window || s[3] < p.window)
        throw ShapeError("ssim: image " + shape_str(s) + " smaller than window " +
                         std::to_string(p.window));
    const Scalar c1 = Scalar(p.k1 * p.dynamic_range) * Scalar(p.k1 * p.dynamic_range);
    const Scalar c2 = Scalar(p.k2 * p.dynamic_range) * Scalar(p.k2 * p.dynamic_range);
    Tensor4<Scalar> win = gaussian_window<Scalar>(p.window, p.sigma);
    auto w = [&](const Var<Scalar>& x) { return dwconv_fixed(x, win, 0); };

    Var<Scalar> mu_a = w(a);
    Var<Scalar> mu_b = w(b);
    Var<Scalar> mu_aa = mu_a * mu_a;
    Var<Scalar> mu_bb = mu_b * mu_b;
    Var<Scalar> mu_ab = mu_a * mu_b;
    Var<Scalar> sig_a = w(a * a) - mu_aa;
    Var<Scalar> sig_b = w(b * b) - mu_bb;
    Var<Scalar> sig_ab = w(a * b) - mu_ab;

    Var<Scalar> num = scalar_add(scalar_mul(mu_ab, Scalar(2)), c1) *
                      scalar_add(scalar_mul(sig_ab, Scalar(2)), c2);
    Var<Scalar> den = scalar_add(mu_aa + mu_bb, c1) * scalar_add(sig_a + sig_b, c2);
    return mean_all(num / den);
}

template <typename Scalar>
Scalar ssim(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b, const SsimParams& p = {}) {
    NoGradGuard ng;
    return ssim_v(make_constant(a), make_constant(b), p).value().data[0];
}

/// 1 - SSIM: bounded in [0,2], zero at equality, same gradient field as -SSIM.
template <typename Scalar>
Var<Scalar> neg_ssim_loss_v(const Var<Scalar>& a, const Var<Scalar>& b, const SsimParams& p = {}) {
    return scalar_add(scalar_mul(ssim_v(a, b, p), Scalar(-1)), Scalar(1));
}

template <typename Scalar>
Scalar neg_ssim_loss(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b, const SsimParams& p = {}) {
    NoGradGuard ng;
    return neg_ssim_loss_v(make_constant(a), make_constant(b), p).value().data[0];
}

// ---------------------------------------------------------------------------
// Perceptual loss

enum class FxSource { pretrained_file, seeded_random, identity };

/// Frozen convolutional feature stack. `seeded_random` is the self-contained
/// desk extractor; `pretrained_file` loads a VGG19-shaped conv stack from a
/// checkpoint-format weights file and taps relu5_4 by default; `identity`
/// taps the input itself (reduces the loss to L1).
template <typename Scalar>
struct FeatureExtractor {
    enum class LayerKind { conv_s1, conv_s2, pool };
    struct Layer {
        LayerKind kind = LayerKind::conv_s1;
        Conv2d<Scalar> conv;  // unused for pool
        std::string name;
    };

    std::vector<Layer> layers;
    std::string tap_point;
    FxSource source = FxSource::seeded_random;

    static FeatureExtractor identity_stub() {
        FeatureExtractor fx;
        fx.source = FxSource::identity;
        fx.tap_point = "input";
        return fx;
    }

    /// Small frozen random stack so the whole pipeline runs with no external
    /// weight downloads.
    static FeatureExtractor desk(std::uint64_t seed) {
        FeatureExtractor fx;
        fx.source = FxSource::seeded_random;
        Rng rng(seed);
        auto conv = [&](Index in, Index out, LayerKind kind, const std::string& name) {
            Layer l;
            l.kind = kind;
            l.conv = Conv2d<Scalar>::init(in, out, 3, kind == LayerKind::conv_s2 ? 2 : 1, 1, rng,
                                          /*trainable=*/false);
            // moderate scale keeps activations O(1) for gradient checks
            l.conv.weight.value().data *= Scalar(5);
            l.name = name;
            return l;
        };
        fx.layers.push_back(conv(3, 8, LayerKind::conv_s1, "feat1"));
        fx.layers.push_back(conv(8, 16, LayerKind::conv_s2, "feat2"));
        fx.layers.push_back(conv(16, 16, LayerKind::conv_s1, "feat3"));
        fx.tap_point = "feat3";
        return fx;
    }

    Var<Scalar> forward(const Var<Scalar>& x) const {
        if (source == FxSource::identity) return x;
        Var<Scalar> h = x;
        for (const auto& l : layers) {
            if (l.kind == LayerKind::pool) {
                h = maxpool(h, 2, 2);
            } else {
                h = relu(l.conv.forward(h));
            }
            if (l.name == tap_point) return h;
        }
        throw ConfigError("FeatureExtractor: tap point '" + tap_point + "' not found");
    }
};

/// Eq-style perceptual distance: mean absolute difference of tap-point
/// feature maps (plain mean over all feature elements).
template <typename Scalar>
Var<Scalar> perceptual_loss_v(const FeatureExtractor<Scalar>& fx, const Var<Scalar>& gen,
                              const Var<Scalar>& gt) {
    require_same_shape(gen.value(), gt.value(), "perceptual_loss");
    Var<Scalar> fg = fx.forward(gen);
    Var<Scalar> ft = fx.forward(gt);
    return mean_all(vabs(fg - ft));
}

template <typename Scalar>
Scalar perceptual_loss(const FeatureExtractor<Scalar>& fx, const Tensor4<Scalar>& gen,
                       const Tensor4<Scalar>& gt) {
    NoGradGuard ng;
    return perceptual_loss_v(fx, make_constant(gen), make_constant(gt)).value().data[0];
}

/// Generator adversarial term: negative mean critic score, averaged
/// uniformly across the critics.
template <typename Scalar>
Var<Scalar> adversarial_gen_loss_v(const MultiCritic<Scalar>& mc, const Var<Scalar>& fake) {
    Var<Scalar> acc;
    for (const auto& c : mc.critics) {
        Var<Scalar> m = mean_all(c.forward(fake));
        acc = acc.defined() ? acc + m : m;
    }
    return scalar_mul(acc, Scalar(-1) / Scalar(mc.critics.size()));
}

// ---------------------------------------------------------------------------
// Weighted hybrids

template <typename Scalar>
struct LossParts {
    Var<Scalar> l1;
    Var<Scalar> ssim;  // the 1 - SSIM term
    Var<Scalar> vgg;
    Var<Scalar> adv;
};

template <typename Scalar>
struct WeightedLoss {
    Var<Scalar> total;
    LossReport report;
};

namespace detail {
template <typename Scalar>
double scalar_of(const Var<Scalar>& v) {
    return static_cast<double>(v.value().data[0]);
}
}  // namespace detail

/// total = w_l1*L1 + w_ssim*L_SSIM + w_vgg*L_VGG + w_adv*L_adv.
template <typename Scalar>
WeightedLoss<Scalar> hybrid_loss(const LossWeights& w, const LossParts<Scalar>& parts) {
    if (!parts.l1.defined() || !parts.ssim.defined() || !parts.vgg.defined() ||
        !parts.adv.defined())
        throw InvalidInputError("hybrid_loss: missing loss part");
    WeightedLoss<Scalar> out;
    out.total = scalar_mul(parts.l1, Scalar(w.w_l1)) + scalar_mul(parts.ssim, Scalar(w.w_ssim)) +
                scalar_mul(parts.vgg, Scalar(w.w_vgg)) + scalar_mul(parts.adv, Scalar(w.w_adv));
    out.report.per_term["l1"] = detail::scalar_of(parts.l1);
    out.report.per_term["ssim"] = detail::scalar_of(parts.ssim);
    out.report.per_term["vgg"] = detail::scalar_of(parts.vgg);
    out.report.per_term["adv"] = detail::scalar_of(parts.adv);
    out.report.total = detail::scalar_of(out.total);
    return out;
}

/// Ablation hybrid without the adversarial term.
template <typename Scalar>
WeightedLoss<Scalar> hybrid_loss_no_adv(const LossWeights& w, const LossParts<Scalar>& parts) {
    if (!parts.l1.defined() || !parts.ssim.defined() || !parts.vgg.defined())
        throw InvalidInputError("hybrid_loss_no_adv: missing loss part");
    WeightedLoss<Scalar> out;
    out.total = scalar_mul(parts.l1, Scalar(w.w_l1)) + scalar_mul(parts.ssim, Scalar(w.w_ssim)) +
                scalar_mul(parts.vgg, Scalar(w.w_vgg));
    out.report.per_term["l1"] = detail::scalar_of(parts.l1);
    out.report.per_term["ssim"] = detail::scalar_of(parts.ssim);
    out.report.per_term["vgg"] = detail::scalar_of(parts.vgg);
    out.report.total = detail::scalar_of(out.total);
    return out;
}

/// Rough-training objective: w_l1*L1 + w_ssim*(1 - SSIM).
template <typename Scalar>
WeightedLoss<Scalar> stage1_loss(const Var<Scalar>& gen, const Var<Scalar>& gt,
                                 const LossWeights& w = {}, const SsimParams& p = {}) {
    WeightedLoss<Scalar> out;
    Var<Scalar> l1 = l1_loss_v(gen, gt);
    Var<Scalar> ss = neg_ssim_loss_v(gen, gt, p);
    out.total = scalar_mul(l1, Scalar(w.w_l1)) + scalar_mul(ss, Scalar(w.w_ssim));
    out.report.per_term["l1"] = detail::scalar_of(l1);
    out.report.per_term["ssim"] = detail::scalar_of(ss);
    out.report.total = detail::scalar_of(out.total);
    return out;
}

}  // namespace bggan
