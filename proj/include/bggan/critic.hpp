#pragma once

#include "bggan/nn.hpp"

#include <functional>
#include <string>
#include <vector>

namespace bggan {

struct CriticConfig {
    std::vector<Index> depths{2, 3, 4};
    Index base_channels = 64;
    double gp_lambda = 10.0;

    void validate() const {
        if (depths.empty()) throw ConfigError("CriticConfig: depths must be non-empty");
        for (Index d : depths)
            if (d < 1) throw ConfigError("CriticConfig: every depth must be >= 1");
        if (base_channels < 1) throw ConfigError("CriticConfig: base_channels must be positive");
        if (gp_lambda < 0) throw ConfigError("CriticConfig: gp_lambda must be >= 0");
    }
};

/// Receptive field of one output score of a depth-d patch critic:
/// d stride-2 4x4 convs followed by two stride-1 4x4 convs, composed via
/// r <- r*s + (k - s) from the output backwards.
inline Index patchgan_receptive_field(Index depth) {
    Index r = 1;
    r += 3;  // output conv, k=4 s=1
    r += 3;  // pre-output conv, k=4 s=1
    for (Index i = 0; i < depth; ++i) r = r * 2 + 2;  // k=4 s=2
    return r;
}

/// Wasserstein patch critic: score map, no output nonlinearity.
template <typename Scalar>
struct PatchCritic {
    std::vector<Conv2d<Scalar>> down;  // stride-2 blocks
    Conv2d<Scalar> mid;                // stride-1 widening block
    Conv2d<Scalar> head;               // stride-1 1-channel score conv
    Index depth = 0;
    Scalar epsilon = Scalar(1e-5);

    static constexpr Index kChannelCap = 512;
    static constexpr Scalar kLeakySlope = Scalar(0.2);

    static PatchCritic init(Index depth, Index base, Rng& rng) {
        PatchCritic c;
        c.depth = depth;
        Index in_ch = 3;
        for (Index k = 0; k < depth; ++k) {
            Index out_ch = std::min<Index>(base << k, kChannelCap);
            c.down.push_back(Conv2d<Scalar>::init(in_ch, out_ch, 4, 2, 1, rng));
            in_ch = out_ch;
        }
        Index mid_ch = std::min<Index>(base << depth, kChannelCap);
        c.mid = Conv2d<Scalar>::init(in_ch, mid_ch, 4, 1, 1, rng);
        c.head = Conv2d<Scalar>::init(mid_ch, 1, 4, 1, 1, rng);
        return c;
    }

    /// Smallest input side producing a 1x1 score map.
    Index min_input_side() const { return 3 << depth; }

    Var<Scalar> forward(const Var<Scalar>& x) const {
        const Shape4& s = x.shape();
        if (s[2] < min_input_side() || s[3] < min_input_side())
            throw ShapeError("PatchCritic depth " + std::to_string(depth) + ": input " +
                             shape_str(s) + " below minimum side " +
                             std::to_string(min_input_side()));
        Var<Scalar> h = x;
        for (size_t i = 0; i < down.size(); ++i) {
            h = down[i].forward(h);
            if (i > 0) h = instance_norm_v(h, InConfig{double(epsilon), InMode::direct});
            h = leaky_relu(h, kLeakySlope);
        }
        h = mid.forward(h);
        h = instance_norm_v(h, InConfig{double(epsilon), InMode::direct});
        h = leaky_relu(h, kLeakySlope);
        return head.forward(h);  // unbounded scores
    }

    void collect(const std::string& prefix, NamedParams<Scalar>& out) const {
        for (size_t i = 0; i < down.size(); ++i)
            down[i].collect(prefix + "/down" + std::to_string(i), out);
        mid.collect(prefix + "/mid", out);
        head.collect(prefix + "/head", out);
    }
};

template <typename Scalar>
struct MultiCritic {
    std::vector<PatchCritic<Scalar>> critics;
    CriticConfig config;

    NamedParams<Scalar> parameters() const {
        NamedParams<Scalar> p;
        for (size_t i = 0; i < critics.size(); ++i)
            critics[i].collect("critic" + std::to_string(i), p);
        return p;
    }
};

template <typename Scalar>
MultiCritic<Scalar> build_critics(const CriticConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    MultiCritic<Scalar> mc;
    mc.config = cfg;
    for (Index d : cfg.depths)
        mc.critics.push_back(PatchCritic<Scalar>::init(d, cfg.base_channels, rng));
    return mc;
}

template <typename Scalar>
std::vector<Var<Scalar>> critic_scores(const MultiCritic<Scalar>& mc, const Var<Scalar>& img) {
    std::vector<Var<Scalar>> maps;
    for (const auto& c : mc.critics) maps.push_back(c.forward(img));
    return maps;
}

template <typename Scalar>
using ScoreFn = std::function<Var<Scalar>(const Var<Scalar>&)>;

/// WGAN-GP penalty over arbitrary score functions: for per-sample uniform
/// interpolates between real and fake, mean over critics and samples of
/// (||grad of the per-sample mean score||_2 - 1)^2. Returned un-multiplied;
/// the caller applies gp_lambda.
template <typename Scalar>
Var<Scalar> gradient_penalty_fn(const std::vector<ScoreFn<Scalar>>& score_fns,
                                const Tensor4<Scalar>& real, const Tensor4<Scalar>& fake,
                                Rng& rng) {
    require_same_shape(real, fake, "gradient_penalty");
    if (score_fns.empty()) throw ConfigError("gradient_penalty: no critics");
    const Shape4& s = real.shape;
    Tensor4<Scalar> xhat_t(s);
    for (Index n = 0; n < s[0]; ++n) {
        const Scalar u = Scalar(rng.uniform());
        const Index stride = s[1] * s[2] * s[3];
        xhat_t.data.segment(n * stride, stride) =
            u * real.data.segment(n * stride, stride) +
            (Scalar(1) - u) * fake.data.segment(n * stride, stride);
    }
    Var<Scalar> xhat = make_leaf(std::move(xhat_t), true);

    Var<Scalar> penalty;
    for (const auto& fn : score_fns) {
        Var<Scalar> score = fn(xhat);
        const Shape4& ss = score.shape();
        const Scalar inv = Scalar(1) / Scalar(ss[1] * ss[2] * ss[3]);
        Var<Scalar> per_sample = scalar_mul(sum_to(score, {ss[0], 1, 1, 1}), inv);
        GradMap<Scalar> grads = backward(sum_all(per_sample), /*create_graph=*/true);
        auto it = grads.find(xhat.node());
        if (it == grads.end())
            throw InvalidInputError("gradient_penalty: critic score does not depend on its input");
        Var<Scalar> gx = it->second;
        Var<Scalar> gsq = sum_to(gx * gx, {s[0], 1, 1, 1});
        Var<Scalar> norm = vsqrt(scalar_add(gsq, Scalar(1e-12)));
        Var<Scalar> excess = scalar_add(norm, Scalar(-1));
        Var<Scalar> p = mean_all(excess * excess);
        penalty = penalty.defined() ? penalty + p : p;
    }
    return scalar_mul(penalty, Scalar(1) / Scalar(score_fns.size()));
}

template <typename Scalar>
Var<Scalar> gradient_penalty_v(const MultiCritic<Scalar>& mc, const Tensor4<Scalar>& real,
                               const Tensor4<Scalar>& fake, Rng& rng) {
    std::vector<ScoreFn<Scalar>> fns;
    for (const auto& c : mc.critics)
        fns.push_back([&c](const Var<Scalar>& x) { return c.forward(x); });
    return gradient_penalty_fn(fns, real, fake, rng);
}

template <typename Scalar>
Scalar gradient_penalty(const MultiCritic<Scalar>& mc, const Tensor4<Scalar>& real,
                        const Tensor4<Scalar>& fake, Rng& rng) {
    return gradient_penalty_v(mc, real, fake, rng).value().data[0];
}

template <typename Scalar>
struct CriticLoss {
    Var<Scalar> total;
    Scalar wasserstein = 0;  // mean D(fake) - mean D(real), averaged over critics
    Scalar penalty = 0;      // un-weighted gradient penalty
};

/// Critic objective: mean over critics of [mean D(fake) - mean D(real)]
/// plus gp_lambda * gradient_penalty. `fake` must already be detached from
/// the generator.
template <typename Scalar>
CriticLoss<Scalar> critic_loss(const MultiCritic<Scalar>& mc, const Tensor4<Scalar>& real,
                               const Tensor4<Scalar>& fake, Rng& rng) {
    require_same_shape(real, fake, "critic_loss");
    Var<Scalar> real_v = make_constant(real);
    Var<Scalar> fake_v = make_constant(fake);
    Var<Scalar> w;
    for (const auto& c : mc.critics) {
        Var<Scalar> term = mean_all(c.forward(fake_v)) - mean_all(c.forward(real_v));
        w = w.defined() ? w + term : term;
    }
    w = scalar_mul(w, Scalar(1) / Scalar(mc.critics.size()));
    CriticLoss<Scalar> out;
    out.wasserstein = w.value().data[0];
    if (mc.config.gp_lambda > 0) {
        Var<Scalar> gp = gradient_penalty_v(mc, real, fake, rng);
        out.penalty = gp.value().data[0];
        out.total = w + scalar_mul(gp, Scalar(mc.config.gp_lambda));
    } else {
        out.penalty = 0;
        out.total = w;
    }
    return out;
}

}  // namespace bggan
