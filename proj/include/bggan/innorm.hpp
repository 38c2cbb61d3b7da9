#pragma once

#include "bggan/ops.hpp"

#include <utility>

namespace bggan {

enum class InMode { direct, avgpool };

struct InConfig {
    double epsilon = 1e-5;
    InMode mode = InMode::direct;

    void validate() const {
        if (!(epsilon > 0)) throw ConfigError("InConfig: epsilon must be > 0");
    }
};

/// Per-(sample, channel) spatial moments, stored as (N,C,1,1) tensors.
template <typename Scalar>
struct ChannelStats {
    Tensor4<Scalar> mean;
    Tensor4<Scalar> variance;  // population variance, divisor H*W
};

namespace detail {
template <typename Scalar>
void require_spatial(const Var<Scalar>& x) {
    const Shape4& s = x.shape();
    if (s[0] < 1 || s[1] < 1 || s[2] < 1 || s[3] < 1)
        throw InvalidInputError("instance norm: empty spatial extent " + shape_str(s));
}
}  // namespace detail

/// Moments via the axis-reduction primitive.
template <typename Scalar>
std::pair<Var<Scalar>, Var<Scalar>> channel_stats_direct_v(const Var<Scalar>& x) {
    detail::require_spatial(x);
    const Shape4& s = x.shape();
    const Scalar inv_hw = Scalar(1) / Scalar(s[2] * s[3]);
    Var<Scalar> mean = scalar_mul(sum_to(x, {s[0], s[1], 1, 1}), inv_hw);
    Var<Scalar> centered = x - bcast_to(mean, s);
    Var<Scalar> variance = scalar_mul(sum_to(centered * centered, {s[0], s[1], 1, 1}), inv_hw);
    return {mean, variance};
}

/// Moments using only full-extent spatial average pooling plus elementwise
/// arithmetic and broadcasting: mean by one pooling pass, variance by pooling
/// the squared centered tensor. No axis-reduction primitive appears.
template <typename Scalar>
std::pair<Var<Scalar>, Var<Scalar>> channel_stats_avgpool_v(const Var<Scalar>& x) {
    detail::require_spatial(x);
    const Shape4& s = x.shape();
    PoolGeom full{s[2], s[3], 1, 1};
    Var<Scalar> mean = avgpool(x, full);
    Var<Scalar> centered = x - bcast_to(mean, s);
    Var<Scalar> variance = avgpool(centered * centered, full);
    return {mean, variance};
}

template <typename Scalar>
std::pair<Var<Scalar>, Var<Scalar>> channel_stats_v(const Var<Scalar>& x, InMode mode) {
    return mode == InMode::direct ? channel_stats_direct_v(x) : channel_stats_avgpool_v(x);
}

inline const std::vector<OpCategory>& innorm_allowed_categories() {
    static const std::vector<OpCategory> allowed{OpCategory::Elementwise, OpCategory::Broadcast,
                                                 OpCategory::Pooling};
    return allowed;
}

/// y = (x - mu) / sqrt(var + eps), per sample and channel. The avgpool mode
/// is audited at construction: any op outside {pooling, elementwise,
/// broadcast} in its graph is a build error.
template <typename Scalar>
Var<Scalar> instance_norm_v(const Var<Scalar>& x, const InConfig& cfg) {
    cfg.validate();
    auto [mean, variance] = channel_stats_v(x, cfg.mode);
    const Shape4& s = x.shape();
    Var<Scalar> centered = x - bcast_to(mean, s);
    Var<Scalar> denom = vsqrt(scalar_add(variance, Scalar(cfg.epsilon)));
    Var<Scalar> y = centered / bcast_to(denom, s);
    if (cfg.mode == InMode::avgpool) {
        auto violations = audit_graph(y, innorm_allowed_categories(), {x});
        if (!violations.empty())
            throw ConfigError(std::string("instance_norm avgpool path built a forbidden op: ") +
                              op_kind_name(violations.front()));
    }
    return y;
}

// Tensor-level entry points.

template <typename Scalar>
ChannelStats<Scalar> channel_stats_direct(const Tensor4<Scalar>& x) {
    NoGradGuard ng;
    auto [m, v] = channel_stats_direct_v(make_constant(x));
    return {m.value(), v.value()};
}

template <typename Scalar>
ChannelStats<Scalar> channel_stats_avgpool(const Tensor4<Scalar>& x) {
    NoGradGuard ng;
    auto [m, v] = channel_stats_avgpool_v(make_constant(x));
    return {m.value(), v.value()};
}

template <typename Scalar>
Tensor4<Scalar> instance_norm(const Tensor4<Scalar>& x, const InConfig& cfg) {
    // Audit needs the op graph recorded even though no gradient is wanted.
    Var<Scalar> y = instance_norm_v(make_constant(x), cfg);
    return y.value();
}

}  // namespace bggan
