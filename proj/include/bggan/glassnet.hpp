#pragma once

#include "bggan/nn.hpp"

#include <string>
#include <vector>

namespace bggan {

struct GeneratorConfig {
    Index stage1_base_channels = 16;
    Index stage1_max_channels = 128;
    Index stage2_base_channels = 32;
    Index stage2_max_channels = 256;
    Index n_resblocks = 9;
    Index n_scales = 3;  // stride-2 downsamples per stage
    NormMode norm_mode = NormMode::direct;
    double epsilon = 1e-5;

    void validate() const {
        if (stage1_base_channels < 1 || stage2_base_channels < 1 || n_resblocks < 1 || n_scales < 1)
            throw ConfigError("GeneratorConfig: channel/scale counts must be positive");
        if (stage1_max_channels != (stage1_base_channels << n_scales))
            throw ConfigError("GeneratorConfig: stage1 max must be base * 2^n_scales (" +
                              std::to_string(stage1_base_channels << n_scales) + ")");
        if (stage2_max_channels != (stage2_base_channels << n_scales))
            throw ConfigError("GeneratorConfig: stage2 max must be base * 2^n_scales (" +
                              std::to_string(stage2_base_channels << n_scales) + ")");
    }

    Index divisor() const { return Index(1) << n_scales; }

    /// Encoder widths including the stem: base, 2*base, ..., max.
    std::vector<Index> encoder_widths(Index base) const {
        std::vector<Index> w{base};
        for (Index i = 0; i < n_scales; ++i) w.push_back(w.back() * 2);
        return w;
    }
};

/// One encoder/resblock/decoder stage with concatenation skips and a
/// tanh-bounded 3-channel output.
template <typename Scalar>
struct StageNet {
    Conv2d<Scalar> stem;                        // 3 -> base, stride 1
    std::vector<Conv2d<Scalar>> enc;            // stride-2 downsamples
    std::vector<ResBlock<Scalar>> res;          // at max width
    std::vector<ConvTranspose2d<Scalar>> dec;   // stride-2 upsamples
    Conv2d<Scalar> out;                         // 2*base -> 3, stride 1, tanh
    Index n_scales = 0;

    static StageNet init(Index base, Index n_scales, Index n_resblocks, NormMode norm,
                         Scalar epsilon, Rng& rng) {
        StageNet s;
        s.n_scales = n_scales;
        s.stem = Conv2d<Scalar>::init(3, base, 3, 1, 1, rng);
        Index ch = base;
        for (Index i = 0; i < n_scales; ++i) {
            s.enc.push_back(Conv2d<Scalar>::init(ch, ch * 2, 3, 2, 1, rng));
            ch *= 2;
        }
        for (Index i = 0; i < n_resblocks; ++i)
            s.res.push_back(ResBlock<Scalar>::init(ch, norm, epsilon, rng));
        for (Index i = 0; i < n_scales; ++i) {
            // concat with the mirrored encoder feature doubles the input width
            s.dec.push_back(ConvTranspose2d<Scalar>::init(ch * 2, ch / 2, 4, 2, 1, rng));
            ch /= 2;
        }
        s.out = Conv2d<Scalar>::init(base * 2, 3, 3, 1, 1, rng);
        return s;
    }

    Var<Scalar> forward(const Var<Scalar>& x) const {
        const Shape4& s = x.shape();
        const Index div = Index(1) << n_scales;
        if (s[1] != 3) throw ShapeError("StageNet: expected 3 input channels");
        if (s[2] % div != 0 || s[3] % div != 0)
            throw ShapeError("StageNet: spatial dims " + shape_str(s) + " not divisible by " +
                             std::to_string(div) + "; pad first");
        std::vector<Var<Scalar>> skips;
        Var<Scalar> h = relu(stem.forward(x));
        skips.push_back(h);
        for (const auto& e : enc) {
            h = relu(e.forward(h));
            skips.push_back(h);
        }
        for (const auto& r : res) h = r.forward(h);
        for (size_t i = 0; i < dec.size(); ++i) {
            h = concat_channels<Scalar>({h, skips[skips.size() - 1 - i]});
            h = relu(dec[i].forward(h));
        }
        h = concat_channels<Scalar>({h, skips.front()});
        return vtanh(out.forward(h));
    }

    void collect(const std::string& prefix, NamedParams<Scalar>& params) const {
        stem.collect(prefix + "/stem", params);
        for (size_t i = 0; i < enc.size(); ++i) enc[i].collect(prefix + "/enc" + std::to_string(i), params);
        for (size_t i = 0; i < res.size(); ++i) res[i].collect(prefix + "/res" + std::to_string(i), params);
        for (size_t i = 0; i < dec.size(); ++i) dec[i].collect(prefix + "/dec" + std::to_string(i), params);
        out.collect(prefix + "/out", params);
    }
};

template <typename Scalar>
struct GeneratorForward {
    Var<Scalar> final;
    Var<Scalar> residual;
    Var<Scalar> rough;
};

/// Two-stage generator: stage 1 predicts the residual between input and
/// target; the clamped rough estimate (input - residual) is refined by
/// stage 2.
template <typename Scalar>
struct Generator {
    StageNet<Scalar> stage1;
    StageNet<Scalar> stage2;
    GeneratorConfig config;

    Var<Scalar> stage1_forward(const Var<Scalar>& image) const { return stage1.forward(image); }
    Var<Scalar> stage2_forward(const Var<Scalar>& rough) const { return stage2.forward(rough); }

    GeneratorForward<Scalar> forward(const Var<Scalar>& image) const {
        GeneratorForward<Scalar> r;
        r.residual = stage1.forward(image);
        r.rough = clamp(image - r.residual, Scalar(-1), Scalar(1));
        r.final = stage2.forward(r.rough);
        return r;
    }

    NamedParams<Scalar> parameters() const {
        NamedParams<Scalar> p;
        stage1.collect("stage1", p);
        stage2.collect("stage2", p);
        return p;
    }
};

template <typename Scalar>
Generator<Scalar> build_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    Generator<Scalar> g;
    g.config = cfg;
    g.stage1 = StageNet<Scalar>::init(cfg.stage1_base_channels, cfg.n_scales, cfg.n_resblocks,
                                      cfg.norm_mode, Scalar(cfg.epsilon), rng);
    g.stage2 = StageNet<Scalar>::init(cfg.stage2_base_channels, cfg.n_scales, cfg.n_resblocks,
                                      cfg.norm_mode, Scalar(cfg.epsilon), rng);
    return g;
}

struct CropSpec {
    Index height = 0;
    Index width = 0;
};

/// Reflection-pad bottom/right so spatial dims become multiples of m; the
/// returned CropSpec restores the original size.
template <typename Scalar>
std::pair<Tensor4<Scalar>, CropSpec> pad_reflect_to_multiple(const Tensor4<Scalar>& x, Index m) {
    if (m < 1) throw InvalidInputError("pad_reflect_to_multiple: m must be >= 1");
    const Shape4& s = x.shape;
    if (s[2] < 1 || s[3] < 1) throw InvalidInputError("pad_reflect_to_multiple: empty image");
    const Index ph = (m - s[2] % m) % m;
    const Index pw = (m - s[3] % m) % m;
    CropSpec crop{s[2], s[3]};
    if (ph == 0 && pw == 0) return {x, crop};
    Tensor4<Scalar> out({s[0], s[1], s[2] + ph, s[3] + pw});
    for (Index n = 0; n < s[0]; ++n)
        for (Index c = 0; c < s[1]; ++c)
            for (Index y = 0; y < out.shape[2]; ++y) {
                Index sy = y < s[2] ? y : 2 * s[2] - 2 - y;
                sy = std::max<Index>(0, std::min(sy, s[2] - 1));
                for (Index w = 0; w < out.shape[3]; ++w) {
                    Index sx = w < s[3] ? w : 2 * s[3] - 2 - w;
                    sx = std::max<Index>(0, std::min(sx, s[3] - 1));
                    out(n, c, y, w) = x(n, c, sy, sx);
                }
            }
    return {out, crop};
}

template <typename Scalar>
Tensor4<Scalar> crop_to(const Tensor4<Scalar>& x, const CropSpec& crop) {
    const Shape4& s = x.shape;
    if (crop.height > s[2] || crop.width > s[3])
        throw ShapeError("crop_to: crop larger than tensor");
    Tensor4<Scalar> out({s[0], s[1], crop.height, crop.width});
    for (Index n = 0; n < s[0]; ++n)
        for (Index c = 0; c < s[1]; ++c)
            for (Index y = 0; y < crop.height; ++y)
                for (Index w = 0; w < crop.width; ++w) out(n, c, y, w) = x(n, c, y, w);
    return out;
}

}  // namespace bggan
