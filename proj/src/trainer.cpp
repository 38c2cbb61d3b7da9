#include "bggan/trainer.hpp"

#include <cmath>
#include <sstream>

namespace bggan {

namespace {

bool finite(double v) { return std::isfinite(v); }

// array name prefixes inside the trainer checkpoint
constexpr const char* kGen = "gen.";
constexpr const char* kCritic = "critic.";
constexpr const char* kOptGM = "optg.m.";
constexpr const char* kOptGV = "optg.v.";
constexpr const char* kOptDM = "optd.m.";
constexpr const char* kOptDV = "optd.v.";

}  // namespace

FeatureExtractor<float> build_feature_extractor(const RunConfig& cfg) {
    switch (cfg.fx_source) {
        case FxSource::identity: return FeatureExtractor<float>::identity_stub();
        case FxSource::seeded_random: return FeatureExtractor<float>::desk(cfg.fx_seed);
        case FxSource::pretrained_file: break;
    }
    if (cfg.fx_weights_file.empty())
        throw ConfigError("fx.mode=pretrained requires fx.weights_file");
    Checkpoint ckpt = load_checkpoint(cfg.fx_weights_file);

    FeatureExtractor<float> fx;
    fx.source = FxSource::pretrained_file;
    fx.tap_point = ckpt.meta_at("fx.tap");
    std::istringstream ls(ckpt.meta_at("fx.layers"));
    std::string tok;
    while (std::getline(ls, tok, ',')) {
        using LK = FeatureExtractor<float>::LayerKind;
        FeatureExtractor<float>::Layer layer;
        std::istringstream ts(tok);
        std::string kind, name, stride;
        std::getline(ts, kind, ':');
        std::getline(ts, name, ':');
        std::getline(ts, stride, ':');
        layer.name = name;
        if (kind == "pool") {
            layer.kind = LK::pool;
        } else if (kind == "conv") {
            Index s = stride.empty() ? 1 : std::stol(stride);
            layer.kind = s == 2 ? LK::conv_s2 : LK::conv_s1;
            const Tensor4f& w = ckpt.array(name + ".weight");
            Rng dummy(0);
            layer.conv = Conv2d<float>::init(w.shape[1], w.shape[0], w.shape[2], s,
                                             (w.shape[2] - 1) / 2, dummy, /*trainable=*/false);
            layer.conv.weight.value().data = w.data;
            layer.conv.bias.value().data = ckpt.array(name + ".bias").data;
        } else {
            throw IoError("fx weights: unknown layer kind '" + kind + "'");
        }
        fx.layers.push_back(std::move(layer));
    }
    return fx;
}

Trainer::Trainer(const RunConfig& c)
    : cfg(c),
      gen(build_generator<float>(c.gen, c.sched.seed)),
      critics(build_critics<float>(c.critic, c.sched.seed + 1)),
      fx(build_feature_extractor(c)),
      data_rng(c.sched.seed + 2),
      gp_rng(c.sched.seed + 3) {
    cfg.validate();
    auto gp = gen.parameters();
    adam_g.init(cfg.adam, gp);
    auto dp = critics.parameters();
    adam_d.init(cfg.adam, dp);
}

std::pair<Tensor4f, Tensor4f> Trainer::next_batch(const std::vector<PairedSample>& data) {
    if (data.empty()) throw InvalidInputError("trainer: empty dataset");
    const PairedSample& p = data[size_t(data_cursor % long(data.size()))];
    ++data_cursor;

    const Index d = gen.config.divisor();
    Index ch = std::min<Index>(cfg.crop.height, p.source.height);
    Index cw = std::min<Index>(cfg.crop.width, p.source.width);
    ch -= ch % d;
    cw -= cw % d;
    if (ch <= 0 || cw <= 0)
        throw InvalidInputError("trainer: image " + p.id + " too small for crop");
    PairedSample c = random_crop_pair(p, ch, cw, data_rng);
    return {to_model_range<float>(c.source), to_model_range<float>(c.target)};
}

void Trainer::abort_non_finite(const std::string& what) {
    if (!diagnostic_path.empty()) save_checkpoint(diagnostic_path, to_checkpoint());
    throw InvalidInputError("training aborted: non-finite " + what + " at stage " +
                            std::to_string(stage) + " step " + std::to_string(step) +
                            (diagnostic_path.empty() ? "" : " (diagnostic checkpoint written)"));
}

void Trainer::maybe_periodic_checkpoint() {
    if (!checkpoint_path.empty() && cfg.sched.checkpoint_every > 0 &&
        step % cfg.sched.checkpoint_every == 0)
        save_checkpoint(checkpoint_path, to_checkpoint());
}

TrainResult Trainer::train_stage1(const std::vector<PairedSample>& data, long steps) {
    stage = 1;
    if (steps < 0) {
        steps = cfg.sched.max_steps >= 0 ? cfg.sched.max_steps
                                         : long(cfg.sched.stage1_epochs) * long(data.size());
    }
    TrainResult result;
    auto params = gen.parameters();
    for (long s = 0; s < steps; ++s) {
        auto [src, tgt] = next_batch(data);
        auto out = gen.forward(make_constant(src));
        auto wl = stage1_loss(out.final, make_constant(tgt), cfg.weights);
        if (!finite(wl.report.total)) abort_non_finite("stage-1 loss");
        auto grads = backward(wl.total);
        adam_g.step(params, grads);
        ++step;
        StepRecord rec{step, wl.report.per_term};
        rec.terms["total"] = wl.report.total;
        result.gen_history.push_back(std::move(rec));
        maybe_periodic_checkpoint();
    }
    return result;
}

TrainResult Trainer::train_stage2(const std::vector<PairedSample>& data, long cycles) {
    stage = 2;
    if (cycles < 0) {
        cycles = cfg.sched.max_steps >= 0 ? cfg.sched.max_steps
                                          : long(cfg.sched.stage2_epochs) * long(data.size());
    }
    TrainResult result;
    auto gparams = gen.parameters();
    auto dparams = critics.parameters();
    const bool adversarial = cfg.weights.w_adv != 0.0;

    for (long c = 0; c < cycles; ++c) {
        for (int k = 0; k < cfg.sched.critic_steps_per_gen_step; ++k) {
            auto [src, tgt] = next_batch(data);
            Tensor4f fake;
            {
                NoGradGuard ng;
                fake = gen.forward(make_constant(src)).final.value();
            }
            auto cl = critic_loss(critics, tgt, fake, gp_rng);
            double total = cl.total.value().data[0];
            if (!finite(total)) abort_non_finite("critic loss");
            if (std::abs(double(cl.wasserstein)) > 1e6)
                result.warnings.push_back("critic score divergence at step " +
                                          std::to_string(step + 1));
            auto grads = backward(cl.total);
            adam_d.step(dparams, grads);
            StepRecord rec{step + 1,
                           {{"critic_total", total},
                            {"wasserstein", double(cl.wasserstein)},
                            {"gp", double(cl.penalty)}}};
            result.critic_history.push_back(std::move(rec));
        }

        auto [src, tgt] = next_batch(data);
        auto out = gen.forward(make_constant(src));
        Var<float> tgtv = make_constant(tgt);
        LossParts<float> parts;
        parts.l1 = l1_loss_v(out.final, tgtv);
        parts.ssim = neg_ssim_loss_v(out.final, tgtv);
        parts.vgg = perceptual_loss_v(fx, out.final, tgtv);
        WeightedLoss<float> wl;
        if (adversarial) {
            parts.adv = adversarial_gen_loss_v(critics, out.final);
            wl = hybrid_loss(cfg.weights, parts);
        } else {
            wl = hybrid_loss_no_adv(cfg.weights, parts);
        }
        if (!finite(wl.report.total)) abort_non_finite("stage-2 generator loss");
        auto grads = backward(wl.total);
        adam_g.step(gparams, grads);
        ++step;
        StepRecord rec{step, wl.report.per_term};
        rec.terms["total"] = wl.report.total;
        result.gen_history.push_back(std::move(rec));
        maybe_periodic_checkpoint();
    }
    return result;
}

Checkpoint Trainer::to_checkpoint() const {
    Checkpoint ckpt;
    for (const auto& [k, v] : cfg.to_map()) ckpt.meta["cfg." + k] = v;
    ckpt.meta["stage"] = std::to_string(stage);
    ckpt.meta["step"] = std::to_string(step);
    ckpt.meta["cursor"] = std::to_string(data_cursor);
    ckpt.meta["data_rng"] = data_rng.serialize();
    ckpt.meta["gp_rng"] = gp_rng.serialize();
    ckpt.meta["adam_g_t"] = std::to_string(adam_g.t);
    ckpt.meta["adam_d_t"] = std::to_string(adam_d.t);

    auto put = [&](const std::string& prefix, const NamedParams<float>& params) {
        for (const auto& [name, p] : params) ckpt.arrays.emplace(prefix + name, p.value());
    };
    auto put_moments = [&](const char* mpre, const char* vpre, const Adam<float>& opt,
                           const NamedParams<float>& params) {
        for (size_t i = 0; i < params.size(); ++i) {
            ckpt.arrays.emplace(mpre + params[i].first, opt.first_moments()[i]);
            ckpt.arrays.emplace(vpre + params[i].first, opt.second_moments()[i]);
        }
    };
    auto gp = gen.parameters();
    auto dp = critics.parameters();
    put(kGen, gp);
    put(kCritic, dp);
    put_moments(kOptGM, kOptGV, adam_g, gp);
    put_moments(kOptDM, kOptDV, adam_d, dp);
    return ckpt;
}

Trainer Trainer::from_checkpoint(const Checkpoint& ckpt) {
    std::map<std::string, std::string> kv;
    for (const auto& [k, v] : ckpt.meta)
        if (k.rfind("cfg.", 0) == 0) kv[k.substr(4)] = v;
    Trainer t(RunConfig::from_map(kv));

    t.stage = std::stoi(ckpt.meta_at("stage"));
    t.step = std::stol(ckpt.meta_at("step"));
    t.data_cursor = std::stol(ckpt.meta_at("cursor"));
    t.data_rng.deserialize(ckpt.meta_at("data_rng"));
    t.gp_rng.deserialize(ckpt.meta_at("gp_rng"));
    t.adam_g.t = std::stol(ckpt.meta_at("adam_g_t"));
    t.adam_d.t = std::stol(ckpt.meta_at("adam_d_t"));

    auto restore = [&](const std::string& prefix, NamedParams<float>& params) {
        for (auto& [name, p] : params) {
            const Tensor4f& src = ckpt.array(prefix + name);
            if (src.shape != p.shape())
                throw IoError("checkpoint: shape mismatch for " + prefix + name);
            p.value().data = src.data;
        }
    };
    auto restore_moments = [&](const char* mpre, const char* vpre, Adam<float>& opt,
                               const NamedParams<float>& params) {
        for (size_t i = 0; i < params.size(); ++i) {
            opt.first_moments()[i].data = ckpt.array(mpre + params[i].first).data;
            opt.second_moments()[i].data = ckpt.array(vpre + params[i].first).data;
        }
    };
    auto gp = t.gen.parameters();
    auto dp = t.critics.parameters();
    restore(kGen, gp);
    restore(kCritic, dp);
    restore_moments(kOptGM, kOptGV, t.adam_g, gp);
    restore_moments(kOptDM, kOptDV, t.adam_d, dp);
    return t;
}

}  // namespace bggan
