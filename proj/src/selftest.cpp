#include "bggan/selftest.hpp"

#include "bggan/gradcheck.hpp"
#include "bggan/innorm.hpp"
#include "bggan/metrics.hpp"
#include "bggan/trainer.hpp"

#include <cmath>
#include <functional>
#include <ostream>

namespace bggan {

namespace {

bool check(std::ostream& os, const std::string& name, bool ok) {
    os << (ok ? "pass" : "FAIL") << "  " << name << "\n";
    return ok;
}

bool in_equivalence() {
    Rng rng(42);
    for (int i = 0; i < 100; ++i) {
        Shape4 s{1 + rng.uniform_index(4), 1 + rng.uniform_index(8), 1 + rng.uniform_index(32),
                 1 + rng.uniform_index(32)};
        Tensor4f x = rng.uniform_tensor<float>(s, -3, 3);
        auto yd = instance_norm(x, InConfig{1e-5, InMode::direct});
        auto ya = instance_norm(x, InConfig{1e-5, InMode::avgpool});
        if ((yd.data - ya.data).abs().maxCoeff() > 1e-5f) return false;
    }
    return true;
}

bool gradient_checks() {
    Rng rng(23);
    Tensor4d gt = rng.uniform_tensor<double>({2, 3, 16, 16}, -0.9, 0.9);
    // offsets bounded away from zero keep finite differences off the L1 kinks
    Tensor4d gen0 = gt;
    for (Index i = 0; i < gen0.numel(); ++i) {
        double n = rng.normal();
        gen0.data[i] += (n >= 0 ? 1.0 : -1.0) * (0.02 + 0.1 * std::abs(n));
    }
    Var<double> gtc = make_constant(gt);
    auto fx = FeatureExtractor<double>::desk(77);

    auto ok = [&](std::function<Var<double>(const Var<double>&)> f, double step) {
        return gradcheck_max_rel_error(f, gen0, step) < 1e-3;
    };
    return ok([&](const Var<double>& v) { return l1_loss_v(v, gtc); }, 1e-4) &&
           ok([&](const Var<double>& v) { return neg_ssim_loss_v(v, gtc); }, 1e-3) &&
           ok([&](const Var<double>& v) { return perceptual_loss_v(fx, v, gtc); }, 1e-6) &&
           ok(
               [&](const Var<double>& v) {
                   LossParts<double> parts{l1_loss_v(v, gtc), neg_ssim_loss_v(v, gtc),
                                           perceptual_loss_v(fx, v, gtc), Var<double>{}};
                   return hybrid_loss_no_adv(LossWeights{}, parts).total;
               },
               1e-6);
}

bool weight_probes() {
    const double parts[4] = {0.31, -0.7, 1.9, 0.42};
    const double coeff[4] = {0.5, 0.05, 0.1, 1.0};
    auto total = [&](const double p[4]) {
        LossParts<double> lp{make_constant(Tensor4d::scalar(p[0])),
                             make_constant(Tensor4d::scalar(p[1])),
                             make_constant(Tensor4d::scalar(p[2])),
                             make_constant(Tensor4d::scalar(p[3]))};
        return hybrid_loss(LossWeights{}, lp).report.total;
    };
    const double base = total(parts);
    const double delta = 0.125;  // exactly representable
    for (int i = 0; i < 4; ++i) {
        double bumped[4] = {parts[0], parts[1], parts[2], parts[3]};
        bumped[i] += delta;
        if (std::abs(total(bumped) - base - coeff[i] * delta) > 1e-9) return false;
    }
    return true;
}

bool training_smoke() {
    RunConfig cfg;
    cfg.gen.stage1_base_channels = 4;
    cfg.gen.stage1_max_channels = 8;
    cfg.gen.stage2_base_channels = 4;
    cfg.gen.stage2_max_channels = 8;
    cfg.gen.n_resblocks = 1;
    cfg.gen.n_scales = 1;
    cfg.crop = {32, 32};
    cfg.sched.seed = 7;
    Trainer t(cfg);
    auto data = synth_pairs(4, 32, 32, 11);
    auto result = t.train_stage1(data, 50);
    if (result.gen_history.size() != 50) return false;
    for (const auto& rec : result.gen_history)
        for (const auto& [k, v] : rec.terms)
            if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace

bool run_selftest(std::ostream& os) {
    bool ok = true;
    ok &= check(os, "instance-norm equivalence (100 tensors)", in_equivalence());
    ok &= check(os, "loss gradient checks", gradient_checks());
    ok &= check(os, "hybrid loss weight probes", weight_probes());
    ok &= check(os, "50-step synthetic training smoke", training_smoke());
    os << (ok ? "selftest passed" : "selftest FAILED") << "\n";
    return ok;
}

}  // namespace bggan
