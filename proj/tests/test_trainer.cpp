#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bggan/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace bggan;

namespace {

RunConfig tiny_cfg() {
    RunConfig cfg;
    cfg.gen.stage1_base_channels = 4;
    cfg.gen.stage1_max_channels = 8;
    cfg.gen.stage2_base_channels = 4;
    cfg.gen.stage2_max_channels = 8;
    cfg.gen.n_resblocks = 1;
    cfg.gen.n_scales = 1;
    cfg.critic.depths = {1, 2};
    cfg.critic.base_channels = 8;
    cfg.crop = {32, 32};
    cfg.sched.seed = 7;
    cfg.sched.critic_steps_per_gen_step = 2;
    return cfg;
}

fs::path work_dir() {
    fs::path p = fs::temp_directory_path() / "bggan_test_trainer";
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

bool params_equal(const NamedParams<float>& a, const NamedParams<float>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (!(a[i].second.value().data == b[i].second.value().data).all()) return false;
    return true;
}

}  // namespace

TEST_CASE("config text roundtrip") {
    RunConfig cfg = tiny_cfg();
    RunConfig back = RunConfig::from_map(cfg.to_map());
    CHECK(back.to_map() == cfg.to_map());

    std::istringstream text("gen.n_scales = 2\ngen.stage1_max_channels = 64\n"
                            "# comment line\ngen.stage1_base_channels=16\n");
    auto kv = parse_config_text(text);
    CHECK(kv.at("gen.n_scales") == "2");
    CHECK(kv.at("gen.stage1_base_channels") == "16");

    std::istringstream bad("what is this\n");
    CHECK_THROWS_AS(parse_config_text(bad), ConfigError);
    std::map<std::string, std::string> unknown{{"gen.bogus_knob", "1"}};
    CHECK_THROWS_AS(RunConfig::from_map(unknown), ConfigError);
}

TEST_CASE("stage 1: zero steps leave weights untouched, histories sized to schedule") {
    auto data = synth_pairs(2, 32, 32, 11);
    Trainer t(tiny_cfg());
    Checkpoint before = t.to_checkpoint();
    auto result = t.train_stage1(data, 0);
    CHECK(result.gen_history.empty());
    Checkpoint after = t.to_checkpoint();
    for (const auto& [name, arr] : before.arrays)
        CHECK((after.array(name).data == arr.data).all());

    auto r10 = t.train_stage1(data, 10);
    CHECK(r10.gen_history.size() == 10);
    CHECK(r10.gen_history.front().step == 1);
    CHECK(r10.gen_history.back().step == 10);
    for (const auto& rec : r10.gen_history) {
        CHECK(rec.terms.count("l1"));
        CHECK(rec.terms.count("ssim"));
        CHECK(std::isfinite(rec.terms.at("total")));
    }
}

TEST_CASE("determinism: same seed, same data, same trajectory") {
    auto data = synth_pairs(2, 32, 32, 11);
    Trainer a(tiny_cfg()), b(tiny_cfg());
    auto ra = a.train_stage1(data, 12);
    auto rb = b.train_stage1(data, 12);
    REQUIRE(ra.gen_history.size() == rb.gen_history.size());
    for (size_t i = 0; i < ra.gen_history.size(); ++i)
        CHECK(ra.gen_history[i].terms == rb.gen_history[i].terms);

    fs::path pa = work_dir() / "det_a.ckpt", pb = work_dir() / "det_b.ckpt";
    save_checkpoint(pa.string(), a.to_checkpoint());
    save_checkpoint(pb.string(), b.to_checkpoint());
    CHECK(slurp(pa) == slurp(pb));
}

TEST_CASE("resume is bit-exact: k steps == j steps + resume + (k-j) steps") {
    auto data = synth_pairs(2, 32, 32, 11);
    Trainer full(tiny_cfg());
    full.train_stage1(data, 9);

    Trainer part(tiny_cfg());
    part.train_stage1(data, 4);
    fs::path mid = work_dir() / "mid.ckpt";
    save_checkpoint(mid.string(), part.to_checkpoint());
    Trainer resumed = Trainer::from_checkpoint(load_checkpoint(mid.string()));
    resumed.train_stage1(data, 5);

    fs::path pf = work_dir() / "full.ckpt", pr = work_dir() / "resumed.ckpt";
    save_checkpoint(pf.string(), full.to_checkpoint());
    save_checkpoint(pr.string(), resumed.to_checkpoint());
    CHECK(slurp(pf) == slurp(pr));
}

TEST_CASE("stage 2 runs finite and records the penalty term") {
    auto data = synth_pairs(2, 32, 32, 11);
    Trainer t(tiny_cfg());
    t.train_stage1(data, 5);
    auto r = t.train_stage2(data, 3);
    CHECK(r.gen_history.size() == 3);
    CHECK(r.critic_history.size() == 3 * 2);
    for (const auto& rec : r.critic_history) {
        CHECK(std::isfinite(rec.terms.at("critic_total")));
        CHECK(rec.terms.count("gp"));
        CHECK(rec.terms.at("gp") >= 0.0);
    }
    for (const auto& rec : r.gen_history) {
        CHECK(std::isfinite(rec.terms.at("total")));
        CHECK(rec.terms.count("adv"));
    }
}

TEST_CASE("parameter isolation between generator and critic updates") {
    auto data = synth_pairs(1, 32, 32, 11);
    Trainer t(tiny_cfg());

    // critic objective sees no generator parameters (fake is detached)
    auto [src, tgt] = t.next_batch(data);
    Tensor4f fake;
    {
        NoGradGuard ng;
        fake = t.gen.forward(make_constant(src)).final.value();
    }
    auto cl = critic_loss(t.critics, tgt, fake, t.gp_rng);
    auto cgrads = backward(cl.total);
    for (const auto& [name, p] : t.gen.parameters()) CHECK(!cgrads.count(p.node()));

    // generator update flows through the critics but leaves their weights alone
    auto critic_params = t.critics.parameters();
    std::vector<Tensor4f> before;
    for (const auto& [name, p] : critic_params) before.push_back(p.value());
    auto out = t.gen.forward(make_constant(src));
    LossParts<float> parts;
    Var<float> tv = make_constant(tgt);
    parts.l1 = l1_loss_v(out.final, tv);
    parts.ssim = neg_ssim_loss_v(out.final, tv);
    parts.vgg = perceptual_loss_v(t.fx, out.final, tv);
    parts.adv = adversarial_gen_loss_v(t.critics, out.final);
    auto wl = hybrid_loss(t.cfg.weights, parts);
    auto grads = backward(wl.total);
    auto gen_params = t.gen.parameters();
    t.adam_g.step(gen_params, grads);
    for (size_t i = 0; i < critic_params.size(); ++i)
        CHECK((critic_params[i].second.value().data == before[i].data).all());
}

TEST_CASE("degenerate w_adv=0 config: generator trajectory equals plain hybrid_no_adv loop") {
    RunConfig cfg = tiny_cfg();
    cfg.weights.w_adv = 0.0;
    cfg.critic.gp_lambda = 0.0;
    auto data = synth_pairs(3, 32, 32, 11);  // images exactly crop-sized: no crop rng draw

    Trainer t(cfg);
    auto result = t.train_stage2(data, 4);

    // hand loop: same generator, same optimizer, same sample order
    auto gen = build_generator<float>(cfg.gen, cfg.sched.seed);
    auto fx = build_feature_extractor(cfg);
    Adam<float> adam;
    auto params = gen.parameters();
    adam.init(cfg.adam, params);
    const int cs = cfg.sched.critic_steps_per_gen_step;
    for (int cycle = 0; cycle < 4; ++cycle) {
        long cursor = long(cycle) * (cs + 1) + cs;  // critic steps consumed these samples
        const auto& sample = data[size_t(cursor % long(data.size()))];
        Tensor4f src = to_model_range<float>(sample.source);
        Tensor4f tgt = to_model_range<float>(sample.target);
        auto out = gen.forward(make_constant(src));
        Var<float> tv = make_constant(tgt);
        LossParts<float> parts;
        parts.l1 = l1_loss_v(out.final, tv);
        parts.ssim = neg_ssim_loss_v(out.final, tv);
        parts.vgg = perceptual_loss_v(fx, out.final, tv);
        auto wl = hybrid_loss_no_adv(cfg.weights, parts);
        CHECK(wl.report.total == doctest::Approx(result.gen_history[cycle].terms.at("total"))
                                     .epsilon(1e-12));
        auto grads = backward(wl.total);
        adam.step(params, grads);
    }
    CHECK(params_equal(gen.parameters(), t.gen.parameters()));
}

TEST_CASE("non-finite loss aborts with a diagnostic checkpoint") {
    auto data = synth_pairs(1, 32, 32, 11);
    Trainer t(tiny_cfg());
    fs::path diag = work_dir() / "diag.ckpt";
    fs::remove(diag);
    t.diagnostic_path = diag.string();
    auto params = t.gen.parameters();
    params[0].second.value().data[0] = std::nanf("");
    CHECK_THROWS_AS(t.train_stage1(data, 1), InvalidInputError);
    CHECK(fs::exists(diag));
}

TEST_CASE("checkpoint roundtrip restores the trainer exactly") {
    auto data = synth_pairs(2, 32, 32, 11);
    Trainer t(tiny_cfg());
    t.train_stage1(data, 3);
    Trainer back = Trainer::from_checkpoint(t.to_checkpoint());
    CHECK(back.stage == t.stage);
    CHECK(back.step == t.step);
    CHECK(back.data_cursor == t.data_cursor);
    CHECK(back.data_rng.serialize() == t.data_rng.serialize());
    CHECK(params_equal(back.gen.parameters(), t.gen.parameters()));
    CHECK(params_equal(back.critics.parameters(), t.critics.parameters()));
    CHECK(back.adam_g.t == t.adam_g.t);
}

TEST_CASE("desk-scale overfit trend: loss drops over 300 steps") {
    auto data = synth_pairs(8, 32, 32, 13);
    RunConfig cfg = tiny_cfg();
    cfg.gen.stage1_base_channels = 8;
    cfg.gen.stage1_max_channels = 16;
    cfg.gen.stage2_base_channels = 16;
    cfg.gen.stage2_max_channels = 32;
    cfg.gen.n_resblocks = 4;
    Trainer t(cfg);
    auto r = t.train_stage1(data, 300);
    double first = r.gen_history.front().terms.at("total");
    double last = r.gen_history.back().terms.at("total");
    CHECK(last < 0.4 * first);
}

TEST_CASE("critic training decreases critic loss on a frozen generator") {
    RunConfig cfg = tiny_cfg();
    auto data = synth_pairs(1, 32, 32, 17);
    Trainer t(cfg);
    Tensor4f src = to_model_range<float>(data[0].source);
    Tensor4f tgt = to_model_range<float>(data[0].target);
    Tensor4f fake;
    {
        NoGradGuard ng;
        fake = t.gen.forward(make_constant(src)).final.value();
    }
    auto dparams = t.critics.parameters();
    Rng gp_rng(3);
    double first = 0, last = 0;
    for (int i = 0; i < 50; ++i) {
        auto cl = critic_loss(t.critics, tgt, fake, gp_rng);
        double v = cl.total.value().data[0];
        if (i == 0) first = v;
        last = v;
        auto grads = backward(cl.total);
        t.adam_d.step(dparams, grads);
    }
    CHECK(last < first);
}
