#include "bggan/metrics.hpp"
#include "bggan/selftest.hpp"
#include "bggan/trainer.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <memory>
#include <sstream>

using namespace bggan;

namespace {

DatasetSpec make_spec(const std::string& data_dir, const std::string& split,
                      const std::string& cleaning, const CropSize& crop) {
    DatasetSpec spec;
    spec.root = data_dir;
    if (split == "train")
        spec.split = Split::train;
    else if (split == "val")
        spec.split = Split::val;
    else if (split == "test")
        spec.split = Split::test;
    else
        throw ConfigError("unknown split: " + split);
    if (!cleaning.empty()) spec.cleaning_list = read_cleaning_list(cleaning);
    spec.crop = crop;
    return spec;
}

int cmd_train(int stage, const std::string& config_path, const std::string& data_dir,
              const std::string& cleaning, const std::string& resume, const std::string& out) {
    std::unique_ptr<Trainer> trainer;
    if (!resume.empty()) {
        if (!config_path.empty())
            std::cerr << "note: --config ignored, using the snapshot from " << resume << "\n";
        trainer = std::make_unique<Trainer>(Trainer::from_checkpoint(load_checkpoint(resume)));
    } else {
        RunConfig cfg = config_path.empty() ? RunConfig{}
                                            : RunConfig::from_map(parse_config_file(config_path));
        trainer = std::make_unique<Trainer>(cfg);
    }
    trainer->checkpoint_path = out;
    trainer->diagnostic_path = out + ".diag";

    auto spec = make_spec(data_dir, "train", cleaning, trainer->cfg.crop);
    LoadReport report;
    auto pairs = load_pairs(spec, &report);
    std::cout << "loaded " << pairs.size() << " pairs (" << report.skipped.size()
              << " skipped, " << report.cleaned.size() << " cleaned)\n";
    for (const auto& s : report.skipped)
        std::cerr << "warning: skipped " << s.id << ": " << s.reason << "\n";

    TrainResult result =
        stage == 1 ? trainer->train_stage1(pairs) : trainer->train_stage2(pairs);
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
    if (!result.gen_history.empty()) {
        const auto& last = result.gen_history.back();
        std::cout << "final step " << last.step << " total " << last.terms.at("total") << "\n";
    }
    save_checkpoint(out, trainer->to_checkpoint());
    std::cout << "checkpoint written to " << out << "\n";
    return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& input, const std::string& output) {
    Trainer t = Trainer::from_checkpoint(load_checkpoint(ckpt));
    infer_file(t.gen, input, output);
    std::cout << "wrote " << output << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& split,
             const std::string& cleaning, const std::string& report_path) {
    Trainer t = Trainer::from_checkpoint(load_checkpoint(ckpt));
    auto spec = make_spec(data_dir, split, cleaning, t.cfg.crop);
    LoadReport load_report;
    auto pairs = load_pairs(spec, &load_report);
    for (const auto& s : load_report.skipped)
        std::cerr << "warning: skipped " << s.id << ": " << s.reason << "\n";

    EvalReport report = evaluate_pairs(t.gen, pairs);
    std::ostringstream snap;
    for (const auto& [k, v] : t.cfg.to_map()) snap << k << "=" << v << " ";
    report.config_snapshot = snap.str();
    if (report_path.empty())
        write_report(std::cout, report);
    else
        write_report_file(report_path, report);
    std::cout << "count " << report.count << " mean psnr "
              << (std::isinf(report.mean_psnr) ? std::string("inf")
                                               : std::to_string(report.mean_psnr))
              << " mean ssim " << report.mean_ssim << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bokeh rendering pipeline: train / infer / eval / selftest"};
    app.require_subcommand(1);

    int stage = 1;
    std::string config_path, data_dir, cleaning, resume, out_ckpt;
    auto* train = app.add_subcommand("train", "run a training stage");
    train->add_option("--stage", stage, "training stage")->check(CLI::IsMember({1, 2}));
    train->add_option("--config", config_path, "flat key=value config file");
    train->add_option("--data", data_dir, "dataset root")->required();
    train->add_option("--cleaning-list", cleaning, "ids to exclude, one per line");
    train->add_option("--resume", resume, "checkpoint to resume from");
    train->add_option("--out", out_ckpt, "output checkpoint path")->required();

    std::string ckpt, input, output;
    auto* infer = app.add_subcommand("infer", "single-image inference");
    infer->add_option("--ckpt", ckpt, "checkpoint path")->required();
    infer->add_option("--input", input, "input image (png/jpeg)")->required();
    infer->add_option("--output", output, "output image (png)")->required();

    std::string eval_data, eval_split = "test", eval_report;
    auto* eval = app.add_subcommand("eval", "PSNR/SSIM over a dataset split");
    eval->add_option("--ckpt", ckpt, "checkpoint path")->required();
    eval->add_option("--data", eval_data, "dataset root")->required();
    eval->add_option("--split", eval_split, "dataset split (train/val/test)");
    eval->add_option("--cleaning-list", cleaning, "ids to exclude");
    eval->add_option("--report", eval_report, "report output path (default stdout)");

    auto* selftest = app.add_subcommand("selftest", "run the built-in check suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage errors -> 1, --help -> 0
    }

    try {
        if (train->parsed())
            return cmd_train(stage, config_path, data_dir, cleaning, resume, out_ckpt);
        if (infer->parsed()) return cmd_infer(ckpt, input, output);
        if (eval->parsed())
            return cmd_eval(ckpt, eval_data, eval_split, cleaning, eval_report);
        if (selftest->parsed()) return run_selftest(std::cout) ? 0 : 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
