#include "bggan/metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

namespace bggan {

double psnr(const Image8& a, const Image8& b) {
    if (a.height != b.height || a.width != b.width)
        throw InvalidInputError("psnr: image size mismatch");
    double mse = 0;
    for (size_t i = 0; i < a.pixels.size(); ++i) {
        double d = double(a.pixels[i]) - double(b.pixels[i]);
        mse += d * d;
    }
    mse /= double(a.pixels.size());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim_metric(const Image8& a, const Image8& b) {
    return ssim(to_model_range<double>(a), to_model_range<double>(b));
}

Image8 infer_image(const Generator<float>& gen, const Image8& input) {
    NoGradGuard ng;
    Tensor4f x = to_model_range<float>(input);
    auto [padded, crop] = pad_reflect_to_multiple(x, std::max<Index>(8, gen.config.divisor()));
    Tensor4f out = gen.forward(make_constant(padded)).final.value();
    return from_model_range(crop_to(out, crop));
}

void infer_file(const Generator<float>& gen, const std::string& input_path,
                const std::string& output_path) {
    write_png(output_path, infer_image(gen, read_image(input_path)));
}

EvalReport evaluate_pairs(const InferFn& run, const std::vector<PairedSample>& pairs) {
    if (pairs.empty()) throw InvalidInputError("evaluate_pairs: empty dataset");
    EvalReport report;
    for (const auto& p : pairs) {
        Image8 out = run(p.source);
        report.records.push_back({p.id, psnr(out, p.target), ssim_metric(out, p.target)});
    }
    report.count = Index(report.records.size());
    for (const auto& r : report.records) {
        report.mean_psnr += r.psnr / double(report.count);
        report.mean_ssim += r.ssim / double(report.count);
    }
    return report;
}

EvalReport evaluate_pairs(const Generator<float>& gen, const std::vector<PairedSample>& pairs) {
    return evaluate_pairs([&](const Image8& img) { return infer_image(gen, img); }, pairs);
}

namespace {
std::string fmt_db(double v) {
    if (std::isinf(v)) return "inf";
    std::ostringstream os;
    os.precision(6);
    os << std::fixed << v;
    return os.str();
}
}  // namespace

void write_report(std::ostream& os, const EvalReport& report) {
    for (const auto& r : report.records)
        os << "image " << r.id << " psnr " << fmt_db(r.psnr) << " ssim " << fmt_db(r.ssim)
           << "\n";
    os << "aggregate count " << report.count << " psnr " << fmt_db(report.mean_psnr) << " ssim "
       << fmt_db(report.mean_ssim) << "\n";
    if (!report.config_snapshot.empty()) os << "config " << report.config_snapshot << "\n";
}

void write_report_file(const std::string& path, const EvalReport& report) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open report for writing: " + path);
    write_report(out, report);
}

}  // namespace bggan
