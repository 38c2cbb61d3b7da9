#pragma once

#include "bggan/data.hpp"
#include "bggan/glassnet.hpp"
#include "bggan/losses.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace bggan {

// 10*log10(255^2 / MSE) over all channels; +inf for identical images.
double psnr(const Image8& a, const Image8& b);

// Metric-path SSIM: 8-bit images through the model-range ssim() (single
// implementation shared with the loss).
double ssim_metric(const Image8& a, const Image8& b);

struct EvalRecord {
    std::string id;
    double psnr = 0;
    double ssim = 0;
};

struct EvalReport {
    std::vector<EvalRecord> records;  // sorted by id
    double mean_psnr = 0;
    double mean_ssim = 0;
    Index count = 0;
    std::string config_snapshot;
};

// pad -> forward -> crop -> 8-bit roundtrip, metrics vs the target image.
using InferFn = std::function<Image8(const Image8&)>;
EvalReport evaluate_pairs(const InferFn& run, const std::vector<PairedSample>& pairs);
EvalReport evaluate_pairs(const Generator<float>& gen, const std::vector<PairedSample>& pairs);

void write_report(std::ostream& os, const EvalReport& report);
void write_report_file(const std::string& path, const EvalReport& report);

// Single-image inference with reflect padding; output dims equal input dims.
Image8 infer_image(const Generator<float>& gen, const Image8& input);
void infer_file(const Generator<float>& gen, const std::string& input_path,
                const std::string& output_path);

}  // namespace bggan
