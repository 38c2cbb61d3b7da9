#pragma once

#include "bggan/image.hpp"
#include "bggan/random.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace bggan {

struct PairedSample {
    Image8 source;  // narrow aperture, sharp everywhere
    Image8 target;  // shallow depth of field
    std::string id;
};

enum class Split { train, val, test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        default: return "test";
    }
}

struct CropSize {
    Index height = 128;
    Index width = 192;
};

struct DatasetSpec {
    std::string root;
    Split split = Split::train;
    std::optional<std::set<std::string>> cleaning_list;
    CropSize crop;

    void validate() const {
        if (crop.height <= 0 || crop.width <= 0 || crop.height % 8 != 0 || crop.width % 8 != 0)
            throw ConfigError("DatasetSpec: crop dims must be positive multiples of 8");
    }
};

struct SkipRecord {
    std::string id;
    std::string reason;
};

struct LoadReport {
    Index files_seen = 0;  // distinct ids present on disk
    std::vector<SkipRecord> skipped;
    std::vector<std::string> cleaned;
};

// Deterministic id-sorted load of <root>/<split>/{source,target}; cleaning-list
// ids removed, unreadable/mismatched pairs recorded in the report.
std::vector<PairedSample> load_pairs(const DatasetSpec& spec, LoadReport* report = nullptr);

// One id per line, '#' comments, blank lines ignored.
std::set<std::string> read_cleaning_list(const std::string& path);

// Same window applied to source and target.
PairedSample random_crop_pair(const PairedSample& p, Index h, Index w, Rng& rng);

struct SynthSample {
    PairedSample pair;
    // 1 where the sharp foreground layer covers the pixel; source == target there
    std::vector<unsigned char> foreground_mask;  // height * width
};

// Desk-scale stand-in dataset: colored shapes over a textured background at a
// few depth layers; the target blurs everything behind the foreground.
std::vector<SynthSample> synth_bokeh_dataset(int n, Index height, Index width, unsigned seed);

inline std::vector<PairedSample> synth_pairs(int n, Index height, Index width, unsigned seed) {
    std::vector<PairedSample> out;
    for (auto& s : synth_bokeh_dataset(n, height, width, seed)) out.push_back(std::move(s.pair));
    return out;
}

}  // namespace bggan
