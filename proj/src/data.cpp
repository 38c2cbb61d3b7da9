#include "bggan/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

namespace fs = std::filesystem;

namespace bggan {

namespace {

bool image_ext(std::string ext) {
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::map<std::string, fs::path> scan_dir(const fs::path& dir) {
    std::map<std::string, fs::path> out;
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && image_ext(e.path().extension().string()))
            out[e.path().stem().string()] = e.path();
    return out;
}

}  // namespace

std::vector<PairedSample> load_pairs(const DatasetSpec& spec, LoadReport* report) {
    spec.validate();
    fs::path base = fs::path(spec.root) / split_name(spec.split);
    auto sources = scan_dir(base / "source");
    auto targets = scan_dir(base / "target");

    std::set<std::string> ids;
    for (auto& [id, _] : sources) ids.insert(id);
    for (auto& [id, _] : targets) ids.insert(id);

    if (spec.cleaning_list)
        for (const auto& id : *spec.cleaning_list)
            if (!ids.count(id)) throw ConfigError("cleaning list id not in dataset: " + id);

    LoadReport local;
    LoadReport& rep = report ? *report : local;
    rep.files_seen = Index(ids.size());

    std::vector<PairedSample> out;
    for (const auto& id : ids) {  // std::set iteration: already id-sorted
        if (spec.cleaning_list && spec.cleaning_list->count(id)) {
            rep.cleaned.push_back(id);
            continue;
        }
        auto s = sources.find(id), t = targets.find(id);
        if (s == sources.end()) {
            rep.skipped.push_back({id, "missing source"});
            continue;
        }
        if (t == targets.end()) {
            rep.skipped.push_back({id, "missing target"});
            continue;
        }
        PairedSample p;
        p.id = id;
        try {
            p.source = read_image(s->second.string());
            p.target = read_image(t->second.string());
        } catch (const IoError& e) {
            rep.skipped.push_back({id, e.what()});
            continue;
        }
        if (p.source.height != p.target.height || p.source.width != p.target.width) {
            rep.skipped.push_back({id, "size mismatch"});
            continue;
        }
        out.push_back(std::move(p));
    }
    if (out.empty()) throw InvalidInputError("no loadable pairs under " + base.string());
    return out;
}

std::set<std::string> read_cleaning_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open cleaning list: " + path);
    std::set<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto last = line.find_last_not_of(" \t\r");
        ids.insert(line.substr(first, last - first + 1));
    }
    return ids;
}

PairedSample random_crop_pair(const PairedSample& p, Index h, Index w, Rng& rng) {
    if (h <= 0 || w <= 0 || h > p.source.height || w > p.source.width)
        throw InvalidInputError("crop " + std::to_string(h) + "x" + std::to_string(w) +
                                " exceeds image " + std::to_string(p.source.height) + "x" +
                                std::to_string(p.source.width));
    Index oy = Index(rng.uniform_index(size_t(p.source.height - h + 1)));
    Index ox = Index(rng.uniform_index(size_t(p.source.width - w + 1)));
    PairedSample out;
    out.id = p.id;
    out.source = Image8(h, w);
    out.target = Image8(h, w);
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
            for (Index c = 0; c < 3; ++c) {
                out.source.at(y, x, c) = p.source.at(oy + y, ox + x, c);
                out.target.at(y, x, c) = p.target.at(oy + y, ox + x, c);
            }
    return out;
}

namespace {

// Planar float RGB canvas in [0, 255].
struct Canvas {
    Index h, w;
    std::vector<double> data;  // 3 * h * w
    Canvas(Index h, Index w) : h(h), w(w), data(size_t(3) * h * w, 0.0) {}
    double& at(Index c, Index y, Index x) { return data[(size_t(c) * h + y) * w + x]; }
};

void gauss_blur(std::vector<double>& plane, Index h, Index w, double sigma) {
    int r = int(std::ceil(3 * sigma));
    std::vector<double> k(2 * r + 1);
    double sum = 0;
    for (int i = -r; i <= r; ++i) sum += (k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma)));
    for (auto& v : k) v /= sum;

    std::vector<double> tmp(plane.size());
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i) {
                Index xx = std::clamp<Index>(x + i, 0, w - 1);
                acc += k[i + r] * plane[size_t(y) * w + xx];
            }
            tmp[size_t(y) * w + x] = acc;
        }
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i) {
                Index yy = std::clamp<Index>(y + i, 0, h - 1);
                acc += k[i + r] * tmp[size_t(yy) * w + x];
            }
            plane[size_t(y) * w + x] = acc;
        }
}

void gauss_blur(Canvas& c, double sigma) {
    for (Index ch = 0; ch < 3; ++ch) {
        std::vector<double> plane(c.data.begin() + size_t(ch) * c.h * c.w,
                                  c.data.begin() + size_t(ch + 1) * c.h * c.w);
        gauss_blur(plane, c.h, c.w, sigma);
        std::copy(plane.begin(), plane.end(), c.data.begin() + size_t(ch) * c.h * c.w);
    }
}

struct Shape {
    bool circle;
    Index cy, cx, ry, rx;  // circle uses ry as radius
    double color[3];

    bool covers(Index y, Index x) const {
        if (circle) {
            double dy = double(y) - cy, dx = double(x) - cx;
            return dy * dy + dx * dx <= double(ry) * ry;
        }
        return std::abs(y - cy) <= ry && std::abs(x - cx) <= rx;
    }
};

Shape random_shape(Rng& rng, Index h, Index w) {
    Shape s;
    s.circle = rng.uniform() < 0.5;
    s.cy = Index(rng.uniform_index(size_t(h)));
    s.cx = Index(rng.uniform_index(size_t(w)));
    Index mx = std::max<Index>(4, std::min(h, w) / 5);
    s.ry = 3 + Index(rng.uniform_index(size_t(mx)));
    s.rx = 3 + Index(rng.uniform_index(size_t(mx)));
    for (auto& c : s.color) c = 30.0 + 200.0 * rng.uniform();
    return s;
}

void draw(Canvas& canvas, const Shape& s, std::vector<double>* alpha) {
    for (Index y = 0; y < canvas.h; ++y)
        for (Index x = 0; x < canvas.w; ++x)
            if (s.covers(y, x)) {
                for (Index c = 0; c < 3; ++c) canvas.at(c, y, x) = s.color[c];
                if (alpha) (*alpha)[size_t(y) * canvas.w + x] = 1.0;
            }
}

unsigned char quantize(double v) {
    v = std::round(v);
    return (unsigned char)(v < 0 ? 0 : (v > 255 ? 255 : v));
}

}  // namespace

std::vector<SynthSample> synth_bokeh_dataset(int n, Index height, Index width, unsigned seed) {
    if (n <= 0) throw InvalidInputError("synth_bokeh_dataset: n must be positive");
    if (height < 16 || width < 16)
        throw InvalidInputError("synth_bokeh_dataset: size too small (min 16x16)");

    Rng rng(seed);
    std::vector<SynthSample> out;
    out.reserve(size_t(n));

    for (int i = 0; i < n; ++i) {
        // textured background: bilinear-upsampled random color grid
        const Index cell = 8;
        Index gh = (height + cell - 1) / cell + 1, gw = (width + cell - 1) / cell + 1;
        std::vector<double> grid(size_t(3) * gh * gw);
        for (auto& v : grid) v = 20.0 + 215.0 * rng.uniform();

        Canvas bg(height, width);
        for (Index c = 0; c < 3; ++c)
            for (Index y = 0; y < height; ++y)
                for (Index x = 0; x < width; ++x) {
                    double fy = double(y) / cell, fx = double(x) / cell;
                    Index y0 = Index(fy), x0 = Index(fx);
                    double ty = fy - y0, tx = fx - x0;
                    auto g = [&](Index yy, Index xx) {
                        return grid[(size_t(c) * gh + yy) * gw + xx];
                    };
                    bg.at(c, y, x) = (1 - ty) * ((1 - tx) * g(y0, x0) + tx * g(y0, x0 + 1)) +
                                     ty * ((1 - tx) * g(y0 + 1, x0) + tx * g(y0 + 1, x0 + 1));
                }

        // mid-depth shapes live on their own layer so they can blur separately
        Canvas mid(height, width);
        std::vector<double> mid_alpha(size_t(height) * width, 0.0);
        int n_mid = 1 + int(rng.uniform_index(3));
        for (int s = 0; s < n_mid; ++s) draw(mid, random_shape(rng, height, width), &mid_alpha);

        std::vector<Shape> fg_shapes;
        int n_fg = 1 + int(rng.uniform_index(2));
        for (int s = 0; s < n_fg; ++s) fg_shapes.push_back(random_shape(rng, height, width));

        // sharp composite: background, then mid, then foreground
        Canvas sharp = bg;
        for (Index c = 0; c < 3; ++c)
            for (Index y = 0; y < height; ++y)
                for (Index x = 0; x < width; ++x)
                    if (mid_alpha[size_t(y) * width + x] > 0)
                        sharp.at(c, y, x) = mid.at(c, y, x);
        std::vector<unsigned char> fg_mask(size_t(height) * width, 0);
        for (const auto& s : fg_shapes) {
            draw(sharp, s, nullptr);
            for (Index y = 0; y < height; ++y)
                for (Index x = 0; x < width; ++x)
                    if (s.covers(y, x)) fg_mask[size_t(y) * width + x] = 1;
        }

        // bokeh composite: deepest layer blurred most, foreground kept sharp
        Canvas blurred = bg;
        gauss_blur(blurred, 3.0);
        Canvas mid_blur(height, width);
        std::vector<double> alpha_blur = mid_alpha;
        // premultiplied alpha compositing of the softened mid layer
        for (Index c = 0; c < 3; ++c) {
            std::vector<double> colored(size_t(height) * width);
            for (size_t p = 0; p < colored.size(); ++p)
                colored[p] = mid.data[size_t(c) * height * width + p] * mid_alpha[p];
            gauss_blur(colored, height, width, 1.5);
            for (Index y = 0; y < height; ++y)
                for (Index x = 0; x < width; ++x)
                    mid_blur.at(c, y, x) = colored[size_t(y) * width + x];
        }
        gauss_blur(alpha_blur, height, width, 1.5);
        for (Index c = 0; c < 3; ++c)
            for (Index y = 0; y < height; ++y)
                for (Index x = 0; x < width; ++x) {
                    size_t p = size_t(y) * width + x;
                    blurred.at(c, y, x) =
                        mid_blur.at(c, y, x) + (1.0 - alpha_blur[p]) * blurred.at(c, y, x);
                }

        SynthSample sample;
        sample.pair.id = "synth_" + std::string(4 - std::to_string(i).size(), '0') +
                         std::to_string(i);
        sample.pair.source = Image8(height, width);
        sample.pair.target = Image8(height, width);
        sample.foreground_mask = fg_mask;
        for (Index y = 0; y < height; ++y)
            for (Index x = 0; x < width; ++x)
                for (Index c = 0; c < 3; ++c) {
                    unsigned char sv = quantize(sharp.at(c, y, x));
                    sample.pair.source.at(y, x, c) = sv;
                    sample.pair.target.at(y, x, c) =
                        fg_mask[size_t(y) * width + x] ? sv : quantize(blurred.at(c, y, x));
                }
        out.push_back(std::move(sample));
    }
    return out;
}

}  // namespace bggan
