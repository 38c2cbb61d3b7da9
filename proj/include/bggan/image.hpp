#pragma once

#include "bggan/tensor.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace bggan {

// Interleaved 8-bit RGB image, row-major.
struct Image8 {
    Index height = 0;
    Index width = 0;
    std::vector<unsigned char> pixels;  // height * width * 3

    Image8() = default;
    Image8(Index h, Index w, unsigned char fill = 0)
        : height(h), width(w), pixels(size_t(h) * size_t(w) * 3, fill) {
        if (h <= 0 || w <= 0) throw InvalidInputError("Image8: non-positive dimensions");
    }

    unsigned char& at(Index y, Index x, Index c) {
        return pixels[(size_t(y) * width + x) * 3 + c];
    }
    unsigned char at(Index y, Index x, Index c) const {
        return pixels[(size_t(y) * width + x) * 3 + c];
    }
};

// x/127.5 - 1 into [-1, 1]; output is (1, 3, H, W).
template <typename Scalar = float>
Tensor4<Scalar> to_model_range(const Image8& img) {
    Tensor4<Scalar> t({1, 3, img.height, img.width});
    for (Index c = 0; c < 3; ++c)
        for (Index y = 0; y < img.height; ++y)
            for (Index x = 0; x < img.width; ++x)
                t(0, c, y, x) = Scalar(img.at(y, x, c)) / Scalar(127.5) - Scalar(1);
    return t;
}

// Inverse: round to nearest, clamp to [0, 255]. Exact roundtrip for 8-bit input.
template <typename Scalar>
Image8 from_model_range(const Tensor4<Scalar>& t) {
    if (t.shape[0] != 1 || t.shape[1] != 3)
        throw InvalidInputError("from_model_range: expected (1,3,H,W), got " + shape_str(t.shape));
    Image8 img(t.shape[2], t.shape[3]);
    for (Index c = 0; c < 3; ++c)
        for (Index y = 0; y < img.height; ++y)
            for (Index x = 0; x < img.width; ++x) {
                double v = (double(t(0, c, y, x)) + 1.0) * 127.5;
                v = std::round(v);
                img.at(y, x, c) = (unsigned char)(v < 0 ? 0 : (v > 255 ? 255 : v));
            }
    return img;
}

// Implemented in image_io.cpp (libpng / libjpeg).
Image8 read_image(const std::string& path);
void write_png(const std::string& path, const Image8& img);

}  // namespace bggan
