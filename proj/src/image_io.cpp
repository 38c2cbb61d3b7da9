#include "bggan/image.hpp"

#include <png.h>

#include <cstdio>
#include <csetjmp>
#include <cstring>

extern "C" {
#include <jpeglib.h>
}

namespace bggan {

namespace {

struct FileHandle {
    std::FILE* f;
    explicit FileHandle(std::FILE* f) : f(f) {}
    ~FileHandle() {
        if (f) std::fclose(f);
    }
};

Image8 read_png_file(std::FILE* f, const std::string& path) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png: allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png: allocation failed");
    }
    std::vector<png_bytep> rows;
    Image8 img;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png: failed to decode " + path);
    }
    png_init_io(png, f);
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int depth = png_get_bit_depth(png, info);
    int color = png_get_color_type(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    img = Image8(Index(h), Index(w));
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = img.pixels.data() + size_t(y) * w * 3;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jmp;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(err->jmp, 1);
}

Image8 read_jpeg_file(std::FILE* f, const std::string& path) {
    jpeg_decompress_struct cinfo;
    JpegErrorMgr jerr;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    if (setjmp(jerr.jmp)) {
        jpeg_destroy_decompress(&cinfo);
        throw IoError("jpeg: failed to decode " + path);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);

    Image8 img(Index(cinfo.output_height), Index(cinfo.output_width));
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = img.pixels.data() + size_t(cinfo.output_scanline) * img.width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

}  // namespace

Image8 read_image(const std::string& path) {
    FileHandle fh(std::fopen(path.c_str(), "rb"));
    if (!fh.f) throw IoError("cannot open " + path);
    unsigned char magic[8] = {};
    size_t got = std::fread(magic, 1, 8, fh.f);
    std::rewind(fh.f);
    if (got >= 8 && png_sig_cmp(magic, 0, 8) == 0) return read_png_file(fh.f, path);
    if (got >= 2 && magic[0] == 0xFF && magic[1] == 0xD8) return read_jpeg_file(fh.f, path);
    throw IoError("unrecognized image format: " + path);
}

void write_png(const std::string& path, const Image8& img) {
    if (img.height <= 0 || img.width <= 0) throw InvalidInputError("write_png: empty image");
    FileHandle fh(std::fopen(path.c_str(), "wb"));
    if (!fh.f) throw IoError("cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png: allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png: allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png: failed to encode " + path);
    }
    png_init_io(png, fh.f);
    png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (Index y = 0; y < img.height; ++y)
        png_write_row(png, const_cast<png_bytep>(img.pixels.data() + size_t(y) * img.width * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace bggan
