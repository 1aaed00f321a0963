// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "featsplat/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

namespace featsplat {

namespace {

struct FileCloser {
    void operator()(std::FILE *f) const {
        if (f)
            std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace

void
write_png(const Image8 &image, const std::filesystem::path &path) {
    require(image.channels == 1 || image.channels == 3, ErrorKind::InvalidParameter, "png needs 1 or 3 channels");
    require(image.width > 0 && image.height > 0 &&
                image.pixels.size() == std::size_t(image.width) * image.height * image.channels,
            ErrorKind::InvalidParameter, "png pixel buffer does not match its size");
    FilePtr file(std::fopen(path.c_str(), "wb"));
    require(bool(file), ErrorKind::Io, "cannot write " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorKind::Io, "libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorKind::Io, "failed writing " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, png_uint_32(image.width), png_uint_32(image.height), 8,
                 image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = std::size_t(image.width) * image.channels;
    for (int y = 0; y < image.height; ++y)
        png_write_row(png, const_cast<png_bytep>(image.pixels.data() + std::size_t(y) * stride));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image8
read_png(const std::filesystem::path &path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    require(bool(file), ErrorKind::Io, "cannot open " + path.string());
    png_byte sig[8];
    require(std::fread(sig, 1, 8, file.get()) == 8 && png_sig_cmp(sig, 0, 8) == 0, ErrorKind::Format,
            path.string() + " is not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorKind::Io, "libpng initialization failed");
    }
    Image8 image;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorKind::Format, "corrupt PNG " + path.string());
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int bit_depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (bit_depth == 16)
        png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE)
        png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA)
        png_set_strip_alpha(png);
    png_read_update_info(png, info);

    image.width = int(png_get_image_width(png, info));
    image.height = int(png_get_image_height(png, info));
    image.channels = int(png_get_channels(png, info));
    if (image.channels != 1 && image.channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorKind::Format, path.string() + ": unsupported PNG channel layout");
    }
    image.pixels.resize(std::size_t(image.width) * image.height * image.channels);
    const std::size_t stride = std::size_t(image.width) * image.channels;
    for (int y = 0; y < image.height; ++y)
        png_read_row(png, image.pixels.data() + std::size_t(y) * stride, nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

Image8
to_image(const FeatureMap &rgb) {
    require(rgb.dim() == 3, ErrorKind::InvalidParameter, "to_image needs a 3-channel map");
    Image8 image{rgb.width, rgb.height, 3, {}};
    image.pixels.resize(rgb.pixel_count() * 3);
    const double *p = rgb.values.data();
    for (std::size_t i = 0; i < image.pixels.size(); ++i)
        image.pixels[i] = std::uint8_t(std::lround(255.0 * std::clamp(p[i], 0.0, 1.0)));
    return image;
}

} // namespace featsplat
