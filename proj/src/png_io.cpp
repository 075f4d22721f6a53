#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>

#include "a3d2/image.hpp"

namespace a3d2 {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image read_png_gray(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open image '" + path + "'");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("unreadable or corrupt image '" + path + "'");
    }

    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int channels = png_get_channels(png, info);

    std::vector<uint8_t> row(static_cast<size_t>(w) * channels);
    Image img(w, h);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        if (channels == 1) {
            std::copy(row.begin(), row.end(), img.pixels.begin() + static_cast<size_t>(y) * w);
        } else if (channels == 3) {
            for (int x = 0; x < w; ++x) {
                const int r = row[static_cast<size_t>(x) * 3];
                const int g = row[static_cast<size_t>(x) * 3 + 1];
                const int b = row[static_cast<size_t>(x) * 3 + 2];
                // ITU-R BT.601 luminance, integer rounded
                img.at(y, x) = static_cast<uint8_t>((299 * r + 587 * g + 114 * b + 500) / 1000);
            }
        } else {
            png_destroy_read_struct(&png, &info, nullptr);
            throw std::runtime_error("unsupported channel count in '" + path + "'");
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png_gray(const std::string& path, const Image& img) {
    if (img.width < 1 || img.height < 1 ||
        img.size() != static_cast<size_t>(img.width) * img.height) {
        throw std::invalid_argument("write_png_gray: malformed image");
    }
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot open '" + path + "' for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("failed writing image '" + path + "'");
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) {
        png_write_row(png, const_cast<png_bytep>(img.pixels.data() + static_cast<size_t>(y) * img.width));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image mask_to_png8(const Mask& m) {
    Image out(m.width, m.height);
    for (size_t i = 0; i < m.size(); ++i) out.pixels[i] = m.pixels[i] ? 255 : 0;
    return out;
}

Mask png8_to_mask(const Image& img) {
    Mask out(img.width, img.height);
    for (size_t i = 0; i < img.size(); ++i) out.pixels[i] = img.pixels[i] > 127 ? 1 : 0;
    return out;
}

}  // namespace a3d2
