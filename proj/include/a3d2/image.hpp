#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace a3d2 {

// 8-bit grayscale image, row-major. Binary masks reuse this type with
// pixel values restricted to {0,1}.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;

    Image() = default;
    Image(int w, int h, uint8_t fill = 0)
        : width(w), height(h), pixels(static_cast<size_t>(w) * h, fill) {}

    uint8_t& at(int y, int x) { return pixels[static_cast<size_t>(y) * width + x]; }
    uint8_t at(int y, int x) const { return pixels[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return pixels.size(); }
    bool operator==(const Image& o) const = default;
};

using Mask = Image;  // values in {0,1}

// PNG I/O. Reading collapses RGB(A) to luminance and 16-bit to 8-bit;
// writing emits 8-bit grayscale.
Image read_png_gray(const std::string& path);
void write_png_gray(const std::string& path, const Image& img);

// 0/255 on disk <-> 0/1 in memory
Image mask_to_png8(const Mask& m);
Mask png8_to_mask(const Image& img);

}  // namespace a3d2
