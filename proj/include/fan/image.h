#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fan {

// 8-bit RGB image normalized to [0,1], interleaved row-major (y, x, channel).
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> rgb;

    Image() = default;
    Image(std::size_t h, std::size_t w) : height(h), width(w), rgb(h * w * 3, 0.0f) {}

    float& at(std::size_t y, std::size_t x, std::size_t c) {
        return rgb[(y * width + x) * 3 + c];
    }
    float at(std::size_t y, std::size_t x, std::size_t c) const {
        return rgb[(y * width + x) * 3 + c];
    }
};

// Reads a .png, .ppm (P6) or .pgm (P5) file; grayscale is replicated to the
// three channels. Missing files and undecodable content raise distinct
// error classes.
Image read_image(const std::string& path);

// Writes .png or .ppm (P6) depending on the extension, quantizing to 8 bits.
void write_image(const std::string& path, const Image& image);

// Standard half-pixel-center bilinear resampling; exact copy when the size
// is unchanged.
Image resize_bilinear(const Image& src, std::size_t out_h, std::size_t out_w);

}  // namespace fan
