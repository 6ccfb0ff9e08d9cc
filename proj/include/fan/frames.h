#pragma once

#include <cstddef>
#include <string>

#include "fan/tensor.h"

namespace fan {

// Decoded segment of video: (T, H, W, 3) pixels in [0,1].
struct FrameSequence {
    std::size_t t = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    double fps = 4.0;
    Tensor<float> frames{std::vector<std::size_t>{1, 1, 1, 3}};

    float& at(std::size_t ti, std::size_t y, std::size_t x, std::size_t c) {
        return frames.at4(ti, y, x, c);
    }
    float at(std::size_t ti, std::size_t y, std::size_t x, std::size_t c) const {
        return frames.at4(ti, y, x, c);
    }
};

// Loads frame_%05d.png (or .ppm) indexed from 1, resizing every frame to
// target_h x target_w. The directory must hold exactly expected_t frames.
FrameSequence load_frame_sequence(const std::string& directory, std::size_t expected_t,
                                  std::size_t target_h, std::size_t target_w,
                                  double fps = 4.0);

// Writes the sequence into the directory using the same naming scheme.
void write_frame_sequence(const std::string& directory, const FrameSequence& seq,
                          const std::string& extension = ".png");

}  // namespace fan
